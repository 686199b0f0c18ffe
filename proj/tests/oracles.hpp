// Independent oracle implementations used to validate the library. These are
// deliberately written with different algorithms / accumulation strategies
// than the production code so that agreement is meaningful.
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

namespace oracles {

// ---------------------------------------------------------------------------
// ICC(3,1) via an explicit two-way ANOVA table (long-double accumulators,
// textbook mean-square formulas with raw sums of squares).
// ---------------------------------------------------------------------------
inline double icc31_anova(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    if (n != b.size() || n < 3) throw std::invalid_argument("icc31_anova: bad input");
    const long double k = 2.0L;
    long double total = 0.0L, total_sq = 0.0L;
    long double col_a = 0.0L, col_b = 0.0L;
    long double row_sq = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        const long double x = a[i], y = b[i];
        total += x + y;
        total_sq += x * x + y * y;
        col_a += x;
        col_b += y;
        row_sq += (x + y) * (x + y);
    }
    const long double nn = static_cast<long double>(n);
    const long double cf = total * total / (k * nn);  // correction factor
    const long double ss_total = total_sq - cf;
    const long double ss_rows = row_sq / k - cf;
    const long double ss_cols = (col_a * col_a + col_b * col_b) / nn - cf;
    const long double ss_err = ss_total - ss_rows - ss_cols;
    const long double bms = ss_rows / (nn - 1.0L);
    const long double ems = ss_err / ((nn - 1.0L) * (k - 1.0L));
    return static_cast<double>((bms - ems) / (bms + (k - 1.0L) * ems));
}

// ---------------------------------------------------------------------------
// Student-t two-tail p-value by adaptive Simpson quadrature of the density.
// p = 1 - 2 * integral_0^|t| f(x) dx.
// ---------------------------------------------------------------------------
inline double t_density(double x, double df) {
    const double halfp1 = 0.5 * (df + 1.0);
    const double lognorm = std::lgamma(halfp1) - std::lgamma(0.5 * df) -
                           0.5 * std::log(df * std::acos(-1.0));
    return std::exp(lognorm - halfp1 * std::log1p(x * x / df));
}

inline double simpson(double a, double b, double df, int depth, double fa, double fm, double fb,
                      double whole) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = t_density(lm, df), frm = t_density(rm, df);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::fabs(left + right - whole) < 1e-14)
        return left + right + (left + right - whole) / 15.0;
    return simpson(a, m, df, depth - 1, fa, flm, fm, left) +
           simpson(m, b, df, depth - 1, fm, frm, fb, right);
}

inline double t_two_tail_p(double t, double df) {
    const double a = 0.0, b = std::fabs(t);
    if (b == 0.0) return 1.0;
    const double fa = t_density(a, df), fb = t_density(b, df),
                 fm = t_density(0.5 * (a + b), df);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    const double integral = simpson(a, b, df, 40, fa, fm, fb, whole);
    return 1.0 - 2.0 * integral;
}

// ---------------------------------------------------------------------------
// Adjusted Rand Index from the contingency table.
// ---------------------------------------------------------------------------
inline double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size() || a.empty()) throw std::invalid_argument("ari: bad input");
    std::map<std::pair<int, int>, long long> cont;
    std::map<int, long long> ra, rb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++cont[{a[i], b[i]}];
        ++ra[a[i]];
        ++rb[b[i]];
    }
    auto choose2 = [](long long m) { return 0.5 * static_cast<double>(m) * (m - 1); };
    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [_, v] : cont) sum_ij += choose2(v);
    for (const auto& [_, v] : ra) sum_a += choose2(v);
    for (const auto& [_, v] : rb) sum_b += choose2(v);
    const double n2 = choose2(static_cast<long long>(a.size()));
    const double expected = sum_a * sum_b / n2;
    const double maximum = 0.5 * (sum_a + sum_b);
    if (maximum == expected) return 1.0;  // all singletons / single cluster edge
    return (sum_ij - expected) / (maximum - expected);
}

// ---------------------------------------------------------------------------
// Misc small recomputations
// ---------------------------------------------------------------------------
inline double mean(std::span<const double> v) {
    long double s = 0.0L;
    for (double x : v) s += x;
    return static_cast<double>(s / static_cast<long double>(v.size()));
}

inline double sample_sd(std::span<const double> v) {
    const double m = mean(v);
    long double s = 0.0L;
    for (double x : v) s += (static_cast<long double>(x) - m) * (static_cast<long double>(x) - m);
    return static_cast<double>(
        std::sqrt(static_cast<double>(s / static_cast<long double>(v.size() - 1))));
}

// Pearson correlation (for deconvolution driver recovery checks).
inline double correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("correlation: bad input");
    const double ma = mean(a), mb = mean(b);
    long double sxy = 0.0L, sxx = 0.0L, syy = 0.0L;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const long double dx = a[i] - ma, dy = b[i] - mb;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0L || syy == 0.0L) return 0.0;
    return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

}  // namespace oracles
