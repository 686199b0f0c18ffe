// ============================================================================
// metrics.hpp - MAE/RMSE, ICC(3,1) from the two-way ANOVA decomposition,
// paired and Welch two-tail t-tests with p-values via the regularized
// incomplete beta function
// ============================================================================
#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "painpipe/common.hpp"

namespace painpipe {

// ----------------------------------------------------------------------------
// Regularized incomplete beta I_x(a, b), continued fraction (modified Lentz)
// ----------------------------------------------------------------------------

namespace detail {

inline double betacf(double a, double b, double x) {
    constexpr int max_iter = 300;
    constexpr double eps = 3e-16;
    constexpr double fpmin = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

}  // namespace detail

inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * detail::betacf(a, b, x) / a;
    return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

// Two-tail p-value of Student's t with df degrees of freedom.
inline double student_t_two_tail_p(double t, double df) {
    if (!std::isfinite(t)) return 0.0;
    if (df <= 0.0) throw Error(ErrorCode::invalid_argument, "t-test: df must be positive");
    const double x = df / (df + t * t);
    return incomplete_beta(df / 2.0, 0.5, x);
}

// ----------------------------------------------------------------------------
// Point metrics
// ----------------------------------------------------------------------------

inline std::pair<double, double> mae_rmse(std::span<const double> preds,
                                          std::span<const double> targets) {
    if (preds.size() != targets.size() || preds.empty())
        throw Error(ErrorCode::invalid_argument, "mae_rmse: inputs empty or length mismatch");
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double e = preds[i] - targets[i];
        abs_sum += std::fabs(e);
        sq_sum += e * e;
    }
    const double n = static_cast<double>(preds.size());
    return {abs_sum / n, std::sqrt(sq_sum / n)};
}

// ----------------------------------------------------------------------------
// ICC(3,1), Shrout-Fleiss case (3,1): (BMS - EMS) / (BMS + (k-1) EMS) with
// k = 2 raters {prediction, truth}. Undefined (nullopt) when the targets carry
// no between-row variance.
// ----------------------------------------------------------------------------

inline std::optional<double> icc31(std::span<const double> preds,
                                   std::span<const double> targets) {
    const std::size_t n = preds.size();
    if (n != targets.size())
        throw Error(ErrorCode::invalid_argument, "icc31: length mismatch");
    if (n < 3) throw Error(ErrorCode::invalid_argument, "icc31: needs at least 3 targets");
    constexpr double k = 2.0;

    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i) grand += preds[i] + targets[i];
    grand /= (k * static_cast<double>(n));

    double col_pred = 0.0, col_true = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        col_pred += preds[i];
        col_true += targets[i];
    }
    col_pred /= static_cast<double>(n);
    col_true /= static_cast<double>(n);

    double ss_rows = 0.0, ss_err = 0.0, ss_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double row_mean = (preds[i] + targets[i]) / k;
        ss_rows += (row_mean - grand) * (row_mean - grand);
        const double e1 = preds[i] - row_mean - col_pred + grand;
        const double e2 = targets[i] - row_mean - col_true + grand;
        ss_err += e1 * e1 + e2 * e2;
        ss_total += (preds[i] - grand) * (preds[i] - grand) +
                    (targets[i] - grand) * (targets[i] - grand);
    }
    ss_rows *= k;

    if (ss_rows <= 1e-12 * std::max(ss_total, 1e-300)) return std::nullopt;

    const double bms = ss_rows / static_cast<double>(n - 1);
    const double ems = ss_err / static_cast<double>((n - 1) * (std::size_t(k) - 1));
    return (bms - ems) / (bms + (k - 1.0) * ems);
}

// ----------------------------------------------------------------------------
// t-tests
// ----------------------------------------------------------------------------

struct TestResult {
    double t = 0.0;
    double p = 1.0;
    double df = 0.0;
};

// Paired two-tail t-test over aligned samples (here: per-window absolute
// errors of two models on identical windows).
inline TestResult paired_two_tail_ttest(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    if (n != b.size() || n < 2)
        throw Error(ErrorCode::invalid_argument, "paired t-test: needs >= 2 aligned pairs");
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    const double m = mean_of(d);
    const double sd = sample_sd(d);
    TestResult r;
    r.df = static_cast<double>(n - 1);
    if (sd == 0.0) {
        if (m == 0.0) return {0.0, 1.0, r.df};
        return {std::copysign(std::numeric_limits<double>::infinity(), m), 0.0, r.df};
    }
    r.t = m / (sd / std::sqrt(static_cast<double>(n)));
    r.p = student_t_two_tail_p(r.t, r.df);
    return r;
}

// Welch's unequal-variance two-tail t-test (used for the cluster age tables).
inline TestResult welch_two_tail_ttest(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2)
        throw Error(ErrorCode::invalid_argument, "welch t-test: each group needs >= 2 samples");
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double ma = mean_of(a), mb = mean_of(b);
    const double va = sample_sd(a) * sample_sd(a);
    const double vb = sample_sd(b) * sample_sd(b);
    const double se2 = va / na + vb / nb;
    TestResult r;
    if (se2 == 0.0) {
        if (ma == mb) return {0.0, 1.0, na + nb - 2.0};
        return {std::copysign(std::numeric_limits<double>::infinity(), ma - mb), 0.0, na + nb - 2.0};
    }
    r.t = (ma - mb) / std::sqrt(se2);
    r.df = se2 * se2 / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    r.p = student_t_two_tail_p(r.t, r.df);
    return r;
}

// ----------------------------------------------------------------------------
// Evaluation report rows
// ----------------------------------------------------------------------------

struct Significance {
    double t = 0.0;
    double p = 1.0;
    std::string vs;  // baseline name
};

struct EvalReport {
    std::string scope;  // "all" or "cluster <k>"
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> icc31;
    std::optional<double> icc31_subject_mean;  // per-subject ICC averaged, for transparency
    std::size_t n_windows = 0;
    std::optional<Significance> significance;
};

inline EvalReport evaluate_scope(const std::string& scope, std::span<const double> preds,
                                 std::span<const double> targets) {
    EvalReport r;
    r.scope = scope;
    auto [mae, rmse] = mae_rmse(preds, targets);
    r.mae = mae;
    r.rmse = rmse;
    r.icc31 = (preds.size() >= 3) ? icc31(preds, targets) : std::nullopt;
    r.n_windows = preds.size();
    return r;
}

}  // namespace painpipe
