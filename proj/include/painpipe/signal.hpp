// ============================================================================
// signal.hpp - skin-conductance decomposition (nonnegative deconvolution with
// a biexponential IRF) and ECG R-peak / inter-beat-interval features
// ============================================================================
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "painpipe/common.hpp"
#include "painpipe/linalg.hpp"

namespace painpipe {

// ----------------------------------------------------------------------------
// Impulse response function: h(t) = e^(-t/tau2) - e^(-t/tau1), h(0) = 0,
// single positive hump peaking near 1.2 s for the default taus.
// ----------------------------------------------------------------------------

struct IrfParams {
    double tau1 = 0.75;  // fast time constant, s
    double tau2 = 2.0;   // slow time constant, s
};

inline double irf_value(const IrfParams& p, double t) {
    if (t <= 0.0) return 0.0;
    return std::exp(-t / p.tau2) - std::exp(-t / p.tau1);
}

struct DeconvConfig {
    double target_fs = 32.0;          // decimation target for the NNLS grid
    double scr_amp_threshold = 0.01;  // µS, reconvolved amplitude acceptance
    double kernel_cutoff_ratio = 1e-3;  // truncate IRF below this fraction of peak
    std::size_t chunk_samples = 1024;
    std::size_t overlap_samples = 64;  // margin re-solved by the next chunk
    double tonic_percentile = 0.10;
    double anchor_step_s = 4.0;      // spacing of tonic spline knots
    double anchor_halfwin_s = 10.0;  // half-width of the percentile window
    bool refine_tonic = true;
    // NNLS candidate cutoffs relative to the strongest initial gradient.
    // Coarse passes exist only to pin amplitudes for the tonic re-estimate, so
    // they skip the low-gradient exchange steps; the final pass admits them,
    // because they are what shifts an impulse onto its exact sample once the
    // baseline is trustworthy.
    double nnls_tol_coarse = 1e-3;
    double nnls_tol_final = 1e-4;
};

struct ScrEvent {
    double onset_time = 0.0;  // s
    double amplitude = 0.0;   // µS, peak of the isolated reconvolved impulse group
};

struct ScDecomposition {
    double fs = 0.0;            // rate of the series below (decimated)
    std::vector<double> sc;     // decimated input, µS
    std::vector<double> tonic;  // µS
    std::vector<double> driver;  // µS/s, nonnegative
    std::vector<ScrEvent> scrs;
    IrfParams irf_params;
    double residual_rms = 0.0;
    double signal_rms = 0.0;

    double span_s() const { return static_cast<double>(sc.size()) / fs; }
};

// Boxcar decimation by an integer factor; trailing partial block dropped.
inline std::vector<double> decimate_boxcar(std::span<const double> x, std::size_t factor) {
    if (factor == 0) throw Error(ErrorCode::invalid_argument, "decimate: factor must be >= 1");
    const std::size_t n = x.size() / factor;
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (std::size_t i = k * factor; i < (k + 1) * factor; ++i) s += x[i];
        out[k] = s / static_cast<double>(factor);
    }
    return out;
}

namespace detail {

// Discretized IRF column (scaled by dt so driver carries µS/s) plus partial
// autocorrelation prefix sums for O(1) Gram lookups in the NNLS solver:
// pac[d][m] = sum_{i<m} hcol[i] * hcol[i+d].
struct Kernel {
    std::vector<double> hcol;
    std::vector<std::vector<double>> pac;
};

inline Kernel make_kernel(const IrfParams& irf, double fs, double cutoff_ratio,
                          std::size_t max_len) {
    const double dt = 1.0 / fs;
    Kernel ker;
    ker.hcol.push_back(0.0);
    double peak = 0.0;
    for (std::size_t i = 1; i < max_len; ++i) {
        const double v = irf_value(irf, static_cast<double>(i) * dt);
        peak = std::max(peak, v);
        if (v < cutoff_ratio * peak) break;
        ker.hcol.push_back(v * dt);
    }
    if (ker.hcol.size() < 2)
        throw Error(ErrorCode::invalid_argument, "irf kernel degenerate at this rate");
    const std::size_t L = ker.hcol.size();
    ker.pac.resize(L);
    for (std::size_t d = 0; d < L; ++d) {
        ker.pac[d].assign(L - d + 1, 0.0);
        for (std::size_t m = 1; m <= L - d; ++m)
            ker.pac[d][m] = ker.pac[d][m - 1] + ker.hcol[m - 1] * ker.hcol[m - 1 + d];
    }
    return ker;
}

// Lawson–Hanson NNLS over the banded convolution system restricted to columns
// [cs, ce) and rows [cs, re); rhs is indexed from row cs. Returns coefficients
// for the chunk's columns. tol_rel caps the candidate search relative to the
// strongest initial gradient.
inline std::vector<double> nnls_banded_chunk(const Kernel& ker, std::size_t cs, std::size_t ce,
                                             std::size_t re, std::span<const double> rhs,
                                             double tol_rel) {
    const std::size_t m = ce - cs;
    const std::size_t L = ker.hcol.size();
    const auto& h = ker.hcol;

    auto gram = [&](std::size_t j, std::size_t k) -> double {
        if (j > k) std::swap(j, k);
        const std::size_t d = k - j;
        if (d >= L || re <= k) return 0.0;
        const std::size_t mm = std::min(L - d, re - k);
        return ker.pac[d][mm];
    };
    auto col_dot = [&](std::size_t col, std::span<const double> v) -> double {
        double s = 0.0;
        const std::size_t iend = std::min(col + L, re);
        for (std::size_t i = col; i < iend; ++i) s += h[i - col] * v[i - cs];
        return s;
    };

    std::vector<double> x(m, 0.0);
    std::vector<char> passive(m, 0);
    std::vector<char> usable(m, 0);
    for (std::size_t j = 0; j < m; ++j) usable[j] = gram(cs + j, cs + j) > 1e-18 ? 1 : 0;

    std::vector<double> resid(rhs.begin(), rhs.end());
    std::vector<double> w(m);
    double w0max = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        w[j] = col_dot(cs + j, resid);
        w0max = std::max(w0max, std::fabs(w[j]));
    }
    const double tol = tol_rel * w0max;
    if (w0max == 0.0) return x;

    std::vector<std::size_t> pidx;  // absolute column indices in the passive set
    const std::size_t max_outer = 3 * m + 16;
    for (std::size_t outer = 0; outer < max_outer; ++outer) {
        std::size_t best = m;
        double bestw = tol;
        for (std::size_t j = 0; j < m; ++j)
            if (!passive[j] && usable[j] && w[j] > bestw) {
                bestw = w[j];
                best = j;
            }
        if (best == m) break;
        passive[best] = 1;
        pidx.push_back(cs + best);

        for (std::size_t inner = 0; inner <= m; ++inner) {
            const std::size_t p = pidx.size();
            Matrix g(p, p);
            std::vector<double> b(p);
            for (std::size_t a = 0; a < p; ++a) {
                b[a] = col_dot(pidx[a], rhs);
                for (std::size_t c = a; c < p; ++c) {
                    const double v = gram(pidx[a], pidx[c]);
                    g(a, c) = v;
                    g(c, a) = v;
                }
            }
            std::vector<double> z;
            try {
                z = cholesky_solve(g, b);
            } catch (const Error&) {
                double diag = 0.0;
                for (std::size_t a = 0; a < p; ++a) diag += g(a, a);
                const double ridge = 1e-10 * (diag / static_cast<double>(p)) + 1e-300;
                for (std::size_t a = 0; a < p; ++a) g(a, a) += ridge;
                z = cholesky_solve(g, b);
            }

            double zmin = 0.0;
            for (double v : z) zmin = std::min(zmin, v);
            if (zmin > -1e-12) {
                for (std::size_t a = 0; a < p; ++a) x[pidx[a] - cs] = std::max(0.0, z[a]);
                break;
            }
            // Backtrack to the boundary and drop the vanished coefficients.
            double alpha = 1.0;
            for (std::size_t a = 0; a < p; ++a)
                if (z[a] <= 0.0) {
                    const double xa = x[pidx[a] - cs];
                    if (xa - z[a] > 0.0) alpha = std::min(alpha, xa / (xa - z[a]));
                }
            for (std::size_t a = 0; a < p; ++a) {
                double& xa = x[pidx[a] - cs];
                xa += alpha * (z[a] - xa);
            }
            std::vector<std::size_t> kept;
            for (std::size_t a = 0; a < p; ++a) {
                const std::size_t lj = pidx[a] - cs;
                if (x[lj] <= 1e-14) {
                    x[lj] = 0.0;
                    passive[lj] = 0;
                } else {
                    kept.push_back(pidx[a]);
                }
            }
            pidx = std::move(kept);
            if (pidx.empty()) break;
        }

        for (std::size_t i = 0; i < resid.size(); ++i) resid[i] = rhs[i];
        for (std::size_t col : pidx) {
            const double xv = x[col - cs];
            if (xv <= 0.0) continue;
            const std::size_t iend = std::min(col + L, re);
            for (std::size_t i = col; i < iend; ++i) resid[i - cs] -= xv * h[i - col];
        }
        for (std::size_t j = 0; j < m; ++j) w[j] = usable[j] ? col_dot(cs + j, resid) : 0.0;
    }
    return x;
}

// Full-signal NNLS by sequential chunks with an overlap margin whose
// coefficients are discarded and re-solved by the following chunk. recon is
// filled with driver ∗ IRF for the accepted coefficients. The fitted rows stop
// shortly after the chunk's columns: signal that originates beyond them is not
// representable in this chunk, and letting the solver see it biases boundary
// coefficients (the next chunk starts from the committed-tail-corrected
// residual instead).
inline std::vector<double> nnls_deconvolve(const Kernel& ker, std::span<const double> y,
                                           const DeconvConfig& cfg, double tol_rel,
                                           std::vector<double>& recon) {
    const std::size_t n = y.size();
    const std::size_t L = ker.hcol.size();
    const std::size_t chunk = std::max<std::size_t>(cfg.chunk_samples, 4 * cfg.overlap_samples);
    std::vector<double> x(n, 0.0);
    recon.assign(n, 0.0);

    std::size_t cs = 0;
    std::vector<double> rhs;
    while (cs < n) {
        const std::size_t ce = std::min(cs + chunk, n);
        const std::size_t re = std::min(ce + cfg.overlap_samples, n);
        rhs.assign(re - cs, 0.0);
        for (std::size_t i = cs; i < re; ++i) rhs[i - cs] = y[i] - recon[i];
        const std::vector<double> xs = nnls_banded_chunk(ker, cs, ce, re, rhs, tol_rel);
        const std::size_t accept_end =
            (ce == n) ? ce : std::max(cs + 1, ce - cfg.overlap_samples);
        for (std::size_t j = cs; j < accept_end; ++j) {
            const double xv = xs[j - cs];
            if (xv <= 0.0) continue;
            x[j] = xv;
            const std::size_t iend = std::min(j + L, n);
            for (std::size_t i = j; i < iend; ++i) recon[i] += xv * ker.hcol[i - j];
        }
        cs = accept_end;
    }
    return x;
}

// Local consolidation sweep. The chunked solver stops its candidate search at
// a gradient floor, which can leave one impulse represented as two or three
// nearby columns whose centroid sits on the true onset: the gradient of the
// repair step is second order in the sample offset, far below any floor that
// still excludes baseline dust. Each window of recovered mass is therefore
// re-solved exactly on its own neighborhood with every other coefficient
// frozen. The subproblems are a few dozen columns, NNLS is convex, so each
// window lands on its consolidated optimum at negligible cost.
inline void polish_impulse_groups(const Kernel& ker, std::span<const double> rhs_full,
                                  const DeconvConfig& cfg, std::vector<double>& x,
                                  std::vector<double>& recon) {
    const std::size_t n = x.size();
    const std::size_t L = ker.hcol.size();
    const std::size_t merge_gap = 24;  // splits this far apart still consolidate
    const std::size_t pad = 12;        // neighborhood margin around each window
    const double hpeak = *std::max_element(ker.hcol.begin(), ker.hcol.end());
    const double mass_gate = hpeak > 0.0 ? 0.25 * cfg.scr_amp_threshold / hpeak : 0.0;

    std::vector<double> lrhs;
    std::size_t i = 0;
    while (i < n) {
        if (x[i] <= 0.0) {
            ++i;
            continue;
        }
        const std::size_t g0 = i;
        std::size_t last = i;
        double mass = x[i];
        std::size_t j = i + 1;
        while (j < n && j - last < merge_gap) {
            if (x[j] > 0.0) {
                last = j;
                mass += x[j];
            }
            ++j;
        }
        i = j;
        if (mass < mass_gate) continue;

        const std::size_t c0 = g0 > pad ? g0 - pad : 0;
        const std::size_t c1 = std::min(n, last + pad + 1);
        const std::size_t re = std::min(c1 - 1 + L, n);
        // Residual over the window's rows with its own contribution restored;
        // every other impulse, before or after, stays explained by recon.
        lrhs.assign(re - c0, 0.0);
        for (std::size_t r = c0; r < re; ++r) lrhs[r - c0] = rhs_full[r] - recon[r];
        for (std::size_t col = c0; col < c1; ++col) {
            if (x[col] <= 0.0) continue;
            const std::size_t iend = std::min(col + L, re);
            for (std::size_t r = col; r < iend; ++r) lrhs[r - c0] += x[col] * ker.hcol[r - col];
        }
        const std::vector<double> xs = nnls_banded_chunk(ker, c0, c1, re, lrhs, 1e-12);
        for (std::size_t col = c0; col < c1; ++col) {
            const double dv = xs[col - c0] - x[col];
            if (dv != 0.0) {
                const std::size_t iend = std::min(col + L, n);
                for (std::size_t r = col; r < iend; ++r) recon[r] += dv * ker.hcol[r - col];
            }
            x[col] = xs[col - c0];
        }
    }
}

// Sliding low-percentile baseline -> natural cubic spline through the anchors.
inline std::vector<double> tonic_percentile_baseline(std::span<const double> y, double fs,
                                                     const DeconvConfig& cfg) {
    const std::size_t n = y.size();
    const std::size_t step = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.anchor_step_s * fs)));
    const std::size_t half = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.anchor_halfwin_s * fs)));

    std::vector<double> ax, av;
    for (std::size_t i = 0;; i += step) {
        const std::size_t a = (i > half) ? i - half : 0;
        const std::size_t b = std::min(n, i + half + 1);
        ax.push_back(static_cast<double>(i) / fs);
        av.push_back(percentile(std::span<const double>(y.data() + a, b - a), cfg.tonic_percentile));
        if (i >= n - 1) break;
        if (i + step > n - 1) i = n - 1 - step;  // force a final anchor at the last sample
    }
    std::vector<double> tonic(n);
    if (ax.size() < 2) {
        tonic.assign(n, av.empty() ? 0.0 : av[0]);
        return tonic;
    }
    CubicSpline sp(ax, av);
    for (std::size_t i = 0; i < n; ++i) tonic[i] = sp(static_cast<double>(i) / fs);
    return tonic;
}

// Second-pass tonic: medians of (y - phasic reconstruction) over samples with
// negligible phasic activity. Grid points whose window holds no quiet samples
// get no anchor; the spline bridges those stretches so the baseline is never
// pulled up onto phasic activity. If almost nothing is quiet, fall back to the
// first-pass percentile rule on the residual.
inline std::vector<double> tonic_refined_baseline(std::span<const double> y,
                                                  std::span<const double> phasic_recon, double fs,
                                                  const DeconvConfig& cfg) {
    const std::size_t n = y.size();
    std::vector<double> resid(n);
    double recon_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        resid[i] = y[i] - phasic_recon[i];
        recon_max = std::max(recon_max, phasic_recon[i]);
    }
    const double activity_eps = std::max(1e-9, 0.01 * recon_max);

    const std::size_t step = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.anchor_step_s * fs)));
    const std::size_t half = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.anchor_halfwin_s * fs)));

    std::vector<double> ax, av, fx, fv, quiet;
    for (std::size_t i = 0;; i += step) {
        const std::size_t a = (i > half) ? i - half : 0;
        const std::size_t b = std::min(n, i + half + 1);
        quiet.clear();
        for (std::size_t j = a; j < b; ++j)
            if (phasic_recon[j] <= activity_eps) quiet.push_back(resid[j]);
        if (quiet.size() >= 5) {
            ax.push_back(static_cast<double>(i) / fs);
            av.push_back(percentile(quiet, 0.5));
        }
        fx.push_back(static_cast<double>(i) / fs);
        fv.push_back(percentile(std::span<const double>(resid.data() + a, b - a),
                                cfg.tonic_percentile));
        if (i >= n - 1) break;
        if (i + step > n - 1) i = n - 1 - step;
    }
    if (ax.size() < 2) {
        ax = std::move(fx);
        av = std::move(fv);
    }
    std::vector<double> tonic(n);
    if (ax.size() < 2) {
        tonic.assign(n, av.empty() ? 0.0 : av[0]);
        return tonic;
    }
    CubicSpline sp(ax, av);
    for (std::size_t i = 0; i < n; ++i) tonic[i] = sp(static_cast<double>(i) / fs);
    return tonic;
}

}  // namespace detail

// ----------------------------------------------------------------------------
// deconvolve_sc: decimate -> percentile tonic -> chunked NNLS -> refine tonic
// via inter-impulse residuals -> second NNLS -> SCR segmentation.
// ----------------------------------------------------------------------------

inline ScDecomposition deconvolve_sc(std::span<const double> sc, double fs,
                                     const IrfParams& irf = {}, const DeconvConfig& cfg = {}) {
    if (fs <= 0.0) throw Error(ErrorCode::invalid_argument, "deconvolve_sc: fs must be > 0");
    if (static_cast<double>(sc.size()) < 10.0 * fs)
        throw Error(ErrorCode::invalid_argument, "deconvolve_sc: need at least 10 s of samples");
    if (!all_finite(sc)) throw Error(ErrorCode::invalid_data, "deconvolve_sc: non-finite sample");

    const std::size_t factor =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fs / cfg.target_fs)));
    ScDecomposition d;
    d.sc = decimate_boxcar(sc, factor);
    d.fs = fs / static_cast<double>(factor);
    d.irf_params = irf;
    const std::size_t n = d.sc.size();

    const detail::Kernel ker = detail::make_kernel(irf, d.fs, cfg.kernel_cutoff_ratio, n);
    const std::size_t L = ker.hcol.size();

    std::vector<double> tonic = detail::tonic_percentile_baseline(d.sc, d.fs, cfg);
    std::vector<double> rhs(n), recon;
    for (std::size_t i = 0; i < n; ++i) rhs[i] = d.sc[i] - tonic[i];
    std::vector<double> driver = detail::nnls_deconvolve(ker, rhs, cfg, cfg.nnls_tol_coarse, recon);

    if (cfg.refine_tonic) {
        // Two rounds: the first refinement reads the baseline through the
        // residual tails of a fit that was itself biased by the crude
        // percentile tonic, so its anchors are still slightly off. The second
        // round starts from a far better phasic fit, which pins the anchors to
        // the true baseline; only that last solve runs at the fine tolerance
        // that admits the sample-exact placement exchanges.
        for (int round = 0; round < 2; ++round) {
            tonic = detail::tonic_refined_baseline(d.sc, recon, d.fs, cfg);
            for (std::size_t i = 0; i < n; ++i) rhs[i] = d.sc[i] - tonic[i];
            driver = detail::nnls_deconvolve(
                ker, rhs, cfg, round == 1 ? cfg.nnls_tol_final : cfg.nnls_tol_coarse, recon);
        }
    }
    detail::polish_impulse_groups(ker, rhs, cfg, driver, recon);
    d.tonic = std::move(tonic);
    d.driver = std::move(driver);

    // SCR segmentation: each maximal run of positive driver samples is one
    // impulse group; its amplitude is the peak of the group reconvolved in
    // isolation.
    std::size_t i = 0;
    while (i < n) {
        if (d.driver[i] <= 1e-12) {
            ++i;
            continue;
        }
        std::size_t g1 = i;
        while (g1 + 1 < n && d.driver[g1 + 1] > 1e-12) ++g1;
        const std::size_t iend = std::min(g1 + L, n);
        double amp = 0.0;
        for (std::size_t t = i; t < iend; ++t) {
            double v = 0.0;
            for (std::size_t j = i; j <= g1 && j <= t; ++j)
                if (t - j < L) v += d.driver[j] * ker.hcol[t - j];
            amp = std::max(amp, v);
        }
        if (amp >= cfg.scr_amp_threshold)
            d.scrs.push_back({static_cast<double>(i) / d.fs, amp});
        i = g1 + 1;
    }

    double sig_ss = 0.0, res_ss = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double r = d.sc[t] - d.tonic[t] - recon[t];
        res_ss += r * r;
        sig_ss += d.sc[t] * d.sc[t];
    }
    d.residual_rms = std::sqrt(res_ss / static_cast<double>(n));
    d.signal_rms = std::sqrt(sig_ss / static_cast<double>(n));
    return d;
}

// ----------------------------------------------------------------------------
// Window features over a decomposition: [scr_count, scr_amplitude_sum,
// driver_mean, driver_max, driver_integral, tonic_mean]. Sample statistics use
// timestamps in [t0, t0+len); the trapezoidal integral closes the interval at
// t0+len so a constant driver integrates to value × len.
// ----------------------------------------------------------------------------

inline std::array<double, 6> sc_window_features(const ScDecomposition& d, double t0,
                                                double len = 6.0) {
    const std::size_t n = d.sc.size();
    const double span = d.span_s();
    if (t0 < -1e-9 || t0 + len > span + 1e-9)
        throw Error(ErrorCode::invalid_argument, "sc_window_features: window outside span");

    const auto i_first = static_cast<std::size_t>(std::max(0.0, std::ceil(t0 * d.fs - 1e-9)));
    auto i_end = static_cast<std::size_t>(std::ceil((t0 + len) * d.fs - 1e-9));
    i_end = std::min(i_end, n);
    if (i_first >= i_end)
        throw Error(ErrorCode::invalid_argument, "sc_window_features: empty window");

    double scr_count = 0.0, scr_sum = 0.0;
    for (const ScrEvent& s : d.scrs)
        if (s.onset_time >= t0 - 1e-9 && s.onset_time < t0 + len - 1e-9) {
            scr_count += 1.0;
            scr_sum += s.amplitude;
        }

    double dsum = 0.0, dmax = 0.0, tsum = 0.0;
    for (std::size_t i = i_first; i < i_end; ++i) {
        dsum += d.driver[i];
        dmax = std::max(dmax, d.driver[i]);
        tsum += d.tonic[i];
    }
    const double m = static_cast<double>(i_end - i_first);

    const std::size_t i_last = std::min(i_end, n - 1);  // closing sample, clamped at the tail
    double integral = 0.0;
    for (std::size_t i = i_first; i < i_last; ++i)
        integral += 0.5 * (d.driver[i] + d.driver[i + 1]) / d.fs;

    return {scr_count, scr_sum, dsum / m, dmax, integral, tsum / m};
}

// ----------------------------------------------------------------------------
// R-peak detection (Engelse–Zeelenberg style): moving-average high-pass,
// central difference, squaring, smoothing, adaptive segment-median threshold,
// refractory period, peak refinement on the high-passed signal.
// ----------------------------------------------------------------------------

struct IbiSeries {
    std::vector<double> r_peak_times;  // s, strictly increasing
    std::vector<double> ibis;          // ms, successive differences
};

struct RPeakConfig {
    double hp_window_s = 0.6;
    double diff_halfspan_s = 0.004;
    double smooth_window_s = 0.04;
    double segment_s = 4.0;
    double threshold_frac = 0.25;
    int median_segments = 5;  // rolling window (in segments) for the median of maxima
    double refractory_s = 0.2;
    double refine_halfwin_s = 0.05;
};

namespace detail {

inline std::vector<double> centered_moving_average(std::span<const double> x, std::size_t hw) {
    const std::size_t n = x.size();
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t a = (i > hw) ? i - hw : 0;
        const std::size_t b = std::min(n, i + hw + 1);
        out[i] = (prefix[b] - prefix[a]) / static_cast<double>(b - a);
    }
    return out;
}

}  // namespace detail

inline IbiSeries detect_r_peaks(std::span<const double> ecg, double fs,
                                const RPeakConfig& cfg = {}) {
    if (fs < 100.0) throw Error(ErrorCode::invalid_argument, "detect_r_peaks: fs must be >= 100 Hz");
    if (static_cast<double>(ecg.size()) < 2.0 * fs)
        throw Error(ErrorCode::invalid_argument, "detect_r_peaks: need at least 2 s of signal");
    if (!all_finite(ecg)) throw Error(ErrorCode::invalid_data, "detect_r_peaks: non-finite sample");

    const std::size_t n = ecg.size();
    IbiSeries out;
    const auto [mn, mx] = std::minmax_element(ecg.begin(), ecg.end());
    if (*mn == *mx) return out;  // zero variance: no peaks, by contract

    // High-pass by subtracting a centered moving average.
    const auto hw_hp = static_cast<std::size_t>(std::lround(0.5 * cfg.hp_window_s * fs));
    const std::vector<double> base = detail::centered_moving_average(ecg, std::max<std::size_t>(1, hw_hp));
    std::vector<double> hp(n);
    for (std::size_t i = 0; i < n; ++i) hp[i] = ecg[i] - base[i];

    // Central difference, squared, smoothed.
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.diff_halfspan_s * fs)));
    std::vector<double> feat(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t a = (i > k) ? i - k : 0;
        const std::size_t b = std::min(n - 1, i + k);
        const double dv = (hp[b] - hp[a]) * fs / static_cast<double>(b - a);
        feat[i] = dv * dv;
    }
    const auto hw_sm = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.5 * cfg.smooth_window_s * fs)));
    feat = detail::centered_moving_average(feat, hw_sm);

    // Adaptive threshold: per 4-s segment, a fraction of the rolling median of
    // segment maxima. Relative thresholds keep detection scale-invariant.
    const auto seg_len = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.segment_s * fs)));
    const std::size_t nseg = (n + seg_len - 1) / seg_len;
    std::vector<double> segmax(nseg, 0.0);
    for (std::size_t s = 0; s < nseg; ++s) {
        const std::size_t a = s * seg_len, b = std::min(n, (s + 1) * seg_len);
        double mxv = 0.0;
        for (std::size_t i = a; i < b; ++i) mxv = std::max(mxv, feat[i]);
        segmax[s] = mxv;
    }
    const std::size_t mhw = static_cast<std::size_t>(std::max(0, (cfg.median_segments - 1) / 2));
    std::vector<double> thr(nseg);
    std::vector<double> windowv;
    for (std::size_t s = 0; s < nseg; ++s) {
        const std::size_t a = (s > mhw) ? s - mhw : 0;
        const std::size_t b = std::min(nseg, s + mhw + 1);
        windowv.assign(segmax.begin() + static_cast<std::ptrdiff_t>(a),
                       segmax.begin() + static_cast<std::ptrdiff_t>(b));
        std::sort(windowv.begin(), windowv.end());
        const std::size_t m = windowv.size();
        const double med = (m % 2 == 1) ? windowv[m / 2]
                                        : 0.5 * (windowv[m / 2 - 1] + windowv[m / 2]);
        thr[s] = cfg.threshold_frac * med;
    }

    // Above-threshold regions -> candidate at the feature argmax.
    std::vector<std::size_t> cands;
    std::size_t i = 0;
    while (i < n) {
        if (thr[i / seg_len] <= 0.0 || feat[i] <= thr[i / seg_len]) {
            ++i;
            continue;
        }
        std::size_t best = i;
        while (i < n && feat[i] > thr[i / seg_len]) {
            if (feat[i] > feat[best]) best = i;
            ++i;
        }
        cands.push_back(best);
    }

    // Refractory period, keeping the stronger of two close candidates.
    const double refr = cfg.refractory_s * fs;
    std::vector<std::size_t> kept;
    for (std::size_t c : cands) {
        if (!kept.empty() && static_cast<double>(c - kept.back()) < refr) {
            if (feat[c] > feat[kept.back()]) kept.back() = c;
        } else {
            kept.push_back(c);
        }
    }

    // Refine each peak to the |high-passed| maximum nearby, then re-apply the
    // refractory rule on the refined positions.
    const auto rh = static_cast<std::size_t>(std::lround(cfg.refine_halfwin_s * fs));
    std::vector<std::size_t> peaks;
    for (std::size_t c : kept) {
        const std::size_t a = (c > rh) ? c - rh : 0;
        const std::size_t b = std::min(n, c + rh + 1);
        std::size_t best = c;
        for (std::size_t j = a; j < b; ++j)
            if (std::fabs(hp[j]) > std::fabs(hp[best])) best = j;
        if (!peaks.empty() && static_cast<double>(best) - static_cast<double>(peaks.back()) < refr) {
            if (std::fabs(hp[best]) > std::fabs(hp[peaks.back()])) peaks.back() = best;
        } else {
            peaks.push_back(best);
        }
    }

    out.r_peak_times.reserve(peaks.size());
    for (std::size_t p : peaks) out.r_peak_times.push_back(static_cast<double>(p) / fs);
    for (std::size_t j = 1; j < out.r_peak_times.size(); ++j)
        out.ibis.push_back((out.r_peak_times[j] - out.r_peak_times[j - 1]) * 1000.0);
    return out;
}

// ----------------------------------------------------------------------------
// IBI window features: [mean ms, RMSSD ms, SD ms, slope ms/beat] over the IBIs
// whose defining second R-peak lies in [t0, t1). Fewer than 2 IBIs -> nullopt
// (missing-data marker; the window is dropped downstream).
// ----------------------------------------------------------------------------

inline std::optional<std::array<double, 4>> ibi_window_features(const IbiSeries& s, double t0,
                                                                double t1) {
    std::vector<double> sel;
    for (std::size_t k = 0; k + 1 < s.r_peak_times.size(); ++k)
        if (s.r_peak_times[k + 1] >= t0 && s.r_peak_times[k + 1] < t1) sel.push_back(s.ibis[k]);
    if (sel.size() < 2) return std::nullopt;

    const double m = mean_of(sel);
    double ssd = 0.0;
    for (std::size_t j = 1; j < sel.size(); ++j) {
        const double dd = sel[j] - sel[j - 1];
        ssd += dd * dd;
    }
    const double rmssd = std::sqrt(ssd / static_cast<double>(sel.size() - 1));
    const double sd = sample_sd(sel);

    const double nn = static_cast<double>(sel.size());
    const double xbar = (nn - 1.0) / 2.0;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t j = 0; j < sel.size(); ++j) {
        const double dx = static_cast<double>(j) - xbar;
        sxy += dx * (sel[j] - m);
        sxx += dx * dx;
    }
    const double slope = (sxx > 0.0) ? sxy / sxx : 0.0;
    return std::array<double, 4>{m, rmssd, sd, slope};
}

}  // namespace painpipe
