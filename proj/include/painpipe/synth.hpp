// ============================================================================
// synth.hpp - synthetic cohort generator with planted subject profiles.
// Profiles differ in the SHAPE of the response-vs-level curve (power law
// exponent); independent per-subject gains scale each response pathway so
// that level-normalized descriptors depend on the profile shape only.
// ============================================================================
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "painpipe/common.hpp"
#include "painpipe/dataset.hpp"
#include "painpipe/face.hpp"
#include "painpipe/signal.hpp"

namespace painpipe {

struct ProfileSpec {
    std::string name;
    std::array<double, 4> response{};  // relative response magnitude per level, max 1
    double age_mean = 40.0;
    double age_sd = 7.0;
};

inline std::vector<ProfileSpec> default_profiles(std::size_t n) {
    if (n == 0) throw Error(ErrorCode::invalid_argument, "profiles: need n >= 1");
    // Power-law family response(level) = (level/4)^gamma: linear, saturating,
    // threshold-like, then further distinct exponents.
    static const double gammas[] = {1.0, 0.35, 2.6, 0.6, 1.8, 0.18, 4.0, 1.4};
    static const double age_means[] = {45.0, 37.0, 40.0, 50.0, 33.0, 42.0, 55.0, 29.0};
    std::vector<ProfileSpec> out;
    for (std::size_t i = 0; i < n; ++i) {
        ProfileSpec p;
        const double g = (i < std::size(gammas)) ? gammas[i] : 0.25 * std::pow(1.45, static_cast<double>(i));
        p.name = "P" + std::to_string(i);
        for (int l = 1; l <= 4; ++l)
            p.response[static_cast<std::size_t>(l - 1)] = std::pow(static_cast<double>(l) / 4.0, g);
        p.age_mean = (i < std::size(age_means)) ? age_means[i] : 40.0;
        out.push_back(std::move(p));
    }
    return out;
}

struct SynthConfig {
    std::size_t n_subjects = 12;
    std::size_t n_profiles = 3;
    double noise = 1.0;  // scales every stochastic deviation from the planted structure
    std::uint64_t seed = 1;
    double fs_bio = 512.0;
    double video_fps = 25.0;
    std::size_t stimuli_per_level = 20;
    double stim_duration_s = 4.0;
    double recovery_min_s = 8.0;
    double recovery_max_s = 12.0;
    double lead_in_s = 10.0;
    double lead_out_s = 10.0;
    double base_scr_amp = 1.0;  // µS at full response before the subject gain
    std::vector<ProfileSpec> profiles;  // empty -> default_profiles(n_profiles)
};

struct SyntheticCohort {
    std::vector<Recording> recordings;
    std::vector<std::size_t> planted_profile;  // per subject
};

namespace detail {

// Hand-built canonical 68-landmark face. Reference points land exactly on the
// canonical registration targets: eye centers (±50, 0), landmark 33 (0, 45),
// mouth centroid (0, 90).
inline const std::array<Point, kNumLandmarks>& base_face() {
    static const std::array<Point, kNumLandmarks> face = [] {
        std::array<Point, kNumLandmarks> f{};
        constexpr double pi = 3.14159265358979323846;
        for (std::size_t i = 0; i <= 16; ++i) {  // jaw contour
            const double a = pi * static_cast<double>(i) / 16.0;
            f[i] = {-85.0 * std::cos(a), 10.0 + 100.0 * std::sin(a)};
        }
        const double lbrow_x[5] = {-65, -55, -45, -35, -27};
        const double brow_y[5] = {-32, -36, -38, -36, -32};
        for (std::size_t k = 0; k < 5; ++k) f[17 + k] = {lbrow_x[k], brow_y[k]};
        for (std::size_t k = 0; k < 5; ++k) f[22 + k] = {-lbrow_x[4 - k], brow_y[4 - k]};
        for (std::size_t k = 0; k < 4; ++k)  // nose bridge
            f[27 + k] = {0.0, -25.0 + 50.0 * static_cast<double>(k) / 3.0};
        f[31] = {-14, 42};
        f[32] = {-7, 44};
        f[33] = {0, 45};
        f[34] = {7, 44};
        f[35] = {14, 42};
        const double lex[6] = {-62, -55, -45, -38, -45, -55};
        const double ley[6] = {0, -5, -5, 0, 5, 5};
        for (std::size_t k = 0; k < 6; ++k) f[36 + k] = {lex[k], ley[k]};
        for (std::size_t k = 0; k < 6; ++k) f[42 + k] = {-lex[(9 - k) % 6], ley[(9 - k) % 6]};
        for (std::size_t k = 0; k < 12; ++k) {  // outer lips, centroid (0, 90)
            const double a = 2.0 * pi * static_cast<double>(k) / 12.0;
            f[48 + k] = {25.0 * std::cos(a), 90.0 + 10.0 * std::sin(a)};
        }
        for (std::size_t k = 0; k < 8; ++k) {  // inner lips
            const double a = 2.0 * pi * static_cast<double>(k) / 8.0;
            f[60 + k] = {15.0 * std::cos(a), 90.0 + 5.0 * std::sin(a)};
        }
        return f;
    }();
    return face;
}

// Displacement of each landmark at full pain expression (brow lowering, orbit
// tightening, nose wrinkle, mouth opening, jaw drop).
inline const std::array<Point, kNumLandmarks>& expression_delta() {
    static const std::array<Point, kNumLandmarks> delta = [] {
        std::array<Point, kNumLandmarks> d{};
        const auto& base = base_face();
        for (std::size_t i = 17; i <= 26; ++i)  // brows: down and inward
            d[i] = {base[i].x < 0 ? 3.0 : -3.0, 6.0};
        for (std::size_t i = 36; i <= 47; ++i) {  // lids: squint toward eye axis
            if (base[i].y < 0) d[i] = {0.0, 2.5};
            else if (base[i].y > 0) d[i] = {0.0, -2.5};
        }
        for (std::size_t i = 31; i <= 35; ++i) d[i] = {0.0, -2.0};  // nose wrinkle
        for (std::size_t i = 48; i <= 59; ++i)  // outer lips: stretch + open
            d[i] = {0.15 * base[i].x, 0.8 * (base[i].y - 90.0)};
        for (std::size_t i = 60; i <= 67; ++i)  // inner lips: open
            d[i] = {0.0, 1.2 * (base[i].y - 90.0)};
        const double jaw[7] = {3, 4, 5, 5, 5, 4, 3};  // jaw drop, landmarks 5..11
        for (std::size_t k = 0; k < 7; ++k) d[5 + k].y += jaw[k];
        return d;
    }();
    return delta;
}

// Piecewise-linear activation profile shared by slow autonomic responses:
// 0 before t_on, ramp to 1 over [t_on, t_peak], hold to t_hold, decay to 0 by
// t_off.
inline double ramp_response(double t, double t_on, double t_peak, double t_hold, double t_off) {
    if (t <= t_on || t >= t_off) return 0.0;
    if (t < t_peak) return (t - t_on) / (t_peak - t_on);
    if (t <= t_hold) return 1.0;
    return (t_off - t) / (t_off - t_hold);
}

}  // namespace detail

// Generates one subject deterministically from the master seed; the cohort
// generator below just loops this, so callers can stream subjects without
// holding the whole cohort in memory.
inline Recording generate_subject(const SynthConfig& cfg, std::size_t subject_idx,
                                  std::size_t& profile_out) {
    if (cfg.n_profiles == 0)
        throw Error(ErrorCode::invalid_argument, "synth: n_profiles must be >= 1");
    const std::vector<ProfileSpec> profiles =
        cfg.profiles.empty() ? default_profiles(cfg.n_profiles) : cfg.profiles;
    if (profiles.size() != cfg.n_profiles)
        throw Error(ErrorCode::invalid_argument, "synth: profiles list size != n_profiles");
    for (std::size_t a = 0; a < profiles.size(); ++a)
        for (std::size_t b = a + 1; b < profiles.size(); ++b) {
            double diff = 0.0;
            for (std::size_t l = 0; l < 4; ++l)
                diff = std::max(diff, std::fabs(profiles[a].response[l] - profiles[b].response[l]));
            if (diff < 1e-9)
                throw Error(ErrorCode::invalid_argument,
                            "synth: profile responses must be distinct across profiles");
        }

    const std::size_t pidx = subject_idx % cfg.n_profiles;
    profile_out = pidx;
    const ProfileSpec& prof = profiles[pidx];
    SplitMix rng(derive_seed(cfg.seed, "subject", subject_idx));
    const double noise = cfg.noise;

    Recording rec;
    {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "s%03zu", subject_idx);
        rec.subject_id = buf;
    }
    rec.age = std::clamp(rng.normal(prof.age_mean, prof.age_sd), 20.0, 64.0);
    rec.gender = bounded_rand(rng, 2) == 0 ? Gender::male : Gender::female;
    rec.fs_bio = cfg.fs_bio;
    // Independent reactivity scale per response pathway. Each cancels in the
    // level-normalized descriptors, and because no pathway carries an additive
    // reference term, no combination of channels recovers the absolute
    // response magnitude: decoding stimulus level from features requires
    // inverting the planted profile curve, which is what makes per-profile
    // heads genuinely better than one pooled regressor. The spread is kept
    // moderate: wide enough that absolute calibration is impossible, narrow
    // enough that the level spacing of the flattest profile stays decodable
    // once the profile is known.
    const double gain_sc = rng.uniform(0.85, 1.15);
    const double gain_ecg = rng.uniform(0.85, 1.15);
    const double gain_face = rng.uniform(0.85, 1.15);

    // ---- stimulus schedule: shuffled levels, 4 s + U(recovery) spacing ----
    std::vector<int> levels;
    for (int l = 1; l <= 4; ++l)
        for (std::size_t k = 0; k < cfg.stimuli_per_level; ++k) levels.push_back(l);
    shuffle_deterministic(levels, rng);
    double t = cfg.lead_in_s;
    for (int l : levels) {
        rec.stimuli.push_back({t, l});
        t += cfg.stim_duration_s + rng.uniform(cfg.recovery_min_s, cfg.recovery_max_s);
    }
    const double duration = t + cfg.lead_out_s;
    const auto n_bio = static_cast<std::size_t>(std::llround(duration * cfg.fs_bio));

    auto resp_of = [&](int level) { return prof.response[static_cast<std::size_t>(level - 1)]; };

    // ---- skin conductance ----
    // Baseline spread is kept narrower than the within-session drift so that a
    // subject's tonic level is not a stable signature of who they are: the
    // regressor has to work from the stimulus-locked phasic response, not from
    // a memorized per-subject calibration.
    const double base_tonic = rng.uniform(1.8, 2.2);
    const double drift_amp = rng.uniform(0.10, 0.25);
    const double drift_period = rng.uniform(250.0, 450.0);
    const double drift_phase = rng.uniform(0.0, 6.2831853);
    const double drift_slope = rng.uniform(-1.0, 1.0) * 1e-4;

    struct ScEvent {
        double t, amp;
    };
    std::vector<ScEvent> events;
    for (const Stimulus& s : rec.stimuli) {
        const double lat = rng.uniform(1.5, 3.0);
        double sev = 1.0 + ((noise > 0.0) ? noise * rng.normal(0.0, 0.08) : 0.0);
        sev = std::max(0.25, sev);
        events.push_back({s.onset_s + lat, gain_sc * cfg.base_scr_amp * resp_of(s.level) * sev});
    }
    if (noise > 0.0) {  // spontaneous (non-stimulus) SCRs, seated-at-rest rate
        const double rate = 0.25 / 60.0 * noise;
        double ts = 0.0;
        for (;;) {
            double u = rng.uniform();
            while (u <= 0.0) u = rng.uniform();
            ts += -std::log(u) / rate;
            if (ts >= duration) break;
            events.push_back({ts, rng.uniform(0.02, 0.12)});
        }
    }

    IrfParams irf;
    double irf_peak = 0.0;
    for (double tt = 0.0; tt <= 5.0; tt += 0.005)
        irf_peak = std::max(irf_peak, irf_value(irf, tt));
    const double irf_support = 18.0;  // s, beyond this the kernel is negligible

    rec.sc.assign(n_bio, 0.0);
    for (std::size_t i = 0; i < n_bio; ++i) {
        const double ti = static_cast<double>(i) / cfg.fs_bio;
        rec.sc[i] = base_tonic + noise * drift_amp * std::sin(6.2831853 * ti / drift_period + drift_phase) +
                    noise * drift_slope * ti;
    }
    for (const ScEvent& e : events) {
        const auto i0 = static_cast<std::size_t>(std::max(0.0, std::ceil(e.t * cfg.fs_bio)));
        const auto i1 = std::min(n_bio, static_cast<std::size_t>(std::ceil((e.t + irf_support) * cfg.fs_bio)));
        for (std::size_t i = i0; i < i1; ++i)
            rec.sc[i] += e.amp * irf_value(irf, static_cast<double>(i) / cfg.fs_bio - e.t) / irf_peak;
    }
    if (noise > 0.0)
        for (double& v : rec.sc) v += noise * rng.normal(0.0, 0.004);

    // ---- ECG: Gaussian-bump beats whose IBIs lengthen under stimulation ----
    // Resting heart rate sits in a deliberately tight band and wanders slowly
    // over the session, so the session-mean IBI of one era says little about
    // another era of the same subject.
    const double base_ibi = 60.0 / rng.uniform(66.0, 74.0);
    const double ecg_scale = rng.uniform(0.85, 1.2);
    const double hr_drift_period = rng.uniform(400.0, 700.0);
    const double hr_drift_phase = rng.uniform(0.0, 6.2831853);
    auto ibi_factor = [&](double tt) {
        double f = 1.0 + noise * 0.04 *
                             std::sin(6.2831853 * tt / hr_drift_period + hr_drift_phase);
        for (const Stimulus& s : rec.stimuli) {
            const double rel = tt - s.onset_s;
            if (rel <= 0.3 || rel >= 10.0) continue;
            const double depth = gain_ecg * 0.17 * resp_of(s.level);
            f += depth * detail::ramp_response(rel, 0.3, 2.5, 7.0, 10.0);
        }
        return f;
    };
    std::vector<double> beat_times;
    {
        double tb = rng.uniform(0.0, base_ibi);
        while (tb < duration) {
            beat_times.push_back(tb);
            double ib = base_ibi * ibi_factor(tb);
            if (noise > 0.0) ib *= std::max(0.5, 1.0 + noise * rng.normal(0.0, 0.012));
            tb += ib;
        }
    }
    rec.ecg.assign(n_bio, 0.0);
    struct Bump {
        double dt, amp, sigma;
    };
    static const Bump bumps[] = {{-0.18, 0.20, 0.020}, {-0.025, -0.15, 0.008},
                                 {0.0, 1.50, 0.011},   {0.025, -0.25, 0.008},
                                 {0.25, 0.35, 0.040}};
    for (double bt : beat_times)
        for (const Bump& b : bumps) {
            const double center = bt + b.dt;
            const auto i0 = static_cast<std::size_t>(
                std::max(0.0, std::floor((center - 5.0 * b.sigma) * cfg.fs_bio)));
            const auto i1 = std::min(
                n_bio, static_cast<std::size_t>(std::ceil((center + 5.0 * b.sigma) * cfg.fs_bio)));
            for (std::size_t i = i0; i < i1; ++i) {
                const double dd = static_cast<double>(i) / cfg.fs_bio - center;
                rec.ecg[i] += ecg_scale * b.amp * std::exp(-0.5 * dd * dd / (b.sigma * b.sigma));
            }
        }
    if (noise > 0.0)
        for (double& v : rec.ecg) v += noise * rng.normal(0.0, 0.012);

    // ---- face frames ----
    // All subjects share the template geometry: what varies per subject is the
    // camera view, the head motion, and the expressiveness gain. A per-subject
    // neutral-shape offset would survive similarity registration and hand the
    // regressor a high-dimensional identity code, which is exactly the shortcut
    // the estimation task is meant to exclude.
    const auto& base = detail::base_face();
    const auto& delta = detail::expression_delta();
    const double view_rot = rng.uniform(-0.09, 0.09);  // rad
    const double view_scale = rng.uniform(0.92, 1.12);
    const double view_tx = rng.uniform(-15.0, 15.0), view_ty = rng.uniform(-15.0, 15.0);
    const double headT[3] = {rng.uniform(14.0, 24.0), rng.uniform(17.0, 29.0), rng.uniform(11.0, 21.0)};
    const double headA[3] = {rng.uniform(3.0, 9.0), rng.uniform(3.0, 9.0), rng.uniform(0.015, 0.035)};
    const double headP[3] = {rng.uniform(0.0, 6.28), rng.uniform(0.0, 6.28), rng.uniform(0.0, 6.28)};
    // Restlessness waxes and wanes over the session, so motion statistics are
    // a property of the moment, not of the subject.
    const double headModT[3] = {rng.uniform(250.0, 450.0), rng.uniform(250.0, 450.0),
                                rng.uniform(250.0, 450.0)};
    const double headModP[3] = {rng.uniform(0.0, 6.28), rng.uniform(0.0, 6.28),
                                rng.uniform(0.0, 6.28)};
    const double gazeT = rng.uniform(8.0, 15.0), gazeP = rng.uniform(0.0, 6.28);

    std::vector<double> face_sev(rec.stimuli.size());
    for (std::size_t s = 0; s < face_sev.size(); ++s) {
        double sev = 1.0 + ((noise > 0.0) ? noise * rng.normal(0.0, 0.06) : 0.0);
        face_sev[s] = std::max(0.25, sev);
    }
    // The expression tracks stimulus presence closely: it relaxes almost
    // immediately at offset, unlike the autonomic channels whose responses
    // outlast the stimulus by design.
    const double expr_off = cfg.stim_duration_s + 0.2;
    auto expression_at = [&](double tt) {
        double e = 0.0;
        for (std::size_t s = 0; s < rec.stimuli.size(); ++s) {
            const double rel = tt - rec.stimuli[s].onset_s;
            if (rel <= 0.3 || rel >= expr_off) continue;
            e += gain_face * resp_of(rec.stimuli[s].level) * face_sev[s] *
                 detail::ramp_response(rel, 0.3, 1.2, cfg.stim_duration_s, expr_off);
        }
        return std::min(e, 1.5);
    };

    double next_blink = rng.uniform(2.0, 6.0);
    const auto n_frames = static_cast<std::size_t>(std::floor(duration * cfg.video_fps));
    rec.face_frames.reserve(n_frames);
    // AU order: 01 02 04 05 06 07 09 10 12 14 15 17 20 23 25 26 45
    static const std::pair<std::size_t, double> pain_aus[] = {{2, 0.95}, {4, 0.70}, {5, 0.85},
                                                             {6, 0.60}, {7, 0.50}, {14, 0.45},
                                                             {15, 0.40}};
    for (std::size_t fi = 0; fi < n_frames; ++fi) {
        const double tf = static_cast<double>(fi) / cfg.video_fps;
        FaceFrame fr;
        fr.frame_index = static_cast<int>(fi);
        fr.timestamp = tf;
        fr.success = !(noise > 0.0 && rng.uniform() < 0.008 * noise);

        const double e = expression_at(tf);
        auto head_amp = [&](int ax) {
            return headA[ax] *
                   (1.0 + 0.45 * std::sin(6.2831853 * tf / headModT[ax] + headModP[ax]));
        };
        const double htx = head_amp(0) * std::sin(6.2831853 * tf / headT[0] + headP[0]);
        const double hty = head_amp(1) * std::sin(6.2831853 * tf / headT[1] + headP[1]);
        const double hrz = head_amp(2) * std::sin(6.2831853 * tf / headT[2] + headP[2]);
        const double cr = std::cos(hrz + view_rot), sr = std::sin(hrz + view_rot);
        for (std::size_t i = 0; i < kNumLandmarks; ++i) {
            double x = base[i].x + e * delta[i].x;
            double y = base[i].y + e * delta[i].y;
            if (noise > 0.0) {
                x += noise * rng.normal(0.0, 0.35);
                y += noise * rng.normal(0.0, 0.35);
            }
            y -= 40.0;  // rotate about a mid-face pivot
            const double xr = view_scale * (cr * x - sr * y) + htx + view_tx;
            const double yr = view_scale * (sr * x + cr * y) + 40.0 + hty + view_ty;
            fr.landmarks[i] = {xr, yr};
        }
        const double gx = 0.10 * std::sin(6.2831853 * tf / gazeT + gazeP) +
                          ((noise > 0.0) ? noise * rng.normal(0.0, 0.02) : 0.0);
        const double gy = 0.08 * std::sin(6.2831853 * tf / (gazeT * 1.3) + gazeP * 0.7) +
                          ((noise > 0.0) ? noise * rng.normal(0.0, 0.02) : 0.0);
        fr.gaze = {gx, gy, -0.95, gx * 0.9, gy * 1.1, -0.95};
        fr.pose = {htx + view_tx, hty + view_ty, 600.0 + 12.0 * std::sin(6.2831853 * tf / 31.0),
                   0.3 * hrz, 0.5 * hrz, hrz + view_rot};
        for (std::size_t a = 0; a < kNumAus; ++a) {
            double v = 0.15;
            if (noise > 0.0) v += std::fabs(noise * rng.normal(0.0, 0.10));
            fr.aus[a] = v;
        }
        for (const auto& [ai, w] : pain_aus) {
            double v = fr.aus[ai] + 2.8 * w * e;
            if (noise > 0.0) v += noise * rng.normal(0.0, 0.12);
            fr.aus[ai] = std::clamp(v, 0.0, 5.0);
        }
        if (tf >= next_blink) {  // AU45 blink spike
            fr.aus[16] = std::clamp(3.5 + ((noise > 0.0) ? noise * rng.normal(0.0, 0.3) : 0.0), 0.0, 5.0);
            if (tf >= next_blink + 0.2) next_blink = tf + rng.uniform(2.5, 7.0);
        }
        rec.face_frames.push_back(std::move(fr));
    }
    return rec;
}

inline SyntheticCohort generate_synthetic_cohort(const SynthConfig& cfg) {
    SyntheticCohort out;
    out.recordings.reserve(cfg.n_subjects);
    out.planted_profile.resize(cfg.n_subjects);
    for (std::size_t i = 0; i < cfg.n_subjects; ++i)
        out.recordings.push_back(generate_subject(cfg, i, out.planted_profile[i]));
    return out;
}

}  // namespace painpipe
