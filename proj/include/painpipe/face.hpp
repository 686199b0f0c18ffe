// ============================================================================
// face.hpp - facial landmark registration (4-point least-squares affine),
// geometric distance statistics, gaze/pose/AU statistics, expressiveness
// ============================================================================
#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "painpipe/common.hpp"
#include "painpipe/linalg.hpp"

namespace painpipe {

struct Point {
    double x = 0.0, y = 0.0;
};

inline constexpr std::size_t kNumLandmarks = 68;
inline constexpr std::size_t kNumAus = 17;
inline constexpr std::size_t kRetainedFirst = 27;  // drop contour 0-16 and eyebrows 17-26
inline constexpr std::size_t kRetainedCount = 41;
inline constexpr std::size_t kFaceFeatureDim = 280;  // 41*4 + 6*4 + 6*4 + 17*4

struct FaceFrame {
    int frame_index = 0;
    double timestamp = 0.0;  // s
    bool success = true;
    std::array<Point, kNumLandmarks> landmarks{};
    std::array<double, 6> gaze{};  // two unit vectors, x/y/z each
    std::array<double, 6> pose{};  // Tx, Ty, Tz (mm), Rx, Ry, Rz (rad)
    std::array<double, kNumAus> aus{};
};

struct RegisteredFrame {
    std::array<Point, kNumLandmarks> landmarks{};
    std::array<double, kRetainedCount> distances{};  // to the retained set's COG
};

// Canonical frame the reference points are mapped onto.
inline const std::array<Point, 4>& canonical_refs() {
    static const std::array<Point, 4> refs = {{{-50.0, 0.0}, {50.0, 0.0}, {0.0, 45.0}, {0.0, 90.0}}};
    return refs;
}

// Reference points on the 68-landmark scheme: left-eye center (36-41),
// right-eye center (42-47), nose tip (33), mouth center (48-67).
inline std::array<Point, 4> reference_points(const FaceFrame& f) {
    auto mean_range = [&](std::size_t a, std::size_t b) {
        Point p;
        for (std::size_t i = a; i <= b; ++i) {
            p.x += f.landmarks[i].x;
            p.y += f.landmarks[i].y;
        }
        const double n = static_cast<double>(b - a + 1);
        return Point{p.x / n, p.y / n};
    };
    return {mean_range(36, 41), mean_range(42, 47), f.landmarks[33], mean_range(48, 67)};
}

struct AffineTransform {
    // x' = a x + b y + c;  y' = d x + e y + f
    double a = 1.0, b = 0.0, c = 0.0, d = 0.0, e = 1.0, f = 0.0;

    Point apply(const Point& p) const {
        return {a * p.x + b * p.y + c, d * p.x + e * p.y + f};
    }
};

// Least-squares 6-DOF affine mapping src -> dst (8 constraints from 4 point
// pairs); both coordinate rows share one 3x3 normal-equation system.
inline AffineTransform fit_affine(std::span<const Point> src, std::span<const Point> dst) {
    if (src.size() != dst.size() || src.size() < 3)
        throw Error(ErrorCode::invalid_argument, "fit_affine: need >= 3 point pairs");
    Matrix g(3, 3);
    std::vector<double> bu(3, 0.0), bv(3, 0.0);
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double row[3] = {src[i].x, src[i].y, 1.0};
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) g(r, c) += row[r] * row[c];
            bu[static_cast<std::size_t>(r)] += row[r] * dst[i].x;
            bv[static_cast<std::size_t>(r)] += row[r] * dst[i].y;
        }
    }
    std::vector<double> u, v;
    try {
        u = cholesky_solve(g, bu);
        v = cholesky_solve(g, bv);
    } catch (const Error&) {
        throw Error(ErrorCode::invalid_data, "fit_affine: degenerate reference configuration");
    }
    AffineTransform t{u[0], u[1], u[2], v[0], v[1], v[2]};
    if (std::fabs(t.a * t.e - t.b * t.d) < 1e-12)
        throw Error(ErrorCode::invalid_data, "fit_affine: degenerate reference configuration");
    return t;
}

inline RegisteredFrame register_landmarks(const FaceFrame& frame,
                                          const std::array<Point, 4>& canonical = canonical_refs()) {
    if (!frame.success)
        throw Error(ErrorCode::invalid_argument, "register_landmarks: frame not successful");
    const std::array<Point, 4> refs = reference_points(frame);
    const AffineTransform t = fit_affine(refs, canonical);

    RegisteredFrame out;
    for (std::size_t i = 0; i < kNumLandmarks; ++i) out.landmarks[i] = t.apply(frame.landmarks[i]);

    Point cog;
    for (std::size_t i = kRetainedFirst; i < kNumLandmarks; ++i) {
        cog.x += out.landmarks[i].x;
        cog.y += out.landmarks[i].y;
    }
    cog.x /= static_cast<double>(kRetainedCount);
    cog.y /= static_cast<double>(kRetainedCount);
    for (std::size_t i = 0; i < kRetainedCount; ++i) {
        const Point& p = out.landmarks[kRetainedFirst + i];
        out.distances[i] = std::hypot(p.x - cog.x, p.y - cog.y);
    }
    return out;
}

// ----------------------------------------------------------------------------
// 280D window statistics, coordinate-major [mean, sd, max, min]:
//   41 registered distances | 6 gaze coords | 6 pose coords | 17 AU intensities
// Frames with success=false are skipped; zero successful frames -> nullopt.
// ----------------------------------------------------------------------------

inline std::optional<std::vector<double>> face_window_features(
    std::span<const FaceFrame> frames, const std::array<Point, 4>& canonical = canonical_refs()) {
    std::vector<std::array<double, kRetainedCount>> dists;
    std::vector<const FaceFrame*> ok;
    for (const FaceFrame& f : frames) {
        if (!f.success) continue;
        dists.push_back(register_landmarks(f, canonical).distances);
        ok.push_back(&f);
    }
    if (ok.empty()) return std::nullopt;

    std::vector<double> out;
    out.reserve(kFaceFeatureDim);
    std::vector<double> col(ok.size());
    auto push_stats = [&](auto&& getter) {
        for (std::size_t f = 0; f < ok.size(); ++f) col[f] = getter(f);
        const SummaryStats s = summarize(col);
        out.push_back(s.mean);
        out.push_back(s.sd);
        out.push_back(s.max);
        out.push_back(s.min);
    };
    for (std::size_t j = 0; j < kRetainedCount; ++j)
        push_stats([&](std::size_t f) { return dists[f][j]; });
    for (std::size_t j = 0; j < 6; ++j)
        push_stats([&](std::size_t f) { return ok[f]->gaze[j]; });
    for (std::size_t j = 0; j < 6; ++j)
        push_stats([&](std::size_t f) { return ok[f]->pose[j]; });
    for (std::size_t j = 0; j < kNumAus; ++j)
        push_stats([&](std::size_t f) { return ok[f]->aus[j]; });
    return out;
}

// ----------------------------------------------------------------------------
// Expressiveness: mean total landmark displacement from the subject's
// sequence-average face. Computed on registered landmarks by default so head
// motion does not contaminate the score (switchable to raw).
// ----------------------------------------------------------------------------

inline std::optional<std::array<Point, kNumLandmarks>> sequence_mean_landmarks(
    std::span<const FaceFrame> frames, bool use_registered = true,
    const std::array<Point, 4>& canonical = canonical_refs()) {
    std::array<Point, kNumLandmarks> acc{};
    std::size_t n = 0;
    for (const FaceFrame& f : frames) {
        if (!f.success) continue;
        if (use_registered) {
            const RegisteredFrame r = register_landmarks(f, canonical);
            for (std::size_t i = 0; i < kNumLandmarks; ++i) {
                acc[i].x += r.landmarks[i].x;
                acc[i].y += r.landmarks[i].y;
            }
        } else {
            for (std::size_t i = 0; i < kNumLandmarks; ++i) {
                acc[i].x += f.landmarks[i].x;
                acc[i].y += f.landmarks[i].y;
            }
        }
        ++n;
    }
    if (n == 0) return std::nullopt;
    for (Point& p : acc) {
        p.x /= static_cast<double>(n);
        p.y /= static_cast<double>(n);
    }
    return acc;
}

inline std::optional<double> expressiveness(std::span<const FaceFrame> frames,
                                            const std::array<Point, kNumLandmarks>& seq_mean,
                                            bool use_registered = true,
                                            const std::array<Point, 4>& canonical = canonical_refs()) {
    double total = 0.0;
    std::size_t n = 0;
    for (const FaceFrame& f : frames) {
        if (!f.success) continue;
        std::array<Point, kNumLandmarks> lms;
        if (use_registered)
            lms = register_landmarks(f, canonical).landmarks;
        else
            lms = f.landmarks;
        for (std::size_t i = 0; i < kNumLandmarks; ++i)
            total += std::hypot(lms[i].x - seq_mean[i].x, lms[i].y - seq_mean[i].y);
        ++n;
    }
    if (n == 0) return std::nullopt;
    return total / static_cast<double>(n);
}

}  // namespace painpipe
