// ============================================================================
// common.hpp - shared error type, logging, RNG derivation, numeric helpers
// ============================================================================
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace painpipe {

// ----------------------------------------------------------------------------
// Errors. One exception type with a category so the CLI can map failures to
// distinct exit codes.
// ----------------------------------------------------------------------------

enum class ErrorCode {
    invalid_argument,  // bad parameter from caller/CLI
    invalid_data,      // malformed input file or non-finite sample
    schema,            // config or CSV header violates the documented schema
    missing_artifact,  // a required upstream artifact file does not exist
    numeric            // solver non-convergence or similar
};

struct Error : std::runtime_error {
    ErrorCode code;
    Error(ErrorCode c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::invalid_argument: return "invalid-argument";
        case ErrorCode::invalid_data:     return "invalid-data";
        case ErrorCode::schema:           return "schema";
        case ErrorCode::missing_artifact: return "missing-artifact";
        case ErrorCode::numeric:          return "numeric";
    }
    return "unknown";
}

// ----------------------------------------------------------------------------
// Logging. Verbosity from PAINPIPE_LOG (quiet|warn|info|debug), default info.
// ----------------------------------------------------------------------------

enum class LogLevel { quiet = 0, warn = 1, info = 2, debug = 3 };

inline LogLevel& log_level() {
    static LogLevel lvl = [] {
        const char* env = std::getenv("PAINPIPE_LOG");
        if (!env) return LogLevel::info;
        std::string_view v(env);
        if (v == "quiet") return LogLevel::quiet;
        if (v == "warn") return LogLevel::warn;
        if (v == "debug") return LogLevel::debug;
        return LogLevel::info;
    }();
    return lvl;
}

template <class... Args>
inline void log_at(LogLevel lvl, const char* tag, const char* fmt, Args... args) {
    if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
    std::fprintf(stderr, "[%s] ", tag);
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
}

template <class... Args>
inline void log_info(const char* fmt, Args... args) { log_at(LogLevel::info, "info", fmt, args...); }
template <class... Args>
inline void log_warn(const char* fmt, Args... args) { log_at(LogLevel::warn, "warn", fmt, args...); }
template <class... Args>
inline void log_debug(const char* fmt, Args... args) { log_at(LogLevel::debug, "debug", fmt, args...); }

// ----------------------------------------------------------------------------
// Deterministic RNG helpers. Artifact reproducibility depends on rolling our
// own bounded draws instead of std::uniform_int_distribution.
// ----------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Independent stream seed from a master seed and a short tag.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t index = 0) {
    std::uint64_t s = master ^ 0x6a09e667f3bcc908ULL;
    for (char c : tag) {
        s ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
        splitmix64(s);
    }
    s ^= index * 0x9e3779b97f4a7c15ULL;
    splitmix64(s);
    return splitmix64(s);
}

// Unbiased draw in [0, n) via rejection; implementation-independent.
template <class Rng>
inline std::uint64_t bounded_rand(Rng& rng, std::uint64_t n) {
    if (n == 0) throw Error(ErrorCode::invalid_argument, "bounded_rand: n must be > 0");
    const std::uint64_t threshold = (0ULL - n) % n;
    for (;;) {
        std::uint64_t r = rng();
        if (r >= threshold) return r % n;
    }
}

template <class Rng, class T>
inline void shuffle_deterministic(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(bounded_rand(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

// Seeded generator with the distribution draws the pipeline needs. Hand-rolled
// (splitmix64 + Box-Muller) so artifacts are identical across platforms and
// standard-library versions.
class SplitMix {
public:
    explicit SplitMix(std::uint64_t seed) : state_(seed) {}

    std::uint64_t operator()() { return splitmix64(state_); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; second value cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        constexpr double two_pi = 6.283185307179586476925287;
        spare_ = r * std::sin(two_pi * u2);
        has_spare_ = true;
        return r * std::cos(two_pi * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// ----------------------------------------------------------------------------
// Number formatting/parsing: shortest round-trip via to_chars/from_chars so
// CSV write -> read reproduces doubles bit for bit.
// ----------------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const char* what) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last)
        throw Error(ErrorCode::invalid_data,
                    std::string("unparseable number in ") + what + ": '" + std::string(s) + "'");
    return v;
}

inline long parse_long(std::string_view s, const char* what) {
    long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw Error(ErrorCode::invalid_data,
                    std::string("unparseable integer in ") + what + ": '" + std::string(s) + "'");
    return v;
}

// FNV-1a, used to stamp artifacts with a config fingerprint.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

// ----------------------------------------------------------------------------
// Small statistics over spans
// ----------------------------------------------------------------------------

inline double mean_of(std::span<const double> v) {
    if (v.empty()) throw Error(ErrorCode::invalid_argument, "mean of empty span");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation (n-1); 0 for n == 1.
inline double sample_sd(std::span<const double> v) {
    const std::size_t n = v.size();
    if (n == 0) throw Error(ErrorCode::invalid_argument, "sd of empty span");
    if (n == 1) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(n - 1));
}

// Population standard deviation (n).
inline double population_sd(std::span<const double> v) {
    const std::size_t n = v.size();
    if (n == 0) throw Error(ErrorCode::invalid_argument, "sd of empty span");
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(n));
}

// Four summary statistics used across the feature modules.
struct SummaryStats {
    double mean = 0.0, sd = 0.0, max = 0.0, min = 0.0;
};

// sd here is the population convention (windows may hold a single frame).
inline SummaryStats summarize(std::span<const double> v) {
    SummaryStats s;
    s.mean = mean_of(v);
    s.sd = population_sd(v);
    s.max = *std::max_element(v.begin(), v.end());
    s.min = *std::min_element(v.begin(), v.end());
    return s;
}

// p-th percentile (nearest-rank on a copy), p in [0, 1].
inline double percentile(std::span<const double> v, double p) {
    if (v.empty()) throw Error(ErrorCode::invalid_argument, "percentile of empty span");
    std::vector<double> tmp(v.begin(), v.end());
    std::size_t k = static_cast<std::size_t>(p * static_cast<double>(tmp.size() - 1) + 0.5);
    k = std::min(k, tmp.size() - 1);
    std::nth_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(k), tmp.end());
    return tmp[k];
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace painpipe
