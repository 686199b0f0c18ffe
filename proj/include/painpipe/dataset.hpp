// ============================================================================
// dataset.hpp - recording ingestion (CSV + manifest JSON), window slicing,
// split assignment, class balancing
// ============================================================================
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "painpipe/common.hpp"
#include "painpipe/face.hpp"

namespace painpipe {

enum class Gender { male, female };

inline const char* gender_name(Gender g) { return g == Gender::male ? "M" : "F"; }

inline Gender parse_gender(std::string_view s, const char* what) {
    if (s == "M" || s == "m") return Gender::male;
    if (s == "F" || s == "f") return Gender::female;
    throw Error(ErrorCode::invalid_data, std::string("unrecognized gender in ") + what + ": '" +
                                             std::string(s) + "' (expected M or F)");
}

struct Stimulus {
    double onset_s = 0.0;
    int level = 0;  // 1..4
};

struct Recording {
    std::string subject_id;
    double age = 0.0;
    Gender gender = Gender::male;
    double fs_bio = 0.0;  // shared SC/ECG rate (one time column)
    std::vector<double> sc;   // µS
    std::vector<double> ecg;  // mV
    std::vector<FaceFrame> face_frames;
    std::vector<Stimulus> stimuli;

    double span_s() const {
        return fs_bio > 0.0 ? static_cast<double>(sc.size()) / fs_bio : 0.0;
    }
};

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

inline constexpr std::size_t kPhysioDim = 10;  // 6 SC + 4 IBI
inline constexpr std::size_t kVideoDim = kFaceFeatureDim;
inline constexpr std::size_t kMultimodalDim = kPhysioDim + kVideoDim;  // 290

struct WindowFeatures {
    std::uint32_t subject_idx = 0;  // position in the cohort manifest
    double t0 = 0.0;
    int label = 0;  // 0 = no pain, 1..4 = stimulus level active at t0
    Split split = Split::train;
    std::vector<double> features;  // kMultimodalDim: physio block then video block
};

struct SlicedWindow {
    double t0 = 0.0;
    int label = 0;
    Split split = Split::train;
};

struct WindowingConfig {
    double window_s = 6.0;
    double step_s = 0.5;
    double stim_duration_s = 4.0;
    std::size_t train_stimuli = 48;  // era boundaries: first 48 / next 10 / final 22
    std::size_t val_stimuli = 10;
};

// ----------------------------------------------------------------------------
// CSV plumbing
// ----------------------------------------------------------------------------

namespace detail {

inline void split_csv_line(std::string_view line, std::vector<std::string_view>& out) {
    out.clear();
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
}

inline const std::vector<std::string>& au_column_names() {
    static const std::vector<std::string> names = {
        "AU01_r", "AU02_r", "AU04_r", "AU05_r", "AU06_r", "AU07_r", "AU09_r", "AU10_r",
        "AU12_r", "AU14_r", "AU15_r", "AU17_r", "AU20_r", "AU23_r", "AU25_r", "AU26_r",
        "AU45_r"};
    return names;
}

inline const std::vector<std::string>& face_csv_columns() {
    static const std::vector<std::string> cols = [] {
        std::vector<std::string> c = {"frame", "timestamp", "success"};
        for (std::size_t i = 0; i < kNumLandmarks; ++i) c.push_back("x_" + std::to_string(i));
        for (std::size_t i = 0; i < kNumLandmarks; ++i) c.push_back("y_" + std::to_string(i));
        for (int g = 0; g < 2; ++g)
            for (const char* ax : {"x", "y", "z"})
                c.push_back("gaze_" + std::to_string(g) + "_" + ax);
        for (const char* p : {"Tx", "Ty", "Tz", "Rx", "Ry", "Rz"})
            c.push_back(std::string("pose_") + p);
        for (const std::string& au : au_column_names()) c.push_back(au);
        return c;
    }();
    return cols;
}

inline const char* face_block_name(std::size_t col) {
    if (col < 3) return "frame metadata";
    if (col < 3 + kNumLandmarks) return "landmark x";
    if (col < 3 + 2 * kNumLandmarks) return "landmark y";
    if (col < 3 + 2 * kNumLandmarks + 6) return "gaze";
    if (col < 3 + 2 * kNumLandmarks + 12) return "pose";
    return "AU intensity";
}

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f)
        throw Error(ErrorCode::missing_artifact, "cannot open " + path.string());
    return f;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f)
        throw Error(ErrorCode::invalid_argument, "cannot write " + path.string());
    return f;
}

inline std::string loc(const std::filesystem::path& path, std::size_t line) {
    return path.string() + ":" + std::to_string(line);
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Loaders. Every failure carries file (and line, where meaningful).
// ----------------------------------------------------------------------------

struct BiosignalSeries {
    double fs = 0.0;
    std::vector<double> sc, ecg;
};

inline BiosignalSeries load_biosignal_csv(const std::filesystem::path& path) {
    std::ifstream f = detail::open_input(path);
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(f, line))
        throw Error(ErrorCode::schema, path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "time_s,gsr_uS,ecg_mV")
        throw Error(ErrorCode::schema,
                    path.string() + ": biosignal header must be 'time_s,gsr_uS,ecg_mV', got '" +
                        line + "'");

    BiosignalSeries out;
    std::vector<std::string_view> fields;
    double t_first = 0.0, t_prev = 0.0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        detail::split_csv_line(line, fields);
        if (fields.size() != 3)
            throw Error(ErrorCode::invalid_data, detail::loc(path, lineno) +
                                                     ": expected 3 fields, got " +
                                                     std::to_string(fields.size()));
        const double t = parse_double(fields[0], detail::loc(path, lineno).c_str());
        const double g = parse_double(fields[1], detail::loc(path, lineno).c_str());
        const double e = parse_double(fields[2], detail::loc(path, lineno).c_str());
        if (!std::isfinite(t) || !std::isfinite(g) || !std::isfinite(e))
            throw Error(ErrorCode::invalid_data, detail::loc(path, lineno) + ": non-finite value");
        if (!out.sc.empty() && t <= t_prev)
            throw Error(ErrorCode::invalid_data,
                        detail::loc(path, lineno) + ": time not strictly increasing");
        if (out.sc.empty()) t_first = t;
        t_prev = t;
        out.sc.push_back(g);
        out.ecg.push_back(e);
    }
    if (out.sc.size() < 2)
        throw Error(ErrorCode::invalid_data, path.string() + ": needs at least 2 samples");
    out.fs = static_cast<double>(out.sc.size() - 1) / (t_prev - t_first);
    return out;
}

inline std::vector<FaceFrame> load_face_csv(const std::filesystem::path& path) {
    std::ifstream f = detail::open_input(path);
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(f, line))
        throw Error(ErrorCode::schema, path.string() + ": empty file");
    std::vector<std::string_view> fields;
    detail::split_csv_line(line, fields);
    const auto& expect = detail::face_csv_columns();
    const std::size_t ncols = expect.size();  // 168
    for (std::size_t i = 0; i < std::min(fields.size(), ncols); ++i)
        if (fields[i] != expect[i])
            throw Error(ErrorCode::schema, path.string() + ": face header column " +
                                               std::to_string(i) + " expected '" + expect[i] +
                                               "' (" + detail::face_block_name(i) + " block), got '" +
                                               std::string(fields[i]) + "'");
    if (fields.size() != ncols)
        throw Error(ErrorCode::schema,
                    path.string() + ": face header has " + std::to_string(fields.size()) +
                        " columns, expected " + std::to_string(ncols) + " (diverges in the " +
                        detail::face_block_name(std::min(fields.size(), ncols - 1)) + " block)");

    std::vector<FaceFrame> out;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        detail::split_csv_line(line, fields);
        if (fields.size() != ncols)
            throw Error(ErrorCode::invalid_data, detail::loc(path, lineno) + ": expected " +
                                                     std::to_string(ncols) + " fields, got " +
                                                     std::to_string(fields.size()));
        const std::string where = detail::loc(path, lineno);
        FaceFrame fr;
        fr.frame_index = static_cast<int>(parse_long(fields[0], where.c_str()));
        fr.timestamp = parse_double(fields[1], where.c_str());
        fr.success = parse_long(fields[2], where.c_str()) != 0;
        std::size_t c = 3;
        for (std::size_t i = 0; i < kNumLandmarks; ++i)
            fr.landmarks[i].x = parse_double(fields[c++], where.c_str());
        for (std::size_t i = 0; i < kNumLandmarks; ++i)
            fr.landmarks[i].y = parse_double(fields[c++], where.c_str());
        for (std::size_t i = 0; i < 6; ++i) fr.gaze[i] = parse_double(fields[c++], where.c_str());
        for (std::size_t i = 0; i < 6; ++i) fr.pose[i] = parse_double(fields[c++], where.c_str());
        for (std::size_t i = 0; i < kNumAus; ++i)
            fr.aus[i] = std::clamp(parse_double(fields[c++], where.c_str()), 0.0, 5.0);
        if (!out.empty() && fr.timestamp <= out.back().timestamp)
            throw Error(ErrorCode::invalid_data, where + ": timestamp not strictly increasing");
        out.push_back(fr);
    }
    return out;
}

inline std::vector<Stimulus> load_stimulus_csv(const std::filesystem::path& path) {
    std::ifstream f = detail::open_input(path);
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(f, line))
        throw Error(ErrorCode::schema, path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "onset_s,level")
        throw Error(ErrorCode::schema,
                    path.string() + ": stimulus header must be 'onset_s,level', got '" + line + "'");
    std::vector<Stimulus> out;
    std::vector<std::string_view> fields;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        detail::split_csv_line(line, fields);
        if (fields.size() != 2)
            throw Error(ErrorCode::invalid_data, detail::loc(path, lineno) +
                                                     ": expected 2 fields, got " +
                                                     std::to_string(fields.size()));
        const std::string where = detail::loc(path, lineno);
        Stimulus s;
        s.onset_s = parse_double(fields[0], where.c_str());
        s.level = static_cast<int>(parse_long(fields[1], where.c_str()));
        if (s.level < 1 || s.level > 4)
            throw Error(ErrorCode::invalid_data, where + ": level must be 1..4");
        if (!out.empty() && s.onset_s <= out.back().onset_s)
            throw Error(ErrorCode::invalid_data, where + ": onsets not strictly increasing");
        out.push_back(s);
    }
    return out;
}

// ----------------------------------------------------------------------------
// Writers (synthetic cohorts are persisted through these, then re-read by the
// loaders above, so write -> read round-trips exactly via shortest-round-trip
// double formatting).
// ----------------------------------------------------------------------------

inline void write_biosignal_csv(const std::filesystem::path& path, double fs,
                                std::span<const double> sc, std::span<const double> ecg) {
    if (sc.size() != ecg.size())
        throw Error(ErrorCode::invalid_argument, "write_biosignal_csv: length mismatch");
    std::ofstream f = detail::open_output(path);
    f << "time_s,gsr_uS,ecg_mV\n";
    for (std::size_t i = 0; i < sc.size(); ++i)
        f << format_double(static_cast<double>(i) / fs) << ',' << format_double(sc[i]) << ','
          << format_double(ecg[i]) << '\n';
}

inline void write_face_csv(const std::filesystem::path& path, std::span<const FaceFrame> frames) {
    std::ofstream f = detail::open_output(path);
    const auto& cols = detail::face_csv_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) f << (i ? "," : "") << cols[i];
    f << '\n';
    for (const FaceFrame& fr : frames) {
        f << fr.frame_index << ',' << format_double(fr.timestamp) << ',' << (fr.success ? 1 : 0);
        for (std::size_t i = 0; i < kNumLandmarks; ++i) f << ',' << format_double(fr.landmarks[i].x);
        for (std::size_t i = 0; i < kNumLandmarks; ++i) f << ',' << format_double(fr.landmarks[i].y);
        for (double v : fr.gaze) f << ',' << format_double(v);
        for (double v : fr.pose) f << ',' << format_double(v);
        for (double v : fr.aus) f << ',' << format_double(v);
        f << '\n';
    }
}

inline void write_stimulus_csv(const std::filesystem::path& path,
                               std::span<const Stimulus> stimuli) {
    std::ofstream f = detail::open_output(path);
    f << "onset_s,level\n";
    for (const Stimulus& s : stimuli) f << format_double(s.onset_s) << ',' << s.level << '\n';
}

// ----------------------------------------------------------------------------
// Cohort manifest
// ----------------------------------------------------------------------------

struct ManifestEntry {
    std::string id;
    double age = 0.0;
    Gender gender = Gender::male;
    std::string biosignal, face, stimuli;  // paths relative to the manifest
};

inline std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
    std::ifstream f = detail::open_input(path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::schema, path.string() + ": invalid JSON: " + e.what());
    }
    std::vector<ManifestEntry> out;
    try {
        for (const auto& s : j.at("subjects")) {
            ManifestEntry e;
            e.id = s.at("id").get<std::string>();
            e.age = s.at("age").get<double>();
            e.gender = parse_gender(s.at("gender").get<std::string>(), path.string().c_str());
            e.biosignal = s.at("biosignal").get<std::string>();
            e.face = s.at("face").get<std::string>();
            e.stimuli = s.at("stimuli").get<std::string>();
            out.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::schema, path.string() + ": manifest schema violation: " + e.what());
    }
    if (out.empty())
        throw Error(ErrorCode::schema, path.string() + ": manifest lists no subjects");
    return out;
}

inline void save_manifest(const std::filesystem::path& path,
                          std::span<const ManifestEntry> entries) {
    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["subjects"] = nlohmann::ordered_json::array();
    for (const ManifestEntry& e : entries) {
        nlohmann::ordered_json s;
        s["id"] = e.id;
        s["age"] = e.age;
        s["gender"] = gender_name(e.gender);
        s["biosignal"] = e.biosignal;
        s["face"] = e.face;
        s["stimuli"] = e.stimuli;
        j["subjects"].push_back(std::move(s));
    }
    std::ofstream f = detail::open_output(path);
    f << j.dump(2) << '\n';
}

inline Recording load_recording(const ManifestEntry& e, const std::filesystem::path& base_dir) {
    Recording rec;
    rec.subject_id = e.id;
    rec.age = e.age;
    rec.gender = e.gender;
    BiosignalSeries bio = load_biosignal_csv(base_dir / e.biosignal);
    rec.fs_bio = bio.fs;
    rec.sc = std::move(bio.sc);
    rec.ecg = std::move(bio.ecg);
    rec.face_frames = load_face_csv(base_dir / e.face);
    rec.stimuli = load_stimulus_csv(base_dir / e.stimuli);
    return rec;
}

// ----------------------------------------------------------------------------
// Window slicing. Label = level of the stimulus active at t0 (active on
// [onset, onset + stim_duration)). Split eras are delimited by the onsets of
// stimuli 49 and 59; windows straddling an era boundary are dropped so no
// window leaks across splits.
// ----------------------------------------------------------------------------

inline std::vector<SlicedWindow> slice_estimation_windows(const Recording& rec,
                                                          const WindowingConfig& wc = {}) {
    const double span = rec.span_s();
    if (span < wc.window_s)
        throw Error(ErrorCode::invalid_argument, "slice_estimation_windows: recording shorter than window");

    constexpr double inf = std::numeric_limits<double>::infinity();
    const std::size_t b1_idx = wc.train_stimuli;                   // stimulus 49 (0-based 48)
    const std::size_t b2_idx = wc.train_stimuli + wc.val_stimuli;  // stimulus 59
    const double b1 = rec.stimuli.size() > b1_idx ? rec.stimuli[b1_idx].onset_s : inf;
    const double b2 = rec.stimuli.size() > b2_idx ? rec.stimuli[b2_idx].onset_s : inf;

    std::vector<SlicedWindow> out;
    std::size_t stim_at = 0;
    for (std::size_t k = 0;; ++k) {
        const double t0 = static_cast<double>(k) * wc.step_s;
        if (t0 + wc.window_s > span + 1e-9) break;
        const double t1 = t0 + wc.window_s;

        while (stim_at < rec.stimuli.size() &&
               rec.stimuli[stim_at].onset_s + wc.stim_duration_s <= t0)
            ++stim_at;
        int label = 0;
        if (stim_at < rec.stimuli.size() && rec.stimuli[stim_at].onset_s <= t0 + 1e-9 &&
            t0 < rec.stimuli[stim_at].onset_s + wc.stim_duration_s - 1e-9)
            label = rec.stimuli[stim_at].level;

        Split split;
        if (t1 <= b1 + 1e-9)
            split = Split::train;
        else if (t0 >= b1 - 1e-9 && t1 <= b2 + 1e-9)
            split = Split::val;
        else if (t0 >= b2 - 1e-9)
            split = Split::test;
        else
            continue;  // era-crossing window: dropped
        out.push_back({t0, label, split});
    }
    return out;
}

// Profile windows: [onset, onset + 8 s) for the first train_stimuli stimuli.
struct ProfileSlice {
    std::size_t stimulus_index = 0;
    int level = 0;
    double t0 = 0.0;
};

inline std::vector<ProfileSlice> slice_profile_windows(const Recording& rec,
                                                       double window_s = 8.0,
                                                       std::size_t max_stimuli = 48) {
    const double span = rec.span_s();
    std::vector<ProfileSlice> out;
    const std::size_t n = std::min(max_stimuli, rec.stimuli.size());
    for (std::size_t i = 0; i < n; ++i) {
        const double t0 = rec.stimuli[i].onset_s;
        if (t0 + window_s > span + 1e-9) continue;
        out.push_back({i, rec.stimuli[i].level, t0});
    }
    return out;
}

// ----------------------------------------------------------------------------
// Training-set balancing: seeded uniform subsample of P=0 down to the P>0
// count. Only the train split is touched; window order is preserved.
// ----------------------------------------------------------------------------

inline std::vector<WindowFeatures> balance_training_set(std::vector<WindowFeatures> windows,
                                                        std::uint64_t seed) {
    std::vector<std::size_t> zero_idx;
    std::size_t pos_count = 0;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (windows[i].split != Split::train) continue;
        if (windows[i].label == 0)
            zero_idx.push_back(i);
        else
            ++pos_count;
    }
    if (zero_idx.empty() || pos_count == 0)
        throw Error(ErrorCode::invalid_data,
                    "balance_training_set: training split must contain both P=0 and P>0 windows");
    if (zero_idx.size() <= pos_count) return windows;  // never upsample

    SplitMix rng(derive_seed(seed, "balance"));
    for (std::size_t i = 0; i < pos_count; ++i) {
        const std::size_t j =
            i + static_cast<std::size_t>(bounded_rand(rng, zero_idx.size() - i));
        std::swap(zero_idx[i], zero_idx[j]);
    }
    std::vector<char> keep_zero(windows.size(), 0);
    for (std::size_t i = 0; i < pos_count; ++i) keep_zero[zero_idx[i]] = 1;

    std::vector<WindowFeatures> out;
    out.reserve(windows.size() - (zero_idx.size() - pos_count));
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (windows[i].split == Split::train && windows[i].label == 0 && !keep_zero[i]) continue;
        out.push_back(std::move(windows[i]));
    }
    return out;
}

}  // namespace painpipe
