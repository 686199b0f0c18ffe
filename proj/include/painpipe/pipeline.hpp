// ============================================================================
// pipeline.hpp - orchestration: per-recording feature extraction, the window
// store, and the synth/extract/profile/train/evaluate/pipeline runners. Every
// artifact records the config hash and seed; no writer emits timestamps, so
// identical config + seed reproduces byte-identical files.
// ============================================================================
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "painpipe/common.hpp"
#include "painpipe/config.hpp"
#include "painpipe/dataset.hpp"
#include "painpipe/face.hpp"
#include "painpipe/metrics.hpp"
#include "painpipe/mtnn.hpp"
#include "painpipe/profiler.hpp"
#include "painpipe/signal.hpp"
#include "painpipe/synth.hpp"

namespace painpipe {

// ----------------------------------------------------------------------------
// Per-recording extraction: deconvolve + R-peaks once, then window features.
// Estimation windows missing a modality (too few beats, or no successful face
// frame) are dropped and counted.
// ----------------------------------------------------------------------------

struct ExtractionResult {
    std::vector<WindowFeatures> windows;                 // 290-D estimation windows
    std::vector<ProfileWindowFeatures> profile_windows;  // 11-D stimulus-locked windows
    std::size_t dropped_windows = 0;
    std::size_t dropped_profile_windows = 0;
};

inline ExtractionResult extract_recording(const Recording& rec, std::uint32_t subject_idx,
                                          const WindowingConfig& wcfg = {},
                                          double profile_window_s = 8.0,
                                          std::size_t profile_max_stimuli = 48) {
    ExtractionResult out;
    const ScDecomposition dec = deconvolve_sc(rec.sc, rec.fs_bio);
    const IbiSeries ibis = detect_r_peaks(rec.ecg, rec.fs_bio);

    std::vector<double> fts;
    fts.reserve(rec.face_frames.size());
    for (const FaceFrame& f : rec.face_frames) fts.push_back(f.timestamp);
    auto frames_in = [&](double t0, double t1) -> std::span<const FaceFrame> {
        const auto lo = std::lower_bound(fts.begin(), fts.end(), t0) - fts.begin();
        const auto hi = std::lower_bound(fts.begin(), fts.end(), t1) - fts.begin();
        return {rec.face_frames.data() + lo, static_cast<std::size_t>(hi - lo)};
    };

    for (const SlicedWindow& sw : slice_estimation_windows(rec, wcfg)) {
        const auto sc6 = sc_window_features(dec, sw.t0, wcfg.window_s);
        const auto ibi4 = ibi_window_features(ibis, sw.t0, sw.t0 + wcfg.window_s);
        const auto face280 = face_window_features(frames_in(sw.t0, sw.t0 + wcfg.window_s));
        if (!ibi4 || !face280) {
            ++out.dropped_windows;
            continue;
        }
        WindowFeatures wf;
        wf.subject_idx = subject_idx;
        wf.t0 = sw.t0;
        wf.label = sw.label;
        wf.split = sw.split;
        wf.features.reserve(kMultimodalDim);
        wf.features.insert(wf.features.end(), sc6.begin(), sc6.end());
        wf.features.insert(wf.features.end(), ibi4->begin(), ibi4->end());
        wf.features.insert(wf.features.end(), face280->begin(), face280->end());
        out.windows.push_back(std::move(wf));
    }

    for (const ProfileSlice& ps : slice_profile_windows(rec, profile_window_s, profile_max_stimuli)) {
        const auto sc6 = sc_window_features(dec, ps.t0, profile_window_s);
        const auto ibi4 = ibi_window_features(ibis, ps.t0, ps.t0 + profile_window_s);
        const auto frames = frames_in(ps.t0, ps.t0 + profile_window_s);
        const auto seq_mean = sequence_mean_landmarks(frames);
        std::optional<double> lexp;
        if (seq_mean) lexp = expressiveness(frames, *seq_mean);
        if (!ibi4 || !lexp) {
            ++out.dropped_profile_windows;
            continue;
        }
        ProfileWindowFeatures pf;
        pf.level = ps.level;
        for (std::size_t j = 0; j < 6; ++j) pf.features[j] = sc6[j];
        for (std::size_t j = 0; j < 4; ++j) pf.features[6 + j] = (*ibi4)[j];
        pf.features[10] = *lexp;
        out.profile_windows.push_back(pf);
    }
    return out;
}

// ----------------------------------------------------------------------------
// Window store: "PPWINSTORE v1\n", u64 JSON-header length, header, then packed
// little-endian records (u32 subject_idx, f64 t0, u8 label, u8 split, 290×f64).
// ----------------------------------------------------------------------------

inline constexpr const char* kWindowStoreMagic = "PPWINSTORE v1\n";

struct SubjectMeta {
    std::string id;
    double age = 0.0;
    Gender gender = Gender::male;
};

struct WindowStore {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<SubjectMeta> subjects;
    std::vector<WindowFeatures> windows;
};

namespace detail {

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw Error(ErrorCode::schema, std::string("window store: truncated while reading ") + what);
    return v;
}

}  // namespace detail

inline void save_window_store(const std::filesystem::path& path, const WindowStore& ws) {
    std::ofstream os = detail::open_output(path);
    os.write(kWindowStoreMagic, static_cast<std::streamsize>(std::strlen(kWindowStoreMagic)));
    nlohmann::ordered_json h;
    h["format_version"] = 1;
    h["config_hash"] = ws.config_hash;
    h["seed"] = ws.seed;
    h["feature_dim"] = kMultimodalDim;
    h["n_windows"] = ws.windows.size();
    h["subjects"] = nlohmann::ordered_json::array();
    for (const SubjectMeta& s : ws.subjects)
        h["subjects"].push_back(
            {{"id", s.id}, {"age", s.age}, {"gender", gender_name(s.gender)}});
    const std::string hs = h.dump();
    detail::write_pod<std::uint64_t>(os, hs.size());
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const WindowFeatures& w : ws.windows) {
        if (w.features.size() != kMultimodalDim)
            throw Error(ErrorCode::invalid_argument, "window store: feature dim mismatch on save");
        detail::write_pod<std::uint32_t>(os, w.subject_idx);
        detail::write_pod<double>(os, w.t0);
        detail::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(w.label));
        detail::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(w.split));
        os.write(reinterpret_cast<const char*>(w.features.data()),
                 static_cast<std::streamsize>(sizeof(double) * w.features.size()));
    }
    if (!os) throw Error(ErrorCode::invalid_data, "window store: write failed: " + path.string());
}

inline WindowStore load_window_store(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw Error(ErrorCode::missing_artifact, "missing window store: " + path.string() +
                                                     " (run `extract` first)");
    std::string magic(std::strlen(kWindowStoreMagic), '\0');
    if (!is.read(magic.data(), static_cast<std::streamsize>(magic.size())) ||
        magic != kWindowStoreMagic)
        throw Error(ErrorCode::schema, "window store: bad magic in " + path.string());
    const auto hlen = detail::read_pod<std::uint64_t>(is, "header length");
    std::string hs(hlen, '\0');
    if (!is.read(hs.data(), static_cast<std::streamsize>(hlen)))
        throw Error(ErrorCode::schema, "window store: truncated header");
    WindowStore ws;
    std::size_t n_windows = 0;
    try {
        const nlohmann::json h = nlohmann::json::parse(hs);
        if (h.at("format_version").get<int>() != 1)
            throw Error(ErrorCode::schema, "window store: unsupported format_version");
        if (h.at("feature_dim").get<std::size_t>() != kMultimodalDim)
            throw Error(ErrorCode::schema, "window store: unexpected feature_dim");
        ws.config_hash = h.at("config_hash").get<std::string>();
        ws.seed = h.at("seed").get<std::uint64_t>();
        n_windows = h.at("n_windows").get<std::size_t>();
        for (const auto& sj : h.at("subjects")) {
            SubjectMeta s;
            s.id = sj.at("id").get<std::string>();
            s.age = sj.at("age").get<double>();
            s.gender = parse_gender(sj.at("gender").get<std::string>(), "window store header");
            ws.subjects.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::schema, std::string("window store: invalid header JSON: ") + e.what());
    }
    ws.windows.resize(n_windows);
    for (WindowFeatures& w : ws.windows) {
        w.subject_idx = detail::read_pod<std::uint32_t>(is, "subject_idx");
        if (w.subject_idx >= ws.subjects.size())
            throw Error(ErrorCode::schema, "window store: subject_idx out of range");
        w.t0 = detail::read_pod<double>(is, "t0");
        w.label = detail::read_pod<std::uint8_t>(is, "label");
        const auto sp = detail::read_pod<std::uint8_t>(is, "split");
        if (sp > 2) throw Error(ErrorCode::schema, "window store: invalid split byte");
        w.split = static_cast<Split>(sp);
        w.features.resize(kMultimodalDim);
        if (!is.read(reinterpret_cast<char*>(w.features.data()),
                     static_cast<std::streamsize>(sizeof(double) * kMultimodalDim)))
            throw Error(ErrorCode::schema, "window store: truncated record");
    }
    return ws;
}

// ----------------------------------------------------------------------------
// Profile-window store (JSON; small)
// ----------------------------------------------------------------------------

struct ProfileStore {
    std::string config_hash;
    std::uint64_t seed = 0;
    struct Subject {
        SubjectMeta meta;
        std::vector<ProfileWindowFeatures> windows;
    };
    std::vector<Subject> subjects;
};

inline void save_profile_store(const std::filesystem::path& path, const ProfileStore& ps) {
    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["config_hash"] = ps.config_hash;
    j["seed"] = ps.seed;
    j["subjects"] = nlohmann::ordered_json::array();
    for (const auto& s : ps.subjects) {
        nlohmann::ordered_json sj;
        sj["id"] = s.meta.id;
        sj["age"] = s.meta.age;
        sj["gender"] = gender_name(s.meta.gender);
        sj["windows"] = nlohmann::ordered_json::array();
        for (const ProfileWindowFeatures& w : s.windows)
            sj["windows"].push_back({{"level", w.level},
                                     {"features", std::vector<double>(w.features.begin(),
                                                                      w.features.end())}});
        j["subjects"].push_back(std::move(sj));
    }
    std::ofstream os = detail::open_output(path);
    os << j.dump(2) << '\n';
    if (!os) throw Error(ErrorCode::invalid_data, "profile store: write failed: " + path.string());
}

inline ProfileStore load_profile_store(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is)
        throw Error(ErrorCode::missing_artifact, "missing profile-window store: " + path.string() +
                                                     " (run `extract` first)");
    ProfileStore ps;
    try {
        nlohmann::json j;
        is >> j;
        if (j.at("format_version").get<int>() != 1)
            throw Error(ErrorCode::schema, "profile store: unsupported format_version");
        ps.config_hash = j.at("config_hash").get<std::string>();
        ps.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& sj : j.at("subjects")) {
            ProfileStore::Subject s;
            s.meta.id = sj.at("id").get<std::string>();
            s.meta.age = sj.at("age").get<double>();
            s.meta.gender = parse_gender(sj.at("gender").get<std::string>(), "profile store");
            for (const auto& wj : sj.at("windows")) {
                ProfileWindowFeatures w;
                w.level = wj.at("level").get<int>();
                const auto f = wj.at("features").get<std::vector<double>>();
                if (f.size() != kProfileFeatureDim)
                    throw Error(ErrorCode::schema, "profile store: bad feature count");
                std::copy(f.begin(), f.end(), w.features.begin());
                s.windows.push_back(w);
            }
            ps.subjects.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::schema, std::string("profile store: invalid JSON: ") + e.what());
    }
    return ps;
}

// ----------------------------------------------------------------------------
// Run directory layout
// ----------------------------------------------------------------------------

struct RunPaths {
    std::filesystem::path out;
    explicit RunPaths(std::filesystem::path p) : out(std::move(p)) {}
    std::filesystem::path data_dir() const { return out / "data"; }
    std::filesystem::path manifest() const { return data_dir() / "manifest.json"; }
    std::filesystem::path planted() const { return data_dir() / "planted.json"; }
    std::filesystem::path windows_bin() const { return out / "windows.bin"; }
    std::filesystem::path profile_windows() const { return out / "profile_windows.json"; }
    std::filesystem::path assignments() const { return out / "assignments.json"; }
    std::filesystem::path similarity_csv() const { return out / "similarity.csv"; }
    std::filesystem::path heatmap_svg() const { return out / "heatmap.svg"; }
    std::filesystem::path table1_txt() const { return out / "table1.txt"; }
    std::filesystem::path model_json() const { return out / "model.json"; }
    std::filesystem::path loss_curves_csv() const { return out / "loss_curves.csv"; }
    std::filesystem::path predictions_csv() const { return out / "predictions.csv"; }
    std::filesystem::path report_json() const { return out / "report.json"; }
    std::filesystem::path report_txt() const { return out / "report.txt"; }
};

// ----------------------------------------------------------------------------
// synth: generate the cohort CSVs + manifest + planted-profile ground truth
// ----------------------------------------------------------------------------

inline void run_synth(const Config& cfg, const std::filesystem::path& out_dir) {
    const RunPaths paths(out_dir);
    const SynthConfig scfg = to_synth_config(cfg);
    const std::string hash = config_hash(cfg);
    std::vector<ManifestEntry> entries;
    nlohmann::ordered_json planted;
    planted["format_version"] = 1;
    planted["config_hash"] = hash;
    planted["seed"] = cfg.seed;
    planted["subjects"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < scfg.n_subjects; ++i) {
        std::size_t profile = 0;
        const Recording rec = generate_subject(scfg, i, profile);
        const std::string base = rec.subject_id;
        write_biosignal_csv(paths.data_dir() / (base + "_bio.csv"), rec.fs_bio, rec.sc, rec.ecg);
        write_face_csv(paths.data_dir() / (base + "_face.csv"), rec.face_frames);
        write_stimulus_csv(paths.data_dir() / (base + "_stim.csv"), rec.stimuli);
        ManifestEntry e;
        e.id = rec.subject_id;
        e.age = rec.age;
        e.gender = rec.gender;
        e.biosignal = base + "_bio.csv";
        e.face = base + "_face.csv";
        e.stimuli = base + "_stim.csv";
        entries.push_back(std::move(e));
        planted["subjects"].push_back({{"id", rec.subject_id}, {"profile", profile}});
        log_info("synth: wrote subject %s (profile %zu, %.0f s)", rec.subject_id.c_str(), profile,
                 rec.span_s());
    }
    save_manifest(paths.manifest(), entries);
    std::ofstream os = detail::open_output(paths.planted());
    os << planted.dump(2) << '\n';
}

// ----------------------------------------------------------------------------
// extract: manifest -> window store + profile-window store
// ----------------------------------------------------------------------------

// The pipeline subcommand chains synth -> extract inside one out_dir; a
// manifest written there wins over the config's data.manifest path.
inline std::filesystem::path resolve_manifest(const Config& cfg,
                                              const std::filesystem::path& out_dir) {
    const RunPaths paths(out_dir);
    if (std::filesystem::exists(paths.manifest())) return paths.manifest();
    return cfg.data.manifest;
}

inline void run_extract(const Config& cfg, const std::filesystem::path& out_dir) {
    const RunPaths paths(out_dir);
    const std::filesystem::path manifest = resolve_manifest(cfg, out_dir);
    const std::vector<ManifestEntry> entries = load_manifest(manifest);
    const std::string hash = config_hash(cfg);

    WindowStore ws;
    ws.config_hash = hash;
    ws.seed = cfg.seed;
    ProfileStore ps;
    ps.config_hash = hash;
    ps.seed = cfg.seed;

    WindowingConfig wcfg;
    wcfg.window_s = cfg.windows.window_s;
    wcfg.step_s = cfg.windows.step_s;
    wcfg.stim_duration_s = cfg.windows.stim_duration_s;
    wcfg.train_stimuli = cfg.windows.train_stimuli;
    wcfg.val_stimuli = cfg.windows.val_stimuli;

    std::size_t dropped = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const Recording rec = load_recording(entries[i], manifest.parent_path());
        ExtractionResult ex =
            extract_recording(rec, static_cast<std::uint32_t>(i), wcfg,
                              cfg.profiling.profile_window_s, cfg.profiling.profile_max_stimuli);
        dropped += ex.dropped_windows;
        SubjectMeta meta{rec.subject_id, rec.age, rec.gender};
        ws.subjects.push_back(meta);
        for (WindowFeatures& w : ex.windows) ws.windows.push_back(std::move(w));
        ps.subjects.push_back({meta, std::move(ex.profile_windows)});
        log_info("extract: %s -> %zu windows, %zu profile windows (%zu dropped)",
                 rec.subject_id.c_str(), ex.windows.size(), ps.subjects.back().windows.size(),
                 ex.dropped_windows);
    }
    if (ws.windows.empty())
        throw Error(ErrorCode::invalid_data, "extract: no usable estimation windows in cohort");
    if (dropped > 0) log_warn("extract: dropped %zu windows missing a modality", dropped);
    save_window_store(paths.windows_bin(), ws);
    save_profile_store(paths.profile_windows(), ps);
}

// ----------------------------------------------------------------------------
// profile: descriptors -> spectral clusters + heatmap + Table-1-style stats
// ----------------------------------------------------------------------------

struct ProfileArtifacts {
    std::vector<std::string> subject_ids;  // included subjects, store order
    std::vector<std::string> excluded;
    SpectralModel model;
    std::vector<ClusterStats> stats;
};

inline ProfileArtifacts profile_cohort(const ProfileStore& ps, const Config& cfg) {
    std::vector<SubjectDescriptor> descs;
    ProfileArtifacts art;
    std::vector<double> ages;
    std::vector<Gender> genders;
    for (const auto& s : ps.subjects) {
        try {
            descs.push_back(build_descriptor(s.meta.id, s.windows));
        } catch (const Error& e) {
            log_warn("profile: excluding subject %s: %s", s.meta.id.c_str(), e.what());
            art.excluded.push_back(s.meta.id);
            continue;
        }
        art.subject_ids.push_back(s.meta.id);
        ages.push_back(s.meta.age);
        genders.push_back(s.meta.gender);
    }
    if (descs.size() < cfg.profiling.c)
        throw Error(ErrorCode::invalid_data,
                    "profile: fewer usable subjects (" + std::to_string(descs.size()) +
                        ") than clusters (" + std::to_string(cfg.profiling.c) + ")");
    const Matrix w = similarity_matrix(descs, cfg.profiling.gamma);
    art.model = spectral_cluster(w, cfg.profiling.c, cfg.seed, cfg.profiling.gamma,
                                 cfg.profiling.kmeans_restarts);
    art.stats = cluster_statistics(art.model.assignments, ages, genders, cfg.profiling.c);
    return art;
}

inline std::string render_table1(const std::vector<ClusterStats>& stats) {
    std::string t;
    char buf[256];
    t += "Cluster   N   %male  %female   age mean (sd)   t vs rest          p\n";
    t += "-------------------------------------------------------------------\n";
    for (const ClusterStats& cs : stats) {
        if (cs.age_vs_rest) {
            std::snprintf(buf, sizeof buf, "%6zu  %3zu   %5.1f    %5.1f   %6.1f (%4.1f)   %+8.3f   %8.4f%s\n",
                          cs.cluster, cs.size, cs.pct_male, cs.pct_female, cs.age_mean, cs.age_sd,
                          cs.age_vs_rest->t, cs.age_vs_rest->p, cs.significant ? " *" : "");
        } else {
            std::snprintf(buf, sizeof buf, "%6zu  %3zu   %5.1f    %5.1f   %6.1f (%4.1f)   %s\n",
                          cs.cluster, cs.size, cs.pct_male, cs.pct_female, cs.age_mean, cs.age_sd,
                          cs.note.empty() ? "-" : cs.note.c_str());
        }
        t += buf;
    }
    t += "* age differs from the pooled remaining subjects at p <= 0.05 (Welch two-tail)\n";
    return t;
}

inline void run_profile(const Config& cfg, const std::filesystem::path& out_dir) {
    const RunPaths paths(out_dir);
    const ProfileStore ps = load_profile_store(paths.profile_windows());
    ProfileArtifacts art = profile_cohort(ps, cfg);
    const std::string hash = config_hash(cfg);

    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["config_hash"] = hash;
    j["seed"] = cfg.seed;
    j["gamma"] = cfg.profiling.gamma;
    j["c"] = cfg.profiling.c;
    j["eigenvalues"] = art.model.eigenvalues;
    j["subjects"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < art.subject_ids.size(); ++i)
        j["subjects"].push_back(
            {{"id", art.subject_ids[i]}, {"cluster", art.model.assignments[i]}});
    j["excluded"] = art.excluded;
    j["clusters"] = nlohmann::ordered_json::array();
    for (const ClusterStats& cs : art.stats) {
        nlohmann::ordered_json cj;
        cj["cluster"] = cs.cluster;
        cj["size"] = cs.size;
        cj["pct_male"] = cs.pct_male;
        cj["pct_female"] = cs.pct_female;
        cj["age_mean"] = cs.age_mean;
        cj["age_sd"] = cs.age_sd;
        if (cs.age_vs_rest) {
            cj["age_t"] = cs.age_vs_rest->t;
            cj["age_p"] = cs.age_vs_rest->p;
            cj["significant"] = cs.significant;
        } else {
            cj["note"] = cs.note;
        }
        j["clusters"].push_back(std::move(cj));
    }
    std::ofstream os = detail::open_output(paths.assignments());
    os << j.dump(2) << '\n';

    write_similarity_csv(paths.similarity_csv(), art.model.w, art.subject_ids);
    write_heatmap_svg(paths.heatmap_svg(), art.model, art.subject_ids);
    std::ofstream t1 = detail::open_output(paths.table1_txt());
    t1 << render_table1(art.stats);
}

// ----------------------------------------------------------------------------
// train: window store + assignments -> two-phase MT-NN model bundle
// ----------------------------------------------------------------------------

inline std::map<std::string, int> load_assignment_map(const std::filesystem::path& path,
                                                      std::size_t& c_out) {
    std::ifstream is(path);
    if (!is)
        throw Error(ErrorCode::missing_artifact,
                    "missing assignments: " + path.string() + " (run `profile` first)");
    std::map<std::string, int> m;
    try {
        nlohmann::json j;
        is >> j;
        c_out = j.at("c").get<std::size_t>();
        for (const auto& sj : j.at("subjects"))
            m[sj.at("id").get<std::string>()] = sj.at("cluster").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::schema, std::string("assignments: invalid JSON: ") + e.what());
    }
    return m;
}

// Column range of the stored 290-D vector for a modality.
inline std::pair<std::size_t, std::size_t> modality_columns(Modality m) {
    switch (m) {
        case Modality::physio: return {0, kPhysioDim};
        case Modality::video: return {kPhysioDim, kMultimodalDim};
        default: return {0, kMultimodalDim};
    }
}

struct TrainingTensors {
    DataSlice train, val, test;
    std::vector<std::uint32_t> test_subject;  // store subject index per test row
    std::vector<double> test_t0;
};

// Assembles modality-sliced tensors; windows of subjects without an assignment
// (e.g. excluded during profiling) are dropped with a warning.
inline TrainingTensors build_tensors(const WindowStore& ws,
                                     const std::map<std::string, int>& assign, Modality modality,
                                     bool balance, std::uint64_t seed) {
    std::vector<int> subj_cluster(ws.subjects.size(), -1);
    std::size_t unassigned = 0;
    for (std::size_t i = 0; i < ws.subjects.size(); ++i) {
        auto it = assign.find(ws.subjects[i].id);
        if (it == assign.end())
            ++unassigned;
        else
            subj_cluster[i] = it->second;
    }
    if (unassigned > 0)
        log_warn("train: %zu subjects have no cluster assignment; their windows are dropped",
                 unassigned);

    std::vector<WindowFeatures> wins;
    wins.reserve(ws.windows.size());
    for (const WindowFeatures& w : ws.windows)
        if (subj_cluster[w.subject_idx] >= 0) wins.push_back(w);
    if (balance) wins = balance_training_set(std::move(wins), seed);

    const auto [c0, c1] = modality_columns(modality);
    const std::size_t dim = c1 - c0;
    std::array<std::size_t, 3> counts{};
    for (const WindowFeatures& w : wins) ++counts[static_cast<std::size_t>(w.split)];

    TrainingTensors t;
    t.train.x = Matrix(counts[0], dim);
    t.val.x = Matrix(counts[1], dim);
    t.test.x = Matrix(counts[2], dim);
    std::array<std::size_t, 3> at{};
    for (const WindowFeatures& w : wins) {
        const auto s = static_cast<std::size_t>(w.split);
        DataSlice& slice = (s == 0) ? t.train : (s == 1) ? t.val : t.test;
        const std::size_t r = at[s]++;
        for (std::size_t j = 0; j < dim; ++j) slice.x(r, j) = w.features[c0 + j];
        slice.y.push_back(static_cast<double>(w.label));
        slice.cluster.push_back(subj_cluster[w.subject_idx]);
        if (s == 2) {
            t.test_subject.push_back(w.subject_idx);
            t.test_t0.push_back(w.t0);
        }
    }
    return t;
}

inline void write_loss_curves(const std::filesystem::path& path, const TrainResult& tr) {
    std::ofstream os = detail::open_output(path);
    os << "phase,head,epoch,train_mae,val_mae\n";
    for (const EpochLog& e : tr.phase1)
        os << "1,0," << e.epoch << ',' << format_double(e.train_mae) << ','
           << format_double(e.val_mae) << '\n';
    for (std::size_t k = 0; k < tr.phase2.size(); ++k)
        for (const EpochLog& e : tr.phase2[k])
            os << "2," << k << ',' << e.epoch << ',' << format_double(e.train_mae) << ','
               << format_double(e.val_mae) << '\n';
}

inline void run_train(const Config& cfg, const std::filesystem::path& out_dir) {
    const RunPaths paths(out_dir);
    const WindowStore ws = load_window_store(paths.windows_bin());
    std::size_t c = 0;
    const std::map<std::string, int> assign = load_assignment_map(paths.assignments(), c);
    const Modality modality = parse_modality(cfg.model.modalities);
    TrainingTensors tensors =
        build_tensors(ws, assign, modality, cfg.windows.balance, cfg.seed);
    const MtnnHyper hyper = to_hyper(cfg, tensors.train.x.cols());
    log_info("train: %zu train / %zu val / %zu test windows, input dim %zu, c=%zu",
             tensors.train.x.rows(), tensors.val.x.rows(), tensors.test.x.rows(),
             hyper.input_dim, c);
    TrainResult tr = train_mtnn(tensors.train, tensors.val, c, hyper);

    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.seed;
    j["modalities"] = cfg.model.modalities;
    j["c"] = c;
    j["subject_clusters"] = nlohmann::ordered_json::object();
    for (const auto& [id, cl] : assign) j["subject_clusters"][id] = cl;
    j["warnings"] = tr.warnings;
    j["model"] = model_to_json(tr.model);
    std::ofstream os = detail::open_output(paths.model_json());
    os << j.dump(2) << '\n';
    write_loss_curves(paths.loss_curves_csv(), tr);
}

// ----------------------------------------------------------------------------
// evaluate: test-split predictions + Table-2-style report (+ paired t-tests
// against a baseline run's predictions aligned on subject/t0)
// ----------------------------------------------------------------------------

struct ModelBundle {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string modalities;
    std::size_t c = 1;
    std::map<std::string, int> subject_clusters;
    MtnnModel model;
};

inline ModelBundle load_model_bundle(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is)
        throw Error(ErrorCode::missing_artifact,
                    "missing model bundle: " + path.string() + " (run `train` first)");
    ModelBundle b;
    try {
        nlohmann::json j;
        is >> j;
        if (j.at("format_version").get<int>() != 1)
            throw Error(ErrorCode::schema, "model bundle: unsupported format_version");
        b.config_hash = j.at("config_hash").get<std::string>();
        b.seed = j.at("seed").get<std::uint64_t>();
        b.modalities = j.at("modalities").get<std::string>();
        b.c = j.at("c").get<std::size_t>();
        for (const auto& [id, cl] : j.at("subject_clusters").items())
            b.subject_clusters[id] = cl.get<int>();
        b.model = model_from_json(j.at("model"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::schema, std::string("model bundle: invalid JSON: ") + e.what());
    }
    return b;
}

struct PredictionRow {
    std::string subject;
    double t0 = 0.0;
    int cluster = 0;
    double label = 0.0;
    double pred = 0.0;
};

inline void write_predictions_csv(const std::filesystem::path& path,
                                  std::span<const PredictionRow> rows) {
    std::ofstream os = detail::open_output(path);
    os << "subject,t0,cluster,label,pred\n";
    for (const PredictionRow& r : rows)
        os << r.subject << ',' << format_double(r.t0) << ',' << r.cluster << ','
           << format_double(r.label) << ',' << format_double(r.pred) << '\n';
}

inline std::vector<PredictionRow> load_predictions_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is)
        throw Error(ErrorCode::missing_artifact,
                    "missing baseline predictions: " + path.string());
    std::vector<PredictionRow> rows;
    std::string line;
    std::vector<std::string_view> f;
    if (!std::getline(is, line) || line.find("subject,t0,cluster,label,pred") != 0)
        throw Error(ErrorCode::schema, "predictions csv: bad header in " + path.string());
    std::size_t ln = 1;
    while (std::getline(is, line)) {
        ++ln;
        if (line.empty()) continue;
        detail::split_csv_line(line, f);
        if (f.size() != 5)
            throw Error(ErrorCode::schema, detail::loc(path, ln) + ": expected 5 fields");
        PredictionRow r;
        r.subject = std::string(f[0]);
        r.t0 = parse_double(f[1], "t0");
        r.cluster = static_cast<int>(parse_long(f[2], "cluster"));
        r.label = parse_double(f[3], "label");
        r.pred = parse_double(f[4], "pred");
        rows.push_back(std::move(r));
    }
    return rows;
}

struct ScopeReport {
    std::string scope;
    EvalReport eval;
};

struct EvaluateResult {
    std::vector<PredictionRow> predictions;
    std::vector<ScopeReport> scopes;  // overall first, then per cluster
};

inline EvaluateResult evaluate_bundle(const ModelBundle& bundle, const WindowStore& ws,
                                      const Config& cfg) {
    const Modality modality = parse_modality(bundle.modalities);
    TrainingTensors tensors =
        build_tensors(ws, bundle.subject_clusters, modality, /*balance=*/false, cfg.seed);
    if (tensors.test.x.rows() == 0)
        throw Error(ErrorCode::invalid_data, "evaluate: no test windows available");
    const std::vector<double> preds =
        predict_rows(bundle.model, tensors.test.x, tensors.test.cluster);

    EvaluateResult out;
    out.predictions.reserve(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        PredictionRow r;
        r.subject = ws.subjects[tensors.test_subject[i]].id;
        r.t0 = tensors.test_t0[i];
        r.cluster = tensors.test.cluster[i];
        r.label = tensors.test.y[i];
        r.pred = preds[i];
        out.predictions.push_back(std::move(r));
    }

    // ICC subject means need per-subject groupings.
    auto scope_report = [&](const std::string& name, auto&& keep) {
        std::vector<double> p, y;
        std::map<std::uint32_t, std::pair<std::vector<double>, std::vector<double>>> by_subj;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            if (!keep(i)) continue;
            p.push_back(preds[i]);
            y.push_back(tensors.test.y[i]);
            auto& bs = by_subj[tensors.test_subject[i]];
            bs.first.push_back(preds[i]);
            bs.second.push_back(tensors.test.y[i]);
        }
        ScopeReport sr;
        sr.scope = name;
        if (p.empty()) {
            sr.eval.scope = name;
            sr.eval.mae = sr.eval.rmse = std::numeric_limits<double>::quiet_NaN();
            return sr;
        }
        sr.eval = evaluate_scope(name, p, y);
        std::vector<double> subj_icc;
        for (auto& [_, bs] : by_subj)
            if (auto icc = icc31(bs.first, bs.second)) subj_icc.push_back(*icc);
        if (!subj_icc.empty()) sr.eval.icc31_subject_mean = mean_of(subj_icc);
        return sr;
    };
    out.scopes.push_back(scope_report("overall", [](std::size_t) { return true; }));
    for (std::size_t k = 0; k < bundle.c; ++k)
        out.scopes.push_back(scope_report("cluster " + std::to_string(k), [&](std::size_t i) {
            return tensors.test.cluster[i] == static_cast<int>(k);
        }));
    return out;
}

// Pairs this run's test windows with a baseline run's on (subject, t0) and
// runs a paired two-tail t-test on per-window absolute errors.
inline std::optional<TestResult> compare_to_baseline(std::span<const PredictionRow> self,
                                                     std::span<const PredictionRow> base,
                                                     const char* scope_note) {
    std::map<std::pair<std::string, std::string>, const PredictionRow*> index;
    for (const PredictionRow& r : base) index[{r.subject, format_double(r.t0)}] = &r;
    std::vector<double> a, b;
    for (const PredictionRow& r : self) {
        auto it = index.find({r.subject, format_double(r.t0)});
        if (it == index.end()) continue;
        a.push_back(std::fabs(r.pred - r.label));
        b.push_back(std::fabs(it->second->pred - it->second->label));
    }
    if (a.size() < 2) {
        log_warn("evaluate: %s: fewer than 2 aligned windows with the baseline; t-test skipped",
                 scope_note);
        return std::nullopt;
    }
    return paired_two_tail_ttest(a, b);
}

inline void run_evaluate(const Config& cfg, const std::filesystem::path& out_dir) {
    const RunPaths paths(out_dir);
    const WindowStore ws = load_window_store(paths.windows_bin());
    const ModelBundle bundle = load_model_bundle(paths.model_json());
    EvaluateResult ev = evaluate_bundle(bundle, ws, cfg);
    write_predictions_csv(paths.predictions_csv(), ev.predictions);

    std::vector<PredictionRow> baseline;
    const bool have_baseline = !cfg.eval.baseline_run.empty();
    if (have_baseline)
        baseline = load_predictions_csv(std::filesystem::path(cfg.eval.baseline_run) /
                                        "predictions.csv");

    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.seed;
    j["modalities"] = bundle.modalities;
    j["c"] = bundle.c;
    j["n_test_windows"] = ev.predictions.size();
    j["scopes"] = nlohmann::ordered_json::array();

    std::string txt;
    char buf[256];
    txt += "Scope            N      MAE     RMSE   ICC(3,1)   ICC subj-mean\n";
    txt += "----------------------------------------------------------------\n";
    for (const ScopeReport& sr : ev.scopes) {
        nlohmann::ordered_json sj;
        sj["scope"] = sr.scope;
        sj["n_windows"] = sr.eval.n_windows;
        sj["mae"] = sr.eval.mae;
        sj["rmse"] = sr.eval.rmse;
        if (sr.eval.icc31)
            sj["icc31"] = *sr.eval.icc31;
        else
            sj["icc31"] = nullptr;
        if (sr.eval.icc31_subject_mean)
            sj["icc31_subject_mean"] = *sr.eval.icc31_subject_mean;
        else
            sj["icc31_subject_mean"] = nullptr;

        auto fmt_opt = [](const std::optional<double>& v) {
            char b[32];
            if (v)
                std::snprintf(b, sizeof b, "%8.4f", *v);
            else
                std::snprintf(b, sizeof b, "%8s", "-");
            return std::string(b);
        };
        std::snprintf(buf, sizeof buf, "%-12s %6zu  %7.4f  %7.4f   %s       %s\n",
                      sr.scope.c_str(), sr.eval.n_windows, sr.eval.mae, sr.eval.rmse,
                      fmt_opt(sr.eval.icc31).c_str(), fmt_opt(sr.eval.icc31_subject_mean).c_str());
        txt += buf;

        if (have_baseline) {
            std::vector<PredictionRow> scoped;
            for (const PredictionRow& r : ev.predictions)
                if (sr.scope == "overall" ||
                    ("cluster " + std::to_string(r.cluster)) == sr.scope)
                    scoped.push_back(r);
            if (const auto t = compare_to_baseline(scoped, baseline, sr.scope.c_str())) {
                sj["baseline_t"] = t->t;
                sj["baseline_p"] = t->p;
                sj["baseline_significant"] = (t->p <= 0.05);
                std::snprintf(buf, sizeof buf,
                              "    vs baseline: t = %+0.4f, p = %0.6f%s\n", t->t, t->p,
                              t->p <= 0.05 ? "  (significant at p <= 0.05)" : "");
                txt += buf;
            }
        }
        j["scopes"].push_back(std::move(sj));
    }
    if (have_baseline) j["baseline_run"] = cfg.eval.baseline_run;

    std::ofstream os = detail::open_output(paths.report_json());
    os << j.dump(2) << '\n';
    std::ofstream ts = detail::open_output(paths.report_txt());
    ts << txt;
}

inline void run_pipeline(const Config& cfg, const std::filesystem::path& out_dir) {
    run_synth(cfg, out_dir);
    run_extract(cfg, out_dir);
    run_profile(cfg, out_dir);
    run_train(cfg, out_dir);
    run_evaluate(cfg, out_dir);
}

}  // namespace painpipe
