// ============================================================================
// config.hpp - single JSON config with sections {data, windows, profiling,
// model, training, eval}; CLI flags override scalars; canonical hash recorded
// in every artifact.
// ============================================================================
#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include "json.hpp"
#include "painpipe/common.hpp"
#include "painpipe/mtnn.hpp"
#include "painpipe/synth.hpp"

namespace painpipe {

enum class Modality { physio, video, multimodal };

inline const char* modality_name(Modality m) {
    switch (m) {
        case Modality::physio: return "physio";
        case Modality::video: return "video";
        default: return "multimodal";
    }
}

inline Modality parse_modality(const std::string& s) {
    if (s == "physio") return Modality::physio;
    if (s == "video") return Modality::video;
    if (s == "multimodal") return Modality::multimodal;
    throw Error(ErrorCode::invalid_argument,
                "modalities must be one of physio|video|multimodal, got '" + s + "'");
}

struct Config {
    std::uint64_t seed = 1;

    struct Data {
        std::string manifest = "data/manifest.json";
        // Synthetic-cohort knobs (used by `synth`).
        std::size_t n_subjects = 12;
        std::size_t n_profiles = 3;
        double noise = 1.0;
        double fs_bio = 512.0;
        double video_fps = 25.0;
        std::size_t stimuli_per_level = 20;
        double base_scr_amp = 1.0;
    } data;

    struct Windows {
        double window_s = 6.0;
        double step_s = 0.5;
        double stim_duration_s = 4.0;
        std::size_t train_stimuli = 48;
        std::size_t val_stimuli = 10;
        bool balance = true;
    } windows;

    struct Profiling {
        std::size_t c = 3;
        double gamma = 0.18;
        int kmeans_restarts = 10;
        double profile_window_s = 8.0;
        std::size_t profile_max_stimuli = 48;
    } profiling;

    struct Model {
        std::size_t h1 = 64;
        std::size_t h2 = 32;
        double dropout = 0.2;
        std::string modalities = "multimodal";
    } model;

    struct Training {
        double lr = 1e-3;
        std::size_t batch = 128;
        int max_epochs = 200;
        int patience = 10;
    } training;

    struct Eval {
        std::string baseline_run;  // empty = no baseline comparison
    } eval;
};

namespace detail {

// Strict section reader: every key must be known and of the right type.
class SectionReader {
public:
    SectionReader(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j.is_object())
            throw Error(ErrorCode::schema, "config section '" + name_ + "' must be an object");
        for (const auto& [key, _] : j.items()) unknown_.insert(key);
    }
    template <typename T>
    void get(const char* key, T& out) {
        unknown_.erase(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->get<T>();
        } catch (const nlohmann::json::exception&) {
            throw Error(ErrorCode::schema,
                        "config key '" + name_ + "." + key + "' has the wrong type");
        }
    }
    void finish() const {
        if (!unknown_.empty())
            throw Error(ErrorCode::schema,
                        "config section '" + name_ + "' has unknown key '" + *unknown_.begin() + "'");
    }

private:
    const nlohmann::json& j_;
    std::string name_;
    std::set<std::string> unknown_;
};

}  // namespace detail

inline Config config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorCode::schema, "config root must be a JSON object");
    Config cfg;
    static const std::set<std::string> known_sections = {"seed",      "data",  "windows",
                                                         "profiling", "model", "training", "eval"};
    for (const auto& [key, _] : j.items())
        if (!known_sections.count(key))
            throw Error(ErrorCode::schema, "config has unknown top-level key '" + key + "'");
    if (auto it = j.find("seed"); it != j.end()) {
        if (!it->is_number_unsigned())
            throw Error(ErrorCode::schema, "config key 'seed' must be a nonnegative integer");
        cfg.seed = it->get<std::uint64_t>();
    }
    if (auto it = j.find("data"); it != j.end()) {
        detail::SectionReader r(*it, "data");
        r.get("manifest", cfg.data.manifest);
        r.get("n_subjects", cfg.data.n_subjects);
        r.get("n_profiles", cfg.data.n_profiles);
        r.get("noise", cfg.data.noise);
        r.get("fs_bio", cfg.data.fs_bio);
        r.get("video_fps", cfg.data.video_fps);
        r.get("stimuli_per_level", cfg.data.stimuli_per_level);
        r.get("base_scr_amp", cfg.data.base_scr_amp);
        r.finish();
    }
    if (auto it = j.find("windows"); it != j.end()) {
        detail::SectionReader r(*it, "windows");
        r.get("window_s", cfg.windows.window_s);
        r.get("step_s", cfg.windows.step_s);
        r.get("stim_duration_s", cfg.windows.stim_duration_s);
        r.get("train_stimuli", cfg.windows.train_stimuli);
        r.get("val_stimuli", cfg.windows.val_stimuli);
        r.get("balance", cfg.windows.balance);
        r.finish();
    }
    if (auto it = j.find("profiling"); it != j.end()) {
        detail::SectionReader r(*it, "profiling");
        r.get("c", cfg.profiling.c);
        r.get("gamma", cfg.profiling.gamma);
        r.get("kmeans_restarts", cfg.profiling.kmeans_restarts);
        r.get("profile_window_s", cfg.profiling.profile_window_s);
        r.get("profile_max_stimuli", cfg.profiling.profile_max_stimuli);
        r.finish();
    }
    if (auto it = j.find("model"); it != j.end()) {
        detail::SectionReader r(*it, "model");
        r.get("h1", cfg.model.h1);
        r.get("h2", cfg.model.h2);
        r.get("dropout", cfg.model.dropout);
        r.get("modalities", cfg.model.modalities);
        r.finish();
    }
    if (auto it = j.find("training"); it != j.end()) {
        detail::SectionReader r(*it, "training");
        r.get("lr", cfg.training.lr);
        r.get("batch", cfg.training.batch);
        r.get("max_epochs", cfg.training.max_epochs);
        r.get("patience", cfg.training.patience);
        r.finish();
    }
    if (auto it = j.find("eval"); it != j.end()) {
        detail::SectionReader r(*it, "eval");
        r.get("baseline_run", cfg.eval.baseline_run);
        r.finish();
    }
    parse_modality(cfg.model.modalities);  // validate
    if (cfg.profiling.c < 1) throw Error(ErrorCode::schema, "profiling.c must be >= 1");
    if (cfg.profiling.gamma <= 0.0) throw Error(ErrorCode::schema, "profiling.gamma must be > 0");
    if (cfg.windows.window_s <= 0.0 || cfg.windows.step_s <= 0.0)
        throw Error(ErrorCode::schema, "windows.window_s and windows.step_s must be > 0");
    return cfg;
}

inline Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::missing_artifact, "cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::schema, "config file " + path + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

// Canonical serialization: fixed key order, no indentation. The FNV-1a hash of
// this string is the config identity recorded in every artifact.
inline nlohmann::ordered_json config_to_json(const Config& c) {
    nlohmann::ordered_json j;
    j["seed"] = c.seed;
    j["data"] = {{"manifest", c.data.manifest},
                 {"n_subjects", c.data.n_subjects},
                 {"n_profiles", c.data.n_profiles},
                 {"noise", c.data.noise},
                 {"fs_bio", c.data.fs_bio},
                 {"video_fps", c.data.video_fps},
                 {"stimuli_per_level", c.data.stimuli_per_level},
                 {"base_scr_amp", c.data.base_scr_amp}};
    j["windows"] = {{"window_s", c.windows.window_s},
                    {"step_s", c.windows.step_s},
                    {"stim_duration_s", c.windows.stim_duration_s},
                    {"train_stimuli", c.windows.train_stimuli},
                    {"val_stimuli", c.windows.val_stimuli},
                    {"balance", c.windows.balance}};
    j["profiling"] = {{"c", c.profiling.c},
                      {"gamma", c.profiling.gamma},
                      {"kmeans_restarts", c.profiling.kmeans_restarts},
                      {"profile_window_s", c.profiling.profile_window_s},
                      {"profile_max_stimuli", c.profiling.profile_max_stimuli}};
    j["model"] = {{"h1", c.model.h1},
                  {"h2", c.model.h2},
                  {"dropout", c.model.dropout},
                  {"modalities", c.model.modalities}};
    j["training"] = {{"lr", c.training.lr},
                     {"batch", c.training.batch},
                     {"max_epochs", c.training.max_epochs},
                     {"patience", c.training.patience}};
    j["eval"] = {{"baseline_run", c.eval.baseline_run}};
    return j;
}

inline std::string config_hash(const Config& c) {
    const std::string dump = config_to_json(c).dump();
    return hex64(fnv1a64(dump));
}

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> c;
    std::optional<double> gamma;
    std::optional<std::string> modalities;
    std::optional<std::string> baseline_run;
};

inline void apply_overrides(Config& cfg, const CliOverrides& o) {
    if (o.seed) cfg.seed = *o.seed;
    if (o.c) {
        if (*o.c < 1) throw Error(ErrorCode::invalid_argument, "--c must be >= 1");
        cfg.profiling.c = *o.c;
    }
    if (o.gamma) {
        if (*o.gamma <= 0.0) throw Error(ErrorCode::invalid_argument, "--gamma must be > 0");
        cfg.profiling.gamma = *o.gamma;
    }
    if (o.modalities) {
        parse_modality(*o.modalities);
        cfg.model.modalities = *o.modalities;
    }
    if (o.baseline_run) cfg.eval.baseline_run = *o.baseline_run;
}

inline SynthConfig to_synth_config(const Config& c) {
    SynthConfig s;
    s.n_subjects = c.data.n_subjects;
    s.n_profiles = c.data.n_profiles;
    s.noise = c.data.noise;
    s.seed = c.seed;
    s.fs_bio = c.data.fs_bio;
    s.video_fps = c.data.video_fps;
    s.stimuli_per_level = c.data.stimuli_per_level;
    s.stim_duration_s = c.windows.stim_duration_s;
    s.base_scr_amp = c.data.base_scr_amp;
    return s;
}

inline MtnnHyper to_hyper(const Config& c, std::size_t input_dim) {
    MtnnHyper h;
    h.input_dim = input_dim;
    h.h1 = c.model.h1;
    h.h2 = c.model.h2;
    h.dropout = c.model.dropout;
    h.lr = c.training.lr;
    h.batch = c.training.batch;
    h.max_epochs = c.training.max_epochs;
    h.patience = c.training.patience;
    h.seed = c.seed;
    return h;
}

}  // namespace painpipe
