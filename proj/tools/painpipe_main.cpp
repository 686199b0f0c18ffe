// painpipe - personalized multimodal pain estimation pipeline.
//
// Subcommands: synth, extract, profile, train, evaluate, pipeline.
// A single JSON config drives every stage; the listed flags override config
// scalars. Log verbosity comes from the PAINPIPE_LOG environment variable
// (error|warn|info|debug).

#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "painpipe/pipeline.hpp"

namespace {

int exit_code_for(painpipe::ErrorCode c) {
    switch (c) {
        case painpipe::ErrorCode::schema: return 2;
        case painpipe::ErrorCode::missing_artifact: return 3;
        case painpipe::ErrorCode::invalid_data: return 4;
        default: return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"painpipe: personalized multimodal pain estimation"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "run";
    painpipe::CliOverrides ov;
    std::uint64_t seed_flag = 0;
    std::size_t c_flag = 0;
    double gamma_flag = 0.0;
    std::string modalities_flag, baseline_flag;

    app.add_option("--config", config_path, "Path to the JSON config (defaults used if omitted)");
    app.add_option("--out-dir", out_dir, "Run output directory")->capture_default_str();
    auto* seed_opt = app.add_option("--seed", seed_flag, "Override the config seed");
    auto* c_opt = app.add_option("--c", c_flag, "Override the number of profiles/clusters");
    auto* gamma_opt = app.add_option("--gamma", gamma_flag, "Override the RBF similarity gamma");
    auto* mod_opt = app.add_option("--modalities", modalities_flag,
                                   "Feature set: physio|video|multimodal")
                        ->check(CLI::IsMember({"physio", "video", "multimodal"}));
    auto* base_opt = app.add_option("--baseline-run", baseline_flag,
                                    "Directory of a previous run to compare against (evaluate)");

    CLI::App* sub_synth = app.add_subcommand("synth", "Generate a synthetic cohort");
    CLI::App* sub_extract = app.add_subcommand("extract", "Extract window features");
    CLI::App* sub_profile = app.add_subcommand("profile", "Cluster subjects into pain profiles");
    CLI::App* sub_train = app.add_subcommand("train", "Train the clustered multi-task model");
    CLI::App* sub_evaluate = app.add_subcommand("evaluate", "Evaluate on the test era");
    CLI::App* sub_pipeline = app.add_subcommand("pipeline", "Run all stages in order");
    // allow the shared flags in either position: `painpipe --config X pipeline`
    // and `painpipe pipeline --config X`
    for (CLI::App* s :
         {sub_synth, sub_extract, sub_profile, sub_train, sub_evaluate, sub_pipeline})
        s->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        painpipe::Config cfg =
            config_path.empty() ? painpipe::Config{} : painpipe::load_config(config_path);
        if (seed_opt->count()) ov.seed = seed_flag;
        if (c_opt->count()) ov.c = c_flag;
        if (gamma_opt->count()) ov.gamma = gamma_flag;
        if (mod_opt->count()) ov.modalities = modalities_flag;
        if (base_opt->count()) ov.baseline_run = baseline_flag;
        painpipe::apply_overrides(cfg, ov);

        if (sub_synth->parsed()) painpipe::run_synth(cfg, out_dir);
        if (sub_extract->parsed()) painpipe::run_extract(cfg, out_dir);
        if (sub_profile->parsed()) painpipe::run_profile(cfg, out_dir);
        if (sub_train->parsed()) painpipe::run_train(cfg, out_dir);
        if (sub_evaluate->parsed()) painpipe::run_evaluate(cfg, out_dir);
        if (sub_pipeline->parsed()) painpipe::run_pipeline(cfg, out_dir);
        return 0;
    } catch (const painpipe::Error& e) {
        std::fprintf(stderr, "painpipe: error [%s]: %s\n", painpipe::error_code_name(e.code),
                     e.what());
        return exit_code_for(e.code);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "painpipe: error: %s\n", e.what());
        return 1;
    }
}
