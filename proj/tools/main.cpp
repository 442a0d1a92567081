// recongen: two-stage denoising with a reconstructive estimate plus
// diffusion-generated residual detail and an adaptive per-patch step budget.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "recongen/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"reconstruct-and-generate image denoising"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out;
    std::string seed;
    std::string device_hint;
    std::vector<std::string> overrides;
    int fixed_step = -1;
    bool no_controller = false;

    app.add_option("--config", config_path, "flat key=value config file with [sections]");
    app.add_option("--out", out, "output directory (default runs/default)");
    app.add_option("--seed", seed, "master seed; falls back to env RNG_SEED, then 1");
    app.add_option("--set", overrides, "override a config key, e.g. --set recon.lr=2e-3");
    app.add_option("--device-hint", device_hint,
                   "accelerator hint, recorded in the run config (this build is CPU-only)");

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic noisy/clean dataset");
    CLI::App* train = app.add_subcommand("train", "train a pipeline stage");
    std::string stage;
    train->add_option("--stage", stage, "recon | diffusion | controller | ablation");
    CLI::App* denoise = app.add_subcommand("denoise", "run inference over a dataset split");
    denoise->add_option("--fixed-step", fixed_step, "bypass the controller with a fixed step budget");
    denoise->add_flag("--no-controller", no_controller, "ignore any controller checkpoint");
    CLI::App* sweep = app.add_subcommand("sweep", "perception-distortion table over the step grid");
    CLI::App* demo = app.add_subcommand("demo", "micro-scale end-to-end chain for CI");

    CLI11_PARSE(app, argc, argv);

    recongen::RunConfig cfg;
    try {
        if (!config_path.empty()) cfg.load_file(config_path);
        for (const auto& o : overrides) cfg.apply_override(o);
        if (!out.empty()) cfg.set("out", out);
        if (!seed.empty()) {
            cfg.set("seed", seed);
        } else if (!cfg.has("seed")) {
            const char* env = std::getenv("RNG_SEED");
            if (env != nullptr) cfg.set("seed", env);
        }
        if (!device_hint.empty()) cfg.set("device_hint", device_hint);
        if (!stage.empty()) cfg.set("stage", stage);
        if (fixed_step >= 0) cfg.set("fixed_step", std::to_string(fixed_step));
        if (no_controller) cfg.set("no_controller", "true");
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return recongen::cli::exit_config_error;
    }

    std::string name;
    if (gen->parsed()) name = "gen-data";
    else if (train->parsed()) name = "train";
    else if (denoise->parsed()) name = "denoise";
    else if (sweep->parsed()) name = "sweep";
    else if (demo->parsed()) name = "demo";

    return recongen::cli::run_command(name, cfg);
}
