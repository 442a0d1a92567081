#pragma once

// Command implementations behind the CLI: dataset generation, stage training,
// inference, and the perception-distortion sweep. Each command writes its
// resolved configuration next to its outputs and is idempotent for a fixed
// config and seed.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "recongen/config.hpp"
#include "recongen/controller.hpp"
#include "recongen/data.hpp"
#include "recongen/nn/checkpoint.hpp"
#include "recongen/pipeline.hpp"
#include "recongen/training.hpp"

namespace recongen::cli {

enum ExitCode : int {
    exit_ok = 0,
    exit_config_error = 2,
    exit_missing_prerequisite = 3,
    exit_runtime_failure = 4,
};

namespace detail {

inline std::filesystem::path out_dir(const RunConfig& cfg) {
    return cfg.get_str("out", "runs/default");
}

inline uint64_t master_seed(const RunConfig& cfg) { return cfg.get_seed("seed", 1); }

inline int workers(const RunConfig& cfg) {
    return cfg.get_int("workers", std::min(2, default_worker_count()));
}

inline DatasetSpec dataset_spec(const RunConfig& cfg) {
    DatasetSpec spec;
    spec.dir = cfg.get_str("data.dir", (out_dir(cfg) / "dataset").string());
    spec.train_count = cfg.get_int("data.train_count", 200);
    spec.val_count = cfg.get_int("data.val_count", 40);
    spec.test_count = cfg.get_int("data.test_count", 40);
    spec.size = cfg.get_int("data.size", 64);
    spec.recipe = texture_recipe_from_string(cfg.get_str("data.recipe", "mix"));
    spec.texture.channels = cfg.get_int("data.channels", 3);
    // sigma follows the 0-255 convention and is divided by 255 internally
    if (cfg.get_str("data.noise", "gaussian") == "signal_dependent") {
        spec.noise = NoiseModel::signal_dependent(cfg.get_double("data.noise_a", 0.02),
                                                  cfg.get_double("data.noise_b", 0.06));
    } else {
        spec.noise = NoiseModel::gaussian_255(cfg.get_double("data.sigma", 25.0));
    }
    spec.seed = cfg.get_seed("data.seed", master_seed(cfg));
    return spec;
}

inline std::vector<ImagePair> load_required_split(const std::filesystem::path& dataset_dir,
                                                  const std::string& split) {
    std::filesystem::path manifest = dataset_dir / (split + ".manifest");
    if (!std::filesystem::exists(manifest)) {
        throw MissingPrerequisite("dataset manifest not found: " + manifest.string() +
                                  " (run gen-data first)");
    }
    return load_split(manifest);
}

inline TrainConfig train_config(const RunConfig& cfg, const std::string& section) {
    TrainConfig tc;
    tc.learning_rate = cfg.get_double(section + ".lr", 1e-3);
    tc.weight_decay = cfg.get_double(section + ".weight_decay", 1e-4);
    tc.ema_decay = cfg.get_double(section + ".ema_decay", 0.995);
    tc.batch_size = cfg.get_int(section + ".batch_size", 8);
    tc.max_steps = cfg.get_int(section + ".max_steps", 2000);
    tc.patch_size = cfg.get_int(section + ".patch_size", 48);
    tc.augment_data = cfg.get_bool(section + ".augment", true);
    tc.continuous_gamma = cfg.get_bool(section + ".continuous_gamma", false);
    tc.grad_clip = cfg.get_double(section + ".grad_clip", 1.0);
    tc.eval_interval = cfg.get_int(section + ".eval_interval", 200);
    tc.plateau_delta_db = cfg.get_double(section + ".plateau_delta_db", 0.01);
    tc.plateau_window = cfg.get_int(section + ".plateau_window", 5);
    tc.condition = cfg.get_str(section + ".condition", "noisy") == "initial_estimate"
                       ? Condition::initial_estimate
                       : Condition::noisy;
    tc.seed = cfg.get_seed(section + ".seed", master_seed(cfg));
    tc.workers = workers(cfg);
    return tc;
}

inline nn::ReconNetConfig recon_net_config(const RunConfig& cfg) {
    nn::ReconNetConfig rc;
    rc.channels = cfg.get_int("data.channels", 3);
    rc.depth = cfg.get_int("recon.depth", 2);
    rc.base_channels = cfg.get_int("recon.base_channels", 16);
    rc.block_kind = nn::block_kind_from_string(cfg.get_str("recon.block_kind", "plain_conv"));
    return rc;
}

inline nn::EpsNetConfig eps_net_config(const RunConfig& cfg) {
    nn::EpsNetConfig ec;
    ec.d_channels = cfg.get_int("data.channels", 3);
    ec.condition_channels = ec.d_channels;
    ec.depth = cfg.get_int("diffusion.depth", 2);
    ec.base_channels = cfg.get_int("diffusion.base_channels", 16);
    ec.gamma_embedding_dim = cfg.get_int("diffusion.gamma_embedding_dim", 32);
    ec.block_kind = nn::block_kind_from_string(cfg.get_str("diffusion.block_kind", "plain_conv"));
    return ec;
}

inline NoiseSchedule training_schedule(const RunConfig& cfg) {
    return make_linear_schedule(cfg.get_int("diffusion.num_steps", 2000),
                                cfg.get_double("diffusion.beta_start", 1e-6),
                                cfg.get_double("diffusion.beta_end", 0.01));
}

inline ScheduleFamily inference_family(const RunConfig& cfg) {
    return ScheduleFamily{cfg.get_double("inference.beta_start", 1e-4),
                          cfg.get_double("inference.beta_end", 0.15)};
}

inline nn::ReconNet load_recon(const RunConfig& cfg, bool use_ema = true) {
    std::filesystem::path dir = cfg.get_str("recon.ckpt", (out_dir(cfg) / "recon_ckpt").string());
    if (!std::filesystem::exists(dir / "manifest.txt")) {
        throw MissingPrerequisite("reconstructor checkpoint not found: " + dir.string() +
                                  " (run `train --stage recon` first)");
    }
    return nn::recon_from_checkpoint(nn::load_checkpoint(dir), use_ema);
}

inline nn::EpsNet load_eps(const RunConfig& cfg, bool use_ema = true) {
    std::filesystem::path dir = cfg.get_str("diffusion.ckpt", (out_dir(cfg) / "eps_ckpt").string());
    if (!std::filesystem::exists(dir / "manifest.txt")) {
        throw MissingPrerequisite("diffusion checkpoint not found: " + dir.string() +
                                  " (run `train --stage diffusion` first)");
    }
    return nn::eps_from_checkpoint(nn::load_checkpoint(dir), use_ema);
}

inline std::optional<nn::ControllerNet> load_controller(const RunConfig& cfg, bool required) {
    std::filesystem::path dir =
        cfg.get_str("controller.ckpt", (out_dir(cfg) / "controller_ckpt").string());
    if (!std::filesystem::exists(dir / "manifest.txt")) {
        if (required) {
            throw MissingPrerequisite("controller checkpoint not found: " + dir.string() +
                                      " (run `train --stage controller` first)");
        }
        return std::nullopt;
    }
    return nn::controller_from_checkpoint(nn::load_checkpoint(dir), false);
}

inline PipelineBundle make_bundle(const RunConfig& cfg, bool want_controller) {
    PipelineBundle bundle;
    bundle.recon = load_recon(cfg);
    bundle.gen = load_eps(cfg);
    if (want_controller) bundle.controller = load_controller(cfg, false);
    bundle.family = inference_family(cfg);
    bundle.tile = cfg.get_int("inference.tile", kDefaultTileSize);
    // default overlap follows the tile when someone shrinks it below 8x the
    // nominal overlap
    bundle.overlap = cfg.get_int("inference.overlap", std::min(kDefaultTileOverlap, bundle.tile / 8));
    bundle.master_seed = cfg.get_seed("inference.seed", master_seed(cfg));
    bundle.condition = cfg.get_str("diffusion.condition", "noisy") == "initial_estimate"
                           ? Condition::initial_estimate
                           : Condition::noisy;
    bundle.final_step_noiseless = cfg.get_bool("inference.final_step_noiseless", true);
    return bundle;
}

inline RandomFeatureMetric metric_from(const RunConfig& cfg) {
    return RandomFeatureMetric(cfg.get_seed("metric.seed", 17),
                               cfg.get_int("metric.num_filters", 24));
}

}  // namespace detail

// --- commands ---------------------------------------------------------------------

inline int cmd_gen_data(const RunConfig& cfg) {
    DatasetSpec spec = detail::dataset_spec(cfg);
    generate_dataset(spec);
    cfg.write_snapshot(spec.dir);
    std::cout << "dataset written to " << spec.dir.string() << " (train " << spec.train_count
              << ", val " << spec.val_count << ", test " << spec.test_count << ")\n";
    return exit_ok;
}

inline int cmd_train_recon(const RunConfig& cfg) {
    DatasetSpec spec = detail::dataset_spec(cfg);
    auto train_set = detail::load_required_split(spec.dir, "train");
    auto val_set = detail::load_required_split(spec.dir, "val");
    TrainConfig tc = detail::train_config(cfg, "recon");
    tc.stage = TrainStage::reconstructive;
    ReconTrainResult res = train_reconstructive(train_set, val_set, detail::recon_net_config(cfg), tc);

    std::filesystem::path dir = cfg.get_str("recon.ckpt", (detail::out_dir(cfg) / "recon_ckpt").string());
    auto ema_map = res.ema.as_map();
    nn::save_checkpoint(dir, "recon", nn::recon_config_map(res.net.cfg), res.net.named_params(),
                        &ema_map);
    std::ofstream log(dir / "train_log.tsv");
    write_train_log(log, res.log);
    cfg.write_snapshot(dir);
    std::cout << "reconstructor trained for " << res.steps_run << " steps; final val PSNR "
              << (res.log.empty() ? 0.0 : res.log.back().psnr) << " dB -> " << dir.string() << "\n";
    return exit_ok;
}

inline int cmd_train_diffusion(const RunConfig& cfg) {
    DatasetSpec spec = detail::dataset_spec(cfg);
    auto train_set = detail::load_required_split(spec.dir, "train");
    nn::ReconNet recon = detail::load_recon(cfg);
    NoiseSchedule schedule = detail::training_schedule(cfg);
    TrainConfig tc = detail::train_config(cfg, "diffusion");
    tc.stage = TrainStage::generative;
    GenTrainResult res = train_generative(train_set, recon, schedule, detail::eps_net_config(cfg), tc);

    std::filesystem::path dir = cfg.get_str("diffusion.ckpt", (detail::out_dir(cfg) / "eps_ckpt").string());
    auto ema_map = res.ema.as_map();
    nn::save_checkpoint(dir, "eps", nn::eps_config_map(res.net.cfg), res.net.named_params(), &ema_map);
    std::ofstream sched(dir / "train_schedule.txt");
    write_schedule_manifest(sched, schedule);
    std::ofstream log(dir / "train_log.tsv");
    write_train_log(log, res.log);
    cfg.write_snapshot(dir);
    std::cout << "noise predictor trained; final loss "
              << (res.log.empty() ? 0.0 : res.log.back().loss) << " -> " << dir.string() << "\n";
    return exit_ok;
}

inline int cmd_train_controller(const RunConfig& cfg) {
    DatasetSpec spec = detail::dataset_spec(cfg);
    PipelineBundle bundle = detail::make_bundle(cfg, /*want_controller=*/false);
    RandomFeatureMetric metric = detail::metric_from(cfg);

    std::filesystem::path data_dir =
        cfg.get_str("controller.step_dataset", (detail::out_dir(cfg) / "step_dataset").string());
    std::vector<StepDatasetEntry> entries;
    if (std::filesystem::exists(data_dir / "index.tsv")) {
        entries = load_step_dataset(data_dir);
        std::cout << "loaded " << entries.size() << " collected step labels from "
                  << data_dir.string() << "\n";
    } else {
        auto train_set = detail::load_required_split(spec.dir, "train");
        int want = cfg.get_int("controller.collect_count", 256);
        int patch = cfg.get_int("controller.input_size", spec.size);
        std::vector<ImagePair> patches;
        Rng crng(derive_seed(detail::master_seed(cfg), 0xc011));
        for (int i = 0; static_cast<int>(patches.size()) < want; ++i) {
            const ImagePair& img = train_set[static_cast<size_t>(i) % train_set.size()];
            Rng prng = crng.child(static_cast<uint64_t>(i));
            patches.push_back(img.second.height() == patch ? img : crop_patch(img, patch, prng));
        }
        entries = collect_step_dataset(patches, bundle, metric, detail::workers(cfg));
        save_step_dataset(data_dir, entries);
        std::cout << "collected " << entries.size() << " step labels -> " << data_dir.string() << "\n";
    }

    nn::ControllerNetConfig ncfg;
    ncfg.input_size = cfg.get_int("controller.input_size", spec.size);
    ncfg.in_ch = cfg.get_int("data.channels", 3);
    ncfg.base_channels = cfg.get_int("controller.base_channels", 16);
    ControllerTrainConfig ctc;
    ctc.learning_rate = cfg.get_double("controller.lr", 1e-3);
    ctc.weight_decay = cfg.get_double("controller.weight_decay", 1e-4);
    ctc.batch_size = cfg.get_int("controller.batch_size", 16);
    ctc.max_steps = cfg.get_int("controller.max_steps", 400);
    ctc.holdout_fraction = cfg.get_double("controller.holdout_fraction", 0.2);
    ctc.class_weighting = cfg.get_bool("controller.class_weighting", true);
    ctc.seed = cfg.get_seed("controller.seed", detail::master_seed(cfg));
    ControllerTrainResult res = train_controller(entries, ncfg, ctc);

    std::filesystem::path dir =
        cfg.get_str("controller.ckpt", (detail::out_dir(cfg) / "controller_ckpt").string());
    nn::save_checkpoint(dir, "controller", nn::controller_config_map(res.net.cfg),
                        res.net.named_params(), nullptr, res.net.named_buffers());
    std::ofstream rep(dir / "accuracy.txt");
    rep << "holdout_accuracy = " << res.holdout_accuracy << "\n";
    rep << "majority_baseline = " << res.majority_baseline << "\n";
    rep << "constant_predictor = " << (res.constant_predictor ? "true" : "false") << "\n";
    rep << "confusion_rows_true_cols_pred =\n";
    for (int t = 0; t < kNumStepClasses; ++t) {
        for (int p = 0; p < kNumStepClasses; ++p) {
            rep << res.confusion[static_cast<size_t>(t)][static_cast<size_t>(p)]
                << (p + 1 == kNumStepClasses ? '\n' : '\t');
        }
    }
    cfg.write_snapshot(dir);
    std::cout << "controller held-out accuracy " << res.holdout_accuracy << " (majority "
              << res.majority_baseline << ") -> " << dir.string() << "\n";
    return exit_ok;
}

inline int cmd_train_ablation(const RunConfig& cfg) {
    std::string mode_str = cfg.get_str("ablation.mode", "two_stage");
    TrainStage mode;
    if (mode_str == "joint") mode = TrainStage::joint;
    else if (mode_str == "intermediate_supervision") mode = TrainStage::intermediate_supervision;
    else if (mode_str == "two_stage") mode = TrainStage::two_stage;
    else throw ConfigError("ablation.mode must be joint, intermediate_supervision or two_stage");

    DatasetSpec spec = detail::dataset_spec(cfg);
    auto train_set = detail::load_required_split(spec.dir, "train");
    auto val_set = detail::load_required_split(spec.dir, "val");
    NoiseSchedule schedule = detail::training_schedule(cfg);
    TrainConfig tc = detail::train_config(cfg, "ablation");
    AblationResult res = train_ablation_mode(mode, train_set, val_set, schedule,
                                             detail::recon_net_config(cfg),
                                             detail::eps_net_config(cfg), tc);

    std::filesystem::path dir = detail::out_dir(cfg) / ("ablation_" + mode_str);
    auto recon_ema = res.recon_ema.as_map();
    auto gen_ema = res.gen_ema.as_map();
    nn::save_checkpoint(dir / "recon_ckpt", "recon", nn::recon_config_map(res.recon.cfg),
                        res.recon.named_params(), &recon_ema);
    nn::save_checkpoint(dir / "eps_ckpt", "eps", nn::eps_config_map(res.gen.cfg),
                        res.gen.named_params(), &gen_ema);
    cfg.write_snapshot(dir);
    std::cout << "ablation mode " << mode_str << " trained -> " << dir.string() << "\n";
    return exit_ok;
}

inline int cmd_train(const RunConfig& cfg) {
    std::string stage = cfg.get_str("stage", cfg.get_str("train.stage", ""));
    if (stage == "recon") return cmd_train_recon(cfg);
    if (stage == "diffusion") return cmd_train_diffusion(cfg);
    if (stage == "controller") return cmd_train_controller(cfg);
    if (stage == "ablation") return cmd_train_ablation(cfg);
    throw ConfigError("stage must be one of recon, diffusion, controller, ablation (got '" +
                      stage + "')");
}

inline int cmd_denoise(const RunConfig& cfg) {
    DatasetSpec spec = detail::dataset_spec(cfg);
    bool use_controller = !cfg.get_bool("no_controller", false);
    PipelineBundle bundle = detail::make_bundle(cfg, use_controller);
    if (use_controller && cfg.get_bool("require_controller", false) && !bundle.controller) {
        throw MissingPrerequisite("controller checkpoint required but not found");
    }
    std::optional<int> fixed_step;
    if (cfg.has("fixed_step")) fixed_step = cfg.get_int("fixed_step", 0);

    std::string split = cfg.get_str("denoise.split", "test");
    auto inputs = detail::load_required_split(spec.dir, split);
    int limit = cfg.get_int("denoise.limit", static_cast<int>(inputs.size()));
    inputs.resize(std::min<size_t>(inputs.size(), static_cast<size_t>(limit)));

    std::filesystem::path dir = detail::out_dir(cfg) / "denoised";
    std::filesystem::create_directories(dir);
    RandomFeatureMetric metric = detail::metric_from(cfg);
    std::vector<std::pair<Tensor, Tensor>> scored;
    double mean_steps = 0.0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        PipelineBundle local = bundle;
        local.master_seed = derive_seed(bundle.master_seed, 0xde44, i);
        DenoiseResult res = denoise_image(local, inputs[i].first, fixed_step, detail::workers(cfg));
        write_png(dir / ("denoised_" + std::to_string(i) + ".png"), res.output.clamped(0.0, 1.0));
        std::ofstream sm(dir / ("steps_" + std::to_string(i) + ".txt"));
        for (int r = 0; r < res.grid_rows; ++r) {
            for (int c = 0; c < res.grid_cols; ++c) {
                sm << res.step_map[static_cast<size_t>(r * res.grid_cols + c)].value
                   << (c + 1 == res.grid_cols ? '\n' : '\t');
            }
        }
        mean_steps += res.mean_steps;
        scored.emplace_back(res.output, inputs[i].second);
    }
    mean_steps /= static_cast<double>(inputs.size());
    MetricReport report = pd_report(scored, metric);
    std::ofstream rep(dir / "metrics.tsv");
    write_report(rep, report);
    cfg.write_snapshot(dir);
    std::cout << "denoised " << inputs.size() << " images; mean PSNR " << report.aggregate.psnr
              << " dB, perceptual " << report.aggregate.perceptual << ", mean steps " << mean_steps
              << " -> " << dir.string() << "\n";
    return exit_ok;
}

inline int cmd_sweep(const RunConfig& cfg) {
    DatasetSpec spec = detail::dataset_spec(cfg);
    PipelineBundle bundle = detail::make_bundle(cfg, /*want_controller=*/false);
    RandomFeatureMetric metric = detail::metric_from(cfg);
    auto val = detail::load_required_split(spec.dir, cfg.get_str("sweep.split", "val"));
    int limit = cfg.get_int("sweep.limit", static_cast<int>(val.size()));
    val.resize(std::min<size_t>(val.size(), static_cast<size_t>(limit)));

    std::vector<int> steps;
    {
        std::istringstream ss(cfg.get_str("sweep.steps", "0,10,20,30,40,50,60,70,80,90,100"));
        std::string tok;
        while (std::getline(ss, tok, ',')) steps.push_back(std::stoi(tok));
    }
    auto rows = sweep_fixed_steps(bundle, val, steps, metric, detail::workers(cfg));

    std::filesystem::path dir = detail::out_dir(cfg) / "sweep";
    std::filesystem::create_directories(dir);
    std::ofstream table(dir / "steps.tsv");
    table << "step\tpsnr\tssim\tperceptual\n";
    table.precision(10);
    std::ofstream scatter(dir / "pd_scatter.txt");
    scatter.precision(10);
    for (const auto& r : rows) {
        table << r.step << "\t" << r.psnr << "\t" << r.ssim << "\t" << r.perceptual << "\n";
        scatter << r.perceptual << " " << r.psnr << "\n";
    }

    // optional schedule search over candidate endpoints at the best step
    if (cfg.get_bool("sweep.schedule_search", false)) {
        std::vector<ScheduleCandidate> cands;
        std::istringstream ss(cfg.get_str("sweep.candidates", ""));
        std::string tok;
        while (std::getline(ss, tok, ';')) {
            std::istringstream cs(tok);
            ScheduleCandidate c;
            char comma;
            if (cs >> c.num_steps >> comma >> c.beta_start >> comma >> c.beta_end) cands.push_back(c);
        }
        if (!cands.empty()) {
            std::vector<double> scores;
            NoiseSchedule best = schedule_grid_search(cands, val, bundle, metric,
                                                      detail::workers(cfg), &scores);
            std::ofstream search(dir / "schedule_search.txt");
            search << "# num_steps beta_start beta_end score\n";
            search.precision(12);
            for (size_t i = 0; i < cands.size(); ++i) {
                search << cands[i].num_steps << " " << cands[i].beta_start << " "
                       << cands[i].beta_end << " " << scores[i] << "\n";
            }
            search << "winner steps=" << best.num_steps << " beta_start=" << best.beta_start
                   << " beta_end=" << best.beta_end << "\n";
        }
    }
    cfg.write_snapshot(dir);
    std::cout << "sweep over " << steps.size() << " steps on " << val.size() << " pairs -> "
              << dir.string() << "\n";
    return exit_ok;
}

// Minimal end-to-end chain for CI: gen-data, both training stages, the
// controller, denoising and a sweep, all at micro scale.
inline int cmd_demo(const RunConfig& base) {
    RunConfig cfg = base;
    auto set_default = [&](const std::string& k, const std::string& v) {
        if (!cfg.has(k)) cfg.set(k, v);
    };
    set_default("out", "runs/demo");
    set_default("data.train_count", "24");
    set_default("data.val_count", "8");
    set_default("data.test_count", "8");
    set_default("data.size", "32");
    set_default("data.channels", "3");
    set_default("recon.base_channels", "8");
    set_default("recon.depth", "1");
    set_default("recon.max_steps", "200");
    set_default("recon.batch_size", "4");
    set_default("recon.patch_size", "24");
    set_default("recon.eval_interval", "100");
    set_default("diffusion.base_channels", "8");
    set_default("diffusion.depth", "1");
    set_default("diffusion.gamma_embedding_dim", "16");
    set_default("diffusion.max_steps", "200");
    set_default("diffusion.batch_size", "4");
    set_default("diffusion.patch_size", "24");
    set_default("diffusion.num_steps", "400");
    set_default("controller.collect_count", "24");
    set_default("controller.input_size", "32");
    set_default("controller.base_channels", "8");
    set_default("controller.max_steps", "80");
    set_default("inference.tile", "64");
    set_default("denoise.limit", "4");
    set_default("sweep.limit", "4");
    set_default("sweep.steps", "0,10,20");
    int rc = cmd_gen_data(cfg);
    if (rc == exit_ok) rc = cmd_train_recon(cfg);
    if (rc == exit_ok) rc = cmd_train_diffusion(cfg);
    if (rc == exit_ok) rc = cmd_train_controller(cfg);
    if (rc == exit_ok) rc = cmd_denoise(cfg);
    if (rc == exit_ok) rc = cmd_sweep(cfg);
    if (rc == exit_ok) std::cout << "demo chain complete under " << detail::out_dir(cfg).string() << "\n";
    return rc;
}

// Dispatch with the documented exit-code mapping.
inline int run_command(const std::string& name, const RunConfig& cfg) {
    try {
        if (name == "gen-data") return cmd_gen_data(cfg);
        if (name == "train") return cmd_train(cfg);
        if (name == "denoise") return cmd_denoise(cfg);
        if (name == "sweep") return cmd_sweep(cfg);
        if (name == "demo") return cmd_demo(cfg);
        std::cerr << "unknown command: " << name << "\n";
        return exit_config_error;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config_error;
    } catch (const MissingPrerequisite& e) {
        std::cerr << "missing prerequisite: " << e.what() << "\n";
        return exit_missing_prerequisite;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_runtime_failure;
    }
}

}  // namespace recongen::cli
