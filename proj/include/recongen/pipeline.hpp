#pragma once

// End-to-end inference: reconstruct once, predict a step budget per tile,
// generate the residual detail per tile with the reverse diffusion chain,
// stitch, and add. Also hosts the inference-time schedule search.

#include <optional>
#include <stdexcept>
#include <vector>

#include "recongen/diffusion.hpp"
#include "recongen/metrics.hpp"
#include "recongen/nn/networks.hpp"
#include "recongen/parallel.hpp"
#include "recongen/rng.hpp"
#include "recongen/tiling.hpp"
#include "recongen/training.hpp"

namespace recongen {

// --- step labels ---------------------------------------------------------------

constexpr int kNumStepClasses = 11;
constexpr int kStepGridStride = 10;  // classes map to steps {0, 10, ..., 100}

struct StepLabel {
    int value = 0;        // diffusion step budget
    int class_index = 0;  // value / 10

    static StepLabel from_class(int idx) {
        if (idx < 0 || idx >= kNumStepClasses) throw std::invalid_argument("StepLabel: class out of range");
        return {idx * kStepGridStride, idx};
    }
    static StepLabel from_value(int v) {
        if (v % kStepGridStride != 0) throw std::invalid_argument("StepLabel: value not on the step grid");
        return from_class(v / kStepGridStride);
    }
};

inline std::vector<int> step_grid() {
    std::vector<int> g;
    for (int k = 0; k < kNumStepClasses; ++k) g.push_back(k * kStepGridStride);
    return g;
}

// Argmax class of the controller output, ties to the smallest index.
inline StepLabel predict_step(nn::ControllerNet& controller, const Tensor& x_patch) {
    Tensor probs = controller.forward(x_patch);
    int best = 0;
    for (int k = 1; k < static_cast<int>(probs.size()); ++k) {
        if (probs[static_cast<size_t>(k)] > probs[static_cast<size_t>(best)]) best = k;
    }
    return StepLabel::from_class(best);
}

// --- bundle ----------------------------------------------------------------------

// Inference schedules are built fresh per requested step count between the
// family's endpoints.
struct ScheduleFamily {
    double beta_start = 1e-4;
    double beta_end = 0.15;
    NoiseSchedule make(int num_steps) const {
        return make_inference_schedule(num_steps, beta_start, beta_end);
    }
};

struct PipelineBundle {
    nn::ReconNet recon;  // evaluation weights
    nn::EpsNet gen;
    std::optional<nn::ControllerNet> controller;
    ScheduleFamily family;
    int tile = kDefaultTileSize;
    int overlap = kDefaultTileOverlap;
    uint64_t master_seed = 0;
    Condition condition = Condition::noisy;
    bool final_step_noiseless = true;

    void require_consistent() const {
        if (recon.cfg.channels != gen.cfg.d_channels ||
            recon.cfg.channels != gen.cfg.condition_channels) {
            throw std::invalid_argument("PipelineBundle: recon/gen channel configs disagree");
        }
        if (controller && controller->cfg.in_ch != recon.cfg.channels) {
            throw std::invalid_argument("PipelineBundle: controller channel config disagrees");
        }
    }
};

// --- per-patch generation ------------------------------------------------------------

// Reverse chain for one patch given a precomputed reconstruction. The chain
// runs in the model's normalized residual space and the result is scaled back
// by the trained residual_scale. Returns the generated residual (zero tensor
// for step 0).
inline Tensor generate_residual(PipelineBundle& bundle, const Tensor& x_patch, const Tensor& recon_out,
                                int step, Rng& rng) {
    if (step == 0) return Tensor::zeros_like(recon_out);
    NoiseSchedule schedule = bundle.family.make(step);
    const Tensor& cond = bundle.condition == Condition::noisy ? x_patch : recon_out;
    Tensor d = rng.normal_like(recon_out);
    for (int t = step; t >= 1; --t) {
        Tensor eps_hat = bundle.gen.forward(d, cond, schedule.gamma(t));
        d = reverse_step(d, eps_hat, schedule, t, rng, bundle.final_step_noiseless);
    }
    return d * bundle.gen.cfg.residual_scale;
}

// Single-patch inference at an arbitrary step count. Step 0 returns the
// reconstruction bit-exactly.
inline Tensor denoise_patch_steps(PipelineBundle& bundle, const Tensor& x_patch, int steps, Rng& rng) {
    bundle.require_consistent();
    Tensor r = bundle.recon.forward(x_patch);
    if (steps == 0) return r;
    Tensor d = generate_residual(bundle, x_patch, r, steps, rng);
    return r + d;
}

inline Tensor denoise_patch(PipelineBundle& bundle, const Tensor& x_patch, StepLabel step, Rng& rng) {
    return denoise_patch_steps(bundle, x_patch, step.value, rng);
}

// --- full-image inference --------------------------------------------------------------

struct DenoiseResult {
    Tensor output;    // recon + residual (unclamped; clamp at emission time)
    Tensor recon;     // full-image reconstruction
    Tensor residual;  // stitched generated detail
    std::vector<StepLabel> step_map;  // row-major over the tile grid
    int grid_rows = 0, grid_cols = 0;
    double mean_steps = 0.0;
};

// fixed_step overrides the controller (controller bypass); without either,
// the step budget defaults to the maximum grid step.
inline DenoiseResult denoise_image(PipelineBundle& bundle, const Tensor& x,
                                   std::optional<int> fixed_step = std::nullopt, int workers = 1) {
    bundle.require_consistent();
    DenoiseResult res;
    TileLayout layout = plan_tiles(x.height(), x.width(), bundle.tile, bundle.overlap);
    res.grid_rows = layout.rows();
    res.grid_cols = layout.cols();
    res.recon = bundle.recon.forward(x);

    int n = layout.count();
    res.step_map.assign(static_cast<size_t>(n), StepLabel{});
    std::vector<Tensor> residual_tiles(static_cast<size_t>(n));
    parallel_for(static_cast<size_t>(n), workers, [&](size_t i) {
        PipelineBundle local = bundle;  // forward caches are per-instance
        int row = static_cast<int>(i) / layout.cols();
        int col = static_cast<int>(i) % layout.cols();
        Tensor x_tile = cut_tile(x, layout, static_cast<int>(i));
        Tensor r_tile = cut_tile(res.recon, layout, static_cast<int>(i));
        StepLabel step;
        if (fixed_step.has_value()) {
            step = StepLabel::from_value(*fixed_step);
        } else if (local.controller.has_value()) {
            step = predict_step(*local.controller, x_tile);
        } else {
            step = StepLabel::from_class(kNumStepClasses - 1);
        }
        Rng rng(derive_seed(bundle.master_seed, 0x711e, static_cast<uint64_t>(row),
                            static_cast<uint64_t>(col)));
        residual_tiles[i] = generate_residual(local, x_tile, r_tile, step.value, rng);
        res.step_map[i] = step;
    });
    res.residual = stitch(residual_tiles, layout);
    res.output = res.recon + res.residual;
    double total = 0.0;
    for (const auto& s : res.step_map) total += s.value;
    res.mean_steps = total / static_cast<double>(n);
    return res;
}

// --- schedule grid search -----------------------------------------------------------------

struct ScheduleCandidate {
    int num_steps = 0;
    double beta_start = 0.0;
    double beta_end = 0.0;
};

// Mean perceptual distance of the full pipeline at this candidate's step
// count and endpoints over the validation pairs.
inline double evaluate_schedule_candidate(PipelineBundle& bundle, const ScheduleCandidate& cand,
                                          const std::vector<ImagePair>& val_pairs,
                                          const PerceptualMetric& metric, int workers = 1) {
    std::vector<double> scores(val_pairs.size());
    parallel_for(val_pairs.size(), workers, [&](size_t i) {
        PipelineBundle local = bundle;
        local.family = ScheduleFamily{cand.beta_start, cand.beta_end};
        Rng rng(derive_seed(bundle.master_seed, 0x5c4ed, i));
        Tensor out = denoise_patch_steps(local, val_pairs[i].first, cand.num_steps, rng);
        scores[i] = metric.distance(out, val_pairs[i].second);
    });
    double sum = 0.0;
    for (double s : scores) sum += s;
    return sum / static_cast<double>(scores.size());
}

// Returns the candidate schedule minimizing mean perceptual distance; ties
// break toward fewer steps.
inline NoiseSchedule schedule_grid_search(const std::vector<ScheduleCandidate>& candidates,
                                          const std::vector<ImagePair>& val_pairs,
                                          PipelineBundle& bundle, const PerceptualMetric& metric,
                                          int workers = 1, std::vector<double>* scores_out = nullptr) {
    if (candidates.empty()) throw std::invalid_argument("schedule_grid_search: empty candidate list");
    if (val_pairs.empty()) throw std::invalid_argument("schedule_grid_search: empty validation set");
    double best_score = 0.0;
    size_t best = 0;
    for (size_t i = 0; i < candidates.size(); ++i) {
        double score = evaluate_schedule_candidate(bundle, candidates[i], val_pairs, metric, workers);
        if (scores_out) scores_out->push_back(score);
        bool better = i == 0 || score < best_score ||
                      (score == best_score && candidates[i].num_steps < candidates[best].num_steps);
        if (better) {
            best_score = score;
            best = i;
        }
    }
    const ScheduleCandidate& c = candidates[best];
    return make_inference_schedule(c.num_steps, c.beta_start, c.beta_end);
}

// --- fixed-step sweeps ------------------------------------------------------------------------

struct SweepRow {
    int step = 0;
    double psnr = 0.0;
    double ssim = 0.0;
    double perceptual = 0.0;
};

// Aggregate metrics of the pipeline at each fixed step over the given pairs.
// Per-pair sampling noise is shared across steps (derived from the pair
// index), so rows differ only through the step budget.
inline std::vector<SweepRow> sweep_fixed_steps(PipelineBundle& bundle,
                                               const std::vector<ImagePair>& pairs,
                                               const std::vector<int>& steps,
                                               const PerceptualMetric& metric, int workers = 1) {
    if (pairs.empty()) throw std::invalid_argument("sweep_fixed_steps: empty pair list");
    std::vector<SweepRow> rows;
    for (int step : steps) {
        std::vector<double> ps(pairs.size()), ss(pairs.size()), pc(pairs.size());
        parallel_for(pairs.size(), workers, [&](size_t i) {
            PipelineBundle local = bundle;
            Rng rng(derive_seed(bundle.master_seed, 0x51eeb, i));
            Tensor out = denoise_patch(local, pairs[i].first, StepLabel::from_value(step), rng);
            ps[i] = psnr(out, pairs[i].second);
            ss[i] = ssim(out, pairs[i].second);
            pc[i] = metric.distance(out, pairs[i].second);
        });
        SweepRow row;
        row.step = step;
        for (size_t i = 0; i < pairs.size(); ++i) {
            row.psnr += ps[i];
            row.ssim += ss[i];
            row.perceptual += pc[i];
        }
        row.psnr /= static_cast<double>(pairs.size());
        row.ssim /= static_cast<double>(pairs.size());
        row.perceptual /= static_cast<double>(pairs.size());
        rows.push_back(row);
    }
    return rows;
}

}  // namespace recongen
