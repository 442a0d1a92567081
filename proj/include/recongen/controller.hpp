#pragma once

// Step-controller lifecycle: grid-search the best step budget per patch to
// build a labelled dataset, train the classifier on it with cross-entropy,
// and persist/reload the collected data for audit.

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "recongen/pipeline.hpp"

namespace recongen {

struct StepDatasetEntry {
    Tensor x_patch;
    StepLabel label;
    std::array<double, kNumStepClasses> scores{};  // perceptual distance per grid step
};

// Re-derive the arg-min label from stored scores; ties go to the smallest step.
inline StepLabel argmin_label(const std::array<double, kNumStepClasses>& scores) {
    int best = 0;
    for (int k = 1; k < kNumStepClasses; ++k) {
        if (scores[static_cast<size_t>(k)] < scores[static_cast<size_t>(best)]) best = k;
    }
    return StepLabel::from_class(best);
}

// Run the trained pipeline at every grid step on each patch and record the
// step with minimum perceptual distance. Sampling noise is derived from the
// patch index, so labels are reproducible and collection parallelizes.
inline std::vector<StepDatasetEntry> collect_step_dataset(const std::vector<ImagePair>& patch_pairs,
                                                          PipelineBundle& bundle,
                                                          const PerceptualMetric& metric,
                                                          int workers = 1) {
    if (patch_pairs.empty()) throw std::invalid_argument("collect_step_dataset: empty input");
    std::vector<StepDatasetEntry> entries(patch_pairs.size());
    parallel_for(patch_pairs.size(), workers, [&](size_t i) {
        PipelineBundle local = bundle;
        const auto& [x, y] = patch_pairs[i];
        StepDatasetEntry e;
        e.x_patch = x;
        Tensor r = local.recon.forward(x);
        for (int k = 0; k < kNumStepClasses; ++k) {
            int step = k * kStepGridStride;
            Rng rng(derive_seed(bundle.master_seed, 0xc011ec7, i, static_cast<uint64_t>(k)));
            Tensor out = step == 0 ? r : r + generate_residual(local, x, r, step, rng);
            e.scores[static_cast<size_t>(k)] = metric.distance(out, y);
        }
        e.label = argmin_label(e.scores);
        entries[i] = std::move(e);
    });
    return entries;
}

// --- persistence -----------------------------------------------------------------

inline void save_step_dataset(const std::filesystem::path& dir,
                              const std::vector<StepDatasetEntry>& entries) {
    std::filesystem::create_directories(dir);
    std::ofstream index(dir / "index.tsv");
    if (!index) throw std::runtime_error("save_step_dataset: cannot open index in " + dir.string());
    index.precision(17);
    for (size_t i = 0; i < entries.size(); ++i) {
        std::string file = "patch_" + std::to_string(i) + ".rgt";
        write_tensor_file(dir / file, entries[i].x_patch);
        index << i << "\t" << entries[i].label.value;
        for (double s : entries[i].scores) index << "\t" << s;
        index << "\n";
    }
}

inline std::vector<StepDatasetEntry> load_step_dataset(const std::filesystem::path& dir) {
    std::ifstream index(dir / "index.tsv");
    if (!index) throw std::runtime_error("load_step_dataset: cannot open index in " + dir.string());
    std::vector<StepDatasetEntry> entries;
    std::string line;
    while (std::getline(index, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        size_t id = 0;
        int value = 0;
        ls >> id >> value;
        StepDatasetEntry e;
        e.label = StepLabel::from_value(value);
        for (int k = 0; k < kNumStepClasses; ++k) ls >> e.scores[static_cast<size_t>(k)];
        if (!ls) throw std::runtime_error("load_step_dataset: corrupt index line: " + line);
        e.x_patch = read_tensor_file(dir / ("patch_" + std::to_string(id) + ".rgt"));
        entries.push_back(std::move(e));
    }
    return entries;
}

// --- classifier training ------------------------------------------------------------

struct ControllerTrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 1e-4;
    int batch_size = 16;
    int max_steps = 400;
    double holdout_fraction = 0.2;
    bool class_weighting = true;  // inverse-frequency loss weights
    uint64_t seed = 1;
};

struct ControllerTrainResult {
    nn::ControllerNet net;
    double holdout_accuracy = 0.0;
    double majority_baseline = 0.0;  // most frequent class share on holdout
    std::array<std::array<int, kNumStepClasses>, kNumStepClasses> confusion{};  // [true][pred]
    bool constant_predictor = false;
};

inline double cross_entropy_batch(const nn::Batch& logits, const std::vector<int>& labels,
                                  const std::vector<double>& class_weights, nn::Batch& dlogits) {
    double loss = 0.0;
    dlogits.clear();
    double batch = static_cast<double>(logits.size());
    for (size_t s = 0; s < logits.size(); ++s) {
        Tensor p = nn::ControllerNet::softmax(logits[s]);
        int y = labels[s];
        double w = class_weights[static_cast<size_t>(y)];
        loss += -w * std::log(std::max(p[static_cast<size_t>(y)], 1e-300)) / batch;
        Tensor d = p;
        d[static_cast<size_t>(y)] -= 1.0;
        for (size_t i = 0; i < d.size(); ++i) d[i] *= w / batch;
        dlogits.push_back(std::move(d));
    }
    return loss;
}

inline ControllerTrainResult train_controller(const std::vector<StepDatasetEntry>& entries,
                                              const nn::ControllerNetConfig& net_cfg,
                                              const ControllerTrainConfig& cfg) {
    if (entries.empty()) throw std::invalid_argument("train_controller: empty dataset");
    ControllerTrainResult result;
    result.net = nn::ControllerNet(net_cfg);
    Rng rng(derive_seed(cfg.seed, 0xc781 + 0));

    // deterministic shuffle -> holdout split
    std::vector<size_t> order(entries.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = order.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
    }
    size_t holdout_n = std::max<size_t>(1, static_cast<size_t>(cfg.holdout_fraction *
                                                               static_cast<double>(entries.size())));
    if (holdout_n >= entries.size()) holdout_n = entries.size() / 2;
    std::vector<size_t> holdout(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout_n));
    std::vector<size_t> train(order.begin() + static_cast<std::ptrdiff_t>(holdout_n), order.end());

    // class statistics on the training portion
    std::array<int, kNumStepClasses> counts{};
    for (size_t i : train) counts[static_cast<size_t>(entries[i].label.class_index)]++;
    int present = 0, majority_class = 0;
    for (int k = 0; k < kNumStepClasses; ++k) {
        if (counts[static_cast<size_t>(k)] > 0) ++present;
        if (counts[static_cast<size_t>(k)] > counts[static_cast<size_t>(majority_class)]) majority_class = k;
    }

    auto fill_holdout_stats = [&](auto&& predict) {
        int correct = 0;
        std::array<int, kNumStepClasses> holdout_counts{};
        for (size_t i : holdout) {
            int truth = entries[i].label.class_index;
            int pred = predict(entries[i].x_patch);
            holdout_counts[static_cast<size_t>(truth)]++;
            result.confusion[static_cast<size_t>(truth)][static_cast<size_t>(pred)]++;
            if (pred == truth) ++correct;
        }
        result.holdout_accuracy = static_cast<double>(correct) / static_cast<double>(holdout.size());
        int max_count = 0;
        for (int c : holdout_counts) max_count = std::max(max_count, c);
        result.majority_baseline = static_cast<double>(max_count) / static_cast<double>(holdout.size());
    };

    if (present < 2) {
        std::cerr << "train_controller: single-class dataset; emitting a constant predictor\n";
        result.constant_predictor = true;
        Rng init_rng(derive_seed(cfg.seed, 0xc781 + 1));
        result.net.init(init_rng);
        result.net.fc.w.fill(0.0);
        result.net.fc.b.fill(0.0);
        result.net.fc.b[static_cast<size_t>(majority_class)] = 1.0;
        fill_holdout_stats([&](const Tensor&) { return majority_class; });
        return result;
    }

    std::vector<double> weights(kNumStepClasses, 1.0);
    if (cfg.class_weighting) {
        for (int k = 0; k < kNumStepClasses; ++k) {
            if (counts[static_cast<size_t>(k)] > 0) {
                weights[static_cast<size_t>(k)] = static_cast<double>(train.size()) /
                                                  (static_cast<double>(present) *
                                                   counts[static_cast<size_t>(k)]);
            }
        }
    }

    Rng init_rng(derive_seed(cfg.seed, 0xc781 + 1));
    result.net.init(init_rng);
    auto params = result.net.named_params();
    AdamW opt;
    opt.lr = cfg.learning_rate;
    opt.weight_decay = cfg.weight_decay;

    for (int step = 0; step < cfg.max_steps; ++step) {
        Rng brng(derive_seed(cfg.seed, 0xba7c, static_cast<uint64_t>(step)));
        nn::Batch batch;
        std::vector<int> labels;
        for (int b = 0; b < cfg.batch_size; ++b) {
            size_t i = train[static_cast<size_t>(brng.uniform_int(0, static_cast<int64_t>(train.size()) - 1))];
            batch.push_back(entries[i].x_patch);
            labels.push_back(entries[i].label.class_index);
        }
        zero_grads(params);
        nn::Batch logits = result.net.forward_logits(batch, /*train=*/true);
        nn::Batch dlogits;
        cross_entropy_batch(logits, labels, weights, dlogits);
        result.net.backward(dlogits);
        opt.step(params);
    }

    fill_holdout_stats([&](const Tensor& patch) { return predict_step(result.net, patch).class_index; });
    return result;
}

}  // namespace recongen
