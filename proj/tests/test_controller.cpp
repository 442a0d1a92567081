#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "recongen/controller.hpp"
#include "recongen/data.hpp"

using namespace recongen;
using namespace recongen::nn;

namespace {

PipelineBundle tiny_bundle(uint64_t seed) {
    ReconNetConfig rcfg;
    rcfg.channels = 1;
    rcfg.depth = 1;
    rcfg.base_channels = 4;
    EpsNetConfig ecfg;
    ecfg.d_channels = 1;
    ecfg.condition_channels = 1;
    ecfg.depth = 1;
    ecfg.base_channels = 4;
    ecfg.gamma_embedding_dim = 8;
    ecfg.zero_init_head = false;
    PipelineBundle bundle;
    bundle.recon = ReconNet(rcfg);
    bundle.gen = EpsNet(ecfg);
    Rng rng(seed);
    bundle.recon.init(rng);
    bundle.gen.init(rng);
    bundle.family = ScheduleFamily{1e-4, 0.1};
    bundle.master_seed = seed;
    return bundle;
}

// flat patches labelled step 0, fixed-contrast checkerboards labelled step
// 100; guaranteed separable under the added noise
std::vector<StepDatasetEntry> separable_entries(int per_class, int size, uint64_t seed) {
    std::vector<StepDatasetEntry> entries;
    Rng master(seed);
    for (int i = 0; i < 2 * per_class; ++i) {
        Rng rng = master.child(static_cast<uint64_t>(i));
        StepDatasetEntry e;
        bool textured = i % 2 == 1;
        Tensor y(size, size, 1);
        if (textured) {
            int cell = static_cast<int>(rng.uniform_int(3, 6));
            int phase = static_cast<int>(rng.uniform_int(0, cell - 1));
            for (int yy = 0; yy < size; ++yy)
                for (int xx = 0; xx < size; ++xx) {
                    bool odd = (((yy + phase) / cell) + ((xx + phase) / cell)) % 2 != 0;
                    y.at(yy, xx, 0) = odd ? 0.25 : 0.75;
                }
        } else {
            y.fill(rng.uniform(0.2, 0.8));
        }
        e.x_patch = snap_to_f32(add_noise(y, NoiseModel::gaussian_255(25.0), master.child(i, 9).seed()));
        e.label = StepLabel::from_value(textured ? 100 : 0);
        e.scores.fill(textured ? 1.0 : 0.0);
        e.scores[static_cast<size_t>(e.label.class_index)] = 0.0;
        entries.push_back(std::move(e));
    }
    return entries;
}

}  // namespace

TEST_CASE("argmin label resolves ties to the smallest step") {
    std::array<double, kNumStepClasses> scores;
    scores.fill(0.3);
    scores[4] = 0.1;
    scores[7] = 0.1;
    CHECK(argmin_label(scores).value == 40);
    scores.fill(0.2);
    CHECK(argmin_label(scores).value == 0);
}

TEST_CASE("collect_step_dataset") {
    PipelineBundle bundle = tiny_bundle(61);
    TextureOptions opt;
    opt.channels = 1;
    RandomFeatureMetric metric(5);

    SUBCASE("a perfect initial estimate is labelled step 0") {
        Rng rng(62);
        Tensor x = generate_texture(16, TextureRecipe::field, rng, opt);
        Tensor y = bundle.recon.forward(x);  // recon output == ground truth
        auto entries = collect_step_dataset({{x, y}}, bundle, metric);
        REQUIRE(entries.size() == 1);
        CHECK(entries[0].label.value == 0);
        CHECK(entries[0].scores[0] == 0.0);
    }
    SUBCASE("labels re-derive from the stored scores and are reproducible") {
        std::vector<ImagePair> pairs;
        Rng master(63);
        for (int i = 0; i < 5; ++i) {
            Rng rng = master.child(static_cast<uint64_t>(i));
            Tensor y = generate_texture(16, TextureRecipe::mix, rng, opt);
            Tensor x = snap_to_f32(add_noise(y, NoiseModel::gaussian_255(25.0), master.child(i, 1).seed()));
            pairs.push_back({std::move(x), std::move(y)});
        }
        auto a = collect_step_dataset(pairs, bundle, metric, /*workers=*/1);
        auto b = collect_step_dataset(pairs, bundle, metric, /*workers=*/2);
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].label.value == b[i].label.value);
            CHECK(a[i].scores == b[i].scores);
            CHECK(argmin_label(a[i].scores).value == a[i].label.value);
        }
    }
    SUBCASE("empty input throws") {
        CHECK_THROWS_AS(collect_step_dataset({}, bundle, metric), std::invalid_argument);
    }
}

TEST_CASE("step dataset persistence round-trips") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "recongen_stepdata_test";
    fs::remove_all(dir);
    auto entries = separable_entries(3, 16, 71);
    save_step_dataset(dir, entries);
    auto back = load_step_dataset(dir);
    REQUIRE(back.size() == entries.size());
    for (size_t i = 0; i < entries.size(); ++i) {
        CHECK(bit_equal(back[i].x_patch, entries[i].x_patch));
        CHECK(back[i].label.value == entries[i].label.value);
        for (int k = 0; k < kNumStepClasses; ++k) {
            CHECK(back[i].scores[static_cast<size_t>(k)] ==
                  doctest::Approx(entries[i].scores[static_cast<size_t>(k)]).epsilon(1e-15));
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("controller training") {
    ControllerNetConfig net_cfg;
    net_cfg.input_size = 16;
    net_cfg.in_ch = 1;
    net_cfg.base_channels = 12;

    SUBCASE("linearly separable two-class data reaches 95% held-out accuracy") {
        auto entries = separable_entries(80, 16, 81);
        ControllerTrainConfig cfg;
        cfg.max_steps = 300;
        cfg.batch_size = 12;
        cfg.seed = 82;
        ControllerTrainResult res = train_controller(entries, net_cfg, cfg);
        CHECK_FALSE(res.constant_predictor);
        CHECK(res.holdout_accuracy >= 0.95);
    }
    SUBCASE("randomly permuted labels collapse to the majority baseline") {
        auto entries = separable_entries(40, 16, 83);
        Rng rng(84);
        for (auto& e : entries) {
            e.label = StepLabel::from_class(static_cast<int>(rng.uniform_int(0, 10)));
        }
        ControllerTrainConfig cfg;
        cfg.max_steps = 120;
        cfg.batch_size = 12;
        cfg.seed = 85;
        ControllerTrainResult res = train_controller(entries, net_cfg, cfg);
        CHECK(res.holdout_accuracy <= res.majority_baseline + 0.2);
    }
    SUBCASE("fixed seed reproduces accuracy and parameters") {
        auto entries = separable_entries(20, 16, 86);
        ControllerTrainConfig cfg;
        cfg.max_steps = 60;
        cfg.batch_size = 8;
        cfg.seed = 87;
        ControllerTrainResult a = train_controller(entries, net_cfg, cfg);
        ControllerTrainResult b = train_controller(entries, net_cfg, cfg);
        CHECK(a.holdout_accuracy == b.holdout_accuracy);
        auto pa = a.net.named_params();
        auto pb = b.net.named_params();
        for (size_t i = 0; i < pa.size(); ++i) CHECK(bit_equal(*pa[i].value, *pb[i].value));
    }
    SUBCASE("single-class data emits a warned constant predictor") {
        auto entries = separable_entries(10, 16, 88);
        for (auto& e : entries) e.label = StepLabel::from_value(0);
        ControllerTrainConfig cfg;
        cfg.seed = 89;
        ControllerTrainResult res = train_controller(entries, net_cfg, cfg);
        CHECK(res.constant_predictor);
        Rng rng(90);
        Tensor any = rng.normal_tensor({16, 16, 1}).clamped(0.0, 1.0);
        CHECK(predict_step(res.net, any).value == 0);
        CHECK(res.holdout_accuracy == 1.0);
    }
    SUBCASE("predictions always land on the step grid") {
        auto entries = separable_entries(15, 16, 91);
        ControllerTrainConfig cfg;
        cfg.max_steps = 40;
        cfg.seed = 92;
        ControllerTrainResult res = train_controller(entries, net_cfg, cfg);
        Rng rng(93);
        for (int i = 0; i < 10; ++i) {
            Tensor p = rng.normal_tensor({16, 16, 1}).clamped(0.0, 1.0);
            StepLabel s = predict_step(res.net, p);
            CHECK(s.value % 10 == 0);
            CHECK(s.value >= 0);
            CHECK(s.value <= 100);
            CHECK(s.value == 10 * s.class_index);
        }
    }
    SUBCASE("empty dataset throws") {
        ControllerTrainConfig cfg;
        CHECK_THROWS_AS(train_controller({}, net_cfg, cfg), std::invalid_argument);
    }
}

TEST_CASE("step-0 bypass composes through the whole pipeline") {
    PipelineBundle bundle = tiny_bundle(95);
    bundle.tile = 16;
    bundle.overlap = 4;
    // constant predictor forcing class 0
    ControllerNetConfig ccfg;
    ccfg.input_size = 16;
    ccfg.in_ch = 1;
    ccfg.base_channels = 4;
    ControllerNet ctrl(ccfg);
    Rng rng(96);
    ctrl.init(rng);
    ctrl.fc.w.fill(0.0);
    ctrl.fc.b.fill(0.0);
    ctrl.fc.b[0] = 5.0;
    bundle.controller = std::move(ctrl);

    Tensor x = rng.normal_tensor({40, 28, 1}).clamped(0.0, 1.0);
    DenoiseResult res = denoise_image(bundle, x);
    for (const auto& s : res.step_map) CHECK(s.value == 0);
    CHECK(bit_equal(res.output, bundle.recon.forward(x)));
}
