#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "recongen/data.hpp"
#include "recongen/metrics.hpp"
#include "recongen/pipeline.hpp"
#include "recongen/training.hpp"

using namespace recongen;
using namespace recongen::nn;

namespace {

std::vector<ImagePair> toy_dataset(int n, int size, double sigma_255, uint64_t seed, int channels = 3) {
    TextureOptions opt;
    opt.channels = channels;
    std::vector<ImagePair> pairs;
    Rng master(seed);
    for (int i = 0; i < n; ++i) {
        Rng rng = master.child(static_cast<uint64_t>(i));
        Tensor y = generate_texture(size, TextureRecipe::mix, rng, opt);
        Tensor x = sigma_255 == 0.0
                       ? y
                       : add_noise(y, NoiseModel::gaussian_255(sigma_255), derive_seed(seed, 7, i));
        pairs.push_back({std::move(x), std::move(y)});
    }
    return pairs;
}

bool params_equal(std::vector<NamedParam> a, std::vector<NamedParam> b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (!bit_equal(*a[i].value, *b[i].value)) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("pixel losses") {
    Rng rng(1);
    Tensor y = rng.normal_tensor({6, 6, 3});

    SUBCASE("perfect prediction scores zero") {
        CHECK(loss_reconstructive(y, y, 2) == 0.0);
        CHECK(loss_generative(y, y, 1) == 0.0);
    }
    SUBCASE("constant gaps have closed forms") {
        Tensor pred = y;
        for (size_t i = 0; i < pred.size(); ++i) pred[i] += 0.5;
        CHECK(loss_reconstructive(pred, y, 2) == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(loss_generative(pred, y, 1) == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("random pairs match a scalar accumulation oracle") {
        Tensor pred = rng.normal_tensor({6, 6, 3});
        double acc2 = 0.0, acc1 = 0.0;
        for (int yy = 0; yy < 6; ++yy)
            for (int xx = 0; xx < 6; ++xx)
                for (int c = 0; c < 3; ++c) {
                    double d = y.at(yy, xx, c) - pred.at(yy, xx, c);
                    acc2 += d * d;
                    acc1 += std::abs(d);
                }
        CHECK(loss_reconstructive(pred, y, 2) == doctest::Approx(acc2 / 108).epsilon(1e-14));
        CHECK(loss_generative(pred, y, 1) == doctest::Approx(acc1 / 108).epsilon(1e-14));
    }
    SUBCASE("batch means are permutation invariant") {
        std::vector<Tensor> preds, targets;
        for (int i = 0; i < 5; ++i) {
            preds.push_back(rng.normal_tensor({4, 4, 1}));
            targets.push_back(rng.normal_tensor({4, 4, 1}));
        }
        double forward_order = 0.0, reverse_order = 0.0;
        for (int i = 0; i < 5; ++i) forward_order += loss_lp(preds[static_cast<size_t>(i)], targets[static_cast<size_t>(i)], 2);
        for (int i = 4; i >= 0; --i) reverse_order += loss_lp(preds[static_cast<size_t>(i)], targets[static_cast<size_t>(i)], 2);
        CHECK(forward_order == doctest::Approx(reverse_order).epsilon(1e-14));
    }
    SUBCASE("shape mismatch throws") {
        CHECK_THROWS_AS(loss_reconstructive(Tensor(4, 4, 1), Tensor(4, 5, 1), 2),
                        std::invalid_argument);
    }
}

TEST_CASE("adamw") {
    SUBCASE("zero gradient and zero decay leave parameters unchanged") {
        Tensor p = Tensor::full({4}, 1.5);
        Tensor g({4});
        std::vector<NamedParam> params = {{"p", &p, &g}};
        AdamW opt;
        opt.lr = 0.1;
        for (int i = 0; i < 5; ++i) opt.step(params);
        for (size_t i = 0; i < p.size(); ++i) CHECK(p[i] == 1.5);
    }
    SUBCASE("hand-computed first step: unit gradient moves by ~lr") {
        Tensor p = Tensor::full({1}, 1.0);
        Tensor g = Tensor::full({1}, 1.0);
        std::vector<NamedParam> params = {{"p", &p, &g}};
        AdamW opt;
        opt.lr = 0.1;
        opt.step(params);
        // mhat = 1, vhat = 1 -> step = lr / (1 + 1e-8)
        CHECK(p[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-14));
    }
    SUBCASE("decoupled decay: zero gradient multiplies by (1 - lr*wd) per step") {
        Tensor p = Tensor::full({1}, 2.0);
        Tensor g({1});
        std::vector<NamedParam> params = {{"p", &p, &g}};
        AdamW opt;
        opt.lr = 0.1;
        opt.weight_decay = 0.01;
        double expect = 2.0;
        for (int i = 0; i < 10; ++i) {
            opt.step(params);
            expect *= 1.0 - 0.1 * 0.01;
            CHECK(p[0] == doctest::Approx(expect).epsilon(1e-14));
        }
    }
    SUBCASE("matches a scalar reference on a random gradient sequence") {
        Rng rng(3);
        Tensor p = Tensor::full({1}, 0.7);
        Tensor g({1});
        std::vector<NamedParam> params = {{"p", &p, &g}};
        AdamW opt;
        opt.lr = 0.01;
        opt.weight_decay = 0.02;
        // independent scalar recurrence
        double rp = 0.7, m = 0.0, v = 0.0;
        for (int t = 1; t <= 200; ++t) {
            double grad = rng.normal();
            g[0] = grad;
            opt.step(params);
            m = 0.9 * m + 0.1 * grad;
            v = 0.999 * v + 0.001 * grad * grad;
            double mhat = m / (1.0 - std::pow(0.9, t));
            double vhat = v / (1.0 - std::pow(0.999, t));
            rp -= 0.01 * mhat / (std::sqrt(vhat) + 1e-8);
            rp -= 0.01 * 0.02 * rp;
            CHECK(p[0] == doctest::Approx(rp).epsilon(1e-12));
        }
    }
    SUBCASE("non-finite gradients abort the step with a diagnostic") {
        Tensor p = Tensor::full({2}, 1.0);
        Tensor g = Tensor::full({2}, std::numeric_limits<double>::quiet_NaN());
        std::vector<NamedParam> params = {{"weights", &p, &g}};
        AdamW opt;
        CHECK_THROWS_WITH_AS(opt.step(params),
                             doctest::Contains("non-finite gradient in weights"), std::runtime_error);
    }
}

TEST_CASE("gradient clipping") {
    Tensor p({3});
    Tensor g({3});
    g[0] = 3.0;
    g[1] = 4.0;
    g[2] = 0.0;
    std::vector<NamedParam> params = {{"p", &p, &g}};
    CHECK(global_grad_norm(params) == doctest::Approx(5.0));
    clip_grad_norm(params, 1.0);
    CHECK(global_grad_norm(params) == doctest::Approx(1.0).epsilon(1e-12));
    clip_grad_norm(params, 10.0);  // below the cap: untouched
    CHECK(global_grad_norm(params) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ema") {
    Rng rng(5);
    Tensor p = rng.normal_tensor({8});
    Tensor g({8});
    std::vector<NamedParam> params = {{"p", &p, &g}};

    SUBCASE("decay 0 copies the live parameters") {
        Ema ema(0.0, params);
        for (size_t i = 0; i < p.size(); ++i) p[i] += 1.0;
        ema.update(params);
        CHECK(bit_equal(ema.shadow[0].second, p));
    }
    SUBCASE("constant live values are a geometric fixed point") {
        Ema ema(0.9, params);
        Tensor start = ema.shadow[0].second;
        Tensor target = Tensor::full({8}, 2.0);
        p = target;
        for (int n = 1; n <= 50; ++n) {
            ema.update(params);
            double expect_err = std::pow(0.9, n);
            for (size_t i = 0; i < p.size(); ++i) {
                CHECK(ema.shadow[0].second[i] - 2.0 ==
                      doctest::Approx((start[i] - 2.0) * expect_err).epsilon(1e-10));
            }
        }
    }
    SUBCASE("random sequences match the scalar recurrence") {
        Ema ema(0.97, params);
        double shadow = ema.shadow[0].second[0];
        for (int n = 0; n < 100; ++n) {
            p[0] = rng.normal();
            ema.update(params);
            shadow = 0.97 * shadow + 0.03 * p[0];
            CHECK(ema.shadow[0].second[0] == doctest::Approx(shadow).epsilon(1e-13));
        }
    }
}

TEST_CASE("plateau rule") {
    using recongen::detail::plateaued;
    std::vector<double> rising = {20, 21, 22, 23, 24, 25, 26};
    CHECK_FALSE(plateaued(rising, 5, 0.01));
    std::vector<double> flat = {24, 24.5, 24.503, 24.505, 24.502, 24.504, 24.5045};
    CHECK(plateaued(flat, 5, 0.01));
    std::vector<double> shorter = {20, 21};
    CHECK_FALSE(plateaued(shorter, 5, 0.01));
}

TEST_CASE("reconstructive training") {
    ReconNetConfig net_cfg;
    net_cfg.channels = 1;
    net_cfg.depth = 1;
    net_cfg.base_channels = 8;

    SUBCASE("identity task reaches 40 dB quickly") {
        auto train = toy_dataset(12, 24, 0.0, 101, 1);
        auto val = toy_dataset(4, 24, 0.0, 102, 1);
        TrainConfig cfg;
        cfg.learning_rate = 3e-3;
        cfg.weight_decay = 0.0;
        cfg.ema_decay = 0.9;
        cfg.batch_size = 4;
        cfg.max_steps = 300;
        cfg.patch_size = 16;
        cfg.eval_interval = 100;
        cfg.seed = 9;
        ReconTrainResult res = train_reconstructive(train, val, net_cfg, cfg);
        CHECK(res.log.back().psnr > 40.0);
    }
    SUBCASE("fixed seed gives bit-identical parameters across runs") {
        auto train = toy_dataset(6, 24, 25.0, 103, 1);
        TrainConfig cfg;
        cfg.learning_rate = 1e-3;
        cfg.batch_size = 3;
        cfg.max_steps = 40;
        cfg.patch_size = 16;
        cfg.eval_interval = 40;
        cfg.seed = 5;
        ReconTrainResult a = train_reconstructive(train, {}, net_cfg, cfg);
        ReconTrainResult b = train_reconstructive(train, {}, net_cfg, cfg);
        CHECK(params_equal(a.net.named_params(), b.net.named_params()));
        cfg.seed = 6;
        ReconTrainResult c = train_reconstructive(train, {}, net_cfg, cfg);
        CHECK_FALSE(params_equal(a.net.named_params(), c.net.named_params()));
    }
    SUBCASE("worker count does not change the result") {
        auto train = toy_dataset(6, 24, 25.0, 104, 1);
        TrainConfig cfg;
        cfg.learning_rate = 1e-3;
        cfg.batch_size = 4;
        cfg.max_steps = 30;
        cfg.patch_size = 16;
        cfg.eval_interval = 30;
        cfg.seed = 3;
        cfg.workers = 1;
        ReconTrainResult a = train_reconstructive(train, {}, net_cfg, cfg);
        cfg.workers = 2;
        ReconTrainResult b = train_reconstructive(train, {}, net_cfg, cfg);
        CHECK(params_equal(a.net.named_params(), b.net.named_params()));
    }
    SUBCASE("denoising beats the noisy input by 3 dB") {
        ReconNetConfig cfg3;
        cfg3.channels = 3;
        cfg3.depth = 2;
        cfg3.base_channels = 12;
        auto train = toy_dataset(24, 32, 25.0, 105);
        auto val = toy_dataset(6, 32, 25.0, 106);
        double noisy_psnr = 0.0;
        for (const auto& [x, y] : val) noisy_psnr += psnr(x, y);
        noisy_psnr /= static_cast<double>(val.size());
        TrainConfig cfg;
        cfg.learning_rate = 2e-3;
        cfg.ema_decay = 0.95;
        cfg.batch_size = 6;
        cfg.max_steps = 800;
        cfg.patch_size = 24;
        cfg.eval_interval = 200;
        cfg.seed = 21;
        ReconTrainResult res = train_reconstructive(train, val, cfg3, cfg);
        CHECK(res.log.back().psnr >= noisy_psnr + 3.0);
    }
    SUBCASE("empty dataset and divergence raise diagnostics") {
        TrainConfig cfg;
        CHECK_THROWS_AS(train_reconstructive({}, {}, net_cfg, cfg), std::invalid_argument);
        auto train = toy_dataset(4, 24, 25.0, 107, 1);
        cfg.learning_rate = 1e18;
        cfg.batch_size = 2;
        cfg.max_steps = 60;
        cfg.patch_size = 16;
        cfg.eval_interval = 10;
        CHECK_THROWS_AS(train_reconstructive(train, {}, net_cfg, cfg), std::runtime_error);
    }
}

TEST_CASE("generative training") {
    // identity reconstructor on a noiseless dataset -> residuals are exactly 0
    ReconNetConfig rcfg;
    rcfg.channels = 1;
    rcfg.depth = 1;
    rcfg.base_channels = 4;
    EpsNetConfig ecfg;
    ecfg.d_channels = 1;
    ecfg.condition_channels = 1;
    ecfg.depth = 1;
    ecfg.base_channels = 8;
    ecfg.gamma_embedding_dim = 16;

    SUBCASE("zero-residual dataset: sampled residuals nearly vanish") {
        ReconNet recon(rcfg);
        Rng rng(31);
        recon.init(rng);
        // targets equal to the reconstructor output make d0 identically zero
        std::vector<ImagePair> train;
        Rng drng(32);
        for (int i = 0; i < 10; ++i) {
            Tensor x = generate_texture(16, TextureRecipe::mix, drng, {.channels = 1});
            Tensor y = recon.forward(x);
            train.push_back({x, y});
        }
        NoiseSchedule schedule = make_linear_schedule(400, 1e-5, 0.02);
        TrainConfig cfg;
        cfg.learning_rate = 2e-3;
        cfg.ema_decay = 0.95;
        cfg.batch_size = 4;
        cfg.max_steps = 500;
        cfg.patch_size = 16;
        cfg.augment_data = false;
        cfg.seed = 77;
        GenTrainResult res = train_generative(train, recon, schedule, ecfg, cfg);
        // the estimated residual scale collapses to its floor on this data
        CHECK(res.net.cfg.residual_scale <= 1e-3);

        PipelineBundle bundle;
        ReconNet frozen = recon;
        bundle.recon = std::move(frozen);
        bundle.gen = res.eval_net;
        bundle.family = ScheduleFamily{1e-4, 0.08};
        double total_mag = 0.0;
        for (int trial = 0; trial < 4; ++trial) {
            Rng srng(derive_seed(500, static_cast<uint64_t>(trial)));
            const Tensor& x = train[static_cast<size_t>(trial)].first;
            Tensor r = bundle.recon.forward(x);
            Tensor d = generate_residual(bundle, x, r, 100, srng);
            double mag = 0.0;
            for (size_t i = 0; i < d.size(); ++i) mag += std::abs(d[i]);
            total_mag += mag / static_cast<double>(d.size());
        }
        CHECK(total_mag / 4.0 < 0.01);
    }
    SUBCASE("the frozen reconstructor is bit-identical before and after") {
        ReconNet recon(rcfg);
        Rng rng(41);
        recon.init(rng);
        std::vector<Tensor> before;
        for (auto& p : recon.named_params()) before.push_back(*p.value);
        auto train = toy_dataset(6, 16, 25.0, 42, 1);
        NoiseSchedule schedule = make_linear_schedule(100, 1e-5, 0.02);
        TrainConfig cfg;
        cfg.batch_size = 2;
        cfg.max_steps = 20;
        cfg.patch_size = 16;
        cfg.seed = 43;
        GenTrainResult res = train_generative(train, recon, schedule, ecfg, cfg);
        auto after = recon.named_params();
        for (size_t i = 0; i < after.size(); ++i) CHECK(bit_equal(*after[i].value, before[i]));
        (void)res;
    }
    SUBCASE("fixed seed reproduces the trained parameters") {
        ReconNet recon(rcfg);
        Rng rng(51);
        recon.init(rng);
        auto train = toy_dataset(6, 16, 25.0, 52, 1);
        NoiseSchedule schedule = make_linear_schedule(100, 1e-5, 0.02);
        TrainConfig cfg;
        cfg.batch_size = 2;
        cfg.max_steps = 25;
        cfg.patch_size = 16;
        cfg.seed = 53;
        GenTrainResult a = train_generative(train, recon, schedule, ecfg, cfg);
        GenTrainResult b = train_generative(train, recon, schedule, ecfg, cfg);
        CHECK(params_equal(a.net.named_params(), b.net.named_params()));
    }
}

TEST_CASE("ablation modes") {
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
    auto train = toy_dataset(6, 16, 25.0, 61, 1);
    NoiseSchedule schedule = make_linear_schedule(100, 1e-5, 0.02);
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.max_steps = 15;
    cfg.patch_size = 16;
    cfg.eval_interval = 15;
    cfg.seed = 62;

    SUBCASE("two-stage mode equals the composed stage functions") {
        AblationResult ab = train_ablation_mode(TrainStage::two_stage, train, {}, schedule, rcfg,
                                                ecfg, cfg);
        ReconTrainResult rr = train_reconstructive(train, {}, rcfg, cfg);
        GenTrainResult gr = train_generative(train, rr.eval_net, schedule, ecfg, cfg);
        CHECK(params_equal(ab.recon.named_params(), rr.net.named_params()));
        CHECK(params_equal(ab.gen.named_params(), gr.net.named_params()));
    }
    SUBCASE("joint and intermediate supervision run and stay finite") {
        for (TrainStage mode : {TrainStage::joint, TrainStage::intermediate_supervision}) {
            for (Condition cond : {Condition::noisy, Condition::initial_estimate}) {
                TrainConfig c = cfg;
                c.condition = cond;
                AblationResult ab = train_ablation_mode(mode, train, {}, schedule, rcfg, ecfg, c);
                for (auto& p : ab.recon.named_params()) CHECK(p.value->all_finite());
                for (auto& p : ab.gen.named_params()) CHECK(p.value->all_finite());
            }
        }
    }
    SUBCASE("joint differs from intermediate supervision (gradient flow through the residual)") {
        AblationResult j = train_ablation_mode(TrainStage::joint, train, {}, schedule, rcfg, ecfg, cfg);
        AblationResult i = train_ablation_mode(TrainStage::intermediate_supervision, train, {},
                                               schedule, rcfg, ecfg, cfg);
        CHECK_FALSE(params_equal(j.recon.named_params(), i.recon.named_params()));
    }
    SUBCASE("invalid mode is rejected") {
        CHECK_THROWS_AS(train_ablation_mode(TrainStage::reconstructive, train, {}, schedule, rcfg,
                                            ecfg, cfg),
                        std::invalid_argument);
    }
}

TEST_CASE("training log serializes as delimited rows") {
    std::vector<LogRow> rows = {{100, 0.5, 21.0, 0.12}, {200, 0.4, 22.5, 0.11}};
    std::ostringstream os;
    write_train_log(os, rows);
    CHECK(os.str().find("step\tloss\tpsnr\tperceptual\n") == 0);
    CHECK(os.str().find("200\t") != std::string::npos);
}
