#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <functional>

#include "recongen/controller.hpp"
#include "recongen/nn/checkpoint.hpp"
#include "recongen/nn/networks.hpp"
#include "recongen/training.hpp"

using namespace recongen;
using namespace recongen::nn;

namespace {

// Central-difference check of every element of every parameter tensor.
// loss() must re-run the forward pass; analytic gradients are taken from the
// .grad tensors after the caller has run backward once.
struct FdReport {
    double worst_rel = 0.0;
    std::string worst_param;
};

FdReport finite_difference_check(std::vector<NamedParam> params, const std::function<double()>& loss,
                                 double h = 1e-5) {
    FdReport report;
    for (auto& p : params) {
        const Tensor& grad = *p.grad;
        for (size_t j = 0; j < p.value->size(); ++j) {
            double saved = (*p.value)[j];
            (*p.value)[j] = saved + h;
            double up = loss();
            (*p.value)[j] = saved - h;
            double down = loss();
            (*p.value)[j] = saved;
            double fd = (up - down) / (2.0 * h);
            double diff = std::abs(fd - grad[j]);
            // below the central-difference noise floor both sides are zero
            // (e.g. conv bias feeding a normalization layer)
            if (diff < 1e-8) continue;
            double rel = diff / std::max(1e-6, std::abs(fd) + std::abs(grad[j]));
            if (rel > report.worst_rel) {
                report.worst_rel = rel;
                report.worst_param = p.name + "[" + std::to_string(j) + "]";
            }
        }
    }
    return report;
}

}  // namespace

TEST_CASE("reconstructor shape contract") {
    ReconNetConfig cfg;
    cfg.channels = 3;
    ReconNet net(cfg);
    Rng rng(1);
    net.init(rng);
    SUBCASE("128x128 passes through unchanged in shape") {
        Tensor x = rng.normal_tensor({128, 128, 3}).clamped(0.0, 1.0);
        Tensor y = net.forward(x);
        CHECK(y.height() == 128);
        CHECK(y.width() == 128);
        CHECK(y.channels() == 3);
    }
    SUBCASE("non-divisible sizes are reflect-padded and cropped back") {
        for (auto [h, w] : {std::pair{10, 10}, std::pair{33, 47}, std::pair{7, 21}}) {
            Tensor x = rng.normal_tensor({h, w, 3}).clamped(0.0, 1.0);
            Tensor y = net.forward(x);
            CHECK(y.height() == h);
            CHECK(y.width() == w);
        }
    }
    SUBCASE("eval forward is bit-reproducible") {
        Tensor x = rng.normal_tensor({16, 16, 3}).clamped(0.0, 1.0);
        CHECK(bit_equal(net.forward(x), net.forward(x)));
    }
    SUBCASE("channel mismatch throws") {
        CHECK_THROWS_AS(net.forward(Tensor(16, 16, 1)), std::invalid_argument);
    }
}

TEST_CASE("all-zero parameters make the output independent of the input") {
    for (BlockKind kind : {BlockKind::plain_conv, BlockKind::simplified_attention}) {
        ReconNetConfig cfg;
        cfg.channels = 2;
        cfg.base_channels = 4;
        cfg.block_kind = kind;
        ReconNet net(cfg);
        for (auto& p : net.named_params()) p.value->fill(0.0);
        Rng rng(3);
        Tensor a = rng.normal_tensor({16, 16, 2}).clamped(0.0, 1.0);
        Tensor b = rng.normal_tensor({16, 16, 2}).clamped(0.0, 1.0);
        CHECK(bit_equal(net.forward(a), net.forward(b)));
    }
}

TEST_CASE("noise predictor shape contract and gamma sensitivity") {
    EpsNetConfig cfg;
    cfg.d_channels = 3;
    cfg.condition_channels = 3;
    cfg.base_channels = 8;
    cfg.zero_init_head = false;
    EpsNet net(cfg);
    Rng rng(5);
    net.init(rng);
    Tensor d = rng.normal_tensor({64, 64, 3});
    Tensor x = rng.normal_tensor({64, 64, 3}).clamped(0.0, 1.0);

    SUBCASE("(64,64,3)+(64,64,3) -> (64,64,3)") {
        Tensor out = net.forward(d, x, 0.5);
        CHECK(out.height() == 64);
        CHECK(out.width() == 64);
        CHECK(out.channels() == 3);
    }
    SUBCASE("different gamma values change the output") {
        Tensor a = net.forward(d, x, 0.9);
        Tensor b = net.forward(d, x, 0.2);
        CHECK_FALSE(bit_equal(a, b));
    }
    SUBCASE("non-finite or out-of-range gamma throws") {
        CHECK_THROWS_AS(net.forward(d, x, std::nan("")), std::invalid_argument);
        CHECK_THROWS_AS(net.forward(d, x, 0.0), std::invalid_argument);
        CHECK_THROWS_AS(net.forward(d, x, 1.5), std::invalid_argument);
    }
    SUBCASE("spatial mismatch between d and condition throws") {
        Tensor small = rng.normal_tensor({32, 32, 3});
        CHECK_THROWS_AS(net.forward(d, small, 0.5), std::invalid_argument);
    }
}

TEST_CASE("finite differences: reconstructor gradients, both block kinds") {
    for (BlockKind kind : {BlockKind::plain_conv, BlockKind::simplified_attention}) {
        CAPTURE(to_string(kind));
        ReconNetConfig cfg;
        cfg.channels = 2;
        cfg.base_channels = 4;
        cfg.depth = 2;
        cfg.block_kind = kind;
        cfg.zero_init_head = false;
        ReconNet net(cfg);
        Rng rng(11);
        net.init(rng);
        Batch xs = {rng.normal_tensor({8, 8, 2}), rng.normal_tensor({8, 8, 2})};
        Batch targets = {rng.normal_tensor({8, 8, 2}), rng.normal_tensor({8, 8, 2})};

        auto loss = [&]() {
            Batch pred = net.forward_train(xs);
            return loss_lp(pred[0], targets[0], 2) + loss_lp(pred[1], targets[1], 2);
        };
        auto params = net.named_params();
        zero_grads(params);
        Batch pred = net.forward_train(xs);
        Batch gs = {loss_lp_grad(pred[0], targets[0], 2), loss_lp_grad(pred[1], targets[1], 2)};
        net.backward(gs);
        FdReport rep = finite_difference_check(params, loss);
        CAPTURE(rep.worst_param);
        CHECK(rep.worst_rel <= 1e-4);
    }
}

TEST_CASE("finite differences: noise predictor gradients including the embedding path") {
    EpsNetConfig cfg;
    cfg.d_channels = 2;
    cfg.condition_channels = 2;
    cfg.base_channels = 4;
    cfg.depth = 2;
    cfg.gamma_embedding_dim = 8;
    cfg.zero_init_head = false;
    EpsNet net(cfg);
    Rng rng(13);
    net.init(rng);
    Batch d = {rng.normal_tensor({8, 8, 2})};
    Batch cond = {rng.normal_tensor({8, 8, 2})};
    std::vector<double> gammas = {0.37};
    Tensor target = rng.normal_tensor({8, 8, 2});

    auto loss = [&]() {
        Batch out = net.forward_train(d, cond, gammas);
        return loss_lp(out[0], target, 2);
    };
    auto params = net.named_params();
    zero_grads(params);
    Batch out = net.forward_train(d, cond, gammas);
    net.backward({loss_lp_grad(out[0], target, 2)});
    FdReport rep = finite_difference_check(params, loss);
    CAPTURE(rep.worst_param);
    CHECK(rep.worst_rel <= 1e-4);
}

TEST_CASE("finite differences: noise predictor input gradients") {
    // joint training differentiates through both the noised residual and the
    // conditioning image
    EpsNetConfig cfg;
    cfg.d_channels = 1;
    cfg.condition_channels = 1;
    cfg.base_channels = 4;
    cfg.depth = 1;
    cfg.gamma_embedding_dim = 4;
    cfg.zero_init_head = false;
    EpsNet net(cfg);
    Rng rng(17);
    net.init(rng);
    Tensor d0 = rng.normal_tensor({8, 8, 1});
    Tensor c0 = rng.normal_tensor({8, 8, 1});
    Tensor target = rng.normal_tensor({8, 8, 1});
    std::vector<double> gammas = {0.6};

    auto loss = [&](const Tensor& dd, const Tensor& cc) {
        Batch out = net.forward_train({dd}, {cc}, gammas);
        return loss_lp(out[0], target, 2);
    };
    Batch out = net.forward_train({d0}, {c0}, gammas);
    EpsNet::InputGrads ig = net.backward({loss_lp_grad(out[0], target, 2)});
    double h = 1e-5;
    double worst = 0.0;
    for (size_t j = 0; j < d0.size(); j += 7) {
        Tensor up = d0, down = d0;
        up[j] += h;
        down[j] -= h;
        double fd = (loss(up, c0) - loss(down, c0)) / (2 * h);
        worst = std::max(worst, std::abs(fd - ig.d[0][j]) /
                                    std::max(1e-6, std::abs(fd) + std::abs(ig.d[0][j])));
    }
    for (size_t j = 0; j < c0.size(); j += 7) {
        Tensor up = c0, down = c0;
        up[j] += h;
        down[j] -= h;
        double fd = (loss(d0, up) - loss(d0, down)) / (2 * h);
        worst = std::max(worst, std::abs(fd - ig.cond[0][j]) /
                                    std::max(1e-6, std::abs(fd) + std::abs(ig.cond[0][j])));
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("controller output is a probability vector with fixed topology") {
    ControllerNetConfig cfg;
    cfg.input_size = 16;
    cfg.in_ch = 3;
    cfg.base_channels = 8;
    ControllerNet net(cfg);
    Rng rng(19);
    net.init(rng);
    Tensor patch = rng.normal_tensor({16, 16, 3}).clamped(0.0, 1.0);

    SUBCASE("softmax sums to one within 1e-6, 11 classes") {
        Tensor p = net.forward(patch);
        REQUIRE(p.size() == 11);
        double sum = 0.0;
        for (size_t i = 0; i < p.size(); ++i) {
            CHECK(p[i] >= 0.0);
            sum += p[i];
        }
        CHECK(std::abs(sum - 1.0) <= 1e-6);
    }
    SUBCASE("uniform logits give the uniform distribution") {
        net.fc.w.fill(0.0);
        net.fc.b.fill(0.0);
        Tensor p = net.forward(patch);
        for (size_t i = 0; i < p.size(); ++i) CHECK(p[i] == doctest::Approx(1.0 / 11).epsilon(1e-12));
    }
    SUBCASE("argmax is invariant under adding a constant to all logits") {
        Batch logits = net.forward_logits({patch}, false);
        int before = 0;
        for (int k = 1; k < 11; ++k)
            if (logits[0][static_cast<size_t>(k)] > logits[0][static_cast<size_t>(before)]) before = k;
        for (size_t i = 0; i < net.fc.b.size(); ++i) net.fc.b[i] += 3.25;
        Batch shifted = net.forward_logits({patch}, false);
        int after = 0;
        for (int k = 1; k < 11; ++k)
            if (shifted[0][static_cast<size_t>(k)] > shifted[0][static_cast<size_t>(after)]) after = k;
        CHECK(before == after);
    }
    SUBCASE("wrong patch size throws") {
        CHECK_THROWS_AS(net.forward(Tensor(8, 8, 3)), std::invalid_argument);
    }
}

TEST_CASE("finite differences: controller gradients through cross-entropy") {
    ControllerNetConfig cfg;
    cfg.input_size = 8;
    cfg.in_ch = 1;
    cfg.base_channels = 4;
    ControllerNet net(cfg);
    Rng rng(23);
    net.init(rng);
    Batch patches = {rng.normal_tensor({8, 8, 1}), rng.normal_tensor({8, 8, 1}),
                     rng.normal_tensor({8, 8, 1})};
    std::vector<int> labels = {2, 7, 0};
    std::vector<double> weights(11, 1.0);
    weights[7] = 2.0;

    auto loss = [&]() {
        Batch logits = net.forward_logits(patches, /*train=*/true);
        Batch dl;
        return cross_entropy_batch(logits, labels, weights, dl);
    };
    auto params = net.named_params();
    zero_grads(params);
    Batch logits = net.forward_logits(patches, /*train=*/true);
    Batch dlogits;
    cross_entropy_batch(logits, labels, weights, dlogits);
    net.backward(dlogits);
    FdReport rep = finite_difference_check(params, loss);
    CAPTURE(rep.worst_param);
    CHECK(rep.worst_rel <= 1e-4);
}

TEST_CASE("checkpoints round-trip every network") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "recongen_ckpt_test";
    fs::remove_all(dir);
    Rng rng(29);

    SUBCASE("reconstructor with EMA pairing") {
        ReconNetConfig cfg;
        cfg.channels = 3;
        cfg.base_channels = 8;
        ReconNet net(cfg);
        net.init(rng);
        Ema ema(0.5, net.named_params());
        ema.update(net.named_params());
        auto ema_map = ema.as_map();
        save_checkpoint(dir / "recon", "recon", recon_config_map(cfg), net.named_params(), &ema_map);
        Checkpoint ck = load_checkpoint(dir / "recon");
        CHECK(ck.has_ema());
        ReconNet live = recon_from_checkpoint(ck, false);
        ReconNet shadow = recon_from_checkpoint(ck, true);
        Tensor x = rng.normal_tensor({16, 16, 3}).clamped(0.0, 1.0);
        CHECK(max_abs_diff(live.forward(x), net.forward(x)) < 1e-5);
        // saved params are float32-quantized; a second round trip is exact
        save_checkpoint(dir / "recon2", "recon", recon_config_map(cfg), live.named_params());
        ReconNet again = recon_from_checkpoint(load_checkpoint(dir / "recon2"), false);
        CHECK(bit_equal(again.forward(x), live.forward(x)));
        (void)shadow;
    }
    SUBCASE("noise predictor") {
        EpsNetConfig cfg;
        cfg.base_channels = 8;
        cfg.zero_init_head = false;
        EpsNet net(cfg);
        net.init(rng);
        save_checkpoint(dir / "eps", "eps", eps_config_map(cfg), net.named_params());
        EpsNet back = eps_from_checkpoint(load_checkpoint(dir / "eps"), false);
        Tensor d = rng.normal_tensor({16, 16, 3});
        Tensor x = rng.normal_tensor({16, 16, 3}).clamped(0.0, 1.0);
        CHECK(max_abs_diff(back.forward(d, x, 0.4), net.forward(d, x, 0.4)) < 1e-5);
    }
    SUBCASE("controller with batch-norm buffers") {
        ControllerNetConfig cfg;
        cfg.input_size = 16;
        cfg.in_ch = 1;
        cfg.base_channels = 4;
        ControllerNet net(cfg);
        net.init(rng);
        // push the running stats away from their init
        Batch batch = {rng.normal_tensor({16, 16, 1}), rng.normal_tensor({16, 16, 1})};
        net.forward_logits(batch, /*train=*/true);
        save_checkpoint(dir / "ctrl", "controller", controller_config_map(cfg), net.named_params(),
                        nullptr, net.named_buffers());
        ControllerNet back = controller_from_checkpoint(load_checkpoint(dir / "ctrl"), false);
        Tensor patch = rng.normal_tensor({16, 16, 1}).clamped(0.0, 1.0);
        CHECK(max_abs_diff(back.forward(patch), net.forward(patch)) < 1e-5);
    }
    SUBCASE("kind mismatch is rejected") {
        ReconNetConfig cfg;
        ReconNet net(cfg);
        net.init(rng);
        save_checkpoint(dir / "typed", "recon", recon_config_map(cfg), net.named_params());
        CHECK_THROWS(eps_from_checkpoint(load_checkpoint(dir / "typed"), false));
    }
    fs::remove_all(dir);
}
