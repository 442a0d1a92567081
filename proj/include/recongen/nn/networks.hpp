#pragma once

// The three parameterized functions: the reconstructor (noisy image -> clean
// estimate), the noise predictor (noised residual + condition + noise level
// -> predicted noise), and the step-controller classifier.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "recongen/nn/unet.hpp"
#include "recongen/tensor.hpp"

namespace recongen::nn {

// --- reconstructor -------------------------------------------------------------

struct ReconNetConfig {
    int channels = 3;
    int depth = 2;
    int base_channels = 16;
    BlockKind block_kind = BlockKind::plain_conv;
    bool zero_init_head = true;
};

namespace detail {

inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    int period = 2 * n - 2;
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

inline Tensor reflect_pad_to_multiple(const Tensor& x, int multiple, int& pad_h, int& pad_w) {
    int h = x.height(), w = x.width();
    pad_h = (multiple - h % multiple) % multiple;
    pad_w = (multiple - w % multiple) % multiple;
    if (pad_h == 0 && pad_w == 0) return x;
    Tensor out(h + pad_h, w + pad_w, x.channels());
    for (int y = 0; y < out.height(); ++y) {
        int sy = reflect_index(y, h);
        for (int xx = 0; xx < out.width(); ++xx) {
            int sx = reflect_index(xx, w);
            for (int c = 0; c < x.channels(); ++c) out.at(y, xx, c) = x.at(sy, sx, c);
        }
    }
    return out;
}

inline Tensor crop(const Tensor& x, int h, int w) {
    if (x.height() == h && x.width() == w) return x;
    Tensor out(h, w, x.channels());
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
            for (int c = 0; c < x.channels(); ++c) out.at(y, xx, c) = x.at(y, xx, c);
    return out;
}

}  // namespace detail

struct ReconNet {
    ReconNetConfig cfg;
    UNetCore core;

    ReconNet() = default;
    explicit ReconNet(const ReconNetConfig& config) : cfg(config) {
        UNetConfig uc;
        uc.in_ch = cfg.channels;
        uc.out_ch = cfg.channels;
        uc.depth = cfg.depth;
        uc.base_channels = cfg.base_channels;
        uc.kind = cfg.block_kind;
        uc.zero_init_head = cfg.zero_init_head;
        core = UNetCore(uc);
    }

    void init(Rng& rng) { core.init(rng); }

    // Inference path: reflect-pads inputs whose spatial dims are not
    // divisible by 2^depth and crops the prediction back.
    Tensor forward(const Tensor& x) {
        if (x.channels() != cfg.channels) {
            throw std::invalid_argument("ReconNet: channel mismatch");
        }
        int pad_h = 0, pad_w = 0;
        Tensor padded = detail::reflect_pad_to_multiple(x, core.cfg.divisor(), pad_h, pad_w);
        Batch out = core.forward({padded}, nullptr, /*train=*/false);
        return detail::crop(out[0], x.height(), x.width());
    }

    // Training path: dims must already be divisible by 2^depth.
    Batch forward_train(const Batch& xs) {
        for (const auto& x : xs) {
            if (x.height() % core.cfg.divisor() != 0 || x.width() % core.cfg.divisor() != 0) {
                throw std::invalid_argument("ReconNet: training input dims must be divisible by " +
                                            std::to_string(core.cfg.divisor()));
            }
        }
        return core.forward(xs, nullptr, /*train=*/true);
    }

    Batch backward(const Batch& gouts) { return core.backward(gouts); }

    std::vector<NamedParam> named_params() {
        std::vector<NamedParam> out;
        core.params("recon", out);
        return out;
    }
};

// --- noise predictor -------------------------------------------------------------

struct EpsNetConfig {
    int d_channels = 3;          // residual channels
    int condition_channels = 3;  // channels of the conditioning image
    int depth = 2;
    int base_channels = 16;
    int gamma_embedding_dim = 32;
    BlockKind block_kind = BlockKind::plain_conv;
    bool zero_init_head = true;
    // Residuals are divided by this factor before diffusion and multiplied
    // back after sampling, so the modeled variable is unit-ish scale. The
    // value is estimated from probe residuals at training time and travels
    // with the checkpoint.
    double residual_scale = 1.0;
};

// Plain noise prediction: the conditioning image is concatenated on the
// channel axis and the noise level enters through FiLM modulation of every
// level plus the embedding MLP. A learned 1x1 shortcut (identity on the
// residual channels at init) gives the gamma-independent part of the
// prediction a direct linear path.
struct EpsNet {
    EpsNetConfig cfg;
    UNetCore core;
    Linear mlp1, mlp2;
    SiLU act;

    // backward outputs
    struct InputGrads {
        Batch d;     // gradient w.r.t. the noised residual
        Batch cond;  // gradient w.r.t. the conditioning image
    };

    EpsNet() = default;
    explicit EpsNet(const EpsNetConfig& config) : cfg(config) {
        UNetConfig uc;
        uc.in_ch = cfg.d_channels + cfg.condition_channels;
        uc.out_ch = cfg.d_channels;
        uc.depth = cfg.depth;
        uc.base_channels = cfg.base_channels;
        uc.kind = cfg.block_kind;
        uc.emb_dim = cfg.gamma_embedding_dim;
        uc.zero_init_head = cfg.zero_init_head;
        core = UNetCore(uc);
        mlp1 = Linear(cfg.gamma_embedding_dim, 2 * cfg.gamma_embedding_dim);
        mlp2 = Linear(2 * cfg.gamma_embedding_dim, cfg.gamma_embedding_dim);
    }

    void init(Rng& rng) {
        core.init(rng);
        mlp1.init(rng);
        mlp2.init(rng);
    }

    // Sinusoidal features of sqrt(gamma) on log-spaced frequencies, plus a
    // second group over -log(1-gamma) so levels near gamma -> 1 (where the
    // required noise gain blows up like 1/sqrt(1-gamma)) stay resolvable.
    Tensor gamma_features(double gamma) const {
        int dim = cfg.gamma_embedding_dim;
        int pairs = dim / 2;
        int first = (pairs + 1) / 2;
        Tensor e({dim});
        double u = std::sqrt(gamma);
        double v = -std::log1p(-std::min(gamma, 1.0 - 1e-12)) / 14.0;
        for (int j = 0; j < pairs; ++j) {
            bool tail = j >= first;
            int k = tail ? j - first : j;
            int n = tail ? pairs - first : first;
            double omega = std::pow(5000.0, n <= 1 ? 0.0 : static_cast<double>(k) / (n - 1));
            double arg = (tail ? v : u) * omega;
            e[static_cast<size_t>(2 * j)] = std::sin(arg);
            e[static_cast<size_t>(2 * j + 1)] = std::cos(arg);
        }
        return e;
    }

    Batch forward_train(const Batch& d_noised, const Batch& cond, const std::vector<double>& gammas) {
        Batch joined = join_inputs(d_noised, cond, gammas);
        Batch emb = embed(gammas, /*train=*/true);
        return core.forward(joined, &emb, /*train=*/true);
    }

    Tensor forward(const Tensor& d_noised, const Tensor& cond, double gamma) {
        if (!std::isfinite(gamma) || !(gamma > 0.0) || gamma > 1.0) {
            throw std::invalid_argument("EpsNet: gamma must be finite and in (0,1]");
        }
        Batch joined = join_inputs({d_noised}, {cond}, {gamma});
        Batch emb = embed({gamma}, /*train=*/false);
        return core.forward(joined, &emb, /*train=*/false)[0];
    }

    InputGrads backward(const Batch& gouts) {
        Batch demb;
        demb.reserve(gouts.size());
        for (size_t s = 0; s < gouts.size(); ++s) demb.push_back(Tensor({cfg.gamma_embedding_dim}));
        Batch djoined = core.backward(gouts, &demb);
        // gamma itself is not a trained input; the embedding gradient only
        // reaches the MLP and projection weights.
        mlp1.backward(act.backward(mlp2.backward(demb)));
        InputGrads grads;
        grads.d.reserve(djoined.size());
        grads.cond.reserve(djoined.size());
        for (const auto& j : djoined) {
            Tensor gd(j.height(), j.width(), cfg.d_channels);
            Tensor gc(j.height(), j.width(), cfg.condition_channels);
            split_channels(j, gd, gc);
            grads.d.push_back(std::move(gd));
            grads.cond.push_back(std::move(gc));
        }
        return grads;
    }

    std::vector<NamedParam> named_params() {
        std::vector<NamedParam> out;
        core.params("eps", out);
        mlp1.params("eps.mlp1", out);
        mlp2.params("eps.mlp2", out);
        return out;
    }

private:
    Batch join_inputs(const Batch& d_noised, const Batch& cond, const std::vector<double>& gammas) {
        if (d_noised.size() != cond.size() || d_noised.size() != gammas.size()) {
            throw std::invalid_argument("EpsNet: batch size mismatch");
        }
        Batch joined;
        joined.reserve(d_noised.size());
        for (size_t s = 0; s < d_noised.size(); ++s) {
            joined.push_back(concat_channels(d_noised[s], cond[s]));
        }
        return joined;
    }

    Batch embed(const std::vector<double>& gammas, bool train) {
        Batch feats;
        feats.reserve(gammas.size());
        for (double g : gammas) feats.push_back(gamma_features(g));
        return mlp2.forward(act.forward(mlp1.forward(feats, train), train), train);
    }
};

// --- step controller --------------------------------------------------------------

// Fixed classifier topology: eight conv(3x3)+batchnorm+relu blocks, max-pool
// after blocks 2, 5, 6 and 8, additive skips from the pooled block-2 output
// to block 4 and from the pooled block-6 output to block 8, then one fully
// connected layer. Channel plan: base for blocks 1-4, 2*base for 5-8.
struct ControllerNetConfig {
    int input_size = 64;
    int in_ch = 3;
    int base_channels = 16;
    int num_classes = 11;

    std::array<int, 8> channel_plan() const {
        return {base_channels, base_channels, base_channels, base_channels,
                2 * base_channels, 2 * base_channels, 2 * base_channels, 2 * base_channels};
    }
    int pooled_size() const {
        int s = input_size;
        for (int i = 0; i < 4; ++i) s = (s + 1) / 2;
        return s;
    }
};

struct ControllerNet {
    ControllerNetConfig cfg;
    std::array<Conv2d, 8> conv;
    std::array<BatchNorm2d, 8> bn;
    std::array<ReLU, 8> relu;
    std::array<MaxPool2, 4> pool;  // after blocks 2, 5, 6, 8
    Linear fc;
    Batch cached_skip2, cached_skip6;

    ControllerNet() = default;
    explicit ControllerNet(const ControllerNetConfig& config) : cfg(config) {
        auto plan = cfg.channel_plan();
        int prev = cfg.in_ch;
        for (int i = 0; i < 8; ++i) {
            conv[static_cast<size_t>(i)] = Conv2d(prev, plan[static_cast<size_t>(i)]);
            bn[static_cast<size_t>(i)] = BatchNorm2d(plan[static_cast<size_t>(i)]);
            prev = plan[static_cast<size_t>(i)];
        }
        int s = cfg.pooled_size();
        fc = Linear(s * s * plan[7], cfg.num_classes);
    }

    void init(Rng& rng) {
        for (auto& c : conv) c.init(rng);
        fc.init(rng);
    }

    Batch forward_logits(const Batch& patches, bool train) {
        for (const auto& p : patches) {
            if (p.height() != cfg.input_size || p.width() != cfg.input_size ||
                p.channels() != cfg.in_ch) {
                throw std::invalid_argument("ControllerNet: patch must be " +
                                            std::to_string(cfg.input_size) + "x" +
                                            std::to_string(cfg.input_size) + "x" +
                                            std::to_string(cfg.in_ch));
            }
        }
        auto block = [&](int i, const Batch& x) {
            return relu[static_cast<size_t>(i)].forward(
                bn[static_cast<size_t>(i)].forward(conv[static_cast<size_t>(i)].forward(x, train), train),
                train);
        };
        Batch t = block(0, patches);
        t = block(1, t);
        t = pool[0].forward(t, train);
        Batch skip2 = t;
        t = block(2, t);
        t = block(3, t);
        t = add_batches(t, skip2);
        t = block(4, t);
        t = pool[1].forward(t, train);
        t = block(5, t);
        t = pool[2].forward(t, train);
        Batch skip6 = t;
        t = block(6, t);
        t = block(7, t);
        t = add_batches(t, skip6);
        t = pool[3].forward(t, train);
        if (train) {
            cached_skip2 = std::move(skip2);
            cached_skip6 = std::move(skip6);
        }
        Batch flat;
        flat.reserve(t.size());
        for (auto& x : t) {
            Tensor v({static_cast<int>(x.size())});
            for (size_t i = 0; i < x.size(); ++i) v[i] = x[i];
            flat.push_back(std::move(v));
        }
        return fc.forward(flat, train);
    }

    Batch backward(const Batch& dlogits) {
        Batch dflat = fc.backward(dlogits);
        Batch g;
        g.reserve(dflat.size());
        int s = cfg.pooled_size();
        int ch = cfg.channel_plan()[7];
        for (auto& v : dflat) {
            Tensor t(s, s, ch);
            for (size_t i = 0; i < t.size(); ++i) t[i] = v[i];
            g.push_back(std::move(t));
        }
        auto unblock = [&](int i, const Batch& gout) {
            return conv[static_cast<size_t>(i)].backward(
                bn[static_cast<size_t>(i)].backward(relu[static_cast<size_t>(i)].backward(gout)));
        };
        g = pool[3].backward(g);
        Batch gskip6 = g;
        g = unblock(7, g);
        g = unblock(6, g);
        g = add_batches(g, gskip6);
        g = pool[2].backward(g);
        g = unblock(5, g);
        g = pool[1].backward(g);
        g = unblock(4, g);
        Batch gskip2 = g;
        g = unblock(3, g);
        g = unblock(2, g);
        g = add_batches(g, gskip2);
        g = pool[0].backward(g);
        g = unblock(1, g);
        g = unblock(0, g);
        return g;
    }

    // Probability vector over the step classes for one patch (eval mode).
    Tensor forward(const Tensor& patch) {
        Batch logits = forward_logits({patch}, /*train=*/false);
        return softmax(logits[0]);
    }

    static Tensor softmax(const Tensor& logits) {
        Tensor p = logits;
        double mx = p.max();
        double sum = 0.0;
        for (size_t i = 0; i < p.size(); ++i) {
            p[i] = std::exp(p[i] - mx);
            sum += p[i];
        }
        for (size_t i = 0; i < p.size(); ++i) p[i] /= sum;
        return p;
    }

    std::vector<NamedParam> named_params() {
        std::vector<NamedParam> out;
        for (int i = 0; i < 8; ++i) {
            conv[static_cast<size_t>(i)].params("ctrl.conv" + std::to_string(i + 1), out);
            bn[static_cast<size_t>(i)].params("ctrl.bn" + std::to_string(i + 1), out);
        }
        fc.params("ctrl.fc", out);
        return out;
    }

    // Running BN statistics: persisted with checkpoints but not trained.
    std::vector<NamedParam> named_buffers() {
        std::vector<NamedParam> out;
        for (int i = 0; i < 8; ++i) {
            out.push_back({"ctrl.bn" + std::to_string(i + 1) + ".running_mean",
                           &bn[static_cast<size_t>(i)].running_mean, nullptr});
            out.push_back({"ctrl.bn" + std::to_string(i + 1) + ".running_var",
                           &bn[static_cast<size_t>(i)].running_var, nullptr});
        }
        return out;
    }
};

}  // namespace recongen::nn
