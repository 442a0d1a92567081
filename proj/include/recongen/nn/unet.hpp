#pragma once

// Encoder-decoder backbone shared by the reconstructor and the noise
// predictor: stem conv, per-level residual blocks with stride-2 downsampling,
// a bottleneck block, nearest-upsample decoding with additive skips, and an
// optional per-level conditioning bias projected from an embedding vector.

#include <string>
#include <vector>

#include "recongen/nn/layers.hpp"
#include "recongen/rng.hpp"
#include "recongen/tensor.hpp"

namespace recongen::nn {

enum class BlockKind { plain_conv, simplified_attention };

inline const char* to_string(BlockKind k) {
    return k == BlockKind::plain_conv ? "plain_conv" : "simplified_attention";
}

inline BlockKind block_kind_from_string(const std::string& s) {
    if (s == "plain_conv") return BlockKind::plain_conv;
    if (s == "simplified_attention") return BlockKind::simplified_attention;
    throw std::invalid_argument("unknown block kind: " + s);
}

// Residual block at constant channel count. plain_conv is conv-norm-relu
// twice; simplified_attention is a gated convolution with per-channel
// scaling standing in for a stronger reconstructor block.
struct Block {
    BlockKind kind = BlockKind::plain_conv;
    int channels = 0;
    Conv2d c1, c2;
    GroupNorm n1, n2;
    ReLU r1, r2;
    Conv2d gate;
    ChannelGate sca;
    Batch cached_c1out, cached_sig;

    Block() = default;
    Block(int ch, BlockKind k) : kind(k), channels(ch) {
        c1 = Conv2d(ch, ch);
        c2 = Conv2d(ch, ch);
        n1 = GroupNorm(ch);
        if (kind == BlockKind::plain_conv) {
            n2 = GroupNorm(ch);
        } else {
            gate = Conv2d(ch, ch);
            sca = ChannelGate(ch);
        }
    }

    void init(Rng& rng) {
        c1.init(rng);
        c2.init(rng);
        if (kind == BlockKind::simplified_attention) {
            gate.init(rng);
            sca.init(rng);
        }
    }

    Batch forward(const Batch& xs, bool train) {
        if (kind == BlockKind::plain_conv) {
            Batch h = r1.forward(n1.forward(c1.forward(xs, train), train), train);
            h = r2.forward(n2.forward(c2.forward(h, train), train), train);
            return add_batches(xs, h);
        }
        Batch h0 = n1.forward(xs, train);
        Batch a = c1.forward(h0, train);
        Batch g = gate.forward(h0, train);
        Batch sig = g;
        for (auto& t : sig)
            for (size_t i = 0; i < t.size(); ++i) t[i] = 1.0 / (1.0 + std::exp(-t[i]));
        Batch prod = a;
        for (size_t s = 0; s < prod.size(); ++s)
            for (size_t i = 0; i < prod[s].size(); ++i) prod[s][i] *= sig[s][i];
        if (train) {
            cached_c1out = a;
            cached_sig = sig;
        }
        Batch h = c2.forward(sca.forward(prod, train), train);
        return add_batches(xs, h);
    }

    Batch backward(const Batch& gouts) {
        if (kind == BlockKind::plain_conv) {
            Batch g = c2.backward(n2.backward(r2.backward(gouts)));
            g = c1.backward(n1.backward(r1.backward(g)));
            return add_batches(gouts, g);
        }
        Batch gprod = sca.backward(c2.backward(gouts));
        Batch ga = gprod;
        Batch ggate = gprod;
        for (size_t s = 0; s < gprod.size(); ++s) {
            for (size_t i = 0; i < gprod[s].size(); ++i) {
                double sig = cached_sig[s][i];
                ga[s][i] = gprod[s][i] * sig;
                ggate[s][i] = gprod[s][i] * cached_c1out[s][i] * sig * (1.0 - sig);
            }
        }
        Batch gh0 = add_batches(c1.backward(ga), gate.backward(ggate));
        return add_batches(gouts, n1.backward(gh0));
    }

    void params(const std::string& prefix, std::vector<NamedParam>& out) {
        c1.params(prefix + ".c1", out);
        c2.params(prefix + ".c2", out);
        n1.params(prefix + ".n1", out);
        if (kind == BlockKind::plain_conv) {
            n2.params(prefix + ".n2", out);
        } else {
            gate.params(prefix + ".gate", out);
            sca.params(prefix + ".sca", out);
        }
    }
};

// Feature-wise conditioning: per-channel scale and shift projected from the
// embedding, t <- t * (1 + s) + b. Projections start small so the initial
// state is near-passthrough but already level-sensitive.
struct FilmInject {
    Linear lin;  // emb_dim -> 2 * channels (scale, shift)
    int channels = 0;
    Batch cached_pre;
    Batch cached_scale;

    FilmInject() = default;
    FilmInject(int emb_dim, int ch) : lin(emb_dim, 2 * ch), channels(ch) {}

    void init(Rng& rng) {
        lin.init(rng, 0.05);
    }

    Batch forward(const Batch& ts, const Batch& emb, bool train) {
        Batch mods = lin.forward(emb, train);
        Batch out;
        out.reserve(ts.size());
        if (train) {
            cached_pre = ts;
            cached_scale.clear();
        }
        for (size_t s = 0; s < ts.size(); ++s) {
            Tensor scale({channels}), shift({channels});
            for (int c = 0; c < channels; ++c) {
                scale[static_cast<size_t>(c)] = mods[s][static_cast<size_t>(c)];
                shift[static_cast<size_t>(c)] = mods[s][static_cast<size_t>(channels + c)];
            }
            Tensor y = ts[s];
            size_t hw = y.size() / static_cast<size_t>(channels);
            for (size_t p = 0; p < hw; ++p)
                for (int c = 0; c < channels; ++c) {
                    y[p * channels + c] = y[p * channels + c] * (1.0 + scale[static_cast<size_t>(c)]) +
                                          shift[static_cast<size_t>(c)];
                }
            if (train) cached_scale.push_back(scale);
            out.push_back(std::move(y));
        }
        return out;
    }

    // Returns the gradient w.r.t. the pre-modulation features; accumulates
    // the embedding gradient into demb.
    Batch backward(const Batch& gouts, Batch& demb) {
        Batch dmods;
        dmods.reserve(gouts.size());
        Batch dts;
        dts.reserve(gouts.size());
        for (size_t s = 0; s < gouts.size(); ++s) {
            const Tensor& g = gouts[s];
            const Tensor& pre = cached_pre[s];
            Tensor dmod({2 * channels});
            Tensor dt = Tensor::zeros_like(g);
            size_t hw = g.size() / static_cast<size_t>(channels);
            for (size_t p = 0; p < hw; ++p)
                for (int c = 0; c < channels; ++c) {
                    size_t ci = static_cast<size_t>(c);
                    double gv = g[p * channels + c];
                    dmod[ci] += gv * pre[p * channels + c];
                    dmod[static_cast<size_t>(channels + c)] += gv;
                    dt[p * channels + c] = gv * (1.0 + cached_scale[s][ci]);
                }
            dmods.push_back(std::move(dmod));
            dts.push_back(std::move(dt));
        }
        Batch demb_contrib = lin.backward(dmods);
        for (size_t s = 0; s < demb.size(); ++s) demb[s] += demb_contrib[s];
        return dts;
    }

    void params(const std::string& prefix, std::vector<NamedParam>& out) {
        lin.params(prefix + ".lin", out);
    }
};

struct UNetConfig {
    int in_ch = 3;
    int out_ch = 3;
    int depth = 2;           // number of downsampling levels
    int base_channels = 16;  // channels double per level
    BlockKind kind = BlockKind::plain_conv;
    int emb_dim = 0;  // 0 disables the conditioning input
    bool zero_init_head = true;
    bool linear_skip = true;  // learned 1x1 shortcut from input to output

    int level_channels(int level) const { return base_channels << level; }
    int divisor() const { return 1 << depth; }
};

struct UNetCore {
    UNetConfig cfg;
    Conv2d stem;
    std::vector<Block> enc;
    std::vector<Conv2d> down;
    Block mid;
    std::vector<Upsample2x> up;
    std::vector<Conv2d> upconv;
    std::vector<Block> dec;
    Conv2d head;
    std::vector<FilmInject> emb_enc, emb_dec;
    FilmInject emb_mid;
    Conv2d skip;  // optional linear bypass

    UNetCore() = default;
    explicit UNetCore(const UNetConfig& config) : cfg(config) {
        stem = Conv2d(cfg.in_ch, cfg.base_channels);
        for (int l = 0; l < cfg.depth; ++l) {
            int c = cfg.level_channels(l);
            enc.emplace_back(c, cfg.kind);
            down.emplace_back(Conv2d(c, cfg.level_channels(l + 1), 3, 2));
            up.emplace_back();
            upconv.emplace_back(Conv2d(cfg.level_channels(l + 1), c));
            dec.emplace_back(c, cfg.kind);
        }
        mid = Block(cfg.level_channels(cfg.depth), cfg.kind);
        head = Conv2d(cfg.base_channels, cfg.out_ch);
        if (cfg.linear_skip) skip = Conv2d(cfg.in_ch, cfg.out_ch, 1);
        if (cfg.emb_dim > 0) {
            for (int l = 0; l < cfg.depth; ++l) {
                emb_enc.emplace_back(FilmInject(cfg.emb_dim, cfg.level_channels(l)));
                emb_dec.emplace_back(FilmInject(cfg.emb_dim, cfg.level_channels(l)));
            }
            emb_mid = FilmInject(cfg.emb_dim, cfg.level_channels(cfg.depth));
        }
    }

    void init(Rng& rng) {
        stem.init(rng);
        for (auto& b : enc) b.init(rng);
        for (auto& d : down) d.init(rng);
        mid.init(rng);
        for (auto& u : upconv) u.init(rng);
        for (auto& b : dec) b.init(rng);
        if (cfg.zero_init_head) head.zero_init();
        else head.init(rng);
        if (cfg.linear_skip) {
            // identity projection on the leading channels; a near-passthrough
            // start speeds up both denoising and noise-prediction training
            skip.zero_init();
            for (int c = 0; c < std::min(cfg.in_ch, cfg.out_ch); ++c) {
                skip.w[static_cast<size_t>(c) * cfg.out_ch + c] = 1.0;
            }
        }
        if (cfg.emb_dim > 0) {
            for (auto& e : emb_enc) e.init(rng);
            for (auto& e : emb_dec) e.init(rng);
            emb_mid.init(rng);
        }
    }

private:
    std::vector<Batch> skips_;

public:
    // emb: per-sample embedding vectors ({emb_dim}); required iff configured.
    Batch forward(const Batch& xs, const Batch* emb, bool train) {
        if ((cfg.emb_dim > 0) != (emb != nullptr)) {
            throw std::invalid_argument("UNetCore: embedding presence does not match config");
        }
        skips_.assign(static_cast<size_t>(cfg.depth), {});
        Batch t = stem.forward(xs, train);
        for (int l = 0; l < cfg.depth; ++l) {
            if (cfg.emb_dim > 0) t = emb_enc[static_cast<size_t>(l)].forward(t, *emb, train);
            t = enc[static_cast<size_t>(l)].forward(t, train);
            skips_[static_cast<size_t>(l)] = t;
            t = down[static_cast<size_t>(l)].forward(t, train);
        }
        if (cfg.emb_dim > 0) t = emb_mid.forward(t, *emb, train);
        t = mid.forward(t, train);
        for (int l = cfg.depth - 1; l >= 0; --l) {
            t = upconv[static_cast<size_t>(l)].forward(up[static_cast<size_t>(l)].forward(t, train), train);
            t = add_batches(t, skips_[static_cast<size_t>(l)]);
            if (cfg.emb_dim > 0) t = emb_dec[static_cast<size_t>(l)].forward(t, *emb, train);
            t = dec[static_cast<size_t>(l)].forward(t, train);
        }
        Batch out = head.forward(t, train);
        if (cfg.linear_skip) out = add_batches(out, skip.forward(xs, train));
        return out;
    }

    // Returns the input gradient; adds embedding gradients into *demb when
    // conditioning is configured (demb must be zero-initialized {emb_dim}).
    Batch backward(const Batch& gouts, Batch* demb = nullptr) {
        if (cfg.emb_dim > 0 && demb == nullptr) {
            throw std::invalid_argument("UNetCore::backward: missing demb for conditioned net");
        }
        Batch skip_dx;
        if (cfg.linear_skip) skip_dx = skip.backward(gouts);
        Batch g = head.backward(gouts);
        std::vector<Batch> skip_grads(static_cast<size_t>(cfg.depth));
        for (int l = 0; l < cfg.depth; ++l) {
            g = dec[static_cast<size_t>(l)].backward(g);
            if (cfg.emb_dim > 0) g = emb_dec[static_cast<size_t>(l)].backward(g, *demb);
            skip_grads[static_cast<size_t>(l)] = g;
            g = up[static_cast<size_t>(l)].backward(upconv[static_cast<size_t>(l)].backward(g));
        }
        g = mid.backward(g);
        if (cfg.emb_dim > 0) g = emb_mid.backward(g, *demb);
        for (int l = cfg.depth - 1; l >= 0; --l) {
            g = down[static_cast<size_t>(l)].backward(g);
            g = add_batches(g, skip_grads[static_cast<size_t>(l)]);
            g = enc[static_cast<size_t>(l)].backward(g);
            if (cfg.emb_dim > 0) g = emb_enc[static_cast<size_t>(l)].backward(g, *demb);
        }
        Batch dx = stem.backward(g);
        if (cfg.linear_skip) dx = add_batches(dx, skip_dx);
        return dx;
    }

    void params(const std::string& prefix, std::vector<NamedParam>& out) {
        stem.params(prefix + ".stem", out);
        for (int l = 0; l < cfg.depth; ++l) {
            std::string ls = std::to_string(l);
            enc[static_cast<size_t>(l)].params(prefix + ".enc" + ls, out);
            down[static_cast<size_t>(l)].params(prefix + ".down" + ls, out);
            upconv[static_cast<size_t>(l)].params(prefix + ".upconv" + ls, out);
            dec[static_cast<size_t>(l)].params(prefix + ".dec" + ls, out);
            if (cfg.emb_dim > 0) {
                emb_enc[static_cast<size_t>(l)].params(prefix + ".emb_enc" + ls, out);
                emb_dec[static_cast<size_t>(l)].params(prefix + ".emb_dec" + ls, out);
            }
        }
        mid.params(prefix + ".mid", out);
        if (cfg.emb_dim > 0) emb_mid.params(prefix + ".emb_mid", out);
        head.params(prefix + ".head", out);
        if (cfg.linear_skip) skip.params(prefix + ".skip", out);
    }
};

}  // namespace recongen::nn
