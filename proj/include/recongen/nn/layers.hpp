#pragma once

// Trainable layers with explicit forward/backward passes. Convolutions are
// im2col + GEMM (Eigen); everything is double precision. Layers cache what
// backward needs when called with train=true, so backward must follow the
// matching forward. Batches are plain vectors of HWC tensors; gradient
// accumulation into the parameter .g* members is += and callers zero them.

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "recongen/rng.hpp"
#include "recongen/tensor.hpp"

namespace recongen::nn {

using Batch = std::vector<Tensor>;

struct NamedParam {
    std::string name;
    Tensor* value;
    Tensor* grad;
};

using MatMap = Eigen::Map<Eigen::MatrixXd>;
using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;

// --- convolution --------------------------------------------------------------

// 3x3 (or kxk) convolution, zero 'same' padding, stride 1 or 2.
// Weight layout: shape {k, k, in_ch, out_ch}; flat data doubles as a
// column-major (out_ch x k*k*in_ch) matrix.
struct Conv2d {
    int in_ch = 0, out_ch = 0, ksize = 3, stride = 1;
    Tensor w, b, gw, gb;
    Batch cached_in;

    Conv2d() = default;
    Conv2d(int in, int out, int k = 3, int s = 1) : in_ch(in), out_ch(out), ksize(k), stride(s) {
        w = Tensor({k, k, in, out});
        b = Tensor({out});
        gw = Tensor({k, k, in, out});
        gb = Tensor({out});
    }

    void init(Rng& rng, double scale = 1.0) {
        double std = scale * std::sqrt(2.0 / (static_cast<double>(ksize) * ksize * in_ch));
        for (size_t i = 0; i < w.size(); ++i) w[i] = std * rng.normal();
        b.fill(0.0);
    }

    void zero_init() {
        w.fill(0.0);
        b.fill(0.0);
    }

    int out_dim(int in) const { return (in + 2 * (ksize / 2) - ksize) / stride + 1; }

    void im2col(const Tensor& x, std::vector<double>& col) const {
        int h = x.height(), wdt = x.width();
        int oh = out_dim(h), ow = out_dim(wdt);
        int pad = ksize / 2;
        size_t K = static_cast<size_t>(ksize) * ksize * in_ch;
        col.assign(K * static_cast<size_t>(oh) * ow, 0.0);
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                size_t m = static_cast<size_t>(oy) * ow + ox;
                double* dst = col.data() + m * K;
                for (int dy = 0; dy < ksize; ++dy) {
                    int iy = oy * stride + dy - pad;
                    if (iy < 0 || iy >= h) continue;
                    for (int dx = 0; dx < ksize; ++dx) {
                        int ix = ox * stride + dx - pad;
                        if (ix < 0 || ix >= wdt) continue;
                        const double* src = x.data() + (static_cast<size_t>(iy) * wdt + ix) * in_ch;
                        double* d = dst + (static_cast<size_t>(dy) * ksize + dx) * in_ch;
                        for (int c = 0; c < in_ch; ++c) d[c] = src[c];
                    }
                }
            }
        }
    }

    Tensor forward_one(const Tensor& x, std::vector<double>& col) const {
        if (x.channels() != in_ch) {
            throw std::invalid_argument("Conv2d: expected " + std::to_string(in_ch) +
                                        " channels, got " + std::to_string(x.channels()));
        }
        int oh = out_dim(x.height()), ow = out_dim(x.width());
        im2col(x, col);
        size_t K = static_cast<size_t>(ksize) * ksize * in_ch;
        size_t M = static_cast<size_t>(oh) * ow;
        Tensor out(oh, ow, out_ch);
        ConstMatMap wm(w.data(), out_ch, static_cast<Eigen::Index>(K));
        ConstMatMap cm(col.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(M));
        MatMap om(out.data(), out_ch, static_cast<Eigen::Index>(M));
        om.noalias() = wm * cm;
        for (size_t m = 0; m < M; ++m) {
            double* o = out.data() + m * out_ch;
            for (int c = 0; c < out_ch; ++c) o[c] += b[static_cast<size_t>(c)];
        }
        return out;
    }

    Batch forward(const Batch& xs, bool train) {
        if (train) cached_in = xs;
        Batch out;
        out.reserve(xs.size());
        std::vector<double> col;
        for (const auto& x : xs) out.push_back(forward_one(x, col));
        return out;
    }

    Batch backward(const Batch& gouts) {
        Batch dxs;
        dxs.reserve(gouts.size());
        std::vector<double> col, dcol;
        size_t K = static_cast<size_t>(ksize) * ksize * in_ch;
        MatMap gwm(gw.data(), out_ch, static_cast<Eigen::Index>(K));
        ConstMatMap wm(w.data(), out_ch, static_cast<Eigen::Index>(K));
        for (size_t s = 0; s < gouts.size(); ++s) {
            const Tensor& x = cached_in[s];
            const Tensor& go = gouts[s];
            int h = x.height(), wdt = x.width();
            int oh = out_dim(h), ow = out_dim(wdt);
            size_t M = static_cast<size_t>(oh) * ow;
            im2col(x, col);
            ConstMatMap gom(go.data(), out_ch, static_cast<Eigen::Index>(M));
            ConstMatMap cm(col.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(M));
            gwm.noalias() += gom * cm.transpose();
            for (size_t m = 0; m < M; ++m) {
                const double* g = go.data() + m * out_ch;
                for (int c = 0; c < out_ch; ++c) gb[static_cast<size_t>(c)] += g[c];
            }
            dcol.assign(K * M, 0.0);
            MatMap dcm(dcol.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(M));
            dcm.noalias() = wm.transpose() * gom;
            // col2im scatter
            Tensor dx(h, wdt, in_ch);
            int pad = ksize / 2;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    size_t m = static_cast<size_t>(oy) * ow + ox;
                    const double* src = dcol.data() + m * K;
                    for (int dy = 0; dy < ksize; ++dy) {
                        int iy = oy * stride + dy - pad;
                        if (iy < 0 || iy >= h) continue;
                        for (int dx_ = 0; dx_ < ksize; ++dx_) {
                            int ix = ox * stride + dx_ - pad;
                            if (ix < 0 || ix >= wdt) continue;
                            double* d = dx.data() + (static_cast<size_t>(iy) * wdt + ix) * in_ch;
                            const double* sc = src + (static_cast<size_t>(dy) * ksize + dx_) * in_ch;
                            for (int c = 0; c < in_ch; ++c) d[c] += sc[c];
                        }
                    }
                }
            }
            dxs.push_back(std::move(dx));
        }
        return dxs;
    }

    void params(const std::string& prefix, std::vector<NamedParam>& out) {
        out.push_back({prefix + ".w", &w, &gw});
        out.push_back({prefix + ".b", &b, &gb});
    }
};

// --- linear --------------------------------------------------------------------

// Fully connected layer on 1-d tensors. Weight shape {in, out}, flat data is
// a column-major (out x in) matrix.
struct Linear {
    int in_dim = 0, out_dim = 0;
    Tensor w, b, gw, gb;
    Batch cached_in;

    Linear() = default;
    Linear(int in, int out) : in_dim(in), out_dim(out) {
        w = Tensor({in, out});
        b = Tensor({out});
        gw = Tensor({in, out});
        gb = Tensor({out});
    }

    void init(Rng& rng, double scale = 1.0) {
        double std = scale * std::sqrt(2.0 / in_dim);
        for (size_t i = 0; i < w.size(); ++i) w[i] = std * rng.normal();
        b.fill(0.0);
    }

    Batch forward(const Batch& xs, bool train) {
        if (train) cached_in = xs;
        Batch out;
        out.reserve(xs.size());
        ConstMatMap wm(w.data(), out_dim, in_dim);
        for (const auto& x : xs) {
            if (static_cast<int>(x.size()) != in_dim) {
                throw std::invalid_argument("Linear: expected input of size " + std::to_string(in_dim));
            }
            Tensor y({out_dim});
            Eigen::Map<Eigen::VectorXd> ym(y.data(), out_dim);
            Eigen::Map<const Eigen::VectorXd> xm(x.data(), in_dim);
            ym.noalias() = wm * xm;
            for (int i = 0; i < out_dim; ++i) y[static_cast<size_t>(i)] += b[static_cast<size_t>(i)];
            out.push_back(std::move(y));
        }
        return out;
    }

    Batch backward(const Batch& gouts) {
        Batch dxs;
        dxs.reserve(gouts.size());
        MatMap gwm(gw.data(), out_dim, in_dim);
        ConstMatMap wm(w.data(), out_dim, in_dim);
        for (size_t s = 0; s < gouts.size(); ++s) {
            Eigen::Map<const Eigen::VectorXd> gm(gouts[s].data(), out_dim);
            Eigen::Map<const Eigen::VectorXd> xm(cached_in[s].data(), in_dim);
            gwm.noalias() += gm * xm.transpose();
            for (int i = 0; i < out_dim; ++i) gb[static_cast<size_t>(i)] += gouts[s][static_cast<size_t>(i)];
            Tensor dx({in_dim});
            Eigen::Map<Eigen::VectorXd> dm(dx.data(), in_dim);
            dm.noalias() = wm.transpose() * gm;
            dxs.push_back(std::move(dx));
        }
        return dxs;
    }

    void params(const std::string& prefix, std::vector<NamedParam>& out) {
        out.push_back({prefix + ".w", &w, &gw});
        out.push_back({prefix + ".b", &b, &gb});
    }
};

// --- activations -----------------------------------------------------------------

struct ReLU {
    Batch cached_in;
    Batch forward(const Batch& xs, bool train) {
        if (train) cached_in = xs;
        Batch out = xs;
        for (auto& t : out)
            for (size_t i = 0; i < t.size(); ++i) t[i] = t[i] > 0.0 ? t[i] : 0.0;
        return out;
    }
    Batch backward(const Batch& gouts) {
        Batch dxs = gouts;
        for (size_t s = 0; s < dxs.size(); ++s)
            for (size_t i = 0; i < dxs[s].size(); ++i)
                if (cached_in[s][i] <= 0.0) dxs[s][i] = 0.0;
        return dxs;
    }
};

struct SiLU {
    Batch cached_in;
    static double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
    Batch forward(const Batch& xs, bool train) {
        if (train) cached_in = xs;
        Batch out = xs;
        for (auto& t : out)
            for (size_t i = 0; i < t.size(); ++i) t[i] = t[i] * sigmoid(t[i]);
        return out;
    }
    Batch backward(const Batch& gouts) {
        Batch dxs = gouts;
        for (size_t s = 0; s < dxs.size(); ++s)
            for (size_t i = 0; i < dxs[s].size(); ++i) {
                double x = cached_in[s][i];
                double sg = sigmoid(x);
                dxs[s][i] *= sg * (1.0 + x * (1.0 - sg));
            }
        return dxs;
    }
};

// --- normalization ----------------------------------------------------------------

// Group normalization over (H, W, channels-of-group) per sample. Affine per
// channel. Deterministic at inference; no running statistics.
struct GroupNorm {
    int channels = 0, groups = 1;
    double eps = 1e-5;
    Tensor gamma, beta, ggamma, gbeta;
    Batch cached_xhat;
    std::vector<std::vector<double>> cached_istd;  // per sample, per group

    GroupNorm() = default;
    explicit GroupNorm(int ch, int g = 0) : channels(ch) {
        groups = g > 0 ? g : std::min(8, ch);
        while (channels % groups != 0) --groups;
        gamma = Tensor::full({ch}, 1.0);
        beta = Tensor({ch});
        ggamma = Tensor({ch});
        gbeta = Tensor({ch});
    }

    Batch forward(const Batch& xs, bool train) {
        Batch out;
        out.reserve(xs.size());
        if (train) {
            cached_xhat.clear();
            cached_istd.assign(xs.size(), {});
        }
        int cg = channels / groups;
        for (size_t s = 0; s < xs.size(); ++s) {
            const Tensor& x = xs[s];
            size_t hw = static_cast<size_t>(x.height()) * x.width();
            Tensor xhat = Tensor::zeros_like(x);
            std::vector<double> istds(static_cast<size_t>(groups));
            for (int g = 0; g < groups; ++g) {
                double mean = 0.0, var = 0.0;
                size_t n = hw * static_cast<size_t>(cg);
                for (size_t p = 0; p < hw; ++p)
                    for (int c = g * cg; c < (g + 1) * cg; ++c) mean += x[p * channels + c];
                mean /= static_cast<double>(n);
                for (size_t p = 0; p < hw; ++p)
                    for (int c = g * cg; c < (g + 1) * cg; ++c) {
                        double d = x[p * channels + c] - mean;
                        var += d * d;
                    }
                var /= static_cast<double>(n);
                double istd = 1.0 / std::sqrt(var + eps);
                istds[static_cast<size_t>(g)] = istd;
                for (size_t p = 0; p < hw; ++p)
                    for (int c = g * cg; c < (g + 1) * cg; ++c)
                        xhat[p * channels + c] = (x[p * channels + c] - mean) * istd;
            }
            Tensor y = Tensor::zeros_like(x);
            for (size_t p = 0; p < hw; ++p)
                for (int c = 0; c < channels; ++c)
                    y[p * channels + c] = gamma[static_cast<size_t>(c)] * xhat[p * channels + c] +
                                          beta[static_cast<size_t>(c)];
            if (train) {
                cached_xhat.push_back(std::move(xhat));
                cached_istd[s] = std::move(istds);
            }
            out.push_back(std::move(y));
        }
        return out;
    }

    Batch backward(const Batch& gouts) {
        Batch dxs;
        dxs.reserve(gouts.size());
        int cg = channels / groups;
        for (size_t s = 0; s < gouts.size(); ++s) {
            const Tensor& go = gouts[s];
            const Tensor& xhat = cached_xhat[s];
            size_t hw = go.size() / static_cast<size_t>(channels);
            for (size_t p = 0; p < hw; ++p)
                for (int c = 0; c < channels; ++c) {
                    ggamma[static_cast<size_t>(c)] += go[p * channels + c] * xhat[p * channels + c];
                    gbeta[static_cast<size_t>(c)] += go[p * channels + c];
                }
            Tensor dx = Tensor::zeros_like(go);
            for (int g = 0; g < groups; ++g) {
                double n = static_cast<double>(hw * static_cast<size_t>(cg));
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (size_t p = 0; p < hw; ++p)
                    for (int c = g * cg; c < (g + 1) * cg; ++c) {
                        double dxhat = go[p * channels + c] * gamma[static_cast<size_t>(c)];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat[p * channels + c];
                    }
                double istd = cached_istd[s][static_cast<size_t>(g)];
                for (size_t p = 0; p < hw; ++p)
                    for (int c = g * cg; c < (g + 1) * cg; ++c) {
                        double dxhat = go[p * channels + c] * gamma[static_cast<size_t>(c)];
                        dx[p * channels + c] = istd * (dxhat - sum_dxhat / n -
                                                       xhat[p * channels + c] * sum_dxhat_xhat / n);
                    }
            }
            dxs.push_back(std::move(dx));
        }
        return dxs;
    }

    void params(const std::string& prefix, std::vector<NamedParam>& out) {
        out.push_back({prefix + ".gamma", &gamma, &ggamma});
        out.push_back({prefix + ".beta", &beta, &gbeta});
    }
};

// Batch normalization across (batch, H, W) per channel. Training mode uses
// batch statistics and updates the running buffers; eval mode uses the
// running statistics. Running buffers are saved with the parameters but
// receive no gradient.
struct BatchNorm2d {
    int channels = 0;
    double eps = 1e-5;
    double momentum = 0.1;
    Tensor gamma, beta, ggamma, gbeta;
    Tensor running_mean, running_var;
    Batch cached_xhat;
    std::vector<double> cached_istd, cached_mean;

    BatchNorm2d() = default;
    explicit BatchNorm2d(int ch) : channels(ch) {
        gamma = Tensor::full({ch}, 1.0);
        beta = Tensor({ch});
        ggamma = Tensor({ch});
        gbeta = Tensor({ch});
        running_mean = Tensor({ch});
        running_var = Tensor::full({ch}, 1.0);
    }

    Batch forward(const Batch& xs, bool train) {
        Batch out;
        out.reserve(xs.size());
        if (!train) {
            for (const auto& x : xs) {
                Tensor y = Tensor::zeros_like(x);
                size_t hw = x.size() / static_cast<size_t>(channels);
                for (size_t p = 0; p < hw; ++p)
                    for (int c = 0; c < channels; ++c) {
                        size_t ci = static_cast<size_t>(c);
                        double xhat = (x[p * channels + c] - running_mean[ci]) /
                                      std::sqrt(running_var[ci] + eps);
                        y[p * channels + c] = gamma[ci] * xhat + beta[ci];
                    }
                out.push_back(std::move(y));
            }
            return out;
        }
        cached_mean.assign(static_cast<size_t>(channels), 0.0);
        cached_istd.assign(static_cast<size_t>(channels), 0.0);
        std::vector<double> var(static_cast<size_t>(channels), 0.0);
        size_t n = 0;
        for (const auto& x : xs) {
            size_t hw = x.size() / static_cast<size_t>(channels);
            n += hw;
            for (size_t p = 0; p < hw; ++p)
                for (int c = 0; c < channels; ++c) cached_mean[static_cast<size_t>(c)] += x[p * channels + c];
        }
        for (int c = 0; c < channels; ++c) cached_mean[static_cast<size_t>(c)] /= static_cast<double>(n);
        for (const auto& x : xs) {
            size_t hw = x.size() / static_cast<size_t>(channels);
            for (size_t p = 0; p < hw; ++p)
                for (int c = 0; c < channels; ++c) {
                    double d = x[p * channels + c] - cached_mean[static_cast<size_t>(c)];
                    var[static_cast<size_t>(c)] += d * d;
                }
        }
        for (int c = 0; c < channels; ++c) {
            size_t ci = static_cast<size_t>(c);
            var[ci] /= static_cast<double>(n);
            cached_istd[ci] = 1.0 / std::sqrt(var[ci] + eps);
            running_mean[ci] = (1.0 - momentum) * running_mean[ci] + momentum * cached_mean[ci];
            running_var[ci] = (1.0 - momentum) * running_var[ci] + momentum * var[ci];
        }
        cached_xhat.clear();
        for (const auto& x : xs) {
            Tensor xhat = Tensor::zeros_like(x);
            Tensor y = Tensor::zeros_like(x);
            size_t hw = x.size() / static_cast<size_t>(channels);
            for (size_t p = 0; p < hw; ++p)
                for (int c = 0; c < channels; ++c) {
                    size_t ci = static_cast<size_t>(c);
                    double xh = (x[p * channels + c] - cached_mean[ci]) * cached_istd[ci];
                    xhat[p * channels + c] = xh;
                    y[p * channels + c] = gamma[ci] * xh + beta[ci];
                }
            cached_xhat.push_back(std::move(xhat));
            out.push_back(std::move(y));
        }
        return out;
    }

    Batch backward(const Batch& gouts) {
        size_t n = 0;
        std::vector<double> sum_dxhat(static_cast<size_t>(channels), 0.0);
        std::vector<double> sum_dxhat_xhat(static_cast<size_t>(channels), 0.0);
        for (size_t s = 0; s < gouts.size(); ++s) {
            const Tensor& go = gouts[s];
            const Tensor& xhat = cached_xhat[s];
            size_t hw = go.size() / static_cast<size_t>(channels);
            n += hw;
            for (size_t p = 0; p < hw; ++p)
                for (int c = 0; c < channels; ++c) {
                    size_t ci = static_cast<size_t>(c);
                    double g = go[p * channels + c];
                    ggamma[ci] += g * xhat[p * channels + c];
                    gbeta[ci] += g;
                    double dxhat = g * gamma[ci];
                    sum_dxhat[ci] += dxhat;
                    sum_dxhat_xhat[ci] += dxhat * xhat[p * channels + c];
                }
        }
        Batch dxs;
        dxs.reserve(gouts.size());
        double dn = static_cast<double>(n);
        for (size_t s = 0; s < gouts.size(); ++s) {
            const Tensor& go = gouts[s];
            const Tensor& xhat = cached_xhat[s];
            Tensor dx = Tensor::zeros_like(go);
            size_t hw = go.size() / static_cast<size_t>(channels);
            for (size_t p = 0; p < hw; ++p)
                for (int c = 0; c < channels; ++c) {
                    size_t ci = static_cast<size_t>(c);
                    double dxhat = go[p * channels + c] * gamma[ci];
                    dx[p * channels + c] = cached_istd[ci] * (dxhat - sum_dxhat[ci] / dn -
                                                              xhat[p * channels + c] * sum_dxhat_xhat[ci] / dn);
                }
            dxs.push_back(std::move(dx));
        }
        return dxs;
    }

    void params(const std::string& prefix, std::vector<NamedParam>& out) {
        out.push_back({prefix + ".gamma", &gamma, &ggamma});
        out.push_back({prefix + ".beta", &beta, &gbeta});
    }
};

// --- pooling and resampling --------------------------------------------------------

// 2x2 max pooling, stride 2, ceil mode (boundary windows shrink; a 1x1 input
// passes through).
struct MaxPool2 {
    std::vector<std::vector<int>> cached_argmax;  // flat input index per output element
    std::vector<std::array<int, 3>> cached_dims;  // h, w, c per sample

    static int out_len(int n) { return (n + 1) / 2; }

    Batch forward(const Batch& xs, bool train) {
        if (train) {
            cached_argmax.assign(xs.size(), {});
            cached_dims.assign(xs.size(), {});
        }
        Batch out;
        out.reserve(xs.size());
        for (size_t s = 0; s < xs.size(); ++s) {
            const Tensor& x = xs[s];
            int h = x.height(), w = x.width(), ch = x.channels();
            int oh = out_len(h), ow = out_len(w);
            Tensor y(oh, ow, ch);
            std::vector<int> argmax;
            if (train) argmax.resize(static_cast<size_t>(oh) * ow * ch);
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    for (int c = 0; c < ch; ++c) {
                        double best = -std::numeric_limits<double>::infinity();
                        int best_idx = -1;
                        for (int dy = 0; dy < 2; ++dy) {
                            int iy = 2 * oy + dy;
                            if (iy >= h) continue;
                            for (int dx = 0; dx < 2; ++dx) {
                                int ix = 2 * ox + dx;
                                if (ix >= w) continue;
                                int idx = (iy * w + ix) * ch + c;
                                if (x[static_cast<size_t>(idx)] > best) {
                                    best = x[static_cast<size_t>(idx)];
                                    best_idx = idx;
                                }
                            }
                        }
                        y.at(oy, ox, c) = best;
                        if (train) argmax[(static_cast<size_t>(oy) * ow + ox) * ch + c] = best_idx;
                    }
                }
            }
            if (train) {
                cached_argmax[s] = std::move(argmax);
                cached_dims[s] = {h, w, ch};
            }
            out.push_back(std::move(y));
        }
        return out;
    }

    Batch backward(const Batch& gouts) {
        Batch dxs;
        dxs.reserve(gouts.size());
        for (size_t s = 0; s < gouts.size(); ++s) {
            auto [h, w, ch] = cached_dims[s];
            Tensor dx(h, w, ch);
            const auto& argmax = cached_argmax[s];
            for (size_t i = 0; i < gouts[s].size(); ++i) {
                dx[static_cast<size_t>(argmax[i])] += gouts[s][i];
            }
            dxs.push_back(std::move(dx));
        }
        return dxs;
    }
};

// Nearest-neighbour 2x upsampling.
struct Upsample2x {
    Batch forward(const Batch& xs, bool) {
        Batch out;
        out.reserve(xs.size());
        for (const auto& x : xs) {
            int h = x.height(), w = x.width(), ch = x.channels();
            Tensor y(2 * h, 2 * w, ch);
            for (int yy = 0; yy < 2 * h; ++yy)
                for (int xx = 0; xx < 2 * w; ++xx)
                    for (int c = 0; c < ch; ++c) y.at(yy, xx, c) = x.at(yy / 2, xx / 2, c);
            out.push_back(std::move(y));
        }
        return out;
    }
    Batch backward(const Batch& gouts) {
        Batch dxs;
        dxs.reserve(gouts.size());
        for (const auto& go : gouts) {
            int oh = go.height(), ow = go.width(), ch = go.channels();
            Tensor dx(oh / 2, ow / 2, ch);
            for (int yy = 0; yy < oh; ++yy)
                for (int xx = 0; xx < ow; ++xx)
                    for (int c = 0; c < ch; ++c) dx.at(yy / 2, xx / 2, c) += go.at(yy, xx, c);
            dxs.push_back(std::move(dx));
        }
        return dxs;
    }
};

// --- channel attention ----------------------------------------------------------

// Simplified channel attention: per-channel scale from globally pooled
// features, y = x * (W * mean_hw(x) + b).
struct ChannelGate {
    Linear lin;
    Batch cached_x;
    Batch cached_scale;   // per sample, {C}
    Batch cached_pooled;  // per sample, {C}

    ChannelGate() = default;
    explicit ChannelGate(int ch) : lin(ch, ch) {}

    void init(Rng& rng) {
        // Start near identity: zero weights, unit bias.
        lin.w.fill(0.0);
        for (size_t i = 0; i < lin.b.size(); ++i) lin.b[i] = 1.0;
        (void)rng;
    }

    Batch forward(const Batch& xs, bool train) {
        int ch = lin.in_dim;
        Batch pooled;
        pooled.reserve(xs.size());
        for (const auto& x : xs) {
            Tensor p({ch});
            size_t hw = x.size() / static_cast<size_t>(ch);
            for (size_t i = 0; i < hw; ++i)
                for (int c = 0; c < ch; ++c) p[static_cast<size_t>(c)] += x[i * ch + c];
            for (int c = 0; c < ch; ++c) p[static_cast<size_t>(c)] /= static_cast<double>(hw);
            pooled.push_back(std::move(p));
        }
        Batch scale = lin.forward(pooled, train);
        Batch out;
        out.reserve(xs.size());
        for (size_t s = 0; s < xs.size(); ++s) {
            Tensor y = xs[s];
            size_t hw = y.size() / static_cast<size_t>(ch);
            for (size_t i = 0; i < hw; ++i)
                for (int c = 0; c < ch; ++c) y[i * ch + c] *= scale[s][static_cast<size_t>(c)];
            out.push_back(std::move(y));
        }
        if (train) {
            cached_x = xs;
            cached_scale = scale;
            cached_pooled = std::move(pooled);
        }
        return out;
    }

    Batch backward(const Batch& gouts) {
        int ch = lin.in_dim;
        Batch dscale;
        dscale.reserve(gouts.size());
        Batch dxs;
        dxs.reserve(gouts.size());
        for (size_t s = 0; s < gouts.size(); ++s) {
            const Tensor& go = gouts[s];
            const Tensor& x = cached_x[s];
            Tensor ds({ch});
            Tensor dx = Tensor::zeros_like(x);
            size_t hw = x.size() / static_cast<size_t>(ch);
            for (size_t i = 0; i < hw; ++i)
                for (int c = 0; c < ch; ++c) {
                    size_t ci = static_cast<size_t>(c);
                    ds[ci] += go[i * ch + c] * x[i * ch + c];
                    dx[i * ch + c] = go[i * ch + c] * cached_scale[s][ci];
                }
            dscale.push_back(std::move(ds));
            dxs.push_back(std::move(dx));
        }
        Batch dpooled = lin.backward(dscale);
        for (size_t s = 0; s < dxs.size(); ++s) {
            size_t hw = dxs[s].size() / static_cast<size_t>(ch);
            for (size_t i = 0; i < hw; ++i)
                for (int c = 0; c < ch; ++c)
                    dxs[s][i * ch + c] += dpooled[s][static_cast<size_t>(c)] / static_cast<double>(hw);
        }
        return dxs;
    }

    void params(const std::string& prefix, std::vector<NamedParam>& out) {
        lin.params(prefix + ".lin", out);
    }
};

// --- small helpers ------------------------------------------------------------------

inline Batch add_batches(const Batch& a, const Batch& b) {
    Batch out = a;
    for (size_t s = 0; s < out.size(); ++s) out[s] += b[s];
    return out;
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw std::invalid_argument("concat_channels: spatial mismatch");
    }
    int ca = a.channels(), cb = b.channels();
    Tensor out(a.height(), a.width(), ca + cb);
    size_t hw = static_cast<size_t>(a.height()) * a.width();
    for (size_t p = 0; p < hw; ++p) {
        for (int c = 0; c < ca; ++c) out[p * (ca + cb) + c] = a[p * ca + c];
        for (int c = 0; c < cb; ++c) out[p * (ca + cb) + ca + c] = b[p * cb + c];
    }
    return out;
}

inline void split_channels(const Tensor& joint, Tensor& a, Tensor& b) {
    int ca = a.channels(), cb = b.channels();
    size_t hw = static_cast<size_t>(joint.height()) * joint.width();
    for (size_t p = 0; p < hw; ++p) {
        for (int c = 0; c < ca; ++c) a[p * ca + c] = joint[p * (ca + cb) + c];
        for (int c = 0; c < cb; ++c) b[p * cb + c] = joint[p * (ca + cb) + ca + c];
    }
}

}  // namespace recongen::nn
