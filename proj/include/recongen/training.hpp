#pragma once

// Losses, AdamW, EMA shadows and the training loops: reconstructive stage,
// generative stage on frozen-reconstructor residuals, and the ablation modes
// (joint optimization and intermediate supervision). Batches are data-parallel
// across workers with per-sample gradient reduction in sample order, so the
// worker count never changes the result.

#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "recongen/data.hpp"
#include "recongen/diffusion.hpp"
#include "recongen/metrics.hpp"
#include "recongen/nn/networks.hpp"
#include "recongen/parallel.hpp"
#include "recongen/rng.hpp"

namespace recongen {

// --- losses ------------------------------------------------------------------

inline double loss_lp(const Tensor& pred, const Tensor& target, int p) {
    pred.require_same_shape(target, "loss");
    if (p != 1 && p != 2) throw std::invalid_argument("loss: p must be 1 or 2");
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = target[i] - pred[i];
        acc += p == 2 ? d * d : std::abs(d);
    }
    return acc / static_cast<double>(pred.size());
}

inline Tensor loss_lp_grad(const Tensor& pred, const Tensor& target, int p, double scale = 1.0) {
    Tensor g = Tensor::zeros_like(pred);
    double n = static_cast<double>(pred.size());
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - target[i];
        if (p == 2) g[i] = scale * 2.0 * d / n;
        else g[i] = scale * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
    }
    return g;
}

inline double loss_reconstructive(const Tensor& pred, const Tensor& y, int p = 2) {
    return loss_lp(pred, y, p);
}

inline double loss_generative(const Tensor& eps_hat, const Tensor& eps, int p = 1) {
    return loss_lp(eps_hat, eps, p);
}

// --- optimizer -----------------------------------------------------------------

// Adam with decoupled weight decay. Moments are kept per parameter tensor,
// aligned by index with the param list handed to step().
struct AdamW {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    int t = 0;
    std::vector<Tensor> m, v;

    void step(const std::vector<nn::NamedParam>& params) {
        if (m.empty()) {
            for (const auto& p : params) {
                m.push_back(Tensor::zeros_like(*p.value));
                v.push_back(Tensor::zeros_like(*p.value));
            }
        }
        if (m.size() != params.size()) throw std::logic_error("AdamW: param list changed size");
        for (const auto& p : params) {
            if (!p.grad->all_finite()) {
                throw std::runtime_error("AdamW: non-finite gradient in " + p.name +
                                         "; aborting step");
            }
        }
        ++t;
        double bc1 = 1.0 - std::pow(beta1, t);
        double bc2 = 1.0 - std::pow(beta2, t);
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor& value = *params[i].value;
            const Tensor& grad = *params[i].grad;
            for (size_t j = 0; j < value.size(); ++j) {
                double g = grad[j];
                m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * g;
                v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * g * g;
                double mhat = m[i][j] / bc1;
                double vhat = v[i][j] / bc2;
                value[j] -= lr * mhat / (std::sqrt(vhat) + eps);
                value[j] -= lr * weight_decay * value[j];
            }
        }
    }
};

inline double global_grad_norm(const std::vector<nn::NamedParam>& params) {
    double sq = 0.0;
    for (const auto& p : params)
        for (size_t j = 0; j < p.grad->size(); ++j) sq += (*p.grad)[j] * (*p.grad)[j];
    return std::sqrt(sq);
}

inline void clip_grad_norm(const std::vector<nn::NamedParam>& params, double max_norm) {
    double norm = global_grad_norm(params);
    if (norm <= max_norm || norm == 0.0) return;
    double scale = max_norm / norm;
    for (const auto& p : params)
        for (size_t j = 0; j < p.grad->size(); ++j) (*p.grad)[j] *= scale;
}

inline void zero_grads(const std::vector<nn::NamedParam>& params) {
    for (const auto& p : params) p.grad->fill(0.0);
}

// --- EMA -------------------------------------------------------------------------

struct Ema {
    double decay = 0.9999;
    std::vector<std::pair<std::string, Tensor>> shadow;

    Ema() = default;
    Ema(double d, const std::vector<nn::NamedParam>& params) : decay(d) {
        for (const auto& p : params) shadow.emplace_back(p.name, *p.value);
    }

    void update(const std::vector<nn::NamedParam>& params) {
        if (shadow.size() != params.size()) throw std::logic_error("Ema: param list mismatch");
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor& s = shadow[i].second;
            const Tensor& live = *params[i].value;
            s.require_same_shape(live, "Ema::update");
            for (size_t j = 0; j < s.size(); ++j) s[j] = decay * s[j] + (1.0 - decay) * live[j];
        }
    }

    void copy_to(const std::vector<nn::NamedParam>& params) const {
        if (shadow.size() != params.size()) throw std::logic_error("Ema: param list mismatch");
        for (size_t i = 0; i < params.size(); ++i) *params[i].value = shadow[i].second;
    }

    std::map<std::string, Tensor> as_map() const {
        std::map<std::string, Tensor> out;
        for (const auto& [name, t] : shadow) out[name] = t;
        return out;
    }
};

inline void ema_update(Ema& ema, const std::vector<nn::NamedParam>& live) { ema.update(live); }

// --- training configuration ---------------------------------------------------------

enum class TrainStage { reconstructive, generative, joint, intermediate_supervision, two_stage };

inline const char* to_string(TrainStage s) {
    switch (s) {
        case TrainStage::reconstructive: return "reconstructive";
        case TrainStage::generative: return "generative";
        case TrainStage::joint: return "joint";
        case TrainStage::intermediate_supervision: return "intermediate_supervision";
        case TrainStage::two_stage: return "two_stage";
    }
    return "?";
}

enum class Condition { noisy, initial_estimate };

struct TrainConfig {
    TrainStage stage = TrainStage::reconstructive;
    double learning_rate = 1e-4;
    double weight_decay = 1e-4;
    double ema_decay = 0.9999;
    int batch_size = 16;
    int max_steps = 2000;
    int patch_size = 48;
    int loss_p_recon = 2;
    int loss_p_gen = 1;
    bool augment_data = true;
    bool continuous_gamma = false;
    double residual_scale = 0.0;  // generative stages; 0 = estimate from data
    double grad_clip = 1.0;  // generative/joint stages; 0 disables
    Condition condition = Condition::noisy;
    int eval_interval = 200;
    double plateau_delta_db = 0.01;
    int plateau_window = 5;
    uint64_t seed = 1;
    int workers = 2;

    void validate() const {
        if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
        if (ema_decay < 0.0 || ema_decay >= 1.0) throw std::invalid_argument("TrainConfig: ema_decay in [0,1)");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size >= 1");
        if (loss_p_recon != 1 && loss_p_recon != 2) throw std::invalid_argument("TrainConfig: loss_p_recon in {1,2}");
        if (loss_p_gen != 1 && loss_p_gen != 2) throw std::invalid_argument("TrainConfig: loss_p_gen in {1,2}");
    }
};

struct LogRow {
    int step = 0;
    double loss = 0.0;
    double psnr = 0.0;
    double perceptual = 0.0;
};

inline void write_train_log(std::ostream& os, const std::vector<LogRow>& rows) {
    os << "step\tloss\tpsnr\tperceptual\n";
    os.precision(10);
    for (const auto& r : rows) {
        os << r.step << "\t" << r.loss << "\t" << r.psnr << "\t" << r.perceptual << "\n";
    }
}

// --- shared machinery ----------------------------------------------------------------

namespace detail {

// Deterministic patch sampling: sample b of step s draws from a stream keyed
// on (seed, step, b) only.
inline ImagePair draw_patch(const std::vector<ImagePair>& dataset, const TrainConfig& cfg, int step,
                            int b) {
    Rng rng(derive_seed(cfg.seed, 0xba7c4, static_cast<uint64_t>(step), static_cast<uint64_t>(b)));
    const ImagePair& img = dataset[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(dataset.size()) - 1))];
    ImagePair patch = img.second.height() == cfg.patch_size && img.second.width() == cfg.patch_size
                          ? img
                          : crop_patch(img, cfg.patch_size, rng);
    if (cfg.augment_data) patch = augment(patch, rng);
    return patch;
}

// Sum per-sample gradient snapshots into the master in sample order.
inline void reduce_grads(const std::vector<nn::NamedParam>& master,
                         const std::vector<std::vector<Tensor>>& per_sample) {
    for (const auto& sample : per_sample) {
        for (size_t i = 0; i < master.size(); ++i) *master[i].grad += sample[i];
    }
}

inline std::vector<Tensor> snapshot_grads(const std::vector<nn::NamedParam>& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(*p.grad);
    return out;
}

// RMS of probe residuals y - r(x); floors at 1e-3 so a perfect
// reconstructor does not collapse the scale to zero.
inline double estimate_residual_scale(const std::vector<ImagePair>& dataset, nn::ReconNet recon,
                                      const TrainConfig& cfg) {
    double acc = 0.0;
    size_t count = 0;
    const int probes = 32;
    for (int i = 0; i < probes; ++i) {
        ImagePair patch = draw_patch(dataset, cfg, -1 - i, i);
        Tensor r = recon.forward(patch.first);
        for (size_t j = 0; j < r.size(); ++j) {
            double d = patch.second[j] - r[j];
            acc += d * d;
        }
        count += r.size();
    }
    return std::max(std::sqrt(acc / static_cast<double>(count)), 1e-3);
}

// Plateau rule: stop when the best value of the trailing window improves on
// the best value before it by less than delta.
inline bool plateaued(const std::vector<double>& history, int window, double delta) {
    if (static_cast<int>(history.size()) < window + 1) return false;
    double best_recent = -1e300, best_before = -1e300;
    size_t cut = history.size() - static_cast<size_t>(window);
    for (size_t i = 0; i < history.size(); ++i) {
        if (i < cut) best_before = std::max(best_before, history[i]);
        else best_recent = std::max(best_recent, history[i]);
    }
    return best_recent - best_before < delta;
}

}  // namespace detail

// --- reconstructive stage ---------------------------------------------------------------

struct ReconTrainResult {
    nn::ReconNet net;        // live weights
    nn::ReconNet eval_net;   // EMA weights
    Ema ema;
    std::vector<LogRow> log;
    int steps_run = 0;
};

inline double eval_recon_psnr(nn::ReconNet& net, const std::vector<ImagePair>& val, int workers) {
    std::vector<double> scores(val.size());
    parallel_for(val.size(), workers, [&](size_t i) {
        nn::ReconNet local = net;  // forward caches are per-instance
        Tensor pred = local.forward(val[i].first);
        scores[i] = psnr(pred, val[i].second);
    });
    double sum = 0.0;
    for (double s : scores) sum += s;
    return sum / static_cast<double>(scores.size());
}

inline ReconTrainResult train_reconstructive(const std::vector<ImagePair>& train_set,
                                             const std::vector<ImagePair>& val_set,
                                             const nn::ReconNetConfig& net_cfg,
                                             const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.empty()) throw std::invalid_argument("train_reconstructive: empty dataset");
    ReconTrainResult result;
    result.net = nn::ReconNet(net_cfg);
    Rng init_rng(derive_seed(cfg.seed, 0x1217));
    result.net.init(init_rng);
    auto params = result.net.named_params();
    result.ema = Ema(cfg.ema_decay, params);
    AdamW opt;
    opt.lr = cfg.learning_rate;
    opt.weight_decay = cfg.weight_decay;

    std::vector<double> psnr_history;
    int B = cfg.batch_size;
    for (int step = 0; step < cfg.max_steps; ++step) {
        std::vector<std::vector<Tensor>> sample_grads(static_cast<size_t>(B));
        std::vector<double> sample_losses(static_cast<size_t>(B), 0.0);
        parallel_for(static_cast<size_t>(B), cfg.workers, [&](size_t b) {
            nn::ReconNet worker = result.net;
            auto wparams = worker.named_params();
            zero_grads(wparams);
            ImagePair patch = detail::draw_patch(train_set, cfg, step, static_cast<int>(b));
            nn::Batch pred = worker.forward_train({patch.first});
            sample_losses[b] = loss_reconstructive(pred[0], patch.second, cfg.loss_p_recon);
            Tensor g = loss_lp_grad(pred[0], patch.second, cfg.loss_p_recon, 1.0 / B);
            worker.backward({g});
            sample_grads[b] = detail::snapshot_grads(wparams);
        });
        zero_grads(params);
        detail::reduce_grads(params, sample_grads);
        for (double l : sample_losses) {
            if (!std::isfinite(l)) {
                throw std::runtime_error("train_reconstructive: non-finite loss at step " +
                                         std::to_string(step));
            }
        }
        opt.step(params);
        result.ema.update(params);
        result.steps_run = step + 1;

        if ((step + 1) % cfg.eval_interval == 0 || step + 1 == cfg.max_steps) {
            double batch_loss = 0.0;
            for (double l : sample_losses) batch_loss += l;
            batch_loss /= B;
            nn::ReconNet eval_net = result.net;
            result.ema.copy_to(eval_net.named_params());
            double val_psnr = val_set.empty() ? 0.0 : eval_recon_psnr(eval_net, val_set, cfg.workers);
            result.log.push_back({step + 1, batch_loss, val_psnr, 0.0});
            if (!val_set.empty()) {
                psnr_history.push_back(val_psnr);
                if (detail::plateaued(psnr_history, cfg.plateau_window, cfg.plateau_delta_db)) break;
            }
        }
    }
    result.eval_net = result.net;
    result.ema.copy_to(result.eval_net.named_params());
    return result;
}

// --- generative stage ----------------------------------------------------------------------

struct GenTrainResult {
    nn::EpsNet net;
    nn::EpsNet eval_net;
    Ema ema;
    std::vector<LogRow> log;
};

// Trains the noise predictor on residuals induced by the frozen
// reconstructor. recon must already carry evaluation (EMA) weights.
inline GenTrainResult train_generative(const std::vector<ImagePair>& train_set,
                                       const nn::ReconNet& recon, const NoiseSchedule& schedule,
                                       const nn::EpsNetConfig& net_cfg, const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.empty()) throw std::invalid_argument("train_generative: empty dataset");
    GenTrainResult result;
    nn::EpsNetConfig resolved_cfg = net_cfg;
    resolved_cfg.residual_scale = cfg.residual_scale > 0.0
                                      ? cfg.residual_scale
                                      : detail::estimate_residual_scale(train_set, recon, cfg);
    result.net = nn::EpsNet(resolved_cfg);
    Rng init_rng(derive_seed(cfg.seed, 0x9e7));
    result.net.init(init_rng);
    auto params = result.net.named_params();
    result.ema = Ema(cfg.ema_decay, params);
    AdamW opt;
    opt.lr = cfg.learning_rate;
    opt.weight_decay = cfg.weight_decay;

    int B = cfg.batch_size;
    for (int step = 0; step < cfg.max_steps; ++step) {
        std::vector<std::vector<Tensor>> sample_grads(static_cast<size_t>(B));
        std::vector<double> sample_losses(static_cast<size_t>(B), 0.0);
        parallel_for(static_cast<size_t>(B), cfg.workers, [&](size_t b) {
            nn::EpsNet worker = result.net;
            nn::ReconNet frozen = recon;
            auto wparams = worker.named_params();
            zero_grads(wparams);
            ImagePair patch = detail::draw_patch(train_set, cfg, step, static_cast<int>(b));
            Tensor r = frozen.forward(patch.first);
            Tensor d0 = (patch.second - r) * (1.0 / resolved_cfg.residual_scale);
            Rng diff_rng(derive_seed(cfg.seed, 0xd1ff, static_cast<uint64_t>(step), b));
            DiffusionTrainingSample s = make_training_sample(d0, schedule, diff_rng, cfg.continuous_gamma);
            Tensor cond = cfg.condition == Condition::noisy ? patch.first : r;
            nn::Batch eps_hat = worker.forward_train({s.d_noised}, {cond}, {s.gamma});
            sample_losses[b] = loss_generative(eps_hat[0], s.epsilon, cfg.loss_p_gen);
            Tensor g = loss_lp_grad(eps_hat[0], s.epsilon, cfg.loss_p_gen, 1.0 / B);
            worker.backward({g});
            sample_grads[b] = detail::snapshot_grads(wparams);
        });
        zero_grads(params);
        detail::reduce_grads(params, sample_grads);
        if (cfg.grad_clip > 0.0) clip_grad_norm(params, cfg.grad_clip);
        opt.step(params);
        result.ema.update(params);

        if ((step + 1) % cfg.eval_interval == 0 || step + 1 == cfg.max_steps) {
            double batch_loss = 0.0;
            for (double l : sample_losses) batch_loss += l;
            batch_loss /= B;
            result.log.push_back({step + 1, batch_loss, 0.0, 0.0});
        }
    }
    result.eval_net = result.net;
    result.ema.copy_to(result.eval_net.named_params());
    return result;
}

// --- ablation modes ---------------------------------------------------------------------------

struct AblationResult {
    nn::ReconNet recon;
    nn::ReconNet recon_eval;
    nn::EpsNet gen;
    nn::EpsNet gen_eval;
    Ema recon_ema, gen_ema;
};

// joint: single optimization of L_recon + L_gen with gradients flowing
// through both nets (including through the residual target).
// intermediate_supervision: same single optimization, but the residual target
// and condition are detached, so the reconstructor sees only its pixel loss.
// two_stage: the sequential scheme, included for mode equivalence.
inline AblationResult train_ablation_mode(TrainStage mode, const std::vector<ImagePair>& train_set,
                                          const std::vector<ImagePair>& val_set,
                                          const NoiseSchedule& schedule,
                                          const nn::ReconNetConfig& recon_cfg,
                                          const nn::EpsNetConfig& eps_cfg, const TrainConfig& cfg) {
    cfg.validate();
    if (mode == TrainStage::two_stage) {
        TrainConfig rc = cfg;
        rc.stage = TrainStage::reconstructive;
        ReconTrainResult rr = train_reconstructive(train_set, val_set, recon_cfg, rc);
        TrainConfig gc = cfg;
        gc.stage = TrainStage::generative;
        GenTrainResult gr = train_generative(train_set, rr.eval_net, schedule, eps_cfg, gc);
        AblationResult out;
        out.recon = std::move(rr.net);
        out.recon_eval = std::move(rr.eval_net);
        out.recon_ema = std::move(rr.ema);
        out.gen = std::move(gr.net);
        out.gen_eval = std::move(gr.eval_net);
        out.gen_ema = std::move(gr.ema);
        return out;
    }
    if (mode != TrainStage::joint && mode != TrainStage::intermediate_supervision) {
        throw std::invalid_argument("train_ablation_mode: invalid mode");
    }
    bool detach = mode == TrainStage::intermediate_supervision;

    AblationResult out;
    out.recon = nn::ReconNet(recon_cfg);
    Rng init_rng(derive_seed(cfg.seed, 0x1217));
    out.recon.init(init_rng);
    nn::EpsNetConfig resolved_eps = eps_cfg;
    resolved_eps.residual_scale = cfg.residual_scale > 0.0
                                      ? cfg.residual_scale
                                      : detail::estimate_residual_scale(train_set, out.recon, cfg);
    out.gen = nn::EpsNet(resolved_eps);
    Rng gen_rng(derive_seed(cfg.seed, 0x9e7));
    out.gen.init(gen_rng);
    auto recon_params = out.recon.named_params();
    auto gen_params = out.gen.named_params();
    std::vector<nn::NamedParam> all_params = recon_params;
    all_params.insert(all_params.end(), gen_params.begin(), gen_params.end());
    out.recon_ema = Ema(cfg.ema_decay, recon_params);
    out.gen_ema = Ema(cfg.ema_decay, gen_params);
    AdamW opt;
    opt.lr = cfg.learning_rate;
    opt.weight_decay = cfg.weight_decay;

    int B = cfg.batch_size;
    for (int step = 0; step < cfg.max_steps; ++step) {
        std::vector<std::vector<Tensor>> sample_grads(static_cast<size_t>(B));
        parallel_for(static_cast<size_t>(B), cfg.workers, [&](size_t b) {
            nn::ReconNet wrecon = out.recon;
            nn::EpsNet wgen = out.gen;
            auto wr = wrecon.named_params();
            auto wg = wgen.named_params();
            std::vector<nn::NamedParam> wall = wr;
            wall.insert(wall.end(), wg.begin(), wg.end());
            zero_grads(wall);

            ImagePair patch = detail::draw_patch(train_set, cfg, step, static_cast<int>(b));
            nn::Batch r_out = wrecon.forward_train({patch.first});
            double inv_scale = 1.0 / resolved_eps.residual_scale;
            Tensor d0 = (patch.second - r_out[0]) * inv_scale;
            Rng diff_rng(derive_seed(cfg.seed, 0xd1ff, static_cast<uint64_t>(step), b));
            DiffusionTrainingSample s = make_training_sample(d0, schedule, diff_rng, cfg.continuous_gamma);
            Tensor cond = cfg.condition == Condition::noisy ? patch.first : r_out[0];
            nn::Batch eps_hat = wgen.forward_train({s.d_noised}, {cond}, {s.gamma});

            // generative term
            Tensor g_eps = loss_lp_grad(eps_hat[0], s.epsilon, cfg.loss_p_gen, 1.0 / B);
            nn::EpsNet::InputGrads igrads = wgen.backward({g_eps});
            // reconstructive pixel term
            Tensor g_recon = loss_lp_grad(r_out[0], patch.second, cfg.loss_p_recon, 1.0 / B);
            if (!detach) {
                // d_noised = sqrt(gamma)/scale * (y - r) + ...
                //   =>  dL/dr -= sqrt(gamma)/scale * dL/dd
                double sg = std::sqrt(s.gamma) * inv_scale;
                for (size_t i = 0; i < g_recon.size(); ++i) g_recon[i] -= sg * igrads.d[0][i];
                if (cfg.condition == Condition::initial_estimate) g_recon += igrads.cond[0];
            }
            wrecon.backward({g_recon});
            sample_grads[b] = detail::snapshot_grads(wall);
        });
        zero_grads(all_params);
        detail::reduce_grads(all_params, sample_grads);
        if (cfg.grad_clip > 0.0) clip_grad_norm(all_params, cfg.grad_clip);
        opt.step(all_params);
        out.recon_ema.update(recon_params);
        out.gen_ema.update(gen_params);
    }
    out.recon_eval = out.recon;
    out.recon_ema.copy_to(out.recon_eval.named_params());
    out.gen_eval = out.gen;
    out.gen_ema.copy_to(out.gen_eval.named_params());
    return out;
}

}  // namespace recongen
