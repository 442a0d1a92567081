#pragma once

// Noise-schedule construction and the diffusion process itself: forward
// noising of residual images, training-pair synthesis and the stochastic
// reverse update used at inference. All schedule arithmetic is double
// precision.

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "recongen/rng.hpp"
#include "recongen/tensor.hpp"

namespace recongen {

// Per-step noise schedule. betas/alphas/gammas are 1-indexed through the
// accessors; gamma(0) == 1 by convention. gamma is the running product of
// alphas and is strictly decreasing for any valid schedule.
struct NoiseSchedule {
    int num_steps = 0;
    double beta_start = 0.0;
    double beta_end = 0.0;
    std::vector<double> betas;   // betas[t-1] = beta_t
    std::vector<double> alphas;  // 1 - beta_t
    std::vector<double> gammas;  // prod_{i<=t} alpha_i

    double beta(int t) const { return betas.at(static_cast<size_t>(t - 1)); }
    double alpha(int t) const { return alphas.at(static_cast<size_t>(t - 1)); }
    double gamma(int t) const {
        if (t == 0) return 1.0;
        return gammas.at(static_cast<size_t>(t - 1));
    }

    void require_step(int t) const {
        if (t < 1 || t > num_steps) {
            throw std::out_of_range("NoiseSchedule: step " + std::to_string(t) +
                                    " outside [1," + std::to_string(num_steps) + "]");
        }
    }
};

inline NoiseSchedule make_linear_schedule(int num_steps, double beta_start, double beta_end) {
    if (num_steps < 1) throw std::invalid_argument("make_linear_schedule: num_steps must be >= 1");
    if (!std::isfinite(beta_start) || !std::isfinite(beta_end)) {
        throw std::invalid_argument("make_linear_schedule: non-finite endpoint");
    }
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end) {
        throw std::invalid_argument("make_linear_schedule: need 0 < beta_start <= beta_end < 1");
    }
    NoiseSchedule s;
    s.num_steps = num_steps;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.betas.resize(static_cast<size_t>(num_steps));
    s.alphas.resize(static_cast<size_t>(num_steps));
    s.gammas.resize(static_cast<size_t>(num_steps));
    double running = 1.0;
    for (int t = 1; t <= num_steps; ++t) {
        double frac = num_steps == 1 ? 0.0
                                     : static_cast<double>(t - 1) / static_cast<double>(num_steps - 1);
        double b = beta_start + (beta_end - beta_start) * frac;
        s.betas[static_cast<size_t>(t - 1)] = b;
        s.alphas[static_cast<size_t>(t - 1)] = 1.0 - b;
        running *= 1.0 - b;
        s.gammas[static_cast<size_t>(t - 1)] = running;
    }
    return s;
}

// Inference-time schedules are constructed fresh with the requested step
// count; they never subsample the training schedule.
inline NoiseSchedule make_inference_schedule(int num_steps, double beta_start, double beta_end) {
    return make_linear_schedule(num_steps, beta_start, beta_end);
}

// Draw the training-time noise level: t uniform on {1..T} and the matching
// gamma_t. With continuous_level the gamma is instead drawn uniformly from
// (gamma_t, gamma_{t-1}], which conditions the model on levels between the
// grid points.
inline std::pair<int, double> sample_training_level(const NoiseSchedule& schedule, Rng& rng,
                                                    bool continuous_level = false) {
    if (schedule.num_steps < 1) throw std::invalid_argument("sample_training_level: empty schedule");
    int t = static_cast<int>(rng.uniform_int(1, schedule.num_steps));
    double g = schedule.gamma(t);
    if (continuous_level) {
        double hi = schedule.gamma(t - 1);
        g = g + (hi - g) * rng.uniform();
    }
    return {t, g};
}

// d_noised = sqrt(gamma) * d0 + sqrt(1-gamma) * eps, elementwise.
inline Tensor forward_sample(const Tensor& d0, double gamma, const Tensor& epsilon) {
    d0.require_same_shape(epsilon, "forward_sample");
    if (!(gamma > 0.0) || gamma > 1.0 || !std::isfinite(gamma)) {
        throw std::invalid_argument("forward_sample: gamma must be in (0,1]");
    }
    double a = std::sqrt(gamma);
    double b = std::sqrt(1.0 - gamma);
    Tensor out = Tensor::zeros_like(d0);
    for (size_t i = 0; i < out.size(); ++i) out[i] = a * d0[i] + b * epsilon[i];
    return out;
}

// One noisy-detail training pair plus the noise that produced it.
struct DiffusionTrainingSample {
    Tensor d_noised;
    double gamma = 0.0;
    int t = 0;
    Tensor epsilon;  // regression target
};

inline DiffusionTrainingSample make_training_sample(const Tensor& d0, const NoiseSchedule& schedule,
                                                    Rng& rng, bool continuous_level = false) {
    DiffusionTrainingSample s;
    auto [t, g] = sample_training_level(schedule, rng, continuous_level);
    s.t = t;
    s.gamma = g;
    s.epsilon = rng.normal_like(d0);
    s.d_noised = forward_sample(d0, g, s.epsilon);
    return s;
}

// Deterministic part of the reverse update:
//   (d_t - (1-alpha_t)/sqrt(1-gamma_t) * eps_hat) / sqrt(alpha_t)
inline Tensor reverse_step_mean(const Tensor& d_t, const Tensor& eps_hat,
                                const NoiseSchedule& schedule, int t) {
    schedule.require_step(t);
    d_t.require_same_shape(eps_hat, "reverse_step");
    double alpha = schedule.alpha(t);
    double gamma = schedule.gamma(t);
    if (!(gamma < 1.0)) {
        throw std::domain_error("reverse_step: gamma_t == 1 makes the update singular");
    }
    double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
    double coef = (1.0 - alpha) / std::sqrt(1.0 - gamma);
    Tensor out = Tensor::zeros_like(d_t);
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = inv_sqrt_alpha * (d_t[i] - coef * eps_hat[i]);
    }
    return out;
}

// Stochastic reverse update: reverse_step_mean plus sqrt(1-alpha_t) * z with
// z ~ N(0, I). When final_step_noiseless is set the additive term is skipped
// at t == 1.
inline Tensor reverse_step(const Tensor& d_t, const Tensor& eps_hat, const NoiseSchedule& schedule,
                           int t, Rng& rng, bool final_step_noiseless = true) {
    Tensor out = reverse_step_mean(d_t, eps_hat, schedule, t);
    if (!(final_step_noiseless && t == 1)) {
        double noise_scale = std::sqrt(1.0 - schedule.alpha(t));
        for (size_t i = 0; i < out.size(); ++i) out[i] += noise_scale * rng.normal();
    }
    return out;
}

// --- plain-text schedule manifest ------------------------------------------
// Only (T, beta_start, beta_end) are persisted; betas are regenerated.

inline void write_schedule_manifest(std::ostream& os, const NoiseSchedule& s) {
    os << "num_steps = " << s.num_steps << "\n";
    os.precision(17);
    os << "beta_start = " << s.beta_start << "\n";
    os << "beta_end = " << s.beta_end << "\n";
}

inline NoiseSchedule read_schedule_manifest(std::istream& is) {
    int num_steps = -1;
    double beta_start = -1.0, beta_end = -1.0;
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string key, eq;
        if (!(ls >> key >> eq) || eq != "=") continue;
        if (key == "num_steps") ls >> num_steps;
        else if (key == "beta_start") ls >> beta_start;
        else if (key == "beta_end") ls >> beta_end;
    }
    if (num_steps < 1 || beta_start < 0.0 || beta_end < 0.0) {
        throw std::runtime_error("read_schedule_manifest: missing or invalid fields");
    }
    return make_linear_schedule(num_steps, beta_start, beta_end);
}

}  // namespace recongen
