#pragma once

// Deterministic random source. mt19937_64 supplies the stream; the normal
// transform is our own Box-Muller so sequences are identical across standard
// library implementations. Child streams are derived by hashing (seed, ids...)
// with splitmix64, which keeps parallel work order-independent.

#include <cmath>
#include <cstdint>
#include <random>

#include "recongen/tensor.hpp"

namespace recongen {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t h = splitmix64(seed ^ 0x2545f4914f6cdd1dULL);
    h = splitmix64(h ^ splitmix64(a));
    h = splitmix64(h ^ splitmix64(b + 0x9e3779b97f4a7c15ULL));
    h = splitmix64(h ^ splitmix64(c + 0x6a09e667f3bcc909ULL));
    return h;
}

class Rng {
public:
    explicit Rng(uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    uint64_t seed() const { return seed_; }

    uint64_t bits() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi], rejection sampled so it is unbiased.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
        uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        uint64_t r;
        do {
            r = engine_();
        } while (r >= limit);
        return lo + static_cast<int64_t>(r % range);
    }

    // Standard normal, Box-Muller with caching of the second variate.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    Tensor normal_tensor(const std::vector<int>& shape) {
        Tensor t(shape);
        for (size_t i = 0; i < t.size(); ++i) t[i] = normal();
        return t;
    }

    Tensor normal_like(const Tensor& ref) { return normal_tensor(ref.shape()); }

    // Child stream keyed on ids. Derivation uses the construction seed, not
    // the stream position, so children are independent of consumption order.
    Rng child(uint64_t a, uint64_t b = 0, uint64_t c = 0) const {
        return Rng(derive_seed(seed_, a, b, c));
    }

private:
    uint64_t seed_ = 0;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace recongen
