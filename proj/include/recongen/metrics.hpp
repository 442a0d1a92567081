#pragma once

// Distortion and perceptual quality measures. PSNR and SSIM follow their
// standard definitions; the perceptual distance is a pluggable interface
// whose default implementation compares images through a fixed bank of
// seed-determined random filters at three dyadic scales.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "recongen/rng.hpp"
#include "recongen/serialize.hpp"
#include "recongen/tensor.hpp"

namespace recongen {

inline double mse(const Tensor& a, const Tensor& b) {
    a.require_same_shape(b, "mse");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

// 10*log10(peak^2 / MSE); identical images report +infinity. Inputs are
// clamped to [0,1] unless clamp_inputs is disabled (raw noisy tensors live
// outside [0,1] and clamping would bias their statistics).
inline double psnr(const Tensor& a, const Tensor& b, double peak = 1.0, bool clamp_inputs = true) {
    double m = clamp_inputs ? mse(a.clamped(0.0, 1.0), b.clamped(0.0, 1.0)) : mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(static_cast<size_t>(size) * size);
    double half = (size - 1) / 2.0;
    double sum = 0.0;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double dy = y - half, dx = x - half;
            double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            w[static_cast<size_t>(y) * size + x] = v;
            sum += v;
        }
    }
    for (double& v : w) v /= sum;
    return w;
}

}  // namespace detail

// Mean local SSIM over all valid (fully inside) windows, channels averaged.
inline double ssim(const Tensor& a, const Tensor& b, int window = 11, double sigma = 1.5,
                   double k1 = 0.01, double k2 = 0.03, double peak = 1.0) {
    a.require_same_shape(b, "ssim");
    if (a.height() < window || a.width() < window) {
        throw std::invalid_argument("ssim: image smaller than window");
    }
    Tensor ca = a.clamped(0.0, 1.0);
    Tensor cb = b.clamped(0.0, 1.0);
    std::vector<double> w = detail::gaussian_window(window, sigma);
    double c1 = (k1 * peak) * (k1 * peak);
    double c2 = (k2 * peak) * (k2 * peak);
    double total = 0.0;
    size_t count = 0;
    for (int ch = 0; ch < a.channels(); ++ch) {
        for (int y = 0; y + window <= a.height(); ++y) {
            for (int x = 0; x + window <= a.width(); ++x) {
                double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
                for (int wy = 0; wy < window; ++wy) {
                    for (int wx = 0; wx < window; ++wx) {
                        double wt = w[static_cast<size_t>(wy) * window + wx];
                        double pa = ca.at(y + wy, x + wx, ch);
                        double pb = cb.at(y + wy, x + wx, ch);
                        ma += wt * pa;
                        mb += wt * pb;
                        va += wt * pa * pa;
                        vb += wt * pb * pb;
                        cov += wt * pa * pb;
                    }
                }
                va -= ma * ma;
                vb -= mb * mb;
                cov -= ma * mb;
                double s = ((2 * ma * mb + c1) * (2 * cov + c2)) /
                           ((ma * ma + mb * mb + c1) * (va + vb + c2));
                total += s;
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

// --- perceptual distance -----------------------------------------------------

class PerceptualMetric {
public:
    virtual ~PerceptualMetric() = default;
    virtual double distance(const Tensor& a, const Tensor& b) const = 0;
    virtual std::string descriptor() const = 0;
    virtual uint64_t seed() const = 0;
};

// Default perceptual proxy. Images pass through a bank of zero-mean random
// filters at 3 dyadic scales; rectified responses are locally pooled into
// texture-energy maps, each pixel's cross-filter vector is normalized to
// unit length, and the distance is the mean absolute difference of the
// normalized maps. Phase-insensitive by construction, so it rewards matching
// local frequency content rather than exact pixel alignment.
class RandomFeatureMetric : public PerceptualMetric {
public:
    explicit RandomFeatureMetric(uint64_t seed = 17, int num_filters = 24, int ksize = 5,
                                 int scales = 3, int pool = 4)
        : seed_(seed), num_filters_(num_filters), ksize_(ksize), scales_(scales), pool_(pool) {}

    // Construct from externally trained filters (checkpoint directory with
    // filter_<k> tensors shaped k x k x C).
    static RandomFeatureMetric from_checkpoint(const std::filesystem::path& dir);

    double distance(const Tensor& a, const Tensor& b) const override {
        a.require_same_shape(b, "perceptual distance");
        const auto& bank = filters_for(a.channels());
        Tensor ca = a.clamped(0.0, 1.0);
        Tensor cb = b.clamped(0.0, 1.0);
        double total = 0.0;
        int used_scales = 0;
        for (int s = 0; s < scales_; ++s) {
            if (ca.height() < ksize_ || ca.width() < ksize_) break;
            total += scale_distance(ca, cb, bank);
            ++used_scales;
            if (s + 1 < scales_) {
                ca = half_scale(ca);
                cb = half_scale(cb);
            }
        }
        if (used_scales == 0) throw std::invalid_argument("perceptual distance: image too small");
        return total / used_scales;
    }

    std::string descriptor() const override {
        return "random-feature-proxy(seed=" + std::to_string(seed_) +
               ",k=" + std::to_string(num_filters_) + ")";
    }

    uint64_t seed() const override { return seed_; }

private:
    const std::vector<Tensor>& filters_for(int channels) const {
        auto it = banks_.find(channels);
        if (it != banks_.end()) return it->second;
        std::vector<Tensor> bank;
        if (!external_.empty()) {
            bank = external_;
            if (bank.front().channels() != channels) {
                throw std::invalid_argument("perceptual distance: filter bank channel mismatch");
            }
        } else {
            Rng rng(derive_seed(seed_, 0xfea7, static_cast<uint64_t>(channels)));
            for (int k = 0; k < num_filters_; ++k) {
                Tensor f = rng.normal_tensor({ksize_, ksize_, channels});
                // Symmetrize under horizontal/vertical flips so the distance
                // commutes with mirroring, then zero-mean and unit-normalize.
                Tensor sym = Tensor::zeros_like(f);
                for (int y = 0; y < ksize_; ++y)
                    for (int x = 0; x < ksize_; ++x)
                        for (int c = 0; c < channels; ++c) {
                            int my = ksize_ - 1 - y, mx = ksize_ - 1 - x;
                            sym.at(y, x, c) = 0.25 * (f.at(y, x, c) + f.at(y, mx, c) +
                                                      f.at(my, x, c) + f.at(my, mx, c));
                        }
                f = std::move(sym);
                double m = f.mean();
                double norm = 0.0;
                for (size_t i = 0; i < f.size(); ++i) {
                    f[i] -= m;
                    norm += f[i] * f[i];
                }
                norm = std::sqrt(norm);
                for (size_t i = 0; i < f.size(); ++i) f[i] /= norm;
                bank.push_back(std::move(f));
            }
        }
        return banks_.emplace(channels, std::move(bank)).first->second;
    }

    static int reflect(int i, int n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
        return i;
    }

    static Tensor half_scale(const Tensor& img) {
        int h = std::max(1, img.height() / 2);
        int w = std::max(1, img.width() / 2);
        Tensor out(h, w, img.channels());
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < img.channels(); ++c) {
                    double s = img.at(2 * y, 2 * x, c) + img.at(2 * y + 1, 2 * x, c) +
                               img.at(2 * y, 2 * x + 1, c) + img.at(2 * y + 1, 2 * x + 1, c);
                    out.at(y, x, c) = s / 4.0;
                }
            }
        }
        return out;
    }

    // Rectified filter responses pooled into block energies.
    Tensor energy_map(const Tensor& img, const std::vector<Tensor>& bank) const {
        int h = img.height(), w = img.width(), ch = img.channels();
        int half = ksize_ / 2;
        int ph = (h + pool_ - 1) / pool_;
        int pw = (w + pool_ - 1) / pool_;
        int nf = static_cast<int>(bank.size());
        Tensor energy(ph, pw, nf);
        Tensor counts(ph, pw, 1);
        for (int y = 0; y < h; ++y) {
            int by = y / pool_;
            for (int x = 0; x < w; ++x) {
                int bx = x / pool_;
                counts.at(by, bx, 0) += 1.0;
                for (int k = 0; k < nf; ++k) {
                    const Tensor& f = bank[static_cast<size_t>(k)];
                    double r = 0.0;
                    for (int fy = 0; fy < ksize_; ++fy) {
                        int sy = reflect(y + fy - half, h);
                        for (int fx = 0; fx < ksize_; ++fx) {
                            int sx = reflect(x + fx - half, w);
                            for (int c = 0; c < ch; ++c) r += f.at(fy, fx, c) * img.at(sy, sx, c);
                        }
                    }
                    energy.at(by, bx, k) += std::abs(r);
                }
            }
        }
        for (int by = 0; by < ph; ++by)
            for (int bx = 0; bx < pw; ++bx)
                for (int k = 0; k < nf; ++k) energy.at(by, bx, k) /= counts.at(by, bx, 0);
        return energy;
    }

    double scale_distance(const Tensor& a, const Tensor& b, const std::vector<Tensor>& bank) const {
        Tensor ea = energy_map(a, bank);
        Tensor eb = energy_map(b, bank);
        int nf = ea.channels();
        double total = 0.0;
        for (int y = 0; y < ea.height(); ++y) {
            for (int x = 0; x < ea.width(); ++x) {
                double na = 0.0, nb = 0.0;
                for (int k = 0; k < nf; ++k) {
                    na += ea.at(y, x, k) * ea.at(y, x, k);
                    nb += eb.at(y, x, k) * eb.at(y, x, k);
                }
                na = std::sqrt(na) + 1e-8;
                nb = std::sqrt(nb) + 1e-8;
                for (int k = 0; k < nf; ++k) {
                    total += std::abs(ea.at(y, x, k) / na - eb.at(y, x, k) / nb);
                }
            }
        }
        return total / (static_cast<double>(ea.height()) * ea.width() * nf);
    }

    uint64_t seed_;
    int num_filters_;
    int ksize_;
    int scales_;
    int pool_;
    std::vector<Tensor> external_;
    mutable std::map<int, std::vector<Tensor>> banks_;
};

inline RandomFeatureMetric RandomFeatureMetric::from_checkpoint(const std::filesystem::path& dir) {
    RandomFeatureMetric m(0);
    int k = 0;
    while (true) {
        std::filesystem::path f = dir / ("filter_" + std::to_string(k) + ".rgt");
        if (!std::filesystem::exists(f)) break;
        m.external_.push_back(read_tensor_file(f));
        ++k;
    }
    if (m.external_.empty()) {
        throw std::runtime_error("RandomFeatureMetric::from_checkpoint: no filters in " + dir.string());
    }
    m.num_filters_ = k;
    m.ksize_ = m.external_.front().height();
    return m;
}

inline double perceptual_distance(const PerceptualMetric& metric, const Tensor& a, const Tensor& b) {
    return metric.distance(a, b);
}

// --- perception-distortion report --------------------------------------------

struct MetricRow {
    std::string id;
    double psnr = 0.0;
    double ssim = 0.0;
    double perceptual = 0.0;
};

struct MetricReport {
    std::vector<MetricRow> rows;
    MetricRow aggregate;  // arithmetic mean of rows
};

inline MetricReport pd_report(const std::vector<std::pair<Tensor, Tensor>>& outputs,
                              const PerceptualMetric& metric) {
    if (outputs.empty()) throw std::invalid_argument("pd_report: empty output list");
    MetricReport report;
    report.aggregate.id = "mean";
    for (size_t i = 0; i < outputs.size(); ++i) {
        const auto& [pred, ref] = outputs[i];
        MetricRow row;
        row.id = std::to_string(i);
        row.psnr = psnr(pred, ref);
        row.ssim = ssim(pred, ref);
        row.perceptual = metric.distance(pred, ref);
        report.aggregate.psnr += row.psnr;
        report.aggregate.ssim += row.ssim;
        report.aggregate.perceptual += row.perceptual;
        report.rows.push_back(std::move(row));
    }
    double n = static_cast<double>(report.rows.size());
    report.aggregate.psnr /= n;
    report.aggregate.ssim /= n;
    report.aggregate.perceptual /= n;
    return report;
}

inline void write_report(std::ostream& os, const MetricReport& report) {
    os << "id\tpsnr\tssim\tperceptual\n";
    os.precision(10);
    for (const auto& r : report.rows) {
        os << r.id << "\t" << r.psnr << "\t" << r.ssim << "\t" << r.perceptual << "\n";
    }
    os << report.aggregate.id << "\t" << report.aggregate.psnr << "\t" << report.aggregate.ssim
       << "\t" << report.aggregate.perceptual << "\n";
}

// Two-column scatter data (perceptual, psnr), consumable by any plotter.
inline void write_scatter(std::ostream& os, const MetricReport& report) {
    os.precision(10);
    for (const auto& r : report.rows) os << r.perceptual << " " << r.psnr << "\n";
}

}  // namespace recongen
