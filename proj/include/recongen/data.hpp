#pragma once

// Synthetic dataset generation: procedural textures spanning flat through
// high-frequency content, Gaussian noise injection, augmentation, cropping
// and image-pair persistence (clean PNG + raw float noisy tensor).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "recongen/image_io.hpp"
#include "recongen/rng.hpp"
#include "recongen/serialize.hpp"
#include "recongen/tensor.hpp"

namespace recongen {

using ImagePair = std::pair<Tensor, Tensor>;  // (noisy x, clean y)

// --- textures ---------------------------------------------------------------

enum class TextureRecipe { flat, gradient, stripes, checker, field, mix };

inline const char* to_string(TextureRecipe r) {
    switch (r) {
        case TextureRecipe::flat: return "flat";
        case TextureRecipe::gradient: return "gradient";
        case TextureRecipe::stripes: return "stripes";
        case TextureRecipe::checker: return "checker";
        case TextureRecipe::field: return "field";
        case TextureRecipe::mix: return "mix";
    }
    return "?";
}

inline TextureRecipe texture_recipe_from_string(const std::string& s) {
    if (s == "flat") return TextureRecipe::flat;
    if (s == "gradient") return TextureRecipe::gradient;
    if (s == "stripes") return TextureRecipe::stripes;
    if (s == "checker") return TextureRecipe::checker;
    if (s == "field") return TextureRecipe::field;
    if (s == "mix") return TextureRecipe::mix;
    throw std::invalid_argument("unknown texture recipe: " + s);
}

struct TextureOptions {
    int channels = 3;
    double stripe_cycles = -1.0;     // <= 0: random in [5, 12]
    double stripe_angle_deg = -1.0;  // < 0: random multiple of 30 deg
};

namespace detail {

inline Tensor texture_flat(int size, int channels, Rng& rng) {
    Tensor img(size, size, channels);
    double base = rng.uniform(0.2, 0.8);
    std::vector<double> tint(static_cast<size_t>(channels));
    for (auto& t : tint) t = rng.uniform(-0.008, 0.008);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(y, x, c) = std::clamp(base + tint[static_cast<size_t>(c)] + 0.003 * rng.normal(),
                                             0.0, 1.0);
    return img;
}

inline Tensor texture_gradient(int size, int channels, Rng& rng) {
    Tensor img(size, size, channels);
    double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    double cx = std::cos(angle), sy = std::sin(angle);
    std::vector<double> a(static_cast<size_t>(channels)), b(static_cast<size_t>(channels));
    for (int c = 0; c < channels; ++c) {
        a[static_cast<size_t>(c)] = rng.uniform(0.1, 0.9);
        b[static_cast<size_t>(c)] = rng.uniform(0.1, 0.9);
    }
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double t = ((x - size / 2.0) * cx + (y - size / 2.0) * sy) / size + 0.5;
            t = std::clamp(t, 0.0, 1.0);
            for (int c = 0; c < channels; ++c) {
                img.at(y, x, c) = a[static_cast<size_t>(c)] * (1 - t) + b[static_cast<size_t>(c)] * t;
            }
        }
    }
    return img;
}

inline Tensor texture_stripes(int size, int channels, Rng& rng, const TextureOptions& opt) {
    Tensor img(size, size, channels);
    double cycles = opt.stripe_cycles > 0 ? opt.stripe_cycles : rng.uniform(5.0, 12.0);
    double angle = opt.stripe_angle_deg >= 0
                       ? opt.stripe_angle_deg * 3.14159265358979323846 / 180.0
                       : (3.14159265358979323846 / 6.0) * static_cast<double>(rng.uniform_int(0, 5));
    double phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    double base = rng.uniform(0.35, 0.65);
    double hard = rng.uniform() < 0.5 ? 3.0 : 0.0;  // squarish vs pure sine
    std::vector<double> amp(static_cast<size_t>(channels));
    for (auto& a : amp) a = rng.uniform(0.12, 0.28);
    double kx = 2.0 * 3.14159265358979323846 * cycles / size * std::cos(angle);
    double ky = 2.0 * 3.14159265358979323846 * cycles / size * std::sin(angle);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double s = std::sin(kx * x + ky * y + phase);
            if (hard > 0) s = std::tanh(hard * s);
            for (int c = 0; c < channels; ++c) {
                img.at(y, x, c) = std::clamp(base + amp[static_cast<size_t>(c)] * s, 0.02, 0.98);
            }
        }
    }
    return img;
}

inline Tensor texture_checker(int size, int channels, Rng& rng) {
    Tensor img(size, size, channels);
    int cell = static_cast<int>(rng.uniform_int(3, 8));
    std::vector<double> a(static_cast<size_t>(channels)), b(static_cast<size_t>(channels));
    for (int c = 0; c < channels; ++c) {
        a[static_cast<size_t>(c)] = rng.uniform(0.15, 0.5);
        b[static_cast<size_t>(c)] = rng.uniform(0.5, 0.85);
    }
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            bool odd = ((y / cell) + (x / cell)) % 2 != 0;
            for (int c = 0; c < channels; ++c)
                img.at(y, x, c) = odd ? a[static_cast<size_t>(c)] : b[static_cast<size_t>(c)];
        }
    return img;
}

// Multi-scale random field: white noise drawn on coarse grids, upsampled
// bilinearly and summed, then rescaled into a mid-tone range.
inline Tensor texture_field(int size, int channels, Rng& rng) {
    Tensor img(size, size, channels);
    const int grids[] = {4, 8, 16, 32};
    const double weights[] = {0.5, 0.8, 1.0, 0.7};
    for (int gi = 0; gi < 4; ++gi) {
        int g = std::min(grids[gi], size);
        Tensor coarse = rng.normal_tensor({g, g, channels});
        for (int y = 0; y < size; ++y) {
            double fy = static_cast<double>(y) / size * (g - 1);
            int y0 = static_cast<int>(fy);
            int y1 = std::min(y0 + 1, g - 1);
            double ty = fy - y0;
            for (int x = 0; x < size; ++x) {
                double fx = static_cast<double>(x) / size * (g - 1);
                int x0 = static_cast<int>(fx);
                int x1 = std::min(x0 + 1, g - 1);
                double tx = fx - x0;
                for (int c = 0; c < channels; ++c) {
                    double v = coarse.at(y0, x0, c) * (1 - ty) * (1 - tx) +
                               coarse.at(y0, x1, c) * (1 - ty) * tx +
                               coarse.at(y1, x0, c) * ty * (1 - tx) +
                               coarse.at(y1, x1, c) * ty * tx;
                    img.at(y, x, c) += weights[gi] * v;
                }
            }
        }
    }
    double lo = img.min(), hi = img.max();
    double span = std::max(1e-9, hi - lo);
    double out_lo = rng.uniform(0.1, 0.25), out_hi = rng.uniform(0.7, 0.9);
    for (size_t i = 0; i < img.size(); ++i) {
        img[i] = out_lo + (img[i] - lo) / span * (out_hi - out_lo);
    }
    return img;
}

}  // namespace detail

inline Tensor generate_texture(int size, TextureRecipe recipe, Rng& rng,
                               const TextureOptions& opt = {}) {
    switch (recipe) {
        case TextureRecipe::flat: return detail::texture_flat(size, opt.channels, rng);
        case TextureRecipe::gradient: return detail::texture_gradient(size, opt.channels, rng);
        case TextureRecipe::stripes: return detail::texture_stripes(size, opt.channels, rng, opt);
        case TextureRecipe::checker: return detail::texture_checker(size, opt.channels, rng);
        case TextureRecipe::field: return detail::texture_field(size, opt.channels, rng);
        case TextureRecipe::mix: {
            double u = rng.uniform();
            TextureRecipe pick = u < 0.10   ? TextureRecipe::flat
                                 : u < 0.20 ? TextureRecipe::gradient
                                 : u < 0.55 ? TextureRecipe::stripes
                                 : u < 0.80 ? TextureRecipe::checker
                                            : TextureRecipe::field;
            return generate_texture(size, pick, rng, opt);
        }
    }
    throw std::invalid_argument("generate_texture: bad recipe");
}

inline std::vector<Tensor> generate_textures(int n, int size, TextureRecipe recipe, uint64_t seed,
                                             const TextureOptions& opt = {}) {
    if (n < 1) throw std::invalid_argument("generate_textures: n must be >= 1");
    Rng master(seed);
    std::vector<Tensor> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng = master.child(static_cast<uint64_t>(i));
        out.push_back(generate_texture(size, recipe, rng, opt));
    }
    return out;
}

// --- noise -------------------------------------------------------------------

struct NoiseModel {
    enum class Kind { gaussian, signal_dependent };
    Kind kind = Kind::gaussian;
    double sigma = 0.0;  // [0,1] intensity units
    double a = 0.0;      // signal-dependent: sigma(y) = a + b*y
    double b = 0.0;

    static NoiseModel gaussian_255(double sigma_255) {
        NoiseModel m;
        m.kind = Kind::gaussian;
        m.sigma = sigma_255 / 255.0;
        return m;
    }
    static NoiseModel signal_dependent(double a, double b) {
        NoiseModel m;
        m.kind = Kind::signal_dependent;
        m.a = a;
        m.b = b;
        return m;
    }
};

// x = y + sigma(y) * eps. Deliberately NOT clamped: clamping would change the
// noise statistics. Outputs are clamped only at emission/metric time.
inline Tensor add_noise(const Tensor& clean, const NoiseModel& model, uint64_t seed) {
    if (model.sigma < 0.0 || model.a < 0.0) throw std::invalid_argument("add_noise: negative sigma");
    if (clean.min() < 0.0 || clean.max() > 1.0) {
        throw std::invalid_argument("add_noise: clean image must lie in [0,1]");
    }
    Rng rng(seed);
    Tensor noisy = clean;
    for (size_t i = 0; i < noisy.size(); ++i) {
        double s = model.kind == NoiseModel::Kind::gaussian ? model.sigma
                                                            : model.a + model.b * clean[i];
        noisy[i] += s * rng.normal();
    }
    return noisy;
}

// --- augmentation and cropping -------------------------------------------------

namespace detail {

inline Tensor rotate90(const Tensor& img, int quarter_turns) {
    quarter_turns = ((quarter_turns % 4) + 4) % 4;
    if (quarter_turns == 0) return img;
    int h = img.height(), w = img.width(), ch = img.channels();
    int oh = (quarter_turns % 2 == 0) ? h : w;
    int ow = (quarter_turns % 2 == 0) ? w : h;
    Tensor out(oh, ow, ch);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int ny, nx;
            switch (quarter_turns) {
                case 1: ny = x; nx = h - 1 - y; break;
                case 2: ny = h - 1 - y; nx = w - 1 - x; break;
                default: ny = w - 1 - x; nx = y; break;
            }
            for (int c = 0; c < ch; ++c) out.at(ny, nx, c) = img.at(y, x, c);
        }
    return out;
}

inline Tensor flip_h(const Tensor& img) {
    Tensor out = img;
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < img.channels(); ++c)
                out.at(y, img.width() - 1 - x, c) = img.at(y, x, c);
    return out;
}

inline Tensor flip_v(const Tensor& img) {
    Tensor out = img;
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < img.channels(); ++c)
                out.at(img.height() - 1 - y, x, c) = img.at(y, x, c);
    return out;
}

inline Tensor apply_dihedral(const Tensor& img, int rot, bool hflip, bool vflip) {
    Tensor out = rotate90(img, rot);
    if (hflip) out = flip_h(out);
    if (vflip) out = flip_v(out);
    return out;
}

}  // namespace detail

// Random horizontal/vertical flips and 90/180/270 degree rotations, applied
// identically to both members of the pair.
inline ImagePair augment(const ImagePair& pair, Rng& rng) {
    const auto& [x, y] = pair;
    if (x.height() != x.width()) {
        throw std::invalid_argument("augment: rotations require square patches");
    }
    x.require_same_shape(y, "augment");
    int rot = static_cast<int>(rng.uniform_int(0, 3));
    bool hf = rng.uniform() < 0.5;
    bool vf = rng.uniform() < 0.5;
    return {detail::apply_dihedral(x, rot, hf, vf), detail::apply_dihedral(y, rot, hf, vf)};
}

inline ImagePair crop_patch(const ImagePair& pair, int size, Rng& rng) {
    const auto& [x, y] = pair;
    x.require_same_shape(y, "crop_patch");
    if (x.height() < size || x.width() < size) {
        throw std::invalid_argument("crop_patch: image smaller than requested patch");
    }
    int oy = static_cast<int>(rng.uniform_int(0, x.height() - size));
    int ox = static_cast<int>(rng.uniform_int(0, x.width() - size));
    Tensor cx(size, size, x.channels()), cy(size, size, y.channels());
    for (int yy = 0; yy < size; ++yy)
        for (int xx = 0; xx < size; ++xx)
            for (int c = 0; c < x.channels(); ++c) {
                cx.at(yy, xx, c) = x.at(oy + yy, ox + xx, c);
                cy.at(yy, xx, c) = y.at(oy + yy, ox + xx, c);
            }
    return {std::move(cx), std::move(cy)};
}

// --- persistence ---------------------------------------------------------------

// Clean images go to 8-bit PNG; noisy tensors keep full float32 precision.
inline void save_pair(const std::filesystem::path& clean_path,
                      const std::filesystem::path& noisy_path, const ImagePair& pair) {
    write_png(clean_path, pair.second);
    write_tensor_file(noisy_path, pair.first);
}

inline ImagePair load_pair(const std::filesystem::path& clean_path,
                           const std::filesystem::path& noisy_path) {
    Tensor clean = read_png(clean_path);
    Tensor noisy = read_tensor_file(noisy_path);
    if (!clean.same_shape(noisy)) {
        throw std::runtime_error("load_pair: clean/noisy shape mismatch for " + clean_path.string());
    }
    return {std::move(noisy), std::move(clean)};
}

struct ManifestEntry {
    std::string clean_path;  // relative to the manifest directory
    std::string noisy_path;
    double sigma = 0.0;
    uint64_t seed = 0;
};

struct DatasetManifest {
    std::string split;   // train | val | test
    std::string recipe;  // generator recipe id
    int size = 0;
    int channels = 0;
    std::vector<ManifestEntry> entries;
};

inline void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_manifest: cannot open " + path.string());
    os << "split = " << m.split << "\n";
    os << "recipe = " << m.recipe << "\n";
    os << "size = " << m.size << "\n";
    os << "channels = " << m.channels << "\n";
    os << "count = " << m.entries.size() << "\n";
    os.precision(17);
    for (const auto& e : m.entries) {
        os << e.clean_path << "\t" << e.noisy_path << "\t" << e.sigma << "\t" << e.seed << "\n";
    }
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("read_manifest: cannot open " + path.string());
    DatasetManifest m;
    size_t count = 0;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line.find('\t') == std::string::npos) {
            std::istringstream ls(line);
            std::string key, eq, value;
            if (!(ls >> key >> eq >> value) || eq != "=") continue;
            if (key == "split") m.split = value;
            else if (key == "recipe") m.recipe = value;
            else if (key == "size") m.size = std::stoi(value);
            else if (key == "channels") m.channels = std::stoi(value);
            else if (key == "count") count = std::stoul(value);
            continue;
        }
        std::istringstream ls(line);
        ManifestEntry e;
        std::string sigma, seed;
        if (!std::getline(ls, e.clean_path, '\t') || !std::getline(ls, e.noisy_path, '\t') ||
            !std::getline(ls, sigma, '\t') || !std::getline(ls, seed)) {
            throw std::runtime_error("read_manifest: corrupt entry line in " + path.string());
        }
        e.sigma = std::stod(sigma);
        e.seed = std::stoull(seed);
        m.entries.push_back(std::move(e));
    }
    if (count != m.entries.size()) {
        throw std::runtime_error("read_manifest: entry count mismatch in " + path.string());
    }
    return m;
}

// Load every pair listed by a manifest, verifying shapes against the header.
inline std::vector<ImagePair> load_split(const std::filesystem::path& manifest_path) {
    DatasetManifest m = read_manifest(manifest_path);
    std::filesystem::path dir = manifest_path.parent_path();
    std::vector<ImagePair> pairs;
    pairs.reserve(m.entries.size());
    for (const auto& e : m.entries) {
        ImagePair p = load_pair(dir / e.clean_path, dir / e.noisy_path);
        if (p.second.height() != m.size || p.second.width() != m.size ||
            p.second.channels() != m.channels) {
            throw std::runtime_error("load_split: " + e.clean_path + " does not match manifest shape");
        }
        pairs.push_back(std::move(p));
    }
    return pairs;
}

struct DatasetSpec {
    std::filesystem::path dir;
    int train_count = 200;
    int val_count = 40;
    int test_count = 40;
    int size = 64;
    TextureRecipe recipe = TextureRecipe::mix;
    TextureOptions texture;
    NoiseModel noise = NoiseModel::gaussian_255(25.0);
    uint64_t seed = 1;
};

// Generate one split. Noise and texture streams are derived from
// (seed, split index) so splits are disjoint by construction.
inline DatasetManifest generate_split(const DatasetSpec& spec, const std::string& split, int split_index,
                                      int count) {
    std::filesystem::create_directories(spec.dir / split);
    Rng split_rng = Rng(spec.seed).child(0x5b17, static_cast<uint64_t>(split_index));
    DatasetManifest m;
    m.split = split;
    m.recipe = to_string(spec.recipe);
    m.size = spec.size;
    m.channels = spec.texture.channels;
    for (int i = 0; i < count; ++i) {
        Rng img_rng = split_rng.child(static_cast<uint64_t>(i), 1);
        Tensor y = generate_texture(spec.size, spec.recipe, img_rng, spec.texture);
        // Quantize the clean image first so the stored pair is exactly
        // consistent: noise is drawn around the PNG-persisted values.
        for (size_t p = 0; p < y.size(); ++p) {
            y[p] = std::lround(std::clamp(y[p], 0.0, 1.0) * 255.0) / 255.0;
        }
        uint64_t noise_seed = derive_seed(split_rng.seed(), static_cast<uint64_t>(i), 2);
        Tensor x = snap_to_f32(add_noise(y, spec.noise, noise_seed));
        ManifestEntry e;
        e.clean_path = split + "/clean_" + std::to_string(i) + ".png";
        e.noisy_path = split + "/noisy_" + std::to_string(i) + ".rgt";
        e.sigma = spec.noise.sigma;
        e.seed = noise_seed;
        save_pair(spec.dir / e.clean_path, spec.dir / e.noisy_path, {x, y});
        m.entries.push_back(std::move(e));
    }
    write_manifest(spec.dir / (split + ".manifest"), m);
    return m;
}

inline void generate_dataset(const DatasetSpec& spec) {
    std::filesystem::create_directories(spec.dir);
    generate_split(spec, "train", 0, spec.train_count);
    generate_split(spec, "val", 1, spec.val_count);
    generate_split(spec, "test", 2, spec.test_count);
}

}  // namespace recongen
