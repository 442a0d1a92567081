#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "recongen/data.hpp"
#include "recongen/metrics.hpp"

using namespace recongen;

namespace {

// Reference SSIM written as a literal two-pass scalar loop (explicit weighted
// deviations rather than the E[x^2]-mu^2 form used by the implementation).
double ssim_reference(const Tensor& a, const Tensor& b) {
    const int win = 11;
    const double sigma = 1.5, k1 = 0.01, k2 = 0.03;
    std::vector<double> w(win * win);
    double sum = 0.0;
    for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
            double dy = y - 5.0, dx = x - 5.0;
            w[static_cast<size_t>(y * win + x)] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            sum += w[static_cast<size_t>(y * win + x)];
        }
    for (double& v : w) v /= sum;
    double c1 = k1 * k1, c2 = k2 * k2;
    double total = 0.0;
    int count = 0;
    for (int ch = 0; ch < a.channels(); ++ch) {
        for (int oy = 0; oy + win <= a.height(); ++oy) {
            for (int ox = 0; ox + win <= a.width(); ++ox) {
                double ma = 0, mb = 0;
                for (int y = 0; y < win; ++y)
                    for (int x = 0; x < win; ++x) {
                        ma += w[static_cast<size_t>(y * win + x)] * a.at(oy + y, ox + x, ch);
                        mb += w[static_cast<size_t>(y * win + x)] * b.at(oy + y, ox + x, ch);
                    }
                double va = 0, vb = 0, cov = 0;
                for (int y = 0; y < win; ++y)
                    for (int x = 0; x < win; ++x) {
                        double da = a.at(oy + y, ox + x, ch) - ma;
                        double db = b.at(oy + y, ox + x, ch) - mb;
                        double wt = w[static_cast<size_t>(y * win + x)];
                        va += wt * da * da;
                        vb += wt * db * db;
                        cov += wt * da * db;
                    }
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                         ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
        }
    }
    return total / count;
}

Tensor box_blur3(const Tensor& img) {
    Tensor out = Tensor::zeros_like(img);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < img.channels(); ++c) {
                double acc = 0.0;
                int n = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        int yy = y + dy, xx = x + dx;
                        if (yy < 0 || yy >= img.height() || xx < 0 || xx >= img.width()) continue;
                        acc += img.at(yy, xx, c);
                        ++n;
                    }
                out.at(y, x, c) = acc / n;
            }
    return out;
}

Tensor hflip(const Tensor& img) {
    Tensor out = img;
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < img.channels(); ++c)
                out.at(y, img.width() - 1 - x, c) = img.at(y, x, c);
    return out;
}

}  // namespace

TEST_CASE("psnr") {
    Rng rng(1);
    SUBCASE("identical images report +infinity") {
        Tensor a = rng.normal_tensor({8, 8, 3}).clamped(0.0, 1.0);
        CHECK(std::isinf(psnr(a, a)));
    }
    SUBCASE("uniform MSE of 0.01 is 20 dB") {
        Tensor a = Tensor::full({16, 16, 1}, 0.5);
        Tensor b = Tensor::full({16, 16, 1}, 0.6);
        CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
    }
    SUBCASE("halving the MSE adds 10*log10(2) dB") {
        Tensor a = Tensor::full({16, 16, 1}, 0.5);
        Tensor b1 = Tensor::full({16, 16, 1}, 0.5 + 0.1);
        Tensor b2 = Tensor::full({16, 16, 1}, 0.5 + 0.1 / std::sqrt(2.0));
        CHECK(psnr(a, b2) - psnr(a, b1) == doctest::Approx(10.0 * std::log10(2.0)).epsilon(1e-9));
    }
    SUBCASE("strictly decreasing in MSE") {
        Tensor a = Tensor::full({8, 8, 1}, 0.4);
        double prev = std::numeric_limits<double>::infinity();
        for (double gap = 0.01; gap < 0.3; gap += 0.02) {
            Tensor b = Tensor::full({8, 8, 1}, 0.4 + gap);
            double p = psnr(a, b);
            CHECK(p < prev);
            prev = p;
        }
    }
    SUBCASE("shape mismatch throws") {
        CHECK_THROWS_AS(psnr(Tensor(4, 4, 1), Tensor(4, 5, 1)), std::invalid_argument);
    }
}

TEST_CASE("ssim") {
    Rng rng(5);
    SUBCASE("self-similarity is exactly 1") {
        Tensor a = rng.normal_tensor({16, 16, 3}).clamped(0.0, 1.0);
        CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("tiny perturbation stays near but strictly below 1") {
        Tensor a = Tensor::full({16, 16, 1}, 0.5);
        Tensor b = a;
        Rng nrng(9);
        for (size_t i = 0; i < b.size(); ++i) b[i] += 1e-3 * nrng.normal();
        double s = ssim(a, b);
        CHECK(s < 1.0);
        CHECK(s > 0.9);
    }
    SUBCASE("matches the naive reference loop to 1e-10") {
        for (int trial = 0; trial < 5; ++trial) {
            Rng trng(static_cast<uint64_t>(100 + trial));
            Tensor a(16, 16, 2), b(16, 16, 2);
            for (size_t i = 0; i < a.size(); ++i) a[i] = trng.uniform();
            for (size_t i = 0; i < b.size(); ++i) b[i] = trng.uniform();
            CHECK(ssim(a, b) == doctest::Approx(ssim_reference(a, b)).epsilon(1e-10));
        }
    }
    SUBCASE("image smaller than the window throws") {
        CHECK_THROWS_AS(ssim(Tensor(8, 8, 1), Tensor(8, 8, 1)), std::invalid_argument);
    }
}

TEST_CASE("random-feature perceptual proxy") {
    RandomFeatureMetric metric(17);
    Rng rng(3);

    SUBCASE("identity of indiscernibles") {
        Tensor a = rng.normal_tensor({32, 32, 3}).clamped(0.0, 1.0);
        CHECK(metric.distance(a, a) == 0.0);
    }
    SUBCASE("symmetry is exact") {
        Tensor a = rng.normal_tensor({32, 32, 3}).clamped(0.0, 1.0);
        Tensor b = rng.normal_tensor({32, 32, 3}).clamped(0.0, 1.0);
        CHECK(metric.distance(a, b) == metric.distance(b, a));
    }
    SUBCASE("non-negative and deterministic per seed") {
        Tensor a = rng.normal_tensor({16, 16, 1}).clamped(0.0, 1.0);
        Tensor b = rng.normal_tensor({16, 16, 1}).clamped(0.0, 1.0);
        double d1 = metric.distance(a, b);
        RandomFeatureMetric same(17), other(18);
        CHECK(d1 >= 0.0);
        CHECK(same.distance(a, b) == d1);
        CHECK(other.distance(a, b) != d1);
    }
    SUBCASE("blurred reconstructions score strictly worse than sharp ones") {
        int worse = 0;
        const int trials = 100;
        for (int i = 0; i < trials; ++i) {
            Rng trng(derive_seed(900, static_cast<uint64_t>(i)));
            TextureRecipe recipe = i % 2 == 0 ? TextureRecipe::stripes : TextureRecipe::checker;
            Tensor y = generate_texture(48, recipe, trng);
            Tensor blurred = box_blur3(y);
            Tensor sharp = y;
            for (size_t p = 0; p < sharp.size(); ++p) sharp[p] += 0.01 * trng.normal();
            if (metric.distance(blurred, y) > metric.distance(sharp, y)) ++worse;
        }
        CHECK(worse >= 90);
    }
    SUBCASE("invariant under simultaneous horizontal flip") {
        Tensor a = generate_texture(64, TextureRecipe::stripes, rng);
        Tensor b = box_blur3(a);
        CHECK(metric.distance(hflip(a), hflip(b)) ==
              doctest::Approx(metric.distance(a, b)).epsilon(1e-12));
        CHECK(psnr(hflip(a), hflip(b)) == doctest::Approx(psnr(a, b)).epsilon(1e-12));
        CHECK(ssim(hflip(a), hflip(b)) == doctest::Approx(ssim(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("perception-distortion report") {
    RandomFeatureMetric metric(11);
    Rng rng(12);
    SUBCASE("single pair aggregates to itself") {
        Tensor y = generate_texture(32, TextureRecipe::field, rng);
        Tensor pred = box_blur3(y);
        MetricReport rep = pd_report({{pred, y}}, metric);
        REQUIRE(rep.rows.size() == 1);
        CHECK(rep.aggregate.psnr == rep.rows[0].psnr);
        CHECK(rep.aggregate.ssim == rep.rows[0].ssim);
        CHECK(rep.aggregate.perceptual == rep.rows[0].perceptual);
    }
    SUBCASE("aggregate equals the mean of rows") {
        std::vector<std::pair<Tensor, Tensor>> outputs;
        for (int i = 0; i < 4; ++i) {
            Rng trng(derive_seed(55, static_cast<uint64_t>(i)));
            Tensor y = generate_texture(32, TextureRecipe::mix, trng);
            outputs.emplace_back(box_blur3(y), y);
        }
        MetricReport rep = pd_report(outputs, metric);
        double mp = 0, ms = 0, mc = 0;
        for (const auto& r : rep.rows) {
            mp += r.psnr;
            ms += r.ssim;
            mc += r.perceptual;
        }
        CHECK(rep.aggregate.psnr == doctest::Approx(mp / 4).epsilon(1e-15));
        CHECK(rep.aggregate.ssim == doctest::Approx(ms / 4).epsilon(1e-15));
        CHECK(rep.aggregate.perceptual == doctest::Approx(mc / 4).epsilon(1e-15));
    }
    SUBCASE("empty list throws") {
        CHECK_THROWS_AS(pd_report({}, metric), std::invalid_argument);
    }
    SUBCASE("report and scatter serialize") {
        Rng trng(2);
        Tensor y = generate_texture(32, TextureRecipe::checker, trng);
        MetricReport rep = pd_report({{box_blur3(y), y}}, metric);
        std::ostringstream os, sc;
        write_report(os, rep);
        write_scatter(sc, rep);
        CHECK(os.str().find("id\tpsnr\tssim\tperceptual") == 0);
        CHECK(sc.str().find(' ') != std::string::npos);
    }
}

TEST_CASE("filter bank round-trips through the checkpoint format") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "recongen_metric_bank";
    fs::create_directories(dir);
    Rng rng(4);
    for (int k = 0; k < 3; ++k) {
        write_tensor_file(dir / ("filter_" + std::to_string(k) + ".rgt"),
                          rng.normal_tensor({5, 5, 1}));
    }
    RandomFeatureMetric loaded = RandomFeatureMetric::from_checkpoint(dir);
    Tensor a = rng.normal_tensor({16, 16, 1}).clamped(0.0, 1.0);
    Tensor b = rng.normal_tensor({16, 16, 1}).clamped(0.0, 1.0);
    CHECK(loaded.distance(a, b) >= 0.0);
    CHECK(loaded.distance(a, a) == 0.0);
    fs::remove_all(dir);
}
