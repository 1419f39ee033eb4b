#include <doctest.h>

#include <cmath>

#include "litevae/metrics.hpp"
#include "litevae/model.hpp"
#include "test_support.hpp"

using namespace litevae;
using testutil::rand_tensor;

TEST_CASE("psnr closed-form offset and cap") {
    Rng rng(1);
    auto x = Tensor<double>::full({1, 3, 8, 8}, 0.4);
    auto shifted = add_scalar(x, 0.1);
    CHECK(psnr(x, shifted, 1.0) == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(psnr(x, x, 1.0) == doctest::Approx(100.0));
}

TEST_CASE("ssim of identical images is one") {
    Rng rng(2);
    auto x = rand_tensor<float>({1, 3, 24, 24}, rng, 0.2f);
    for (auto& v : x.data()) v = 0.5f + v;  // keep in [0,1]-ish
    CHECK(ssim(x, x, 1.0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("ssim of independent noise is near zero") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        auto a = Tensor<float>::zeros({1, 1, 32, 32});
        auto b = Tensor<float>::zeros({1, 1, 32, 32});
        for (auto& v : a.data()) v = static_cast<float>(rng.uniform());
        for (auto& v : b.data()) v = static_cast<float>(rng.uniform());
        CHECK(std::abs(ssim(a, b, 1.0)) < 0.1);
    }
}

TEST_CASE("psnr and ssim are batch-permutation invariant and average per image") {
    Rng rng(4);
    auto a = rand_tensor<float>({1, 3, 16, 16}, rng, 0.2f);
    auto b = rand_tensor<float>({1, 3, 16, 16}, rng, 0.2f);
    auto na = add_scalar(a, 0.05f);
    auto nb = add_scalar(mul_scalar(b, 0.9f), 0.02f);

    auto ab = concat<float>({a, b}, 0);
    auto nanb = concat<float>({na, nb}, 0);
    auto ba = concat<float>({b, a}, 0);
    auto nbna = concat<float>({nb, na}, 0);

    double p1 = psnr(ab, nanb, 1.0);
    double p2 = psnr(ba, nbna, 1.0);
    CHECK(p1 == doctest::Approx(p2).epsilon(1e-12));
    CHECK(p1 == doctest::Approx((psnr(a, na, 1.0) + psnr(b, nb, 1.0)) / 2).epsilon(1e-12));

    double s1 = ssim(ab, nanb, 1.0);
    double s2 = ssim(ba, nbna, 1.0);
    CHECK(s1 == doctest::Approx(s2).epsilon(1e-12));
    CHECK(s1 == doctest::Approx((ssim(a, na, 1.0) + ssim(b, nb, 1.0)) / 2).epsilon(1e-12));
}

TEST_CASE("mmd of two single-point sets matches the hand kernel formula") {
    std::vector<std::vector<double>> A = {{1.0, 2.0}};
    std::vector<std::vector<double>> B = {{0.5, 1.0}};
    double sigma = 1.3;
    auto res = mmd_rbf(A, B, {sigma}, false);
    double d2 = 0.25 + 1.0;
    double want = 2.0 - 2.0 * std::exp(-d2 / (2 * sigma * sigma));
    CHECK(res.mmd2[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("mmd estimator is symmetric") {
    Rng rng(5);
    std::vector<std::vector<double>> A, B;
    for (int i = 0; i < 20; ++i) {
        std::vector<double> a(4), b(4);
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal() + 0.5;
        A.push_back(a);
        B.push_back(b);
    }
    auto ab = mmd_rbf(A, B, {0.5, 1.0, 2.0});
    auto ba = mmd_rbf(B, A, {0.5, 1.0, 2.0});
    for (size_t i = 0; i < ab.mmd2.size(); ++i) CHECK(ab.mmd2[i] == ba.mmd2[i]);
}

TEST_CASE("same-distribution mmd is within 3 standard errors of zero") {
    Rng rng(6);
    const int repeats = 12, n = 120, d = 8;
    std::vector<double> estimates;
    for (int r = 0; r < repeats; ++r) {
        std::vector<std::vector<double>> A, B;
        for (int i = 0; i < n; ++i) {
            std::vector<double> a(d), b(d);
            for (auto& v : a) v = rng.normal();
            for (auto& v : b) v = rng.normal();
            A.push_back(a);
            B.push_back(b);
        }
        estimates.push_back(mmd_rbf(A, B, {std::sqrt(d / 2.0)}).mmd2[0]);
    }
    double m = 0;
    for (double e : estimates) m += e;
    m /= repeats;
    double var = 0;
    for (double e : estimates) var += (e - m) * (e - m);
    double se = std::sqrt(var / (repeats - 1)) / std::sqrt(static_cast<double>(repeats));
    CHECK(std::abs(m) < 3 * se + 1e-12);
}

TEST_CASE("separated distributions give a much larger mmd") {
    Rng rng(7);
    const int n = 500, d = 1;
    std::vector<std::vector<double>> A, B, B2;
    for (int i = 0; i < n; ++i) {
        A.push_back({rng.normal()});
        B.push_back({rng.normal() + 3.0});
        B2.push_back({rng.normal()});
    }
    double separated = mmd_rbf(A, B, {1.0}).mmd2[0];
    double same = std::abs(mmd_rbf(A, B2, {1.0}).mmd2[0]);
    CHECK(separated > 10 * same);
}

TEST_CASE("default bandwidth grid scales with dimension") {
    auto bw = default_mmd_bandwidths(32);
    CHECK(bw.size() == 5);
    CHECK(bw[1] == doctest::Approx(4.0));  // sqrt(32/2)
    CHECK(bw[4] == doctest::Approx(32.0));
}

TEST_CASE("parameter count of a single conv") {
    Rng rng(8);
    Conv2d<float> conv(3, 8, 3, rng);
    ParamMap<float> pm;
    conv.params(pm, "c");
    CHECK(pm.total_params() == 3 * 8 * 9 + 8);
}

TEST_CASE("flop count of a single conv") {
    Rng rng(9);
    Conv2d<float> conv(3, 8, 3, rng, 1, 1);
    int64_t want = 2LL * (3 * 9) * 8 * 256 + 8 * 256;
    CHECK(conv.flops(1, 16, 16) == want);
}

TEST_CASE("litevae-b encoder needs fewer flops than the reference encoder at 256") {
    Rng rng(10);
    ModelConfig cfg;
    cfg.preset = SizePreset::B;
    cfg.latent_dim = 12;
    cfg.decoder_preset = DecoderPreset::tiny;
    LiteVAE<float> model(cfg, rng);
    int64_t lite = model.encoder_flops(1, 256, 256);

    RefEncoder<float> ref(ref_encoder_paper_config(), rng);
    int64_t reference = ref.flops(1, 256, 256);
    CHECK(lite > 0);
    CHECK(lite < reference);
}

TEST_CASE("flatten_per_sample layout") {
    auto t = Tensor<float>::from({1, 2, 3, 4, 5, 6, 7, 8}, {2, 2, 1, 2});
    auto v = flatten_per_sample(t);
    CHECK(v.size() == 2);
    CHECK(v[0] == std::vector<double>{1, 2, 3, 4});
    CHECK(v[1] == std::vector<double>{5, 6, 7, 8});
}
