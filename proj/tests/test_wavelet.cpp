#include <doctest.h>

#include <cmath>

#include "litevae/gradcheck.hpp"
#include "litevae/wavelet.hpp"
#include "test_support.hpp"

using namespace litevae;
using testutil::rand_tensor;

namespace {

template <typename T>
double energy(const std::vector<T>& v) {
    double e = 0;
    for (T x : v) e += static_cast<double>(x) * static_cast<double>(x);
    return e;
}

}  // namespace

TEST_CASE("level-1 haar of a constant image") {
    float v = 1.7f;
    auto x = Tensor<float>::full({1, 2, 4, 4}, v);
    auto p = dwt2(x, 1);
    CHECK(p.bands.shape() == Shape{1, 8, 2, 2});
    auto parts = chunk(p.bands, 4, 1);
    for (float lv : parts[0].data()) CHECK(lv == doctest::Approx(2 * v));
    for (int b = 1; b < 4; ++b)
        for (float hv : parts[static_cast<size_t>(b)].data()) CHECK(std::abs(hv) < 1e-6f);
}

TEST_CASE("single block filter arithmetic") {
    auto x = Tensor<float>::from({1, 2, 3, 4}, {1, 1, 2, 2});
    auto p = dwt2(x, 1);
    CHECK(p.bands.data()[0] == doctest::Approx(5.0f));   // L
    CHECK(p.bands.data()[1] == doctest::Approx(-1.0f));  // H
    CHECK(p.bands.data()[2] == doctest::Approx(-2.0f));  // V
    CHECK(p.bands.data()[3] == doctest::Approx(0.0f));   // D
}

TEST_CASE("level-1 energy conservation") {
    Rng rng(5);
    auto x = rand_tensor<float>({1, 3, 8, 8}, rng);
    auto p = dwt2(x, 1);
    double ein = energy(x.data());
    double eb = energy(p.bands.data());
    CHECK(std::abs(eb - ein) / ein < 1e-6);
}

TEST_CASE("round trips at every level") {
    Rng rng(6);
    auto x = rand_tensor<float>({2, 3, 24, 24}, rng);
    for (int level = 1; level <= 3; ++level) {
        auto p = dwt2(x, level);
        auto rec = idwt2(p);
        CHECK(testutil::max_abs_diff(rec.data(), x.data()) < 1e-5);
    }
    auto zero = Tensor<float>::zeros({1, 1, 4, 4});
    auto pz = dwt2(zero, 1);
    auto recz = idwt2(pz);
    for (float v : recz.data()) CHECK(v == 0.0f);
}

TEST_CASE("odd extents are rejected") {
    auto x = Tensor<float>::zeros({1, 1, 6, 6});
    CHECK_THROWS_AS(dwt2(x, 3), ShapeError);
    auto odd = Tensor<float>::zeros({1, 1, 5, 4});
    CHECK_THROWS_AS(dwt2(odd, 1), ShapeError);
}

TEST_CASE("normalized dwt keeps constants at v and inverts") {
    float v = -0.4f;
    for (int level = 1; level <= 3; ++level) {
        auto x = Tensor<float>::full({1, 3, 16, 16}, v);
        auto p = normalized_dwt(x, level);
        auto low = chunk(p.bands, 4, 1)[0];
        for (float lv : low.data()) CHECK(lv == doctest::Approx(v));
    }

    auto x2 = Tensor<float>::from({1, 2, 3, 4}, {1, 1, 2, 2});
    auto p2 = normalized_dwt(x2, 1);
    CHECK(p2.bands.data()[0] == doctest::Approx(2.5f));

    Rng rng(8);
    auto x3 = rand_tensor<float>({1, 3, 16, 16}, rng);
    auto p3 = normalized_dwt(x3, 2);
    auto rec = idwt2(p3);
    CHECK(testutil::max_abs_diff(rec.data(), x3.data()) < 1e-6);
}

TEST_CASE("multi-level energy including detail stack") {
    Rng rng(9);
    auto x = rand_tensor<float>({1, 2, 16, 16}, rng);
    for (int level = 2; level <= 3; ++level) {
        auto p = dwt2(x, level);
        double e = energy(p.bands.data());
        for (auto& d : p.details) e += energy(d.data());
        double ein = energy(x.data());
        CHECK(std::abs(e - ein) / ein < 1e-6);
    }
}

TEST_CASE("linearity of the transform") {
    Rng rng(10);
    auto x = rand_tensor<float>({1, 1, 8, 8}, rng);
    auto y = rand_tensor<float>({1, 1, 8, 8}, rng);
    float a = 1.5f, b = -0.75f;
    auto lhs = dwt2(add(mul_scalar(x, a), mul_scalar(y, b)), 1).bands;
    auto rhs = add(mul_scalar(dwt2(x, 1).bands, a), mul_scalar(dwt2(y, 1).bands, b));
    CHECK(testutil::max_abs_diff(lhs.data(), rhs.data()) < 1e-5);
}

TEST_CASE("dwt and idwt are differentiable") {
    Rng rng(12);
    auto x = rand_tensor<double>({1, 2, 8, 8}, rng, 1.0, true);
    auto fn = [&]() {
        auto p = normalized_dwt(x, 2);
        auto rec = idwt2(p);
        return sum(mul(rec, p.details[0].numel() ? rec : rec));
    };
    auto rep = gradcheck<double>(fn, {{"x", x}}, 1e-4, 32, 3);
    CHECK(rep.max_rel_err < 1e-6);

    auto bands = rand_tensor<double>({1, 8, 4, 4}, rng, 1.0, true);
    auto fn2 = [&]() {
        auto img = haar_idwt_level1(bands);
        return sum(mul(img, img));
    };
    auto rep2 = gradcheck<double>(fn2, {{"bands", bands}}, 1e-4, 32, 4);
    CHECK(rep2.max_rel_err < 1e-6);
}

TEST_CASE("space_to_depth matches dwt packing contract") {
    Rng rng(14);
    auto x = rand_tensor<float>({1, 3, 8, 8}, rng);
    auto packed = space_to_depth(x, 2);
    CHECK(packed.shape() == Shape{1, 12, 4, 4});
    auto back = depth_to_space(packed, 2);
    CHECK(back.data() == x.data());
}

TEST_CASE("gaussian blur preserves constants and kernel sums to one") {
    auto x = Tensor<float>::full({1, 3, 9, 9}, 0.33f);
    auto y = gaussian_blur(x, 5, 1.0f);
    for (float v : y.data()) CHECK(v == doctest::Approx(0.33f).epsilon(1e-6));

    auto k = gaussian_kernel_1d<double>(7, 1.3);
    double s = 0;
    for (double v : k) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));

    auto id = gaussian_blur(x, 1, 2.0f);
    CHECK(id.data() == x.data());
}

TEST_CASE("gaussian blur of an impulse is the kernel outer product") {
    int n = 11, ks = 5;
    double sigma = 1.2;
    auto x = Tensor<double>::zeros({1, 1, n, n});
    x.data()[static_cast<size_t>(5 * n + 5)] = 1.0;
    auto y = gaussian_blur(x, ks, sigma);
    auto k = gaussian_kernel_1d<double>(ks, sigma);
    for (int dh = -2; dh <= 2; ++dh)
        for (int dw = -2; dw <= 2; ++dw) {
            double want = k[static_cast<size_t>(dh + 2)] * k[static_cast<size_t>(dw + 2)];
            double got = y.data()[static_cast<size_t>((5 + dh) * n + (5 + dw))];
            CHECK(std::abs(got - want) < 1e-7);
        }
}

TEST_CASE("gaussian blur gradcheck with reflect padding") {
    Rng rng(15);
    auto x = rand_tensor<double>({1, 2, 6, 6}, rng, 1.0, true);
    auto fn = [&]() {
        auto b = gaussian_blur(x, 3, 0.8);
        return sum(mul(b, b));
    };
    auto rep = gradcheck<double>(fn, {{"x", x}});
    CHECK(rep.max_rel_err < 1e-6);
}
