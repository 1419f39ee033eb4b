#include <doctest.h>

#include <cmath>

#include "litevae/gradcheck.hpp"
#include "litevae/losses.hpp"
#include "test_support.hpp"

using namespace litevae;
using testutil::rand_tensor;

TEST_CASE("recon loss closed-form values") {
    Rng rng(1);
    auto x = rand_tensor<double>({2, 3, 8, 8}, rng);
    CHECK(recon_loss(x, x).item() == doctest::Approx(0.0));
    auto shifted = add_scalar(x, 0.5);
    CHECK(recon_loss(x, shifted).item() == doctest::Approx(0.5));
}

TEST_CASE("recon loss gradient is sign/count") {
    Rng rng(2);
    auto x = rand_tensor<double>({1, 1, 4, 4}, rng);
    auto xh = rand_tensor<double>({1, 1, 4, 4}, rng, 1.0, true);
    auto fn = [&]() { return recon_loss(x, xh); };
    auto rep = gradcheck<double>(fn, {{"xh", xh}});
    CHECK(rep.max_rel_err < 1e-6);

    xh.zero_grad();
    recon_loss(x, xh).backward();
    for (size_t i = 0; i < xh.data().size(); ++i) {
        double sign = xh.data()[i] > x.data()[i] ? 1.0 : -1.0;
        CHECK(xh.grad()[i] == doctest::Approx(sign / 16.0));
    }
}

TEST_CASE("wavelet hf loss closed-form values") {
    Rng rng(3);
    double eps = 1e-3;
    auto x = rand_tensor<double>({1, 3, 16, 16}, rng);
    CHECK(wavelet_hf_loss(x, x, eps).item() == doctest::Approx(eps).epsilon(1e-9));
    auto shifted = add_scalar(x, 0.37);
    CHECK(wavelet_hf_loss(x, shifted, eps).item() == doctest::Approx(eps).epsilon(1e-9));
}

TEST_CASE("wavelet hf loss matches an explicit compositional oracle") {
    Rng rng(4);
    double eps = 2e-3;
    auto x = rand_tensor<double>({1, 3, 8, 8}, rng);
    auto y = rand_tensor<double>({1, 3, 8, 8}, rng);
    double got = wavelet_hf_loss(x, y, eps).item();

    // direct evaluation: normalized level-1 bands, channels 3..12, Charbonnier
    auto bx = normalized_dwt(x, 1).bands;
    auto by = normalized_dwt(y, 1).bands;
    double acc = 0;
    int64_t count = 0;
    int64_t plane = 16;
    for (int c = 3; c < 12; ++c)
        for (int64_t i = 0; i < plane; ++i) {
            double d = bx.data()[static_cast<size_t>(c * plane + i)] -
                       by.data()[static_cast<size_t>(c * plane + i)];
            acc += std::sqrt(d * d + eps * eps);
            ++count;
        }
    CHECK(got == doctest::Approx(acc / static_cast<double>(count)).epsilon(1e-9));
}

TEST_CASE("gaussian hf loss closed-form values") {
    Rng rng(5);
    auto x = rand_tensor<double>({1, 3, 12, 12}, rng);
    CHECK(gaussian_hf_loss(x, x, 5, 1.0).item() == doctest::Approx(0.0));

    auto cx = Tensor<double>::full({1, 3, 12, 12}, 0.8);
    auto cy = Tensor<double>::full({1, 3, 12, 12}, -0.4);
    CHECK(gaussian_hf_loss(cx, cy, 5, 1.0).item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("gaussian hf loss matches the composed oracle") {
    Rng rng(6);
    auto x = rand_tensor<double>({1, 2, 10, 10}, rng);
    auto y = rand_tensor<double>({1, 2, 10, 10}, rng);
    double got = gaussian_hf_loss(x, y, 3, 0.9).item();

    auto hx = gaussian_blur(x, 3, 0.9);
    auto hy = gaussian_blur(y, 3, 0.9);
    double acc = 0;
    for (size_t i = 0; i < x.data().size(); ++i)
        acc += std::abs((x.data()[i] - hx.data()[i]) - (y.data()[i] - hy.data()[i]));
    CHECK(got == doctest::Approx(acc / static_cast<double>(x.numel())).epsilon(1e-9));
}

TEST_CASE("adversarial losses at zero logits") {
    auto real = Tensor<double>::zeros({2, 1, 4, 4});
    auto fake = Tensor<double>::zeros({2, 1, 4, 4});
    auto [dh, gh] = adversarial_losses(real, fake, AdvLossKind::hinge);
    CHECK(dh.item() == doctest::Approx(2.0));
    CHECK(gh.item() == doctest::Approx(0.0));
    auto [dl, gl] = adversarial_losses(real, fake, AdvLossKind::logistic);
    CHECK(dl.item() == doctest::Approx(2.0 * std::log(2.0)));
    CHECK(gl.item() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("adversarial losses gradcheck, both kinds") {
    Rng rng(7);
    auto real = rand_tensor<double>({1, 1, 4, 4}, rng, 1.0, true);
    auto fake = rand_tensor<double>({1, 1, 4, 4}, rng, 1.0, true);
    for (auto kind : {AdvLossKind::hinge, AdvLossKind::logistic}) {
        auto fn_d = [&]() { return adv_d_loss(real, fake, kind); };
        auto rep_d = gradcheck<double>(fn_d, {{"real", real}, {"fake", fake}});
        CHECK(rep_d.max_rel_err < 1e-5);
        auto fn_g = [&]() { return adv_g_loss(fake, kind); };
        auto rep_g = gradcheck<double>(fn_g, {{"fake", fake}});
        CHECK(rep_g.max_rel_err < 1e-5);
    }
}

TEST_CASE("adaptive adversarial weight") {
    CHECK(adaptive_adv_weight(1.0, 1.0, 1e-12) == doctest::Approx(0.5));
    CHECK(adaptive_adv_weight(0.0, 0.7, 1e-4) == doctest::Approx(0.0));

    Rng rng(8);
    for (int i = 0; i < 20; ++i) {
        double rn = rng.uniform() * 10;
        double an = rng.uniform() * 10;
        double delta = 1e-4;
        double want = std::min(1e4, 0.5 * rn / (an + delta));
        CHECK(adaptive_adv_weight(rn, an, delta) == doctest::Approx(want));
    }
    // clamp at 1e4
    CHECK(adaptive_adv_weight(1e9, 0.0, 1e-6) == doctest::Approx(1e4));
}

TEST_CASE("loss gradients all pass finite differences") {
    Rng rng(9);
    auto x = rand_tensor<double>({1, 3, 8, 8}, rng);
    auto xh = rand_tensor<double>({1, 3, 8, 8}, rng, 1.0, true);
    struct Case {
        const char* name;
        std::function<Tensor<double>()> fn;
    };
    std::vector<Case> cases = {
        {"recon", [&] { return recon_loss(x, xh); }},
        {"wavelet", [&] { return wavelet_hf_loss(x, xh, 1e-3); }},
        {"gaussian", [&] { return gaussian_hf_loss(x, xh, 5, 1.0); }},
    };
    for (auto& c : cases) {
        CAPTURE(c.name);
        auto rep = gradcheck<double>(c.fn, {{"xh", xh}}, 1e-4, 48, 21);
        CHECK(rep.max_rel_err < 1e-5);
    }
}
