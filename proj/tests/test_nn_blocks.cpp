#include <doctest.h>

#include <cmath>

#include "litevae/gradcheck.hpp"
#include "litevae/nn.hpp"
#include "test_support.hpp"

using namespace litevae;
using testutil::rand_tensor;

namespace {

// Independent closed-form parameter arithmetic for the UNet block.
int64_t conv_params(int ci, int co, int k, bool bias = true) {
    return static_cast<int64_t>(ci) * co * k * k + (bias ? co : 0);
}

int64_t resblock_params_gn(int a, int b) {
    int64_t p = 2 * a + conv_params(a, b, 3) + 2 * b + conv_params(b, b, 3);
    if (a != b) p += conv_params(a, b, 1);
    return p;
}

int64_t unet_params_closed_form(const UNetBlockConfig& c) {
    int mc = c.model_channels;
    int64_t p = conv_params(c.in_channels, mc, 3);
    int channel = mc;
    std::vector<int> skips = {mc};
    for (int mult : c.ch_multiplies)
        for (int i = 0; i < c.num_res_blocks; ++i) {
            p += resblock_params_gn(channel, mc * mult);
            channel = mc * mult;
            skips.push_back(channel);
        }
    p += 2 * resblock_params_gn(channel, channel);
    for (int li = static_cast<int>(c.ch_multiplies.size()) - 1; li >= 0; --li) {
        int blocks = c.num_res_blocks + (li == 0 ? 1 : 0);
        for (int i = 0; i < blocks; ++i) {
            int sc = skips.back();
            skips.pop_back();
            p += resblock_params_gn(channel + sc, mc * c.ch_multiplies[static_cast<size_t>(li)]);
            channel = mc * c.ch_multiplies[static_cast<size_t>(li)];
        }
    }
    p += conv_params(channel, c.out_channels, 3);
    return p;
}

}  // namespace

TEST_CASE("smc unit-norm row") {
    Rng rng(1);
    SMConv2d<double> layer(1, 1, 1, rng);
    layer.weight = Tensor<double>::from({3.0, 4.0}, {1, 1, 1, 2}, true);
    layer.scales = Tensor<double>::ones({1}, true);
    layer.eps = 0.0;
    auto wp = layer.modulated_weight();
    CHECK(wp.data()[0] == doctest::Approx(0.6));
    CHECK(wp.data()[1] == doctest::Approx(0.8));
}

TEST_CASE("smc scale homogeneity at eps=0") {
    Rng rng(2);
    SMConv2d<float> layer(3, 4, 3, rng);
    layer.eps = 0.0f;
    for (size_t i = 0; i < layer.scales.data().size(); ++i)
        layer.scales.data()[i] = 0.5f + 0.1f * static_cast<float>(i);
    auto x = rand_tensor<float>({1, 3, 6, 6}, rng);
    auto y1 = layer.forward(x);
    for (auto& s : layer.scales.data()) s *= 2.0f;
    auto y2 = layer.forward(x);
    for (size_t i = 0; i < y1.data().size(); ++i) {
        float denom = std::max(1.0f, std::abs(y1.data()[i]));
        CHECK(std::abs(y1.data()[i] - y2.data()[i]) / denom < 1e-6f);
    }
}

TEST_CASE("smc modulated weight norms lie in (0,1]") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        int ci = 1 + rng.uniform_int(6);
        int co = 1 + rng.uniform_int(6);
        SMConv2d<double> layer(ci, co, 3, rng);
        for (auto& s : layer.scales.data()) s = 0.2 + rng.uniform();
        auto wp = layer.modulated_weight();
        int64_t per = wp.numel() / co;
        for (int j = 0; j < co; ++j) {
            double n2 = 0;
            for (int64_t i = 0; i < per; ++i) {
                double v = wp.data()[static_cast<size_t>(j * per + i)];
                n2 += v * v;
            }
            CHECK(n2 > 0.0);
            CHECK(n2 <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("smc gradcheck for weight, scales, gain") {
    Rng rng(4);
    SMConv2d<double> layer(2, 3, 3, rng);
    for (auto& s : layer.scales.data()) s = 0.5 + rng.uniform();
    layer.gain.data()[0] = 1.2;
    auto x = rand_tensor<double>({1, 2, 5, 5}, rng);
    auto fn = [&]() {
        auto y = layer.forward(x);
        return sum(mul(y, y));
    };
    auto rep = gradcheck<double>(
        fn, {{"w", layer.weight}, {"s", layer.scales}, {"g", layer.gain}, {"b", layer.bias}});
    CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("resblock with zero residual path is the identity") {
    Rng rng(5);
    for (auto variant : {ResVariant::groupnorm, ResVariant::smc}) {
        ResBlock<float> block(variant, 8, 8, rng);
        ParamMap<float> pm;
        block.params(pm, "b");
        for (auto& [name, t] : pm.items) {
            if (name.find("weight") != std::string::npos || name.find("bias") != std::string::npos)
                std::fill(t.data().begin(), t.data().end(), 0.0f);
        }
        auto x = rand_tensor<float>({2, 8, 4, 4}, rng);
        auto y = block.forward(x);
        CHECK(testutil::max_abs_diff(y.data(), x.data()) < 1e-6);

        block.scale_factor = 2.0f;
        auto y2 = block.forward(x);
        for (size_t i = 0; i < x.data().size(); ++i)
            CHECK(y2.data()[i] == doctest::Approx(x.data()[i] / 2).epsilon(1e-6));
    }
}

TEST_CASE("resblock channel projection and mismatch error") {
    Rng rng(6);
    ResBlock<float> block(ResVariant::groupnorm, 4, 8, rng);
    auto x = rand_tensor<float>({1, 4, 6, 6}, rng);
    CHECK(block.forward(x).shape() == Shape{1, 8, 6, 6});
    auto bad = rand_tensor<float>({1, 8, 6, 6}, rng);
    CHECK_THROWS_AS(block.forward(bad), ShapeError);
}

TEST_CASE("resblock gradcheck, both variants") {
    Rng rng(7);
    for (auto variant : {ResVariant::groupnorm, ResVariant::smc}) {
        ResBlock<double> block(variant, 2, 3, rng);
        auto x = rand_tensor<double>({1, 2, 4, 4}, rng, 1.0, true);
        ParamMap<double> pm;
        block.params(pm, "rb");
        std::vector<std::pair<std::string, Tensor<double>>> inputs = {{"x", x}};
        for (auto& it : pm.items) inputs.push_back(it);
        auto fn = [&]() {
            auto y = block.forward(x);
            return sum(mul(y, y));
        };
        auto rep = gradcheck<double>(fn, inputs, 1e-4, 16, 10);
        CHECK(rep.max_rel_err < 1e-5);
    }
}

TEST_CASE("unet block keeps spatial extents and matches closed-form parameter count") {
    Rng rng(8);
    UNetBlockConfig cfg;
    cfg.in_channels = 4;
    cfg.out_channels = 6;
    cfg.model_channels = 8;
    cfg.ch_multiplies = {1, 2};
    cfg.num_res_blocks = 1;
    UNetBlock<float> block(cfg, rng);
    auto x = rand_tensor<float>({2, 4, 12, 12}, rng);
    auto y = block.forward(x);
    CHECK(y.shape() == Shape{2, 6, 12, 12});

    ParamMap<float> pm;
    block.params(pm, "u");
    CHECK(pm.total_params() == unet_params_closed_form(cfg));
}

TEST_CASE("litevae-b extractor config forward is finite") {
    Rng rng(9);
    UNetBlockConfig cfg;
    cfg.in_channels = 12;
    cfg.out_channels = 12;
    cfg.model_channels = 32;
    cfg.ch_multiplies = {1, 2, 3};
    cfg.num_res_blocks = 2;
    UNetBlock<float> block(cfg, rng);
    auto x = rand_tensor<float>({1, 12, 16, 16}, rng);
    auto y = block.forward(x);
    CHECK(y.shape() == Shape{1, 12, 16, 16});
    CHECK(testutil::all_finite(y.data()));

    ParamMap<float> pm;
    block.params(pm, "u");
    CHECK(pm.total_params() == unet_params_closed_form(cfg));
}

TEST_CASE("unet block gradcheck") {
    Rng rng(10);
    UNetBlockConfig cfg;
    cfg.in_channels = 2;
    cfg.out_channels = 2;
    cfg.model_channels = 4;
    cfg.ch_multiplies = {1, 2};
    cfg.num_res_blocks = 1;
    UNetBlock<double> block(cfg, rng);
    auto x = rand_tensor<double>({1, 2, 4, 4}, rng, 1.0, true);
    ParamMap<double> pm;
    block.params(pm, "u");
    std::vector<std::pair<std::string, Tensor<double>>> inputs = {{"x", x}};
    for (auto& it : pm.items) inputs.push_back(it);
    auto fn = [&]() {
        auto y = block.forward(x);
        return sum(mul(y, y));
    };
    auto rep = gradcheck<double>(fn, inputs, 1e-4, 6, 11);
    CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("unet block is translation equivariant away from borders") {
    Rng rng(11);
    UNetBlockConfig cfg;
    cfg.in_channels = 2;
    cfg.out_channels = 2;
    cfg.model_channels = 4;
    cfg.ch_multiplies = {1};
    cfg.num_res_blocks = 1;
    UNetBlock<double> block(cfg, rng);

    // field large enough that the blob's receptive field never reaches the
    // zero-padding ring, so group statistics match between the two runs
    int n = 64;
    auto make_input = [&](int offset) {
        auto x = Tensor<double>::zeros({1, 2, n, n});
        Rng blob(123);
        for (int c = 0; c < 2; ++c)
            for (int h = 0; h < 6; ++h)
                for (int w = 0; w < 6; ++w)
                    x.data()[static_cast<size_t>((c * n + 29 + offset + h) * n + 29 + offset + w)] =
                        blob.normal();
        return x;
    };
    auto y0 = block.forward(make_input(0));
    auto y1 = block.forward(make_input(1));
    for (int c = 0; c < 2; ++c)
        for (int h = 24; h < 42; ++h)
            for (int w = 24; w < 42; ++w) {
                double a = y0.data()[static_cast<size_t>((c * n + h) * n + w)];
                double b = y1.data()[static_cast<size_t>((c * n + h + 1) * n + w + 1)];
                CHECK(std::abs(a - b) < 1e-9);
            }
}

TEST_CASE("downsample2d geometry and pooling oracle") {
    Rng rng(12);
    Downsample2d<float> d1(5, 1, rng);
    auto x = rand_tensor<float>({1, 5, 16, 16}, rng);
    CHECK(d1.forward(x).shape() == Shape{1, 5, 16, 16});

    Downsample2d<float> d2(1, 2, rng);
    std::fill(d2.conv.weight.data().begin(), d2.conv.weight.data().end(), 0.25f);
    std::fill(d2.conv.bias.data().begin(), d2.conv.bias.data().end(), 0.0f);
    auto z = rand_tensor<float>({1, 1, 16, 16}, rng);
    auto y = d2.forward(z);
    CHECK(y.shape() == Shape{1, 1, 8, 8});
    for (int oh = 0; oh < 8; ++oh)
        for (int ow = 0; ow < 8; ++ow) {
            float avg = 0;
            for (int dh = 0; dh < 2; ++dh)
                for (int dw = 0; dw < 2; ++dw)
                    avg += z.data()[static_cast<size_t>((2 * oh + dh) * 16 + 2 * ow + dw)];
            avg /= 4.0f;
            CHECK(y.data()[static_cast<size_t>(oh * 8 + ow)] == doctest::Approx(avg).epsilon(1e-5));
        }

    Downsample2d<float> d4(12, 4, rng);
    auto q = rand_tensor<float>({1, 12, 32, 32}, rng);
    CHECK(d4.forward(q).shape() == Shape{1, 12, 8, 8});
}

TEST_CASE("decoder shape contract at f=8") {
    Rng rng(13);
    DecoderConfig cfg;
    cfg.z_channels = 4;
    cfg.ch = 32;
    cfg.mult = {1, 2, 4, 4};
    cfg.num_res_blocks = 2;
    SDDecoder<float> dec(cfg, rng);
    auto z = rand_tensor<float>({1, 4, 4, 4}, rng);
    auto img = dec.forward(z);
    CHECK(img.shape() == Shape{1, 3, 32, 32});
    CHECK(testutil::all_finite(img.data()));
}

TEST_CASE("decoder of zero latent with zero biases is zero") {
    Rng rng(14);
    DecoderConfig cfg;
    cfg.z_channels = 2;
    cfg.ch = 4;
    cfg.mult = {1, 2};
    cfg.num_res_blocks = 1;
    SDDecoder<float> dec(cfg, rng);
    auto z = Tensor<float>::zeros({1, 2, 4, 4});
    auto img = dec.forward(z);
    for (float v : img.data()) CHECK(v == 0.0f);
}

TEST_CASE("decoder gradcheck end-to-end on a tiny config") {
    Rng rng(15);
    DecoderConfig cfg;
    cfg.z_channels = 2;
    cfg.ch = 4;
    cfg.mult = {1, 2};
    cfg.num_res_blocks = 1;
    SDDecoder<double> dec(cfg, rng);
    auto z = rand_tensor<double>({1, 2, 3, 3}, rng, 1.0, true);
    ParamMap<double> pm;
    dec.params(pm, "d");
    std::vector<std::pair<std::string, Tensor<double>>> inputs = {{"z", z}};
    for (auto& it : pm.items) inputs.push_back(it);
    auto fn = [&]() {
        auto y = dec.forward(z);
        return sum(mul(y, y));
    };
    auto rep = gradcheck<double>(fn, inputs, 1e-4, 5, 16);
    CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("smc decoder variant carries no normalization parameters") {
    Rng rng(16);
    DecoderConfig cfg;
    cfg.z_channels = 2;
    cfg.ch = 4;
    cfg.mult = {1, 2};
    cfg.num_res_blocks = 1;
    cfg.use_smc = true;
    SDDecoder<float> dec(cfg, rng);
    ParamMap<float> pm;
    dec.params(pm, "d");
    for (auto& [name, t] : pm.items) {
        CHECK(name.find("gamma") == std::string::npos);
        CHECK(name.find("beta") == std::string::npos);
    }
    auto z = rand_tensor<float>({1, 2, 4, 4}, rng);
    CHECK(dec.forward(z).shape() == Shape{1, 3, 8, 8});
}

TEST_CASE("feature stats hook reports per-channel rms") {
    Rng rng(17);
    DecoderConfig cfg;
    cfg.z_channels = 2;
    cfg.ch = 4;
    cfg.mult = {1, 2};
    cfg.num_res_blocks = 1;
    SDDecoder<float> dec(cfg, rng);
    auto z = rand_tensor<float>({2, 2, 4, 4}, rng);
    FeatureStats stats;
    dec.forward(z, &stats);
    CHECK(stats.blocks.size() == 3);  // mid + two stages
    for (auto& [name, rms] : stats.blocks) {
        CHECK(!rms.empty());
        double r = balance_ratio(rms);
        CHECK(r >= 1.0 - 1e-9);
        CHECK(std::isfinite(r));
    }
}

TEST_CASE("attention block shape and gradcheck") {
    Rng rng(18);
    AttnBlock<double> attn(4, rng);
    auto x = rand_tensor<double>({1, 4, 3, 3}, rng, 1.0, true);
    CHECK(attn.forward(x).shape() == Shape{1, 4, 3, 3});
    ParamMap<double> pm;
    attn.params(pm, "a");
    std::vector<std::pair<std::string, Tensor<double>>> inputs = {{"x", x}};
    for (auto& it : pm.items) inputs.push_back(it);
    auto fn = [&]() {
        auto y = attn.forward(x);
        return sum(mul(y, y));
    };
    auto rep = gradcheck<double>(fn, inputs, 1e-4, 8, 19);
    CHECK(rep.max_rel_err < 1e-5);
}
