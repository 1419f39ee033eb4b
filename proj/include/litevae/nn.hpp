#pragma once

// Layer vocabulary: convolution wrappers, group normalization, self-modulated
// convolution, residual blocks (both normalization variants), the skip-stack
// UNet block used for feature extraction/aggregation, downsampling, attention,
// and the image decoder.

#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "litevae/tensor.hpp"

namespace litevae {

// Ordered named-parameter registry shared by the optimizer, checkpoints, and
// the parameter counter.
template <typename T>
struct ParamMap {
    std::vector<std::pair<std::string, Tensor<T>>> items;

    void add(const std::string& name, const Tensor<T>& t) { items.emplace_back(name, t); }

    Tensor<T>* find(const std::string& name) {
        for (auto& [n, t] : items)
            if (n == name) return &t;
        return nullptr;
    }

    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& [name, t] : items) n += t.numel();
        return n;
    }

    void set_requires_grad(bool rg) {
        for (auto& [n, t] : items) t.set_requires_grad(rg);
    }

    void zero_grad() {
        for (auto& [n, t] : items) t.zero_grad();
    }
};

// Desk-scale widths can drop below the usual 32 groups.
inline int norm_groups_for(int channels) { return std::gcd(channels, 32); }

// Conv weights drawn from N(0, 1/fan_in), biases zero.
template <typename T>
Tensor<T> conv_weight_init(int c_out, int c_in, int kh, int kw, Rng& rng) {
    T std = T(1) / std::sqrt(static_cast<T>(c_in) * kh * kw);
    return Tensor<T>::randn({c_out, c_in, kh, kw}, rng, std, true);
}

inline int64_t conv_flop_count(int64_t n, int64_t ci, int64_t co, int64_t k, int64_t oh, int64_t ow,
                               bool bias) {
    int64_t macs2 = 2 * ci * k * k * co * oh * ow * n;
    return macs2 + (bias ? co * oh * ow * n : 0);
}

template <typename T>
struct Conv2d {
    Tensor<T> weight, bias;
    int stride = 1;
    int padding = 0;

    Conv2d() = default;

    Conv2d(int c_in, int c_out, int k, Rng& rng, int stride_ = 1, int padding_ = -1,
           bool has_bias = true)
        : stride(stride_), padding(padding_ < 0 ? k / 2 : padding_) {
        weight = conv_weight_init<T>(c_out, c_in, k, k, rng);
        if (has_bias) bias = Tensor<T>::zeros({c_out}, true);
    }

    bool defined() const { return weight.defined(); }
    int in_channels() const { return weight.dim(1); }
    int out_channels() const { return weight.dim(0); }
    int kernel() const { return weight.dim(2); }

    Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, padding); }

    void params(ParamMap<T>& m, const std::string& prefix) {
        m.add(prefix + ".weight", weight);
        if (bias.defined()) m.add(prefix + ".bias", bias);
    }

    int out_extent(int e) const { return (e + 2 * padding - kernel()) / stride + 1; }

    int64_t flops(int n, int h, int w) const {
        return conv_flop_count(n, in_channels(), out_channels(), kernel(), out_extent(h),
                               out_extent(w), bias.defined());
    }
};

template <typename T>
struct GroupNorm {
    Tensor<T> gamma, beta;
    int groups = 1;
    T eps = T(1e-5);

    GroupNorm() = default;

    explicit GroupNorm(int channels, int groups_ = 0)
        : groups(groups_ > 0 ? groups_ : norm_groups_for(channels)) {
        gamma = Tensor<T>::ones({channels}, true);
        beta = Tensor<T>::zeros({channels}, true);
    }

    Tensor<T> forward(const Tensor<T>& x) const { return group_norm(x, groups, gamma, beta, eps); }

    void params(ParamMap<T>& m, const std::string& prefix) {
        m.add(prefix + ".gamma", gamma);
        m.add(prefix + ".beta", beta);
    }

    int64_t flops(int n, int h, int w) const {
        return 8LL * n * gamma.numel() * h * w;
    }
};

// Self-modulated convolution: w'_{ijk} = s_i w_{ijk} / (sqrt(sum_{i,k} (s_i
// w_{ijk})^2) + eps) per output channel j, output scaled by a learnable gain,
// bias added last.
template <typename T>
struct SMConv2d {
    Tensor<T> weight, bias, scales, gain;
    int stride = 1;
    int padding = 0;
    T eps = T(1e-8);

    SMConv2d() = default;

    SMConv2d(int c_in, int c_out, int k, Rng& rng, int stride_ = 1, int padding_ = -1,
             bool has_bias = true)
        : stride(stride_), padding(padding_ < 0 ? k / 2 : padding_) {
        weight = conv_weight_init<T>(c_out, c_in, k, k, rng);
        scales = Tensor<T>::ones({c_in}, true);
        gain = Tensor<T>::ones({1}, true);
        if (has_bias) bias = Tensor<T>::zeros({c_out}, true);
    }

    bool defined() const { return weight.defined(); }
    int in_channels() const { return weight.dim(1); }
    int out_channels() const { return weight.dim(0); }
    int kernel() const { return weight.dim(2); }

    Tensor<T> modulated_weight() const {
        auto wm = mul_cin(weight, scales);
        auto denom = add_scalar(litevae::sqrt(row_sums(mul(wm, wm), out_channels())), eps);
        return mul_all(div_per_row(wm, denom), gain);
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        return conv2d(x, modulated_weight(), bias, stride, padding);
    }

    void params(ParamMap<T>& m, const std::string& prefix) {
        m.add(prefix + ".weight", weight);
        m.add(prefix + ".scales", scales);
        m.add(prefix + ".gain", gain);
        if (bias.defined()) m.add(prefix + ".bias", bias);
    }

    int64_t flops(int n, int h, int w) const {
        int oh = (h + 2 * padding - kernel()) / stride + 1;
        int ow = (w + 2 * padding - kernel()) / stride + 1;
        int64_t mod = 4LL * weight.numel() + 2LL * out_channels();
        return mod + conv_flop_count(n, in_channels(), out_channels(), kernel(), oh, ow,
                                     bias.defined());
    }
};

enum class ResVariant { groupnorm, smc };

// groupnorm: norm-SiLU-conv-norm-SiLU-dropout-conv
// smc:       SiLU-SMC-SiLU-dropout-SMC (no normalization)
// output = (skip(x) + h) / scale_factor
template <typename T>
struct ResBlock {
    ResVariant variant = ResVariant::groupnorm;
    int in_ch = 0, out_ch = 0;
    T scale_factor = T(1);
    double dropout_p = 0.0;

    GroupNorm<T> norm_in, norm_out;
    Conv2d<T> conv_in, conv_out;
    SMConv2d<T> smc_in, smc_out;
    Conv2d<T> skip;  // undefined when identity

    ResBlock() = default;

    ResBlock(ResVariant v, int in_channels, int out_channels, Rng& rng, bool use_conv_skip = false,
             T scale = T(1))
        : variant(v), in_ch(in_channels), out_ch(out_channels), scale_factor(scale) {
        if (variant == ResVariant::groupnorm) {
            norm_in = GroupNorm<T>(in_channels);
            conv_in = Conv2d<T>(in_channels, out_channels, 3, rng);
            norm_out = GroupNorm<T>(out_channels);
            conv_out = Conv2d<T>(out_channels, out_channels, 3, rng);
        } else {
            smc_in = SMConv2d<T>(in_channels, out_channels, 3, rng);
            smc_out = SMConv2d<T>(out_channels, out_channels, 3, rng);
        }
        if (in_channels != out_channels)
            skip = Conv2d<T>(in_channels, out_channels, use_conv_skip ? 3 : 1, rng);
    }

    Tensor<T> forward(const Tensor<T>& x, Rng* dropout_rng = nullptr) const {
        if (x.dim(1) != in_ch)
            throw ShapeError("resblock: expected " + std::to_string(in_ch) + " channels, got " +
                             std::to_string(x.dim(1)));
        Tensor<T> h;
        if (variant == ResVariant::groupnorm) {
            h = conv_in.forward(silu(norm_in.forward(x)));
            h = silu(norm_out.forward(h));
            if (dropout_p > 0 && dropout_rng) h = dropout(h, dropout_p, *dropout_rng, true);
            h = conv_out.forward(h);
        } else {
            h = smc_in.forward(silu(x));
            h = silu(h);
            if (dropout_p > 0 && dropout_rng) h = dropout(h, dropout_p, *dropout_rng, true);
            h = smc_out.forward(h);
        }
        Tensor<T> s = skip.defined() ? skip.forward(x) : x;
        Tensor<T> y = add(s, h);
        if (scale_factor != T(1)) y = mul_scalar(y, T(1) / scale_factor);
        return y;
    }

    void params(ParamMap<T>& m, const std::string& prefix) {
        if (variant == ResVariant::groupnorm) {
            norm_in.params(m, prefix + ".norm_in");
            conv_in.params(m, prefix + ".conv_in");
            norm_out.params(m, prefix + ".norm_out");
            conv_out.params(m, prefix + ".conv_out");
        } else {
            smc_in.params(m, prefix + ".smc_in");
            smc_out.params(m, prefix + ".smc_out");
        }
        if (skip.defined()) skip.params(m, prefix + ".skip");
    }

    int64_t flops(int n, int h, int w) const {
        int64_t f = 0;
        int64_t numel_in = static_cast<int64_t>(n) * in_ch * h * w;
        int64_t numel_out = static_cast<int64_t>(n) * out_ch * h * w;
        if (variant == ResVariant::groupnorm) {
            f += norm_in.flops(n, h, w) + 4 * numel_in + conv_in.flops(n, h, w);
            f += norm_out.flops(n, h, w) + 4 * numel_out + conv_out.flops(n, h, w);
        } else {
            f += 4 * numel_in + smc_in.flops(n, h, w);
            f += 4 * numel_out + smc_out.flops(n, h, w);
        }
        if (skip.defined()) f += skip.flops(n, h, w);
        f += 2 * numel_out;  // residual add + scale
        return f;
    }
};

// Two equal-width residual blocks.
template <typename T>
struct MidBlock {
    ResBlock<T> res0, res1;

    MidBlock() = default;

    MidBlock(ResVariant v, int channels, Rng& rng)
        : res0(v, channels, channels, rng), res1(v, channels, channels, rng) {}

    Tensor<T> forward(const Tensor<T>& x) const { return res1.forward(res0.forward(x)); }

    void params(ParamMap<T>& m, const std::string& prefix) {
        res0.params(m, prefix + ".res0");
        res1.params(m, prefix + ".res1");
    }

    int64_t flops(int n, int h, int w) const { return res0.flops(n, h, w) + res1.flops(n, h, w); }
};

struct UNetBlockConfig {
    int in_channels = 0;
    int out_channels = 0;
    int model_channels = 0;
    std::vector<int> ch_multiplies = {1, 2, 4};
    int num_res_blocks = 2;
    bool use_smc = false;

    void validate() const {
        if (ch_multiplies.empty()) throw ShapeError("unet config: empty channel multipliers");
        if (in_channels <= 0 || out_channels <= 0 || model_channels <= 0 || num_res_blocks <= 0)
            throw ShapeError("unet config: all dimensions must be positive");
        for (int m : ch_multiplies)
            if (m <= 0) throw ShapeError("unet config: multipliers must be positive");
    }
};

// ADM-style UNet without spatial resampling. The conv-in output joins the skip
// stack, and the innermost decoder level runs one extra block so the stack is
// empty at the end.
template <typename T>
struct UNetBlock {
    UNetBlockConfig cfg;
    Conv2d<T> conv_in, conv_out;
    std::vector<ResBlock<T>> encoder;
    MidBlock<T> mid;
    std::vector<ResBlock<T>> decoder;

    UNetBlock() = default;

    UNetBlock(const UNetBlockConfig& config, Rng& rng) : cfg(config) {
        cfg.validate();
        ResVariant v = cfg.use_smc ? ResVariant::smc : ResVariant::groupnorm;
        int mc = cfg.model_channels;
        conv_in = Conv2d<T>(cfg.in_channels, mc, 3, rng);

        int channel = mc;
        std::vector<int> skip_channels = {mc};
        for (int mult : cfg.ch_multiplies)
            for (int i = 0; i < cfg.num_res_blocks; ++i) {
                encoder.emplace_back(v, channel, mc * mult, rng);
                channel = mc * mult;
                skip_channels.push_back(channel);
            }

        mid = MidBlock<T>(v, channel, rng);

        int levels = static_cast<int>(cfg.ch_multiplies.size());
        for (int li = levels - 1; li >= 0; --li) {
            int blocks = cfg.num_res_blocks + (li == 0 ? 1 : 0);
            for (int i = 0; i < blocks; ++i) {
                int sc = skip_channels.back();
                skip_channels.pop_back();
                decoder.emplace_back(v, channel + sc, mc * cfg.ch_multiplies[static_cast<size_t>(li)],
                                     rng);
                channel = mc * cfg.ch_multiplies[static_cast<size_t>(li)];
            }
        }
        if (!skip_channels.empty()) throw ContractError("unet: skip stack not drained");

        conv_out = Conv2d<T>(channel, cfg.out_channels, 3, rng);
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        if (x.dim(1) != cfg.in_channels)
            throw ShapeError("unet: expected " + std::to_string(cfg.in_channels) +
                             " input channels, got " + std::to_string(x.dim(1)));
        Tensor<T> h = conv_in.forward(x);
        std::vector<Tensor<T>> skips = {h};
        for (const auto& block : encoder) {
            h = block.forward(h);
            skips.push_back(h);
        }
        h = mid.forward(h);
        for (const auto& block : decoder) {
            Tensor<T> s = skips.back();
            skips.pop_back();
            h = block.forward(concat<T>({h, s}, 1));
        }
        if (!skips.empty()) throw ContractError("unet: skip stack not empty after decoding");
        return conv_out.forward(h);
    }

    void params(ParamMap<T>& m, const std::string& prefix) {
        conv_in.params(m, prefix + ".conv_in");
        for (size_t i = 0; i < encoder.size(); ++i)
            encoder[i].params(m, prefix + ".enc" + std::to_string(i));
        mid.params(m, prefix + ".mid");
        for (size_t i = 0; i < decoder.size(); ++i)
            decoder[i].params(m, prefix + ".dec" + std::to_string(i));
        conv_out.params(m, prefix + ".conv_out");
    }

    int64_t flops(int n, int h, int w) const {
        int64_t f = conv_in.flops(n, h, w);
        for (const auto& b : encoder) f += b.flops(n, h, w);
        f += mid.flops(n, h, w);
        for (const auto& b : decoder) {
            // concat itself is free; block input already includes skip channels
            f += b.flops(n, h, w);
        }
        f += conv_out.flops(n, h, w);
        return f;
    }
};

// Learned pooling: kernel = stride = factor.
template <typename T>
struct Downsample2d {
    Conv2d<T> conv;

    Downsample2d() = default;

    Downsample2d(int channels, int factor, Rng& rng)
        : conv(channels, channels, factor < 2 ? 1 : factor, rng, factor < 2 ? 1 : factor, 0) {}

    Tensor<T> forward(const Tensor<T>& x) const { return conv.forward(x); }

    void params(ParamMap<T>& m, const std::string& prefix) { conv.params(m, prefix + ".conv"); }

    int64_t flops(int n, int h, int w) const { return conv.flops(n, h, w); }
};

// Single-head dot-product attention over spatial positions (1x1 projections).
template <typename T>
struct AttnBlock {
    GroupNorm<T> norm;
    Conv2d<T> q, k, v, proj;
    int channels = 0;

    AttnBlock() = default;

    AttnBlock(int channels_, Rng& rng)
        : norm(channels_),
          q(channels_, channels_, 1, rng),
          k(channels_, channels_, 1, rng),
          v(channels_, channels_, 1, rng),
          proj(channels_, channels_, 1, rng),
          channels(channels_) {}

    Tensor<T> forward(const Tensor<T>& x) const {
        int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        Tensor<T> h = norm.forward(x);
        auto qf = reshape(q.forward(h), {N, C, H * W});
        auto kf = reshape(k.forward(h), {N, C, H * W});
        auto vf = reshape(v.forward(h), {N, C, H * W});
        auto attn = softmax_lastdim(
            mul_scalar(bmm(transpose_last2(qf), kf), T(1) / std::sqrt(static_cast<T>(C))));
        auto out = reshape(bmm(vf, transpose_last2(attn)), {N, C, H, W});
        return add(x, proj.forward(out));
    }

    void params(ParamMap<T>& m, const std::string& prefix) {
        norm.params(m, prefix + ".norm");
        q.params(m, prefix + ".q");
        k.params(m, prefix + ".k");
        v.params(m, prefix + ".v");
        proj.params(m, prefix + ".proj");
    }

    int64_t flops(int n, int h, int w) const {
        int64_t hw = static_cast<int64_t>(h) * w;
        int64_t f = norm.flops(n, h, w);
        f += q.flops(n, h, w) + k.flops(n, h, w) + v.flops(n, h, w) + proj.flops(n, h, w);
        f += 2LL * n * hw * hw * channels * 2;  // two batched matmuls
        f += 5LL * n * hw * hw;                 // softmax
        f += static_cast<int64_t>(n) * channels * hw;
        return f;
    }
};

// Per-block channel RMS statistics recorded during decoder forward passes.
struct FeatureStats {
    std::vector<std::pair<std::string, std::vector<double>>> blocks;
};

template <typename T>
void record_channel_rms(FeatureStats* stats, const std::string& name, const Tensor<T>& t) {
    if (!stats) return;
    int N = t.dim(0), C = t.dim(1), H = t.dim(2), W = t.dim(3);
    std::vector<double> rms(static_cast<size_t>(C), 0.0);
    int64_t plane = static_cast<int64_t>(H) * W;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* p = t.data().data() + (static_cast<int64_t>(n) * C + c) * plane;
            double acc = 0;
            for (int64_t i = 0; i < plane; ++i) acc += static_cast<double>(p[i]) * p[i];
            rms[static_cast<size_t>(c)] += acc;
        }
    for (auto& r : rms) r = std::sqrt(r / (static_cast<double>(N) * plane));
    stats->blocks.emplace_back(name, std::move(rms));
}

// max/mean of per-channel RMS; 1 means perfectly balanced feature maps.
inline double balance_ratio(const std::vector<double>& rms) {
    double mx = 0, mean = 0;
    for (double r : rms) {
        mx = std::max(mx, r);
        mean += r;
    }
    mean /= static_cast<double>(rms.size());
    return mean > 0 ? mx / mean : 0.0;
}

struct DecoderConfig {
    int z_channels = 12;
    int out_channels = 3;
    int ch = 32;
    std::vector<int> mult = {1, 2, 4, 4};
    int num_res_blocks = 2;
    bool use_smc = false;
    bool mid_attn = false;
    // x2 upsamples spread over the stages; -1 means levels-1. 3 gives f=8
    // (image output), 2 gives f=4 (wavelet output, the level-1 IDWT supplies
    // the final doubling).
    int upsamples = -1;
};

// SD-VAE style decoder: conv-in to ch*mult.back(), mid (res [attn] res), then
// one stage per multiplier from the deepest out, each with num_res_blocks+1
// blocks, upsampling x2 after the first `upsamples` stages.
template <typename T>
struct SDDecoder {
    DecoderConfig cfg;
    Conv2d<T> conv_in;
    ResBlock<T> mid1, mid2;
    AttnBlock<T> attn;
    bool has_attn = false;

    struct UpStage {
        std::vector<ResBlock<T>> blocks;
        bool upsample = false;
        Conv2d<T> up_conv;
    };
    std::vector<UpStage> stages;

    GroupNorm<T> tail_norm;
    Conv2d<T> tail_conv;
    SMConv2d<T> tail_smc;

    SDDecoder() = default;

    SDDecoder(const DecoderConfig& config, Rng& rng) : cfg(config) {
        ResVariant v = cfg.use_smc ? ResVariant::smc : ResVariant::groupnorm;
        int levels = static_cast<int>(cfg.mult.size());
        int block_in = cfg.ch * cfg.mult[static_cast<size_t>(levels - 1)];
        conv_in = Conv2d<T>(cfg.z_channels, block_in, 3, rng);
        mid1 = ResBlock<T>(v, block_in, block_in, rng);
        if (cfg.mid_attn) {
            attn = AttnBlock<T>(block_in, rng);
            has_attn = true;
        }
        mid2 = ResBlock<T>(v, block_in, block_in, rng);

        if (cfg.upsamples < 0) cfg.upsamples = levels - 1;
        if (cfg.upsamples >= levels)
            throw ShapeError("decoder: upsample count must lie in [0, levels)");
        for (int li = levels - 1; li >= 0; --li) {
            UpStage stage;
            int block_out = cfg.ch * cfg.mult[static_cast<size_t>(li)];
            for (int i = 0; i < cfg.num_res_blocks + 1; ++i) {
                stage.blocks.emplace_back(v, block_in, block_out, rng);
                block_in = block_out;
            }
            if (levels - 1 - li < cfg.upsamples) {
                stage.upsample = true;
                stage.up_conv = Conv2d<T>(block_in, block_in, 3, rng);
            }
            stages.push_back(std::move(stage));
        }

        if (cfg.use_smc) {
            tail_smc = SMConv2d<T>(block_in, cfg.out_channels, 3, rng);
        } else {
            tail_norm = GroupNorm<T>(block_in);
            tail_conv = Conv2d<T>(block_in, cfg.out_channels, 3, rng);
        }
    }

    Tensor<T> forward(const Tensor<T>& z, FeatureStats* stats = nullptr) const {
        if (z.dim(1) != cfg.z_channels)
            throw ShapeError("decoder: expected " + std::to_string(cfg.z_channels) +
                             " latent channels, got " + std::to_string(z.dim(1)));
        Tensor<T> h = conv_in.forward(z);
        h = mid1.forward(h);
        if (has_attn) h = attn.forward(h);
        h = mid2.forward(h);
        record_channel_rms(stats, "mid", h);
        for (size_t si = 0; si < stages.size(); ++si) {
            const auto& stage = stages[si];
            for (size_t bi = 0; bi < stage.blocks.size(); ++bi)
                h = stage.blocks[bi].forward(h);
            record_channel_rms(stats, "stage" + std::to_string(si), h);
            if (stage.upsample) h = stage.up_conv.forward(upsample_nearest(h, 2));
        }
        if (cfg.use_smc) {
            h = tail_smc.forward(silu(h));
        } else {
            h = tail_conv.forward(silu(tail_norm.forward(h)));
        }
        return h;
    }

    void params(ParamMap<T>& m, const std::string& prefix) {
        conv_in.params(m, prefix + ".conv_in");
        mid1.params(m, prefix + ".mid1");
        if (has_attn) attn.params(m, prefix + ".attn");
        mid2.params(m, prefix + ".mid2");
        for (size_t si = 0; si < stages.size(); ++si) {
            auto& stage = stages[si];
            std::string sp = prefix + ".up" + std::to_string(si);
            for (size_t bi = 0; bi < stage.blocks.size(); ++bi)
                stage.blocks[bi].params(m, sp + ".block" + std::to_string(bi));
            if (stage.upsample) stage.up_conv.params(m, sp + ".up_conv");
        }
        if (cfg.use_smc) {
            tail_smc.params(m, prefix + ".tail_smc");
        } else {
            tail_norm.params(m, prefix + ".tail_norm");
            tail_conv.params(m, prefix + ".tail_conv");
        }
    }

    int64_t flops(int n, int h, int w) const {
        int64_t f = conv_in.flops(n, h, w);
        f += mid1.flops(n, h, w) + mid2.flops(n, h, w);
        if (has_attn) f += attn.flops(n, h, w);
        int ch = h, cw = w;
        for (const auto& stage : stages) {
            for (const auto& b : stage.blocks) f += b.flops(n, ch, cw);
            if (stage.upsample) {
                ch *= 2;
                cw *= 2;
                f += static_cast<int64_t>(n) * stage.up_conv.in_channels() * ch * cw;
                f += stage.up_conv.flops(n, ch, cw);
            }
        }
        if (cfg.use_smc) {
            f += tail_smc.flops(n, ch, cw) +
                 4LL * n * tail_smc.in_channels() * ch * cw;
        } else {
            f += tail_norm.flops(n, ch, cw) + tail_conv.flops(n, ch, cw) +
                 4LL * n * tail_conv.in_channels() * ch * cw;
        }
        return f;
    }
};

}  // namespace litevae
