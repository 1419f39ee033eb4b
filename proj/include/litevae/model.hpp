#pragma once

// Model assembly: the wavelet encoder (per-level extractors + aggregator), the
// diagonal Gaussian latent, the decoder, non-learned encoder variants, and a
// conventional strided-conv reference encoder for comparisons.

#include <string>
#include <vector>

#include "litevae/nn.hpp"
#include "litevae/wavelet.hpp"

namespace litevae {

enum class SizePreset { tiny, S, B, M, L };
enum class EncoderKind { litevae, reference, nonlearned_dwt, nonlearned_dwt2 };
enum class OutputType { image, wavelet };
enum class DecoderPreset { tiny, desk, paper };

struct ModelConfig {
    int latent_dim = 12;
    SizePreset preset = SizePreset::B;
    EncoderKind encoder = EncoderKind::litevae;
    bool use_1x1_conv = false;
    bool share_extractor_weights = false;
    OutputType output_type = OutputType::image;
    DecoderPreset decoder_preset = DecoderPreset::desk;
    bool decoder_smc = false;
    bool decoder_mid_attn = false;

    static constexpr int downsample_factor = 8;

    // Feature-extraction widths per size preset (input/output 12 channels).
    UNetBlockConfig extractor_config() const {
        UNetBlockConfig c;
        c.in_channels = 12;
        c.out_channels = 12;
        switch (preset) {
            case SizePreset::tiny: c.model_channels = 8;  c.ch_multiplies = {1, 2};    c.num_res_blocks = 1; break;
            case SizePreset::S:    c.model_channels = 16; c.ch_multiplies = {1, 2, 2}; c.num_res_blocks = 2; break;
            case SizePreset::B:    c.model_channels = 32; c.ch_multiplies = {1, 2, 3}; c.num_res_blocks = 2; break;
            case SizePreset::M:    c.model_channels = 64; c.ch_multiplies = {1, 2, 4}; c.num_res_blocks = 2; break;
            case SizePreset::L:    c.model_channels = 64; c.ch_multiplies = {1, 2, 4}; c.num_res_blocks = 2; break;
        }
        return c;
    }

    // Feature-aggregation widths per size preset (input 36, output 2*n_z).
    UNetBlockConfig aggregator_config() const {
        UNetBlockConfig c;
        c.in_channels = 36;
        c.out_channels = 2 * latent_dim;
        switch (preset) {
            case SizePreset::tiny: c.model_channels = 16; c.ch_multiplies = {1, 2};    c.num_res_blocks = 1; break;
            case SizePreset::S:    c.model_channels = 16; c.ch_multiplies = {1, 2, 2}; c.num_res_blocks = 2; break;
            case SizePreset::B:    c.model_channels = 32; c.ch_multiplies = {1, 2, 3}; c.num_res_blocks = 2; break;
            case SizePreset::M:    c.model_channels = 32; c.ch_multiplies = {1, 2, 3}; c.num_res_blocks = 2; break;
            case SizePreset::L:    c.model_channels = 64; c.ch_multiplies = {1, 2, 4}; c.num_res_blocks = 2; break;
        }
        return c;
    }

    int effective_latent_dim() const {
        if (encoder == EncoderKind::nonlearned_dwt) return 12;
        if (encoder == EncoderKind::nonlearned_dwt2) return 48;
        return latent_dim;
    }

    DecoderConfig decoder_config() const {
        DecoderConfig c;
        c.z_channels = effective_latent_dim();
        c.out_channels = output_type == OutputType::wavelet ? 12 : 3;
        c.upsamples = output_type == OutputType::wavelet ? 2 : 3;
        c.use_smc = decoder_smc;
        c.mid_attn = decoder_mid_attn;
        switch (decoder_preset) {
            case DecoderPreset::tiny:  c.ch = 16;  c.mult = {1, 1, 2, 2}; c.num_res_blocks = 1; break;
            case DecoderPreset::desk:  c.ch = 32;  c.mult = {1, 2, 4, 4}; c.num_res_blocks = 2; break;
            case DecoderPreset::paper: c.ch = 128; c.mult = {1, 2, 4, 4}; c.num_res_blocks = 2; break;
        }
        return c;
    }
};

inline SizePreset size_preset_from_string(const std::string& s) {
    if (s == "tiny") return SizePreset::tiny;
    if (s == "S") return SizePreset::S;
    if (s == "B") return SizePreset::B;
    if (s == "M") return SizePreset::M;
    if (s == "L") return SizePreset::L;
    throw ConfigError("unknown size preset '" + s + "' (expected tiny/S/B/M/L)");
}

inline std::string to_string(SizePreset p) {
    switch (p) {
        case SizePreset::tiny: return "tiny";
        case SizePreset::S: return "S";
        case SizePreset::B: return "B";
        case SizePreset::M: return "M";
        case SizePreset::L: return "L";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Diagonal Gaussian latent
// ---------------------------------------------------------------------------

template <typename T>
struct GaussianLatent {
    Tensor<T> mean;
    Tensor<T> logvar;  // clamped to [-30, 20]

    Tensor<T> mode() const { return mean; }

    std::pair<Tensor<T>, Tensor<T>> sample_with_eps(Rng& rng) const {
        Tensor<T> eps = Tensor<T>::randn(mean.shape(), rng);
        Tensor<T> sigma = litevae::exp(mul_scalar(logvar, T(0.5)));
        return {add(mean, mul(sigma, eps)), eps};
    }

    Tensor<T> sample(Rng& rng) const { return sample_with_eps(rng).first; }

    // mean over the batch of 1/2 * sum(mu^2 + sigma^2 - 1 - logvar)
    Tensor<T> kl() const {
        int batch = mean.dim(0);
        Tensor<T> t = sub(sub(add(mul(mean, mean), litevae::exp(logvar)),
                              Tensor<T>::ones(mean.shape())),
                          logvar);
        return mul_scalar(litevae::sum(t), T(0.5) / static_cast<T>(batch));
    }
};

// First n_z channels are the mean, the last n_z the (clamped) log-variance.
template <typename T>
GaussianLatent<T> latent_distribution(const Tensor<T>& raw) {
    if (raw.dim(1) % 2 != 0) throw ShapeError("latent_distribution: odd channel count");
    auto parts = chunk(raw, 2, 1);
    GaussianLatent<T> g;
    g.mean = parts[0];
    g.logvar = clamp(parts[1], T(-30), T(20));
    return g;
}

// ---------------------------------------------------------------------------
// Non-learned encoders (fixed wavelet representations)
// ---------------------------------------------------------------------------

// dwt:  normalized level-3 bands, 12 channels at H/8.
// dwt2: normalized level-3 bands (12) plus space-to-depth(r=2) of the
//       normalized level-2 high bands (9*4=36), 48 channels at H/8.
template <typename T>
Tensor<T> nonlearned_encode(const Tensor<T>& image, EncoderKind variant) {
    if (variant == EncoderKind::nonlearned_dwt) {
        return normalized_dwt(image, 3).bands;
    }
    if (variant == EncoderKind::nonlearned_dwt2) {
        int C = image.dim(1);
        Tensor<T> l3 = normalized_dwt(image, 3).bands;
        Tensor<T> l2 = normalized_dwt(image, 2).bands;
        Tensor<T> high2 = slice_axis(l2, 1, C, 4 * C);
        return concat<T>({l3, space_to_depth(high2, 2)}, 1);
    }
    throw ContractError("nonlearned_encode: not a non-learned encoder kind");
}

// ---------------------------------------------------------------------------
// Reference VAE encoder (strided-conv mirror of the decoder)
// ---------------------------------------------------------------------------

struct RefEncoderConfig {
    int in_channels = 3;
    int z_channels = 4;  // output is doubled for mean/logvar
    int ch = 128;
    std::vector<int> mult = {1, 2, 4, 4};
    int num_res_blocks = 2;
    bool mid_attn = true;
};

template <typename T>
struct RefEncoder {
    RefEncoderConfig cfg;
    Conv2d<T> conv_in;

    struct DownStage {
        std::vector<ResBlock<T>> blocks;
        bool down = false;
        Conv2d<T> down_conv;
    };
    std::vector<DownStage> stages;

    ResBlock<T> mid1, mid2;
    AttnBlock<T> attn;
    bool has_attn = false;
    GroupNorm<T> tail_norm;
    Conv2d<T> tail_conv;

    RefEncoder() = default;

    RefEncoder(const RefEncoderConfig& config, Rng& rng) : cfg(config) {
        conv_in = Conv2d<T>(cfg.in_channels, cfg.ch, 3, rng);
        int block_in = cfg.ch;
        int levels = static_cast<int>(cfg.mult.size());
        for (int li = 0; li < levels; ++li) {
            DownStage stage;
            int block_out = cfg.ch * cfg.mult[static_cast<size_t>(li)];
            for (int i = 0; i < cfg.num_res_blocks; ++i) {
                stage.blocks.emplace_back(ResVariant::groupnorm, block_in, block_out, rng);
                block_in = block_out;
            }
            if (li < levels - 1) {
                stage.down = true;
                stage.down_conv = Conv2d<T>(block_in, block_in, 3, rng, 2, 1);
            }
            stages.push_back(std::move(stage));
        }
        mid1 = ResBlock<T>(ResVariant::groupnorm, block_in, block_in, rng);
        if (cfg.mid_attn) {
            attn = AttnBlock<T>(block_in, rng);
            has_attn = true;
        }
        mid2 = ResBlock<T>(ResVariant::groupnorm, block_in, block_in, rng);
        tail_norm = GroupNorm<T>(block_in);
        tail_conv = Conv2d<T>(block_in, 2 * cfg.z_channels, 3, rng);
    }

    Tensor<T> forward(const Tensor<T>& image) const {
        Tensor<T> h = conv_in.forward(image);
        for (const auto& stage : stages) {
            for (const auto& b : stage.blocks) h = b.forward(h);
            if (stage.down) h = stage.down_conv.forward(h);
        }
        h = mid1.forward(h);
        if (has_attn) h = attn.forward(h);
        h = mid2.forward(h);
        return tail_conv.forward(silu(tail_norm.forward(h)));
    }

    void params(ParamMap<T>& m, const std::string& prefix) {
        conv_in.params(m, prefix + ".conv_in");
        for (size_t si = 0; si < stages.size(); ++si) {
            auto& stage = stages[si];
            std::string sp = prefix + ".down" + std::to_string(si);
            for (size_t bi = 0; bi < stage.blocks.size(); ++bi)
                stage.blocks[bi].params(m, sp + ".block" + std::to_string(bi));
            if (stage.down) stage.down_conv.params(m, sp + ".down_conv");
        }
        mid1.params(m, prefix + ".mid1");
        if (has_attn) attn.params(m, prefix + ".attn");
        mid2.params(m, prefix + ".mid2");
        tail_norm.params(m, prefix + ".tail_norm");
        tail_conv.params(m, prefix + ".tail_conv");
    }

    int64_t flops(int n, int h, int w) const {
        int64_t f = conv_in.flops(n, h, w);
        int ch = h, cw = w;
        for (const auto& stage : stages) {
            for (const auto& b : stage.blocks) f += b.flops(n, ch, cw);
            if (stage.down) {
                f += stage.down_conv.flops(n, ch, cw);
                ch /= 2;
                cw /= 2;
            }
        }
        f += mid1.flops(n, ch, cw) + mid2.flops(n, ch, cw);
        if (has_attn) f += attn.flops(n, ch, cw);
        f += tail_norm.flops(n, ch, cw) + tail_conv.flops(n, ch, cw) +
             4LL * n * tail_conv.in_channels() * ch * cw;
        return f;
    }
};

// Paper-scale reference preset used for the parameter/FLOP comparison.
inline RefEncoderConfig ref_encoder_paper_config() { return RefEncoderConfig{}; }

inline RefEncoderConfig ref_encoder_tiny_config(int n_z) {
    RefEncoderConfig c;
    c.z_channels = n_z;
    c.ch = 16;
    c.mult = {1, 1, 2, 2};
    c.num_res_blocks = 1;
    c.mid_attn = false;
    return c;
}

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

template <typename T>
struct VAEOutput {
    Tensor<T> image_recon;
    Tensor<T> wavelet_recon;  // normalized level-1 bands of the reconstruction
    Tensor<T> latent;
    Tensor<T> kl;  // scalar
    GaussianLatent<T> dist;
    bool has_dist = false;
};

template <typename T>
struct LiteVAE {
    ModelConfig cfg;

    std::vector<UNetBlock<T>> extractors;  // one entry when weights are shared
    Downsample2d<T> down1, down2;
    UNetBlock<T> aggregator;
    Conv2d<T> pre_conv, post_conv;  // optional 1x1 pair
    RefEncoder<T> ref_encoder;
    SDDecoder<T> decoder;

    LiteVAE() = default;

    explicit LiteVAE(const ModelConfig& config, Rng& rng) : cfg(config) {
        if (cfg.encoder == EncoderKind::litevae) {
            auto ext_cfg = cfg.extractor_config();
            int n_ext = cfg.share_extractor_weights ? 1 : 3;
            for (int i = 0; i < n_ext; ++i) extractors.emplace_back(ext_cfg, rng);
            down1 = Downsample2d<T>(12, 4, rng);
            down2 = Downsample2d<T>(12, 2, rng);
            aggregator = UNetBlock<T>(cfg.aggregator_config(), rng);
            if (cfg.use_1x1_conv) {
                pre_conv = Conv2d<T>(2 * cfg.latent_dim, 2 * cfg.latent_dim, 1, rng);
                post_conv = Conv2d<T>(cfg.latent_dim, cfg.latent_dim, 1, rng);
            }
        } else if (cfg.encoder == EncoderKind::reference) {
            RefEncoderConfig rc = ref_encoder_tiny_config(cfg.latent_dim);
            if (cfg.decoder_preset == DecoderPreset::paper) rc = ref_encoder_paper_config();
            rc.z_channels = cfg.latent_dim;
            ref_encoder = RefEncoder<T>(rc, rng);
            if (cfg.use_1x1_conv) {
                pre_conv = Conv2d<T>(2 * cfg.latent_dim, 2 * cfg.latent_dim, 1, rng);
                post_conv = Conv2d<T>(cfg.latent_dim, cfg.latent_dim, 1, rng);
            }
        }
        decoder = SDDecoder<T>(cfg.decoder_config(), rng);
    }

    bool is_nonlearned() const {
        return cfg.encoder == EncoderKind::nonlearned_dwt ||
               cfg.encoder == EncoderKind::nonlearned_dwt2;
    }

    const UNetBlock<T>& extractor(int level) const {
        return cfg.share_extractor_weights ? extractors[0]
                                           : extractors[static_cast<size_t>(level - 1)];
    }

    // Raw pre-distribution latent [N, 2*n_z, H/8, W/8] for learned encoders,
    // the fixed representation for non-learned ones.
    Tensor<T> encode(const Tensor<T>& image) const {
        if (image.ndim() != 4 || image.dim(2) % 8 != 0 || image.dim(3) % 8 != 0)
            throw ShapeError("encode: spatial extents must be divisible by 8, got " +
                             shape_str(image.shape()));
        if (is_nonlearned()) return nonlearned_encode(image, cfg.encoder);
        if (cfg.encoder == EncoderKind::reference) {
            Tensor<T> raw = ref_encoder.forward(image);
            return cfg.use_1x1_conv ? pre_conv.forward(raw) : raw;
        }
        Tensor<T> b1 = normalized_dwt(image, 1).bands;
        Tensor<T> b2 = normalized_dwt(image, 2).bands;
        Tensor<T> b3 = normalized_dwt(image, 3).bands;
        Tensor<T> f1 = down1.forward(extractor(1).forward(b1));
        Tensor<T> f2 = down2.forward(extractor(2).forward(b2));
        Tensor<T> f3 = extractor(3).forward(b3);
        Tensor<T> raw = aggregator.forward(concat<T>({f1, f2, f3}, 1));
        return cfg.use_1x1_conv ? pre_conv.forward(raw) : raw;
    }

    // Returns (image_recon, wavelet_recon).
    std::pair<Tensor<T>, Tensor<T>> decode(const Tensor<T>& z, FeatureStats* stats = nullptr) const {
        Tensor<T> zin = (cfg.use_1x1_conv && post_conv.defined()) ? post_conv.forward(z) : z;
        if (cfg.output_type == OutputType::image) {
            Tensor<T> image = decoder.forward(zin, stats);
            Tensor<T> wavelet = normalized_dwt(image, 1).bands;
            return {image, wavelet};
        }
        Tensor<T> wavelet = decoder.forward(zin, stats);
        Tensor<T> image = mul_scalar(haar_idwt_level1(wavelet), T(2));
        return {image, wavelet};
    }

    VAEOutput<T> forward(const Tensor<T>& image, bool sample_latent, Rng& rng) const {
        VAEOutput<T> out;
        Tensor<T> raw = encode(image);
        if (is_nonlearned()) {
            out.latent = raw;
            out.kl = Tensor<T>::scalar(T(0));
        } else {
            out.dist = latent_distribution(raw);
            out.has_dist = true;
            out.latent = sample_latent ? out.dist.sample(rng) : out.dist.mode();
            out.kl = out.dist.kl();
        }
        auto [img, wav] = decode(out.latent);
        out.image_recon = img;
        out.wavelet_recon = wav;
        return out;
    }

    void encoder_params(ParamMap<T>& m) {
        if (cfg.encoder == EncoderKind::litevae) {
            for (size_t i = 0; i < extractors.size(); ++i)
                extractors[i].params(m, "encoder.extractor" + std::to_string(i + 1));
            down1.params(m, "encoder.down1");
            down2.params(m, "encoder.down2");
            aggregator.params(m, "encoder.aggregator");
            if (pre_conv.defined()) pre_conv.params(m, "encoder.pre_conv");
        } else if (cfg.encoder == EncoderKind::reference) {
            ref_encoder.params(m, "encoder.ref");
            if (pre_conv.defined()) pre_conv.params(m, "encoder.pre_conv");
        }
    }

    void params(ParamMap<T>& m) {
        encoder_params(m);
        if (post_conv.defined()) post_conv.params(m, "post_conv");
        decoder.params(m, "decoder");
    }

    int64_t encoder_param_count() {
        ParamMap<T> m;
        encoder_params(m);
        int64_t n = m.total_params();
        // shared extractors are applied three times but stored once
        return n;
    }

    int64_t encoder_flops(int n, int h, int w) const {
        if (is_nonlearned()) return 0;
        if (cfg.encoder == EncoderKind::reference) {
            int64_t f = ref_encoder.flops(n, h, w);
            if (pre_conv.defined()) f += pre_conv.flops(n, h / 8, w / 8);
            return f;
        }
        int64_t f = 0;
        f += extractor(1).flops(n, h / 2, w / 2) + down1.flops(n, h / 2, w / 2);
        f += extractor(2).flops(n, h / 4, w / 4) + down2.flops(n, h / 4, w / 4);
        f += extractor(3).flops(n, h / 8, w / 8);
        f += aggregator.flops(n, h / 8, w / 8);
        if (pre_conv.defined()) f += pre_conv.flops(n, h / 8, w / 8);
        return f;
    }

    int64_t decoder_flops(int n, int h, int w) const { return decoder.flops(n, h / 8, w / 8); }
};

}  // namespace litevae
