#pragma once

// Optimizer, two-stage training loop with optional adversarial branch,
// checkpoint persistence, and the deterministic data pipeline.

#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "litevae/image.hpp"
#include "litevae/losses.hpp"
#include "litevae/metrics.hpp"
#include "litevae/model.hpp"

namespace litevae {

// ---------------------------------------------------------------------------
// Checkpoint I/O (format: see README; magic "LVAE", version 1, little-endian)
// ---------------------------------------------------------------------------

struct RawTensor {
    std::string name;
    uint8_t dtype = 0;  // 0 = f32, 1 = f64
    std::vector<uint64_t> dims;
    std::vector<char> bytes;

    int64_t count() const {
        int64_t n = 1;
        for (uint64_t d : dims) n *= static_cast<int64_t>(d);
        return n;
    }
};

struct RawCheckpoint {
    uint32_t version = 1;
    uint64_t step = 0;
    std::string config;
    std::vector<RawTensor> tensors;

    const RawTensor* find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }
};

RawCheckpoint load_checkpoint_raw(const std::string& path);
// Atomic: writes to a temp file in the same directory, then renames.
void save_checkpoint_raw(const std::string& path, const RawCheckpoint& ckpt);

template <typename T>
constexpr uint8_t dtype_code() {
    return sizeof(T) == 4 ? 0 : 1;
}

template <typename T>
RawTensor to_raw_tensor(const std::string& name, const Tensor<T>& t) {
    RawTensor r;
    r.name = name;
    r.dtype = dtype_code<T>();
    for (int d : t.shape()) r.dims.push_back(static_cast<uint64_t>(d));
    r.bytes.resize(t.data().size() * sizeof(T));
    std::memcpy(r.bytes.data(), t.data().data(), r.bytes.size());
    return r;
}

// Copies raw data into an existing tensor; converts f64 -> f32 by
// round-to-nearest when precisions differ.
template <typename T>
void raw_into_tensor(const RawTensor& r, Tensor<T>& t) {
    Shape s;
    for (uint64_t d : r.dims) s.push_back(static_cast<int>(d));
    if (s != t.shape())
        throw CheckpointError(CheckpointError::Kind::ShapeMismatch,
                              "tensor '" + r.name + "' has shape " + shape_str(s) +
                                  ", expected " + shape_str(t.shape()));
    int64_t n = r.count();
    if (r.dtype == dtype_code<T>()) {
        std::memcpy(t.data().data(), r.bytes.data(), static_cast<size_t>(n) * sizeof(T));
    } else if (r.dtype == 1) {
        const double* src = reinterpret_cast<const double*>(r.bytes.data());
        for (int64_t i = 0; i < n; ++i) t.data()[static_cast<size_t>(i)] = static_cast<T>(src[i]);
    } else {
        const float* src = reinterpret_cast<const float*>(r.bytes.data());
        for (int64_t i = 0; i < n; ++i) t.data()[static_cast<size_t>(i)] = static_cast<T>(src[i]);
    }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
struct Adam {
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.9;
    double eps = 1e-8;
    int64_t t = 0;
    std::vector<std::vector<T>> m, v;

    void init(const ParamMap<T>& params) {
        m.clear();
        v.clear();
        for (const auto& [name, p] : params.items) {
            m.emplace_back(p.data().size(), T(0));
            v.emplace_back(p.data().size(), T(0));
        }
        t = 0;
    }

    void step(ParamMap<T>& params) {
        ++t;
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (size_t pi = 0; pi < params.items.size(); ++pi) {
            auto& p = params.items[pi].second;
            auto& md = m[pi];
            auto& vd = v[pi];
            const bool has_grad = p.has_grad();
            for (size_t i = 0; i < md.size(); ++i) {
                T g = has_grad ? p.grad()[i] : T(0);
                md[i] = static_cast<T>(beta1 * md[i] + (1.0 - beta1) * g);
                vd[i] = static_cast<T>(beta2 * vd[i] + (1.0 - beta2) * g * g);
                double mhat = static_cast<double>(md[i]) / bc1;
                double vhat = static_cast<double>(vd[i]) / bc2;
                p.data()[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps));
            }
        }
    }
};

// ---------------------------------------------------------------------------
// UNet discriminator (pixel-wise logits)
// ---------------------------------------------------------------------------

struct DiscConfig {
    int channels = 32;
};

// Three stride-2 encoder convs mirrored by three upsample+conv stages with
// skip concatenation; one logit per pixel.
template <typename T>
struct UNetDiscriminator {
    Conv2d<T> conv_in, down1, down2, down3, up3, up2, up1, head;

    UNetDiscriminator() = default;

    UNetDiscriminator(const DiscConfig& cfg, Rng& rng) {
        int c = cfg.channels;
        conv_in = Conv2d<T>(3, c, 3, rng);
        down1 = Conv2d<T>(c, 2 * c, 3, rng, 2, 1);
        down2 = Conv2d<T>(2 * c, 4 * c, 3, rng, 2, 1);
        down3 = Conv2d<T>(4 * c, 4 * c, 3, rng, 2, 1);
        up3 = Conv2d<T>(8 * c, 2 * c, 3, rng);
        up2 = Conv2d<T>(4 * c, c, 3, rng);
        up1 = Conv2d<T>(2 * c, c, 3, rng);
        head = Conv2d<T>(c, 1, 3, rng);
    }

    bool defined() const { return conv_in.defined(); }

    Tensor<T> forward(const Tensor<T>& image) const {
        if (image.dim(2) % 8 != 0 || image.dim(3) % 8 != 0)
            throw ShapeError("discriminator: extents must be divisible by 8");
        Tensor<T> e0 = silu(conv_in.forward(image));
        Tensor<T> e1 = silu(down1.forward(e0));
        Tensor<T> e2 = silu(down2.forward(e1));
        Tensor<T> e3 = silu(down3.forward(e2));
        Tensor<T> d2 = silu(up3.forward(concat<T>({upsample_nearest(e3, 2), e2}, 1)));
        Tensor<T> d1 = silu(up2.forward(concat<T>({upsample_nearest(d2, 2), e1}, 1)));
        Tensor<T> d0 = silu(up1.forward(concat<T>({upsample_nearest(d1, 2), e0}, 1)));
        return head.forward(d0);
    }

    void params(ParamMap<T>& m, const std::string& prefix) {
        conv_in.params(m, prefix + ".conv_in");
        down1.params(m, prefix + ".down1");
        down2.params(m, prefix + ".down2");
        down3.params(m, prefix + ".down3");
        up3.params(m, prefix + ".up3");
        up2.params(m, prefix + ".up2");
        up1.params(m, prefix + ".up1");
        head.params(m, prefix + ".head");
    }
};

// ---------------------------------------------------------------------------
// Train configuration
// ---------------------------------------------------------------------------

enum class Precision { f32, f64 };

struct TrainConfig {
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.9;
    double adam_eps = 1e-8;
    int batch_size = 4;
    int steps_stage1 = 0;
    int steps_stage2 = 0;
    int res_stage1 = 64;
    int res_stage2 = 64;
    int probe_resolution = 0;  // 0 -> res_stage2
    int probe_count = 8;
    uint64_t seed = 0;
    LossWeights loss;
    bool adversarial_enabled = false;
    AdvLossKind adv_kind = AdvLossKind::hinge;
    DiscConfig disc;
    int checkpoint_every = 100;
    Precision precision = Precision::f32;
    ModelConfig model;

    int total_steps() const { return steps_stage1 + steps_stage2; }
    int stage_resolution(int step) const { return step < steps_stage1 ? res_stage1 : res_stage2; }
    int probe_res() const { return probe_resolution > 0 ? probe_resolution : res_stage2; }

    void validate() const {
        if (lr <= 0) throw ConfigError("lr must be positive");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw ConfigError("betas must lie in [0, 1)");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (res_stage1 % 8 != 0 || res_stage2 % 8 != 0)
            throw ConfigError("stage resolutions must be divisible by 8");
        if (probe_resolution != 0 && probe_resolution % 8 != 0)
            throw ConfigError("probe_resolution must be divisible by 8");
        if (steps_stage1 < 0 || steps_stage2 < 0) throw ConfigError("step counts must be >= 0");
        if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    }
};

// ---------------------------------------------------------------------------
// Gradient ratio probe (norms at the decoder's final convolution weights)
// ---------------------------------------------------------------------------

struct GradRatio {
    double recon_norm = 0;
    double adv_norm = 0;
    double ratio = std::numeric_limits<double>::infinity();
};

template <typename T>
double grad_l2_norm(const Tensor<T>& t) {
    if (!t.has_grad()) return 0.0;
    double s = 0;
    for (T g : t.grad()) s += static_cast<double>(g) * g;
    return std::sqrt(s);
}

template <typename T>
Tensor<T>& decoder_final_conv_weight(LiteVAE<T>& model) {
    return model.decoder.cfg.use_smc ? model.decoder.tail_smc.weight
                                     : model.decoder.tail_conv.weight;
}

template <typename T>
GradRatio gradient_ratio_probe(LiteVAE<T>& model, ParamMap<T>& params,
                               UNetDiscriminator<T>* disc, AdvLossKind kind,
                               const Tensor<T>& batch, uint64_t seed, uint64_t step) {
    GradRatio r;
    Tensor<T>& w = decoder_final_conv_weight(model);
    {
        Rng eps = Rng::fork(seed, 0xE9501, step);
        auto out = model.forward(batch, true, eps);
        params.zero_grad();
        recon_loss(batch, out.image_recon).backward();
        r.recon_norm = grad_l2_norm(w);
    }
    if (disc && disc->defined()) {
        Rng eps = Rng::fork(seed, 0xE9501, step);
        auto out = model.forward(batch, true, eps);
        params.zero_grad();
        adv_g_loss(disc->forward(out.image_recon), kind).backward();
        r.adv_norm = grad_l2_norm(w);
    }
    params.zero_grad();
    r.ratio = r.adv_norm > 0 ? r.recon_norm / r.adv_norm
                             : std::numeric_limits<double>::infinity();
    return r;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

struct TrainResult {
    std::vector<std::string> log_lines;  // "step<TAB>key<TAB>value"
    std::string checkpoint_path;
    double first_probe_psnr = 0;
    double final_probe_psnr = 0;
    uint64_t steps_run = 0;
};

std::string format_metric(double v);

template <typename T>
class Trainer {
public:
    Trainer(const TrainConfig& cfg, const ImageDataset& data,
            std::string config_snapshot = std::string())
        : cfg_(cfg), data_(data), config_snapshot_(std::move(config_snapshot)) {
        cfg_.validate();
        int need = std::max(
            {cfg_.steps_stage1 > 0 ? cfg_.res_stage1 : 0, cfg_.res_stage2, cfg_.probe_res()});
        if (data_.min_extent() < need)
            throw DataError("dataset images are smaller than the training resolution " +
                            std::to_string(need));
        Rng init(cfg_.seed);
        model_ = LiteVAE<T>(cfg_.model, init);
        model_params_ = ParamMap<T>();
        model_.params(model_params_);
        opt_.lr = cfg_.lr;
        opt_.beta1 = cfg_.beta1;
        opt_.beta2 = cfg_.beta2;
        opt_.eps = cfg_.adam_eps;
        opt_.init(model_params_);
        if (cfg_.adversarial_enabled) {
            Rng disc_init = Rng::fork(cfg_.seed, 0xD15C, 0);
            disc_ = UNetDiscriminator<T>(cfg_.disc, disc_init);
            disc_params_ = ParamMap<T>();
            disc_.params(disc_params_, "disc");
            opt_disc_.lr = cfg_.lr;
            opt_disc_.beta1 = cfg_.beta1;
            opt_disc_.beta2 = cfg_.beta2;
            opt_disc_.eps = cfg_.adam_eps;
            opt_disc_.init(disc_params_);
        }
    }

    LiteVAE<T>& model() { return model_; }
    ParamMap<T>& params() { return model_params_; }
    UNetDiscriminator<T>& discriminator() { return disc_; }
    const TrainConfig& config() const { return cfg_; }

    // Runs from the current step to the configured total. out_dir may be empty
    // (no files written; log kept in the result).
    TrainResult run(const std::string& out_dir) {
        TrainResult res;
        int total = cfg_.total_steps();
        if (total == 0) {
            if (!out_dir.empty()) res.checkpoint_path = save(out_dir, 0);
            return res;
        }
        if (step_ == 0) {
            double p0 = probe_psnr();
            res.first_probe_psnr = p0;
            log(res, 0, "probe.psnr", p0);
        }
        for (; step_ < total; ++step_) {
            step_once(res);
            int done = step_ + 1;
            if (done % cfg_.checkpoint_every == 0 || done == total) {
                double p = probe_psnr();
                res.final_probe_psnr = p;
                log(res, done, "probe.psnr", p);
                log(res, done, "latent.std", probe_latent_std());
                if (!out_dir.empty()) res.checkpoint_path = save(out_dir, done);
            }
        }
        res.steps_run = static_cast<uint64_t>(step_);
        return res;
    }

    // Restores parameters, optimizer state, and the step counter.
    void load(const std::string& path) {
        RawCheckpoint ckpt = load_checkpoint_raw(path);
        apply_params(ckpt, model_params_, opt_);
        if (cfg_.adversarial_enabled && ckpt.find("disc.conv_in.weight"))
            apply_params(ckpt, disc_params_, opt_disc_);
        step_ = static_cast<int>(ckpt.step);
        opt_.t = static_cast<int64_t>(ckpt.step);
        if (cfg_.adversarial_enabled) opt_disc_.t = static_cast<int64_t>(ckpt.step);
    }

    std::string save(const std::string& out_dir, int step) const {
        RawCheckpoint ckpt;
        ckpt.step = static_cast<uint64_t>(step);
        ckpt.config = config_snapshot_;
        collect_params(ckpt, model_params_, opt_);
        if (cfg_.adversarial_enabled) collect_params(ckpt, disc_params_, opt_disc_);
        char name[64];
        std::snprintf(name, sizeof(name), "ckpt_%06d.lvae", step);
        std::string path = out_dir + "/" + name;
        save_checkpoint_raw(path, ckpt);
        save_checkpoint_raw(out_dir + "/last.lvae", ckpt);
        return path;
    }

    double probe_psnr() {
        NoGradGuard ng;
        Tensor<T> batch = probe_batch();
        Rng unused(0);
        auto out = model_.forward(batch, false, unused);
        return psnr(batch, out.image_recon, 2.0);  // [-1,1] range
    }

    double probe_latent_std() {
        NoGradGuard ng;
        Tensor<T> batch = probe_batch();
        Rng unused(0);
        Tensor<T> raw = model_.encode(batch);
        Tensor<T> z = model_.is_nonlearned() ? raw : latent_distribution(raw).mode();
        double m = 0;
        for (T v : z.data()) m += static_cast<double>(v);
        m /= static_cast<double>(z.numel());
        double var = 0;
        for (T v : z.data()) var += (static_cast<double>(v) - m) * (static_cast<double>(v) - m);
        return std::sqrt(var / static_cast<double>(z.numel()));
    }

    Tensor<T> probe_batch() const {
        int n = std::min<int>(cfg_.probe_count, static_cast<int>(data_.size()));
        std::vector<int> idx(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        return data_.batch<T>(idx, cfg_.probe_res());
    }

private:
    void step_once(TrainResult& res) {
        int res_px = cfg_.stage_resolution(step_);
        Rng batch_rng = Rng::fork(cfg_.seed, 0xBA7C4, static_cast<uint64_t>(step_));
        std::vector<int> idx(static_cast<size_t>(cfg_.batch_size));
        for (auto& i : idx) i = batch_rng.uniform_int(static_cast<int>(data_.size()));
        Tensor<T> batch = data_.batch<T>(idx, res_px);

        Rng eps_rng = Rng::fork(cfg_.seed, 0xE95, static_cast<uint64_t>(step_));
        auto out = model_.forward(batch, true, eps_rng);

        Tensor<T> l_recon = recon_loss(batch, out.image_recon);
        Tensor<T> l_wav = charbonnier_hf_from_bands(normalized_dwt(batch, 1).bands,
                                                    out.wavelet_recon,
                                                    static_cast<T>(cfg_.loss.charbonnier_eps));
        Tensor<T> l_gauss = gaussian_hf_loss(batch, out.image_recon, cfg_.loss.blur_kernel,
                                             static_cast<T>(cfg_.loss.blur_sigma));
        Tensor<T> l_kl = out.kl;

        double lambda_adv = cfg_.loss.lambda_adv;
        Tensor<T> l_adv_g;
        if (cfg_.adversarial_enabled) {
            if (cfg_.loss.adaptive_adv) {
                GradRatio gr = gradient_ratio_probe(model_, model_params_, &disc_, cfg_.adv_kind,
                                                    batch, cfg_.seed, static_cast<uint64_t>(step_));
                lambda_adv = adaptive_adv_weight(gr.recon_norm, gr.adv_norm, cfg_.loss.delta);
            }
            l_adv_g = adv_g_loss(disc_.forward(out.image_recon), cfg_.adv_kind);
        }

        Tensor<T> total = l_recon;
        total = add(total, mul_scalar(l_wav, static_cast<T>(cfg_.loss.lambda_wavelet)));
        total = add(total, mul_scalar(l_gauss, static_cast<T>(cfg_.loss.lambda_gaussian)));
        total = add(total, mul_scalar(l_kl, static_cast<T>(cfg_.loss.lambda_reg)));
        if (cfg_.adversarial_enabled)
            total = add(total, mul_scalar(l_adv_g, static_cast<T>(lambda_adv)));

        int done = step_ + 1;
        check_finite(done, "recon", l_recon.item());
        check_finite(done, "wavelet", l_wav.item());
        check_finite(done, "gaussian", l_gauss.item());
        check_finite(done, "kl", l_kl.item());
        if (cfg_.adversarial_enabled) check_finite(done, "adv_g", l_adv_g.item());
        check_finite(done, "total", total.item());

        log(res, done, "loss.recon", l_recon.item());
        log(res, done, "loss.wavelet", l_wav.item());
        log(res, done, "loss.gaussian", l_gauss.item());
        log(res, done, "loss.kl", l_kl.item());
        if (cfg_.adversarial_enabled) {
            log(res, done, "loss.adv_g", l_adv_g.item());
            log(res, done, "lambda.adv", lambda_adv);
        }
        log(res, done, "loss.total", total.item());

        model_params_.zero_grad();
        if (cfg_.adversarial_enabled) disc_params_.zero_grad();
        total.backward();
        opt_.step(model_params_);

        if (cfg_.adversarial_enabled) {
            Tensor<T> fake = out.image_recon.detach();
            Tensor<T> d_loss =
                adv_d_loss(disc_.forward(batch), disc_.forward(fake), cfg_.adv_kind);
            check_finite(done, "adv_d", d_loss.item());
            log(res, done, "loss.adv_d", d_loss.item());
            disc_params_.zero_grad();
            model_params_.zero_grad();
            d_loss.backward();
            opt_disc_.step(disc_params_);
        }
    }

    void check_finite(int step, const char* term, double v) const {
        if (!std::isfinite(v))
            throw NumericalError("step " + std::to_string(step) + ": loss term '" + term +
                                 "' is not finite (" + std::to_string(v) + ")");
    }

    void log(TrainResult& res, int step, const std::string& key, double value) const {
        res.log_lines.push_back(std::to_string(step) + "\t" + key + "\t" + format_metric(value));
    }

    void collect_params(RawCheckpoint& ckpt, const ParamMap<T>& params, const Adam<T>& opt) const {
        for (size_t i = 0; i < params.items.size(); ++i) {
            const auto& [name, t] = params.items[i];
            ckpt.tensors.push_back(to_raw_tensor(name, t));
            Tensor<T> mt = Tensor<T>::from(opt.m[i], t.shape());
            Tensor<T> vt = Tensor<T>::from(opt.v[i], t.shape());
            ckpt.tensors.push_back(to_raw_tensor("opt.m." + name, mt));
            ckpt.tensors.push_back(to_raw_tensor("opt.v." + name, vt));
        }
    }

    void apply_params(const RawCheckpoint& ckpt, ParamMap<T>& params, Adam<T>& opt) {
        for (size_t i = 0; i < params.items.size(); ++i) {
            auto& [name, t] = params.items[i];
            const RawTensor* rt = ckpt.find(name);
            if (!rt)
                throw CheckpointError(CheckpointError::Kind::ShapeMismatch,
                                      "checkpoint is missing tensor '" + name + "'");
            raw_into_tensor(*rt, t);
            const RawTensor* rm = ckpt.find("opt.m." + name);
            const RawTensor* rv = ckpt.find("opt.v." + name);
            if (rm && rv) {
                Tensor<T> mt = Tensor<T>::from(opt.m[i], t.shape());
                Tensor<T> vt = Tensor<T>::from(opt.v[i], t.shape());
                raw_into_tensor(*rm, mt);
                raw_into_tensor(*rv, vt);
                opt.m[i] = mt.data();
                opt.v[i] = vt.data();
            }
        }
    }

    TrainConfig cfg_;
    const ImageDataset& data_;
    std::string config_snapshot_;
    LiteVAE<T> model_;
    ParamMap<T> model_params_;
    Adam<T> opt_;
    UNetDiscriminator<T> disc_;
    ParamMap<T> disc_params_;
    Adam<T> opt_disc_;
    int step_ = 0;
};

}  // namespace litevae
