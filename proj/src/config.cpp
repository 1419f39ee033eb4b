#include "litevae/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace litevae {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// One schema entry: parse from string into the config, dump back, describe.
struct Key {
    std::string name;
    std::string desc;
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as a number");
    }
}

int64_t parse_int(const std::string& key, const std::string& v) {
    int64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as an integer");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as a boolean");
}

const std::vector<Key>& schema() {
    static const std::vector<Key> keys = [] {
        std::vector<Key> k;
        auto add = [&](std::string name, std::string desc, auto set, auto get) {
            k.push_back({std::move(name), std::move(desc), set, get});
        };

        add("seed", "base RNG seed (default 0)",
            [](TrainConfig& c, const std::string& v) { c.seed = static_cast<uint64_t>(parse_int("seed", v)); },
            [](const TrainConfig& c) { return std::to_string(c.seed); });
        add("precision", "f32 or f64 (default f32)",
            [](TrainConfig& c, const std::string& v) {
                if (v == "f32") c.precision = Precision::f32;
                else if (v == "f64") c.precision = Precision::f64;
                else throw ConfigError("config key 'precision': expected f32 or f64");
            },
            [](const TrainConfig& c) { return c.precision == Precision::f32 ? "f32" : "f64"; });
        add("lr", "Adam learning rate (default 1e-4)",
            [](TrainConfig& c, const std::string& v) { c.lr = parse_double("lr", v); },
            [](const TrainConfig& c) { return fmt_double(c.lr); });
        add("beta1", "Adam beta1 (default 0.5)",
            [](TrainConfig& c, const std::string& v) { c.beta1 = parse_double("beta1", v); },
            [](const TrainConfig& c) { return fmt_double(c.beta1); });
        add("beta2", "Adam beta2 (default 0.9)",
            [](TrainConfig& c, const std::string& v) { c.beta2 = parse_double("beta2", v); },
            [](const TrainConfig& c) { return fmt_double(c.beta2); });
        add("adam_eps", "Adam epsilon (default 1e-8)",
            [](TrainConfig& c, const std::string& v) { c.adam_eps = parse_double("adam_eps", v); },
            [](const TrainConfig& c) { return fmt_double(c.adam_eps); });
        add("batch_size", "images per step (default 4)",
            [](TrainConfig& c, const std::string& v) { c.batch_size = static_cast<int>(parse_int("batch_size", v)); },
            [](const TrainConfig& c) { return std::to_string(c.batch_size); });
        add("steps_stage1", "steps at res_stage1 (default 0)",
            [](TrainConfig& c, const std::string& v) { c.steps_stage1 = static_cast<int>(parse_int("steps_stage1", v)); },
            [](const TrainConfig& c) { return std::to_string(c.steps_stage1); });
        add("steps_stage2", "steps at res_stage2 (default 0)",
            [](TrainConfig& c, const std::string& v) { c.steps_stage2 = static_cast<int>(parse_int("steps_stage2", v)); },
            [](const TrainConfig& c) { return std::to_string(c.steps_stage2); });
        add("res_stage1", "stage-1 resolution, divisible by 8 (default 64)",
            [](TrainConfig& c, const std::string& v) { c.res_stage1 = static_cast<int>(parse_int("res_stage1", v)); },
            [](const TrainConfig& c) { return std::to_string(c.res_stage1); });
        add("res_stage2", "stage-2 resolution, divisible by 8 (default 64)",
            [](TrainConfig& c, const std::string& v) { c.res_stage2 = static_cast<int>(parse_int("res_stage2", v)); },
            [](const TrainConfig& c) { return std::to_string(c.res_stage2); });
        add("probe_resolution", "probe eval resolution; 0 means res_stage2 (default 0)",
            [](TrainConfig& c, const std::string& v) { c.probe_resolution = static_cast<int>(parse_int("probe_resolution", v)); },
            [](const TrainConfig& c) { return std::to_string(c.probe_resolution); });
        add("probe_count", "images in the probe batch (default 8)",
            [](TrainConfig& c, const std::string& v) { c.probe_count = static_cast<int>(parse_int("probe_count", v)); },
            [](const TrainConfig& c) { return std::to_string(c.probe_count); });
        add("checkpoint_every", "probe/save interval in steps (default 100)",
            [](TrainConfig& c, const std::string& v) { c.checkpoint_every = static_cast<int>(parse_int("checkpoint_every", v)); },
            [](const TrainConfig& c) { return std::to_string(c.checkpoint_every); });
        add("adversarial", "enable the adversarial branch (default false)",
            [](TrainConfig& c, const std::string& v) { c.adversarial_enabled = parse_bool("adversarial", v); },
            [](const TrainConfig& c) { return c.adversarial_enabled ? "true" : "false"; });
        add("adv_loss", "hinge or logistic (default hinge)",
            [](TrainConfig& c, const std::string& v) { c.adv_kind = adv_loss_kind_from_string(v); },
            [](const TrainConfig& c) { return c.adv_kind == AdvLossKind::hinge ? "hinge" : "logistic"; });
        add("disc_channels", "discriminator base width (default 32)",
            [](TrainConfig& c, const std::string& v) { c.disc.channels = static_cast<int>(parse_int("disc_channels", v)); },
            [](const TrainConfig& c) { return std::to_string(c.disc.channels); });
        add("lambda_reg", "KL weight (default 1e-6)",
            [](TrainConfig& c, const std::string& v) { c.loss.lambda_reg = parse_double("lambda_reg", v); },
            [](const TrainConfig& c) { return fmt_double(c.loss.lambda_reg); });
        add("lambda_adv", "constant adversarial weight (default 0.1)",
            [](TrainConfig& c, const std::string& v) { c.loss.lambda_adv = parse_double("lambda_adv", v); },
            [](const TrainConfig& c) { return fmt_double(c.loss.lambda_adv); });
        add("lambda_wavelet", "wavelet HF loss weight (default 0.1)",
            [](TrainConfig& c, const std::string& v) { c.loss.lambda_wavelet = parse_double("lambda_wavelet", v); },
            [](const TrainConfig& c) { return fmt_double(c.loss.lambda_wavelet); });
        add("lambda_gaussian", "Gaussian HF loss weight (default 0.1)",
            [](TrainConfig& c, const std::string& v) { c.loss.lambda_gaussian = parse_double("lambda_gaussian", v); },
            [](const TrainConfig& c) { return fmt_double(c.loss.lambda_gaussian); });
        add("adaptive_adv", "use the adaptive adversarial weight (default false)",
            [](TrainConfig& c, const std::string& v) { c.loss.adaptive_adv = parse_bool("adaptive_adv", v); },
            [](const TrainConfig& c) { return c.loss.adaptive_adv ? "true" : "false"; });
        add("delta", "adaptive-weight denominator offset (default 1e-4)",
            [](TrainConfig& c, const std::string& v) { c.loss.delta = parse_double("delta", v); },
            [](const TrainConfig& c) { return fmt_double(c.loss.delta); });
        add("charbonnier_eps", "Charbonnier epsilon (default 1e-3)",
            [](TrainConfig& c, const std::string& v) { c.loss.charbonnier_eps = parse_double("charbonnier_eps", v); },
            [](const TrainConfig& c) { return fmt_double(c.loss.charbonnier_eps); });
        add("blur_kernel", "Gaussian HF loss kernel size, odd (default 5)",
            [](TrainConfig& c, const std::string& v) { c.loss.blur_kernel = static_cast<int>(parse_int("blur_kernel", v)); },
            [](const TrainConfig& c) { return std::to_string(c.loss.blur_kernel); });
        add("blur_sigma", "Gaussian HF loss sigma (default 1.0)",
            [](TrainConfig& c, const std::string& v) { c.loss.blur_sigma = parse_double("blur_sigma", v); },
            [](const TrainConfig& c) { return fmt_double(c.loss.blur_sigma); });

        add("model.preset", "size preset: tiny/S/B/M/L (default B)",
            [](TrainConfig& c, const std::string& v) { c.model.preset = size_preset_from_string(v); },
            [](const TrainConfig& c) { return to_string(c.model.preset); });
        add("model.latent_dim", "latent channels n_z (default 12)",
            [](TrainConfig& c, const std::string& v) { c.model.latent_dim = static_cast<int>(parse_int("model.latent_dim", v)); },
            [](const TrainConfig& c) { return std::to_string(c.model.latent_dim); });
        add("model.encoder", "litevae/reference/dwt/dwt2 (default litevae)",
            [](TrainConfig& c, const std::string& v) {
                if (v == "litevae") c.model.encoder = EncoderKind::litevae;
                else if (v == "reference") c.model.encoder = EncoderKind::reference;
                else if (v == "dwt") c.model.encoder = EncoderKind::nonlearned_dwt;
                else if (v == "dwt2") c.model.encoder = EncoderKind::nonlearned_dwt2;
                else throw ConfigError("config key 'model.encoder': unknown encoder '" + v + "'");
            },
            [](const TrainConfig& c) {
                switch (c.model.encoder) {
                    case EncoderKind::litevae: return std::string("litevae");
                    case EncoderKind::reference: return std::string("reference");
                    case EncoderKind::nonlearned_dwt: return std::string("dwt");
                    case EncoderKind::nonlearned_dwt2: return std::string("dwt2");
                }
                return std::string("litevae");
            });
        add("model.output_type", "decoder target: image or wavelet (default image)",
            [](TrainConfig& c, const std::string& v) {
                if (v == "image") c.model.output_type = OutputType::image;
                else if (v == "wavelet") c.model.output_type = OutputType::wavelet;
                else throw ConfigError("config key 'model.output_type': expected image or wavelet");
            },
            [](const TrainConfig& c) {
                return c.model.output_type == OutputType::image ? "image" : "wavelet";
            });
        add("model.decoder_preset", "tiny/desk/paper (default desk)",
            [](TrainConfig& c, const std::string& v) {
                if (v == "tiny") c.model.decoder_preset = DecoderPreset::tiny;
                else if (v == "desk") c.model.decoder_preset = DecoderPreset::desk;
                else if (v == "paper") c.model.decoder_preset = DecoderPreset::paper;
                else throw ConfigError("config key 'model.decoder_preset': expected tiny/desk/paper");
            },
            [](const TrainConfig& c) {
                switch (c.model.decoder_preset) {
                    case DecoderPreset::tiny: return std::string("tiny");
                    case DecoderPreset::desk: return std::string("desk");
                    case DecoderPreset::paper: return std::string("paper");
                }
                return std::string("desk");
            });
        add("model.decoder_smc", "replace decoder group norm with SMC (default false)",
            [](TrainConfig& c, const std::string& v) { c.model.decoder_smc = parse_bool("model.decoder_smc", v); },
            [](const TrainConfig& c) { return c.model.decoder_smc ? "true" : "false"; });
        add("model.decoder_attn", "mid-block attention in the decoder (default false)",
            [](TrainConfig& c, const std::string& v) { c.model.decoder_mid_attn = parse_bool("model.decoder_attn", v); },
            [](const TrainConfig& c) { return c.model.decoder_mid_attn ? "true" : "false"; });
        add("model.use_1x1_conv", "1x1 convs around the latent (default false)",
            [](TrainConfig& c, const std::string& v) { c.model.use_1x1_conv = parse_bool("model.use_1x1_conv", v); },
            [](const TrainConfig& c) { return c.model.use_1x1_conv ? "true" : "false"; });
        add("model.share_extractor_weights", "one extractor for all levels (default false)",
            [](TrainConfig& c, const std::string& v) {
                c.model.share_extractor_weights = parse_bool("model.share_extractor_weights", v);
            },
            [](const TrainConfig& c) { return c.model.share_extractor_weights ? "true" : "false"; });
        return k;
    }();
    return keys;
}

}  // namespace

ConfigMap ConfigMap::parse_string(const std::string& text, const std::string& origin) {
    ConfigMap cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        cfg.entries.emplace_back(key, value);
    }
    return cfg;
}

ConfigMap ConfigMap::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
}

TrainConfig parse_train_config(const ConfigMap& cfg) {
    TrainConfig out;
    for (const auto& [key, value] : cfg.entries) {
        bool known = false;
        for (const auto& k : schema()) {
            if (k.name == key) {
                k.set(out, value);
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError("unknown config key '" + key + "'");
    }
    out.validate();
    return out;
}

std::string dump_train_config(const TrainConfig& cfg) {
    std::string out;
    for (const auto& k : schema()) out += k.name + " = " + k.get(cfg) + "\n";
    return out;
}

std::string config_help() {
    std::string out = "Config keys (flat `key = value` lines, '#' comments):\n";
    for (const auto& k : schema()) {
        out += "  ";
        out += k.name;
        size_t pad = k.name.size() < 30 ? 30 - k.name.size() : 1;
        out.append(pad, ' ');
        out += k.desc + "\n";
    }
    return out;
}

}  // namespace litevae
