#pragma once

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "sar/eval.hpp"

namespace sar {

/// Union of all module configs, populated from a flat `section.key = value`
/// file. Unknown keys are rejected with their line number; `resolved()`
/// dumps every effective key so runs can log their full configuration.
struct RunConfig {
    SynthSpec synth;
    int synth_n_cases = 12;
    Arch arch;
    SamplingPlan plan;
    TransformConfig transform;
    PretrainConfig pretrain;
    FinetuneConfig finetune;
    int eval_n_trials = 5;

    RunConfig() {
        pretrain.arch = arch;
        finetune.arch = arch;
        finetune.arch.n_classes = 2;
    }
};

namespace config_detail {

template <class T>
T parse_value(const std::string& s, const std::string& key, int line_no);

template <>
inline double parse_value<double>(const std::string& s, const std::string& key,
                                  int line_no) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config line " + std::to_string(line_no) + ": key '" + key +
                          "' expects a number, got '" + s + "'");
    }
}

template <>
inline int parse_value<int>(const std::string& s, const std::string& key, int line_no) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(s, &pos, 10);
        if (pos != s.size()) throw std::invalid_argument(s);
        return static_cast<int>(v);
    } catch (const std::exception&) {
        throw ConfigError("config line " + std::to_string(line_no) + ": key '" + key +
                          "' expects an integer, got '" + s + "'");
    }
}

template <>
inline std::uint64_t parse_value<std::uint64_t>(const std::string& s,
                                                const std::string& key, int line_no) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(s, &pos, 10);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config line " + std::to_string(line_no) + ": key '" + key +
                          "' expects an unsigned integer, got '" + s + "'");
    }
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Binder {
    std::map<std::string, std::function<void(const std::string&, int)>> setters;
    std::map<std::string, std::function<std::string()>> getters;

    void bind(const std::string& key, double* p) {
        setters[key] = [p, key](const std::string& v, int ln) {
            *p = parse_value<double>(v, key, ln);
        };
        getters[key] = [p] { return csv_detail::num(*p); };
    }
    void bind(const std::string& key, int* p) {
        setters[key] = [p, key](const std::string& v, int ln) {
            *p = parse_value<int>(v, key, ln);
        };
        getters[key] = [p] { return std::to_string(*p); };
    }
    void bind(const std::string& key, std::uint64_t* p) {
        setters[key] = [p, key](const std::string& v, int ln) {
            *p = parse_value<std::uint64_t>(v, key, ln);
        };
        getters[key] = [p] { return std::to_string(*p); };
    }
};

inline Binder make_binder(RunConfig& c) {
    Binder b;
    b.bind("synth.n_ct", &c.synth.n_ct);
    b.bind("synth.n_mri", &c.synth.n_mri);
    b.bind("synth.dims_x", &c.synth.dims.x);
    b.bind("synth.dims_y", &c.synth.dims.y);
    b.bind("synth.dims_z", &c.synth.dims.z);
    b.bind("synth.tumor_frac_lo", &c.synth.tumor_frac_lo);
    b.bind("synth.tumor_frac_hi", &c.synth.tumor_frac_hi);
    b.bind("synth.blob_contrast", &c.synth.blob_contrast);
    b.bind("synth.blob_noise_std", &c.synth.blob_noise_std);
    b.bind("synth.smooth_radius", &c.synth.smooth_radius);
    b.bind("synth.n_classes", &c.synth.n_classes);
    b.bind("synth.n_cases", &c.synth_n_cases);
    b.bind("synth.seed", &c.synth.seed);

    b.bind("arch.depth", &c.arch.depth);
    b.bind("arch.base_channels", &c.arch.base_channels);
    b.bind("arch.sa_hidden", &c.arch.sa_hidden);
    b.bind("arch.mial_channels", &c.arch.mial_channels);
    b.bind("arch.mial_hidden", &c.arch.mial_hidden);

    b.bind("sampler.n_small", &c.plan.n_small);
    b.bind("sampler.n_medium", &c.plan.n_medium);
    b.bind("sampler.n_large", &c.plan.n_large);

    b.bind("transform.p_nonlinear", &c.transform.p_nonlinear);
    b.bind("transform.p_shuffle", &c.transform.p_shuffle);
    b.bind("transform.p_paint", &c.transform.p_paint);
    b.bind("transform.p_inner_given_paint", &c.transform.p_inner_given_paint);

    b.bind("pretrain.lr_unet", &c.pretrain.lr_unet);
    b.bind("pretrain.lr_sa", &c.pretrain.lr_sa);
    b.bind("pretrain.lr_mial", &c.pretrain.lr_mial);
    b.bind("pretrain.momentum", &c.pretrain.momentum);
    b.bind("pretrain.batch_size", &c.pretrain.batch_size);
    b.bind("pretrain.max_epochs", &c.pretrain.max_epochs);
    b.bind("pretrain.plateau_patience", &c.pretrain.plateau_patience);
    b.bind("pretrain.plateau_factor", &c.pretrain.plateau_factor);
    b.bind("pretrain.plateau_min_delta", &c.pretrain.plateau_min_delta);
    b.bind("pretrain.alpha", &c.pretrain.alpha);
    b.bind("pretrain.beta", &c.pretrain.beta);
    b.bind("pretrain.reversal_coeff", &c.pretrain.reversal_coeff);
    b.bind("pretrain.val_split", &c.pretrain.val_split);
    b.bind("pretrain.seed", &c.pretrain.seed);

    b.bind("finetune.lr", &c.finetune.lr);
    b.bind("finetune.batch_size", &c.finetune.batch_size);
    b.bind("finetune.max_epochs", &c.finetune.max_epochs);
    b.bind("finetune.patches_per_case", &c.finetune.patches_per_case);
    b.bind("finetune.plateau_patience", &c.finetune.plateau_patience);
    b.bind("finetune.plateau_factor", &c.finetune.plateau_factor);
    b.bind("finetune.plateau_min_delta", &c.finetune.plateau_min_delta);
    b.bind("finetune.data_fraction", &c.finetune.data_fraction);
    b.bind("finetune.val_split", &c.finetune.val_split);
    b.bind("finetune.n_classes", &c.finetune.arch.n_classes);
    b.bind("finetune.seed", &c.finetune.seed);

    b.bind("eval.n_trials", &c.eval_n_trials);
    return b;
}

} // namespace config_detail

/// Applies `section.key = value` lines from a stream. Blank lines and lines
/// starting with '#' are skipped. Unknown keys raise ConfigError with the
/// line number. After parsing, derived sub-configs (arch, plan, transform) are
/// copied into the pretrain/finetune configs, and SAR_SEED (if set in the
/// environment) overrides every seed.
inline RunConfig parse_config(std::istream& in) {
    RunConfig cfg;
    auto binder = config_detail::make_binder(cfg);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = config_detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected 'key = value', got '" + t + "'");
        const std::string key = config_detail::trim(t.substr(0, eq));
        const std::string value = config_detail::trim(t.substr(eq + 1));
        auto it = binder.setters.find(key);
        if (it == binder.setters.end())
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": unknown key '" + key + "'");
        it->second(value, line_no);
    }

    cfg.pretrain.arch = cfg.arch;
    cfg.finetune.arch.depth = cfg.arch.depth;
    cfg.finetune.arch.base_channels = cfg.arch.base_channels;
    cfg.finetune.arch.sa_hidden = cfg.arch.sa_hidden;
    cfg.finetune.arch.mial_channels = cfg.arch.mial_channels;
    cfg.finetune.arch.mial_hidden = cfg.arch.mial_hidden;
    cfg.pretrain.plan = cfg.plan;
    cfg.pretrain.transform = cfg.transform;

    if (const char* env = std::getenv("SAR_SEED")) {
        const std::uint64_t s =
            config_detail::parse_value<std::uint64_t>(env, "SAR_SEED", 0);
        cfg.synth.seed = s;
        cfg.pretrain.seed = s;
        cfg.finetune.seed = s;
    }
    return cfg;
}

inline RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse_config(in);
}

/// Every effective key=value, one per line, in sorted key order.
inline std::string resolved_config(RunConfig& cfg) {
    auto binder = config_detail::make_binder(cfg);
    std::string out;
    for (const auto& [key, get] : binder.getters) out += key + " = " + get() + "\n";
    return out;
}

} // namespace sar
