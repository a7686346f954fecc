#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>

#include "sefusion/augment.hpp"
#include "sefusion/dataset.hpp"
#include "sefusion/report.hpp"
#include "sefusion/train.hpp"

namespace sefusion {

/// Everything a CLI run needs. Defaults follow the reference training setup.
struct RunConfig {
    std::filesystem::path dataset;
    std::filesystem::path out = "runs/latest";
    std::filesystem::path augment_out;  // cmd_augment target; defaults to <out>/augmented
    std::optional<std::filesystem::path> replay;
    std::string positive_class = "Monkeypox";
    GroupMode group_mode = GroupMode::by_source;
    FusionModelConfig model = default_model_config();
    AugmentationSpec augment;
    GridSpec grid;
    SplitRatios split;
    std::size_t k = 4;
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    double learning_rate = 1e-4;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <class Int>
Int parse_int(const std::string& key, const std::string& v) {
    Int out{};
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size() && std::isfinite(d)) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError(key + ": expected a number, got '" + v + "'");
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, sep))
        if (!trim(item).empty()) out.push_back(trim(item));
    return out;
}

/// "filters:kernel:stride:bn|nobn[:res]" stages separated by ';'.
inline std::vector<StageSpec> parse_stages(const std::string& key, const std::string& v) {
    std::vector<StageSpec> stages;
    for (const auto& s : split_list(v, ';')) {
        const auto f = split_list(s, ':');
        if (f.size() < 4 || f.size() > 5 || (f[3] != "bn" && f[3] != "nobn") || (f.size() == 5 && f[4] != "res"))
            throw ConfigError(key + ": bad stage '" + s + "' (expected filters:kernel:stride:bn|nobn[:res])");
        stages.push_back({parse_int<std::size_t>(key, f[0]), parse_int<std::size_t>(key, f[1]),
                          parse_int<std::size_t>(key, f[2]), f[3] == "bn", f.size() == 5});
    }
    if (stages.empty()) throw ConfigError(key + ": no stages");
    return stages;
}

inline std::string format_stages(const std::vector<StageSpec>& stages) {
    std::string out;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const auto& s = stages[i];
        out += (i ? ";" : "") + std::to_string(s.filters) + ":" + std::to_string(s.kernel) + ":" +
               std::to_string(s.stride) + ":" + (s.batchnorm ? "bn" : "nobn") + (s.residual ? ":res" : "");
    }
    return out;
}

template <class T, class Parse>
std::vector<T> parse_values(const std::string& key, const std::string& v, Parse parse) {
    std::vector<T> out;
    for (const auto& item : split_list(v, ',')) out.push_back(parse(key, item));
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
}

}  // namespace detail

/// Applies one key=value setting; unknown keys are an error.
inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& raw) {
    using namespace detail;
    const std::string v = trim(raw);
    auto size = [&] { return parse_int<std::size_t>(key, v); };
    auto& m = cfg.model;
    auto& r = cfg.augment.ranges;
    if (key == "dataset") cfg.dataset = v;
    else if (key == "out") cfg.out = v;
    else if (key == "augment.out") cfg.augment_out = v;
    else if (key == "replay") cfg.replay = std::filesystem::path(v);
    else if (key == "positive_class") cfg.positive_class = v;
    else if (key == "group_by_source") cfg.group_mode = parse_bool(key, v) ? GroupMode::by_source : GroupMode::none;
    else if (key == "input_size") {
        const auto x = v.find('x');
        if (x == std::string::npos) throw ConfigError(key + ": expected HxW, got '" + v + "'");
        m.input_height = parse_int<std::size_t>(key, v.substr(0, x));
        m.input_width = parse_int<std::size_t>(key, v.substr(x + 1));
        if (m.input_height == 0 || m.input_width == 0) throw ConfigError(key + ": extents must be positive");
    } else if (key == "epochs") cfg.epochs = size();
    else if (key == "batch_size") {
        cfg.batch_size = size();
        if (cfg.batch_size == 0) throw ConfigError(key + " must be positive");
    } else if (key == "learning_rate" || key == "lr") {
        cfg.learning_rate = parse_real(key, v);
        if (!(cfg.learning_rate > 0)) throw ConfigError(key + " must be positive");
    } else if (key == "seed") cfg.seed = parse_int<std::uint64_t>(key, v);
    else if (key == "k") cfg.k = size();
    else if (key == "split") {
        const auto p = parse_values<double>(key, v, parse_real);
        if (p.size() != 3) throw ConfigError(key + ": expected train,val,test ratios");
        cfg.split = {p[0], p[1], p[2]};
    } else if (key == "se_ratio") m.se_ratio = size();
    else if (key == "dense1_units") m.dense1_units = size();
    else if (key == "dense1_dropout") m.dense1_dropout = parse_real(key, v);
    else if (key == "dense2_units") m.dense2_units = size();
    else if (key == "dense2_dropout") m.dense2_dropout = parse_real(key, v);
    else if (key == "branch_a.stages" || key == "branch_b.stages") {
        auto& b = key[7] == 'a' ? m.branch_a : m.branch_b;
        b.stages = parse_stages(key, v);
        b.output_channels = b.stages.back().filters;
        b.trainable_tail_layers = std::min(b.trainable_tail_layers, b.stages.size());
    } else if (key == "branch_a.style" || key == "branch_b.style") {
        auto& b = key[7] == 'a' ? m.branch_a : m.branch_b;
        if (v != "post" && v != "pre") throw ConfigError(key + ": expected post or pre");
        b.style = v == "pre" ? BlockStyle::pre_activation : BlockStyle::post_activation;
    } else if (key == "branch_a.trainable_tail_layers") m.branch_a.trainable_tail_layers = size();
    else if (key == "branch_b.trainable_tail_layers") m.branch_b.trainable_tail_layers = size();
    else if (key == "augment.variants") cfg.augment.variants_per_image = size();
    else if (key == "augment.ops") {
        cfg.augment.ops.clear();
        for (const auto& name : split_list(v, ',')) {
            auto op = parse_aug_op(name);
            if (!op) throw ConfigError(key + ": unknown op '" + name + "'");
            cfg.augment.ops.push_back(*op);
        }
    } else if (key == "augment.rotation_deg") r.rotation_deg = parse_real(key, v);
    else if (key == "augment.translation_frac") r.translation_frac = parse_real(key, v);
    else if (key == "augment.shear_deg") r.shear_deg = parse_real(key, v);
    else if (key == "augment.scale_min") r.scale_min = parse_real(key, v);
    else if (key == "augment.scale_max") r.scale_max = parse_real(key, v);
    else if (key == "augment.brightness") r.brightness = parse_real(key, v);
    else if (key == "augment.contrast") r.contrast = parse_real(key, v);
    else if (key == "augment.saturation") r.saturation = parse_real(key, v);
    else if (key == "augment.hue") r.hue = parse_real(key, v);
    else if (key == "augment.noise_sigma") r.noise_sigma = parse_real(key, v);
    else if (key == "grid.dense1_units") cfg.grid.dense1_units = parse_values<std::size_t>(key, v, parse_int<std::size_t>);
    else if (key == "grid.dense1_dropout") cfg.grid.dense1_dropout = parse_values<double>(key, v, parse_real);
    else if (key == "grid.dense2_units") cfg.grid.dense2_units = parse_values<std::size_t>(key, v, parse_int<std::size_t>);
    else if (key == "grid.dense2_dropout") cfg.grid.dense2_dropout = parse_values<double>(key, v, parse_real);
    else throw ConfigError("unknown configuration key '" + key + "'");
}

/// Flat "key = value" lines; '#' starts a comment.
inline void apply_config_text(RunConfig& cfg, std::istream& in, const std::string& source = "config") {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
        try {
            apply_setting(cfg, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    apply_config_text(cfg, in, path.string());
}

/// Effective configuration in the same key = value format (recorded with every run).
inline std::string format_config(const RunConfig& c) {
    using detail::format_stages;
    auto list = [](const auto& values, int decimals) {
        std::string out;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) out += ",";
            if constexpr (std::is_floating_point_v<std::decay_t<decltype(values[0])>>)
                out += fixed(values[i], decimals);
            else
                out += std::to_string(values[i]);
        }
        return out;
    };
    std::string op_list;
    for (std::size_t i = 0; i < c.augment.ops.size(); ++i)
        op_list += (i ? "," : "") + std::string(aug_op_name(c.augment.ops[i]));
    const auto& m = c.model;
    const auto& r = c.augment.ranges;
    std::ostringstream o;
    o << "dataset = " << c.dataset.string() << "\n"
      << "positive_class = " << c.positive_class << "\n"
      << "group_by_source = " << (c.group_mode == GroupMode::by_source ? "true" : "false") << "\n"
      << "input_size = " << m.input_height << "x" << m.input_width << "\n"
      << "epochs = " << c.epochs << "\n"
      << "batch_size = " << c.batch_size << "\n"
      << "learning_rate = " << fixed(c.learning_rate, 8) << "\n"
      << "seed = " << c.seed << "\n"
      << "k = " << c.k << "\n"
      << "split = " << fixed(c.split.train, 4) << "," << fixed(c.split.val, 4) << "," << fixed(c.split.test, 4) << "\n"
      << "se_ratio = " << m.se_ratio << "\n"
      << "dense1_units = " << m.dense1_units << "\n"
      << "dense1_dropout = " << fixed(m.dense1_dropout, 4) << "\n"
      << "dense2_units = " << m.dense2_units << "\n"
      << "dense2_dropout = " << fixed(m.dense2_dropout, 4) << "\n"
      << "branch_a.style = " << (m.branch_a.style == BlockStyle::pre_activation ? "pre" : "post") << "\n"
      << "branch_a.stages = " << format_stages(m.branch_a.stages) << "\n"
      << "branch_a.trainable_tail_layers = " << m.branch_a.trainable_tail_layers << "\n"
      << "branch_b.style = " << (m.branch_b.style == BlockStyle::pre_activation ? "pre" : "post") << "\n"
      << "branch_b.stages = " << format_stages(m.branch_b.stages) << "\n"
      << "branch_b.trainable_tail_layers = " << m.branch_b.trainable_tail_layers << "\n"
      << "augment.variants = " << c.augment.variants_per_image << "\n"
      << "augment.ops = " << op_list << "\n"
      << "augment.rotation_deg = " << fixed(r.rotation_deg, 4) << "\n"
      << "augment.translation_frac = " << fixed(r.translation_frac, 4) << "\n"
      << "augment.shear_deg = " << fixed(r.shear_deg, 4) << "\n"
      << "augment.scale_min = " << fixed(r.scale_min, 4) << "\n"
      << "augment.scale_max = " << fixed(r.scale_max, 4) << "\n"
      << "augment.brightness = " << fixed(r.brightness, 4) << "\n"
      << "augment.contrast = " << fixed(r.contrast, 4) << "\n"
      << "augment.saturation = " << fixed(r.saturation, 4) << "\n"
      << "augment.hue = " << fixed(r.hue, 4) << "\n"
      << "augment.noise_sigma = " << fixed(r.noise_sigma, 4) << "\n"
      << "grid.dense1_units = " << list(c.grid.dense1_units, 0) << "\n"
      << "grid.dense1_dropout = " << list(c.grid.dense1_dropout, 1) << "\n"
      << "grid.dense2_units = " << list(c.grid.dense2_units, 0) << "\n"
      << "grid.dense2_dropout = " << list(c.grid.dense2_dropout, 1) << "\n";
    return o.str();
}

/// Mirrors the run-level settings into the model and augmentation configs.
inline void synchronize(RunConfig& c) {
    c.model.seed = c.seed;
    c.augment.seed = c.seed;
}

}  // namespace sefusion
