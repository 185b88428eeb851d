#include "run_config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace gsw::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, int line) {
    throw UsageError("config line " + std::to_string(line) + ": invalid value '" + value + "' for " + key);
}

double to_double(const std::string& key, const std::string& v, int line) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) bad_value(key, v, line);
        return d;
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception&) {
        bad_value(key, v, line);
    }
}

long long to_int(const std::string& key, const std::string& v, int line) {
    try {
        std::size_t used = 0;
        const long long d = std::stoll(v, &used);
        if (used != v.size()) bad_value(key, v, line);
        return d;
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception&) {
        bad_value(key, v, line);
    }
}

bool to_bool(const std::string& key, const std::string& v, int line) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    bad_value(key, v, line);
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&, int)>;

template <class T>
Setter dbl(T member) {
    return [member](RunConfig& c, const std::string& k, const std::string& v, int l) {
        member(c) = to_double(k, v, l);
    };
}

template <class T>
Setter integer(T member) {
    return [member](RunConfig& c, const std::string& k, const std::string& v, int l) {
        member(c) = static_cast<int>(to_int(k, v, l));
    };
}

template <class T>
Setter flag(T member) {
    return [member](RunConfig& c, const std::string& k, const std::string& v, int l) {
        member(c) = to_bool(k, v, l);
    };
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"dataset", [](RunConfig& c, const std::string&, const std::string& v, int) { c.dataset = v; }},
        {"output", [](RunConfig& c, const std::string&, const std::string& v, int) { c.output = v; }},
        {"seed",
         [](RunConfig& c, const std::string& k, const std::string& v, int l) {
             const long long s = to_int(k, v, l);
             if (s < 0) bad_value(k, v, l);
             c.seed = static_cast<std::uint64_t>(s);
         }},
        {"iterations", integer([](RunConfig& c) -> int& { return c.train.iterations; })},
        {"K",
         [](RunConfig& c, const std::string& k, const std::string& v, int l) {
             c.data.K = c.train.appearance.K = static_cast<int>(to_int(k, v, l));
         }},
        {"lego_mode", flag([](RunConfig& c) -> bool& { return c.train.appearance.lego_mode; })},
        {"disable_k_maps", flag([](RunConfig& c) -> bool& { return c.train.appearance.disable_k_maps; })},
        {"disable_projection_map",
         flag([](RunConfig& c) -> bool& { return c.train.appearance.disable_projection_map; })},
        {"disable_separation", flag([](RunConfig& c) -> bool& { return c.train.appearance.disable_separation; })},
        {"freeze_sc", flag([](RunConfig& c) -> bool& { return c.train.freeze_sc; })},
        {"disable_vm", flag([](RunConfig& c) -> bool& { return c.train.disable_vm; })},
        {"vm_warmup", integer([](RunConfig& c) -> int& { return c.train.vm_warmup; })},
        {"transfer", flag([](RunConfig& c) -> bool& { return c.transfer; })},
        {"lambda_l1", dbl([](RunConfig& c) -> double& { return c.train.weights.l1; })},
        {"lambda_ssim", dbl([](RunConfig& c) -> double& { return c.train.weights.ssim; })},
        {"lambda_lpips", dbl([](RunConfig& c) -> double& { return c.train.weights.lpips; })},
        {"lambda_sc", dbl([](RunConfig& c) -> double& { return c.train.weights.sc; })},
        {"lambda_vm", dbl([](RunConfig& c) -> double& { return c.train.weights.vm; })},
        {"lr_position_start", dbl([](RunConfig& c) -> double& { return c.train.lr_position_start; })},
        {"lr_position_end", dbl([](RunConfig& c) -> double& { return c.train.lr_position_end; })},
        {"lr_extractor_start", dbl([](RunConfig& c) -> double& { return c.train.lr_extractor_start; })},
        {"lr_extractor_end", dbl([](RunConfig& c) -> double& { return c.train.lr_extractor_end; })},
        {"lr_mlp", dbl([](RunConfig& c) -> double& { return c.train.lr_mlp; })},
        {"lr_rotation", dbl([](RunConfig& c) -> double& { return c.train.lr_rotation; })},
        {"lr_scaling", dbl([](RunConfig& c) -> double& { return c.train.lr_scaling; })},
        {"lr_opacity", dbl([](RunConfig& c) -> double& { return c.train.lr_opacity; })},
        {"lr_intrinsic", dbl([](RunConfig& c) -> double& { return c.train.lr_intrinsic; })},
        {"lr_sampling", dbl([](RunConfig& c) -> double& { return c.train.lr_sampling; })},
        {"densify_from", integer([](RunConfig& c) -> int& { return c.train.densify_from; })},
        {"densify_until", integer([](RunConfig& c) -> int& { return c.train.densify_until; })},
        {"densify_interval", integer([](RunConfig& c) -> int& { return c.train.densify_interval; })},
        {"grad_threshold",
         [](RunConfig& c, const std::string& k, const std::string& v, int l) {
             c.train.grad_threshold = to_double(k, v, l);
             c.grad_threshold_set = true;
         }},
        {"min_opacity", dbl([](RunConfig& c) -> double& { return c.train.min_opacity; })},
        {"percent_dense", dbl([](RunConfig& c) -> double& { return c.train.percent_dense; })},
        {"eval_interval", integer([](RunConfig& c) -> int& { return c.train.eval_interval; })},
        {"width", integer([](RunConfig& c) -> int& { return c.data.width; })},
        {"height", integer([](RunConfig& c) -> int& { return c.data.height; })},
        {"n_train", integer([](RunConfig& c) -> int& { return c.data.n_train; })},
        {"n_test", integer([](RunConfig& c) -> int& { return c.data.n_test; })},
        {"n_points", integer([](RunConfig& c) -> int& { return c.data.n_points; })},
        {"focal", dbl([](RunConfig& c) -> double& { return c.data.focal; })},
        {"ring_radius", dbl([](RunConfig& c) -> double& { return c.data.ring_radius; })},
        {"ring_height", dbl([](RunConfig& c) -> double& { return c.data.ring_height; })},
        {"point_scale", dbl([](RunConfig& c) -> double& { return c.data.point_scale; })},
        {"gain_min", dbl([](RunConfig& c) -> double& { return c.data.gain_min; })},
        {"gain_max", dbl([](RunConfig& c) -> double& { return c.data.gain_max; })},
        {"bias_min", dbl([](RunConfig& c) -> double& { return c.data.bias_min; })},
        {"bias_max", dbl([](RunConfig& c) -> double& { return c.data.bias_max; })},
        {"max_occluders", integer([](RunConfig& c) -> int& { return c.data.max_occluders; })},
        {"init_noise", dbl([](RunConfig& c) -> double& { return c.data.init_noise; })},
        {"init_opacity", dbl([](RunConfig& c) -> double& { return c.data.init_opacity; })},
        {"tune_weights",
         [](RunConfig& c, const std::string& k, const std::string& v, int l) {
             c.tune_weights.clear();
             std::stringstream ss(v);
             std::string item;
             while (std::getline(ss, item, ',')) c.tune_weights.push_back(to_double(k, trim(item), l));
             if (c.tune_weights.empty()) bad_value(k, v, l);
         }},
    };
    return table;
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, _] : setters()) keys.push_back(k);
    return keys;
}

void RunConfig::validate() const {
    auto check = [](bool ok, const std::string& msg) {
        if (!ok) throw UsageError("config: " + msg);
    };
    check(train.iterations >= 0, "iterations must be nonnegative");
    check(train.appearance.K >= 1, "K must be at least 1");
    check(train.weights.l1 >= 0 && train.weights.ssim >= 0 && train.weights.sc >= 0 && train.weights.vm >= 0,
          "loss weights must be nonnegative");
    check(train.weights.lpips == 0.0, "lambda_lpips must be 0 (no perceptual network available)");
    for (double lr : {train.lr_position_start, train.lr_position_end, train.lr_extractor_start,
                      train.lr_extractor_end, train.lr_mlp, train.lr_rotation, train.lr_scaling, train.lr_opacity,
                      train.lr_intrinsic, train.lr_sampling})
        check(lr > 0, "learning rates must be positive");
    check(train.densify_interval >= 0 && train.densify_from >= 0, "densify schedule must be nonnegative");
    check(train.vm_warmup >= 0, "vm_warmup must be nonnegative");
    check(train.grad_threshold > 0 && train.percent_dense > 0, "densify thresholds must be positive");
    check(train.min_opacity >= 0 && train.min_opacity < 1, "min_opacity must lie in [0,1)");
    check(train.eval_interval >= 0, "eval_interval must be nonnegative");
    try {
        data.validate();
    } catch (const ContractViolation& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end())
            throw UsageError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        if (!seen.insert(key).second)
            throw UsageError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        if (value.empty()) bad_value(key, value, line_no);
        it->second(cfg, key, value, line_no);
    }
    if (cfg.train.appearance.lego_mode && !cfg.grad_threshold_set) cfg.train.grad_threshold = 1.5e-4;
    cfg.train.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace gsw::cli
