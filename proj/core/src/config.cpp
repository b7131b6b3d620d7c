#include "survgen/config.hpp"

#include "survgen/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

namespace survgen {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& where) {
    for (const auto& [key, _] : obj.items())
        if (!known.count(key))
            fail(ErrorCategory::Schema, "config: unknown key '" + key + "' in " + where);
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ErrorCategory::Schema, std::string("config: bad value for '") + key + "': " + e.what());
    }
}

} // namespace

ExperimentConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        fail(ErrorCategory::Schema, std::string("config: ") + e.what());
    }
    if (!root.is_object()) fail(ErrorCategory::Schema, "config: top level must be an object");
    reject_unknown_keys(root,
                        {"source", "targets", "datasets", "sdir", "cade", "epochs", "batch_size",
                         "learning_rate", "optimizer", "seeds", "latent_dim", "hidden_dim", "bins",
                         "train_patches", "output_dir"},
                        "top level");

    ExperimentConfig cfg;
    read_field(root, "source", cfg.source);
    read_field(root, "targets", cfg.targets);
    read_field(root, "datasets", cfg.datasets);
    read_field(root, "epochs", cfg.epochs);
    read_field(root, "batch_size", cfg.batch_size);
    read_field(root, "learning_rate", cfg.learning_rate);
    read_field(root, "optimizer", cfg.optimizer);
    read_field(root, "seeds", cfg.seeds);
    read_field(root, "latent_dim", cfg.latent_dim);
    read_field(root, "hidden_dim", cfg.hidden_dim);
    read_field(root, "bins", cfg.bins);
    read_field(root, "train_patches", cfg.train_patches);
    read_field(root, "output_dir", cfg.output_dir);

    if (root.contains("sdir")) {
        const json& s = root.at("sdir");
        if (!s.is_object()) fail(ErrorCategory::Schema, "config: 'sdir' must be an object");
        reject_unknown_keys(s, {"enabled", "alpha", "learnable_anchor", "apply_to_both"}, "sdir");
        cfg.sdir.enabled = true; // mentioning the block turns it on unless it says otherwise
        read_field(s, "enabled", cfg.sdir.enabled);
        read_field(s, "alpha", cfg.sdir.alpha);
        read_field(s, "learnable_anchor", cfg.sdir.learnable_anchor);
        read_field(s, "apply_to_both", cfg.sdir.apply_to_both);
    }
    if (root.contains("cade")) {
        const json& c = root.at("cade");
        if (!c.is_object()) fail(ErrorCategory::Schema, "config: 'cade' must be an object");
        reject_unknown_keys(c, {"enabled", "gamma", "kernel_mode", "concentration",
                                "quadrature_points"},
                            "cade");
        cfg.cade.enabled = true;
        read_field(c, "enabled", cfg.cade.enabled);
        read_field(c, "gamma", cfg.cade.gamma);
        std::string mode = kernel_mode_name(cfg.cade.mode);
        read_field(c, "kernel_mode", mode);
        cfg.cade.mode = parse_kernel_mode(mode);
        read_field(c, "concentration", cfg.cade.concentration);
        read_field(c, "quadrature_points", cfg.cade.quadrature_points);
    }

    validate_config(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCategory::Io, "cannot open config " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.source.empty()) fail(ErrorCategory::Param, "config: source domain required");
    if (cfg.targets.empty()) fail(ErrorCategory::Param, "config: target list must be non-empty");
    std::set<std::string> seen;
    for (const std::string& t : cfg.targets) {
        if (t == cfg.source)
            fail(ErrorCategory::Param, "config: target '" + t + "' equals the source domain");
        if (!seen.insert(t).second)
            fail(ErrorCategory::Param, "config: duplicate target '" + t + "'");
    }
    if (!cfg.datasets.count(cfg.source))
        fail(ErrorCategory::Param, "config: no dataset path for source '" + cfg.source + "'");
    for (const std::string& t : cfg.targets)
        if (!cfg.datasets.count(t))
            fail(ErrorCategory::Param, "config: no dataset path for target '" + t + "'");
    if (cfg.sdir.enabled && !(cfg.sdir.alpha >= 0.0 && cfg.sdir.alpha < 1.0))
        fail(ErrorCategory::Param, "config: sdir.alpha must lie in [0,1)");
    if (cfg.cade.enabled) {
        KernelSpec k = kernel_spec(cfg.cade);
        validate_kernel(k);
    }
    if (cfg.epochs < 1) fail(ErrorCategory::Param, "config: epochs must be >= 1");
    if (cfg.batch_size < 2) fail(ErrorCategory::Param, "config: batch_size must be >= 2");
    if (!(cfg.learning_rate > 0.0)) fail(ErrorCategory::Param, "config: learning_rate must be > 0");
    if (cfg.optimizer != "gd" && cfg.optimizer != "adam")
        fail(ErrorCategory::Param, "config: optimizer must be 'gd' or 'adam'");
    if (cfg.seeds.empty()) fail(ErrorCategory::Param, "config: seeds list must be non-empty");
    if (cfg.latent_dim < 1 || cfg.hidden_dim < 1)
        fail(ErrorCategory::Param, "config: latent_dim and hidden_dim must be positive");
    if (cfg.bins < 2) fail(ErrorCategory::Param, "config: bins must be >= 2");
    if (cfg.train_patches < 1) fail(ErrorCategory::Param, "config: train_patches must be >= 1");
    if (cfg.output_dir.empty()) fail(ErrorCategory::Param, "config: output_dir required");
}

std::string canonical_config(const ExperimentConfig& cfg) {
    json root;
    root["source"] = cfg.source;
    root["targets"] = cfg.targets;
    root["datasets"] = cfg.datasets;
    root["epochs"] = cfg.epochs;
    root["batch_size"] = cfg.batch_size;
    root["learning_rate"] = cfg.learning_rate;
    root["optimizer"] = cfg.optimizer;
    root["seeds"] = cfg.seeds;
    root["latent_dim"] = cfg.latent_dim;
    root["hidden_dim"] = cfg.hidden_dim;
    root["bins"] = cfg.bins;
    root["train_patches"] = cfg.train_patches;
    root["output_dir"] = cfg.output_dir;
    if (cfg.sdir.enabled) {
        root["sdir"]["enabled"] = true;
        root["sdir"]["alpha"] = cfg.sdir.alpha;
        root["sdir"]["learnable_anchor"] = cfg.sdir.learnable_anchor;
        root["sdir"]["apply_to_both"] = cfg.sdir.apply_to_both;
    }
    if (cfg.cade.enabled) {
        root["cade"]["enabled"] = true;
        root["cade"]["gamma"] = cfg.cade.gamma;
        root["cade"]["kernel_mode"] = kernel_mode_name(cfg.cade.mode);
        if (cfg.cade.mode == KernelMode::Centered)
            root["cade"]["concentration"] = cfg.cade.concentration;
        if (cfg.cade.mode == KernelMode::Expectation)
            root["cade"]["quadrature_points"] = cfg.cade.quadrature_points;
    }
    return root.dump(); // nlohmann objects iterate in sorted key order
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string canon = canonical_config(cfg);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

KernelSpec kernel_spec(const CadeConfig& cade) {
    KernelSpec k;
    k.gamma = cade.gamma;
    k.mode = cade.mode;
    k.concentration = cade.concentration;
    k.quadrature_points = cade.quadrature_points;
    return k;
}

} // namespace survgen
