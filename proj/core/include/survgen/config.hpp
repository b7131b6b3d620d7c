#pragma once

#include "survgen/cade.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace survgen {

inline constexpr const char* kToolVersion = "1.0.0";

struct SdirConfig {
    bool enabled = false;
    double alpha = 0.5;
    bool learnable_anchor = true;
    bool apply_to_both = false;
};

struct CadeConfig {
    bool enabled = false;
    double gamma = 0.3;
    KernelMode mode = KernelMode::Stochastic;
    double concentration = 10.0;
    std::size_t quadrature_points = 64;
};

struct ExperimentConfig {
    std::string source;
    std::vector<std::string> targets;
    std::map<std::string, std::string> datasets; // domain id -> dataset directory
    SdirConfig sdir;
    CadeConfig cade;
    std::size_t epochs = 100; // desk-scale example configs override to 30
    std::size_t batch_size = 64;
    double learning_rate = 0.05;
    std::string optimizer = "gd"; // "gd" or "adam"
    std::vector<std::uint64_t> seeds;
    std::size_t latent_dim = 16;
    std::size_t hidden_dim = 24;
    std::size_t bins = 4;
    std::size_t train_patches = 4096;
    std::string output_dir = "out";
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
void validate_config(const ExperimentConfig& cfg);

// Canonical serialized form: sorted keys, every effective value materialized,
// disabled module subtrees absent. Hash and equality of behaviour coincide:
// a config that disables a module hashes identically to one that never
// mentions it.
std::string canonical_config(const ExperimentConfig& cfg);

// FNV-1a 64 over the canonical form, 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

KernelSpec kernel_spec(const CadeConfig& cade);

} // namespace survgen
