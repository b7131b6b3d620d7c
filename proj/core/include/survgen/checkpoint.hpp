#pragma once

#include "survgen/fusion.hpp"

#include <string>

namespace survgen {

// Versioned text checkpoint. Values are written as C hexfloats, so a
// save/load cycle reproduces every parameter bit for bit.
void save_checkpoint(const std::string& path, const Model& model, const std::string& config_hash);

struct LoadedCheckpoint {
    Model model;
    std::string config_hash;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace survgen
