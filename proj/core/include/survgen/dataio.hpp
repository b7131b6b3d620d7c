#pragma once

#include "survgen/fusion.hpp"
#include "survgen/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace survgen {

// Recipe for one synthetic domain. Identical specs generate bit-identical
// data; domains meant to share task structure differ only in the nuisance
// fields (offset, noise scale, seed).
struct DomainSpec {
    std::string domain_id;
    std::size_t n_samples = 0;
    std::size_t patches_per_sample = 0;
    std::size_t pathways = 0;
    std::size_t signal_dim = 0; // feature width of both modalities
    double patch_signal_fraction = 0.25;
    std::vector<double> domain_shift_offset; // per-feature, patch side only; empty = zeros
    double gene_noise_scale = 1.0;
    double censor_fraction = 0.25;
    std::uint64_t seed = 0;
};

void validate_spec(const DomainSpec& spec);

// Latent risk u ~ N(0,1) drives both modalities and the survival time
// (rate exp(u)); a random minority of patches carries the risk signal, the
// domain offset shifts every patch feature, and the gene side stays
// offset-free with its own noise scale.
ModalityBatch generate_domain(const DomainSpec& spec);

// Training-time patch subsampling: min(n_train, p) rows without replacement,
// ascending original order. Returns the input unchanged when p <= n_train.
Tensor sample_patches(const Tensor& patches, std::size_t n_train, RngStream& rng);

// On-disk layout of one dataset directory.
struct FeatureFileSchema {
    std::string manifest_path;
    std::string patches_dir;
    std::string pathways_path;
    std::string labels_path;
    std::string membership_path;
};

FeatureFileSchema dataset_layout(const std::string& dir);

struct LoadedDataset {
    ModalityBatch batch;
    DomainSpec spec;
};

// Writes manifest, per-sample patch files, pathway/label/membership tables.
// Deterministic: re-saving the same data overwrites byte-identically.
void save_dataset(const std::string& dir, const ModalityBatch& batch, const DomainSpec& spec);

// Validates headers and shapes before materializing anything; rejects
// non-finite values with the offending row.
LoadedDataset load_features(const FeatureFileSchema& schema);

LoadedDataset load_dataset(const std::string& dir);

} // namespace survgen
