#pragma once

#include "survgen/cade.hpp"
#include "survgen/rng.hpp"
#include "survgen/sdir.hpp"
#include "survgen/survmetrics.hpp"
#include "survgen/tensor.hpp"

#include <string>
#include <utility>
#include <vector>

namespace survgen {

// Token-level multimodal batch. Patch counts may differ per sample (training
// subsamples, evaluation uses everything); pathway counts are uniform.
struct ModalityBatch {
    std::vector<Tensor> patch_tokens;   // n entries, each p_i x f_image
    std::vector<Tensor> pathway_tokens; // n entries, each q x f_gene
    std::vector<SurvivalRecord> labels;
    std::vector<std::string> sample_ids;

    std::size_t n() const { return labels.size(); }
};

void validate_batch(const ModalityBatch& batch);

// Two-layer MLP with relu, applied per token row.
struct Mlp {
    Tensor w1, b1, w2, b2;
};

struct BackboneParams {
    Mlp enc_image, enc_gene;
    Tensor proj_image, proj_gene; // hidden x d, bias-free
    Tensor wq, wk, wv, wo;        // d x d attention maps
    Tensor head_w, head_b;        // d x bins, 1 x bins
    std::size_t f_image = 0, f_gene = 0, hidden = 0, d = 0, bins = 0;
};

BackboneParams make_backbone(std::size_t f_image, std::size_t f_gene, std::size_t hidden,
                             std::size_t d, std::size_t bins, RngStream& rng);

// Backbone plus the anchored-response parameters. The response parameters
// exist in every model so checkpoints keep one layout regardless of which
// regularizers a run enables.
struct Model {
    BackboneParams backbone;
    DiracResponse dirac;
};

Model make_model(std::size_t f_image, std::size_t f_gene, std::size_t hidden, std::size_t d,
                 std::size_t bins, std::uint64_t seed, bool learnable_anchor = true);

// Stable parameter enumeration; names are the checkpoint keys.
std::vector<std::pair<std::string, Tensor>> named_parameters(const Model& m);
std::vector<Tensor> trainable_parameters(const Model& m);

struct EncodedSample {
    Tensor image_tokens; // p x d
    Tensor gene_tokens;  // q x d
    Tensor pooled_image; // 1 x d token mean
    Tensor pooled_gene;  // 1 x d token mean
};

EncodedSample encode_project(const Tensor& patches, const Tensor& pathways,
                             const BackboneParams& params);

// Pathway tokens query patch tokens; scaled dot-product, one head, residual
// connection around the attention output.
Tensor cross_attention(const Tensor& gene_tokens, const Tensor& patch_tokens,
                       const BackboneParams& params);

// Mean-pool fused tokens, linear map to one hazard logit per bin.
Tensor survival_head(const Tensor& fused_tokens, const BackboneParams& params);

enum class ForwardMode { Clean, Sdir, Cade };

struct ForwardResult {
    Tensor logits;        // n x bins
    Tensor hazards;       // n x bins, sigmoid of logits
    Tensor clean_latents; // n x 2d pooled [image ; gene] before any degradation
    double kernel_t = -1.0; // cade mode only: drawn interpolation position
};

// noise_key seeds mode-specific randomness. Masks are derived per sample id,
// so permuting a batch permutes outputs identically; the cade interpolant is
// one draw per batch. Clean mode consumes no randomness. sdir_both extends
// sparsification from the image side to the gene side as well.
ForwardResult forward(const ModalityBatch& batch, const BackboneParams& params,
                      const DiracResponse& dirac, ForwardMode mode, double alpha,
                      const KernelSpec& kernel, std::uint64_t noise_key, bool sdir_both = false);

// Mask substream key for one sample (exposed so replays can reproduce the
// exact masks a forward pass drew).
std::uint64_t sample_noise_key(std::uint64_t noise_key, const std::string& sample_id);

} // namespace survgen
