#pragma once

#include "survgen/rng.hpp"
#include "survgen/tensor.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace survgen {

// Realized Bernoulli keep-mask over a d-dimensional latent.
struct SparsityMask {
    std::vector<double> keep_bits; // each entry exactly 0.0 or 1.0
    double alpha = 0.0;            // drop probability; P(keep) = 1 - alpha

    std::size_t dim() const { return keep_bits.size(); }
};

// Anchored nonlinear response: out = phi(z) + exp(-|z|) * anchor, with phi a
// bias-free linear map so that zero input maps exactly onto the anchor.
struct DiracResponse {
    Tensor phi_weights; // d x d
    Tensor anchor;      // 1 x d, unit L2 norm at initialization
};

// phi starts as the identity map; the anchor is a random unit vector.
// learnable_anchor toggles whether the anchor receives gradients.
DiracResponse make_dirac_response(std::size_t d, RngStream& rng, bool learnable_anchor = true);

// Draw a fresh keep-mask for a 1 x d latent and apply it. The mask is a
// constant in the graph: gradients flow through kept coordinates only.
std::pair<Tensor, SparsityMask> sparsify(const Tensor& z, double alpha, RngStream& rng);

// Apply an existing mask (idempotent: same mask twice == once).
Tensor apply_mask(const Tensor& z, const SparsityMask& mask);

// phi(z_hat) + exp(-|z_hat|) * anchor. Differentiable everywhere; the norm
// uses a zero subgradient at the origin, so a fully-masked latent still
// back-propagates into phi and the anchor.
Tensor dirac_response(const Tensor& z_hat, const DiracResponse& dr);

// Full module: encode, project, sparsify, respond. Draws one mask from rng.
using FeatureMap = std::function<Tensor(const Tensor&)>;
std::pair<Tensor, SparsityMask> sdir_forward(const Tensor& x, double alpha, const FeatureMap& enc,
                                             const FeatureMap& proj, const DiracResponse& dr,
                                             RngStream& rng);

// Same composition with a caller-supplied mask (deterministic; used for
// gradient checks and replay).
Tensor sdir_forward_masked(const Tensor& x, const SparsityMask& mask, const FeatureMap& enc,
                           const FeatureMap& proj, const DiracResponse& dr);

} // namespace survgen
