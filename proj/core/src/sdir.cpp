#include "survgen/sdir.hpp"

#include "survgen/errors.hpp"

#include <cmath>

namespace survgen {

DiracResponse make_dirac_response(std::size_t d, RngStream& rng, bool learnable_anchor) {
    if (d == 0) fail(ErrorCategory::Param, "make_dirac_response: d must be positive");
    std::vector<double> w(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) w[i * d + i] = 1.0;
    std::vector<double> e(d);
    double norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        e[i] = rng.normal();
        norm += e[i] * e[i];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        e[0] = 1.0;
    } else {
        for (double& v : e) v /= norm;
    }
    DiracResponse dr;
    dr.phi_weights = Tensor(Shape{d, d}, std::move(w), true);
    dr.anchor = Tensor(Shape{1, d}, std::move(e), learnable_anchor);
    return dr;
}

std::pair<Tensor, SparsityMask> sparsify(const Tensor& z, double alpha, RngStream& rng) {
    if (!(alpha >= 0.0 && alpha < 1.0))
        fail(ErrorCategory::Param, "sparsify: alpha must lie in [0,1), got " + std::to_string(alpha));
    if (z.rows() != 1) fail(ErrorCategory::Shape, "sparsify: latent must be 1xd, got " + shape_str(z.shape()));
    SparsityMask mask;
    mask.alpha = alpha;
    mask.keep_bits.resize(z.cols());
    for (double& bit : mask.keep_bits) bit = rng.bernoulli(1.0 - alpha) ? 1.0 : 0.0;
    return {apply_mask(z, mask), mask};
}

Tensor apply_mask(const Tensor& z, const SparsityMask& mask) {
    if (z.rows() != 1 || z.cols() != mask.dim())
        fail(ErrorCategory::Shape, "apply_mask: latent " + shape_str(z.shape()) + " vs mask dim " +
                                       std::to_string(mask.dim()));
    Tensor bits(Shape{1, mask.dim()}, mask.keep_bits, false);
    return mul(z, bits);
}

Tensor dirac_response(const Tensor& z_hat, const DiracResponse& dr) {
    const std::size_t d = dr.anchor.cols();
    if (z_hat.rows() != 1 || z_hat.cols() != d)
        fail(ErrorCategory::Shape, "dirac_response: latent " + shape_str(z_hat.shape()) +
                                       " vs module dim " + std::to_string(d));
    Tensor phi = matmul(z_hat, dr.phi_weights);
    Tensor gate = exp_(neg(l2_norm(z_hat)));
    return add(phi, smul(gate, dr.anchor));
}

std::pair<Tensor, SparsityMask> sdir_forward(const Tensor& x, double alpha, const FeatureMap& enc,
                                             const FeatureMap& proj, const DiracResponse& dr,
                                             RngStream& rng) {
    Tensor z = proj(enc(x));
    auto [z_hat, mask] = sparsify(z, alpha, rng);
    return {dirac_response(z_hat, dr), mask};
}

Tensor sdir_forward_masked(const Tensor& x, const SparsityMask& mask, const FeatureMap& enc,
                           const FeatureMap& proj, const DiracResponse& dr) {
    Tensor z = proj(enc(x));
    return dirac_response(apply_mask(z, mask), dr);
}

} // namespace survgen
