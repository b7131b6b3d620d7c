#pragma once

#include "survgen/rng.hpp"
#include "survgen/tensor.hpp"

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace survgen {

inline constexpr double kVarFloor = 1e-5;

// Diagonal Gaussian over d dimensions. Variances are floored at eps on
// construction, which keeps whitening and entropy finite.
struct GaussianStats {
    std::vector<double> mean;
    std::vector<double> var;
    double eps = kVarFloor;

    std::size_t dim() const { return mean.size(); }
};

GaussianStats make_stats(std::vector<double> mean, std::vector<double> var, double eps = kVarFloor);

enum class KernelMode { Expectation, Stochastic, Centered };

const char* kernel_mode_name(KernelMode mode);
KernelMode parse_kernel_mode(const std::string& name);

// How the interpolation position t along the gene-to-image statistics path is
// chosen. Stochastic draws t ~ Beta(gamma, gamma) per batch; centered draws
// t ~ Beta(c*gamma, c*(1-gamma)) with mean gamma; expectation integrates the
// Beta(gamma, gamma) density by quadrature.
struct KernelSpec {
    double gamma = 0.3;
    KernelMode mode = KernelMode::Stochastic;
    double concentration = 10.0;       // centered mode only
    std::size_t quadrature_points = 64; // expectation mode only
};

void validate_kernel(const KernelSpec& k);

// Per-dimension batch mean and biased variance, floored. Requires n >= 2.
GaussianStats fit_modality_stats(const Tensor& features, double eps = kVarFloor);

// Linear interpolation of mean and variance at position t in [0,1].
GaussianStats path_stats(double t, const GaussianStats& g, const GaussianStats& i);

// One interpolation position per call, by kernel mode. Expectation mode
// returns 1/2 (the Beta(gamma, gamma) mean) without consuming randomness.
double draw_interpolant(const KernelSpec& k, RngStream& rng);

// Kernel-weighted composition of the two endpoint statistics.
GaussianStats compose_statistics(const GaussianStats& g, const GaussianStats& i,
                                 const KernelSpec& k, RngStream& rng);

// Concatenate [z_I ; z_G] per sample, standardize per dimension with the
// joint batch statistics. Differentiable through both the inputs and the
// statistics. Requires n >= 2.
std::pair<Tensor, GaussianStats> joint_normalize(const Tensor& z_I, const Tensor& z_G,
                                                 double eps = kVarFloor);

// mean + sqrt(var) per dimension; inverse of standardization.
Tensor recolor(const Tensor& z, const GaussianStats& s);

// Recolor each modality half of an n x 2d standardized batch with the same
// d-dimensional statistics.
Tensor entangle(const Tensor& z_tilde, const GaussianStats& s);

// 0.5 * sum_i log(2*pi*e*var_i)
double gaussian_entropy(const GaussianStats& s);

struct EntropyCheck {
    double slack = 0.0; // S(composed) - integral of S(path(t)) dKernel
    bool holds = false; // slack >= -1e-9
};

// Jensen-gap check for the expectation kernel.
EntropyCheck entropy_inequality_check(const GaussianStats& g, const GaussianStats& i,
                                      const KernelSpec& k);

// Closed-form KL(p || q) between diagonal Gaussians of equal dimension.
double gaussian_kl(const GaussianStats& p, const GaussianStats& q);

// Samples from s, projects onto random unit directions, and compares
// empirical first/second moments against their analytic values. Returns the
// worst deviation in standard-error units.
double projection_moment_check(const GaussianStats& s, std::size_t n_samples,
                               std::size_t n_directions, RngStream& rng);

// --- graph-level statistics -------------------------------------------------
// Statistics carried inside the computation graph as a 2 x d tensor: row 0 is
// the mean, row 1 the floored variance. Used on the training path so that
// gradients reach the model through the distribution-matching terms.

Tensor batch_stats_floored(const Tensor& features, double eps = kVarFloor);
Tensor interpolate_stats(double t, const Tensor& g, const Tensor& i);
Tensor standardize(const Tensor& z, const Tensor& stats);
Tensor recolor(const Tensor& z, const Tensor& stats);
Tensor entangle(const Tensor& z_tilde, const Tensor& stats);
Tensor block_product(const Tensor& stats);   // 2 x d -> 2 x 2d (two identical blocks)
Tensor gaussian_kl_graph(const Tensor& p, const Tensor& q); // scalar node

} // namespace survgen
