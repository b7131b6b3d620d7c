#include "survgen/cade.hpp"

#include "survgen/errors.hpp"
#include "survgen/quadrature.hpp"

#include <cmath>
#include <string>

namespace survgen {

namespace {

constexpr double kTwoPiE = 17.0794684453471341; // 2 * pi * e

void require_same_dim(const GaussianStats& a, const GaussianStats& b, const char* op) {
    if (a.dim() != b.dim())
        fail(ErrorCategory::Shape, std::string(op) + ": dimension mismatch " +
                                       std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
}

// Unnormalized Beta(a, b) density; the normalizing constant cancels in
// self-normalized quadrature.
double beta_kernel(double t, double a, double b) {
    return std::pow(t, a - 1.0) * std::pow(1.0 - t, b - 1.0);
}

// Quadrature nodes with self-normalized Beta(gamma, gamma) weights.
struct KernelQuadrature {
    std::vector<double> nodes;
    std::vector<double> weights; // sum to 1
};

KernelQuadrature kernel_quadrature(const KernelSpec& k) {
    QuadratureRule rule = gauss_legendre_01(k.quadrature_points);
    KernelQuadrature q;
    q.nodes = rule.nodes;
    q.weights.resize(rule.nodes.size());
    double total = 0.0;
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
        const double w = rule.weights[j] * beta_kernel(rule.nodes[j], k.gamma, k.gamma);
        if (!std::isfinite(w)) fail(ErrorCategory::Numeric, "compose_statistics: non-finite quadrature weight");
        q.weights[j] = w;
        total += w;
    }
    if (!(total > 0.0) || !std::isfinite(total))
        fail(ErrorCategory::Numeric, "compose_statistics: degenerate quadrature normalization");
    for (double& w : q.weights) w /= total;
    return q;
}

} // namespace

GaussianStats make_stats(std::vector<double> mean, std::vector<double> var, double eps) {
    if (mean.size() != var.size())
        fail(ErrorCategory::Shape, "make_stats: mean dim " + std::to_string(mean.size()) +
                                       " vs var dim " + std::to_string(var.size()));
    if (!(eps > 0.0)) fail(ErrorCategory::Param, "make_stats: eps must be > 0");
    for (double m : mean)
        if (!std::isfinite(m)) fail(ErrorCategory::Numeric, "make_stats: non-finite mean entry");
    for (double& v : var) {
        if (!std::isfinite(v)) fail(ErrorCategory::Numeric, "make_stats: non-finite variance entry");
        v = std::max(v, eps);
    }
    GaussianStats s;
    s.mean = std::move(mean);
    s.var = std::move(var);
    s.eps = eps;
    return s;
}

const char* kernel_mode_name(KernelMode mode) {
    switch (mode) {
        case KernelMode::Expectation: return "expectation";
        case KernelMode::Stochastic: return "stochastic";
        case KernelMode::Centered: return "centered";
    }
    fail(ErrorCategory::Param, "kernel_mode_name: invalid mode value");
}

KernelMode parse_kernel_mode(const std::string& name) {
    if (name == "expectation") return KernelMode::Expectation;
    if (name == "stochastic") return KernelMode::Stochastic;
    if (name == "centered") return KernelMode::Centered;
    fail(ErrorCategory::Param, "unknown kernel mode '" + name +
                                   "' (expected expectation, stochastic, or centered)");
}

void validate_kernel(const KernelSpec& k) {
    if (!(k.gamma > 0.0 && k.gamma < 1.0))
        fail(ErrorCategory::Param, "kernel: gamma must lie in (0,1), got " + std::to_string(k.gamma));
    if (k.mode == KernelMode::Centered && !(k.concentration > 0.0))
        fail(ErrorCategory::Param, "kernel: concentration must be > 0");
    if (k.mode == KernelMode::Expectation && k.quadrature_points < 2)
        fail(ErrorCategory::Param, "kernel: need at least 2 quadrature points");
}

GaussianStats fit_modality_stats(const Tensor& features, double eps) {
    const std::size_t n = features.rows(), d = features.cols();
    if (n < 2)
        fail(ErrorCategory::Batch, "fit_modality_stats: need at least 2 samples, got " + std::to_string(n));
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    const auto& x = features.value();
    for (std::size_t j = 0; j < d; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += x[i * d + j];
        m /= static_cast<double>(n);
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = x[i * d + j] - m;
            v += c * c;
        }
        mean[j] = m;
        var[j] = v / static_cast<double>(n);
    }
    return make_stats(std::move(mean), std::move(var), eps);
}

GaussianStats path_stats(double t, const GaussianStats& g, const GaussianStats& i) {
    require_same_dim(g, i, "path_stats");
    if (!(t >= 0.0 && t <= 1.0))
        fail(ErrorCategory::Param, "path_stats: t must lie in [0,1], got " + std::to_string(t));
    const std::size_t d = g.dim();
    std::vector<double> mean(d), var(d);
    for (std::size_t j = 0; j < d; ++j) {
        mean[j] = (1.0 - t) * g.mean[j] + t * i.mean[j];
        var[j] = (1.0 - t) * g.var[j] + t * i.var[j];
    }
    return make_stats(std::move(mean), std::move(var), std::min(g.eps, i.eps));
}

double draw_interpolant(const KernelSpec& k, RngStream& rng) {
    validate_kernel(k);
    switch (k.mode) {
        case KernelMode::Expectation: return 0.5; // Beta(gamma, gamma) mean
        case KernelMode::Stochastic: return rng.beta(k.gamma, k.gamma);
        case KernelMode::Centered:
            return rng.beta(k.concentration * k.gamma, k.concentration * (1.0 - k.gamma));
    }
    fail(ErrorCategory::Param, "draw_interpolant: invalid mode value");
}

GaussianStats compose_statistics(const GaussianStats& g, const GaussianStats& i,
                                 const KernelSpec& k, RngStream& rng) {
    require_same_dim(g, i, "compose_statistics");
    validate_kernel(k);
    if (k.mode == KernelMode::Expectation) {
        const KernelQuadrature q = kernel_quadrature(k);
        const std::size_t d = g.dim();
        std::vector<double> mean(d, 0.0), var(d, 0.0);
        for (std::size_t j = 0; j < q.nodes.size(); ++j) {
            const GaussianStats p = path_stats(q.nodes[j], g, i);
            for (std::size_t c = 0; c < d; ++c) {
                mean[c] += q.weights[j] * p.mean[c];
                var[c] += q.weights[j] * p.var[c];
            }
        }
        return make_stats(std::move(mean), std::move(var), std::min(g.eps, i.eps));
    }
    return path_stats(draw_interpolant(k, rng), g, i);
}

std::pair<Tensor, GaussianStats> joint_normalize(const Tensor& z_I, const Tensor& z_G, double eps) {
    if (z_I.rows() != z_G.rows() || z_I.cols() != z_G.cols())
        fail(ErrorCategory::Shape, "joint_normalize: batch shapes " + shape_str(z_I.shape()) +
                                       " vs " + shape_str(z_G.shape()));
    if (z_I.rows() < 2)
        fail(ErrorCategory::Batch, "joint_normalize: need at least 2 samples, got " +
                                       std::to_string(z_I.rows()));
    Tensor joint = concat_cols(z_I, z_G);
    Tensor stats = batch_stats_floored(joint, eps);
    Tensor z_tilde = standardize(joint, stats);
    const std::size_t dd = joint.cols();
    const auto& sv = stats.value();
    GaussianStats snapshot = make_stats(std::vector<double>(sv.begin(), sv.begin() + dd),
                                        std::vector<double>(sv.begin() + dd, sv.end()), eps);
    return {z_tilde, snapshot};
}

Tensor recolor(const Tensor& z, const GaussianStats& s) {
    if (z.cols() != s.dim())
        fail(ErrorCategory::Shape, "recolor: batch " + shape_str(z.shape()) + " vs stats dim " +
                                       std::to_string(s.dim()));
    std::vector<double> packed = s.mean;
    packed.insert(packed.end(), s.var.begin(), s.var.end());
    return recolor(z, Tensor(Shape{2, s.dim()}, std::move(packed), false));
}

Tensor entangle(const Tensor& z_tilde, const GaussianStats& s) {
    std::vector<double> packed = s.mean;
    packed.insert(packed.end(), s.var.begin(), s.var.end());
    return entangle(z_tilde, Tensor(Shape{2, s.dim()}, std::move(packed), false));
}

double gaussian_entropy(const GaussianStats& s) {
    double acc = 0.0;
    for (double v : s.var) acc += std::log(kTwoPiE * v);
    return 0.5 * acc;
}

EntropyCheck entropy_inequality_check(const GaussianStats& g, const GaussianStats& i,
                                      const KernelSpec& k) {
    if (k.mode != KernelMode::Expectation)
        fail(ErrorCategory::Param, "entropy_inequality_check: requires the expectation kernel");
    RngStream unused(0);
    const GaussianStats composed = compose_statistics(g, i, k, unused);
    const KernelQuadrature q = kernel_quadrature(k);
    double path_entropy = 0.0;
    for (std::size_t j = 0; j < q.nodes.size(); ++j)
        path_entropy += q.weights[j] * gaussian_entropy(path_stats(q.nodes[j], g, i));
    EntropyCheck out;
    out.slack = gaussian_entropy(composed) - path_entropy;
    out.holds = out.slack >= -1e-9;
    return out;
}

double gaussian_kl(const GaussianStats& p, const GaussianStats& q) {
    require_same_dim(p, q, "gaussian_kl");
    double acc = 0.0;
    for (std::size_t j = 0; j < p.dim(); ++j) {
        const double dm = p.mean[j] - q.mean[j];
        acc += std::log(q.var[j] / p.var[j]) + (p.var[j] + dm * dm) / q.var[j] - 1.0;
    }
    return 0.5 * acc;
}

double projection_moment_check(const GaussianStats& s, std::size_t n_samples,
                               std::size_t n_directions, RngStream& rng) {
    if (n_samples < 10000)
        fail(ErrorCategory::Param, "projection_moment_check: need at least 1e4 samples");
    if (n_directions == 0) fail(ErrorCategory::Param, "projection_moment_check: need directions");
    const std::size_t d = s.dim();

    std::vector<double> dirs(n_directions * d);
    for (std::size_t k = 0; k < n_directions; ++k) {
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            dirs[k * d + j] = rng.normal();
            norm += dirs[k * d + j] * dirs[k * d + j];
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            dirs[k * d] = 1.0;
        } else {
            for (std::size_t j = 0; j < d; ++j) dirs[k * d + j] /= norm;
        }
    }

    std::vector<double> sd(d);
    for (std::size_t j = 0; j < d; ++j) sd[j] = std::sqrt(s.var[j]);
    std::vector<double> sum(n_directions, 0.0), sumsq(n_directions, 0.0);
    std::vector<double> x(d);
    for (std::size_t i = 0; i < n_samples; ++i) {
        for (std::size_t j = 0; j < d; ++j) x[j] = s.mean[j] + sd[j] * rng.normal();
        for (std::size_t k = 0; k < n_directions; ++k) {
            double proj = 0.0;
            for (std::size_t j = 0; j < d; ++j) proj += dirs[k * d + j] * x[j];
            sum[k] += proj;
            sumsq[k] += proj * proj;
        }
    }

    const double n = static_cast<double>(n_samples);
    double worst = 0.0;
    for (std::size_t k = 0; k < n_directions; ++k) {
        double proj_mean = 0.0, proj_var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            proj_mean += dirs[k * d + j] * s.mean[j];
            proj_var += dirs[k * d + j] * dirs[k * d + j] * s.var[j];
        }
        const double emp_mean = sum[k] / n;
        const double emp_var = (sumsq[k] - n * emp_mean * emp_mean) / (n - 1.0);
        const double mean_se = std::sqrt(proj_var / n);
        const double var_se = proj_var * std::sqrt(2.0 / (n - 1.0));
        worst = std::max(worst, std::abs(emp_mean - proj_mean) / mean_se);
        worst = std::max(worst, std::abs(emp_var - proj_var) / var_se);
    }
    return worst;
}

// --- graph-level statistics -------------------------------------------------

Tensor batch_stats_floored(const Tensor& features, double eps) {
    if (features.rows() < 2)
        fail(ErrorCategory::Batch, "batch_stats_floored: need at least 2 samples, got " +
                                       std::to_string(features.rows()));
    Tensor stats = batch_stats(features);
    Tensor mean_row = slice_rows(stats, 0, 1);
    Tensor var_row = clamp_min(slice_rows(stats, 1, 2), eps);
    return concat_rows(mean_row, var_row);
}

Tensor interpolate_stats(double t, const Tensor& g, const Tensor& i) {
    if (!(t >= 0.0 && t <= 1.0))
        fail(ErrorCategory::Param, "interpolate_stats: t must lie in [0,1], got " + std::to_string(t));
    if (!(g.shape() == i.shape()) || g.rows() != 2)
        fail(ErrorCategory::Shape, "interpolate_stats: expected matching 2xd stats, got " +
                                       shape_str(g.shape()) + " and " + shape_str(i.shape()));
    return add(scale(g, 1.0 - t), scale(i, t));
}

Tensor standardize(const Tensor& z, const Tensor& stats) {
    if (stats.rows() != 2 || stats.cols() != z.cols())
        fail(ErrorCategory::Shape, "standardize: stats " + shape_str(stats.shape()) + " vs batch " +
                                       shape_str(z.shape()));
    Tensor mean_row = slice_rows(stats, 0, 1);
    Tensor sd_row = sqrt_(slice_rows(stats, 1, 2));
    return div_rowvec(sub_rowvec(z, mean_row), sd_row);
}

Tensor recolor(const Tensor& z, const Tensor& stats) {
    if (stats.rows() != 2 || stats.cols() != z.cols())
        fail(ErrorCategory::Shape, "recolor: stats " + shape_str(stats.shape()) + " vs batch " +
                                       shape_str(z.shape()));
    Tensor mean_row = slice_rows(stats, 0, 1);
    Tensor sd_row = sqrt_(slice_rows(stats, 1, 2));
    return add_rowvec(mul_rowvec(z, sd_row), mean_row);
}

Tensor entangle(const Tensor& z_tilde, const Tensor& stats) {
    if (stats.rows() != 2)
        fail(ErrorCategory::Shape, "entangle: stats must be 2xd, got " + shape_str(stats.shape()));
    const std::size_t d = stats.cols();
    if (z_tilde.cols() != 2 * d)
        fail(ErrorCategory::Shape, "entangle: batch width " + std::to_string(z_tilde.cols()) +
                                       " is not twice the stats dim " + std::to_string(d));
    Tensor left = recolor(slice_cols(z_tilde, 0, d), stats);
    Tensor right = recolor(slice_cols(z_tilde, d, 2 * d), stats);
    return concat_cols(left, right);
}

Tensor block_product(const Tensor& stats) {
    if (stats.rows() != 2)
        fail(ErrorCategory::Shape, "block_product: stats must be 2xd, got " + shape_str(stats.shape()));
    return concat_cols(stats, stats);
}

Tensor gaussian_kl_graph(const Tensor& p, const Tensor& q) {
    if (!(p.shape() == q.shape()) || p.rows() != 2)
        fail(ErrorCategory::Shape, "gaussian_kl_graph: expected matching 2xd stats, got " +
                                       shape_str(p.shape()) + " and " + shape_str(q.shape()));
    Tensor pm = slice_rows(p, 0, 1), pv = slice_rows(p, 1, 2);
    Tensor qm = slice_rows(q, 0, 1), qv = slice_rows(q, 1, 2);
    Tensor dm = sub(pm, qm);
    Tensor term = add(sub(log_(qv), log_(pv)), div(add(pv, mul(dm, dm)), qv));
    Tensor summed = sum(add_scalar(term, -1.0));
    return scale(summed, 0.5);
}

} // namespace survgen
