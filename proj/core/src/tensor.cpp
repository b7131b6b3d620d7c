#include "survgen/tensor.hpp"

#include "survgen/errors.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace survgen {

namespace {

std::uint64_t next_seq() {
    static std::uint64_t counter = 0;
    return ++counter;
}

void require_shape(bool ok, const std::string& msg) {
    if (!ok) fail(ErrorCategory::Shape, msg);
}

double stable_softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

std::string shape_str(const Shape& s) {
    return std::to_string(s.rows) + "x" + std::to_string(s.cols);
}

namespace detail {

void Node::ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

} // namespace detail

Tensor::Tensor(Shape shape, std::vector<double> value, bool requires_grad) {
    if (value.size() != shape.size())
        fail(ErrorCategory::Shape, "tensor: value has " + std::to_string(value.size()) +
                                       " entries for shape " + shape_str(shape));
    node_ = std::make_shared<detail::Node>();
    node_->shape = shape;
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
    node_->is_leaf = true;
    node_->seq = next_seq();
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
    return Tensor(Shape{rows, cols}, std::vector<double>(rows * cols, 0.0), requires_grad);
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double v, bool requires_grad) {
    return Tensor(Shape{rows, cols}, std::vector<double>(rows * cols, v), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return Tensor(Shape{1, 1}, std::vector<double>{v}, requires_grad);
}

Tensor Tensor::row(std::vector<double> v, bool requires_grad) {
    const std::size_t n = v.size();
    return Tensor(Shape{1, n}, std::move(v), requires_grad);
}

const Shape& Tensor::shape() const {
    if (!node_) fail(ErrorCategory::Shape, "tensor: undefined handle");
    return node_->shape;
}

const std::vector<double>& Tensor::value() const {
    if (!node_) fail(ErrorCategory::Shape, "tensor: undefined handle");
    return node_->value;
}

std::vector<double>& Tensor::mutable_value() {
    if (!node_) fail(ErrorCategory::Shape, "tensor: undefined handle");
    if (!node_->is_leaf)
        fail(ErrorCategory::Param, "tensor: only leaf values may be mutated in place");
    return node_->value;
}

const std::vector<double>& Tensor::grad() const {
    if (!node_) fail(ErrorCategory::Shape, "tensor: undefined handle");
    node_->ensure_grad();
    return node_->grad;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::is_leaf() const { return node_ && node_->is_leaf; }

double Tensor::at(std::size_t r, std::size_t c) const {
    const Shape& s = shape();
    if (r >= s.rows || c >= s.cols)
        fail(ErrorCategory::Shape, "tensor: index (" + std::to_string(r) + "," +
                                       std::to_string(c) + ") out of range for " + shape_str(s));
    return node_->value[r * s.cols + c];
}

double Tensor::item() const {
    if (shape().size() != 1)
        fail(ErrorCategory::Shape, "tensor: item() on non-scalar " + shape_str(shape()));
    return node_->value[0];
}

void Tensor::zero_grad() {
    if (!node_) return;
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
    if (!node_) fail(ErrorCategory::Shape, "backward: undefined tensor");
    if (node_->shape.size() != 1)
        fail(ErrorCategory::Shape, "backward: loss must be scalar, got " + shape_str(node_->shape));

    // Reachable subgraph, then decreasing creation order. Creation order is a
    // valid topological order because an op's parents always predate it.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<detail::Node*> stack{node_.get()};
    seen.insert(node_.get());
    while (!stack.empty()) {
        detail::Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(),
              [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

    // Intermediate gradients are per-call scratch; leaf gradients accumulate
    // across calls until zero_grad.
    for (detail::Node* n : order) {
        if (n->is_leaf) {
            n->ensure_grad();
        } else {
            n->grad.assign(n->value.size(), 0.0);
        }
    }
    node_->grad[0] += 1.0;

    for (detail::Node* n : order) {
        if (!n->requires_grad || !n->backward_fn) continue;
        n->backward_fn(*n);
    }
}

Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backward_fn) {
    if (value.size() != shape.size())
        fail(ErrorCategory::Shape, "op: value size does not match shape " + shape_str(shape));
    auto node = std::make_shared<detail::Node>();
    node->shape = shape;
    node->value = std::move(value);
    node->is_leaf = false;
    node->seq = next_seq();
    node->parents.reserve(parents.size());
    bool rg = false;
    for (const Tensor& p : parents) {
        if (!p.defined()) fail(ErrorCategory::Shape, "op: undefined parent tensor");
        node->parents.push_back(p.node());
        rg = rg || p.requires_grad();
    }
    node->requires_grad = rg;
    if (rg) node->backward_fn = std::move(backward_fn);
    return Tensor(std::move(node));
}

namespace {

// Accumulate into a parent's gradient if anything upstream wants it.
bool wants_grad(const std::shared_ptr<detail::Node>& p) {
    if (!p->requires_grad) return false;
    p->ensure_grad();
    return true;
}

} // namespace

// --- elementwise binary -----------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_shape(a.shape() == b.shape(),
                  "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
        for (int k = 0; k < 2; ++k) {
            auto& p = n.parents[k];
            if (!wants_grad(p)) continue;
            for (std::size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_shape(a.shape() == b.shape(),
                  "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
        if (wants_grad(n.parents[0]))
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i];
        if (wants_grad(n.parents[1]))
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[1]->grad[i] -= n.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_shape(a.shape() == b.shape(),
                  "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
        const auto& av = n.parents[0]->value;
        const auto& bv = n.parents[1]->value;
        if (wants_grad(n.parents[0]))
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i] * bv[i];
        if (wants_grad(n.parents[1]))
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[1]->grad[i] += n.grad[i] * av[i];
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_shape(a.shape() == b.shape(),
                  "div: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
        const auto& av = n.parents[0]->value;
        const auto& bv = n.parents[1]->value;
        if (wants_grad(n.parents[0]))
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i] / bv[i];
        if (wants_grad(n.parents[1]))
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                n.parents[1]->grad[i] -= n.grad[i] * av[i] / (bv[i] * bv[i]);
    });
}

// --- scalar-constant ops ----------------------------------------------------

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + s;
    return make_op(a.shape(), std::move(out), {a}, [](detail::Node& n) {
        if (!wants_grad(n.parents[0])) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i];
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * s;
    return make_op(a.shape(), std::move(out), {a}, [s](detail::Node& n) {
        if (!wants_grad(n.parents[0])) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += s * n.grad[i];
    });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor smul(const Tensor& s, const Tensor& a) {
    require_shape(s.shape().size() == 1, "smul: first argument must be scalar, got " + shape_str(s.shape()));
    const double sv = s.value()[0];
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * a.value()[i];
    return make_op(a.shape(), std::move(out), {s, a}, [](detail::Node& n) {
        const double sv = n.parents[0]->value[0];
        const auto& av = n.parents[1]->value;
        if (wants_grad(n.parents[0])) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i] * av[i];
            n.parents[0]->grad[0] += acc;
        }
        if (wants_grad(n.parents[1]))
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[1]->grad[i] += sv * n.grad[i];
    });
}

// --- elementwise unary ------------------------------------------------------

Tensor exp_(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.value()[i]);
    return make_op(a.shape(), std::move(out), {a}, [](detail::Node& n) {
        if (!wants_grad(n.parents[0])) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            n.parents[0]->grad[i] += n.grad[i] * n.value[i];
    });
}

Tensor log_(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a.value()[i];
        if (!(x > 0.0)) fail(ErrorCategory::Numeric, "log: non-positive input " + std::to_string(x));
        out[i] = std::log(x);
    }
    return make_op(a.shape(), std::move(out), {a}, [](detail::Node& n) {
        if (!wants_grad(n.parents[0])) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            n.parents[0]->grad[i] += n.grad[i] / n.parents[0]->value[i];
    });
}

Tensor sqrt_(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a.value()[i];
        if (!(x >= 0.0)) fail(ErrorCategory::Numeric, "sqrt: negative input " + std::to_string(x));
        out[i] = std::sqrt(x);
    }
    return make_op(a.shape(), std::move(out), {a}, [](detail::Node& n) {
        if (!wants_grad(n.parents[0])) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            n.parents[0]->grad[i] += n.grad[i] * 0.5 / n.value[i];
    });
}

Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(a.value()[i]);
    return make_op(a.shape(), std::move(out), {a}, [](detail::Node& n) {
        if (!wants_grad(n.parents[0])) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            n.parents[0]->grad[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
    });
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] > 0.0 ? a.value()[i] : 0.0;
    return make_op(a.shape(), std::move(out), {a}, [](detail::Node& n) {
        if (!wants_grad(n.parents[0])) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            if (n.parents[0]->value[i] > 0.0) n.parents[0]->grad[i] += n.grad[i];
    });
}

Tensor softplus(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_softplus(a.value()[i]);
    return make_op(a.shape(), std::move(out), {a}, [](detail::Node& n) {
        if (!wants_grad(n.parents[0])) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            n.parents[0]->grad[i] += n.grad[i] * stable_sigmoid(n.parents[0]->value[i]);
    });
}

Tensor clamp_min(const Tensor& a, double lo) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a.value()[i], lo);
    return make_op(a.shape(), std::move(out), {a}, [lo](detail::Node& n) {
        if (!wants_grad(n.parents[0])) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            if (n.parents[0]->value[i] >= lo) n.parents[0]->grad[i] += n.grad[i];
    });
}

// --- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_shape(a.cols() == b.rows(), "matmul: inner dimensions " + shape_str(a.shape()) +
                                            " * " + shape_str(b.shape()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n, 0.0);
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
        }
    return make_op(Shape{m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& node) {
        const auto& av = node.parents[0]->value;
        const auto& bv = node.parents[1]->value;
        const auto& g = node.grad;
        if (wants_grad(node.parents[0])) {
            auto& da = node.parents[0]->grad;
            // dA = g * B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double gij = g[i * n + j];
                    if (gij == 0.0) continue;
                    for (std::size_t p = 0; p < k; ++p) da[i * k + p] += gij * bv[p * n + j];
                }
        }
        if (wants_grad(node.parents[1])) {
            auto& db = node.parents[1]->grad;
            // dB = A^T * g
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = av[i * k + p];
                    if (aip == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j) db[p * n + j] += aip * g[i * n + j];
                }
        }
    });
}

Tensor transpose(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.value()[i * c + j];
    return make_op(Shape{c, r}, std::move(out), {a}, [r, c](detail::Node& n) {
        if (!wants_grad(n.parents[0])) return;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) n.parents[0]->grad[i * c + j] += n.grad[j * r + i];
    });
}

// --- shape ops --------------------------------------------------------------

Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
    require_shape(rows * cols == a.size(), "reshape: cannot view " + shape_str(a.shape()) +
                                               " as " + std::to_string(rows) + "x" + std::to_string(cols));
    return make_op(Shape{rows, cols}, a.value(), {a}, [](detail::Node& n) {
        if (!wants_grad(n.parents[0])) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i];
    });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    require_shape(a.cols() == b.cols(), "concat_rows: column mismatch " + shape_str(a.shape()) +
                                            " vs " + shape_str(b.shape()));
    std::vector<double> out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.value().begin(), a.value().end());
    out.insert(out.end(), b.value().begin(), b.value().end());
    const std::size_t na = a.size();
    return make_op(Shape{a.rows() + b.rows(), a.cols()}, std::move(out), {a, b},
                   [na](detail::Node& n) {
                       if (wants_grad(n.parents[0]))
                           for (std::size_t i = 0; i < na; ++i) n.parents[0]->grad[i] += n.grad[i];
                       if (wants_grad(n.parents[1]))
                           for (std::size_t i = na; i < n.grad.size(); ++i)
                               n.parents[1]->grad[i - na] += n.grad[i];
                   });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_shape(a.rows() == b.rows(), "concat_cols: row mismatch " + shape_str(a.shape()) +
                                            " vs " + shape_str(b.shape()));
    const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
    std::vector<double> out(r * (ca + cb));
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < ca; ++j) out[i * (ca + cb) + j] = a.value()[i * ca + j];
        for (std::size_t j = 0; j < cb; ++j) out[i * (ca + cb) + ca + j] = b.value()[i * cb + j];
    }
    return make_op(Shape{r, ca + cb}, std::move(out), {a, b}, [r, ca, cb](detail::Node& n) {
        if (wants_grad(n.parents[0]))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < ca; ++j)
                    n.parents[0]->grad[i * ca + j] += n.grad[i * (ca + cb) + j];
        if (wants_grad(n.parents[1]))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < cb; ++j)
                    n.parents[1]->grad[i * cb + j] += n.grad[i * (ca + cb) + ca + j];
    });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
    require_shape(begin < end && end <= a.rows(),
                  "slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                      ") on " + shape_str(a.shape()));
    const std::size_t c = a.cols();
    std::vector<double> out(a.value().begin() + static_cast<std::ptrdiff_t>(begin * c),
                            a.value().begin() + static_cast<std::ptrdiff_t>(end * c));
    return make_op(Shape{end - begin, c}, std::move(out), {a}, [begin, c](detail::Node& n) {
        if (!wants_grad(n.parents[0])) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            n.parents[0]->grad[begin * c + i] += n.grad[i];
    });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
    require_shape(begin < end && end <= a.cols(),
                  "slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                      ") on " + shape_str(a.shape()));
    const std::size_t r = a.rows(), c = a.cols(), w = end - begin;
    std::vector<double> out(r * w);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a.value()[i * c + begin + j];
    return make_op(Shape{r, w}, std::move(out), {a}, [r, c, begin, w](detail::Node& n) {
        if (!wants_grad(n.parents[0])) return;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j)
                n.parents[0]->grad[i * c + begin + j] += n.grad[i * w + j];
    });
}

// --- reductions -------------------------------------------------------------

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.value()) acc += v;
    return make_op(Shape{1, 1}, {acc}, {a}, [](detail::Node& n) {
        if (!wants_grad(n.parents[0])) return;
        for (double& g : n.parents[0]->grad) g += n.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.size());
    double acc = 0.0;
    for (double v : a.value()) acc += v;
    return make_op(Shape{1, 1}, {acc * inv}, {a}, [inv](detail::Node& n) {
        if (!wants_grad(n.parents[0])) return;
        for (double& g : n.parents[0]->grad) g += n.grad[0] * inv;
    });
}

Tensor mean_axis0(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    require_shape(r > 0, "mean_axis0: empty tensor");
    std::vector<double> out(c, 0.0);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += a.value()[i * c + j];
    const double inv = 1.0 / static_cast<double>(r);
    for (double& v : out) v *= inv;
    return make_op(Shape{1, c}, std::move(out), {a}, [r, c, inv](detail::Node& n) {
        if (!wants_grad(n.parents[0])) return;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) n.parents[0]->grad[i * c + j] += n.grad[j] * inv;
    });
}

Tensor softmax_rows(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        double mx = a.value()[i * c];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, a.value()[i * c + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out[i * c + j] = std::exp(a.value()[i * c + j] - mx);
            z += out[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
    }
    return make_op(Shape{r, c}, std::move(out), {a}, [r, c](detail::Node& n) {
        if (!wants_grad(n.parents[0])) return;
        for (std::size_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += n.grad[i * c + j] * n.value[i * c + j];
            for (std::size_t j = 0; j < c; ++j)
                n.parents[0]->grad[i * c + j] += n.value[i * c + j] * (n.grad[i * c + j] - dot);
        }
    });
}

Tensor l2_norm(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.value()) acc += v * v;
    const double norm = std::sqrt(acc);
    return make_op(Shape{1, 1}, {norm}, {a}, [](detail::Node& n) {
        if (!wants_grad(n.parents[0])) return;
        const double norm = n.value[0];
        if (norm == 0.0) return; // zero subgradient at the origin
        for (std::size_t i = 0; i < n.parents[0]->value.size(); ++i)
            n.parents[0]->grad[i] += n.grad[0] * n.parents[0]->value[i] / norm;
    });
}

// --- row-vector broadcasting ------------------------------------------------

namespace {

void require_rowvec(const Tensor& a, const Tensor& b, const char* op) {
    require_shape(b.rows() == 1 && b.cols() == a.cols(),
                  std::string(op) + ": row vector must be 1x" + std::to_string(a.cols()) +
                      ", got " + shape_str(b.shape()));
}

} // namespace

Tensor add_rowvec(const Tensor& a, const Tensor& b) {
    require_rowvec(a, b, "add_rowvec");
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.value()[i * c + j] + b.value()[j];
    return make_op(a.shape(), std::move(out), {a, b}, [r, c](detail::Node& n) {
        if (wants_grad(n.parents[0]))
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i];
        if (wants_grad(n.parents[1]))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) n.parents[1]->grad[j] += n.grad[i * c + j];
    });
}

Tensor sub_rowvec(const Tensor& a, const Tensor& b) {
    require_rowvec(a, b, "sub_rowvec");
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.value()[i * c + j] - b.value()[j];
    return make_op(a.shape(), std::move(out), {a, b}, [r, c](detail::Node& n) {
        if (wants_grad(n.parents[0]))
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i];
        if (wants_grad(n.parents[1]))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) n.parents[1]->grad[j] -= n.grad[i * c + j];
    });
}

Tensor mul_rowvec(const Tensor& a, const Tensor& b) {
    require_rowvec(a, b, "mul_rowvec");
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.value()[i * c + j] * b.value()[j];
    return make_op(a.shape(), std::move(out), {a, b}, [r, c](detail::Node& n) {
        const auto& av = n.parents[0]->value;
        const auto& bv = n.parents[1]->value;
        if (wants_grad(n.parents[0]))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    n.parents[0]->grad[i * c + j] += n.grad[i * c + j] * bv[j];
        if (wants_grad(n.parents[1]))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    n.parents[1]->grad[j] += n.grad[i * c + j] * av[i * c + j];
    });
}

Tensor div_rowvec(const Tensor& a, const Tensor& b) {
    require_rowvec(a, b, "div_rowvec");
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.value()[i * c + j] / b.value()[j];
    return make_op(a.shape(), std::move(out), {a, b}, [r, c](detail::Node& n) {
        const auto& av = n.parents[0]->value;
        const auto& bv = n.parents[1]->value;
        if (wants_grad(n.parents[0]))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    n.parents[0]->grad[i * c + j] += n.grad[i * c + j] / bv[j];
        if (wants_grad(n.parents[1]))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    n.parents[1]->grad[j] -= n.grad[i * c + j] * av[i * c + j] / (bv[j] * bv[j]);
    });
}

// --- batch statistics -------------------------------------------------------

Tensor batch_stats(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    require_shape(r > 0, "batch_stats: empty batch");
    std::vector<double> out(2 * c, 0.0);
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t j = 0; j < c; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < r; ++i) m += a.value()[i * c + j];
        m *= inv;
        double v = 0.0;
        for (std::size_t i = 0; i < r; ++i) {
            const double d = a.value()[i * c + j] - m;
            v += d * d;
        }
        out[j] = m;
        out[c + j] = v * inv;
    }
    // d mean_j / d a_ij = 1/n; d var_j / d a_ij = 2 (a_ij - mean_j) / n, the
    // mean-coupling term cancels because centered deviations sum to zero.
    return make_op(Shape{2, c}, std::move(out), {a}, [r, c, inv](detail::Node& n) {
        if (!wants_grad(n.parents[0])) return;
        for (std::size_t j = 0; j < c; ++j) {
            const double gm = n.grad[j];
            const double gv = n.grad[c + j];
            const double m = n.value[j];
            for (std::size_t i = 0; i < r; ++i)
                n.parents[0]->grad[i * c + j] +=
                    gm * inv + gv * 2.0 * (n.parents[0]->value[i * c + j] - m) * inv;
        }
    });
}

// --- gradient checking ------------------------------------------------------

GradientCheckResult check_gradients(const std::function<Tensor()>& f,
                                    const std::vector<Tensor>& leaves, double tolerance) {
    for (const Tensor& leaf : leaves) {
        if (!leaf.is_leaf() || !leaf.requires_grad())
            fail(ErrorCategory::Param, "check_gradients: all checked tensors must be leaves with gradients");
        const_cast<Tensor&>(leaf).zero_grad();
    }
    Tensor loss = f();
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (const Tensor& leaf : leaves) analytic.push_back(leaf.grad());

    GradientCheckResult res;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& values = const_cast<Tensor&>(leaves[li]).mutable_value();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double x = values[i];
            const double eps = 1e-5 * std::max(1.0, std::abs(x));
            values[i] = x + eps;
            const double fp = f().item();
            values[i] = x - eps;
            const double fm = f().item();
            values[i] = x;
            const double fd = (fp - fm) / (2.0 * eps);
            const double ad = analytic[li][i];
            const double abs_err = std::abs(fd - ad);
            const double rel_err = abs_err / std::max({std::abs(fd), std::abs(ad), 1e-8});
            res.max_abs_error = std::max(res.max_abs_error, abs_err);
            res.max_rel_error = std::max(res.max_rel_error, rel_err);
            ++res.checked;
        }
    }
    res.passed = res.max_rel_error <= tolerance;
    return res;
}

} // namespace survgen
