#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace survgen {

// Row-major 2-D shape. Scalars are 1x1, row vectors 1xc, column vectors rx1.
struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
    bool operator==(const Shape&) const = default;
};

std::string shape_str(const Shape& s);

class Tensor;

namespace detail {

// One node in the computation graph. Tensors share nodes, so a value produced
// once can feed any number of downstream ops; gradients accumulate additively.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool is_leaf = true;
    std::uint64_t seq = 0; // creation order; backward runs in decreasing seq
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad();
};

} // namespace detail

// Value-semantics handle to a graph node. Copying a Tensor copies the handle,
// not the data.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> value, bool requires_grad = false);

    static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
    static Tensor full(std::size_t rows, std::size_t cols, double v, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor row(std::vector<double> v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rows() const { return shape().rows; }
    std::size_t cols() const { return shape().cols; }
    std::size_t size() const { return shape().size(); }

    const std::vector<double>& value() const;
    std::vector<double>& mutable_value(); // leaf parameters only (optimizer updates)
    const std::vector<double>& grad() const;
    bool requires_grad() const;
    bool is_leaf() const;

    double at(std::size_t r, std::size_t c) const;
    double item() const; // scalar tensors only

    void zero_grad();

    // Runs reverse-mode accumulation from this scalar. Leaf gradients
    // accumulate across calls; intermediate gradients are reset per call.
    void backward() const;

    std::shared_ptr<detail::Node> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;

    friend Tensor make_op(Shape shape, std::vector<double> value,
                          std::vector<Tensor> parents,
                          std::function<void(detail::Node&)> backward_fn);
};

// --- graph construction -----------------------------------------------------

Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backward_fn);

// Elementwise binary ops; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Scalar (compile-time constant) variants.
Tensor add_scalar(const Tensor& a, double s);
Tensor scale(const Tensor& a, double s);
Tensor neg(const Tensor& a);

// Graph-scalar (1x1 tensor) times tensor; gradient flows into both.
Tensor smul(const Tensor& s, const Tensor& a);

// Elementwise unary ops.
Tensor exp_(const Tensor& a);
Tensor log_(const Tensor& a);
Tensor sqrt_(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Shape ops.
Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols);
Tensor concat_rows(const Tensor& a, const Tensor& b); // stack vertically
Tensor concat_cols(const Tensor& a, const Tensor& b); // stack horizontally
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_axis0(const Tensor& a); // 1 x cols row of column means

// Row-wise softmax with max subtraction.
Tensor softmax_rows(const Tensor& a);

// Euclidean norm of all entries, as a scalar. Zero input has zero subgradient.
Tensor l2_norm(const Tensor& a);

// Row-vector broadcasting: b must be 1 x a.cols; applied to every row of a.
Tensor add_rowvec(const Tensor& a, const Tensor& b);
Tensor sub_rowvec(const Tensor& a, const Tensor& b);
Tensor mul_rowvec(const Tensor& a, const Tensor& b);
Tensor div_rowvec(const Tensor& a, const Tensor& b);

// Per-column batch mean and biased (1/n) variance of an n x d matrix, as a
// single differentiable op returning a 2 x d tensor: row 0 mean, row 1 var.
Tensor batch_stats(const Tensor& a);

// --- gradient checking ------------------------------------------------------

struct GradientCheckResult {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t checked = 0;
    bool passed = false;
};

// Central finite differences of a scalar-valued function against reverse-mode
// gradients for every entry of every listed leaf. eps scales with |x|.
GradientCheckResult check_gradients(const std::function<Tensor()>& f,
                                    const std::vector<Tensor>& leaves,
                                    double tolerance);

} // namespace survgen
