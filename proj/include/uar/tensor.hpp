#pragma once

// Reverse-mode automatic differentiation over dense float64 arrays.
//
// Every differentiable operation records a node on the Graph of its inputs.
// Backward rules are written in terms of the same public operations, so when a
// graph has second-order recording enabled, the backward pass itself appends
// differentiable nodes and gradients may be differentiated again.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace uar::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

class Graph;

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double value);
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), 0.0); }

    bool defined() const noexcept { return data_ != nullptr; }
    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_ ? data_->size() : 0; }

    std::span<const double> data() const noexcept {
        return data_ ? std::span<const double>(*data_) : std::span<const double>();
    }
    // Writes through to every Tensor sharing this buffer.
    std::span<double> mutable_data() noexcept {
        return data_ ? std::span<double>(*data_) : std::span<double>();
    }
    double operator[](std::size_t i) const { return (*data_)[i]; }
    double item() const;

    Graph* graph() const noexcept { return graph_; }
    std::int64_t node() const noexcept { return node_; }
    bool on_graph() const noexcept { return graph_ != nullptr; }

    // Same buffer, detached from any graph.
    Tensor detach() const;
    // Fresh buffer copy, detached.
    Tensor clone() const;

    bool all_finite() const noexcept;

private:
    friend class Graph;
    Shape shape_;
    std::shared_ptr<std::vector<double>> data_;
    Graph* graph_ = nullptr;
    std::int64_t node_ = -1;
};

enum class OpKind {
    leaf,
    add,
    sub,
    mul,
    scale,
    square,
    negate,
    add_scalar,
    mul_scalar,
    reciprocal,
    sum,
    mean,
    l2norm,
    broadcast,
    reshape,
    conv2d,
    conv2d_input_grad,
    conv2d_weight_grad,
    channel_sum,
    channel_broadcast,
    matvec,
    matvec_t,
    outer,
    leaky_mask,
    prelu_mask,
    neg_channel_sum,
    neg_channel_broadcast,
    avgpool_global,
    concat,
    slice,
    embed,
    linear_op,
};

const char* op_name(OpKind kind) noexcept;

struct GraphOptions {
    // Backward passes record differentiable nodes (double backprop).
    bool second_order = false;
    // Every recorded output is checked for NaN/Inf.
    bool check_finite = false;
};

/// Append-only record of a computation. Parent ids always precede the node.
/// Confined to one thread; tensors referencing a graph must not outlive it.
class Graph {
public:
    using Needs = std::vector<bool>;
    // Receives the node output and the upstream gradient; returns one gradient
    // per input (an undefined Tensor means "no contribution").
    using BackwardFn =
        std::function<std::vector<Tensor>(const Tensor& out, const Tensor& grad, const Needs& needs)>;

    explicit Graph(GraphOptions options = {}) : options_(options) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    const GraphOptions& options() const noexcept { return options_; }
    bool second_order() const noexcept { return options_.second_order; }
    bool recording() const noexcept { return recording_; }
    std::size_t size() const noexcept { return nodes_.size(); }
    OpKind kind(std::size_t node) const { return nodes_.at(node).kind; }
    const std::vector<std::int64_t>& parents(std::size_t node) const { return nodes_.at(node).parents; }
    // k-th input tensor of a node, as passed to the operation.
    const Tensor& input(std::size_t node, std::size_t k) const { return nodes_.at(node).inputs.at(k); }

    // Registers `value` as a differentiable leaf (shares its buffer).
    Tensor variable(const Tensor& value);

    // d root / d w for every w. `root` must hold one element and be on this
    // graph. A requested tensor that does not influence the root gets zeros.
    // With create_graph, the returned gradients are nodes of this graph.
    std::vector<Tensor> gradients(const Tensor& root, std::span<const Tensor> wrt, bool create_graph);
    std::vector<Tensor> gradients(const Tensor& root, std::span<const Tensor> wrt) {
        return gradients(root, wrt, options_.second_order);
    }

    // Used by operations; records `out` as a node if recording is active.
    Tensor record(OpKind kind, Tensor out, const std::vector<Tensor>& inputs, BackwardFn backward);

private:
    struct Node {
        OpKind kind;
        std::vector<std::int64_t> parents;
        std::vector<Tensor> inputs;
        Tensor output;
        BackwardFn backward;
    };

    GraphOptions options_;
    bool recording_ = true;
    std::vector<Node> nodes_;
};

// Records `out` on the graph shared by `inputs`, if any input lives on a
// recording graph; otherwise returns `out` unchanged. Throws if inputs live on
// different graphs.
Tensor record_op(OpKind kind, Tensor out, const std::vector<Tensor>& inputs, Graph::BackwardFn backward);

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor square(const Tensor& a);
Tensor negate(const Tensor& a);
Tensor add_scalar(const Tensor& a, double c);
// a * s where s holds a single (differentiable) element.
Tensor mul_scalar(const Tensor& a, const Tensor& s);
Tensor reciprocal(const Tensor& a);

// ---- reductions (results have shape {}) ------------------------------------

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// sqrt(sum a^2); the gradient at a == 0 is defined as zero.
Tensor l2norm(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);

Tensor broadcast(const Tensor& s, const Shape& shape);
Tensor reshape(const Tensor& a, const Shape& shape);

// ---- convolution -----------------------------------------------------------

struct ConvShape {
    std::size_t in_channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;

    std::size_t out_height() const noexcept { return (height + 2 * padding - kernel) / stride + 1; }
    std::size_t out_width() const noexcept { return (width + 2 * padding - kernel) / stride + 1; }
};

// Cross-correlation with zero padding. input [C_in,H,W], weights
// [C_out,C_in,k,k], bias [C_out] (may be undefined). Output spatial size is
// floor((H + 2p - k) / stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride,
              std::size_t padding);
// Transposed correlation: gradient of conv2d w.r.t. its input.
Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& weights, const ConvShape& cs);
// Gradient of conv2d w.r.t. its weights.
Tensor conv2d_weight_grad(const Tensor& input, const Tensor& grad_out, const ConvShape& cs);
Tensor channel_sum(const Tensor& a);
Tensor channel_broadcast(const Tensor& v, std::size_t height, std::size_t width);

// ---- dense -----------------------------------------------------------------

Tensor matvec(const Tensor& w, const Tensor& x);
Tensor matvec_t(const Tensor& w, const Tensor& g);
Tensor outer(const Tensor& a, const Tensor& b);
// w [m,n] * x [n] + b [m]
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

// ---- activations -----------------------------------------------------------

// g where ref >= 0, slope * g elsewhere. Not differentiated w.r.t. ref.
Tensor leaky_mask(const Tensor& g, const Tensor& ref, double slope);
Tensor leaky_relu(const Tensor& a, double slope);
// g where ref >= 0, slope[c] * g elsewhere; ref is [C,...].
Tensor prelu_mask(const Tensor& g, const Tensor& ref, const Tensor& slope);
Tensor prelu(const Tensor& a, const Tensor& slope);
// Per-channel sum of u over positions where ref < 0.
Tensor neg_channel_sum(const Tensor& u, const Tensor& ref);
// v[c] at positions where ref < 0, zero elsewhere.
Tensor neg_channel_broadcast(const Tensor& v, const Tensor& ref);

Tensor avgpool_global(const Tensor& a);

// ---- layout ----------------------------------------------------------------

// Concatenation along the leading (channel) axis.
Tensor concat(const std::vector<Tensor>& parts);
Tensor slice(const Tensor& a, std::size_t first, std::size_t count);
// Places a into a zero tensor with `total` leading entries, starting at first.
Tensor embed(const Tensor& a, std::size_t total, std::size_t first);

// ---- linear operators ------------------------------------------------------

class LinearOperator {
public:
    virtual ~LinearOperator() = default;
    virtual Shape domain_shape() const = 0;
    virtual Shape range_shape() const = 0;
    virtual void apply(std::span<const double> in, std::span<double> out) const = 0;
    virtual void apply_adjoint(std::span<const double> in, std::span<double> out) const = 0;
};

// op(x), or op^*(x) when adjoint is set. Differentiable; the backward of one
// is the other.
Tensor apply_linear(const Tensor& x, std::shared_ptr<const LinearOperator> op, bool adjoint = false);

}  // namespace uar::ad
