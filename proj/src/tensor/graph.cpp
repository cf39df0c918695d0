#include "uar/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace uar::ad {

std::size_t numel(const Shape& shape) noexcept {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(std::make_shared<std::vector<double>>(numel(shape_), fill)) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
    if (values.size() != numel(shape_)) {
        throw std::invalid_argument("Tensor: buffer length " + std::to_string(values.size()) +
                                    " does not match shape " + shape_str(shape_));
    }
    data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

double Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape_));
    return (*data_)[0];
}

Tensor Tensor::detach() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = data_;
    return t;
}

Tensor Tensor::clone() const {
    if (!data_) return {};
    return Tensor(shape_, *data_);
}

bool Tensor::all_finite() const noexcept {
    for (double v : data())
        if (!std::isfinite(v)) return false;
    return true;
}

const char* op_name(OpKind kind) noexcept {
    switch (kind) {
        case OpKind::leaf: return "leaf";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::scale: return "scale";
        case OpKind::square: return "square";
        case OpKind::negate: return "negate";
        case OpKind::add_scalar: return "add_scalar";
        case OpKind::mul_scalar: return "mul_scalar";
        case OpKind::reciprocal: return "reciprocal";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::l2norm: return "l2norm";
        case OpKind::broadcast: return "broadcast";
        case OpKind::reshape: return "reshape";
        case OpKind::conv2d: return "conv2d";
        case OpKind::conv2d_input_grad: return "conv2d_input_grad";
        case OpKind::conv2d_weight_grad: return "conv2d_weight_grad";
        case OpKind::channel_sum: return "channel_sum";
        case OpKind::channel_broadcast: return "channel_broadcast";
        case OpKind::matvec: return "matvec";
        case OpKind::matvec_t: return "matvec_t";
        case OpKind::outer: return "outer";
        case OpKind::leaky_mask: return "leaky_mask";
        case OpKind::prelu_mask: return "prelu_mask";
        case OpKind::neg_channel_sum: return "neg_channel_sum";
        case OpKind::neg_channel_broadcast: return "neg_channel_broadcast";
        case OpKind::avgpool_global: return "avgpool_global";
        case OpKind::concat: return "concat";
        case OpKind::slice: return "slice";
        case OpKind::embed: return "embed";
        case OpKind::linear_op: return "linear_op";
    }
    return "?";
}

Tensor Graph::variable(const Tensor& value) {
    if (!value.defined()) throw std::invalid_argument("Graph::variable: undefined tensor");
    return record(OpKind::leaf, value.detach(), {}, nullptr);
}

Tensor Graph::record(OpKind kind, Tensor out, const std::vector<Tensor>& inputs, BackwardFn backward) {
    if (options_.check_finite && !out.all_finite()) {
        throw std::runtime_error(std::string("non-finite value produced by ") + op_name(kind));
    }
    Node node;
    node.kind = kind;
    node.parents.reserve(inputs.size());
    for (const auto& in : inputs) {
        node.parents.push_back(in.graph_ == this ? in.node_ : -1);
    }
    node.inputs = inputs;
    node.backward = std::move(backward);
    out.graph_ = this;
    out.node_ = static_cast<std::int64_t>(nodes_.size());
    node.output = out;
    nodes_.push_back(std::move(node));
    return out;
}

namespace {

class RecordingGuard {
public:
    RecordingGuard(bool& flag, bool value) : flag_(flag), saved_(flag) { flag_ = value; }
    ~RecordingGuard() { flag_ = saved_; }
    RecordingGuard(const RecordingGuard&) = delete;
    RecordingGuard& operator=(const RecordingGuard&) = delete;

private:
    bool& flag_;
    bool saved_;
};

}  // namespace

std::vector<Tensor> Graph::gradients(const Tensor& root, std::span<const Tensor> wrt, bool create_graph) {
    if (root.graph() != this) throw std::invalid_argument("gradients: root is not on this graph");
    if (root.size() != 1) throw std::invalid_argument("gradients: root must hold a single element");

    const auto root_id = static_cast<std::size_t>(root.node());
    const std::size_t count = root_id + 1;

    // reach[i]: node i depends on one of the requested tensors.
    std::vector<char> reach(count, 0);
    for (const auto& w : wrt) {
        if (w.graph() == this && static_cast<std::size_t>(w.node()) < count) reach[w.node()] = 1;
    }
    for (std::size_t i = 0; i < count; ++i) {
        if (reach[i]) continue;
        for (auto p : nodes_[i].parents) {
            if (p >= 0 && reach[p]) {
                reach[i] = 1;
                break;
            }
        }
    }

    std::vector<Tensor> grads(count);
    {
        RecordingGuard guard(recording_, create_graph);
        grads[root_id] = Tensor::ones(root.shape());
        for (std::size_t i = root_id + 1; i-- > 0;) {
            if (!reach[i] || !grads[i].defined()) continue;
            const Node& node = nodes_[i];
            if (!node.backward) continue;
            Needs needs(node.parents.size(), false);
            bool any = false;
            for (std::size_t k = 0; k < needs.size(); ++k) {
                const auto p = node.parents[k];
                needs[k] = p >= 0 && reach[p];
                any = any || needs[k];
            }
            if (!any) continue;
            // Recording may append to nodes_; copy what the call needs.
            const BackwardFn fn = node.backward;
            const Tensor out = node.output;
            const std::vector<std::int64_t> parents = node.parents;
            std::vector<Tensor> parent_grads = fn(out, grads[i], needs);
            for (std::size_t k = 0; k < parents.size() && k < parent_grads.size(); ++k) {
                if (!needs[k] || !parent_grads[k].defined()) continue;
                auto& slot = grads[parents[k]];
                slot = slot.defined() ? add(slot, parent_grads[k]) : parent_grads[k];
            }
            bool requested = false;
            for (const auto& w : wrt) requested = requested || (w.graph() == this && w.node() == static_cast<std::int64_t>(i));
            if (!requested) grads[i] = Tensor();
        }
    }

    std::vector<Tensor> result;
    result.reserve(wrt.size());
    for (const auto& w : wrt) {
        if (w.graph() == this && static_cast<std::size_t>(w.node()) < count && grads[w.node()].defined()) {
            result.push_back(grads[w.node()]);
        } else {
            result.push_back(Tensor::zeros_like(w));
        }
    }
    return result;
}

Tensor record_op(OpKind kind, Tensor out, const std::vector<Tensor>& inputs, Graph::BackwardFn backward) {
    Graph* graph = nullptr;
    for (const auto& in : inputs) {
        if (!in.graph()) continue;
        if (graph && graph != in.graph()) {
            throw std::invalid_argument(std::string(op_name(kind)) + ": inputs live on different graphs");
        }
        graph = in.graph();
    }
    if (!graph || !graph->recording()) return out;
    return graph->record(kind, std::move(out), inputs, std::move(backward));
}

}  // namespace uar::ad
