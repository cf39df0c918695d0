#include <cmath>
#include <stdexcept>
#include <string>

#include "conv_kernels.hpp"
#include "uar/tensor.hpp"

namespace uar::ad {

namespace {

using Grads = std::vector<Tensor>;
using Needs = Graph::Needs;

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

void require_defined(const char* op, const Tensor& t) {
    require(t.defined(), std::string(op) + ": undefined input");
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    require_defined(op, a);
    require_defined(op, b);
    require(a.shape() == b.shape(),
            std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <class F>
Tensor map_unary(const Tensor& a, F f) {
    Tensor out(a.shape());
    auto src = a.data();
    auto dst = out.mutable_data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
    return out;
}

template <class F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
    Tensor out(a.shape());
    auto x = a.data();
    auto y = b.data();
    auto dst = out.mutable_data();
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
    return out;
}

// [C, rest...] -> (C, prod(rest))
std::pair<std::size_t, std::size_t> channel_split(const Tensor& t) {
    require(t.rank() >= 1, "channel op on rank-0 tensor");
    const std::size_t c = t.dim(0);
    return {c, c == 0 ? 0 : t.size() / c};
}

}  // namespace

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    return record_op(OpKind::add, map_binary(a, b, [](double x, double y) { return x + y; }), {a, b},
                     [](const Tensor&, const Tensor& g, const Needs&) { return Grads{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    return record_op(OpKind::sub, map_binary(a, b, [](double x, double y) { return x - y; }), {a, b},
                     [](const Tensor&, const Tensor& g, const Needs& n) {
                         return Grads{g, n[1] ? negate(g) : Tensor()};
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    return record_op(OpKind::mul, map_binary(a, b, [](double x, double y) { return x * y; }), {a, b},
                     [a, b](const Tensor&, const Tensor& g, const Needs& n) {
                         return Grads{n[0] ? mul(g, b) : Tensor(), n[1] ? mul(g, a) : Tensor()};
                     });
}

Tensor scale(const Tensor& a, double c) {
    require_defined("scale", a);
    return record_op(OpKind::scale, map_unary(a, [c](double x) { return c * x; }), {a},
                     [c](const Tensor&, const Tensor& g, const Needs&) { return Grads{scale(g, c)}; });
}

Tensor square(const Tensor& a) {
    require_defined("square", a);
    return record_op(OpKind::square, map_unary(a, [](double x) { return x * x; }), {a},
                     [a](const Tensor&, const Tensor& g, const Needs&) { return Grads{scale(mul(g, a), 2.0)}; });
}

Tensor negate(const Tensor& a) {
    require_defined("negate", a);
    return record_op(OpKind::negate, map_unary(a, [](double x) { return -x; }), {a},
                     [](const Tensor&, const Tensor& g, const Needs&) { return Grads{negate(g)}; });
}

Tensor add_scalar(const Tensor& a, double c) {
    require_defined("add_scalar", a);
    return record_op(OpKind::add_scalar, map_unary(a, [c](double x) { return x + c; }), {a},
                     [](const Tensor&, const Tensor& g, const Needs&) { return Grads{g}; });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
    require_defined("mul_scalar", a);
    require_defined("mul_scalar", s);
    require(s.size() == 1, "mul_scalar: factor must hold one element, got " + shape_str(s.shape()));
    const double c = s[0];
    return record_op(OpKind::mul_scalar, map_unary(a, [c](double x) { return c * x; }), {a, s},
                     [a, s](const Tensor&, const Tensor& g, const Needs& n) {
                         return Grads{n[0] ? mul_scalar(g, s) : Tensor(),
                                      n[1] ? reshape(dot(g, a), s.shape()) : Tensor()};
                     });
}

Tensor reciprocal(const Tensor& a) {
    require_defined("reciprocal", a);
    return record_op(OpKind::reciprocal, map_unary(a, [](double x) { return 1.0 / x; }), {a},
                     [](const Tensor& out, const Tensor& g, const Needs&) {
                         return Grads{negate(mul(g, square(out)))};
                     });
}

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& a) {
    require_defined("sum", a);
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    const Shape shape = a.shape();
    return record_op(OpKind::sum, Tensor::scalar(acc), {a},
                     [shape](const Tensor&, const Tensor& g, const Needs&) { return Grads{broadcast(g, shape)}; });
}

Tensor mean(const Tensor& a) {
    require_defined("mean", a);
    require(a.size() > 0, "mean: empty tensor");
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    const double n = static_cast<double>(a.size());
    const Shape shape = a.shape();
    return record_op(OpKind::mean, Tensor::scalar(acc / n), {a},
                     [shape, n](const Tensor&, const Tensor& g, const Needs&) {
                         return Grads{broadcast(scale(g, 1.0 / n), shape)};
                     });
}

Tensor l2norm(const Tensor& a) {
    require_defined("l2norm", a);
    require(a.size() > 0, "l2norm: empty tensor");
    double acc = 0.0;
    for (double v : a.data()) acc += v * v;
    return record_op(OpKind::l2norm, Tensor::scalar(std::sqrt(acc)), {a},
                     [a](const Tensor& out, const Tensor& g, const Needs&) {
                         if (out[0] == 0.0) return Grads{Tensor::zeros_like(a)};
                         return Grads{mul_scalar(a, mul(g, reciprocal(out)))};
                     });
}

Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }

Tensor broadcast(const Tensor& s, const Shape& shape) {
    require_defined("broadcast", s);
    require(s.size() == 1, "broadcast: source must hold one element");
    const Shape src_shape = s.shape();
    return record_op(OpKind::broadcast, Tensor(shape, s[0]), {s},
                     [src_shape](const Tensor&, const Tensor& g, const Needs&) {
                         return Grads{reshape(sum(g), src_shape)};
                     });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
    require_defined("reshape", a);
    require(numel(shape) == a.size(),
            "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    if (shape == a.shape()) return a;
    Tensor out(shape, std::vector<double>(a.data().begin(), a.data().end()));
    const Shape src_shape = a.shape();
    return record_op(OpKind::reshape, std::move(out), {a},
                     [src_shape](const Tensor&, const Tensor& g, const Needs&) {
                         return Grads{reshape(g, src_shape)};
                     });
}

// ---- convolution -----------------------------------------------------------

namespace {

void check_conv_shape(const ConvShape& cs) {
    require(cs.kernel % 2 == 1, "conv2d: kernel size must be odd");
    require(cs.stride >= 1, "conv2d: stride must be positive");
    require(cs.height + 2 * cs.padding >= cs.kernel && cs.width + 2 * cs.padding >= cs.kernel,
            "conv2d: kernel larger than padded input");
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
    require_defined("conv2d", input);
    require_defined("conv2d", weights);
    require(input.rank() == 3, "conv2d: input must be [C,H,W], got " + shape_str(input.shape()));
    require(weights.rank() == 4 && weights.dim(2) == weights.dim(3),
            "conv2d: weights must be [Co,Ci,k,k], got " + shape_str(weights.shape()));
    require(weights.dim(1) == input.dim(0), "conv2d: channel mismatch between input " + shape_str(input.shape()) +
                                                " and weights " + shape_str(weights.shape()));
    ConvShape cs{input.dim(0), input.dim(1), input.dim(2), weights.dim(0), weights.dim(2), stride, padding};
    check_conv_shape(cs);
    if (bias.defined()) {
        require(bias.rank() == 1 && bias.dim(0) == cs.out_channels, "conv2d: bias must be [Co]");
    }
    Tensor out(Shape{cs.out_channels, cs.out_height(), cs.out_width()});
    kernels::conv_forward(cs, input.data().data(), weights.data().data(),
                          bias.defined() ? bias.data().data() : nullptr, out.mutable_data().data());
    std::vector<Tensor> inputs{input, weights};
    if (bias.defined()) inputs.push_back(bias);
    return record_op(OpKind::conv2d, std::move(out), inputs,
                     [input, weights, cs](const Tensor&, const Tensor& g, const Needs& n) {
                         Grads grads(n.size());
                         if (n[0]) grads[0] = conv2d_input_grad(g, weights, cs);
                         if (n[1]) grads[1] = conv2d_weight_grad(input, g, cs);
                         if (n.size() > 2 && n[2]) grads[2] = channel_sum(g);
                         return grads;
                     });
}

Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& weights, const ConvShape& cs) {
    require_defined("conv2d_input_grad", grad_out);
    require_defined("conv2d_input_grad", weights);
    require(grad_out.shape() == Shape{cs.out_channels, cs.out_height(), cs.out_width()},
            "conv2d_input_grad: gradient shape mismatch");
    Tensor out(Shape{cs.in_channels, cs.height, cs.width});
    kernels::conv_input_grad(cs, grad_out.data().data(), weights.data().data(), out.mutable_data().data());
    return record_op(OpKind::conv2d_input_grad, std::move(out), {grad_out, weights},
                     [grad_out, weights, cs](const Tensor&, const Tensor& r, const Needs& n) {
                         return Grads{n[0] ? conv2d(r, weights, Tensor(), cs.stride, cs.padding) : Tensor(),
                                      n[1] ? conv2d_weight_grad(r, grad_out, cs) : Tensor()};
                     });
}

Tensor conv2d_weight_grad(const Tensor& input, const Tensor& grad_out, const ConvShape& cs) {
    require_defined("conv2d_weight_grad", input);
    require_defined("conv2d_weight_grad", grad_out);
    Tensor out(Shape{cs.out_channels, cs.in_channels, cs.kernel, cs.kernel});
    kernels::conv_weight_grad(cs, input.data().data(), grad_out.data().data(), out.mutable_data().data());
    return record_op(OpKind::conv2d_weight_grad, std::move(out), {input, grad_out},
                     [input, grad_out, cs](const Tensor&, const Tensor& r, const Needs& n) {
                         return Grads{n[0] ? conv2d_input_grad(grad_out, r, cs) : Tensor(),
                                      n[1] ? conv2d(input, r, Tensor(), cs.stride, cs.padding) : Tensor()};
                     });
}

Tensor channel_sum(const Tensor& a) {
    require_defined("channel_sum", a);
    const auto [c, inner] = channel_split(a);
    Tensor out(Shape{c});
    auto src = a.data();
    auto dst = out.mutable_data();
    for (std::size_t i = 0; i < c; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < inner; ++j) acc += src[i * inner + j];
        dst[i] = acc;
    }
    const Shape shape = a.shape();
    return record_op(OpKind::channel_sum, std::move(out), {a}, [shape](const Tensor&, const Tensor& g, const Needs&) {
        if (shape.size() == 3) return Grads{channel_broadcast(g, shape[1], shape[2])};
        const std::size_t inner = shape[0] ? numel(shape) / shape[0] : 0;
        return Grads{reshape(channel_broadcast(g, 1, inner), shape)};
    });
}

Tensor channel_broadcast(const Tensor& v, std::size_t height, std::size_t width) {
    require_defined("channel_broadcast", v);
    require(v.rank() == 1, "channel_broadcast: source must be [C]");
    const std::size_t c = v.dim(0), inner = height * width;
    Tensor out(Shape{c, height, width});
    auto src = v.data();
    auto dst = out.mutable_data();
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < inner; ++j) dst[i * inner + j] = src[i];
    return record_op(OpKind::channel_broadcast, std::move(out), {v},
                     [](const Tensor&, const Tensor& g, const Needs&) { return Grads{channel_sum(g)}; });
}

// ---- dense -----------------------------------------------------------------

Tensor matvec(const Tensor& w, const Tensor& x) {
    require_defined("matvec", w);
    require_defined("matvec", x);
    require(w.rank() == 2 && x.rank() == 1 && w.dim(1) == x.dim(0),
            "matvec: shape mismatch " + shape_str(w.shape()) + " * " + shape_str(x.shape()));
    const std::size_t m = w.dim(0), n = w.dim(1);
    Tensor out(Shape{m});
    auto wd = w.data();
    auto xd = x.data();
    auto od = out.mutable_data();
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += wd[i * n + j] * xd[j];
        od[i] = acc;
    }
    return record_op(OpKind::matvec, std::move(out), {w, x}, [w, x](const Tensor&, const Tensor& g, const Needs& nd) {
        return Grads{nd[0] ? outer(g, x) : Tensor(), nd[1] ? matvec_t(w, g) : Tensor()};
    });
}

Tensor matvec_t(const Tensor& w, const Tensor& g) {
    require_defined("matvec_t", w);
    require_defined("matvec_t", g);
    require(w.rank() == 2 && g.rank() == 1 && w.dim(0) == g.dim(0),
            "matvec_t: shape mismatch " + shape_str(w.shape()) + "^T * " + shape_str(g.shape()));
    const std::size_t m = w.dim(0), n = w.dim(1);
    Tensor out(Shape{n});
    auto wd = w.data();
    auto gd = g.data();
    auto od = out.mutable_data();
    for (std::size_t i = 0; i < m; ++i) {
        const double gi = gd[i];
        for (std::size_t j = 0; j < n; ++j) od[j] += wd[i * n + j] * gi;
    }
    return record_op(OpKind::matvec_t, std::move(out), {w, g}, [w, g](const Tensor&, const Tensor& r, const Needs& nd) {
        return Grads{nd[0] ? outer(g, r) : Tensor(), nd[1] ? matvec(w, r) : Tensor()};
    });
}

Tensor outer(const Tensor& a, const Tensor& b) {
    require_defined("outer", a);
    require_defined("outer", b);
    require(a.rank() == 1 && b.rank() == 1, "outer: operands must be vectors");
    const std::size_t m = a.dim(0), n = b.dim(0);
    Tensor out(Shape{m, n});
    auto ad = a.data();
    auto bd = b.data();
    auto od = out.mutable_data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) od[i * n + j] = ad[i] * bd[j];
    return record_op(OpKind::outer, std::move(out), {a, b}, [a, b](const Tensor&, const Tensor& r, const Needs& nd) {
        return Grads{nd[0] ? matvec(r, b) : Tensor(), nd[1] ? matvec_t(r, a) : Tensor()};
    });
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    require_defined("dense", bias);
    require(bias.rank() == 1 && weights.rank() == 2 && bias.dim(0) == weights.dim(0), "dense: bias must be [m]");
    return add(matvec(weights, input), bias);
}

// ---- activations -----------------------------------------------------------

Tensor leaky_mask(const Tensor& g, const Tensor& ref, double slope) {
    require_same_shape("leaky_mask", g, ref);
    Tensor out = map_binary(g, ref, [slope](double v, double r) { return r >= 0.0 ? v : slope * v; });
    return record_op(OpKind::leaky_mask, std::move(out), {g, ref},
                     [ref, slope](const Tensor&, const Tensor& r, const Needs& n) {
                         return Grads{n[0] ? leaky_mask(r, ref, slope) : Tensor(), Tensor()};
                     });
}

Tensor leaky_relu(const Tensor& a, double slope) { return leaky_mask(a, a, slope); }

Tensor prelu_mask(const Tensor& g, const Tensor& ref, const Tensor& slope) {
    require_same_shape("prelu_mask", g, ref);
    require_defined("prelu_mask", slope);
    const auto [c, inner] = channel_split(ref);
    require(slope.rank() == 1 && slope.dim(0) == c, "prelu: slope needs one entry per channel");
    Tensor out(g.shape());
    auto gd = g.data();
    auto rd = ref.data();
    auto sd = slope.data();
    auto od = out.mutable_data();
    for (std::size_t i = 0; i < c; ++i) {
        const double a = sd[i];
        for (std::size_t j = i * inner; j < (i + 1) * inner; ++j) od[j] = rd[j] >= 0.0 ? gd[j] : a * gd[j];
    }
    return record_op(OpKind::prelu_mask, std::move(out), {g, ref, slope},
                     [g, ref, slope](const Tensor&, const Tensor& r, const Needs& n) {
                         return Grads{n[0] ? prelu_mask(r, ref, slope) : Tensor(), Tensor(),
                                      n[2] ? neg_channel_sum(mul(r, g), ref) : Tensor()};
                     });
}

Tensor prelu(const Tensor& a, const Tensor& slope) { return prelu_mask(a, a, slope); }

Tensor neg_channel_sum(const Tensor& u, const Tensor& ref) {
    require_same_shape("neg_channel_sum", u, ref);
    const auto [c, inner] = channel_split(ref);
    Tensor out(Shape{c});
    auto ud = u.data();
    auto rd = ref.data();
    auto od = out.mutable_data();
    for (std::size_t i = 0; i < c; ++i) {
        double acc = 0.0;
        for (std::size_t j = i * inner; j < (i + 1) * inner; ++j)
            if (rd[j] < 0.0) acc += ud[j];
        od[i] = acc;
    }
    return record_op(OpKind::neg_channel_sum, std::move(out), {u, ref},
                     [ref](const Tensor&, const Tensor& r, const Needs& n) {
                         return Grads{n[0] ? neg_channel_broadcast(r, ref) : Tensor(), Tensor()};
                     });
}

Tensor neg_channel_broadcast(const Tensor& v, const Tensor& ref) {
    require_defined("neg_channel_broadcast", v);
    require_defined("neg_channel_broadcast", ref);
    const auto [c, inner] = channel_split(ref);
    require(v.rank() == 1 && v.dim(0) == c, "neg_channel_broadcast: source must be [C]");
    Tensor out(ref.shape());
    auto vd = v.data();
    auto rd = ref.data();
    auto od = out.mutable_data();
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = i * inner; j < (i + 1) * inner; ++j) od[j] = rd[j] < 0.0 ? vd[i] : 0.0;
    return record_op(OpKind::neg_channel_broadcast, std::move(out), {v, ref},
                     [ref](const Tensor&, const Tensor& r, const Needs& n) {
                         return Grads{n[0] ? neg_channel_sum(r, ref) : Tensor(), Tensor()};
                     });
}

Tensor avgpool_global(const Tensor& a) {
    require_defined("avgpool_global", a);
    require(a.rank() == 3 && a.dim(1) >= 1 && a.dim(2) >= 1, "avgpool_global: input must be [C,H,W]");
    const std::size_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
    const double inv = 1.0 / static_cast<double>(h * w);
    Tensor out(Shape{c});
    auto src = a.data();
    auto dst = out.mutable_data();
    for (std::size_t i = 0; i < c; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < h * w; ++j) acc += src[i * h * w + j];
        dst[i] = acc * inv;
    }
    return record_op(OpKind::avgpool_global, std::move(out), {a},
                     [h, w, inv](const Tensor&, const Tensor& g, const Needs&) {
                         return Grads{channel_broadcast(scale(g, inv), h, w)};
                     });
}

// ---- layout ----------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat: no inputs");
    Shape shape = parts.front().shape();
    require(!shape.empty(), "concat: rank-0 input");
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_defined("concat", p);
        require(p.rank() == shape.size() && std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1),
                "concat: trailing dimensions differ");
        total += p.dim(0);
    }
    shape[0] = total;
    Tensor out(shape);
    auto dst = out.mutable_data();
    std::size_t offset = 0;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), dst.begin() + static_cast<std::ptrdiff_t>(offset));
        offset += p.size();
    }
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    std::size_t first = 0;
    for (const auto& p : parts) {
        ranges.emplace_back(first, p.dim(0));
        first += p.dim(0);
    }
    return record_op(OpKind::concat, std::move(out), parts, [ranges](const Tensor&, const Tensor& g, const Needs& n) {
        Grads grads(n.size());
        for (std::size_t i = 0; i < n.size(); ++i)
            if (n[i]) grads[i] = slice(g, ranges[i].first, ranges[i].second);
        return grads;
    });
}

Tensor slice(const Tensor& a, std::size_t first, std::size_t count) {
    require_defined("slice", a);
    require(a.rank() >= 1 && first + count <= a.dim(0), "slice: range out of bounds");
    Shape shape = a.shape();
    const std::size_t inner = a.dim(0) ? a.size() / a.dim(0) : 0;
    const std::size_t total = shape[0];
    shape[0] = count;
    auto src = a.data().subspan(first * inner, count * inner);
    Tensor out(shape, std::vector<double>(src.begin(), src.end()));
    return record_op(OpKind::slice, std::move(out), {a}, [total, first](const Tensor&, const Tensor& g, const Needs&) {
        return Grads{embed(g, total, first)};
    });
}

Tensor embed(const Tensor& a, std::size_t total, std::size_t first) {
    require_defined("embed", a);
    require(a.rank() >= 1 && first + a.dim(0) <= total, "embed: range out of bounds");
    Shape shape = a.shape();
    const std::size_t inner = a.dim(0) ? a.size() / a.dim(0) : 0;
    const std::size_t count = shape[0];
    shape[0] = total;
    Tensor out(shape);
    std::copy(a.data().begin(), a.data().end(),
              out.mutable_data().begin() + static_cast<std::ptrdiff_t>(first * inner));
    return record_op(OpKind::embed, std::move(out), {a}, [first, count](const Tensor&, const Tensor& g, const Needs&) {
        return Grads{slice(g, first, count)};
    });
}

// ---- linear operators ------------------------------------------------------

Tensor apply_linear(const Tensor& x, std::shared_ptr<const LinearOperator> op, bool adjoint) {
    require_defined("apply_linear", x);
    require(op != nullptr, "apply_linear: null operator");
    const Shape in_shape = adjoint ? op->range_shape() : op->domain_shape();
    const Shape out_shape = adjoint ? op->domain_shape() : op->range_shape();
    require(numel(in_shape) == x.size(),
            "apply_linear: input " + shape_str(x.shape()) + " does not match operator " + shape_str(in_shape));
    Tensor out(out_shape);
    if (adjoint) {
        op->apply_adjoint(x.data(), out.mutable_data());
    } else {
        op->apply(x.data(), out.mutable_data());
    }
    const Shape x_shape = x.shape();
    return record_op(OpKind::linear_op, std::move(out), {x},
                     [op, adjoint, x_shape](const Tensor&, const Tensor& g, const Needs&) {
                         return Grads{reshape(apply_linear(g, op, !adjoint), x_shape)};
                     });
}

}  // namespace uar::ad
