#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "uar/checks.hpp"
#include "uar/io.hpp"
#include "uar/model.hpp"
#include "uar/ot.hpp"
#include "uar/rng.hpp"

namespace uar::checks {

using ad::Shape;
using ad::Tensor;

double relative_error(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) return INFINITY;
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
    return std::sqrt(diff) / denom;
}

namespace {

// Signs of every leaky/PReLU input recorded while evaluating f.
std::vector<bool> activation_pattern(const ScalarFn& f, const std::vector<Tensor>& inputs) {
    ad::Graph graph;
    std::vector<Tensor> vars;
    for (const auto& t : inputs) vars.push_back(graph.variable(t));
    f(vars);
    std::vector<bool> signs;
    for (std::size_t node = 0; node < graph.size(); ++node) {
        const auto kind = graph.kind(node);
        if (kind != ad::OpKind::leaky_mask && kind != ad::OpKind::prelu_mask) continue;
        for (double v : graph.input(node, 1).data()) signs.push_back(v >= 0.0);
    }
    return signs;
}

}  // namespace

GradcheckStats gradcheck(const ScalarFn& f, const std::vector<Tensor>& inputs, double h,
                         const std::vector<std::size_t>& skip) {
    auto skipped = [&](std::size_t i) { return std::find(skip.begin(), skip.end(), i) != skip.end(); };
    ad::Graph graph;
    std::vector<Tensor> vars, wrt;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        vars.push_back(skipped(i) ? inputs[i].clone() : graph.variable(inputs[i].clone()));
        if (!skipped(i)) wrt.push_back(vars.back());
    }
    const Tensor out = f(vars);
    const auto grads = graph.gradients(out, wrt, false);

    std::vector<Tensor> base;
    for (const auto& t : inputs) base.push_back(t.clone());
    const auto pattern = activation_pattern(f, base);
    const bool has_kinks = !pattern.empty();
    GradcheckStats stats;
    std::size_t k = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (skipped(i)) continue;
        auto d = base[i].mutable_data();
        const auto g = grads[k++].data();
        std::vector<double> analytic, fd;
        for (std::size_t j = 0; j < d.size(); ++j) {
            const double v = d[j];
            d[j] = v + h;
            const double fp = f(base).item();
            const bool kink_p = has_kinks && activation_pattern(f, base) != pattern;
            d[j] = v - h;
            const double fm = f(base).item();
            const bool kink_m = has_kinks && activation_pattern(f, base) != pattern;
            d[j] = v;
            if (kink_p || kink_m) {
                ++stats.excluded;
                continue;
            }
            analytic.push_back(g[j]);
            fd.push_back((fp - fm) / (2.0 * h));
        }
        stats.checked += fd.size();
        stats.worst = std::max(stats.worst, relative_error(analytic, fd));
    }
    return stats;
}

double adjoint_error(const tomo::Geometry& g, std::size_t pairs, std::uint64_t seed) {
    const tomo::RadonOperator op(g);
    double worst = 0.0;
    for (std::size_t p = 0; p < pairs; ++p) {
        CounterRng rng(derive_seed(seed, 1, p));
        std::vector<double> x(g.n * g.n), u(g.n_angles * g.n_det), ax(u.size()), atu(x.size());
        for (double& v : x) v = rng.uniform(-1.0, 1.0);
        for (double& v : u) v = rng.uniform(-1.0, 1.0);
        op.apply(x, ax);
        op.apply_adjoint(u, atu);
        const double lhs = std::inner_product(ax.begin(), ax.end(), u.begin(), 0.0);
        const double rhs = std::inner_product(x.begin(), x.end(), atu.begin(), 0.0);
        const double nax = std::sqrt(std::inner_product(ax.begin(), ax.end(), ax.begin(), 0.0));
        const double nu = std::sqrt(std::inner_product(u.begin(), u.end(), u.begin(), 0.0));
        worst = std::max(worst, std::abs(lhs - rhs) / (nax * nu));
    }
    return worst;
}

namespace {

Tensor random_tensor(Shape shape, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.mutable_data()) v = rng.uniform(lo, hi);
    return t;
}

// Entries bounded away from zero, random sign.
Tensor away_from_zero(Shape shape, CounterRng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.mutable_data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.5, 1.5);
    return t;
}

struct OpCase {
    std::string name;
    std::function<std::vector<Tensor>(CounterRng&)> make;
    ScalarFn f;
    std::vector<std::size_t> skip;
};

// f(inputs) = <w, op(inputs without w)>, w being the last input (a constant).
OpCase projected(std::string name, std::function<std::vector<Tensor>(CounterRng&)> make_args, Shape out_shape,
                 std::function<Tensor(const std::vector<Tensor>&)> op, std::vector<std::size_t> skip = {}) {
    OpCase c;
    c.name = std::move(name);
    c.make = [make_args, out_shape](CounterRng& rng) {
        auto args = make_args(rng);
        args.push_back(random_tensor(out_shape, rng));
        return args;
    };
    c.f = [op](const std::vector<Tensor>& in) {
        const std::vector<Tensor> args(in.begin(), in.end() - 1);
        return ad::dot(in.back(), op(args));
    };
    c.skip = std::move(skip);
    return c;
}

OpCase scalar_case(std::string name, std::function<std::vector<Tensor>(CounterRng&)> make, ScalarFn f) {
    return {std::move(name), std::move(make), std::move(f), {}};
}

nn::ParamSet rebind(const nn::ParamSet& layout, const std::vector<Tensor>& values) {
    nn::ParamSet out;
    std::size_t i = 0;
    for (const auto& [name, _] : layout) out.add(name, values[i++]);
    return out;
}

std::vector<Tensor> flatten(const nn::ParamSet& p) {
    std::vector<Tensor> out;
    for (const auto& [_, t] : p) out.push_back(t);
    return out;
}

// Randomizes every parameter (including zero-initialized biases).
nn::ParamSet randomized(const nn::ParamSet& p, CounterRng& rng, double scale) {
    nn::ParamSet out;
    for (const auto& [name, t] : p) out.add(name, random_tensor(t.shape(), rng, -scale, scale));
    return out;
}

void merge(GradcheckStats& into, const GradcheckStats& s) {
    into.worst = std::max(into.worst, s.worst);
    into.checked += s.checked;
    into.excluded += s.excluded;
}

std::vector<OpCase> op_cases() {
    using V = std::vector<Tensor>;
    auto r = [](Shape s) { return [s](CounterRng& rng) { return V{random_tensor(s, rng)}; }; };
    auto r2 = [](Shape a, Shape b) {
        return [a, b](CounterRng& rng) { return V{random_tensor(a, rng), random_tensor(b, rng)}; };
    };
    const Shape m{4, 4};
    std::vector<OpCase> cs;
    cs.push_back(projected("add", r2(m, m), m, [](const V& a) { return ad::add(a[0], a[1]); }));
    cs.push_back(projected("sub", r2(m, m), m, [](const V& a) { return ad::sub(a[0], a[1]); }));
    cs.push_back(projected("mul", r2(m, m), m, [](const V& a) { return ad::mul(a[0], a[1]); }));
    cs.push_back(projected("scale", r(m), m, [](const V& a) { return ad::scale(a[0], -0.7); }));
    cs.push_back(projected("square", r(m), m, [](const V& a) { return ad::square(a[0]); }));
    cs.push_back(projected("negate", r(m), m, [](const V& a) { return ad::negate(a[0]); }));
    cs.push_back(projected("add_scalar", r(m), m, [](const V& a) { return ad::add_scalar(a[0], 0.3); }));
    cs.push_back(projected("mul_scalar", r2(m, {1}), m, [](const V& a) { return ad::mul_scalar(a[0], a[1]); }));
    cs.push_back(projected(
        "reciprocal", [](CounterRng& rng) { return V{away_from_zero({4, 4}, rng)}; }, m,
        [](const V& a) { return ad::reciprocal(a[0]); }));
    cs.push_back(scalar_case("sum", r(m), [](const V& a) { return ad::sum(ad::square(a[0])); }));
    cs.push_back(scalar_case("mean", r(m), [](const V& a) { return ad::mean(ad::square(a[0])); }));
    cs.push_back(scalar_case("l2norm", r(m), [](const V& a) { return ad::l2norm(a[0]); }));
    cs.push_back(scalar_case("dot", r2(m, m), [](const V& a) { return ad::dot(a[0], a[1]); }));
    cs.push_back(projected("broadcast", r({}), {3, 4}, [](const V& a) { return ad::broadcast(a[0], {3, 4}); }));
    cs.push_back(projected("reshape", r({2, 6}), {3, 4}, [](const V& a) { return ad::reshape(a[0], {3, 4}); }));
    cs.push_back(projected(
        "conv2d", [](CounterRng& rng) {
            return V{random_tensor({2, 6, 6}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)};
        },
        {3, 6, 6}, [](const V& a) { return ad::conv2d(a[0], a[1], a[2], 1, 1); }));
    cs.push_back(projected(
        "conv2d_stride2", [](CounterRng& rng) {
            return V{random_tensor({2, 7, 7}, rng), random_tensor({2, 2, 5, 5}, rng), random_tensor({2}, rng)};
        },
        {2, 4, 4}, [](const V& a) { return ad::conv2d(a[0], a[1], a[2], 2, 2); }));
    const ad::ConvShape cs1{2, 6, 6, 3, 3, 1, 1};
    cs.push_back(projected("conv2d_input_grad", r2({3, 6, 6}, {3, 2, 3, 3}), {2, 6, 6},
                           [cs1](const V& a) { return ad::conv2d_input_grad(a[0], a[1], cs1); }));
    cs.push_back(projected("conv2d_weight_grad", r2({2, 6, 6}, {3, 6, 6}), {3, 2, 3, 3},
                           [cs1](const V& a) { return ad::conv2d_weight_grad(a[0], a[1], cs1); }));
    cs.push_back(projected("channel_sum", r({3, 4, 4}), {3}, [](const V& a) { return ad::channel_sum(a[0]); }));
    cs.push_back(projected("channel_broadcast", r({3}), {3, 4, 4},
                           [](const V& a) { return ad::channel_broadcast(a[0], 4, 4); }));
    cs.push_back(projected("matvec", r2({3, 5}, {5}), {3}, [](const V& a) { return ad::matvec(a[0], a[1]); }));
    cs.push_back(projected("matvec_t", r2({3, 5}, {3}), {5}, [](const V& a) { return ad::matvec_t(a[0], a[1]); }));
    cs.push_back(projected("outer", r2({3}, {4}), {3, 4}, [](const V& a) { return ad::outer(a[0], a[1]); }));
    cs.push_back(projected(
        "dense", [](CounterRng& rng) {
            return V{random_tensor({5}, rng), random_tensor({3, 5}, rng), random_tensor({3}, rng)};
        },
        {3}, [](const V& a) { return ad::dense(a[0], a[1], a[2]); }));
    cs.push_back(projected("leaky_relu", r({3, 4, 4}), {3, 4, 4}, [](const V& a) { return ad::leaky_relu(a[0], 0.2); }));
    cs.push_back(projected(
        "prelu", [](CounterRng& rng) { return V{random_tensor({3, 4, 4}, rng), random_tensor({3}, rng, 0.0, 0.5)}; },
        {3, 4, 4}, [](const V& a) { return ad::prelu(a[0], a[1]); }));
    cs.push_back(projected("leaky_mask", r2({3, 4, 4}, {3, 4, 4}), {3, 4, 4},
                           [](const V& a) { return ad::leaky_mask(a[0], a[1], 0.2); }, {1}));
    cs.push_back(projected(
        "prelu_mask", [](CounterRng& rng) {
            return V{random_tensor({3, 4, 4}, rng), random_tensor({3, 4, 4}, rng), random_tensor({3}, rng)};
        },
        {3, 4, 4}, [](const V& a) { return ad::prelu_mask(a[0], a[1], a[2]); }, {1}));
    cs.push_back(projected("neg_channel_sum", r2({3, 4, 4}, {3, 4, 4}), {3},
                           [](const V& a) { return ad::neg_channel_sum(a[0], a[1]); }, {1}));
    cs.push_back(projected("neg_channel_broadcast", r2({3}, {3, 4, 4}), {3, 4, 4},
                           [](const V& a) { return ad::neg_channel_broadcast(a[0], a[1]); }, {1}));
    cs.push_back(projected("avgpool_global", r({3, 4, 5}), {3}, [](const V& a) { return ad::avgpool_global(a[0]); }));
    cs.push_back(projected("concat", r2({1, 3, 3}, {2, 3, 3}), {3, 3, 3},
                           [](const V& a) { return ad::concat({a[0], a[1]}); }));
    cs.push_back(projected("slice", r({4, 3}), {2, 3}, [](const V& a) { return ad::slice(a[0], 1, 2); }));
    cs.push_back(projected("embed", r({2, 3}), {5, 3}, [](const V& a) { return ad::embed(a[0], 5, 1); }));

    const auto g = tomo::Geometry::parallel(8, 5, 13);
    const auto op = std::make_shared<const tomo::RadonOperator>(g);
    cs.push_back(projected("radon_forward", r({1, 8, 8}), {1, 5, 13},
                           [op](const V& a) { return ad::apply_linear(a[0], op, false); }));
    cs.push_back(projected("radon_adjoint", r({1, 5, 13}), {1, 8, 8},
                           [op](const V& a) { return ad::apply_linear(a[0], op, true); }));
    return cs;
}

}  // namespace

std::vector<GradcheckCase> gradcheck_all(std::size_t instances, std::uint64_t seed) {
    constexpr double h = 1e-5;
    std::vector<GradcheckCase> out;
    std::uint64_t case_id = 0;
    for (const auto& c : op_cases()) {
        GradcheckCase gc{c.name, {}};
        for (std::size_t k = 0; k < instances; ++k) {
            CounterRng rng(derive_seed(seed, case_id, k));
            merge(gc.stats, gradcheck(c.f, c.make(rng), h, c.skip));
        }
        out.push_back(gc);
        ++case_id;
    }

    // Generator: every parameter, the sinogram and the initial image.
    {
        const model::Problem problem(tomo::Geometry::parallel(16, 8, 23));
        const model::GeneratorConfig gcfg{2, 3, 3, 0.1, 0.01};
        GradcheckCase gc{"generator", {}};
        for (std::size_t k = 0; k < instances; ++k) {
            CounterRng rng(derive_seed(seed, 1000, k));
            const auto layout = randomized(model::make_generator(gcfg, k).params, rng, 0.3);
            std::vector<Tensor> in = flatten(layout);
            in.push_back(random_tensor({1, 8, 23}, rng));
            in.push_back(random_tensor({1, 16, 16}, rng));
            in.push_back(random_tensor({1, 16, 16}, rng));
            const std::size_t np = layout.size();
            auto f = [&](const std::vector<Tensor>& v) {
                const nn::ParamSet p = rebind(layout, {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(np)});
                return ad::dot(v[np + 2], model::generator_forward(problem, gcfg, p, v[np], v[np + 1]));
            };
            merge(gc.stats, gradcheck(f, in, h, {np + 2}));
        }
        out.push_back(gc);
    }
    // Critic: the default layer pattern at reduced width, every parameter and the image.
    {
        const model::CriticConfig ccfg{6, 2, 5, 8, 0.2};
        GradcheckCase gc{"critic", {}};
        for (std::size_t k = 0; k < instances; ++k) {
            CounterRng rng(derive_seed(seed, 1001, k));
            const auto layout = randomized(model::make_critic(ccfg, k).params, rng, 0.3);
            std::vector<Tensor> in = flatten(layout);
            in.push_back(random_tensor({1, 16, 16}, rng, 0.0, 1.0));
            const std::size_t np = layout.size();
            auto f = [&](const std::vector<Tensor>& v) {
                const nn::ParamSet p = rebind(layout, {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(np)});
                return model::critic_forward(ccfg, p, v[np]);
            };
            merge(gc.stats, gradcheck(f, in, h));
        }
        out.push_back(gc);
    }
    return out;
}

double second_order_error(std::uint64_t seed) {
    const model::CriticConfig ccfg{2, 2, 3, 4, 0.2};
    CounterRng rng(seed);
    const nn::ParamSet theta = randomized(model::make_critic(ccfg, seed).params, rng, 0.5);
    const Tensor x = random_tensor({1, 8, 8}, rng, 0.0, 1.0);

    // (||grad_x R(x)|| - 1)^2 on a graph; params may or may not be variables.
    auto penalty = [&](ad::Graph& graph, const nn::ParamSet& p) {
        const Tensor xv = graph.variable(x);
        const Tensor r = model::critic_forward(ccfg, p, xv);
        const Tensor gx = graph.gradients(r, std::span<const Tensor>(&xv, 1), graph.second_order())[0];
        return ad::square(ad::add_scalar(ad::l2norm(gx), -1.0));
    };

    ad::Graph graph(ad::GraphOptions{true, false});
    const nn::ParamSet bound = nn::bind(graph, theta);
    const nn::ParamSet exact = nn::gradients(graph, penalty(graph, bound), bound);

    constexpr double h = 1e-6;
    std::vector<double> analytic, fd;
    nn::ParamSet probe = theta.clone();
    for (auto& [name, t] : probe) {
        auto d = t.mutable_data();
        const auto e = exact.at(name).data();
        for (std::size_t j = 0; j < d.size(); ++j) {
            const double v = d[j];
            d[j] = v + h;
            ad::Graph gp;
            const double fp = penalty(gp, probe).item();
            d[j] = v - h;
            ad::Graph gm;
            const double fm = penalty(gm, probe).item();
            d[j] = v;
            fd.push_back((fp - fm) / (2.0 * h));
            analytic.push_back(e[j]);
        }
    }
    return relative_error(analytic, fd);
}

W1OracleStats w1_oracle(std::size_t trials, std::uint64_t seed) {
    W1OracleStats s;
    auto cloud = [](CounterRng& rng, std::size_t m, std::size_t d) {
        ot::PointCloud c;
        c.dim = d;
        for (std::size_t i = 0; i < m; ++i) {
            std::vector<double> p(d);
            for (double& v : p) v = rng.uniform(-1.0, 1.0);
            c.points.push_back(std::move(p));
        }
        return c;
    };
    for (std::size_t t = 0; t < trials; ++t) {
        CounterRng rng(derive_seed(seed, 2, t));
        // d >= 2: on a line distinct optimal matchings tie in reals but not in floating point.
        const std::size_t m = 1 + rng.below(6), d = 2 + rng.below(4);
        const auto a = cloud(rng, m, d), b = cloud(rng, m, d), c = cloud(rng, m, d);

        const auto cost = ot::euclidean_costs(a, b);
        std::vector<std::size_t> perm(m);
        std::iota(perm.begin(), perm.end(), 0);
        double brute = INFINITY;
        do {
            double total = 0.0;
            for (std::size_t i = 0; i < m; ++i) total += cost[i][perm[i]];
            brute = std::min(brute, total / static_cast<double>(m));
        } while (std::next_permutation(perm.begin(), perm.end()));
        const double ab = ot::w1_exact(a, b);
        if (ab != brute) ++s.mismatches;

        const double ba = ot::w1_exact(b, a), ac = ot::w1_exact(a, c), bc = ot::w1_exact(b, c);
        const double aa = ot::w1_exact(a, a);
        double violation = std::max({std::abs(ab - ba), std::abs(aa), ac - (ab + bc)});
        if (!(ab > 0.0)) violation = std::max(violation, 1.0);  // distinct random clouds
        s.worst_axiom_violation = std::max(s.worst_axiom_violation, violation);
        ++s.trials;
    }
    return s;
}

double adam_oracle_error() {
    nn::ParamSet p;
    p.add("a", Tensor({3}, std::vector<double>{0.5, -1.0, 2.0}));
    p.add("b", Tensor({1}, std::vector<double>{0.1}));
    auto opt = nn::AdamState::for_params(p, 1e-2, 0.5, 0.99);
    const double grads[3][4] = {{1.0, -2.0, 0.5, 3.0}, {0.2, 0.0, -1.0, -3.0}, {-0.7, 4.0, 0.1, 1.0}};

    double w[4] = {0.5, -1.0, 2.0, 0.1}, m[4] = {}, v[4] = {};
    double worst = 0.0;
    for (int t = 1; t <= 3; ++t) {
        nn::ParamSet g;
        g.add("a", Tensor({3}, std::vector<double>{grads[t - 1][0], grads[t - 1][1], grads[t - 1][2]}));
        g.add("b", Tensor({1}, std::vector<double>{grads[t - 1][3]}));
        nn::adam_step(p, g, opt);
        for (int i = 0; i < 4; ++i) {
            m[i] = 0.5 * m[i] + 0.5 * grads[t - 1][i];
            v[i] = 0.99 * v[i] + 0.01 * grads[t - 1][i] * grads[t - 1][i];
            const double mh = m[i] / (1.0 - std::pow(0.5, t));
            const double vh = v[i] / (1.0 - std::pow(0.99, t));
            w[i] -= 1e-2 * mh / (std::sqrt(vh) + 1e-8);
        }
        const auto a = p.at("a").data();
        for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(a[i] - w[i]));
        worst = std::max(worst, std::abs(p.at("b").data()[0] - w[3]));
    }
    return worst;
}

namespace {

io::Checkpoint sample_checkpoint(const model::GeneratorConfig& gcfg, const model::CriticConfig& ccfg) {
    io::Checkpoint c;
    c.geometry = tomo::Geometry::parallel(16, 8, 23);
    c.gen = model::make_generator(gcfg, 3);
    c.critic = model::make_critic(ccfg, 4);
    CounterRng rng(5);
    auto opt = nn::AdamState::for_params(c.gen.params, 1e-4, 0.5, 0.99);
    opt.t = 17;
    for (auto& [_, t] : opt.m) {
        for (double& v : t.mutable_data()) v = rng.uniform(-1.0, 1.0);
    }
    for (auto& [_, t] : opt.v) {
        for (double& v : t.mutable_data()) v = rng.uniform(0.0, 1.0);
    }
    c.gen_opt = opt;
    c.phase = 2;
    c.step = 1234;
    return c;
}

bool same_params(const nn::ParamSet& a, const nn::ParamSet& b) {
    if (!a.same_layout(b)) return false;
    auto it = b.begin();
    for (const auto& [_, t] : a) {
        const auto x = t.data(), y = it->second.data();
        if (!std::equal(x.begin(), x.end(), y.begin(), y.end(),
                        [](double p, double q) { return std::memcmp(&p, &q, sizeof p) == 0; })) {
            return false;
        }
        ++it;
    }
    return true;
}

}  // namespace

std::string checkpoint_roundtrip() {
    const auto c = sample_checkpoint({2, 4, 5, 0.1, 0.01}, {6, 4, 5, 16, 0.2});
    const auto bytes = io::encode(io::pack(c));
    const auto back = io::unpack(io::decode(bytes));
    if (!(back.geometry == c.geometry)) return "geometry differs";
    if (!same_params(back.gen.params, c.gen.params)) return "generator parameters differ";
    if (!same_params(back.critic.params, c.critic.params)) return "critic parameters differ";
    if (!back.gen_opt || back.critic_opt) return "optimizer presence differs";
    if (back.gen_opt->t != 17 || !same_params(back.gen_opt->m, c.gen_opt->m) ||
        !same_params(back.gen_opt->v, c.gen_opt->v)) {
        return "optimizer state differs";
    }
    if (back.phase != 2 || back.step != 1234) return "progress differs";
    if (io::encode(io::pack(back)) != bytes) return "re-encoding is not byte-identical";
    return "";
}

bool checkpoint_corruption_detected() {
    const auto c = sample_checkpoint({1, 1, 3, 0.1, 0.01}, {1, 1, 3, 0, 0.2});
    const auto bytes = io::encode(io::pack(c));
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        auto bad = bytes;
        bad[i] ^= 0x5A;
        try {
            io::decode(bad);
            return false;
        } catch (const io::FormatError&) {
        }
    }
    return true;
}

}  // namespace uar::checks
