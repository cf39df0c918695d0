#include "uar/model.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "uar/rng.hpp"

namespace uar::model {

using ad::Tensor;

namespace {

std::string layer_name(std::size_t l, const char* rest) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "L%02zu.%s", l, rest);
    return buf;
}

void add_conv(std::vector<nn::ParamSpec>& spec, const std::string& prefix, std::size_t cin, std::size_t cout,
              std::size_t k) {
    spec.push_back({prefix + ".b", {cout}, nn::InitKind::constant, 1, 0.0});
    spec.push_back({prefix + ".w", {cout, cin, k, k}, nn::InitKind::uniform_fan_in, cin * k * k, 0.0});
}

void add_block(std::vector<nn::ParamSpec>& spec, const std::string& prefix, std::size_t cin,
               const GeneratorConfig& cfg) {
    const std::size_t c = cfg.channels, k = cfg.kernel;
    add_conv(spec, prefix + ".conv0", cin, c, k);
    add_conv(spec, prefix + ".conv1", c, c, k);
    add_conv(spec, prefix + ".conv2", c, 1, k);
    spec.push_back({prefix + ".act0", {c}, nn::InitKind::constant, 1, cfg.prelu_init});
    spec.push_back({prefix + ".act1", {c}, nn::InitKind::constant, 1, cfg.prelu_init});
}

Tensor conv(const nn::ParamSet& p, const std::string& prefix, const Tensor& x, std::size_t stride) {
    const Tensor& w = p.at(prefix + ".w");
    return ad::conv2d(x, w, p.at(prefix + ".b"), stride, w.dim(3) / 2);
}

// conv -> prelu -> conv -> prelu -> conv, one output channel.
Tensor block(const nn::ParamSet& p, const std::string& prefix, const Tensor& x) {
    Tensor h = ad::prelu(conv(p, prefix + ".conv0", x, 1), p.at(prefix + ".act0"));
    h = ad::prelu(conv(p, prefix + ".conv1", h, 1), p.at(prefix + ".act1"));
    return conv(p, prefix + ".conv2", h, 1);
}

nn::ParamSet detached(const nn::ParamSet& params) {
    nn::ParamSet out;
    for (const auto& [name, t] : params) out.add(name, t.detach());
    return out;
}

double sq_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

}  // namespace

std::size_t critic_channels(const CriticConfig& cfg, std::size_t layer) {
    return cfg.base_channels << ((layer + 1) / 2);
}

std::vector<nn::ParamSpec> generator_spec(const GeneratorConfig& cfg) {
    if (cfg.kernel % 2 == 0) throw std::invalid_argument("generator: kernel size must be odd");
    std::vector<nn::ParamSpec> spec;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        add_block(spec, layer_name(l, "dual"), 3, cfg);
        add_block(spec, layer_name(l, "primal"), 2, cfg);
        spec.push_back({layer_name(l, "sigma"), {1}, nn::InitKind::constant, 1, cfg.step_init});
        spec.push_back({layer_name(l, "tau"), {1}, nn::InitKind::constant, 1, cfg.step_init});
    }
    return spec;
}

std::vector<nn::ParamSpec> critic_spec(const CriticConfig& cfg) {
    if (cfg.kernel % 2 == 0) throw std::invalid_argument("critic: kernel size must be odd");
    std::vector<nn::ParamSpec> spec;
    std::size_t cin = 1;
    for (std::size_t i = 0; i < cfg.conv_layers; ++i) {
        const std::size_t cout = critic_channels(cfg, i);
        add_conv(spec, "conv" + std::to_string(i), cin, cout, cfg.kernel);
        cin = cout;
    }
    if (cfg.hidden > 0) {
        spec.push_back({"fc0.b", {cfg.hidden}, nn::InitKind::constant, 1, 0.0});
        spec.push_back({"fc0.w", {cfg.hidden, cin}, nn::InitKind::uniform_fan_in, cin, 0.0});
        spec.push_back({"fc1.b", {1}, nn::InitKind::constant, 1, 0.0});
        spec.push_back({"fc1.w", {1, cfg.hidden}, nn::InitKind::uniform_fan_in, cfg.hidden, 0.0});
    } else {
        spec.push_back({"fc.b", {1}, nn::InitKind::constant, 1, 0.0});
        spec.push_back({"fc.w", {1, cin}, nn::InitKind::uniform_fan_in, cin, 0.0});
    }
    return spec;
}

Generator make_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
    return {cfg, nn::init_params(generator_spec(cfg), seed)};
}

Critic make_critic(const CriticConfig& cfg, std::uint64_t seed) {
    return {cfg, nn::init_params(critic_spec(cfg), seed)};
}

Problem::Problem(tomo::Geometry g) : op_(std::make_shared<tomo::RadonOperator>(std::move(g))) {}

tomo::Sinogram Problem::forward(const tomo::Image& x) const {
    const auto& g = geometry();
    if (x.n != g.n) throw std::invalid_argument("Problem::forward: image does not match geometry");
    tomo::Sinogram s(g.n_angles, g.n_det);
    op_->apply(x.values, s.values);
    return s;
}

Tensor generator_forward(const Problem& problem, const GeneratorConfig& cfg, const nn::ParamSet& params,
                         const Tensor& y, const Tensor& x0) {
    const auto& g = problem.geometry();
    if (y.shape() != ad::Shape{1, g.n_angles, g.n_det} || x0.shape() != ad::Shape{1, g.n, g.n}) {
        throw std::invalid_argument("generator_forward: inputs do not match geometry");
    }
    Tensor x = x0;
    Tensor h = Tensor::zeros(y.shape());
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const Tensor ax = ad::mul_scalar(problem.forward(x), params.at(layer_name(l, "sigma")));
        h = ad::add(h, block(params, layer_name(l, "dual"), ad::concat({h, ax, y})));
        const Tensor ath = ad::mul_scalar(problem.adjoint(h), params.at(layer_name(l, "tau")));
        x = ad::add(x, block(params, layer_name(l, "primal"), ad::concat({x, ath})));
    }
    return x;
}

tomo::Image reconstruct(const Problem& problem, const Generator& gen, const tomo::Sinogram& y) {
    const Tensor x0 = tomo::to_tensor(problem.fbp(y));
    return tomo::image_from(generator_forward(problem, gen.config, gen.params, tomo::to_tensor(y), x0));
}

Tensor critic_forward(const CriticConfig& cfg, const nn::ParamSet& params, const Tensor& x) {
    if (x.rank() != 3 || x.dim(0) != 1) throw std::invalid_argument("critic_forward: input must be [1,n,n]");
    Tensor h = x;
    for (std::size_t i = 0; i < cfg.conv_layers; ++i) {
        h = ad::leaky_relu(conv(params, "conv" + std::to_string(i), h, i % 2 == 1 ? 2 : 1), cfg.slope);
    }
    Tensor p = ad::avgpool_global(h);
    Tensor out;
    if (cfg.hidden > 0) {
        p = ad::leaky_relu(ad::dense(p, params.at("fc0.w"), params.at("fc0.b")), cfg.slope);
        out = ad::dense(p, params.at("fc1.w"), params.at("fc1.b"));
    } else {
        out = ad::dense(p, params.at("fc.w"), params.at("fc.b"));
    }
    return ad::reshape(out, {});
}

double critic_value(const Critic& critic, const tomo::Image& x) {
    return critic_forward(critic.config, critic.params, tomo::to_tensor(x)).item();
}

std::pair<double, tomo::Image> critic_value_and_gradient(const Critic& critic, const tomo::Image& x) {
    ad::Graph graph;
    const Tensor xv = graph.variable(tomo::to_tensor(x));
    const Tensor r = critic_forward(critic.config, critic.params, xv);
    const Tensor g = graph.gradients(r, std::span<const Tensor>(&xv, 1), false)[0];
    return {r.item(), tomo::image_from(g)};
}

const char* gp_mode_name(GpMode mode) {
    return mode == GpMode::exact ? "exact" : "directional-fd";
}

GpMode parse_gp_mode(const std::string& name) {
    if (name == "exact" || name == "exact-double-backprop") return GpMode::exact;
    if (name == "directional-fd") return GpMode::directional_fd;
    throw std::invalid_argument("unknown gp_mode '" + name + "' (expected exact or directional-fd)");
}

Tensor critic_loss(ad::Graph& graph, const CriticConfig& cfg, const nn::ParamSet& params,
                   const std::vector<tomo::Image>& batch_x, const std::vector<tomo::Image>& batch_u,
                   double lambda_gp, std::uint64_t seed, GpMode mode) {
    if (batch_x.empty() || batch_x.size() != batch_u.size()) {
        throw std::invalid_argument("critic_loss: batches must be non-empty and of equal length");
    }
    if (lambda_gp < 0.0) throw std::invalid_argument("critic_loss: lambda_gp must be >= 0");
    if (mode == GpMode::exact && lambda_gp > 0.0 && !graph.second_order()) {
        throw std::invalid_argument("critic_loss: exact gradient penalty needs a second-order graph");
    }
    CounterRng rng(seed);
    const Critic frozen{cfg, detached(params)};
    Tensor total;
    for (std::size_t j = 0; j < batch_x.size(); ++j) {
        const double eps = rng.uniform();
        const tomo::Image& x = batch_x[j];
        const tomo::Image& u = batch_u[j];
        if (x.n != u.n) throw std::invalid_argument("critic_loss: image sizes differ");
        Tensor term = ad::sub(critic_forward(cfg, params, tomo::to_tensor(x)),
                              critic_forward(cfg, params, tomo::to_tensor(u)));
        if (lambda_gp > 0.0) {
            tomo::Image xe(x.n);
            for (std::size_t i = 0; i < xe.size(); ++i) xe.values[i] = eps * x.values[i] + (1.0 - eps) * u.values[i];
            Tensor slope;
            if (mode == GpMode::exact) {
                const Tensor xv = graph.variable(tomo::to_tensor(xe));
                const Tensor r = critic_forward(cfg, params, xv);
                slope = ad::l2norm(graph.gradients(r, std::span<const Tensor>(&xv, 1), true)[0]);
            } else {
                tomo::Image v = critic_value_and_gradient(frozen, xe).second;
                double norm = std::sqrt(sq_norm(v.values));
                if (norm == 0.0) {
                    for (double& e : v.values) e = rng.normal();
                    norm = std::sqrt(sq_norm(v.values));
                }
                tomo::Image xh = xe;
                for (std::size_t i = 0; i < xh.size(); ++i) xh.values[i] += kDirectionalStep * v.values[i] / norm;
                const Tensor d = ad::scale(ad::sub(critic_forward(cfg, params, tomo::to_tensor(xh)),
                                                   critic_forward(cfg, params, tomo::to_tensor(xe))),
                                           1.0 / kDirectionalStep);
                slope = ad::scale(d, d.item() >= 0.0 ? 1.0 : -1.0);
            }
            term = ad::add(term, ad::scale(ad::square(ad::add_scalar(slope, -1.0)), lambda_gp));
        }
        total = total.defined() ? ad::add(total, term) : term;
    }
    return ad::scale(total, 1.0 / static_cast<double>(batch_x.size()));
}

const char* fidelity_scale_name(FidelityScale scale) { return scale == FidelityScale::sum ? "sum" : "mean"; }

FidelityScale parse_fidelity_scale(const std::string& name) {
    if (name == "sum") return FidelityScale::sum;
    if (name == "mean") return FidelityScale::mean;
    throw std::invalid_argument("unknown fidelity scale '" + name + "'");
}

Tensor generator_loss(const Problem& problem, const GeneratorConfig& gcfg, const nn::ParamSet& gen_params,
                      const Critic& critic, const std::vector<tomo::Sinogram>& batch_y, double lambda,
                      FidelityScale scale) {
    if (batch_y.empty()) throw std::invalid_argument("generator_loss: empty batch");
    const nn::ParamSet frozen = detached(critic.params);
    Tensor total;
    for (const auto& y : batch_y) {
        const Tensor yt = tomo::to_tensor(y);
        const Tensor x = generator_forward(problem, gcfg, gen_params, yt, tomo::to_tensor(problem.fbp(y)));
        Tensor term = ad::sum(ad::square(ad::sub(yt, problem.forward(x))));
        if (scale == FidelityScale::mean) term = ad::scale(term, 1.0 / static_cast<double>(y.size()));
        if (lambda != 0.0) term = ad::add(term, ad::scale(critic_forward(critic.config, frozen, x), lambda));
        total = total.defined() ? ad::add(total, term) : term;
    }
    return ad::scale(total, 1.0 / static_cast<double>(batch_y.size()));
}

double refine_objective(const Problem& problem, const Critic& critic, const tomo::Sinogram& y, const tomo::Image& x,
                        const RefineConfig& cfg) {
    double f = 0.0;
    if (cfg.fidelity_weight != 0.0) {
        tomo::Sinogram r = problem.forward(x);
        for (std::size_t i = 0; i < r.size(); ++i) r.values[i] -= y.values[i];
        f += cfg.fidelity_weight * std::sqrt(sq_norm(r.values));
    }
    if (cfg.lambda_prime != 0.0) {
        f += cfg.lambda_prime * (critic_value(critic, x) + cfg.sigma_tik * sq_norm(x.values));
    }
    return f;
}

tomo::Image refine_gradient(const Problem& problem, const Critic& critic, const tomo::Sinogram& y,
                            const tomo::Image& x, const RefineConfig& cfg) {
    tomo::Image grad(x.n);
    if (cfg.fidelity_weight != 0.0) {
        tomo::Sinogram r = problem.forward(x);
        for (std::size_t i = 0; i < r.size(); ++i) r.values[i] -= y.values[i];
        const double norm = std::sqrt(sq_norm(r.values));
        if (norm >= 1e-12) {
            problem.op()->apply_adjoint(r.values, grad.values);
            for (double& v : grad.values) v *= cfg.fidelity_weight / norm;
        }
    }
    if (cfg.lambda_prime != 0.0) {
        const tomo::Image gr = critic_value_and_gradient(critic, x).second;
        for (std::size_t i = 0; i < grad.size(); ++i) {
            grad.values[i] += cfg.lambda_prime * (gr.values[i] + 2.0 * cfg.sigma_tik * x.values[i]);
        }
    }
    return grad;
}

RefineResult refine_from(const Problem& problem, const Critic& critic, const tomo::Sinogram& y,
                         const tomo::Image& x0, const RefineConfig& cfg) {
    if (cfg.lambda_prime < 0.0 || cfg.sigma_tik < 0.0) {
        throw std::invalid_argument("refine: lambda_prime and sigma_tik must be >= 0");
    }
    if (!(cfg.initial_step > 0.0) || !(cfg.shrink > 0.0 && cfg.shrink < 1.0)) {
        throw std::invalid_argument("refine: invalid step rule");
    }
    RefineResult res;
    res.image = x0;
    double f = refine_objective(problem, critic, y, res.image, cfg);
    res.objective.push_back(f);
    for (std::size_t it = 0; it < cfg.max_iters; ++it) {
        const tomo::Image g = refine_gradient(problem, critic, y, res.image, cfg);
        const double gn2 = sq_norm(g.values);
        if (gn2 == 0.0) break;
        double eta = cfg.initial_step;
        bool accepted = false;
        tomo::Image trial(res.image.n);
        double ft = f;
        while (eta >= cfg.min_step) {
            for (std::size_t i = 0; i < trial.size(); ++i) trial.values[i] = res.image.values[i] - eta * g.values[i];
            ft = refine_objective(problem, critic, y, trial, cfg);
            if (ft <= f - cfg.sufficient_decrease * eta * gn2) {
                accepted = true;
                break;
            }
            eta *= cfg.shrink;
        }
        if (!accepted) break;
        res.image = std::move(trial);
        f = ft;
        res.objective.push_back(f);
        res.steps.push_back(eta);
    }
    return res;
}

RefineResult refine(const Problem& problem, const Generator& gen, const Critic& critic, const tomo::Sinogram& y,
                    const RefineConfig& cfg) {
    return refine_from(problem, critic, y, reconstruct(problem, gen, y), cfg);
}

tomo::Image critic_descent_step(const Critic& critic, const tomo::Image& x, double eta) {
    if (eta == 0.0) return x;
    const tomo::Image g = critic_value_and_gradient(critic, x).second;
    tomo::Image out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] -= eta * g.values[i];
    return out;
}

}  // namespace uar::model
