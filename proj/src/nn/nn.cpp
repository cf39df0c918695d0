#include "uar/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "uar/rng.hpp"

namespace uar::nn {

void ParamSet::add(const std::string& name, ad::Tensor value) {
    if (!value.defined()) throw std::invalid_argument("ParamSet::add: undefined tensor for " + name);
    if (!params_.emplace(name, std::move(value)).second) {
        throw std::invalid_argument("ParamSet::add: duplicate parameter " + name);
    }
}

const ad::Tensor& ParamSet::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
    return it->second;
}

ad::Tensor& ParamSet::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
    return it->second;
}

std::size_t ParamSet::total_elements() const noexcept {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t.size();
    return n;
}

ParamSet ParamSet::clone() const {
    ParamSet out;
    for (const auto& [name, t] : params_) out.add(name, t.clone());
    return out;
}

ParamSet ParamSet::zeros_like() const {
    ParamSet out;
    for (const auto& [name, t] : params_) out.add(name, ad::Tensor::zeros_like(t));
    return out;
}

bool ParamSet::all_finite() const noexcept {
    return std::all_of(params_.begin(), params_.end(), [](const auto& kv) { return kv.second.all_finite(); });
}

bool ParamSet::same_layout(const ParamSet& other) const noexcept {
    if (params_.size() != other.params_.size()) return false;
    auto it = other.params_.begin();
    for (const auto& [name, t] : params_) {
        if (it->first != name || it->second.shape() != t.shape()) return false;
        ++it;
    }
    return true;
}

ParamSet bind(ad::Graph& graph, const ParamSet& params) {
    ParamSet out;
    for (const auto& [name, t] : params) out.add(name, graph.variable(t));
    return out;
}

ParamSet gradients(ad::Graph& graph, const ad::Tensor& root, const ParamSet& bound) {
    std::vector<ad::Tensor> wrt;
    wrt.reserve(bound.size());
    for (const auto& [_, t] : bound) wrt.push_back(t);
    auto grads = graph.gradients(root, wrt, false);
    ParamSet out;
    std::size_t i = 0;
    for (const auto& [name, _] : bound) out.add(name, grads[i++].detach());
    return out;
}

namespace {

std::uint64_t name_hash(const std::string& name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

ParamSet init_params(const std::vector<ParamSpec>& spec, std::uint64_t seed) {
    ParamSet out;
    for (const auto& p : spec) {
        ad::Tensor t(p.shape);
        auto data = t.mutable_data();
        if (p.init == InitKind::uniform_fan_in) {
            if (p.fan_in == 0) throw std::invalid_argument("init_params: zero fan_in for " + p.name);
            const double bound = 1.0 / std::sqrt(static_cast<double>(p.fan_in));
            CounterRng rng(derive_seed(seed, name_hash(p.name), 0));
            for (double& v : data) v = rng.uniform(-bound, bound);
        } else {
            std::fill(data.begin(), data.end(), p.value);
        }
        out.add(p.name, std::move(t));
    }
    return out;
}

AdamState AdamState::for_params(const ParamSet& params, double lr, double beta1, double beta2, double eps) {
    AdamState s;
    s.lr = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    s.m = params.zeros_like();
    s.v = params.zeros_like();
    return s;
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state) {
    if (!params.same_layout(grads)) throw std::invalid_argument("adam_step: gradients do not match parameters");
    if (state.m.empty() && state.v.empty()) {
        state.m = params.zeros_like();
        state.v = params.zeros_like();
    }
    if (!params.same_layout(state.m) || !params.same_layout(state.v)) {
        throw std::invalid_argument("adam_step: optimizer state does not match parameters");
    }
    for (const auto& [name, g] : grads) {
        if (!g.all_finite()) throw std::runtime_error("adam_step: non-finite gradient for parameter " + name);
    }

    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    auto git = grads.begin();
    auto mit = state.m.begin();
    auto vit = state.v.begin();
    for (auto& [name, p] : params) {
        auto pd = p.mutable_data();
        auto gd = git->second.data();
        auto md = mit->second.mutable_data();
        auto vd = vit->second.mutable_data();
        for (std::size_t i = 0; i < pd.size(); ++i) {
            md[i] = state.beta1 * md[i] + (1.0 - state.beta1) * gd[i];
            vd[i] = state.beta2 * vd[i] + (1.0 - state.beta2) * gd[i] * gd[i];
            const double m_hat = md[i] / c1;
            const double v_hat = vd[i] / c2;
            pd[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
        ++git;
        ++mit;
        ++vit;
    }
}

void clip_weights(ParamSet& params, double bound) {
    if (!(bound > 0.0)) throw std::invalid_argument("clip_weights: bound must be positive");
    for (auto& [_, p] : params) {
        for (double& v : p.mutable_data()) v = std::clamp(v, -bound, bound);
    }
}

}  // namespace uar::nn
