#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "uar/tensor.hpp"

namespace uar::nn {

/// Named learnable tensors, iterated in lexicographic name order.
class ParamSet {
public:
    using Map = std::map<std::string, ad::Tensor>;

    void add(const std::string& name, ad::Tensor value);
    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    const ad::Tensor& at(const std::string& name) const;
    ad::Tensor& at(const std::string& name);

    std::size_t size() const noexcept { return params_.size(); }
    bool empty() const noexcept { return params_.empty(); }
    std::size_t total_elements() const noexcept;
    Map::const_iterator begin() const noexcept { return params_.begin(); }
    Map::const_iterator end() const noexcept { return params_.end(); }
    Map::iterator begin() noexcept { return params_.begin(); }
    Map::iterator end() noexcept { return params_.end(); }

    // Deep copy; the result shares no buffers with *this.
    ParamSet clone() const;
    // Same names and shapes, all zeros.
    ParamSet zeros_like() const;
    bool all_finite() const noexcept;
    bool same_layout(const ParamSet& other) const noexcept;

private:
    Map params_;
};

// Registers every parameter as a leaf of `graph`; names are preserved.
ParamSet bind(ad::Graph& graph, const ParamSet& params);
// d root / d p for every p in `bound` (as returned by bind).
ParamSet gradients(ad::Graph& graph, const ad::Tensor& root, const ParamSet& bound);

enum class InitKind { uniform_fan_in, constant };

struct ParamSpec {
    std::string name;
    ad::Shape shape;
    InitKind init = InitKind::constant;
    std::size_t fan_in = 1;  // uniform_fan_in: U[-b, b], b = 1/sqrt(fan_in)
    double value = 0.0;      // constant
};

ParamSet init_params(const std::vector<ParamSpec>& spec, std::uint64_t seed);

struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.99;
    double eps = 1e-8;
    std::uint64_t t = 0;
    ParamSet m;
    ParamSet v;

    static AdamState for_params(const ParamSet& params, double lr, double beta1 = 0.5, double beta2 = 0.99,
                                double eps = 1e-8);
};

// One bias-corrected Adam update. Throws std::runtime_error (and leaves
// params and state untouched) if any gradient is non-finite.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state);

// Clamps every entry to [-bound, bound].
void clip_weights(ParamSet& params, double bound);

}  // namespace uar::nn
