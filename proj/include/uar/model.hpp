#pragma once

// Unrolled primal-dual reconstruction network, convolutional critic, their
// training losses and variational refinement.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "uar/nn.hpp"
#include "uar/tomo.hpp"

namespace uar::model {

struct GeneratorConfig {
    std::size_t layers = 8;     // unrolled iterations L
    std::size_t channels = 16;  // hidden channels of every block
    std::size_t kernel = 5;
    double prelu_init = 0.1;
    double step_init = 0.01;  // sigma_l and tau_l
};

struct CriticConfig {
    std::size_t conv_layers = 6;     // layer i: stride 2 when i is odd
    std::size_t base_channels = 16;  // layer i has base * 2^ceil(i/2) channels
    std::size_t kernel = 5;
    std::size_t hidden = 256;  // 0: a single dense layer after pooling
    double slope = 0.2;
};

std::vector<nn::ParamSpec> generator_spec(const GeneratorConfig& cfg);
std::vector<nn::ParamSpec> critic_spec(const CriticConfig& cfg);
std::size_t critic_channels(const CriticConfig& cfg, std::size_t layer);

/// Parameters and architecture of the reconstruction network.
struct Generator {
    GeneratorConfig config;
    nn::ParamSet params;
};

struct Critic {
    CriticConfig config;
    nn::ParamSet params;
};

Generator make_generator(const GeneratorConfig& cfg, std::uint64_t seed);
Critic make_critic(const CriticConfig& cfg, std::uint64_t seed);

/// Shared geometry-bound state: the ray transform as a tensor operator.
class Problem {
public:
    explicit Problem(tomo::Geometry g);
    const tomo::Geometry& geometry() const noexcept { return op_->geometry(); }
    const std::shared_ptr<const tomo::RadonOperator>& op() const noexcept { return op_; }

    ad::Tensor forward(const ad::Tensor& x) const { return ad::apply_linear(x, op_, false); }
    ad::Tensor adjoint(const ad::Tensor& y) const { return ad::apply_linear(y, op_, true); }
    tomo::Sinogram forward(const tomo::Image& x) const;
    tomo::Image fbp(const tomo::Sinogram& y) const { return tomo::fbp(y, geometry()); }

private:
    std::shared_ptr<const tomo::RadonOperator> op_;
};

// G(y) on tensors. `params` may be bound to a graph; y is [1,A,D] and x0 is
// the FBP initialization as [1,n,n]. Returns x^(L) as [1,n,n].
ad::Tensor generator_forward(const Problem& problem, const GeneratorConfig& cfg, const nn::ParamSet& params,
                             const ad::Tensor& y, const ad::Tensor& x0);
// Graph-free evaluation.
tomo::Image reconstruct(const Problem& problem, const Generator& gen, const tomo::Sinogram& y);

// R(x) as a scalar tensor; x is [1,n,n].
ad::Tensor critic_forward(const CriticConfig& cfg, const nn::ParamSet& params, const ad::Tensor& x);
double critic_value(const Critic& critic, const tomo::Image& x);
// R(x) and grad_x R(x), the latter as an image.
std::pair<double, tomo::Image> critic_value_and_gradient(const Critic& critic, const tomo::Image& x);

enum class GpMode { exact, directional_fd };
const char* gp_mode_name(GpMode mode);
GpMode parse_gp_mode(const std::string& name);

inline constexpr double kDirectionalStep = 1e-3;

// Mean over the batch of R(x_j) - R(u_j) + lambda_gp (||grad R(x_eps_j)|| - 1)^2,
// x_eps_j = eps_j x_j + (1 - eps_j) u_j with eps_j ~ U[0,1) drawn from seed.
// `params` must be bound to `graph`. Exact mode needs a second-order graph.
// Directional mode replaces the gradient norm by |R(x_eps + h v) - R(x_eps)| / h
// with v the unit normalized (detached) input gradient at x_eps, h = 1e-3.
ad::Tensor critic_loss(ad::Graph& graph, const CriticConfig& cfg, const nn::ParamSet& params,
                       const std::vector<tomo::Image>& batch_x, const std::vector<tomo::Image>& batch_u,
                       double lambda_gp, std::uint64_t seed, GpMode mode);

// How the data-fidelity term of the generator loss is scaled: the plain
// squared norm, or the squared norm divided by the number of detector bins.
enum class FidelityScale { sum, mean };
const char* fidelity_scale_name(FidelityScale scale);
FidelityScale parse_fidelity_scale(const std::string& name);

// Mean of s ||y_j - A G(y_j)||^2 + lambda R(G(y_j)), s = 1 (sum) or 1/M (mean,
// M sinogram bins). The critic parameters are used as constants.
ad::Tensor generator_loss(const Problem& problem, const GeneratorConfig& gcfg, const nn::ParamSet& gen_params,
                          const Critic& critic, const std::vector<tomo::Sinogram>& batch_y, double lambda,
                          FidelityScale scale = FidelityScale::sum);

struct RefineConfig {
    double lambda_prime = 0.1;
    double sigma_tik = 0.0;
    std::size_t max_iters = 100;
    double initial_step = 1e-2;
    double shrink = 0.5;
    double sufficient_decrease = 1e-4;
    double min_step = 1e-12;
    double fidelity_weight = 1.0;
};

struct RefineResult {
    tomo::Image image;
    std::vector<double> objective;  // entry 0 at the initial point
    std::vector<double> steps;      // accepted step per iteration
};

// F(x) = w ||Ax - y|| + lambda' (R(x) + sigma ||x||^2).
double refine_objective(const Problem& problem, const Critic& critic, const tomo::Sinogram& y, const tomo::Image& x,
                        const RefineConfig& cfg);
// grad F; the fidelity gradient is zero when ||Ax - y|| < 1e-12.
tomo::Image refine_gradient(const Problem& problem, const Critic& critic, const tomo::Sinogram& y,
                            const tomo::Image& x, const RefineConfig& cfg);
// Armijo backtracking gradient descent from x0.
RefineResult refine_from(const Problem& problem, const Critic& critic, const tomo::Sinogram& y,
                         const tomo::Image& x0, const RefineConfig& cfg);
// Starts from G(y).
RefineResult refine(const Problem& problem, const Generator& gen, const Critic& critic, const tomo::Sinogram& y,
                    const RefineConfig& cfg);

// x - eta grad R(x).
tomo::Image critic_descent_step(const Critic& critic, const tomo::Image& x, double eta);

}  // namespace uar::model
