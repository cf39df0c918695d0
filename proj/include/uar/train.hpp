#pragma once

// Three-phase adversarial training of the reconstruction network and the critic.

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "uar/data.hpp"
#include "uar/model.hpp"

namespace uar::model {

struct TrainConfig {
    double lambda = 0.1;
    double lambda_gp = 10.0;
    std::size_t batch_size = 1;
    // Passes over N = |train_x| per phase: critic only, generator only, joint.
    std::size_t epochs[3] = {10, 5, 25};
    double lr[3] = {1e-4, 1e-4, 2e-5};
    double beta1 = 0.5;
    double beta2 = 0.99;
    std::size_t generator_updates = 2;  // per critic update in phase 3
    std::uint64_t seed = 1;
    GpMode gp_mode = GpMode::exact;
    // Per-bin fidelity keeps lambda meaningful against a summed residual of
    // a few thousand bins.
    FidelityScale fidelity = FidelityScale::mean;
    std::size_t checkpoint_every = 5;  // epochs; 0 disables periodic checkpoints
    std::size_t probe_size = 8;        // samples for the logged Wasserstein estimate
    std::size_t validation_size = 4;   // test pairs for the logged PSNR

    std::size_t steps_per_epoch(std::size_t n) const { return (n + batch_size - 1) / batch_size; }
    void validate() const;
};

struct LossRecord {
    int phase = 0;
    std::size_t step = 0;
    char kind = 'c';  // 'c' critic, 'g' generator
    double value = 0.0;
};

struct EpochRecord {
    int phase = 0;
    std::size_t epoch = 0;
    double validation_psnr = std::numeric_limits<double>::quiet_NaN();
    double w1_estimate = 0.0;  // mean R(G(y)) - mean R(x) over the probe set
};

struct TrainLog {
    std::vector<LossRecord> losses;
    std::vector<EpochRecord> epochs;
};

struct TrainState {
    Generator gen;
    Critic critic;
    nn::AdamState gen_opt;
    nn::AdamState critic_opt;
    int phase = 0;
    std::size_t step = 0;
};

struct TrainHooks {
    // Called at every phase end and every checkpoint_every epochs.
    std::function<void(const std::string& tag, const TrainState&)> checkpoint;
    std::function<void(const std::string&)> log;
};

struct TrainResult {
    Generator gen;
    Critic critic;
    TrainLog log;
};

/// Thrown when a loss turns non-finite; the last emitted checkpoint is the
/// last good state.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

TrainResult train(const data::DatasetPools& pools, const Problem& problem, const GeneratorConfig& gcfg,
                  const CriticConfig& ccfg, const TrainConfig& cfg, const TrainHooks& hooks = {});

// One optimizer step each; exposed for tests.
double critic_step(Critic& critic, nn::AdamState& opt, const std::vector<tomo::Image>& batch_x,
                   const std::vector<tomo::Image>& batch_u, double lambda_gp, std::uint64_t seed, GpMode mode);
double generator_step(Generator& gen, nn::AdamState& opt, const Problem& problem, const Critic& critic,
                      const std::vector<tomo::Sinogram>& batch_y, double lambda,
                      FidelityScale scale = FidelityScale::sum);

// mean R(G(y_j)) - mean R(x_j).
double critic_gap(const Problem& problem, const Generator& gen, const Critic& critic,
                  const std::vector<tomo::Sinogram>& ys, const std::vector<tomo::Image>& xs);

}  // namespace uar::model
