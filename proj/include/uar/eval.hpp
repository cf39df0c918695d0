#pragma once

// Evaluation reports and the empirical checks of the theory: lambda sweep
// orderings, the critic gradient step versus exact W1, Markov bounds and
// noise-level stability.

#include <cstdint>
#include <functional>
#include <vector>

#include "uar/metrics.hpp"
#include "uar/ot.hpp"
#include "uar/train.hpp"

namespace uar::eval {

struct MetricsReport {
    std::vector<double> psnr_db;
    std::vector<double> ssim;
    std::vector<double> distortion;  // ||y - A G(y)||^2
    std::vector<double> critic;      // R(G(y))
    Summary psnr_summary, ssim_summary;
    double mean_distortion = 0.0;
    double w1_estimate = 0.0;  // mean R(G(y)) - mean R(x) over the evaluated pairs
};

MetricsReport evaluate_reconstructions(const model::Problem& problem, const model::Critic& critic,
                                       const std::vector<tomo::Image>& recon, const std::vector<tomo::Image>& truth,
                                       const std::vector<tomo::Sinogram>& ys);
MetricsReport evaluate_model(const model::Problem& problem, const model::Generator& gen,
                             const model::Critic& critic, const std::vector<tomo::Image>& test_x,
                             const std::vector<tomo::Sinogram>& test_y);

struct MarkovReport {
    std::vector<double> etas;
    std::vector<MarkovResult> distortion;  // U = ||y - A G(y)||^2
    std::vector<MarkovResult> critic;      // U = R(G(y)) - min_j R(G(y_j))
    bool pass() const;
};

// Thresholds at {0.5, 1, 2, 4} times the mean of each statistic (1 where the mean is 0).
MarkovReport markov_checks(const MetricsReport& report);

struct LambdaSweepRow {
    double lambda = 0.0;
    double mean_psnr = 0.0;
    double mean_distortion = 0.0;
    double w1_estimate = 0.0;
};

struct LambdaSweepReport {
    std::vector<LambdaSweepRow> rows;
    bool checked = false;  // false for fewer than two rows
    bool distortion_ordered = false;  // distortion(smallest) <= distortion(largest)
    bool w1_ordered = false;          // w1(largest) <= w1(smallest)
    bool psnr_minimum_first = false;  // psnr(smallest) is the sweep minimum
    bool pass() const { return !checked || (distortion_ordered && w1_ordered && psnr_minimum_first); }
};

// Trains one model per lambda (strictly increasing) with identical seeds and
// evaluates each on the test pairs.
LambdaSweepReport lambda_sweep(const data::DatasetPools& pools, const model::Problem& problem,
                               const model::GeneratorConfig& gcfg, const model::CriticConfig& ccfg,
                               const model::TrainConfig& base, const std::vector<double>& lambdas,
                               const model::TrainHooks& hooks = {});
LambdaSweepReport summarize_sweep(std::vector<LambdaSweepRow> rows);

struct DescentProbe {
    std::uint64_t seed = 0;
    double baseline = 0.0;       // W1 at eta = 0
    std::vector<double> w1;      // one per eta
    bool improved() const;       // some eta beats the baseline
};

struct DescentReport {
    std::vector<double> etas;
    std::vector<DescentProbe> probes;
    double improved_fraction() const;
};

// For every probe seed: 32 y from train_y and 32 x from train_x (without
// replacement), W1 between {g_eta(G(y))} and {x} with g_eta(x) = x - eta grad R(x).
DescentReport wasserstein_descent_check(const model::Problem& problem, const model::Generator& gen,
                                        const model::Critic& critic, const data::DatasetPools& pools,
                                        const std::vector<double>& etas, std::size_t probes = 10,
                                        std::size_t batch = 32, std::uint64_t master_seed = 99);

struct StabilityReport {
    double sigma_a = 0.0, sigma_b = 0.0;
    double mean_abs_distance = 0.0;  // mean over probes and pixels
    double bound = 0.2;
    bool pass() const { return mean_abs_distance <= bound; }
};

// train_fn(sigma_e) returns a generator trained at that noise level; both
// are applied to the same probe sinograms.
StabilityReport stability_smoke(const std::function<model::Generator(double)>& train_fn, double sigma_a,
                                double sigma_b, const model::Problem& problem,
                                const std::vector<tomo::Sinogram>& probe_y, double bound = 0.2);

}  // namespace uar::eval
