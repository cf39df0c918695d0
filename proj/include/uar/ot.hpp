#pragma once

// Exact Wasserstein-1 between equal-size empirical measures and the critic
// based dual estimate.

#include <vector>

#include "uar/model.hpp"

namespace uar::ot {

/// m points in R^d, equal weights.
struct PointCloud {
    std::size_t dim = 0;
    std::vector<std::vector<double>> points;

    std::size_t size() const noexcept { return points.size(); }
    static PointCloud from_images(const std::vector<tomo::Image>& images);
};

// Minimum-cost perfect matching on a square cost matrix (Hungarian method with
// potentials). Returns assignment[i] = column matched to row i.
std::vector<std::size_t> hungarian(const std::vector<std::vector<double>>& cost);

std::vector<std::vector<double>> euclidean_costs(const PointCloud& a, const PointCloud& b);

// min over permutations s of (1/m) sum_i ||a_i - b_s(i)||. Throws
// std::invalid_argument on unequal sizes, empty clouds or mismatched dims.
double w1_exact(const PointCloud& a, const PointCloud& b);

struct CriticEstimate {
    double estimate = 0.0;   // mean R over a minus mean R over b
    double lipschitz = 0.0;  // max ||grad_x R|| over a and b
    double normalized() const noexcept;  // estimate / max(lipschitz, 1e-12)
};

CriticEstimate w1_critic_estimate(const model::Critic& critic, const std::vector<tomo::Image>& a,
                                  const std::vector<tomo::Image>& b);

}  // namespace uar::ot
