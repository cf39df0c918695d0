#pragma once

// Variational baselines: isotropic total variation (Chambolle-Pock) and
// Tikhonov, plus the discrete gradient / divergence pair they share.

#include <cstdint>
#include <vector>

#include "uar/tomo.hpp"

namespace uar::classical {

/// Two n x n components of a discrete vector field.
struct PairField {
    std::size_t n = 0;
    std::vector<double> gx;  // d/dcol
    std::vector<double> gy;  // d/drow
};

// Forward differences with Neumann boundary: the last column (row) of gx (gy) is 0.
PairField grad_image(const tomo::Image& x);
// Negative adjoint of grad_image: <grad x, p> = -<x, div p>.
tomo::Image div_field(const PairField& p);
// sum over pixels of sqrt(gx^2 + gy^2).
double total_variation(const tomo::Image& x);

struct TVConfig {
    double lambda_tv = 1.0;
    std::size_t iters = 300;
    double theta = 1.0;
    // Step sizes; when either is <= 0, tau = 0.99 b / L and sigma = 0.99 / (b L)
    // with L the norm of the stacked operator [A; grad] and b = balance.
    double tau = 0.0;
    double sigma = 0.0;
    // A small b lets the TV dual reach the lambda ball in few iterations.
    double balance = 0.01;
};

// Sets tau and sigma from the stacked operator norm L as described above.
void set_steps(TVConfig& cfg, double L);

struct TVResult {
    tomo::Image image;
    // Objective ||Ax - y||^2 + lambda_tv * TV(x); entry 0 is the initial point.
    std::vector<double> objective;
    double tau = 0.0, sigma = 0.0;
};

// Chambolle-Pock with dual variables for both the data term and TV. Starts
// from x0 when given (zero image otherwise). Throws std::runtime_error if an
// iterate becomes non-finite.
TVResult tv_reconstruct(const tomo::Sinogram& y, const tomo::RadonOperator& op, const TVConfig& cfg,
                        const tomo::Image* x0 = nullptr);
TVResult tv_reconstruct(const tomo::Sinogram& y, const tomo::Geometry& g, const TVConfig& cfg);

// Norm of [A; grad] by power iteration.
double stacked_norm(const tomo::RadonOperator& op, std::uint64_t seed = 7);

// Gradient descent from zero on 0.5 ||Ax - y||^2 + 0.5 lambda ||x||^2 with
// step 1 / (L^2 + lambda). Optionally records ||Ax - y|| after every step.
tomo::Image tikhonov_reconstruct(const tomo::Sinogram& y, const tomo::RadonOperator& op, double lambda,
                                 std::size_t iters, std::vector<double>* residuals = nullptr);
tomo::Image tikhonov_reconstruct(const tomo::Sinogram& y, const tomo::Geometry& g, double lambda,
                                 std::size_t iters);

struct LambdaSearch {
    double best_lambda = 0.0;
    std::vector<double> lambdas;
    std::vector<double> psnr_db;
};

// Grid search on one validation pair, maximizing PSNR.
LambdaSearch select_tv_lambda(const tomo::Sinogram& y, const tomo::Image& truth, const tomo::RadonOperator& op,
                              const std::vector<double>& grid, std::size_t iters);

}  // namespace uar::classical
