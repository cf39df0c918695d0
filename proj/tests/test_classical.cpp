#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <vector>

#include "uar/classical.hpp"
#include "uar/data.hpp"
#include "uar/metrics.hpp"
#include "uar/rng.hpp"

using namespace uar;
using tomo::Geometry;
using tomo::Image;

namespace {

Image random_image(std::size_t n, std::uint64_t seed) {
    Image x(n);
    CounterRng rng(seed);
    for (double& v : x.values) v = rng.uniform(-1.0, 1.0);
    return x;
}

}  // namespace

TEST(GradDiv, NegativeAdjoint) {
    const Image x = random_image(9, 1);
    classical::PairField p{9, std::vector<double>(81), std::vector<double>(81)};
    CounterRng rng(2);
    for (std::size_t i = 0; i < 81; ++i) {
        p.gx[i] = rng.normal();
        p.gy[i] = rng.normal();
    }
    const auto gx = classical::grad_image(x);
    const Image d = classical::div_field(p);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < 81; ++i) {
        lhs += gx.gx[i] * p.gx[i] + gx.gy[i] * p.gy[i];
        rhs -= x.values[i] * d.values[i];
    }
    EXPECT_NEAR(lhs, rhs, 1e-12 * std::abs(lhs));
}

TEST(GradDiv, NeumannBoundaryAndConstants) {
    const auto g = classical::grad_image(Image(6, 3.0));
    for (std::size_t i = 0; i < 36; ++i) {
        EXPECT_EQ(g.gx[i], 0.0);
        EXPECT_EQ(g.gy[i], 0.0);
    }
    EXPECT_EQ(classical::total_variation(Image(6, 3.0)), 0.0);
    Image step(4);
    for (std::size_t r = 0; r < 4; ++r) step.at(r, 3) = 1.0;
    EXPECT_DOUBLE_EQ(classical::total_variation(step), 4.0);
}

// Converged gradient descent must satisfy the normal equations.
TEST(Tikhonov, MatchesNormalEquations) {
    const auto g = Geometry::parallel(8, 6, 13);
    const tomo::RadonOperator op(g);
    const std::size_t cols = 64, rows = g.n_angles * g.n_det;
    Eigen::MatrixXd a(rows, cols);
    for (std::size_t j = 0; j < cols; ++j) {
        Image e(8);
        e.values[j] = 1.0;
        tomo::Sinogram s(g.n_angles, g.n_det);
        op.apply(e.values, s.values);
        for (std::size_t i = 0; i < rows; ++i) a(i, j) = s.values[i];
    }
    tomo::Sinogram y(g.n_angles, g.n_det);
    CounterRng rng(3);
    for (double& v : y.values) v = rng.normal();
    const double lambda = 20.0;
    const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.values.data(), rows);
    const Eigen::VectorXd ref =
        (a.transpose() * a + lambda * Eigen::MatrixXd::Identity(cols, cols)).ldlt().solve(a.transpose() * yv);
    const Image x = classical::tikhonov_reconstruct(y, op, lambda, 3000);
    for (std::size_t j = 0; j < cols; ++j) EXPECT_NEAR(x.values[j], ref[j], 1e-8);
}

TEST(Tikhonov, ResidualDecreasesAndPenaltyShrinks) {
    const auto g = Geometry::parallel(16, 40, 23);
    const tomo::RadonOperator op(g);
    const Image truth = data::random_phantom(5, 16);
    tomo::Sinogram y(g.n_angles, g.n_det);
    op.apply(truth.values, y.values);
    std::vector<double> res;
    classical::tikhonov_reconstruct(y, op, 0.0, 50, &res);
    for (std::size_t i = 1; i < res.size(); ++i) EXPECT_LE(res[i], res[i - 1] * (1 + 1e-12));
    double prev = INFINITY;
    for (double lambda : {1.0, 100.0, 10000.0}) {
        const Image x = classical::tikhonov_reconstruct(y, op, lambda, 100);
        double norm = 0.0;
        for (double v : x.values) norm += v * v;
        EXPECT_LT(norm, prev);
        prev = norm;
    }
}

TEST(TotalVariation, ZeroDataGivesZero) {
    const auto g = Geometry::parallel(16, 8, 23);
    classical::TVConfig cfg;
    cfg.lambda_tv = 10.0;
    cfg.iters = 50;
    const auto r = classical::tv_reconstruct(tomo::Sinogram(g.n_angles, g.n_det), g, cfg);
    for (double v : r.image.values) EXPECT_EQ(v, 0.0);
}

TEST(TotalVariation, ZeroDataFromRandomStartDecaysToZero) {
    const auto g = Geometry::parallel(16, 8, 23);
    const tomo::RadonOperator op(g);
    CounterRng rng(21);
    Image x0(16);
    for (double& v : x0.values) v = rng.uniform();
    classical::TVConfig cfg;
    cfg.lambda_tv = 10.0;
    cfg.iters = 3000;
    const auto r = classical::tv_reconstruct(tomo::Sinogram(g.n_angles, g.n_det), op, cfg, &x0);
    EXPECT_LE(r.objective.back(), 1e-6 * r.objective.front());
}

// Primal-dual iterations do not decrease the primal objective monotonically;
// on desk data the trace is required to settle below its value at iteration 20.
TEST(TotalVariation, ObjectiveSettlesAfterWarmup) {
    const auto g = Geometry::desk_default();
    const tomo::RadonOperator op(g);
    for (std::uint64_t s = 0; s < 2; ++s) {
        const Image truth = data::random_phantom(31 + s, 64);
        const auto y = data::simulate_measurement(truth, op, {0.5}, 41 + s);
        classical::TVConfig cfg;
        cfg.lambda_tv = 4.0;
        const auto r = classical::tv_reconstruct(y, op, cfg);
        ASSERT_GT(r.objective.size(), 21u);
        EXPECT_LE(r.objective.back(), r.objective[20]);
        EXPECT_LE(r.objective[20], r.objective.front());
    }
}

TEST(TotalVariation, StepSizesSatisfyCondition) {
    const auto g = Geometry::parallel(16, 8, 23);
    const tomo::RadonOperator op(g);
    classical::TVConfig cfg;
    cfg.iters = 5;
    const auto r = classical::tv_reconstruct(tomo::Sinogram(g.n_angles, g.n_det), op, cfg);
    const double l = classical::stacked_norm(op);
    EXPECT_LE(r.tau * r.sigma * l * l, 1.0);
}

// Weights far above the data scale need many more iterations than the
// default budget, so the largest weight here is 100.
TEST(TotalVariation, LargeWeightFlattensTheImage) {
    const auto g = Geometry::parallel(16, 8, 23);
    const tomo::RadonOperator op(g);
    const Image truth = data::random_phantom(9, 16);
    tomo::Sinogram y(g.n_angles, g.n_det);
    op.apply(truth.values, y.values);
    std::vector<classical::TVResult> runs;
    for (double lambda : {0.01, 1.0, 100.0}) {
        classical::TVConfig cfg;
        cfg.lambda_tv = lambda;
        cfg.iters = 300;
        runs.push_back(classical::tv_reconstruct(y, op, cfg));
        EXPECT_LT(runs.back().objective.back(), runs.back().objective.front());
    }
    EXPECT_LT(classical::total_variation(runs[1].image), classical::total_variation(runs[0].image));
    EXPECT_LT(classical::total_variation(runs[2].image), 0.1 * classical::total_variation(runs[0].image));
}

TEST(TotalVariation, BeatsFbpOnNoisyPhantom) {
    const auto g = Geometry::desk_default();
    const tomo::RadonOperator op(g);
    const Image truth = data::random_phantom(11, 64);
    const auto y = data::simulate_measurement(truth, op, {0.5}, 12);
    classical::TVConfig cfg;
    cfg.lambda_tv = 1.0;
    const auto r = classical::tv_reconstruct(y, op, cfg);
    EXPECT_GT(eval::psnr(r.image, truth), eval::psnr(tomo::fbp(y, g), truth) + 2.0);
}

TEST(TotalVariation, LambdaSearchReportsGrid) {
    const auto g = Geometry::parallel(32, 15, 47);
    const tomo::RadonOperator op(g);
    const Image truth = data::random_phantom(13, 32);
    const auto y = data::simulate_measurement(truth, op, {0.5}, 14);
    const auto s = classical::select_tv_lambda(y, truth, op, {0.25, 1.0, 4.0}, 100);
    ASSERT_EQ(s.psnr_db.size(), 3u);
    const auto best = std::max_element(s.psnr_db.begin(), s.psnr_db.end()) - s.psnr_db.begin();
    EXPECT_EQ(s.best_lambda, s.lambdas[best]);
}
