#include <gtest/gtest.h>

#include <cmath>

#include "uar/data.hpp"
#include "uar/eval.hpp"
#include "uar/metrics.hpp"

using namespace uar;
using tomo::Image;

TEST(Psnr, KnownOffsetsAndIdentity) {
    const Image a(16, 0.5);
    Image b(16, 0.6);
    EXPECT_NEAR(eval::psnr(b, a), 20.0, 1e-12);
    b = Image(16, 0.501);
    EXPECT_NEAR(eval::psnr(b, a), 60.0, 1e-9);
    EXPECT_TRUE(std::isinf(eval::psnr(a, a)));
}

TEST(Ssim, ConstantImagesAndIdentity) {
    const Image x = data::random_phantom(1, 32);
    EXPECT_NEAR(eval::ssim(x, x), 1.0, 1e-12);
    // Zero variance: only the luminance term remains.
    const double a = 0.3, b = 0.7, c1 = 1e-4;
    EXPECT_NEAR(eval::ssim(Image(16, a), Image(16, b)), (2 * a * b + c1) / (a * a + b * b + c1), 1e-12);
    EXPECT_THROW(eval::ssim(Image(8, 0.1), Image(8, 0.1)), std::invalid_argument);
}

TEST(Ssim, DecreasesWithNoise) {
    const Image x = data::random_phantom(2, 32);
    Image noisy = x;
    for (std::size_t i = 0; i < noisy.size(); ++i) noisy.values[i] += (i % 3 == 0 ? 0.2 : -0.1);
    EXPECT_LT(eval::ssim(noisy, x), 0.95);
    EXPECT_NEAR(eval::ssim(noisy, x), eval::ssim(x, noisy), 1e-12);
}

TEST(Markov, BoundAndErrors) {
    const std::vector<double> v{0, 0, 1, 3};
    const auto r = eval::markov_check(v, 2.0);
    EXPECT_DOUBLE_EQ(r.empirical, 0.25);
    EXPECT_DOUBLE_EQ(r.bound, 0.5);
    EXPECT_TRUE(r.pass);
    EXPECT_THROW(eval::markov_check(std::vector<double>{-1.0}, 1.0), std::invalid_argument);
    EXPECT_THROW(eval::markov_check(v, 0.0), std::invalid_argument);
}

TEST(Markov, ReportThresholds) {
    eval::MetricsReport m;
    m.distortion = {1, 2, 3, 6};
    m.critic = {-1, 0, 2, 3};
    const auto r = eval::markov_checks(m);
    ASSERT_EQ(r.etas.size(), 4u);
    EXPECT_TRUE(r.pass());
    EXPECT_DOUBLE_EQ(r.distortion[1].bound, 1.0);
}

TEST(Summary, ExcludesInfinities) {
    const std::vector<double> v{1.0, 3.0, INFINITY};
    const auto s = eval::summarize(v);
    EXPECT_DOUBLE_EQ(s.mean, 2.0);
    EXPECT_DOUBLE_EQ(s.stddev, 1.0);
    EXPECT_TRUE(std::isinf(eval::summarize(std::vector<double>{INFINITY}).mean));
}

TEST(Sweep, DirectionalFlags) {
    auto rep = eval::summarize_sweep({{1e-3, 20.0, 10.0, 0.5}, {1e-2, 22.0, 11.0, 0.3}, {1.0, 21.0, 14.0, 0.1}});
    EXPECT_TRUE(rep.checked);
    EXPECT_TRUE(rep.pass());
    rep = eval::summarize_sweep({{1e-3, 23.0, 10.0, 0.5}, {1.0, 21.0, 9.0, 0.6}});
    EXPECT_FALSE(rep.distortion_ordered);
    EXPECT_FALSE(rep.w1_ordered);
    EXPECT_FALSE(rep.psnr_minimum_first);
    EXPECT_FALSE(rep.pass());
    rep = eval::summarize_sweep({{0.1, 20.0, 1.0, 0.0}});
    EXPECT_FALSE(rep.checked);
    EXPECT_TRUE(rep.pass());
    EXPECT_THROW(eval::summarize_sweep({{1.0, 0, 0, 0}, {0.1, 0, 0, 0}}), std::invalid_argument);
}

TEST(Evaluate, ReportFieldsAreConsistent) {
    const auto g = tomo::Geometry::parallel(16, 8, 23);
    const model::Problem problem(g);
    const auto pools = data::make_pools({4, 4, 3}, g, {0.5}, 2);
    auto gen = model::make_generator({1, 2, 3, 0.1, 0.01}, 1);
    const auto critic = model::make_critic({2, 2, 3, 4, 0.2}, 1);
    const auto r = eval::evaluate_model(problem, gen, critic, pools.test_x, pools.test_y);
    ASSERT_EQ(r.psnr_db.size(), 3u);
    double d = 0.0, rg = 0.0, rx = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        const Image x = model::reconstruct(problem, gen, pools.test_y[i]);
        EXPECT_DOUBLE_EQ(r.psnr_db[i], eval::psnr(x, pools.test_x[i]));
        d += r.distortion[i];
        rg += model::critic_value(critic, x);
        rx += model::critic_value(critic, pools.test_x[i]);
    }
    EXPECT_NEAR(r.mean_distortion, d / 3.0, 1e-12);
    EXPECT_NEAR(r.w1_estimate, (rg - rx) / 3.0, 1e-12);
}

TEST(Descent, ZeroCriticNeverImproves) {
    const auto g = tomo::Geometry::parallel(16, 8, 23);
    const model::Problem problem(g);
    const auto pools = data::make_pools({6, 6, 1}, g, {0.5}, 3);
    const auto gen = model::make_generator({1, 2, 3, 0.1, 0.01}, 1);
    auto critic = model::make_critic({2, 2, 3, 4, 0.2}, 1);
    critic.params = critic.params.zeros_like();
    const auto rep = eval::wasserstein_descent_check(problem, gen, critic, pools, {1e-3, 1e-2}, 3, 4, 5);
    ASSERT_EQ(rep.probes.size(), 3u);
    for (const auto& p : rep.probes) {
        for (double w : p.w1) EXPECT_EQ(w, p.baseline);
    }
    EXPECT_EQ(rep.improved_fraction(), 0.0);
}

TEST(Stability, IdenticalGeneratorsHaveZeroDistance) {
    const auto g = tomo::Geometry::parallel(16, 8, 23);
    const model::Problem problem(g);
    const auto gen = model::make_generator({1, 2, 3, 0.1, 0.01}, 4);
    const auto pools = data::make_pools({1, 1, 2}, g, {0.5}, 4);
    const auto r = eval::stability_smoke([&](double) { return gen; }, 0.5, 0.6, problem, pools.test_y);
    EXPECT_EQ(r.mean_abs_distance, 0.0);
    EXPECT_TRUE(r.pass());
}
