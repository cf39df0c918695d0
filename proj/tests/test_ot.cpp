#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "uar/checks.hpp"
#include "uar/data.hpp"
#include "uar/ot.hpp"
#include "uar/rng.hpp"

using namespace uar;

TEST(Hungarian, KnownAssignment) {
    const std::vector<std::vector<double>> cost{{4, 1, 3}, {2, 0, 5}, {3, 2, 2}};
    const auto a = ot::hungarian(cost);
    double total = 0.0;
    for (std::size_t i = 0; i < 3; ++i) total += cost[i][a[i]];
    EXPECT_EQ(total, 5.0);
    EXPECT_THROW(ot::hungarian({{1, 2}, {3}}), std::invalid_argument);
}

TEST(Hungarian, MatchesBruteForceOnIntegerCosts) {
    CounterRng rng(10);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t m = 1 + rng.below(7);
        std::vector<std::vector<double>> cost(m, std::vector<double>(m));
        for (auto& row : cost) {
            for (double& v : row) v = static_cast<double>(rng.below(20));
        }
        const auto a = ot::hungarian(cost);
        std::vector<std::size_t> seen(a);
        std::sort(seen.begin(), seen.end());
        for (std::size_t i = 0; i < m; ++i) ASSERT_EQ(seen[i], i);
        double got = 0.0;
        for (std::size_t i = 0; i < m; ++i) got += cost[i][a[i]];
        std::vector<std::size_t> p(m);
        std::iota(p.begin(), p.end(), 0);
        double best = INFINITY;
        do {
            double t = 0.0;
            for (std::size_t i = 0; i < m; ++i) t += cost[i][p[i]];
            best = std::min(best, t);
        } while (std::next_permutation(p.begin(), p.end()));
        EXPECT_EQ(got, best);
    }
}

TEST(W1, OracleAndAxioms) {
    const auto s = checks::w1_oracle(100, 12);
    EXPECT_EQ(s.trials, 100u);
    EXPECT_EQ(s.mismatches, 0u);
    EXPECT_LE(s.worst_axiom_violation, 1e-9);
}

TEST(W1, TranslationAndErrors) {
    ot::PointCloud a{2, {{0, 0}, {1, 0}, {0, 1}}};
    ot::PointCloud b = a;
    for (auto& p : b.points) p[0] += 3.0;
    EXPECT_DOUBLE_EQ(ot::w1_exact(a, b), 3.0);
    EXPECT_EQ(ot::w1_exact(a, a), 0.0);
    EXPECT_THROW(ot::w1_exact(a, ot::PointCloud{2, {{0, 0}}}), std::invalid_argument);
    EXPECT_THROW(ot::w1_exact(ot::PointCloud{2, {}}, ot::PointCloud{2, {}}), std::invalid_argument);
}

TEST(CriticEstimate, TrivialCasesAndDualFeasibility) {
    model::CriticConfig cfg{6, 4, 5, 16, 0.2};
    const auto critic = model::make_critic(cfg, 3);
    std::vector<tomo::Image> a, b;
    for (std::uint64_t i = 0; i < 16; ++i) {
        a.push_back(data::random_phantom(100 + i, 32));
        b.push_back(data::random_phantom(200 + i, 32));
    }
    EXPECT_EQ(ot::w1_critic_estimate(critic, a, a).estimate, 0.0);
    auto zero = critic;
    zero.params = critic.params.zeros_like();
    EXPECT_EQ(ot::w1_critic_estimate(zero, a, b).estimate, 0.0);
    const double w1 = ot::w1_exact(ot::PointCloud::from_images(a), ot::PointCloud::from_images(b));
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto c = model::make_critic(cfg, seed);
        EXPECT_LE(ot::w1_critic_estimate(c, a, b).normalized(), w1 + 1e-9);
        EXPECT_LE(ot::w1_critic_estimate(c, b, a).normalized(), w1 + 1e-9);
    }
}
