#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "uar/data.hpp"
#include "uar/parallel.hpp"
#include "uar/rng.hpp"

using namespace uar;

TEST(Rng, CounterStreamsAreReproducible) {
    CounterRng a(5), b(5), c(6);
    for (int i = 0; i < 10; ++i) {
        const auto va = a.next_u64();
        EXPECT_EQ(va, b.next_u64());
        EXPECT_NE(va, c.next_u64());
    }
    EXPECT_NE(derive_seed(1, 1, 0), derive_seed(1, 2, 0));
    EXPECT_NE(derive_seed(1, 1, 0), derive_seed(1, 1, 1));
}

TEST(Rng, NormalMoments) {
    CounterRng rng(17);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        s += v;
        s2 += v * v;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(Phantom, RangeAndSupport) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto x = data::random_phantom(seed, 64);
        double total = 0.0;
        for (std::size_t r = 0; r < 64; ++r) {
            for (std::size_t c = 0; c < 64; ++c) {
                const double v = x.at(r, c);
                ASSERT_GE(v, 0.0);
                ASSERT_LE(v, 1.0);
                const double dx = (c + 0.5) / 32.0 - 1.0, dy = 1.0 - (r + 0.5) / 32.0;
                if (dx * dx + dy * dy > 1.0) {
                    ASSERT_EQ(v, 0.0);
                }
                total += v;
            }
        }
        EXPECT_GT(total, 0.0);
    }
    EXPECT_THROW(data::random_phantom(1, 8), std::invalid_argument);
}

TEST(Phantom, RasterizesSingleEllipse) {
    const data::EllipseSpec e{0.0, 0.0, 0.5, 0.25, 0.0, 0.7};
    const auto x = data::rasterize({e}, 32);
    EXPECT_DOUBLE_EQ(x.at(16, 16), 0.7);
    EXPECT_EQ(x.at(16, 30), 0.0);
    EXPECT_EQ(x.at(2, 16), 0.0);
    // Area pi a b in normalized units, pixel area (2/32)^2.
    double count = 0.0;
    for (double v : x.values) count += v > 0.0;
    EXPECT_NEAR(count * 4.0 / 1024.0, 3.14159265 * 0.125, 0.03);
}

TEST(Measurement, NoiseStatistics) {
    const auto g = tomo::Geometry::desk_default();
    const auto x = data::random_phantom(3, 64);
    const auto clean = data::simulate_measurement(x, g, {0.0}, 1);
    const auto noisy = data::simulate_measurement(x, g, {0.5}, 1);
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const double d = noisy.values[i] - clean.values[i];
        s += d;
        s2 += d * d;
    }
    const double n = static_cast<double>(clean.size());
    EXPECT_NEAR(s / n, 0.0, 0.03);
    EXPECT_NEAR(std::sqrt(s2 / n), 0.5, 0.03);
    EXPECT_THROW(data::simulate_measurement(x, g, {-1.0}, 1), std::invalid_argument);
}

TEST(Pools, ReproducibleDisjointAndThreadIndependent) {
    const auto g = tomo::Geometry::parallel(16, 8, 23);
    const data::PoolCounts counts{5, 4, 3};
    set_worker_count(1);
    const auto a = data::make_pools(counts, g, {0.5}, 7);
    set_worker_count(3);
    const auto b = data::make_pools(counts, g, {0.5}, 7);
    set_worker_count(1);
    EXPECT_EQ(a.train_x, b.train_x);
    EXPECT_EQ(a.train_y, b.train_y);
    EXPECT_EQ(a.test_x, b.test_x);
    EXPECT_EQ(a.test_y, b.test_y);
    std::set<std::uint64_t> all;
    for (const auto* v : {&a.x_index, &a.y_index, &a.test_index}) all.insert(v->begin(), v->end());
    EXPECT_EQ(all.size(), 12u);
    const auto c = data::make_pools(counts, g, {0.5}, 8);
    EXPECT_NE(a.train_x, c.train_x);
    EXPECT_THROW(data::make_pools({0, 1, 1}, g, {0.5}, 7), std::invalid_argument);
}

namespace {

double max_abs_diff(const tomo::Sinogram& a, const tomo::Sinogram& b) {
    EXPECT_EQ(a.size(), b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
    return m;
}

}  // namespace

// The y pool must not be a noisy copy of the x pool. Summation order differs
// between the two forward paths, so equality is up to rounding.
TEST(Pools, TrainingMarginalsAreUnpaired) {
    const auto g = tomo::Geometry::parallel(16, 8, 23);
    const auto p = data::make_pools({6, 6, 2}, g, {0.0}, 3);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 6; ++j) {
            EXPECT_GT(max_abs_diff(tomo::radon_forward(p.train_x[i], g), p.train_y[j]), 1e-3);
        }
    }
    EXPECT_LE(max_abs_diff(tomo::radon_forward(p.test_x[1], g), p.test_y[1]), 1e-12);
}
