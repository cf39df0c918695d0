#include "uar/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "uar/parallel.hpp"
#include "uar/rng.hpp"

namespace uar::data {

std::vector<EllipseSpec> random_ellipses(std::uint64_t seed) {
    CounterRng rng(seed);
    std::vector<EllipseSpec> out;
    EllipseSpec background;
    background.a = rng.uniform(0.75, 0.95);
    background.b = rng.uniform(0.6, 0.9);
    background.angle = rng.uniform(0.0, std::numbers::pi);
    background.intensity = rng.uniform(0.2, 0.5);
    out.push_back(background);
    const std::size_t count = 4 + rng.below(6);
    for (std::size_t i = 0; i < count; ++i) {
        EllipseSpec e;
        e.cx = rng.uniform(-0.7, 0.7);
        e.cy = rng.uniform(-0.7, 0.7);
        e.a = rng.uniform(0.05, 0.5);
        e.b = rng.uniform(0.05, 0.5);
        e.angle = rng.uniform(0.0, std::numbers::pi);
        e.intensity = rng.uniform(-0.4, 0.6);
        out.push_back(e);
    }
    return out;
}

tomo::Image rasterize(const std::vector<EllipseSpec>& ellipses, std::size_t n) {
    tomo::Image img(n);
    const double half = 0.5 * static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double v = (half - static_cast<double>(r) - 0.5) / half;
        for (std::size_t c = 0; c < n; ++c) {
            const double u = (static_cast<double>(c) + 0.5 - half) / half;
            if (u * u + v * v > 1.0) continue;
            double value = 0.0;
            for (const auto& e : ellipses) {
                const double cs = std::cos(e.angle), sn = std::sin(e.angle);
                const double du = u - e.cx, dv = v - e.cy;
                const double p = (du * cs + dv * sn) / e.a;
                const double q = (-du * sn + dv * cs) / e.b;
                if (p * p + q * q <= 1.0) value += e.intensity;
            }
            img.at(r, c) = std::clamp(value, 0.0, 1.0);
        }
    }
    return img;
}

tomo::Image random_phantom(std::uint64_t seed, std::size_t n) {
    if (n < 16) throw std::invalid_argument("random_phantom: n must be at least 16");
    return rasterize(random_ellipses(seed), n);
}

tomo::Sinogram simulate_measurement(const tomo::Image& x, const tomo::RadonOperator& op, const NoiseConfig& noise,
                                    std::uint64_t seed) {
    if (noise.sigma_e < 0.0) throw std::invalid_argument("simulate_measurement: sigma_e must be >= 0");
    const auto& g = op.geometry();
    if (x.n != g.n) throw std::invalid_argument("simulate_measurement: image does not match geometry");
    tomo::Sinogram s(g.n_angles, g.n_det);
    op.apply(x.values, s.values);
    if (noise.sigma_e > 0.0) {
        CounterRng rng(seed);
        for (double& v : s.values) v += noise.sigma_e * rng.normal();
    }
    return s;
}

tomo::Sinogram simulate_measurement(const tomo::Image& x, const tomo::Geometry& g, const NoiseConfig& noise,
                                    std::uint64_t seed) {
    if (noise.sigma_e < 0.0) throw std::invalid_argument("simulate_measurement: sigma_e must be >= 0");
    tomo::Sinogram s = tomo::radon_forward(x, g);
    if (noise.sigma_e > 0.0) {
        CounterRng rng(seed);
        for (double& v : s.values) v += noise.sigma_e * rng.normal();
    }
    return s;
}

DatasetPools make_pools(const PoolCounts& counts, const tomo::Geometry& g, const NoiseConfig& noise,
                        std::uint64_t master_seed) {
    if (counts.x == 0 || counts.y == 0 || counts.test == 0) {
        throw std::invalid_argument("make_pools: counts must be >= 1");
    }
    const tomo::RadonOperator op(g);
    DatasetPools pools;
    pools.train_x.resize(counts.x);
    pools.train_y.resize(counts.y);
    pools.test_x.resize(counts.test);
    pools.test_y.resize(counts.test);
    for (std::size_t i = 0; i < counts.x; ++i) pools.x_index.push_back(i);
    for (std::size_t i = 0; i < counts.y; ++i) pools.y_index.push_back(counts.x + i);
    for (std::size_t i = 0; i < counts.test; ++i) pools.test_index.push_back(counts.x + counts.y + i);

    auto phantom = [&](std::uint64_t index) {
        return random_phantom(derive_seed(master_seed, kPhantomStream, index), g.n);
    };
    auto measure = [&](const tomo::Image& x, std::uint64_t index) {
        return simulate_measurement(x, op, noise, derive_seed(master_seed, kNoiseStream, index));
    };
    parallel_for(counts.x, [&](std::size_t i) { pools.train_x[i] = phantom(pools.x_index[i]); });
    parallel_for(counts.y, [&](std::size_t i) {
        pools.train_y[i] = measure(phantom(pools.y_index[i]), pools.y_index[i]);
    });
    parallel_for(counts.test, [&](std::size_t i) {
        pools.test_x[i] = phantom(pools.test_index[i]);
        pools.test_y[i] = measure(pools.test_x[i], pools.test_index[i]);
    });
    return pools;
}

}  // namespace uar::data
