#pragma once

// Random ellipse phantoms, noisy measurements and unpaired training pools.

#include <cstdint>
#include <vector>

#include "uar/tomo.hpp"

namespace uar::data {

/// One additive ellipse in normalized coordinates ([-1,1]^2, y up).
struct EllipseSpec {
    double cx = 0.0, cy = 0.0;
    double a = 0.1, b = 0.1;  // semi-axes, > 0
    double angle = 0.0;       // radians
    double intensity = 0.0;
};

struct NoiseConfig {
    double sigma_e = 0.5;
};

struct PoolCounts {
    std::size_t x = 400;
    std::size_t y = 400;
    std::size_t test = 32;
};

/// Unpaired training marginals plus paired test data.
struct DatasetPools {
    std::vector<tomo::Image> train_x;
    std::vector<tomo::Sinogram> train_y;
    std::vector<tomo::Image> test_x;
    std::vector<tomo::Sinogram> test_y;
    // Phantom indices behind each sample; the three ranges are disjoint.
    std::vector<std::uint64_t> x_index, y_index, test_index;
};

// Seed streams for derive_seed(master, stream, index).
inline constexpr std::uint64_t kPhantomStream = 1;
inline constexpr std::uint64_t kNoiseStream = 2;
inline constexpr std::uint64_t kValidationStream = 3;

std::vector<EllipseSpec> random_ellipses(std::uint64_t seed);
// Rasterizes at pixel centres, clamps to [0,1], zeroes outside the inscribed circle.
tomo::Image rasterize(const std::vector<EllipseSpec>& ellipses, std::size_t n);
// Requires n >= 16.
tomo::Image random_phantom(std::uint64_t seed, std::size_t n);

tomo::Sinogram simulate_measurement(const tomo::Image& x, const tomo::Geometry& g, const NoiseConfig& noise,
                                    std::uint64_t seed);
tomo::Sinogram simulate_measurement(const tomo::Image& x, const tomo::RadonOperator& op, const NoiseConfig& noise,
                                    std::uint64_t seed);

// Phantom index ranges: x in [0, cx), y in [cx, cx + cy), test after that.
DatasetPools make_pools(const PoolCounts& counts, const tomo::Geometry& g, const NoiseConfig& noise,
                        std::uint64_t master_seed);

}  // namespace uar::data
