#pragma once

// Image-quality metrics on [0,1] images.

#include <limits>
#include <span>
#include <vector>

#include "uar/tomo.hpp"

namespace uar::eval {

inline constexpr double kDataRange = 1.0;

// 20 log10(kDataRange / rmse); +infinity for identical images.
double psnr(const tomo::Image& x, const tomo::Image& ref);

// Mean local SSIM over valid 11x11 Gaussian windows (std 1.5), K1 = 0.01,
// K2 = 0.03. Requires n >= 11.
double ssim(const tomo::Image& x, const tomo::Image& ref);

struct MarkovResult {
    double empirical = 0.0;  // fraction of values >= eta
    double bound = 0.0;      // mean / eta
    bool pass = false;
    double margin() const noexcept { return bound - empirical; }
};

// Throws std::invalid_argument on negative values or eta <= 0.
MarkovResult markov_check(std::span<const double> values, double eta);

struct Summary {
    double mean = 0.0;
    double stddev = 0.0;  // population
};
// Infinite entries are excluded; the result is +inf only if every entry is.
Summary summarize(std::span<const double> values);

}  // namespace uar::eval
