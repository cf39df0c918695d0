#include "uar/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace uar::eval {

double psnr(const tomo::Image& x, const tomo::Image& ref) {
    if (x.n != ref.n || x.size() != ref.size()) throw std::invalid_argument("psnr: shape mismatch");
    double se = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x.values[i] - ref.values[i];
        se += d * d;
    }
    if (se == 0.0) return std::numeric_limits<double>::infinity();
    const double rmse = std::sqrt(se / static_cast<double>(x.size()));
    return 20.0 * std::log10(kDataRange / rmse);
}

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;

std::vector<double> gaussian_window() {
    std::vector<double> w(kWindow);
    double total = 0.0;
    for (std::size_t i = 0; i < kWindow; ++i) {
        const double d = static_cast<double>(i) - 0.5 * static_cast<double>(kWindow - 1);
        w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        total += w[i];
    }
    for (double& v : w) v /= total;
    return w;
}

// Valid-mode separable filtering of an n x n image.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t n, const std::vector<double>& w) {
    const std::size_t m = n - kWindow + 1;
    std::vector<double> rows(n * m), out(m * m);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < m; ++c) {
            double s = 0.0;
            for (std::size_t k = 0; k < kWindow; ++k) s += w[k] * img[r * n + c + k];
            rows[r * m + c] = s;
        }
    }
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < m; ++c) {
            double s = 0.0;
            for (std::size_t k = 0; k < kWindow; ++k) s += w[k] * rows[(r + k) * m + c];
            out[r * m + c] = s;
        }
    }
    return out;
}

}  // namespace

double ssim(const tomo::Image& x, const tomo::Image& ref) {
    if (x.n != ref.n || x.size() != ref.size()) throw std::invalid_argument("ssim: shape mismatch");
    if (x.n < kWindow) throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    const std::size_t n = x.n;
    const auto w = gaussian_window();
    const double c1 = (0.01 * kDataRange) * (0.01 * kDataRange);
    const double c2 = (0.03 * kDataRange) * (0.03 * kDataRange);
    std::vector<double> xx(n * n), yy(n * n), xy(n * n);
    for (std::size_t i = 0; i < n * n; ++i) {
        xx[i] = x.values[i] * x.values[i];
        yy[i] = ref.values[i] * ref.values[i];
        xy[i] = x.values[i] * ref.values[i];
    }
    const auto mx = filter_valid(x.values, n, w), my = filter_valid(ref.values, n, w);
    const auto sxx = filter_valid(xx, n, w), syy = filter_valid(yy, n, w), sxy = filter_valid(xy, n, w);
    double total = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i];
        const double vy = syy[i] - my[i] * my[i];
        const double cov = sxy[i] - mx[i] * my[i];
        total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    return total / static_cast<double>(mx.size());
}

MarkovResult markov_check(std::span<const double> values, double eta) {
    if (!(eta > 0.0)) throw std::invalid_argument("markov_check: eta must be positive");
    if (values.empty()) throw std::invalid_argument("markov_check: no values");
    double total = 0.0;
    std::size_t above = 0;
    for (double v : values) {
        if (!(v >= 0.0)) throw std::invalid_argument("markov_check: negative or NaN value");
        total += v;
        if (v >= eta) ++above;
    }
    MarkovResult r;
    const double m = static_cast<double>(values.size());
    r.empirical = static_cast<double>(above) / m;
    r.bound = total / m / eta;
    r.pass = r.empirical <= r.bound;
    return r;
}

Summary summarize(std::span<const double> values) {
    double total = 0.0;
    std::size_t count = 0;
    for (double v : values) {
        if (std::isinf(v)) continue;
        total += v;
        ++count;
    }
    if (count == 0) return {std::numeric_limits<double>::infinity(), 0.0};
    Summary s;
    s.mean = total / static_cast<double>(count);
    double var = 0.0;
    for (double v : values) {
        if (!std::isinf(v)) var += (v - s.mean) * (v - s.mean);
    }
    s.stddev = std::sqrt(var / static_cast<double>(count));
    return s;
}

}  // namespace uar::eval
