#include <cmath>
#include <numbers>
#include <stdexcept>

#include "uar/parallel.hpp"
#include "uar/rng.hpp"
#include "uar/tomo.hpp"

namespace uar::tomo {

std::size_t next_pow2(std::size_t n) noexcept {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

void fft(std::span<std::complex<double>> data, bool inverse) {
    const std::size_t n = data.size();
    if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft: length must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i], data[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const std::complex<double> step(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = data[i + k];
                const auto v = data[i + k + len / 2] * w;
                data[i + k] = u + v;
                data[i + k + len / 2] = u - v;
                w *= step;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& z : data) z *= inv;
    }
}

std::vector<double> ramp_response(std::size_t padded, double det_spacing) {
    std::vector<double> h(padded);
    const double df = 1.0 / (static_cast<double>(padded) * det_spacing);
    for (std::size_t k = 0; k < padded; ++k) {
        const std::size_t m = k <= padded / 2 ? k : padded - k;
        h[k] = static_cast<double>(m) * df;
    }
    return h;
}

Sinogram ramp_filter(const Sinogram& s, const Geometry& g) {
    if (s.n_angles != g.n_angles || s.n_det != g.n_det) throw std::invalid_argument("ramp_filter: shape mismatch");
    const std::size_t padded = next_pow2(2 * g.n_det);
    const auto response = ramp_response(padded, g.det_spacing);
    Sinogram out(g.n_angles, g.n_det);
    // The response is real and even, so two real rows are filtered at once as
    // the real and imaginary parts of one complex transform.
    const std::size_t pairs = (g.n_angles + 1) / 2;
    parallel_for(pairs, [&](std::size_t p) {
        const std::size_t a0 = 2 * p, a1 = 2 * p + 1;
        std::vector<std::complex<double>> buf(padded, {0.0, 0.0});
        for (std::size_t d = 0; d < g.n_det; ++d) {
            buf[d] = {s.at(a0, d), a1 < g.n_angles ? s.at(a1, d) : 0.0};
        }
        fft(buf, false);
        for (std::size_t k = 0; k < padded; ++k) buf[k] *= response[k];
        fft(buf, true);
        for (std::size_t d = 0; d < g.n_det; ++d) {
            out.at(a0, d) = buf[d].real();
            if (a1 < g.n_angles) out.at(a1, d) = buf[d].imag();
        }
    });
    return out;
}

Image fbp(const Sinogram& s, const Geometry& g) {
    Image x = radon_adjoint(ramp_filter(s, g), g);
    // The adjoint spreads each detector value with total weight 1/det_spacing
    // per angle; the angular integral over [0, pi) contributes pi/n_angles.
    const double factor = std::numbers::pi / static_cast<double>(g.n_angles) * g.det_spacing;
    for (double& v : x.values) v *= factor;
    return x;
}

std::vector<double> power_iteration_trace(const ad::LinearOperator& op, std::size_t iters, std::uint64_t seed) {
    if (iters < 1) throw std::invalid_argument("power iteration needs at least one iteration");
    const std::size_t n = ad::numel(op.domain_shape());
    const std::size_t m = ad::numel(op.range_shape());
    std::vector<double> x(n), ax(m), x_next(n);
    CounterRng rng(seed);
    for (double& v : x) v = rng.normal();
    auto normalize = [](std::vector<double>& v) {
        double s = 0.0;
        for (double e : v) s += e * e;
        const double norm = std::sqrt(s);
        if (norm > 0.0)
            for (double& e : v) e /= norm;
        return norm;
    };
    normalize(x);
    std::vector<double> trace;
    for (std::size_t it = 0; it < iters; ++it) {
        op.apply(x, ax);
        double rq = 0.0;  // Rayleigh quotient of op^* op at unit x
        for (double e : ax) rq += e * e;
        trace.push_back(std::sqrt(rq));
        if (trace.size() >= 2) {
            const double prev = trace[trace.size() - 2];
            if (std::abs(trace.back() - prev) <= 1e-6 * std::abs(trace.back())) break;
        }
        op.apply_adjoint(ax, x_next);
        if (normalize(x_next) == 0.0) break;
        x.swap(x_next);
    }
    return trace;
}

double operator_norm(const ad::LinearOperator& op, std::size_t iters, std::uint64_t seed) {
    return power_iteration_trace(op, iters, seed).back();
}

double power_method_norm(const Geometry& g, std::size_t iters, std::uint64_t seed) {
    if (iters < 10) throw std::invalid_argument("power_method_norm: iters must be >= 10");
    return operator_norm(RadonOperator(g), iters, seed);
}

}  // namespace uar::tomo
