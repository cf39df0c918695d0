#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "uar/parallel.hpp"
#include "uar/tomo.hpp"

namespace uar::tomo {

Geometry Geometry::parallel(std::size_t n, std::size_t n_angles, std::size_t n_det, double det_spacing) {
    Geometry g;
    g.n = n;
    g.n_angles = n_angles;
    g.n_det = n_det;
    g.det_spacing = det_spacing;
    g.angles.resize(n_angles);
    for (std::size_t a = 0; a < n_angles; ++a) {
        g.angles[a] = std::numbers::pi * static_cast<double>(a) / static_cast<double>(n_angles);
    }
    g.validate();
    return g;
}

void Geometry::validate() const {
    if (n == 0 || n_angles == 0 || n_det == 0) throw std::invalid_argument("Geometry: empty dimension");
    if (!(det_spacing > 0.0)) throw std::invalid_argument("Geometry: detector spacing must be positive");
    if (angles.size() != n_angles) throw std::invalid_argument("Geometry: angle list length differs from n_angles");
    if (static_cast<double>(n_det) * det_spacing < static_cast<double>(n) * std::numbers::sqrt2) {
        throw std::invalid_argument("Geometry: detector (" + std::to_string(n_det) + " x " +
                                    std::to_string(det_spacing) + ") does not cover the image diagonal");
    }
    for (std::size_t a = 1; a < angles.size(); ++a) {
        if (!(angles[a] > angles[a - 1])) throw std::invalid_argument("Geometry: angles must be strictly increasing");
    }
}

ad::Tensor to_tensor(const Image& x) { return ad::Tensor({1, x.n, x.n}, x.values); }

ad::Tensor to_tensor(const Sinogram& y) { return ad::Tensor({1, y.n_angles, y.n_det}, y.values); }

Image image_from(const ad::Tensor& t) {
    const std::size_t n = t.rank() >= 2 ? t.dim(t.rank() - 1) : 0;
    if (n == 0 || t.size() != n * n) throw std::invalid_argument("image_from: tensor is not a square image");
    Image x(n);
    std::copy(t.data().begin(), t.data().end(), x.values.begin());
    return x;
}

Sinogram sinogram_from(const ad::Tensor& t, std::size_t n_angles, std::size_t n_det) {
    if (t.size() != n_angles * n_det) throw std::invalid_argument("sinogram_from: size mismatch");
    Sinogram s(n_angles, n_det);
    std::copy(t.data().begin(), t.data().end(), s.values.begin());
    return s;
}

namespace {

// Calls visit(pixel_index, weight) for every bilinear footprint entry of the
// samples along the ray (angle cos/sin, detector offset t). Weights include
// the quadrature step. The sample grid is sigma = k * kRayStep for integer k;
// the k range is clipped conservatively to the image support.
template <class Visit>
void trace_ray(std::size_t n, double c, double s, double t, Visit&& visit) {
    const double half = 0.5 * static_cast<double>(n - 1);
    const double u0 = t * c + half;  // u(sigma) = u0 - sigma * s
    const double v0 = half - t * s;  // v(sigma) = v0 - sigma * c
    const double lo = -1.0, hi = static_cast<double>(n);
    double smin = -std::numeric_limits<double>::infinity();
    double smax = std::numeric_limits<double>::infinity();
    auto clip = [&](double base, double slope) {
        // lo < base - sigma * slope < hi
        if (std::abs(slope) < 1e-12) {
            if (base <= lo || base >= hi) smin = 1.0, smax = -1.0;
            return;
        }
        double a = (base - hi) / slope, b = (base - lo) / slope;
        if (a > b) std::swap(a, b);
        smin = std::max(smin, a);
        smax = std::min(smax, b);
    };
    clip(u0, s);
    clip(v0, c);
    if (!(smin <= smax)) return;
    const auto kmin = static_cast<long>(std::floor(smin / kRayStep)) - 1;
    const auto kmax = static_cast<long>(std::ceil(smax / kRayStep)) + 1;
    const auto ni = static_cast<long>(n);
    for (long k = kmin; k <= kmax; ++k) {
        const double sigma = static_cast<double>(k) * kRayStep;
        const double u = u0 - sigma * s;
        const double v = v0 - sigma * c;
        const double fu = std::floor(u), fv = std::floor(v);
        const long j0 = static_cast<long>(fu), i0 = static_cast<long>(fv);
        if (j0 < -1 || j0 >= ni || i0 < -1 || i0 >= ni) continue;
        const double du = u - fu, dv = v - fv;
        const double w00 = (1.0 - du) * (1.0 - dv) * kRayStep;
        const double w01 = du * (1.0 - dv) * kRayStep;
        const double w10 = (1.0 - du) * dv * kRayStep;
        const double w11 = du * dv * kRayStep;
        const bool r0 = i0 >= 0, r1 = i0 + 1 < ni, c0 = j0 >= 0, c1 = j0 + 1 < ni;
        if (r0 && c0) visit(static_cast<std::size_t>(i0 * ni + j0), w00);
        if (r0 && c1) visit(static_cast<std::size_t>(i0 * ni + j0 + 1), w01);
        if (r1 && c0) visit(static_cast<std::size_t>((i0 + 1) * ni + j0), w10);
        if (r1 && c1) visit(static_cast<std::size_t>((i0 + 1) * ni + j0 + 1), w11);
    }
}

void check_sizes(std::size_t image, std::size_t sino, const Geometry& g) {
    if (image != g.n * g.n) throw std::invalid_argument("radon: image size does not match geometry");
    if (sino != g.n_angles * g.n_det) throw std::invalid_argument("radon: sinogram size does not match geometry");
}

}  // namespace

void radon_forward(std::span<const double> image, std::span<double> sino, const Geometry& g) {
    check_sizes(image.size(), sino.size(), g);
    parallel_for(g.n_angles, [&](std::size_t a) {
        const double c = std::cos(g.angles[a]), s = std::sin(g.angles[a]);
        for (std::size_t d = 0; d < g.n_det; ++d) {
            double acc = 0.0;
            trace_ray(g.n, c, s, g.detector_offset(d), [&](std::size_t idx, double w) { acc += w * image[idx]; });
            sino[a * g.n_det + d] = acc;
        }
    });
}

void radon_adjoint(std::span<const double> sino, std::span<double> image, const Geometry& g) {
    check_sizes(image.size(), sino.size(), g);
    const std::size_t npix = g.n * g.n;
    // One partial image per angle, reduced in angle order: the result does
    // not depend on the worker count.
    std::vector<double> partial(g.n_angles * npix, 0.0);
    parallel_for(g.n_angles, [&](std::size_t a) {
        const double c = std::cos(g.angles[a]), s = std::sin(g.angles[a]);
        double* out = partial.data() + a * npix;
        for (std::size_t d = 0; d < g.n_det; ++d) {
            const double val = sino[a * g.n_det + d];
            if (val == 0.0) continue;
            trace_ray(g.n, c, s, g.detector_offset(d), [&](std::size_t idx, double w) { out[idx] += w * val; });
        }
    });
    std::fill(image.begin(), image.end(), 0.0);
    for (std::size_t a = 0; a < g.n_angles; ++a) {
        const double* p = partial.data() + a * npix;
        for (std::size_t i = 0; i < npix; ++i) image[i] += p[i];
    }
}

Sinogram radon_forward(const Image& x, const Geometry& g) {
    Sinogram s(g.n_angles, g.n_det);
    radon_forward(x.values, s.values, g);
    return s;
}

Image radon_adjoint(const Sinogram& s, const Geometry& g) {
    Image x(g.n);
    radon_adjoint(s.values, x.values, g);
    return x;
}

RadonOperator::RadonOperator(Geometry g) : geometry_(std::move(g)) {
    geometry_.validate();
    const std::size_t rays = geometry_.n_angles * geometry_.n_det;
    const std::size_t npix = geometry_.n * geometry_.n;
    by_ray_.start.assign(rays + 1, 0);
    std::vector<std::pair<std::uint32_t, double>> entries;
    for (std::size_t a = 0; a < geometry_.n_angles; ++a) {
        const double c = std::cos(geometry_.angles[a]), s = std::sin(geometry_.angles[a]);
        for (std::size_t d = 0; d < geometry_.n_det; ++d) {
            entries.clear();
            trace_ray(geometry_.n, c, s, geometry_.detector_offset(d), [&](std::size_t idx, double w) {
                entries.emplace_back(static_cast<std::uint32_t>(idx), w);
            });
            std::stable_sort(entries.begin(), entries.end(),
                             [](const auto& l, const auto& r) { return l.first < r.first; });
            for (std::size_t i = 0; i < entries.size();) {
                double w = 0.0;
                std::size_t j = i;
                for (; j < entries.size() && entries[j].first == entries[i].first; ++j) w += entries[j].second;
                if (w != 0.0) {
                    by_ray_.index.push_back(entries[i].first);
                    by_ray_.weight.push_back(w);
                }
                i = j;
            }
            by_ray_.start[a * geometry_.n_det + d + 1] = static_cast<std::uint32_t>(by_ray_.index.size());
        }
    }
    // Transpose.
    by_pixel_.start.assign(npix + 1, 0);
    for (auto idx : by_ray_.index) ++by_pixel_.start[idx + 1];
    for (std::size_t p = 0; p < npix; ++p) by_pixel_.start[p + 1] += by_pixel_.start[p];
    by_pixel_.index.resize(by_ray_.index.size());
    by_pixel_.weight.resize(by_ray_.index.size());
    std::vector<std::uint32_t> fill(by_pixel_.start.begin(), by_pixel_.start.end() - 1);
    for (std::size_t r = 0; r < rays; ++r) {
        for (auto k = by_ray_.start[r]; k < by_ray_.start[r + 1]; ++k) {
            const auto slot = fill[by_ray_.index[k]]++;
            by_pixel_.index[slot] = static_cast<std::uint32_t>(r);
            by_pixel_.weight[slot] = by_ray_.weight[k];
        }
    }
}

namespace {

void compressed_apply(const std::vector<std::uint32_t>& start, const std::vector<std::uint32_t>& index,
                      const std::vector<double>& weight, std::span<const double> in, std::span<double> out) {
    const std::size_t rows = start.size() - 1;
    constexpr std::size_t kChunk = 256;
    parallel_for((rows + kChunk - 1) / kChunk, [&](std::size_t chunk) {
        const std::size_t end = std::min(rows, (chunk + 1) * kChunk);
        for (std::size_t r = chunk * kChunk; r < end; ++r) {
            double acc = 0.0;
            for (auto k = start[r]; k < start[r + 1]; ++k) acc += weight[k] * in[index[k]];
            out[r] = acc;
        }
    });
}

}  // namespace

void RadonOperator::apply(std::span<const double> in, std::span<double> out) const {
    check_sizes(in.size(), out.size(), geometry_);
    compressed_apply(by_ray_.start, by_ray_.index, by_ray_.weight, in, out);
}

void RadonOperator::apply_adjoint(std::span<const double> in, std::span<double> out) const {
    check_sizes(out.size(), in.size(), geometry_);
    compressed_apply(by_pixel_.start, by_pixel_.index, by_pixel_.weight, in, out);
}

}  // namespace uar::tomo
