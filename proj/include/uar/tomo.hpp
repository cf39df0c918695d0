#pragma once

// Parallel-beam ray transform, its exact adjoint and filtered back-projection.

#include <complex>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "uar/tensor.hpp"

namespace uar::tomo {

// Ray sampling step along each line, in pixel units.
inline constexpr double kRayStep = 0.5;

struct Geometry {
    std::size_t n = 64;          // image side, pixels
    std::size_t n_angles = 30;
    std::size_t n_det = 95;
    double det_spacing = 1.0;    // detector pitch, pixel units
    std::vector<double> angles;  // radians, uniform on [0, pi)

    // Uniformly spaced angles k*pi/n_angles.
    static Geometry parallel(std::size_t n, std::size_t n_angles, std::size_t n_det, double det_spacing = 1.0);
    // n = 64, 30 angles, 95 detectors, unit pitch.
    static Geometry desk_default() { return parallel(64, 30, 95, 1.0); }

    // Throws std::invalid_argument if the detector does not cover the image
    // diagonal or the angles are not strictly increasing.
    void validate() const;
    double detector_offset(std::size_t d) const noexcept {
        return (static_cast<double>(d) - 0.5 * static_cast<double>(n_det - 1)) * det_spacing;
    }
    bool operator==(const Geometry&) const = default;
};

/// n x n image, row-major, row 0 at the top.
struct Image {
    std::size_t n = 0;
    std::vector<double> values;

    Image() = default;
    explicit Image(std::size_t side, double fill = 0.0) : n(side), values(side * side, fill) {}

    double& at(std::size_t row, std::size_t col) { return values[row * n + col]; }
    double at(std::size_t row, std::size_t col) const { return values[row * n + col]; }
    std::size_t size() const noexcept { return values.size(); }
    bool operator==(const Image&) const = default;
};

/// n_angles x n_det measurement, row-major by angle.
struct Sinogram {
    std::size_t n_angles = 0;
    std::size_t n_det = 0;
    std::vector<double> values;

    Sinogram() = default;
    Sinogram(std::size_t angles, std::size_t det, double fill = 0.0)
        : n_angles(angles), n_det(det), values(angles * det, fill) {}

    double& at(std::size_t a, std::size_t d) { return values[a * n_det + d]; }
    double at(std::size_t a, std::size_t d) const { return values[a * n_det + d]; }
    std::size_t size() const noexcept { return values.size(); }
    bool operator==(const Sinogram&) const = default;
};

// Single-channel tensor views: Image <-> [1,n,n], Sinogram <-> [1,A,D].
ad::Tensor to_tensor(const Image& x);
ad::Tensor to_tensor(const Sinogram& y);
Image image_from(const ad::Tensor& t);
Sinogram sinogram_from(const ad::Tensor& t, std::size_t n_angles, std::size_t n_det);

// Line integrals: every ray is sampled at s = k * kRayStep (k integer) with
// bilinear interpolation of x (zero outside), and the sum is scaled by kRayStep.
Sinogram radon_forward(const Image& x, const Geometry& g);
// Exact transpose of radon_forward.
Image radon_adjoint(const Sinogram& s, const Geometry& g);

// Raw-buffer variants used by the operator wrapper.
void radon_forward(std::span<const double> image, std::span<double> sino, const Geometry& g);
void radon_adjoint(std::span<const double> sino, std::span<double> image, const Geometry& g);

/// The ray transform as a differentiable linear operator on [1,n,n] tensors.
/// The ray footprints of radon_forward are traced once at construction and
/// kept in compressed form (by ray and by pixel), so apply and apply_adjoint
/// are exact transposes of each other and match the on-the-fly routines up to
/// summation order.
class RadonOperator final : public ad::LinearOperator {
public:
    explicit RadonOperator(Geometry g);
    std::size_t nonzeros() const noexcept { return by_ray_.index.size(); }
    const Geometry& geometry() const noexcept { return geometry_; }
    ad::Shape domain_shape() const override { return {1, geometry_.n, geometry_.n}; }
    ad::Shape range_shape() const override { return {1, geometry_.n_angles, geometry_.n_det}; }
    void apply(std::span<const double> in, std::span<double> out) const override;
    void apply_adjoint(std::span<const double> in, std::span<double> out) const override;

private:
    struct Compressed {
        std::vector<std::uint32_t> start;  // size rows + 1
        std::vector<std::uint32_t> index;
        std::vector<double> weight;
    };
    Geometry geometry_;
    Compressed by_ray_;
    Compressed by_pixel_;
};

// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::span<std::complex<double>> data, bool inverse);
std::size_t next_pow2(std::size_t n) noexcept;

// Ram-Lak response |f| for a padded length (cycles per unit length).
std::vector<double> ramp_response(std::size_t padded, double det_spacing);

// Ramp-filters every detector row (zero-padded to the next power of two
// >= 2 * n_det).
Sinogram ramp_filter(const Sinogram& s, const Geometry& g);
// Filtered back-projection.
Image fbp(const Sinogram& s, const Geometry& g);

// Power iteration on op^* op. Returns the running estimates of ||op||; stops
// once the relative change drops below 1e-6 or after `iters` iterations.
std::vector<double> power_iteration_trace(const ad::LinearOperator& op, std::size_t iters, std::uint64_t seed);
double operator_norm(const ad::LinearOperator& op, std::size_t iters, std::uint64_t seed);
double power_method_norm(const Geometry& g, std::size_t iters, std::uint64_t seed);

}  // namespace uar::tomo
