#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "uar/checks.hpp"
#include "uar/metrics.hpp"
#include "uar/rng.hpp"
#include "uar/tomo.hpp"

using namespace uar;
using tomo::Geometry;
using tomo::Image;

namespace {

Eigen::MatrixXd dense_matrix(const Geometry& g) {
    const std::size_t cols = g.n * g.n, rows = g.n_angles * g.n_det;
    Eigen::MatrixXd a(rows, cols);
    Image e(g.n);
    for (std::size_t j = 0; j < cols; ++j) {
        e.values.assign(cols, 0.0);
        e.values[j] = 1.0;
        const auto s = tomo::radon_forward(e, g);
        for (std::size_t i = 0; i < rows; ++i) a(i, j) = s.values[i];
    }
    return a;
}

Image smooth_disk(std::size_t n, double radius) {
    // Area-sampled disk so the truth is band-limited enough for FBP.
    Image x(n);
    const double c = 0.5 * static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t col = 0; col < n; ++col) {
            int inside = 0;
            for (int a = 0; a < 4; ++a) {
                for (int b = 0; b < 4; ++b) {
                    const double dy = r + (a + 0.5) / 4.0 - c, dx = col + (b + 0.5) / 4.0 - c;
                    inside += dx * dx + dy * dy <= radius * radius;
                }
            }
            x.at(r, col) = inside / 16.0;
        }
    }
    return x;
}

}  // namespace

TEST(Geometry, ValidatesCoverage) {
    EXPECT_NO_THROW(Geometry::desk_default().validate());
    EXPECT_THROW(Geometry::parallel(64, 30, 40).validate(), std::invalid_argument);
    const auto g = Geometry::parallel(8, 4, 13);
    EXPECT_DOUBLE_EQ(g.angles[1], std::numbers::pi / 4.0);
    EXPECT_DOUBLE_EQ(g.detector_offset(6), 0.0);
}

TEST(Radon, AdjointIdentityAtDeskGeometry) { EXPECT_LT(checks::adjoint_error(Geometry::desk_default(), 10, 3), 1e-12); }

TEST(Radon, AdjointIsExactTransposeOfDenseMatrix) {
    const auto g = Geometry::parallel(8, 5, 13);
    const Eigen::MatrixXd a = dense_matrix(g);
    tomo::Sinogram s(g.n_angles, g.n_det);
    CounterRng rng(4);
    for (double& v : s.values) v = rng.normal();
    const Image back = tomo::radon_adjoint(s, g);
    const Eigen::VectorXd ref = a.transpose() * Eigen::Map<const Eigen::VectorXd>(s.values.data(), s.values.size());
    for (std::size_t j = 0; j < back.size(); ++j) EXPECT_NEAR(back.values[j], ref[j], 1e-12);
}

TEST(Radon, OperatorMatchesOnTheFlyRoutines) {
    const auto g = Geometry::desk_default();
    const tomo::RadonOperator op(g);
    Image x(g.n);
    CounterRng rng(8);
    for (double& v : x.values) v = rng.uniform();
    tomo::Sinogram s(g.n_angles, g.n_det);
    op.apply(x.values, s.values);
    const auto ref = tomo::radon_forward(x, g);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s.values[i], ref.values[i], 1e-11);
}

// A unit disk of radius r has chord length 2 sqrt(r^2 - t^2) at offset t.
TEST(Radon, DiskLineIntegrals) {
    const auto g = Geometry::desk_default();
    const double radius = 20.0;
    const auto s = tomo::radon_forward(smooth_disk(g.n, radius), g);
    for (std::size_t a = 0; a < g.n_angles; a += 7) {
        for (std::size_t d = 30; d < 65; d += 5) {
            const double t = g.detector_offset(d);
            const double exact = t * t < radius * radius ? 2.0 * std::sqrt(radius * radius - t * t) : 0.0;
            EXPECT_NEAR(s.at(a, d), exact, 0.6) << "angle " << a << " detector " << d;
        }
    }
}

TEST(Radon, NormMatchesDenseSingularValue) {
    const auto g = Geometry::parallel(12, 9, 19);
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(dense_matrix(g));
    const double sigma = svd.singularValues()[0];
    EXPECT_NEAR(tomo::power_method_norm(g, 500, 1), sigma, 1e-5 * sigma);
}

TEST(Radon, DeskNormEstimate) {
    const double norm = tomo::power_method_norm(Geometry::desk_default(), 200, 1);
    EXPECT_GT(norm, 40.0);
    EXPECT_LT(norm, 46.0);
    const auto trace = tomo::power_iteration_trace(tomo::RadonOperator(Geometry::desk_default()), 200, 1);
    for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_GE(trace[i], trace[i - 1] * (1 - 1e-12));
    EXPECT_THROW(tomo::power_method_norm(Geometry::desk_default(), 5, 1), std::invalid_argument);
}

TEST(Fft, RoundTripAndImpulse) {
    std::vector<std::complex<double>> v(16);
    CounterRng rng(2);
    for (auto& c : v) c = {rng.normal(), rng.normal()};
    auto w = v;
    tomo::fft(w, false);
    tomo::fft(w, true);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(std::abs(w[i] - v[i]), 0.0, 1e-13);
    std::vector<std::complex<double>> impulse(8);
    impulse[0] = 1.0;
    tomo::fft(impulse, false);
    for (const auto& c : impulse) EXPECT_NEAR(std::abs(c - 1.0), 0.0, 1e-15);
    EXPECT_EQ(tomo::next_pow2(95), 128u);
    EXPECT_EQ(tomo::next_pow2(128), 128u);
}

TEST(Fbp, RecoversSmoothDisk) {
    const auto g = Geometry::desk_default();
    const Image x = smooth_disk(g.n, 20.0);
    const Image r = tomo::fbp(tomo::radon_forward(x, g), g);
    EXPECT_GT(eval::psnr(r, x), 25.0);
}

TEST(Fbp, ZeroSinogramGivesZeroImage) {
    const auto g = Geometry::desk_default();
    const Image r = tomo::fbp(tomo::Sinogram(g.n_angles, g.n_det), g);
    for (double v : r.values) EXPECT_EQ(v, 0.0);
}

TEST(Fbp, IsLinear) {
    const auto g = Geometry::parallel(16, 8, 23);
    tomo::Sinogram a(g.n_angles, g.n_det), b(g.n_angles, g.n_det), ab(g.n_angles, g.n_det);
    CounterRng rng(6);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a.values[i] = rng.normal();
        b.values[i] = rng.normal();
        ab.values[i] = 2.0 * a.values[i] - b.values[i];
    }
    const Image fa = tomo::fbp(a, g), fb = tomo::fbp(b, g), fab = tomo::fbp(ab, g);
    for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_NEAR(fab.values[i], 2.0 * fa.values[i] - fb.values[i], 1e-12);
}
