#include "uar/classical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "uar/metrics.hpp"
#include "uar/rng.hpp"

namespace uar::classical {

namespace {

double sq_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

// [A; grad] for the power method; range is the flattened concatenation.
class StackedOperator final : public ad::LinearOperator {
public:
    explicit StackedOperator(const tomo::RadonOperator& op) : op_(op) {}
    ad::Shape domain_shape() const override { return op_.domain_shape(); }
    ad::Shape range_shape() const override { return {ad::numel(op_.range_shape()) + 2 * npix()}; }
    void apply(std::span<const double> in, std::span<double> out) const override {
        const std::size_t m = ad::numel(op_.range_shape());
        op_.apply(in, out.subspan(0, m));
        tomo::Image x(op_.geometry().n);
        std::copy(in.begin(), in.end(), x.values.begin());
        const auto g = grad_image(x);
        std::copy(g.gx.begin(), g.gx.end(), out.begin() + static_cast<std::ptrdiff_t>(m));
        std::copy(g.gy.begin(), g.gy.end(), out.begin() + static_cast<std::ptrdiff_t>(m + npix()));
    }
    void apply_adjoint(std::span<const double> in, std::span<double> out) const override {
        const std::size_t m = ad::numel(op_.range_shape());
        op_.apply_adjoint(in.subspan(0, m), out);
        PairField p{op_.geometry().n, {}, {}};
        p.gx.assign(in.begin() + static_cast<std::ptrdiff_t>(m), in.begin() + static_cast<std::ptrdiff_t>(m + npix()));
        p.gy.assign(in.begin() + static_cast<std::ptrdiff_t>(m + npix()), in.end());
        const auto d = div_field(p);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= d.values[i];
    }

private:
    std::size_t npix() const { return op_.geometry().n * op_.geometry().n; }
    const tomo::RadonOperator& op_;
};

double tv_objective(const tomo::Image& x, const tomo::Sinogram& y, const tomo::RadonOperator& op, double lambda) {
    std::vector<double> r(y.size());
    op.apply(x.values, r);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= y.values[i];
    return sq_norm(r) + lambda * total_variation(x);
}

}  // namespace

PairField grad_image(const tomo::Image& x) {
    const std::size_t n = x.n;
    PairField g{n, std::vector<double>(n * n, 0.0), std::vector<double>(n * n, 0.0)};
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            const double v = x.at(r, c);
            if (c + 1 < n) g.gx[r * n + c] = x.at(r, c + 1) - v;
            if (r + 1 < n) g.gy[r * n + c] = x.at(r + 1, c) - v;
        }
    }
    return g;
}

tomo::Image div_field(const PairField& p) {
    const std::size_t n = p.n;
    if (p.gx.size() != n * n || p.gy.size() != n * n) throw std::invalid_argument("div_field: bad field size");
    tomo::Image d(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            const std::size_t i = r * n + c;
            double v = 0.0;
            if (c + 1 < n) v += p.gx[i];
            if (c > 0) v -= p.gx[i - 1];
            if (r + 1 < n) v += p.gy[i];
            if (r > 0) v -= p.gy[i - n];
            d.values[i] = v;
        }
    }
    return d;
}

double total_variation(const tomo::Image& x) {
    const auto g = grad_image(x);
    double tv = 0.0;
    for (std::size_t i = 0; i < g.gx.size(); ++i) tv += std::hypot(g.gx[i], g.gy[i]);
    return tv;
}

double stacked_norm(const tomo::RadonOperator& op, std::uint64_t seed) {
    return tomo::operator_norm(StackedOperator(op), 200, seed);
}

void set_steps(TVConfig& cfg, double L) {
    if (!(L > 0.0) || !(cfg.balance > 0.0)) throw std::invalid_argument("tv: operator norm and balance must be positive");
    cfg.tau = 0.99 * cfg.balance / L;
    cfg.sigma = 0.99 / (cfg.balance * L);
}

TVResult tv_reconstruct(const tomo::Sinogram& y, const tomo::RadonOperator& op, const TVConfig& cfg,
                        const tomo::Image* x0) {
    const auto& g = op.geometry();
    if (y.n_angles != g.n_angles || y.n_det != g.n_det) throw std::invalid_argument("tv_reconstruct: shape mismatch");
    if (cfg.lambda_tv < 0.0) throw std::invalid_argument("tv_reconstruct: lambda_tv must be >= 0");
    TVResult res;
    res.tau = cfg.tau;
    res.sigma = cfg.sigma;
    if (res.tau <= 0.0 || res.sigma <= 0.0) {
        TVConfig filled = cfg;
        set_steps(filled, stacked_norm(op));
        res.tau = filled.tau;
        res.sigma = filled.sigma;
    }
    const std::size_t n = g.n, npix = n * n, m = y.size();
    tomo::Image x = x0 ? *x0 : tomo::Image(n);
    if (x.n != n) throw std::invalid_argument("tv_reconstruct: x0 does not match geometry");
    tomo::Image xbar = x;
    std::vector<double> p(m, 0.0), ax(m), atp(npix);
    PairField z{n, std::vector<double>(npix, 0.0), std::vector<double>(npix, 0.0)};
    const double tau = res.tau, sigma = res.sigma, lambda = cfg.lambda_tv;

    res.objective.push_back(tv_objective(x, y, op, lambda));
    for (std::size_t it = 0; it < cfg.iters; ++it) {
        // Dual ascent, data term: prox of sigma * F*, F(q) = ||q - y||^2.
        op.apply(xbar.values, ax);
        for (std::size_t i = 0; i < m; ++i) p[i] = (p[i] + sigma * ax[i] - sigma * y.values[i]) / (1.0 + 0.5 * sigma);
        // Dual ascent, TV term: projection onto the lambda ball.
        const auto gb = grad_image(xbar);
        for (std::size_t i = 0; i < npix; ++i) {
            const double qx = z.gx[i] + sigma * gb.gx[i], qy = z.gy[i] + sigma * gb.gy[i];
            const double mag = std::hypot(qx, qy);
            const double shrink = mag > lambda ? lambda / mag : 1.0;
            z.gx[i] = qx * shrink;
            z.gy[i] = qy * shrink;
        }
        // Primal descent: K^* = [A^*, -div].
        op.apply_adjoint(p, atp);
        const auto dz = div_field(z);
        tomo::Image next(n);
        for (std::size_t i = 0; i < npix; ++i) next.values[i] = x.values[i] - tau * (atp[i] - dz.values[i]);
        for (std::size_t i = 0; i < npix; ++i) {
            xbar.values[i] = next.values[i] + cfg.theta * (next.values[i] - x.values[i]);
        }
        x = std::move(next);
        const double f = tv_objective(x, y, op, lambda);
        if (!std::isfinite(f) || !std::all_of(x.values.begin(), x.values.end(), [](double v) { return std::isfinite(v); })) {
            throw std::runtime_error("tv_reconstruct: non-finite iterate at iteration " + std::to_string(it + 1));
        }
        res.objective.push_back(f);
    }
    res.image = std::move(x);
    return res;
}

TVResult tv_reconstruct(const tomo::Sinogram& y, const tomo::Geometry& g, const TVConfig& cfg) {
    const tomo::RadonOperator op(g);
    return tv_reconstruct(y, op, cfg);
}

tomo::Image tikhonov_reconstruct(const tomo::Sinogram& y, const tomo::RadonOperator& op, double lambda,
                                 std::size_t iters, std::vector<double>* residuals) {
    if (lambda < 0.0) throw std::invalid_argument("tikhonov_reconstruct: lambda must be >= 0");
    const auto& g = op.geometry();
    if (y.n_angles != g.n_angles || y.n_det != g.n_det) {
        throw std::invalid_argument("tikhonov_reconstruct: shape mismatch");
    }
    const double L = tomo::operator_norm(op, 200, 11);
    const double step = 1.0 / (L * L + lambda);
    tomo::Image x(g.n);
    std::vector<double> r(y.size()), grad(x.size());
    for (std::size_t it = 0; it < iters; ++it) {
        op.apply(x.values, r);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] -= y.values[i];
        op.apply_adjoint(r, grad);
        for (std::size_t i = 0; i < grad.size(); ++i) x.values[i] -= step * (grad[i] + lambda * x.values[i]);
        if (residuals) {
            op.apply(x.values, r);
            for (std::size_t i = 0; i < r.size(); ++i) r[i] -= y.values[i];
            residuals->push_back(std::sqrt(sq_norm(r)));
        }
    }
    return x;
}

tomo::Image tikhonov_reconstruct(const tomo::Sinogram& y, const tomo::Geometry& g, double lambda, std::size_t iters) {
    const tomo::RadonOperator op(g);
    return tikhonov_reconstruct(y, op, lambda, iters);
}

LambdaSearch select_tv_lambda(const tomo::Sinogram& y, const tomo::Image& truth, const tomo::RadonOperator& op,
                              const std::vector<double>& grid, std::size_t iters) {
    if (grid.empty()) throw std::invalid_argument("select_tv_lambda: empty grid");
    LambdaSearch out;
    double best = -std::numeric_limits<double>::infinity();
    TVConfig cfg;
    cfg.iters = iters;
    set_steps(cfg, stacked_norm(op));
    for (double lambda : grid) {
        cfg.lambda_tv = lambda;
        const double p = eval::psnr(tv_reconstruct(y, op, cfg).image, truth);
        out.lambdas.push_back(lambda);
        out.psnr_db.push_back(p);
        if (p > best) {
            best = p;
            out.best_lambda = lambda;
        }
    }
    return out;
}

}  // namespace uar::classical
