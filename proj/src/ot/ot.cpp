#include "uar/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace uar::ot {

PointCloud PointCloud::from_images(const std::vector<tomo::Image>& images) {
    PointCloud c;
    if (!images.empty()) c.dim = images.front().size();
    for (const auto& im : images) {
        if (im.size() != c.dim) throw std::invalid_argument("PointCloud: images differ in size");
        c.points.push_back(im.values);
    }
    return c;
}

std::vector<std::size_t> hungarian(const std::vector<std::vector<double>>& cost) {
    const std::size_t n = cost.size();
    for (const auto& row : cost) {
        if (row.size() != n) throw std::invalid_argument("hungarian: cost matrix must be square");
    }
    constexpr double kInf = std::numeric_limits<double>::infinity();
    // 1-based rows/columns; column 0 is a sentinel.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = match[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> assignment(n);
    for (std::size_t j = 1; j <= n; ++j) assignment[match[j] - 1] = j - 1;
    return assignment;
}

std::vector<std::vector<double>> euclidean_costs(const PointCloud& a, const PointCloud& b) {
    if (a.dim != b.dim) throw std::invalid_argument("euclidean_costs: dimension mismatch");
    std::vector<std::vector<double>> c(a.size(), std::vector<double>(b.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.dim; ++k) {
                const double d = a.points[i][k] - b.points[j][k];
                s += d * d;
            }
            c[i][j] = std::sqrt(s);
        }
    }
    return c;
}

double w1_exact(const PointCloud& a, const PointCloud& b) {
    if (a.size() != b.size()) throw std::invalid_argument("w1_exact: clouds must have equal size");
    if (a.size() == 0) throw std::invalid_argument("w1_exact: empty cloud");
    const auto cost = euclidean_costs(a, b);
    const auto assignment = hungarian(cost);
    double total = 0.0;
    for (std::size_t i = 0; i < cost.size(); ++i) total += cost[i][assignment[i]];
    return total / static_cast<double>(a.size());
}

double CriticEstimate::normalized() const noexcept { return estimate / std::max(lipschitz, 1e-12); }

CriticEstimate w1_critic_estimate(const model::Critic& critic, const std::vector<tomo::Image>& a,
                                  const std::vector<tomo::Image>& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("w1_critic_estimate: empty batch");
    CriticEstimate est;
    auto visit = [&](const std::vector<tomo::Image>& images) {
        double total = 0.0;
        for (const auto& x : images) {
            const auto [value, grad] = model::critic_value_and_gradient(critic, x);
            total += value;
            double n2 = 0.0;
            for (double g : grad.values) n2 += g * g;
            est.lipschitz = std::max(est.lipschitz, std::sqrt(n2));
        }
        return total / static_cast<double>(images.size());
    };
    const double ma = visit(a);
    const double mb = visit(b);
    est.estimate = ma - mb;
    return est;
}

}  // namespace uar::ot
