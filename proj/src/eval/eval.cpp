#include "uar/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "uar/rng.hpp"

namespace uar::eval {

MetricsReport evaluate_reconstructions(const model::Problem& problem, const model::Critic& critic,
                                       const std::vector<tomo::Image>& recon, const std::vector<tomo::Image>& truth,
                                       const std::vector<tomo::Sinogram>& ys) {
    if (recon.size() != truth.size() || recon.size() != ys.size() || recon.empty()) {
        throw std::invalid_argument("evaluate: inconsistent or empty inputs");
    }
    MetricsReport r;
    double crit_truth = 0.0;
    for (std::size_t i = 0; i < recon.size(); ++i) {
        r.psnr_db.push_back(psnr(recon[i], truth[i]));
        r.ssim.push_back(ssim(recon[i], truth[i]));
        tomo::Sinogram res = problem.forward(recon[i]);
        double d = 0.0;
        for (std::size_t k = 0; k < res.size(); ++k) {
            const double e = ys[i].values[k] - res.values[k];
            d += e * e;
        }
        r.distortion.push_back(d);
        r.critic.push_back(model::critic_value(critic, recon[i]));
        crit_truth += model::critic_value(critic, truth[i]);
    }
    const double m = static_cast<double>(recon.size());
    r.psnr_summary = summarize(r.psnr_db);
    r.ssim_summary = summarize(r.ssim);
    r.mean_distortion = std::accumulate(r.distortion.begin(), r.distortion.end(), 0.0) / m;
    r.w1_estimate = std::accumulate(r.critic.begin(), r.critic.end(), 0.0) / m - crit_truth / m;
    return r;
}

MetricsReport evaluate_model(const model::Problem& problem, const model::Generator& gen,
                             const model::Critic& critic, const std::vector<tomo::Image>& test_x,
                             const std::vector<tomo::Sinogram>& test_y) {
    std::vector<tomo::Image> recon;
    recon.reserve(test_y.size());
    for (const auto& y : test_y) recon.push_back(model::reconstruct(problem, gen, y));
    return evaluate_reconstructions(problem, critic, recon, test_x, test_y);
}

bool MarkovReport::pass() const {
    auto ok = [](const std::vector<MarkovResult>& v) {
        return std::all_of(v.begin(), v.end(), [](const MarkovResult& r) { return r.pass; });
    };
    return ok(distortion) && ok(critic);
}

MarkovReport markov_checks(const MetricsReport& report) {
    MarkovReport out;
    out.etas = {0.5, 1.0, 2.0, 4.0};
    std::vector<double> shifted = report.critic;
    if (!shifted.empty()) {
        const double lo = *std::min_element(shifted.begin(), shifted.end());
        for (double& v : shifted) v -= lo;
    }
    auto run = [&](const std::vector<double>& values, std::vector<MarkovResult>& dst) {
        if (values.empty()) return;
        const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
        const double unit = mean > 0.0 ? mean : 1.0;
        for (double f : out.etas) dst.push_back(markov_check(values, f * unit));
    };
    run(report.distortion, out.distortion);
    run(shifted, out.critic);
    return out;
}

LambdaSweepReport summarize_sweep(std::vector<LambdaSweepRow> rows) {
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (!(rows[i].lambda > rows[i - 1].lambda)) throw std::invalid_argument("sweep: lambdas must increase");
    }
    LambdaSweepReport rep;
    rep.rows = std::move(rows);
    if (rep.rows.size() < 2) return rep;
    rep.checked = true;
    const auto& lo = rep.rows.front();
    const auto& hi = rep.rows.back();
    rep.distortion_ordered = lo.mean_distortion <= hi.mean_distortion;
    rep.w1_ordered = hi.w1_estimate <= lo.w1_estimate;
    rep.psnr_minimum_first = std::all_of(rep.rows.begin() + 1, rep.rows.end(),
                                         [&](const LambdaSweepRow& r) { return lo.mean_psnr <= r.mean_psnr; });
    return rep;
}

LambdaSweepReport lambda_sweep(const data::DatasetPools& pools, const model::Problem& problem,
                               const model::GeneratorConfig& gcfg, const model::CriticConfig& ccfg,
                               const model::TrainConfig& base, const std::vector<double>& lambdas,
                               const model::TrainHooks& hooks) {
    if (lambdas.empty()) throw std::invalid_argument("lambda_sweep: no lambdas");
    for (std::size_t i = 1; i < lambdas.size(); ++i) {
        if (!(lambdas[i] > lambdas[i - 1])) throw std::invalid_argument("lambda_sweep: lambdas must increase");
    }
    std::vector<LambdaSweepRow> rows;
    for (double lambda : lambdas) {
        model::TrainConfig cfg = base;
        cfg.lambda = lambda;
        const auto trained = model::train(pools, problem, gcfg, ccfg, cfg, hooks);
        const auto rep = evaluate_model(problem, trained.gen, trained.critic, pools.test_x, pools.test_y);
        rows.push_back({lambda, rep.psnr_summary.mean, rep.mean_distortion, rep.w1_estimate});
    }
    return summarize_sweep(std::move(rows));
}

bool DescentProbe::improved() const {
    return std::any_of(w1.begin(), w1.end(), [&](double v) { return v < baseline; });
}

double DescentReport::improved_fraction() const {
    if (probes.empty()) return 0.0;
    const auto n = std::count_if(probes.begin(), probes.end(), [](const DescentProbe& p) { return p.improved(); });
    return static_cast<double>(n) / static_cast<double>(probes.size());
}

namespace {

// k distinct indices from [0, n) by a partial Fisher-Yates shuffle.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, CounterRng& rng) {
    if (k > n) throw std::invalid_argument("sample_without_replacement: k exceeds n");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(k);
    return idx;
}

}  // namespace

DescentReport wasserstein_descent_check(const model::Problem& problem, const model::Generator& gen,
                                        const model::Critic& critic, const data::DatasetPools& pools,
                                        const std::vector<double>& etas, std::size_t probes, std::size_t batch,
                                        std::uint64_t master_seed) {
    DescentReport rep;
    rep.etas = etas;
    for (std::size_t p = 0; p < probes; ++p) {
        CounterRng rng(derive_seed(master_seed, 0, p));
        const auto yi = sample_without_replacement(pools.train_y.size(), batch, rng);
        const auto xi = sample_without_replacement(pools.train_x.size(), batch, rng);
        std::vector<tomo::Image> recon, truth;
        for (auto i : yi) recon.push_back(model::reconstruct(problem, gen, pools.train_y[i]));
        for (auto i : xi) truth.push_back(pools.train_x[i]);
        const auto target = ot::PointCloud::from_images(truth);
        std::vector<tomo::Image> grads;
        for (const auto& r : recon) grads.push_back(model::critic_value_and_gradient(critic, r).second);

        DescentProbe probe;
        probe.seed = p;
        probe.baseline = ot::w1_exact(ot::PointCloud::from_images(recon), target);
        for (double eta : etas) {
            std::vector<tomo::Image> moved = recon;
            for (std::size_t j = 0; j < moved.size(); ++j) {
                for (std::size_t k = 0; k < moved[j].size(); ++k) moved[j].values[k] -= eta * grads[j].values[k];
            }
            probe.w1.push_back(ot::w1_exact(ot::PointCloud::from_images(moved), target));
        }
        rep.probes.push_back(std::move(probe));
    }
    return rep;
}

StabilityReport stability_smoke(const std::function<model::Generator(double)>& train_fn, double sigma_a,
                                double sigma_b, const model::Problem& problem,
                                const std::vector<tomo::Sinogram>& probe_y, double bound) {
    if (probe_y.empty()) throw std::invalid_argument("stability_smoke: empty probe set");
    StabilityReport rep;
    rep.sigma_a = sigma_a;
    rep.sigma_b = sigma_b;
    rep.bound = bound;
    const model::Generator a = train_fn(sigma_a);
    const model::Generator b = train_fn(sigma_b);
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& y : probe_y) {
        const auto ra = model::reconstruct(problem, a, y);
        const auto rb = model::reconstruct(problem, b, y);
        for (std::size_t k = 0; k < ra.size(); ++k) total += std::abs(ra.values[k] - rb.values[k]);
        count += ra.size();
    }
    rep.mean_abs_distance = total / static_cast<double>(count);
    return rep;
}

}  // namespace uar::eval
