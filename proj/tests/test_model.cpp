#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>

#include "uar/data.hpp"
#include "uar/rng.hpp"
#include "uar/train.hpp"

using namespace uar;
using model::CriticConfig;
using model::GeneratorConfig;
using tomo::Image;

namespace {

// Plain multi-channel arrays for the straight-line oracles.
struct Planes {
    std::size_t c = 0, h = 0, w = 0;
    std::vector<double> v;
    double& at(std::size_t ch, std::size_t r, std::size_t col) { return v[(ch * h + r) * w + col]; }
    double at(std::size_t ch, std::size_t r, std::size_t col) const { return v[(ch * h + r) * w + col]; }
};

Planes make_planes(std::size_t c, std::size_t h, std::size_t w) { return {c, h, w, std::vector<double>(c * h * w)}; }

Planes conv_ref(const Planes& in, const ad::Tensor& w, const ad::Tensor& b, std::size_t stride) {
    const std::size_t o = w.dim(0), k = w.dim(2), p = k / 2;
    Planes out = make_planes(o, (in.h + 2 * p - k) / stride + 1, (in.w + 2 * p - k) / stride + 1);
    for (std::size_t oc = 0; oc < o; ++oc) {
        for (std::size_t r = 0; r < out.h; ++r) {
            for (std::size_t c = 0; c < out.w; ++c) {
                double acc = b[oc];
                for (std::size_t ic = 0; ic < in.c; ++ic) {
                    for (std::size_t i = 0; i < k; ++i) {
                        for (std::size_t j = 0; j < k; ++j) {
                            const long rr = long(r * stride + i) - long(p), cc = long(c * stride + j) - long(p);
                            if (rr < 0 || cc < 0 || rr >= long(in.h) || cc >= long(in.w)) continue;
                            acc += w[((oc * in.c + ic) * k + i) * k + j] * in.at(ic, rr, cc);
                        }
                    }
                }
                out.at(oc, r, c) = acc;
            }
        }
    }
    return out;
}

void prelu_ref(Planes& x, const ad::Tensor& slope) {
    for (std::size_t ch = 0; ch < x.c; ++ch) {
        for (std::size_t i = 0; i < x.h * x.w; ++i) {
            double& v = x.v[ch * x.h * x.w + i];
            if (v < 0.0) v *= slope[ch];
        }
    }
}

std::string lname(std::size_t l, const char* rest) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "L%02zu.%s", l, rest);
    return buf;
}

Planes block_ref(const nn::ParamSet& p, const std::string& pre, const Planes& in) {
    Planes h = conv_ref(in, p.at(pre + ".conv0.w"), p.at(pre + ".conv0.b"), 1);
    prelu_ref(h, p.at(pre + ".act0"));
    h = conv_ref(h, p.at(pre + ".conv1.w"), p.at(pre + ".conv1.b"), 1);
    prelu_ref(h, p.at(pre + ".act1"));
    return conv_ref(h, p.at(pre + ".conv2.w"), p.at(pre + ".conv2.b"), 1);
}

Image generator_ref(const tomo::Geometry& g, const model::Generator& gen, const tomo::Sinogram& y) {
    Image x = tomo::fbp(y, g);
    tomo::Sinogram h(g.n_angles, g.n_det);
    for (std::size_t l = 0; l < gen.config.layers; ++l) {
        const double sigma = gen.params.at(lname(l, "sigma"))[0], tau = gen.params.at(lname(l, "tau"))[0];
        const auto ax = tomo::radon_forward(x, g);
        Planes in = make_planes(3, g.n_angles, g.n_det);
        for (std::size_t i = 0; i < h.size(); ++i) {
            in.v[i] = h.values[i];
            in.v[h.size() + i] = sigma * ax.values[i];
            in.v[2 * h.size() + i] = y.values[i];
        }
        const Planes dh = block_ref(gen.params, lname(l, "dual"), in);
        for (std::size_t i = 0; i < h.size(); ++i) h.values[i] += dh.v[i];
        const Image ath = tomo::radon_adjoint(h, g);
        Planes px = make_planes(2, g.n, g.n);
        for (std::size_t i = 0; i < x.size(); ++i) {
            px.v[i] = x.values[i];
            px.v[x.size() + i] = tau * ath.values[i];
        }
        const Planes dx = block_ref(gen.params, lname(l, "primal"), px);
        for (std::size_t i = 0; i < x.size(); ++i) x.values[i] += dx.v[i];
    }
    return x;
}

double critic_ref(const model::Critic& c, const Image& x) {
    Planes h{1, x.n, x.n, x.values};
    auto leaky = [&](std::vector<double>& v) {
        for (double& e : v) e = e < 0.0 ? c.config.slope * e : e;
    };
    for (std::size_t i = 0; i < c.config.conv_layers; ++i) {
        const std::string n = "conv" + std::to_string(i);
        h = conv_ref(h, c.params.at(n + ".w"), c.params.at(n + ".b"), i % 2 == 1 ? 2 : 1);
        leaky(h.v);
    }
    std::vector<double> pooled(h.c, 0.0);
    for (std::size_t ch = 0; ch < h.c; ++ch) {
        for (std::size_t i = 0; i < h.h * h.w; ++i) pooled[ch] += h.v[ch * h.h * h.w + i];
        pooled[ch] /= static_cast<double>(h.h * h.w);
    }
    auto dense = [&](const std::string& n, const std::vector<double>& in) {
        const auto& w = c.params.at(n + ".w");
        const auto& b = c.params.at(n + ".b");
        std::vector<double> out(w.dim(0));
        for (std::size_t r = 0; r < out.size(); ++r) {
            out[r] = b[r];
            for (std::size_t k = 0; k < in.size(); ++k) out[r] += w[r * in.size() + k] * in[k];
        }
        return out;
    };
    if (c.config.hidden == 0) return dense("fc", pooled)[0];
    auto hidden = dense("fc0", pooled);
    leaky(hidden);
    return dense("fc1", hidden)[0];
}

void randomize(nn::ParamSet& p, std::uint64_t seed, double scale) {
    CounterRng rng(seed);
    for (auto& [name, t] : p) {
        for (double& v : t.mutable_data()) v = rng.uniform(-scale, scale);
    }
}

const tomo::Geometry kSmall = tomo::Geometry::parallel(16, 8, 23);

tomo::Sinogram noisy_sinogram(std::uint64_t seed) {
    return data::simulate_measurement(data::random_phantom(seed, 16), kSmall, {0.5}, seed + 1);
}

}  // namespace

TEST(Generator, ZeroWeightsAndZeroLayersGiveFbp) {
    const model::Problem problem(kSmall);
    const auto y = noisy_sinogram(1);
    auto gen = model::make_generator({3, 4, 5, 0.1, 0.01}, 2);
    gen.params = gen.params.zeros_like();
    EXPECT_EQ(model::reconstruct(problem, gen, y), problem.fbp(y));
    const auto empty = model::make_generator({0, 4, 5, 0.1, 0.01}, 2);
    EXPECT_EQ(model::reconstruct(problem, empty, y), problem.fbp(y));
}

TEST(Generator, MatchesStraightLineRecursion) {
    const model::Problem problem(kSmall);
    auto gen = model::make_generator({3, 4, 5, 0.1, 0.01}, 5);
    randomize(gen.params, 6, 0.2);
    const auto y = noisy_sinogram(3);
    const Image got = model::reconstruct(problem, gen, y);
    const Image ref = generator_ref(kSmall, gen, y);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.values[i], ref.values[i], 1e-12);
}

TEST(Critic, MatchesStraightLineNetwork) {
    for (std::size_t hidden : {0, 16}) {
        auto critic = model::make_critic({6, 4, 5, hidden, 0.2}, 7);
        randomize(critic.params, 8, 0.3);
        const Image x = data::random_phantom(9, 32);
        EXPECT_NEAR(model::critic_value(critic, x), critic_ref(critic, x), 1e-12);
    }
}

TEST(Critic, ZeroWeightsAndLinearCase) {
    auto critic = model::make_critic({0, 4, 5, 0, 0.2}, 1);
    EXPECT_EQ(critic.params.size(), 2u);
    critic.params.at("fc.w").mutable_data()[0] = 3.0;
    critic.params.at("fc.b").mutable_data()[0] = 0.5;
    const Image x = data::random_phantom(2, 16);
    const auto [value, grad] = model::critic_value_and_gradient(critic, x);
    double mean = 0.0;
    for (double v : x.values) mean += v;
    mean /= 256.0;
    EXPECT_NEAR(value, 3.0 * mean + 0.5, 1e-14);
    for (double g : grad.values) EXPECT_NEAR(g, 3.0 / 256.0, 1e-16);

    auto zero = model::make_critic({6, 4, 5, 16, 0.2}, 1);
    zero.params = zero.params.zeros_like();
    EXPECT_EQ(model::critic_value(zero, x), 0.0);
}

TEST(Critic, DefaultChannelLayout) {
    const CriticConfig cfg;
    const std::size_t expected[] = {16, 32, 32, 64, 64, 128};
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(model::critic_channels(cfg, i), expected[i]);
}

TEST(CriticLoss, TrivialValues) {
    const CriticConfig cfg{6, 2, 5, 8, 0.2};
    auto critic = model::make_critic(cfg, 3);
    const std::vector<Image> xs{data::random_phantom(1, 16), data::random_phantom(2, 16)};
    const std::vector<Image> us{data::random_phantom(3, 16), data::random_phantom(4, 16)};
    for (auto mode : {model::GpMode::exact, model::GpMode::directional_fd}) {
        ad::Graph g(ad::GraphOptions{true, false});
        const auto bound = nn::bind(g, critic.params);
        EXPECT_EQ(model::critic_loss(g, cfg, bound, xs, xs, 0.0, 1, mode).item(), 0.0);
    }
    auto zero = critic;
    zero.params = critic.params.zeros_like();
    ad::Graph g(ad::GraphOptions{true, false});
    EXPECT_DOUBLE_EQ(model::critic_loss(g, cfg, nn::bind(g, zero.params), xs, us, 10.0, 1, model::GpMode::exact).item(),
                     10.0);
    ad::Graph first_order;
    EXPECT_THROW(model::critic_loss(first_order, cfg, nn::bind(first_order, critic.params), xs, us, 10.0, 1,
                                    model::GpMode::exact),
                 std::invalid_argument);
}

// With v along the input gradient, both modes give the same parameter
// gradient whenever no activation changes sign between x_eps and x_eps + h v.
// When one does, the difference quotient picks up an O(1/h) term, so the check
// counts agreeing draws instead of averaging errors. The u images carry noise
// like reconstructions do; clean zero backgrounds with zero initial biases
// would put whole regions exactly on a kink.
TEST(CriticLoss, ExactAndDirectionalModesAgree) {
    const CriticConfig cfg{2, 2, 3, 4, 0.2};
    std::size_t agree = 0;
    for (std::uint64_t seed = 0; seed < 64; ++seed) {
        const auto critic = model::make_critic(cfg, 100 + seed);
        const std::vector<Image> xs{data::random_phantom(seed, 16)};
        std::vector<Image> us{data::random_phantom(1000 + seed, 16)};
        CounterRng noise(5000 + seed);
        for (double& v : us[0].values) v += 0.05 * noise.normal();
        nn::ParamSet grads[2];
        int k = 0;
        for (auto mode : {model::GpMode::exact, model::GpMode::directional_fd}) {
            ad::Graph g(ad::GraphOptions{mode == model::GpMode::exact, false});
            const auto bound = nn::bind(g, critic.params);
            grads[k++] = nn::gradients(g, model::critic_loss(g, cfg, bound, xs, us, 10.0, seed, mode), bound);
        }
        double diff = 0.0, norm = 0.0;
        for (const auto& [name, t] : grads[0]) {
            const auto& o = grads[1].at(name);
            for (std::size_t i = 0; i < t.size(); ++i) {
                diff += (t[i] - o[i]) * (t[i] - o[i]);
                norm += t[i] * t[i];
            }
        }
        agree += std::sqrt(diff / norm) < 1e-8;
    }
    EXPECT_GE(agree, 44u);
}

TEST(GeneratorLoss, ReducesToFbpFidelity) {
    const model::Problem problem(kSmall);
    const GeneratorConfig gcfg{2, 4, 5, 0.1, 0.01};
    auto gen = model::make_generator(gcfg, 1);
    gen.params = gen.params.zeros_like();
    const auto critic = model::make_critic({6, 2, 5, 8, 0.2}, 2);
    const std::vector<tomo::Sinogram> ys{noisy_sinogram(10), noisy_sinogram(20)};
    double expected = 0.0;
    for (const auto& y : ys) {
        const auto ax = problem.forward(problem.fbp(y));
        for (std::size_t i = 0; i < y.size(); ++i) expected += (y.values[i] - ax.values[i]) * (y.values[i] - ax.values[i]);
    }
    expected /= 2.0;
    const double sum = model::generator_loss(problem, gcfg, gen.params, critic, ys, 0.0).item();
    EXPECT_NEAR(sum, expected, 1e-10 * expected);
    const double mean =
        model::generator_loss(problem, gcfg, gen.params, critic, ys, 0.0, model::FidelityScale::mean).item();
    EXPECT_NEAR(mean, expected / static_cast<double>(ys[0].size()), 1e-12 * expected);
    EXPECT_THROW(model::generator_loss(problem, gcfg, gen.params, critic, {}, 0.0), std::invalid_argument);
}

TEST(GeneratorLoss, MatchesRecomputationAndFreezesCritic) {
    const model::Problem problem(kSmall);
    const GeneratorConfig gcfg{2, 4, 5, 0.1, 0.01};
    auto gen = model::make_generator(gcfg, 3);
    randomize(gen.params, 4, 0.1);
    const auto critic = model::make_critic({6, 2, 5, 8, 0.2}, 5);
    const std::vector<tomo::Sinogram> ys{noisy_sinogram(30)};
    const double lambda = 0.7;
    const Image x = model::reconstruct(problem, gen, ys[0]);
    const auto ax = problem.forward(x);
    double fid = 0.0;
    for (std::size_t i = 0; i < ax.size(); ++i) fid += (ys[0].values[i] - ax.values[i]) * (ys[0].values[i] - ax.values[i]);
    const double expected = fid + lambda * model::critic_value(critic, x);

    ad::Graph g;
    const auto bound_gen = nn::bind(g, gen.params);
    const auto bound_critic = nn::bind(g, critic.params);
    const model::Critic on_graph{critic.config, bound_critic};
    const auto loss = model::generator_loss(problem, gcfg, bound_gen, on_graph, ys, lambda);
    EXPECT_NEAR(loss.item(), expected, 1e-12 * std::abs(expected));
    const auto grads = nn::gradients(g, loss, bound_critic);
    for (const auto& [name, t] : grads) {
        for (double v : t.data()) ASSERT_EQ(v, 0.0) << name;
    }
}

TEST(Refine, TraceIsMonotoneAndZeroItersIsIdentity) {
    const model::Problem problem(kSmall);
    auto gen = model::make_generator({2, 4, 5, 0.1, 0.01}, 1);
    const auto critic = model::make_critic({6, 2, 5, 8, 0.2}, 2);
    const auto y = noisy_sinogram(40);
    model::RefineConfig cfg;
    cfg.max_iters = 0;
    EXPECT_EQ(model::refine(problem, gen, critic, y, cfg).image, model::reconstruct(problem, gen, y));
    cfg.max_iters = 30;
    const auto r = model::refine(problem, gen, critic, y, cfg);
    ASSERT_GE(r.objective.size(), 2u);
    for (std::size_t i = 1; i < r.objective.size(); ++i) EXPECT_LE(r.objective[i], r.objective[i - 1]);
    EXPECT_NEAR(r.objective.back(), model::refine_objective(problem, critic, y, r.image, cfg), 1e-12);
}

// With no fidelity and no Tikhonov term one accepted step is x - eta grad R.
TEST(Refine, OneStepIsTheCriticDescentMap) {
    const model::Problem problem(kSmall);
    const auto critic = model::make_critic({6, 2, 5, 8, 0.2}, 3);
    const Image x0 = data::random_phantom(50, 16);
    model::RefineConfig cfg;
    cfg.fidelity_weight = 0.0;
    cfg.lambda_prime = 1.0;
    cfg.max_iters = 1;
    const auto r = model::refine_from(problem, critic, noisy_sinogram(51), x0, cfg);
    ASSERT_EQ(r.steps.size(), 1u);
    const Image ref = model::critic_descent_step(critic, x0, r.steps[0]);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(r.image.values[i], ref.values[i], 1e-15);
}

TEST(Refine, FidelityGradientVanishesAtExactFit) {
    const model::Problem problem(kSmall);
    const auto critic = model::make_critic({6, 2, 5, 8, 0.2}, 3);
    const Image x = data::random_phantom(60, 16);
    const auto y = problem.forward(x);
    model::RefineConfig cfg;
    cfg.lambda_prime = 0.0;
    const Image g = model::refine_gradient(problem, critic, y, x, cfg);
    for (double v : g.values) EXPECT_EQ(v, 0.0);
}

TEST(Train, PhaseStepCountsAndDeterminism) {
    const model::Problem problem(kSmall);
    const auto pools = data::make_pools({4, 4, 2}, kSmall, {0.5}, 1);
    model::TrainConfig cfg;
    cfg.epochs[0] = 2;
    cfg.epochs[1] = 1;
    cfg.epochs[2] = 1;
    cfg.probe_size = 2;
    cfg.validation_size = 2;
    const GeneratorConfig gcfg{1, 2, 3, 0.1, 0.01};
    const CriticConfig ccfg{2, 2, 3, 4, 0.2};
    std::vector<std::string> tags;
    model::TrainHooks hooks;
    hooks.checkpoint = [&](const std::string& tag, const model::TrainState&) { tags.push_back(tag); };
    const auto a = model::train(pools, problem, gcfg, ccfg, cfg, hooks);
    const auto b = model::train(pools, problem, gcfg, ccfg, cfg);
    std::size_t counts[4] = {0, 0, 0, 0};
    for (const auto& r : a.log.losses) counts[r.phase]++;
    EXPECT_EQ(counts[1], 8u);
    EXPECT_EQ(counts[2], 4u);
    EXPECT_EQ(counts[3], 4u + 2u * 4u);
    ASSERT_EQ(a.log.losses.size(), b.log.losses.size());
    for (std::size_t i = 0; i < a.log.losses.size(); ++i) EXPECT_EQ(a.log.losses[i].value, b.log.losses[i].value);
    for (const auto& [name, t] : a.gen.params) {
        for (std::size_t i = 0; i < t.size(); ++i) ASSERT_EQ(t[i], b.gen.params.at(name)[i]);
    }
    EXPECT_FALSE(tags.empty());
    for (const auto& e : a.log.epochs) EXPECT_TRUE(std::isfinite(e.w1_estimate));
}

TEST(Train, RejectsInvalidConfig) {
    model::TrainConfig cfg;
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.lambda_gp = -1.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
