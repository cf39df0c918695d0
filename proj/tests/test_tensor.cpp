#include <gtest/gtest.h>

#include <cmath>

#include "uar/checks.hpp"
#include "uar/nn.hpp"
#include "uar/rng.hpp"
#include "uar/tensor.hpp"

using namespace uar;
using ad::Tensor;

namespace {

Tensor random_tensor(ad::Shape shape, std::uint64_t seed) {
    CounterRng rng(seed);
    Tensor t(std::move(shape));
    for (double& v : t.mutable_data()) v = rng.uniform(-1.0, 1.0);
    return t;
}

}  // namespace

TEST(Tensor, ShapeAndValues) {
    const Tensor t({2, 3}, 1.5);
    EXPECT_EQ(t.size(), 6u);
    EXPECT_EQ(ad::shape_str(t.shape()), "[2,3]");
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
    EXPECT_DOUBLE_EQ(Tensor::scalar(4.0).item(), 4.0);
    EXPECT_THROW(t.item(), std::invalid_argument);
}

TEST(Tensor, CloneDoesNotAlias) {
    Tensor a({3}, 1.0);
    Tensor b = a.clone();
    b.mutable_data()[0] = 7.0;
    EXPECT_EQ(a[0], 1.0);
    Tensor c = a.detach();
    c.mutable_data()[0] = 9.0;
    EXPECT_EQ(a[0], 9.0);
}

TEST(Autodiff, QuadraticGradient) {
    ad::Graph g;
    const Tensor x = g.variable(Tensor({3}, std::vector<double>{1, -2, 3}));
    const Tensor f = ad::sum(ad::square(x));
    const auto grads = g.gradients(f, std::vector<Tensor>{x});
    EXPECT_EQ(grads[0][0], 2.0);
    EXPECT_EQ(grads[0][1], -4.0);
    EXPECT_EQ(grads[0][2], 6.0);
}

TEST(Autodiff, UnusedVariableGetsZeros) {
    ad::Graph g;
    const Tensor x = g.variable(Tensor({2}, 1.0));
    const Tensor y = g.variable(Tensor({2}, 1.0));
    const auto grads = g.gradients(ad::sum(x), std::vector<Tensor>{x, y});
    EXPECT_EQ(grads[1][0], 0.0);
    EXPECT_EQ(grads[1][1], 0.0);
}

TEST(Autodiff, MixingGraphsThrows) {
    ad::Graph g1, g2;
    const Tensor a = g1.variable(Tensor({2}, 1.0));
    const Tensor b = g2.variable(Tensor({2}, 1.0));
    EXPECT_THROW(ad::add(a, b), std::invalid_argument);
}

TEST(Autodiff, L2NormGradientAtZeroIsZero) {
    ad::Graph g;
    const Tensor x = g.variable(Tensor({4}, 0.0));
    const auto grads = g.gradients(ad::l2norm(x), std::vector<Tensor>{x});
    for (double v : grads[0].data()) EXPECT_EQ(v, 0.0);
}

// d/dx of (d/dx sum x^3) . v = 6 x v, checked exactly.
TEST(Autodiff, SecondOrderCubic) {
    ad::Graph g(ad::GraphOptions{true, false});
    const Tensor x = g.variable(Tensor({3}, std::vector<double>{1, 2, -1}));
    const Tensor v({3}, std::vector<double>{0.5, -1, 2});
    const Tensor f = ad::sum(ad::mul(ad::square(x), x));
    const auto g1 = g.gradients(f, std::vector<Tensor>{x}, true);
    const auto g2 = g.gradients(ad::dot(g1[0], v), std::vector<Tensor>{x}, false);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(g2[0][i], 6.0 * x[i] * v[i]);
}

TEST(Conv, OutputSizeAndIdentityKernel) {
    const Tensor in = random_tensor({1, 5, 5}, 3);
    Tensor w({1, 1, 3, 3}, 0.0);
    w.mutable_data()[4] = 1.0;
    const Tensor out = ad::conv2d(in, w, Tensor(), 1, 1);
    ASSERT_EQ(out.shape(), (ad::Shape{1, 5, 5}));
    for (std::size_t i = 0; i < in.size(); ++i) EXPECT_EQ(out[i], in[i]);
    const Tensor strided = ad::conv2d(random_tensor({2, 64, 64}, 1), random_tensor({3, 2, 5, 5}, 2), Tensor(), 2, 2);
    EXPECT_EQ(strided.shape(), (ad::Shape{3, 32, 32}));
}

// Direct summation oracle for a strided, padded correlation with bias.
TEST(Conv, MatchesDirectSummation) {
    const std::size_t C = 2, H = 7, W = 6, O = 3, k = 3, s = 2, p = 1;
    const Tensor in = random_tensor({C, H, W}, 5);
    const Tensor w = random_tensor({O, C, k, k}, 6);
    const Tensor b = random_tensor({O}, 7);
    const Tensor out = ad::conv2d(in, w, b, s, p);
    const std::size_t OH = (H + 2 * p - k) / s + 1, OW = (W + 2 * p - k) / s + 1;
    ASSERT_EQ(out.shape(), (ad::Shape{O, OH, OW}));
    for (std::size_t o = 0; o < O; ++o) {
        for (std::size_t r = 0; r < OH; ++r) {
            for (std::size_t c = 0; c < OW; ++c) {
                double acc = b[o];
                for (std::size_t ci = 0; ci < C; ++ci) {
                    for (std::size_t i = 0; i < k; ++i) {
                        for (std::size_t j = 0; j < k; ++j) {
                            const long rr = static_cast<long>(r * s + i) - static_cast<long>(p);
                            const long cc = static_cast<long>(c * s + j) - static_cast<long>(p);
                            if (rr < 0 || cc < 0 || rr >= static_cast<long>(H) || cc >= static_cast<long>(W)) continue;
                            acc += w[((o * C + ci) * k + i) * k + j] * in[(ci * H + rr) * W + cc];
                        }
                    }
                }
                EXPECT_NEAR(out[(o * OH + r) * OW + c], acc, 1e-13);
            }
        }
    }
}

TEST(Activations, LeakyAndPrelu) {
    const Tensor a({4}, std::vector<double>{-2, -0.5, 0, 3});
    const Tensor l = ad::leaky_relu(a, 0.2);
    EXPECT_DOUBLE_EQ(l[0], -0.4);
    EXPECT_DOUBLE_EQ(l[2], 0.0);
    EXPECT_DOUBLE_EQ(l[3], 3.0);
    const Tensor p = ad::prelu(Tensor({2, 1, 2}, std::vector<double>{-1, 1, -1, 1}),
                               Tensor({2}, std::vector<double>{0.1, 0.3}));
    EXPECT_DOUBLE_EQ(p[0], -0.1);
    EXPECT_DOUBLE_EQ(p[2], -0.3);
    EXPECT_DOUBLE_EQ(p[3], 1.0);
}

TEST(Layout, ConcatSliceEmbed) {
    const Tensor a({1, 2, 2}, 1.0), b({2, 2, 2}, 2.0);
    const Tensor c = ad::concat({a, b});
    EXPECT_EQ(c.shape(), (ad::Shape{3, 2, 2}));
    const Tensor s = ad::slice(c, 1, 2);
    for (double v : s.data()) EXPECT_EQ(v, 2.0);
    const Tensor e = ad::embed(a, 3, 2);
    EXPECT_EQ(e[0], 0.0);
    EXPECT_EQ(e[8], 1.0);
}

TEST(Gradcheck, EveryOperationAndBothNetworks) {
    const auto cases = checks::gradcheck_all(5, 77);
    EXPECT_GE(cases.size(), 20u);
    for (const auto& c : cases) {
        EXPECT_LT(c.stats.worst, 1e-5) << c.name;
        EXPECT_GT(c.stats.checked, 0u) << c.name;
        EXPECT_LE(c.stats.excluded * 100, c.stats.checked + c.stats.excluded) << c.name;
    }
}

TEST(Gradcheck, DetectsAWrongGradient) {
    // A deliberately wrong backward rule must be caught.
    const checks::ScalarFn f = [](const std::vector<Tensor>& in) {
        Tensor out = Tensor::scalar(0.0);
        for (double v : in[0].data()) out.mutable_data()[0] += std::sin(v);
        return ad::record_op(ad::OpKind::sum, out, {in[0]}, [](const Tensor&, const Tensor& g, const ad::Graph::Needs&) {
            return std::vector<Tensor>{ad::broadcast(g, {3})};
        });
    };
    const auto s = checks::gradcheck(f, {random_tensor({3}, 9)}, 1e-5);
    EXPECT_GT(s.worst, 1e-2);
}

TEST(SecondOrder, GradientPenaltyMatchesFiniteDifferences) {
    EXPECT_LT(checks::second_order_error(5), 1e-4);
}

TEST(Adam, MatchesScalarReimplementation) { EXPECT_LT(checks::adam_oracle_error(), 1e-15); }

TEST(Adam, RejectsNonFiniteGradients) {
    nn::ParamSet p;
    p.add("w", Tensor({2}, 1.0));
    auto state = nn::AdamState::for_params(p, 1e-3);
    nn::ParamSet g = p.zeros_like();
    g.at("w").mutable_data()[1] = NAN;
    EXPECT_THROW(nn::adam_step(p, g, state), std::runtime_error);
    EXPECT_EQ(p.at("w")[0], 1.0);
    EXPECT_EQ(state.t, 0u);
}

TEST(ParamSet, InitIsSeededAndBounded) {
    const std::vector<nn::ParamSpec> spec{{"w", {4, 9}, nn::InitKind::uniform_fan_in, 9, 0.0},
                                          {"b", {4}, nn::InitKind::constant, 1, 0.25}};
    const auto a = nn::init_params(spec, 3), b = nn::init_params(spec, 3), c = nn::init_params(spec, 4);
    for (std::size_t i = 0; i < 36; ++i) {
        EXPECT_EQ(a.at("w")[i], b.at("w")[i]);
        EXPECT_LE(std::abs(a.at("w")[i]), 1.0 / 3.0);
    }
    EXPECT_NE(a.at("w")[0], c.at("w")[0]);
    EXPECT_EQ(a.at("b")[2], 0.25);
}
