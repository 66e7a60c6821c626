#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "support.hpp"

using namespace behrt;
using behrt::test::gradcheck;
using behrt::test::max_error;
using behrt::test::random_tensor;
using numerics::Graph;
using numerics::Tensor;
using numerics::Var;

namespace {

model::ParamStore<double> store_of(std::vector<Tensor<double>> ts) {
    model::ParamStore<double> s;
    for (std::size_t i = 0; i < ts.size(); ++i) s.add("x" + std::to_string(i), std::move(ts[i]));
    return s;
}

// Weighted sum so every output entry carries a distinct upstream gradient.
Var probe(Graph<double>& g, Var y) {
    const auto& v = g.value(y);
    Tensor<double> w(v.shape());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.0 + 0.7 * static_cast<double>(i));
    return g.sum(g.mul(y, g.constant(std::move(w))));
}

}  // namespace

TEST(Tensor, RejectsMismatchedValues) {
    EXPECT_THROW(Tensor<double>({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
    EXPECT_THROW(Tensor<double>::matrix({{1, 2}, {3}}), ShapeError);
}

TEST(Tensor, CastAndEquality) {
    auto t = Tensor<double>::matrix({{1, 2}, {3, 4}});
    EXPECT_EQ(t.cast<float>().cast<double>(), t);
    EXPECT_EQ(t.rows(), 2u);
    EXPECT_EQ(t.cols(), 2u);
    EXPECT_DOUBLE_EQ(t(1, 0), 3.0);
}

TEST(Matmul, SmallExample) {
    Graph<double> g;
    Var a = g.constant(Tensor<double>::matrix({{1, 2}, {3, 4}}));
    Var b = g.constant(Tensor<double>::matrix({{1}, {1}}));
    EXPECT_EQ(g.value(g.matmul(a, b)), Tensor<double>::matrix({{3}, {7}}));
}

TEST(Matmul, InnerDimensionMismatchThrows) {
    Graph<double> g;
    Var a = g.constant(Tensor<double>({2, 3}));
    Var b = g.constant(Tensor<double>({2, 2}));
    EXPECT_THROW(g.matmul(a, b), ShapeError);
}

TEST(Matmul, IdentityIsNeutral) {
    std::mt19937_64 rng(3);
    auto a = random_tensor({3, 4}, rng);
    Tensor<double> eye({4, 4});
    for (std::size_t i = 0; i < 4; ++i) eye(i, i) = 1.0;
    Graph<double> g;
    EXPECT_EQ(g.value(g.matmul(g.constant(a), g.constant(eye))), a);
}

TEST(Softmax, SmallExample) {
    Graph<double> g;
    Var x = g.constant(Tensor<double>::vector({std::log(1.0), std::log(2.0), std::log(3.0)}));
    const auto& y = g.value(g.softmax(x, 0));
    EXPECT_NEAR(y[0], 1.0 / 6.0, 1e-12);
    EXPECT_NEAR(y[1], 2.0 / 6.0, 1e-12);
    EXPECT_NEAR(y[2], 3.0 / 6.0, 1e-12);
}

TEST(Softmax, BadAxisThrows) {
    Graph<double> g;
    Var x = g.constant(Tensor<double>({2, 2}));
    EXPECT_THROW(g.softmax(x, 2), ShapeError);
}

TEST(Softmax, ShiftInvariantAndStableForLargeInputs) {
    Graph<double> g;
    Var a = g.constant(Tensor<double>::vector({1000.0, 1001.0, 1002.0}));
    Var b = g.constant(Tensor<double>::vector({0.0, 1.0, 2.0}));
    const auto& ya = g.value(g.softmax(a, 0));
    const auto& yb = g.value(g.softmax(b, 0));
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(ya[i], yb[i], 1e-12);
}

TEST(Softmax, SlicesSumToOne) {
    std::mt19937_64 rng(11);
    for (std::size_t axis : {0u, 1u, 2u}) {
        Graph<double> g;
        const auto& y = g.value(g.softmax(g.constant(random_tensor({3, 4, 5}, rng, 3.0)), axis));
        const numerics::Shape s = y.shape();
        std::size_t outer = 1, inner = 1;
        for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
        for (std::size_t i = axis + 1; i < 3; ++i) inner *= s[i];
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t in = 0; in < inner; ++in) {
                double z = 0.0;
                for (std::size_t k = 0; k < s[axis]; ++k) z += y[o * s[axis] * inner + k * inner + in];
                EXPECT_NEAR(z, 1.0, 1e-12);
            }
    }
}

TEST(LayerNorm, SmallExample) {
    Graph<double> g;
    Var x = g.constant(Tensor<double>::matrix({{1, 3}}));
    Var gain = g.constant(Tensor<double>::vector({1, 1}));
    Var bias = g.constant(Tensor<double>::vector({0, 0}));
    const auto& y = g.value(g.layer_norm(x, gain, bias, 0.0));
    EXPECT_NEAR(y[0], -1.0, 1e-12);
    EXPECT_NEAR(y[1], 1.0, 1e-12);
}

TEST(LayerNorm, GainLengthMismatchThrows) {
    Graph<double> g;
    Var x = g.constant(Tensor<double>({2, 3}));
    EXPECT_THROW(g.layer_norm(x, g.constant(Tensor<double>({2})), g.constant(Tensor<double>({3})), 1e-12),
                 ShapeError);
}

TEST(LayerNorm, RowsHaveZeroMeanUnitVariance) {
    std::mt19937_64 rng(5);
    Graph<double> g;
    const auto& y = g.value(g.layer_norm(g.constant(random_tensor({4, 7}, rng, 5.0)),
                                         g.constant(Tensor<double>({7}, 1.0)), g.constant(Tensor<double>({7})), 0.0));
    for (std::size_t r = 0; r < 4; ++r) {
        double mean = 0.0, var = 0.0;
        for (double v : y.row(r)) mean += v;
        mean /= 7.0;
        for (double v : y.row(r)) var += (v - mean) * (v - mean);
        EXPECT_NEAR(mean, 0.0, 1e-12);
        EXPECT_NEAR(var / 7.0, 1.0, 1e-10);
    }
}

TEST(Gelu, MatchesErfDefinition) {
    Graph<double> g;
    const auto& y = g.value(g.gelu(g.constant(Tensor<double>::vector({-2.0, 0.0, 1.0}))));
    for (int i = 0; i < 3; ++i) {
        const double x = i == 0 ? -2.0 : i == 1 ? 0.0 : 1.0;
        EXPECT_NEAR(y[static_cast<std::size_t>(i)], 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))), 1e-15);
    }
}

TEST(GatherRows, OutOfRangeIdThrows) {
    Graph<double> g;
    Var t = g.constant(Tensor<double>({3, 2}));
    const int ids[] = {0, 3};
    EXPECT_THROW(g.gather_rows(t, ids), ShapeError);
}

TEST(Backward, NonScalarLossThrows) {
    Graph<double> g;
    Tensor<double> w({2, 2}, 1.0);
    Var x = g.parameter(w);
    EXPECT_THROW(g.backward(g.scale(x, 2.0)), ShapeError);
}

TEST(Backward, NonFiniteValueRaisesNumericError) {
    Graph<double> g;
    Var x = g.constant(Tensor<double>::vector({1e308}));
    EXPECT_THROW(g.scale(x, 10.0), NumericError);
}

TEST(Backward, GradientAccumulatesOverReuse) {
    Graph<double> g;
    Tensor<double> w = Tensor<double>::vector({3.0});
    Var x = g.parameter(w);
    g.backward(g.sum(g.mul(x, x)));  // d(x^2)/dx = 2x
    EXPECT_DOUBLE_EQ(g.grad(x)[0], 6.0);
}

TEST(Gradcheck, ElementwiseAndLinearOps) {
    std::mt19937_64 rng(17);
    auto s = store_of({random_tensor({3, 4}, rng), random_tensor({4, 5}, rng), random_tensor({5}, rng),
                       random_tensor({3, 5}, rng)});
    auto r = gradcheck(s, [](auto& p) {
        auto& g = p.graph();
        Var y = g.linear(p(0), p(1), p(2));
        y = g.add(y, g.scale(g.mul(y, p(3)), 0.5));
        return probe(g, y);
    });
    EXPECT_LT(max_error(r), 1e-7);
}

TEST(Gradcheck, SoftmaxEveryAxis) {
    std::mt19937_64 rng(19);
    for (std::size_t axis : {0u, 1u, 2u}) {
        auto s = store_of({random_tensor({2, 3, 4}, rng)});
        auto r = gradcheck(s, [axis](auto& p) { return probe(p.graph(), p.graph().softmax(p(0), axis)); });
        EXPECT_LT(max_error(r), 1e-7) << "axis " << axis;
    }
}

TEST(Gradcheck, LayerNormAndGelu) {
    std::mt19937_64 rng(23);
    auto s = store_of({random_tensor({3, 6}, rng), random_tensor({6}, rng), random_tensor({6}, rng)});
    auto r = gradcheck(s, [](auto& p) {
        auto& g = p.graph();
        return probe(g, g.gelu(g.layer_norm(p(0), p(1), p(2), 1e-12)));
    });
    EXPECT_LT(max_error(r), 1e-6);
}

TEST(Gradcheck, GatherAndMeanRows) {
    std::mt19937_64 rng(29);
    auto s = store_of({random_tensor({6, 3}, rng)});
    const std::vector<int> ids = {1, 4, 1, 0};
    const std::vector<std::uint8_t> keep = {1, 0, 1, 1};
    auto r = gradcheck(s, [&](auto& p) {
        auto& g = p.graph();
        return probe(g, g.mean_rows(g.gather_rows(p(0), ids), keep));
    });
    EXPECT_LT(max_error(r), 1e-7);
}

TEST(Gradcheck, MaskedMultiHeadAttention) {
    std::mt19937_64 rng(31);
    auto s = store_of({random_tensor({5, 6}, rng), random_tensor({5, 6}, rng), random_tensor({5, 6}, rng)});
    const std::vector<std::uint8_t> valid = {1, 1, 1, 0, 0};
    auto r = gradcheck(s, [&](auto& p) { return probe(p.graph(), p.graph().attention(p(0), p(1), p(2), valid, 2)); });
    EXPECT_LT(max_error(r), 1e-6);
}

TEST(Gradcheck, LossOps) {
    std::mt19937_64 rng(37);
    auto s = store_of({random_tensor({4, 5}, rng), random_tensor({1, 6}, rng)});
    const std::vector<int> targets = {2, -1, 0, 4};
    const std::vector<double> labels = {1, 0, 0, 1, 1, 0};
    auto r = gradcheck(s, [&](auto& p) {
        auto& g = p.graph();
        return g.add(g.cross_entropy(p(0), targets, 0.5), g.bce_with_logits(p(1), labels, 0.25));
    });
    EXPECT_LT(max_error(r), 1e-7);
}

TEST(Attention, MaskedKeysGetZeroProbabilityAndRowsSumToOne) {
    std::mt19937_64 rng(41);
    Graph<double> g;
    const std::vector<std::uint8_t> valid = {1, 1, 0, 1};
    Var q = g.constant(random_tensor({4, 4}, rng)), k = g.constant(random_tensor({4, 4}, rng));
    Var v = g.constant(random_tensor({4, 4}, rng));
    Var out = g.attention(q, k, v, valid, 2);
    const auto& probs = g.attention_probs(out);
    for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t i = 0; i < 4; ++i) {
            double z = 0.0;
            for (std::size_t j = 0; j < 4; ++j) z += probs[(h * 4 + i) * 4 + j];
            EXPECT_NEAR(z, 1.0, 1e-12);
            EXPECT_EQ(probs[(h * 4 + i) * 4 + 2], 0.0);
        }
}

TEST(Attention, PaddedKeyValuesDoNotAffectOutput) {
    std::mt19937_64 rng(43);
    const std::vector<std::uint8_t> valid = {1, 1, 1, 0};
    auto q = random_tensor({4, 4}, rng), k = random_tensor({4, 4}, rng), v = random_tensor({4, 4}, rng);
    Graph<double> g1;
    const auto a = g1.value(g1.attention(g1.constant(q), g1.constant(k), g1.constant(v), valid, 2));
    for (std::size_t c = 0; c < 4; ++c) {
        k(3, c) += 5.0;
        v(3, c) -= 7.0;
    }
    Graph<double> g2;
    const auto b = g2.value(g2.attention(g2.constant(q), g2.constant(k), g2.constant(v), valid, 2));
    for (std::size_t i = 0; i < 3 * 4; ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Dropout, ZeroRateIsIdentityAndConsumesNoRandomness) {
    Graph<double> g;
    Rng rng(7), ref(7);
    Var x = g.constant(Tensor<double>::vector({1, 2, 3}));
    Var y = g.dropout(x, 0.0, rng);
    EXPECT_EQ(y.id, x.id);
    EXPECT_EQ(rng(), ref());
}
