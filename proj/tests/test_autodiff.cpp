#include <cmath>
#include <limits>
#include <optional>

#include <gtest/gtest.h>

#include "mdl/autodiff.hpp"
#include "mdl/errors.hpp"
#include "random_graph.hpp"

using namespace mdl;
using namespace mdl::ad;

TEST(Primitives, ReluClampsNegatives) {
    Tape tape;
    const Var y = relu(tape.constant(Tensor({3}, {-1.0, 0.0, 2.0})));
    EXPECT_EQ(y.value().data, (std::vector<double>{0.0, 0.0, 2.0}));
}

TEST(Primitives, CrossEntropyOfZeroLogitsIsLogC) {
    for (std::size_t C : {2u, 3u, 5u, 10u}) {
        Tape tape;
        const Var logits = tape.constant(Tensor::zeros({4, C}));
        const Var y = tape.constant(Tensor({4}, {0.0, 1.0, 0.0, 1.0}));
        EXPECT_NEAR(softmax_cross_entropy(logits, y).value()[0], std::log(static_cast<double>(C)), 1e-12);
    }
}

TEST(Primitives, MatmulMatchesNaiveTripleLoop) {
    Rng rng(3);
    const Tensor a = test_support::random_tensor(rng, {2, 3}), b = test_support::random_tensor(rng, {3, 2});
    Tape tape;
    const Tensor c = matmul(tape.constant(a), tape.constant(b)).value();
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < 3; ++p) s += a[i * 3 + p] * b[p * 2 + j];
            EXPECT_NEAR(c[i * 2 + j], s, 1e-12);
        }
}

TEST(Primitives, ShapeMismatchNamesBothShapes) {
    Tape tape;
    const Var a = tape.constant(Tensor::zeros({2, 3}));
    const Var b = tape.constant(Tensor::zeros({2, 2}));
    try {
        add(a, b);
        FAIL() << "expected a DimensionError";
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[2,2]"), std::string::npos) << msg;
    }
    EXPECT_THROW(matmul(a, b), DimensionError);
    EXPECT_THROW(bias_add(a, tape.constant(Tensor::zeros({2}))), DimensionError);
}

TEST(Primitives, BiasAddBroadcastsOverLeadingBatchOnly) {
    Tape tape;
    const Var y = bias_add(tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4})), tape.constant(Tensor({2}, {10, 20})));
    EXPECT_EQ(y.value().data, (std::vector<double>{11, 22, 13, 24}));
}

TEST(Primitives, CrossEntropyClampsInsteadOfNaN) {
    Tape tape;
    const Var logits = tape.parameter("z", Tensor::matrix(1, 2, {0.0, 800.0}));
    const Var loss = softmax_cross_entropy(logits, tape.constant(Tensor({1}, {0.0})));
    EXPECT_NEAR(loss.value()[0], -std::log(1e-12), 1e-9);
    const GradMap g = tape.backward(loss);
    for (double v : g.at("z")) EXPECT_TRUE(std::isfinite(v));

    Tape t2;
    const Var l2 = binary_cross_entropy(t2.constant(Tensor::matrix(1, 1, {-900.0})), t2.constant(Tensor({1}, {1.0})));
    EXPECT_NEAR(l2.value()[0], -std::log(1e-12), 1e-9);
}

TEST(Primitives, SaturatedOneHotLogitsGiveTinyLoss) {
    Tape tape;
    const Var logits = tape.constant(Tensor::matrix(2, 3, {100, 0, 0, 0, 0, 100}));
    EXPECT_LT(softmax_cross_entropy(logits, tape.constant(Tensor({2}, {0, 2}))).value()[0], 1e-8);
}

TEST(Primitives, OverflowIsAnError) {
    Tape tape;
    const Var big = tape.constant(Tensor({1}, {1e308}));
    EXPECT_THROW(scale(big, 10.0), NumericError);
}

TEST(Primitives, LabelOutOfRangeIsContractError) {
    Tape tape;
    const Var logits = tape.constant(Tensor::zeros({1, 3}));
    EXPECT_THROW(softmax_cross_entropy(logits, tape.constant(Tensor({1}, {3.0}))), ContractError);
}

TEST(GradReverse, ForwardIsIdentity) {
    Tape tape;
    EXPECT_EQ(grad_reverse(tape.constant(Tensor({2}, {3.5, -2.0})), 1.0).value().data,
              (std::vector<double>{3.5, -2.0}));
}

TEST(GradReverse, BackwardNegatesAndScales) {
    for (double lambda : {1.0, 0.0, 0.37}) {
        Tape tape;
        const Var x = tape.parameter("x", Tensor({2}, {0.0, 0.0}));
        const Var up = tape.constant(Tensor({2}, {2.0, -3.0}));
        const GradMap g = tape.backward(sum(mul(grad_reverse(x, lambda), up)));
        EXPECT_EQ(g.at("x")[0], -lambda * 2.0);
        EXPECT_EQ(g.at("x")[1], -lambda * -3.0);
    }
}

TEST(GradReverse, NegativeLambdaIsConfigError) {
    Tape tape;
    EXPECT_THROW(grad_reverse(tape.constant(Tensor({1}, {1.0})), -0.5), ConfigError);
}

TEST(GradReverse, EqualsMinusLambdaTimesIdentityGradient) {
    Rng rng(21);
    const Tensor x = test_support::random_tensor(rng, {4, 3});
    std::map<std::string, Tensor> p{{"W1", test_support::random_tensor(rng, {3, 5})}, {"W2", test_support::random_tensor(rng, {5, 2})}};
    auto grads = [&](std::optional<double> lambda) {
        Tape t;
        const Var w1 = t.parameter("W1", p["W1"]), w2 = t.parameter("W2", p["W2"]);
        Var h = sigmoid(matmul(t.constant(x), w1));
        if (lambda) h = grad_reverse(h, *lambda);
        return t.backward(mean(mul(matmul(h, w2), matmul(h, w2))));
    };
    const GradMap id = grads(std::nullopt);
    const GradMap flipped = grads(1.0);
    for (std::size_t i = 0; i < id.at("W1").size(); ++i) EXPECT_EQ(flipped.at("W1")[i], -id.at("W1")[i]);
    EXPECT_EQ(flipped.at("W2"), id.at("W2"));
    const GradMap scaled = grads(0.3);
    for (std::size_t i = 0; i < id.at("W1").size(); ++i)
        EXPECT_NEAR(scaled.at("W1")[i], -0.3 * id.at("W1")[i], 1e-15 + 1e-12 * std::fabs(id.at("W1")[i]));
    const GradMap zero = grads(0.0);
    for (double v : zero.at("W1")) EXPECT_EQ(v, 0.0);
}

TEST(Backward, QuadraticGradient) {
    Tape tape;
    const Var w = tape.parameter("w", Tensor({2}, {1.0, 2.0}));
    const GradMap g = tape.backward(sum(mul(w, w)));
    EXPECT_EQ(g.at("w"), (std::vector<double>{2.0, 4.0}));
}

TEST(Backward, UnreachableParameterGetsZeros) {
    Tape tape;
    const Var w = tape.parameter("w", Tensor({2}, {1.0, 2.0}));
    tape.parameter("p", Tensor({3}, {5.0, 6.0, 7.0}));
    const GradMap g = tape.backward(sum(w));
    EXPECT_EQ(g.at("p"), (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(Backward, NonScalarLossIsContractError) {
    Tape tape;
    const Var w = tape.parameter("w", Tensor({2}, {1.0, 2.0}));
    EXPECT_THROW(tape.backward(w), ContractError);
}

TEST(Backward, ConsumesTheTape) {
    Tape tape;
    const Var w = tape.parameter("w", Tensor({1}, {1.0}));
    const Var l = sum(w);
    tape.backward(l);
    EXPECT_TRUE(tape.consumed());
    EXPECT_THROW(tape.backward(l), ContractError);
    EXPECT_THROW(relu(w), ContractError);
}

TEST(Backward, TwoLayerMlpMatchesFiniteDifferences) {
    Rng rng(11);
    std::map<std::string, Tensor> p{{"W1", test_support::random_tensor(rng, {3, 4})},
                                    {"b1", test_support::random_tensor(rng, {4})},
                                    {"W2", test_support::random_tensor(rng, {4, 2})},
                                    {"b2", test_support::random_tensor(rng, {2})}};
    const Tensor x = test_support::random_tensor(rng, {5, 3});
    auto build = [&](Tape& t, const std::map<std::string, Tensor>& v) {
        std::map<std::string, Var> q;
        for (const auto& [k, val] : v) q.emplace(k, t.parameter(k, val));
        const Var h = relu(bias_add(matmul(t.constant(x), q.at("W1")), q.at("b1")));
        const Var z = bias_add(matmul(h, q.at("W2")), q.at("b2"));
        return softmax_cross_entropy(z, t.constant(Tensor({5}, {0, 1, 1, 0, 1})));
    };
    Tape tape;
    const GradMap g = tape.backward(build(tape, p));
    for (const auto& [name, t] : p)
        for (std::size_t i = 0; i < t.size(); ++i) {
            auto plus = p, minus = p;
            plus[name][i] += 1e-5;
            minus[name][i] -= 1e-5;
            Tape a, b;
            const double fd = (build(a, plus).value()[0] - build(b, minus).value()[0]) / 2e-5;
            EXPECT_LE(std::fabs(fd - g.at(name)[i]), 1e-4 * std::max(std::fabs(fd), std::fabs(g.at(name)[i])) + 1e-6)
                << name << "[" << i << "]";
        }
}

TEST(Backward, RandomGraphsMatchFiniteDifferences) {
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
        const auto g = test_support::make_random_graph(seed);
        const auto rep = test_support::check_gradients(g);
        EXPECT_TRUE(rep.ok) << "seed " << seed << " worst excess " << rep.worst_excess;
    }
}

TEST(Backward, IsLinearInTheLoss) {
    const auto g1 = test_support::make_random_graph(7);
    Tape t1, t2, t3;
    const GradMap ga = t1.backward(g1.build(t1, g1.params));
    const Var l = g1.build(t2, g1.params);
    const GradMap gb = t2.backward(sum(mul(l, l)));
    const Var la = g1.build(t3, g1.params);
    const Var combined = add(scale(la, 2.5), scale(mul(la, la), -0.75));
    const GradMap gc = t3.backward(combined);
    for (const auto& [name, v] : gc)
        for (std::size_t i = 0; i < v.size(); ++i)
            EXPECT_NEAR(v[i], 2.5 * ga.at(name)[i] - 0.75 * gb.at(name)[i], 1e-10);
}

TEST(Tape, ReplayReproducesOutputsBitExactly) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto g = test_support::make_random_graph(seed);
        Tape tape;
        g.build(tape, g.params);
        EXPECT_TRUE(tape.replay_matches());
    }
}

TEST(Tape, NodesOnlyReferenceEarlierNodes) {
    const auto g = test_support::make_random_graph(5);
    Tape tape;
    g.build(tape, g.params);
    for (std::size_t i = 0; i < tape.size(); ++i)
        for (auto in : tape.node(i).inputs) EXPECT_LT(in, i);
}

TEST(Tape, DuplicateParameterNameIsRejected) {
    Tape tape;
    tape.parameter("w", Tensor({1}, {1.0}));
    EXPECT_THROW(tape.parameter("w", Tensor({1}, {1.0})), ContractError);
}

TEST(Tape, SameInputsGiveBitIdenticalGradients) {
    const auto g = test_support::make_random_graph(9);
    Tape a, b;
    EXPECT_EQ(a.backward(g.build(a, g.params)), b.backward(g.build(b, g.params)));
}

TEST(Primitives, SliceConcatRoundTrip) {
    Tape tape;
    const Var x = tape.parameter("x", Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    const Var parts[] = {slice(x, 0, 1), slice(x, 1, 3)};
    const Var y = concat(parts);
    EXPECT_TRUE(bit_equal(y.value(), x.value()));
    EXPECT_THROW(slice(x, 2, 4), DimensionError);
    const GradMap g = tape.backward(sum(y));
    EXPECT_EQ(g.at("x"), std::vector<double>(6, 1.0));
}

TEST(Primitives, ScaleRowsWeightsEachRow) {
    Tape tape;
    const Var x = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    const Var w = tape.constant(Tensor::matrix(2, 1, {10, -1}));
    EXPECT_EQ(scale_rows(x, w).value().data, (std::vector<double>{10, 20, -3, -4}));
}
