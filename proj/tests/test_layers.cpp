#include <gtest/gtest.h>

#include <cmath>

#include "dfq/errors.hpp"
#include "dfq/layers.hpp"
#include "gradcheck.hpp"

using namespace dfq;

class ConvGradient : public ::testing::TestWithParam<std::tuple<std::size_t, Padding>> {};

TEST_P(ConvGradient, MatchesCentralDifferences) {
    const auto [k, pad] = GetParam();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        EXPECT_LT(gradcheck::conv_case(100 + seed, k, pad), 1e-4) << "seed " << seed;
    }
}

INSTANTIATE_TEST_SUITE_P(KernelsAndPaddings, ConvGradient,
                         ::testing::Combine(::testing::Values(std::size_t{3}, std::size_t{5}),
                                            ::testing::Values(Padding::Same, Padding::Valid)));

TEST(DenseGradient, MatchesCentralDifferences) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) EXPECT_LT(gradcheck::dense_case(200 + seed), 1e-4);
}

TEST(MaxPoolGradient, MatchesCentralDifferences) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) EXPECT_LT(gradcheck::pool_case(300 + seed), 1e-4);
}

TEST(SoftmaxCrossEntropyGradient, MatchesCentralDifferences) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) EXPECT_LT(gradcheck::softmax_ce_case(400 + seed), 1e-4);
}

TEST(Conv, ForwardShapeAndErrors) {
    ConvParams p{Tensor(Shape{3, 3, 2, 4}), Tensor(Shape{4}), Padding::Valid, 1};
    EXPECT_EQ(conv2d_forward(Tensor(Shape{6, 5, 2}), p).shape(), (Shape{4, 3, 4}));
    EXPECT_THROW(conv2d_forward(Tensor(Shape{6, 5, 3}), p), ShapeError);
    EXPECT_THROW(conv2d_forward(Tensor(Shape{2, 2, 2}), p), ShapeError);
    p.stride = 2;
    EXPECT_THROW(conv2d_forward(Tensor(Shape{6, 5, 2}), p), ConfigError);
}

TEST(Conv, WorkedValidExample) {
    ConvParams p{Tensor(Shape{2, 2, 1, 1}, 1.0f), Tensor(Shape{1}), Padding::Valid, 1};
    const Tensor in(Shape{3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    EXPECT_EQ(conv2d_forward(in, p), (Tensor(Shape{2, 2, 1}, {12, 16, 24, 28})));
    const auto g = conv2d_gradients(Tensor(Shape{2, 2, 1}, 1.0f), in, p);
    EXPECT_EQ(g.bias, (Tensor(Shape{1}, {4})));
    EXPECT_EQ(g.weights, (Tensor(Shape{2, 2, 1, 1}, {12, 16, 24, 28})));
    const auto z = conv2d_gradients(Tensor(Shape{2, 2, 1}), in, p);
    for (float v : z.input.values()) EXPECT_EQ(v, 0.0f);
    for (float v : z.weights.values()) EXPECT_EQ(v, 0.0f);
    EXPECT_THROW(conv2d_gradients(Tensor(Shape{3, 3, 1}), in, p), ShapeError);
}

TEST(Conv, OneByOneSelectsChannel) {
    ConvParams p{Tensor(Shape{1, 1, 3, 1}, {0, 1, 0}), Tensor(Shape{1}), Padding::Same, 1};
    Tensor in(Shape{2, 2, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
    EXPECT_EQ(conv2d_forward(in, p), (Tensor(Shape{2, 2, 1}, {2, 5, 8, 11})));
}

TEST(MaxPool, WorkedExampleAndRouting) {
    Tensor in(Shape{4, 4, 1});
    for (std::size_t i = 0; i < 16; ++i) in[i] = static_cast<float>(i + 1);
    const auto r = maxpool_forward(in);
    EXPECT_EQ(r.output, (Tensor(Shape{2, 2, 1}, {6, 8, 14, 16})));
    const auto g = maxpool_backward(Tensor(Shape{2, 2, 1}, 1.0f), r.indices);
    for (std::size_t i = 0; i < 16; ++i) {
        const bool winner = i + 1 == 6 || i + 1 == 8 || i + 1 == 14 || i + 1 == 16;
        EXPECT_EQ(g[i], winner ? 1.0f : 0.0f) << i;
    }
    EXPECT_EQ(maxpool_forward(Tensor(Shape{5, 7, 2}, 3.0f)).output, Tensor(Shape{2, 3, 2}, 3.0f));
    EXPECT_EQ(maxpool_forward(Tensor(Shape{254, 254, 1})).output.shape(), (Shape{127, 127, 1}));
}

TEST(MaxPool, StaleIndicesRejected) {
    const auto r = maxpool_forward(Tensor(Shape{4, 4, 1}, 1.0f));
    EXPECT_THROW(maxpool_backward(Tensor(Shape{3, 2, 1}), r.indices), ShapeError);
}

TEST(Relu, NegativeZeroedPositivePassed) {
    EXPECT_EQ(relu(Tensor(Shape{3}, {-1, -2, -3})), Tensor(Shape{3}));
    EXPECT_EQ(relu(Tensor(Shape{3}, {0, 2, 3})), (Tensor(Shape{3}, {0, 2, 3})));
}

TEST(Relu, ForwardAndBackward) {
    const Tensor x(Shape{4}, {-1.0f, 0.0f, 2.0f, -0.5f});
    EXPECT_EQ(relu(x), (Tensor(Shape{4}, {0, 0, 2, 0})));
    EXPECT_EQ(relu_backward(Tensor(Shape{4}, {1, 1, 1, 1}), x), (Tensor(Shape{4}, {0, 0, 1, 0})));
}

TEST(Dense, IdentityAndTableCount) {
    DenseParams p{Tensor(Shape{3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), Tensor(Shape{3})};
    EXPECT_EQ(dense_forward(Tensor(Shape{3}, {1, 2, 3}), p), (Tensor(Shape{3}, {1, 2, 3})));
    const DenseParams big{Tensor(Shape{12800, 1536}), Tensor(Shape{1536})};
    EXPECT_EQ(big.parameter_count(), 19662336u);
}

TEST(Dense, VectorAndBatchAgree) {
    Rng rng(1);
    DenseParams p{Tensor(Shape{5, 3}), Tensor(Shape{3})};
    for (float& v : p.weights.values()) v = static_cast<float>(rng.uniform(-1, 1));
    for (float& v : p.bias.values()) v = static_cast<float>(rng.uniform(-1, 1));
    Tensor batch(Shape{2, 5});
    for (float& v : batch.values()) v = static_cast<float>(rng.uniform(-1, 1));
    const auto yb = dense_forward(batch, p);
    for (std::size_t r = 0; r < 2; ++r) {
        Tensor row(Shape{5}, std::vector<float>(batch.slice(r).begin(), batch.slice(r).end()));
        const auto y = dense_forward(row, p);
        for (std::size_t j = 0; j < 3; ++j) EXPECT_FLOAT_EQ(y[j], yb[r * 3 + j]);
    }
    EXPECT_THROW(dense_forward(Tensor(Shape{4}), p), ShapeError);
}

TEST(Dropout, InferIsIdentityTrainIsInverted) {
    Tensor x(Shape{1000}, 1.0f);
    Rng rng(9);
    const auto infer = dropout(x, DropoutConfig{0.5, Mode::Infer}, rng);
    EXPECT_EQ(infer.output, x);
    const auto train = dropout(x, DropoutConfig{0.5, Mode::Train}, rng);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (train.mask[i]) {
            ++kept;
            EXPECT_EQ(train.output[i], 2.0f);
        } else {
            EXPECT_EQ(train.output[i], 0.0f);
        }
    }
    EXPECT_GT(kept, 400u);
    EXPECT_LT(kept, 600u);
    const auto g = dropout_backward(Tensor(Shape{1000}, 1.0f), train.mask, 0.5);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(g[i], train.mask[i] ? 2.0f : 0.0f);
    EXPECT_THROW(dropout(x, DropoutConfig{1.0, Mode::Train}, rng), ConfigError);
    Rng big_rng(17);
    const auto big = dropout(Tensor(Shape{100000}, 1.0f), DropoutConfig{0.5, Mode::Train}, big_rng);
    double mean = 0;
    for (float v : big.output.values()) mean += v;
    mean /= 100000.0;
    EXPECT_GE(mean, 0.98);
    EXPECT_LE(mean, 1.02);
    EXPECT_EQ(dropout(x, DropoutConfig{0.0, Mode::Train}, rng).output, x);
}

TEST(Softmax, RowsSumToOneAndAreStable) {
    const Tensor z(Shape{2, 3}, {1000.0f, 1001.0f, 1002.0f, -5.0f, 0.0f, 5.0f});
    const auto p = softmax(z);
    for (std::size_t r = 0; r < 2; ++r) {
        float s = 0;
        for (std::size_t j = 0; j < 3; ++j) {
            EXPECT_TRUE(std::isfinite(p[r * 3 + j]));
            s += p[r * 3 + j];
        }
        EXPECT_NEAR(s, 1.0f, 1e-6f);
    }
    const auto u = softmax(Tensor(Shape{4}, {0, 0, 0, 0}));
    const auto c = softmax(Tensor(Shape{4}, {7.5f, 7.5f, 7.5f, 7.5f}));
    for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_FLOAT_EQ(u[j], 0.25f);
        EXPECT_FLOAT_EQ(c[j], 0.25f);
    }
    const auto two = softmax(Tensor64(Shape{2}, {std::log(2.0), 0.0}));
    EXPECT_NEAR(two[0], 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(two[1], 1.0 / 3.0, 1e-12);
    const auto shifted = softmax(Tensor(Shape{3}, {-995.0f, -994.0f, -993.0f}));
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(shifted[j], p[j], 1e-6f);
}

TEST(CrossEntropy, ValuesAndOneHotValidation) {
    const Tensor p(Shape{4}, {0.25f, 0.25f, 0.25f, 0.25f});
    EXPECT_NEAR(cross_entropy(p, Tensor(Shape{4}, {0, 1, 0, 0})), std::log(4.0), 1e-5);
    EXPECT_NEAR(cross_entropy(Tensor64(Shape{4}, {0, 0, 1, 0}), Tensor64(Shape{4}, {0, 0, 1, 0})), 0.0, 1e-6);
    EXPECT_THROW(cross_entropy(p, Tensor(Shape{4}, {0, 0.5f, 0.5f, 0})), ConfigError);
    EXPECT_THROW(cross_entropy(p, Tensor(Shape{4}, {1, 1, 0, 0})), ConfigError);
    // the log epsilon keeps a zero probability finite
    EXPECT_TRUE(std::isfinite(cross_entropy(Tensor(Shape{2}, {1.0f, 0.0f}), Tensor(Shape{2}, {0, 1}))));
}
