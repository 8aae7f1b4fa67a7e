#include <gtest/gtest.h>

#include <cmath>

#include "dfq/errors.hpp"
#include "dfq/network.hpp"
#include "oracles.hpp"

using namespace dfq;

namespace {

struct Row {
    const char* name;
    Shape shape;
    std::size_t params;
};

const std::vector<Row>& table() {
    static const std::vector<Row> rows = {
        {"conv2d", {256, 256, 32}, 896},          {"conv2d_1", {254, 254, 32}, 9248},
        {"max_pooling2d", {127, 127, 32}, 0},     {"conv2d_2", {127, 127, 64}, 18496},
        {"conv2d_3", {125, 125, 64}, 36928},      {"max_pooling2d_1", {62, 62, 64}, 0},
        {"conv2d_4", {62, 62, 128}, 73856},       {"conv2d_5", {60, 60, 128}, 147584},
        {"max_pooling2d_2", {30, 30, 128}, 0},    {"conv2d_6", {30, 30, 256}, 295168},
        {"conv2d_7", {28, 28, 256}, 590080},      {"max_pooling2d_3", {14, 14, 256}, 0},
        {"conv2d_8", {14, 14, 512}, 3277312},     {"conv2d_9", {10, 10, 512}, 6554112},
        {"max_pooling2d_4", {5, 5, 512}, 0},      {"dropout", {5, 5, 512}, 0},
        {"flatten", {12800}, 0},                  {"dense", {1536}, 19662336},
        {"dropout_1", {1536}, 0},                 {"dense_1", {4}, 6148},
    };
    return rows;
}

Tensor random_batch(std::size_t b, std::size_t size, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(Shape{b, size, size, 3});
    for (float& v : t.values()) v = static_cast<float>(rng.uniform());
    return t;
}

Tensor64 one_hot_rows(const std::vector<std::size_t>& labels) {
    Tensor64 t(Shape{labels.size(), kNumClasses});
    for (std::size_t i = 0; i < labels.size(); ++i) t[i * kNumClasses + labels[i]] = 1.0;
    return t;
}

// The same network with every dropout rate forced to zero.
template <typename T>
BasicNetwork<T> without_dropout(const BasicNetwork<T>& net) {
    auto layers = net.layers();
    for (auto& l : layers)
        if (l.kind == LayerKind::Dropout) l.rate = 0.0;
    return BasicNetwork<T>(layers, net.parameters(), net.width(), net.input_shape());
}

}  // namespace

TEST(Architecture, ShapeTraceAndParameterCounts) {
    const auto net = build_network(1.0, 1);
    const auto trace = net.shape_trace(Shape{256, 256, 3});
    ASSERT_EQ(trace.size(), table().size());
    std::size_t total = 0;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        EXPECT_EQ(net.layers()[i].name, table()[i].name);
        EXPECT_EQ(trace[i], table()[i].shape) << table()[i].name;
        EXPECT_EQ(net.layers()[i].parameter_count(), table()[i].params) << table()[i].name;
        total += net.layers()[i].parameter_count();
    }
    EXPECT_EQ(total, 30672164u);
    EXPECT_EQ(net.parameter_count(), 30672164u);
}

TEST(Architecture, KernelSizesAndPaddings) {
    const auto layers = canonical_layers(1.0);
    std::size_t conv = 0;
    for (const auto& l : layers) {
        if (l.kind != LayerKind::Conv) continue;
        EXPECT_EQ(l.kernel, conv >= 8 ? 5u : 3u);
        EXPECT_EQ(l.padding, conv % 2 == 0 ? Padding::Same : Padding::Valid);
        EXPECT_EQ(l.activation, Activation::Relu);
        ++conv;
    }
    EXPECT_EQ(conv, 10u);
    EXPECT_EQ(layers.back().activation, Activation::Softmax);
    EXPECT_EQ(layers[17].activation, Activation::Relu);
}

TEST(Width, ScalesChannelsUpward) {
    EXPECT_EQ(scaled_units(32, 0.5), 16u);
    EXPECT_EQ(scaled_units(32, 0.125), 4u);
    EXPECT_EQ(scaled_units(1536, 0.0625), 96u);
    EXPECT_EQ(scaled_units(32, 0.1), 4u);
    EXPECT_EQ(canonical_layers(0.5)[0].out_channels, 16u);
    EXPECT_EQ(canonical_layers(0.5).back().out_channels, 4u);  // classes never scale
    EXPECT_THROW(canonical_layers(0.0), ConfigError);
    EXPECT_THROW(canonical_layers(1.5), ConfigError);
}

TEST(Init, GlorotBoundsZeroBiasAndSeedDeterminism) {
    const auto a = build_network(0.125, 3, 128);
    const auto b = build_network(0.125, 3, 128);
    const auto c = build_network(0.125, 4, 128);
    EXPECT_EQ(a, b);
    EXPECT_NE(a.parameters()[0], c.parameters()[0]);
    for (std::size_t i = 0; i < a.layers().size(); ++i) {
        const auto& l = a.layers()[i];
        if (!l.has_parameters()) continue;
        const auto ws = l.weight_shape();
        const double fan_in = static_cast<double>(ws.element_count() / ws[ws.rank() - 1]);
        const double fan_out = l.kind == LayerKind::Conv ? static_cast<double>(l.kernel * l.kernel * l.out_channels)
                                                         : static_cast<double>(l.out_channels);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        const auto idx = static_cast<std::size_t>(a.parameter_index(i));
        for (float v : a.parameters()[idx].values()) EXPECT_LE(std::abs(v), bound);
        for (float v : a.parameters()[idx + 1].values()) EXPECT_EQ(v, 0.0f);
    }
}

TEST(Forward, ProbabilitiesAndDeterminism) {
    const auto net = build_network(0.0625, 5, 128);
    Tensor batch(Shape{3, 128, 128, 3});
    const auto noise = random_batch(1, 128, 9);
    std::copy(noise.values().begin(), noise.values().end(), batch.values().begin() + 128 * 128 * 3);
    std::copy(noise.values().begin(), noise.values().end(), batch.values().begin() + 2 * 128 * 128 * 3);
    const auto p = net.predict(batch);
    ASSERT_EQ(p.shape(), (Shape{3, 4}));
    for (std::size_t r = 0; r < 3; ++r) {
        double s = 0;
        for (std::size_t j = 0; j < 4; ++j) {
            EXPECT_GT(p[r * 4 + j], 0.0f);
            s += p[r * 4 + j];
        }
        EXPECT_NEAR(s, 1.0, 1e-5);
    }
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(p[4 + j], p[8 + j]);
    EXPECT_EQ(net.predict(batch), p);
    for (auto k : argmax_rows(p)) EXPECT_LT(k, 4u);
    EXPECT_THROW(net.predict(Tensor(Shape{1, 64, 64, 3})), ShapeError);
}

TEST(Forward, BatchRowsMatchSingleSamples) {
    const auto net = build_network(0.0625, 6, 128);
    const auto batch = random_batch(3, 128, 10);
    const auto p = net.predict(batch);
    for (std::size_t r = 0; r < 3; ++r) {
        Tensor one(Shape{1, 128, 128, 3}, std::vector<float>(batch.slice(r).begin(), batch.slice(r).end()));
        const auto q = net.predict(one);
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(q[j], p[r * 4 + j]);
    }
}

TEST(Backward, EndToEndFiniteDifferences) {
    // Zero biases leave dead regions with pre-activations of exactly 0, which
    // sit on the ReLU kink; random biases move the check to a generic point.
    auto net = build_network(0.0625, 7, 128).cast<double>();
    Rng bias_rng(70);
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        if (!net.layers()[i].has_parameters()) continue;
        for (double& b : net.parameters()[static_cast<std::size_t>(net.parameter_index(i)) + 1].values())
            b = bias_rng.uniform(-0.1, 0.1);
    }
    const auto input = random_batch(2, 128, 11).cast<double>();
    const auto targets = one_hot_rows({1, 3});
    const std::uint64_t drop_seed = 42;

    Rng r0(drop_seed);
    ForwardCache<double> cache;
    net.forward(input, Mode::Train, r0, &cache);
    const auto grads = net.backward(cache, targets);
    ASSERT_EQ(grads.size(), net.parameters().size());

    auto work = net;
    auto loss = [&] {
        Rng r(drop_seed);
        return batch_cross_entropy(work.forward(input, Mode::Train, r), targets);
    };
    Rng pick(99);
    double worst = 0;
    for (int n = 0; n < 20; ++n) {
        const std::size_t t = pick.below(work.parameters().size());
        auto& tensor = work.parameters()[t];
        const std::size_t i = pick.below(tensor.size());
        const double keep = tensor[i];
        tensor[i] = keep + 1e-5;
        const double up = loss();
        tensor[i] = keep - 1e-5;
        const double down = loss();
        tensor[i] = keep;
        const double numeric = (up - down) / 2e-5;
        const double e = oracle::rel_error(grads[t][i], numeric, 1e-7);
        worst = std::max(worst, e);
        EXPECT_LT(e, 1e-3) << "tensor " << t << " index " << i << " analytic " << grads[t][i] << " numeric "
                           << numeric;
    }
    RecordProperty("worst_rel_error", std::to_string(worst));
}

TEST(Backward, IdenticalSamplesGiveSingleSampleGradient) {
    const auto net = without_dropout(build_network(0.0625, 8, 128).cast<double>());
    const auto one = random_batch(1, 128, 12).cast<double>();
    Tensor64 three(Shape{3, 128, 128, 3});
    for (std::size_t r = 0; r < 3; ++r)
        std::copy(one.values().begin(), one.values().end(), three.values().begin() + r * one.size());
    Rng rng(1);
    ForwardCache<double> c1, c3;
    net.forward(one, Mode::Train, rng, &c1);
    net.forward(three, Mode::Train, rng, &c3);
    const auto g1 = net.backward(c1, one_hot_rows({2}));
    const auto g3 = net.backward(c3, one_hot_rows({2, 2, 2}));
    for (std::size_t t = 0; t < g1.size(); ++t)
        for (std::size_t i = 0; i < g1[t].size(); ++i) EXPECT_NEAR(g3[t][i], g1[t][i], 1e-12 + 1e-9 * std::abs(g1[t][i]));
}

TEST(Backward, MissingCacheIsStateError) {
    const auto net = build_network(0.0625, 8, 128);
    EXPECT_THROW(net.backward(ForwardCache<float>{}, Tensor(Shape{1, 4})), StateError);
}

TEST(Backward, TrainDropoutNeedsRandomMasks) {
    const auto net = build_network(0.0625, 8, 128);
    const auto x = random_batch(1, 128, 13);
    Rng a(5), b(5), c(6);
    EXPECT_EQ(net.forward(x, Mode::Train, a), net.forward(x, Mode::Train, b));
    EXPECT_NE(net.forward(x, Mode::Train, a), net.forward(x, Mode::Train, c));
}

TEST(Classes, NamesAndParsing) {
    EXPECT_EQ(class_name(ClassLabel::Defect), "defect");
    EXPECT_EQ(class_name(ClassLabel::Mature), "mature");
    EXPECT_EQ(parse_class("Immature"), ClassLabel::Immature);
    EXPECT_EQ(parse_class("FRESH"), ClassLabel::Fresh);
    EXPECT_FALSE(parse_class("rotten").has_value());
    EXPECT_THROW(label_from_index(4), ConfigError);
}
