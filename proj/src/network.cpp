#include "dfq/network.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace dfq {

std::string_view class_name(ClassLabel label) { return kClassNames.at(static_cast<std::size_t>(label)); }

std::optional<ClassLabel> parse_class(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        if (lower == kClassNames[i]) return static_cast<ClassLabel>(i);
    }
    return std::nullopt;
}

ClassLabel label_from_index(std::size_t index) {
    if (index >= kNumClasses) throw ConfigError("class index out of range: " + std::to_string(index));
    return static_cast<ClassLabel>(index);
}

Shape LayerSpec::weight_shape() const {
    if (kind == LayerKind::Conv) return Shape{kernel, kernel, in_channels, out_channels};
    if (kind == LayerKind::Dense) return Shape{in_channels, out_channels};
    throw StateError("layer " + name + " has no weights");
}

Shape LayerSpec::bias_shape() const {
    if (!has_parameters()) throw StateError("layer " + name + " has no bias");
    return Shape{out_channels};
}

std::size_t LayerSpec::parameter_count() const {
    if (!has_parameters()) return 0;
    return weight_shape().element_count() + out_channels;
}

std::size_t scaled_units(std::size_t units, double width) {
    // the epsilon keeps e.g. 10 * 0.3 = 3.0000000000000004 from rounding up
    const double scaled = std::ceil(static_cast<double>(units) * width - 1e-9);
    return std::max<std::size_t>(1, static_cast<std::size_t>(scaled));
}

std::vector<LayerSpec> canonical_layers(double width) {
    if (!(width > 0.0 && width <= 1.0)) {
        throw ConfigError("width multiplier must lie in (0, 1], got " + std::to_string(width));
    }
    std::vector<LayerSpec> layers;
    std::size_t conv_id = 0, pool_id = 0;
    std::size_t channels = kInputChannels;
    auto suffix = [](std::size_t id) { return id == 0 ? std::string() : "_" + std::to_string(id); };

    const std::size_t filters[5] = {32, 64, 128, 256, 512};
    const std::size_t kernels[5] = {3, 3, 3, 3, 5};
    for (std::size_t block = 0; block < 5; ++block) {
        const std::size_t out = scaled_units(filters[block], width);
        for (Padding pad : {Padding::Same, Padding::Valid}) {
            LayerSpec conv;
            conv.kind = LayerKind::Conv;
            conv.name = "conv2d" + suffix(conv_id++);
            conv.kernel = kernels[block];
            conv.padding = pad;
            conv.in_channels = channels;
            conv.out_channels = out;
            conv.activation = Activation::Relu;
            layers.push_back(conv);
            channels = out;
        }
        LayerSpec pool;
        pool.kind = LayerKind::MaxPool;
        pool.name = "max_pooling2d" + suffix(pool_id++);
        layers.push_back(pool);
    }

    LayerSpec drop;
    drop.kind = LayerKind::Dropout;
    drop.name = "dropout";
    drop.rate = 0.5;
    layers.push_back(drop);

    LayerSpec flat;
    flat.kind = LayerKind::Flatten;
    flat.name = "flatten";
    layers.push_back(flat);

    LayerSpec dense;
    dense.kind = LayerKind::Dense;
    dense.name = "dense";
    dense.in_channels = 0;  // resolved from the flatten size below
    dense.out_channels = scaled_units(1536, width);
    dense.activation = Activation::Relu;
    layers.push_back(dense);

    drop.name = "dropout_1";
    layers.push_back(drop);

    LayerSpec out;
    out.kind = LayerKind::Dense;
    out.name = "dense_1";
    out.in_channels = dense.out_channels;
    out.out_channels = kNumClasses;
    out.activation = Activation::Softmax;
    layers.push_back(out);
    return layers;
}

namespace {

// Output shape of one layer; throws ShapeError on an incompatible input.
Shape layer_output_shape(const LayerSpec& l, const Shape& in) {
    switch (l.kind) {
        case LayerKind::Conv: {
            if (in.rank() != 3) throw ShapeError(l.name + " expects an H x W x C input");
            if (in[2] != l.in_channels) {
                throw ShapeError(l.name + " expects " + std::to_string(l.in_channels) +
                                 " channels, got " + in.to_string());
            }
            const auto g = kernels::ConvGeometry::make(in[0], in[1], in[2], l.kernel, l.out_channels,
                                                       l.padding);
            return Shape{g.out_h, g.out_w, g.out_c};
        }
        case LayerKind::MaxPool: {
            if (in.rank() != 3) throw ShapeError(l.name + " expects an H x W x C input");
            const auto g = kernels::PoolGeometry::make(in[0], in[1], in[2]);
            return Shape{g.out_h, g.out_w, g.channels};
        }
        case LayerKind::Dropout:
            return in;
        case LayerKind::Flatten:
            return Shape{in.element_count()};
        case LayerKind::Dense:
            if (in.rank() != 1 || in[0] != l.in_channels) {
                throw ShapeError(l.name + " expects a vector of " + std::to_string(l.in_channels) +
                                 ", got " + in.to_string());
            }
            return Shape{l.out_channels};
    }
    throw ShapeError("unknown layer kind");
}

template <typename T>
void apply_relu(T* v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) v[i] = v[i] > T{0} ? v[i] : T{0};
}

template <typename T>
void softmax_inplace(T* z, std::size_t n) {
    const T zmax = *std::max_element(z, z + n);
    T sum = T{0};
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = std::exp(z[i] - zmax);
        sum += z[i];
    }
    for (std::size_t i = 0; i < n; ++i) z[i] /= sum;
}

}  // namespace

Network build_network(double width, std::uint64_t seed, std::size_t input_size) {
    auto layers = canonical_layers(width);
    // resolve the dense input from the flattened feature map
    Shape s{input_size, input_size, kInputChannels};
    for (auto& l : layers) {
        if (l.kind == LayerKind::Dense && l.in_channels == 0) l.in_channels = s.element_count();
        s = layer_output_shape(l, s);
    }

    Rng rng(seed);
    ParameterSet<float> params;
    for (const auto& l : layers) {
        if (!l.has_parameters()) continue;
        std::size_t fan_in = l.in_channels, fan_out = l.out_channels;
        if (l.kind == LayerKind::Conv) {
            fan_in *= l.kernel * l.kernel;
            fan_out *= l.kernel * l.kernel;
        }
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Tensor w(l.weight_shape());
        for (float& v : w.values()) v = static_cast<float>(rng.uniform(-limit, limit));
        params.push_back(std::move(w));
        params.emplace_back(l.bias_shape(), 0.0f);
    }
    return Network(std::move(layers), std::move(params), width,
                   Shape{input_size, input_size, kInputChannels});
}

template <typename T>
BasicNetwork<T>::BasicNetwork(std::vector<LayerSpec> layers, ParameterSet<T> parameters, double width,
                              Shape input_shape)
    : layers_(std::move(layers)), params_(std::move(parameters)), width_(width),
      input_shape_(std::move(input_shape)) {
    if (layers_.empty()) throw ConfigError("network has no layers");
    std::size_t next = 0;
    param_index_.assign(layers_.size(), -1);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (l.kind == LayerKind::Dropout && !(l.rate >= 0.0 && l.rate < 1.0)) {
            throw ConfigError(l.name + ": dropout rate must lie in [0, 1)");
        }
        if (l.activation == Activation::Softmax && i + 1 != layers_.size()) {
            throw ConfigError(l.name + ": softmax is only supported on the output layer");
        }
        if (!l.has_parameters()) continue;
        if (next + 2 > params_.size() || params_[next].shape() != l.weight_shape() ||
            params_[next + 1].shape() != l.bias_shape()) {
            throw ShapeError(l.name + ": parameter tensors do not match the layer configuration");
        }
        param_index_[i] = static_cast<std::ptrdiff_t>(next);
        next += 2;
    }
    if (next != params_.size()) throw ShapeError("network has surplus parameter tensors");
    if (layers_.back().kind != LayerKind::Dense || layers_.back().activation != Activation::Softmax) {
        throw ConfigError("network must end in a softmax dense layer");
    }
    shape_trace(input_shape_);
}

template <typename T>
std::size_t BasicNetwork<T>::num_classes() const {
    return layers_.back().out_channels;
}

template <typename T>
std::size_t BasicNetwork<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

template <typename T>
std::vector<Shape> BasicNetwork<T>::shape_trace(const Shape& input) const {
    std::vector<Shape> shapes;
    shapes.reserve(layers_.size());
    Shape s = input;
    for (const auto& l : layers_) {
        s = layer_output_shape(l, s);
        shapes.push_back(s);
    }
    return shapes;
}

template <typename T>
BasicTensor<T> BasicNetwork<T>::run_sample(std::span<const T> input, Mode mode, Rng* rng,
                                           SampleCache<T>* cache, bool logits) const {
    BasicTensor<T> x(input_shape_, std::vector<T>(input.begin(), input.end()));
    if (cache != nullptr) {
        cache->activations.clear();
        cache->activations.reserve(layers_.size() + 1);
        cache->pools.assign(layers_.size(), PoolIndices{});
        cache->masks.assign(layers_.size(), {});
        cache->activations.push_back(x);
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        const Shape& s = x.shape();
        switch (l.kind) {
            case LayerKind::Conv: {
                const auto g = kernels::ConvGeometry::make(s[0], s[1], s[2], l.kernel,
                                                           l.out_channels, l.padding);
                const auto pi = static_cast<std::size_t>(param_index_[i]);
                BasicTensor<T> y(Shape{g.out_h, g.out_w, g.out_c});
                kernels::conv2d_forward(g, x.data(), params_[pi].data(), params_[pi + 1].data(),
                                        y.data());
                if (l.activation == Activation::Relu) apply_relu(y.data(), y.size());
                x = std::move(y);
                break;
            }
            case LayerKind::MaxPool: {
                const auto g = kernels::PoolGeometry::make(s[0], s[1], s[2]);
                BasicTensor<T> y(Shape{g.out_h, g.out_w, g.channels});
                std::vector<std::uint32_t> idx(g.out_size());
                kernels::maxpool_forward(g, x.data(), y.data(), idx.data());
                if (cache != nullptr) cache->pools[i] = PoolIndices{s, y.shape(), std::move(idx)};
                x = std::move(y);
                break;
            }
            case LayerKind::Dropout: {
                if (mode == Mode::Train && l.rate > 0.0) {
                    if (rng == nullptr) throw StateError("train-mode dropout needs a random source");
                    auto r = dropout(x, DropoutConfig{l.rate, Mode::Train}, *rng);
                    if (cache != nullptr) cache->masks[i] = std::move(r.mask);
                    x = std::move(r.output);
                }
                break;
            }
            case LayerKind::Flatten:
                x = reshape(x, Shape{x.size()});
                break;
            case LayerKind::Dense: {
                const auto pi = static_cast<std::size_t>(param_index_[i]);
                BasicTensor<T> y(Shape{l.out_channels});
                kernels::gemm_nn(std::size_t{1}, l.out_channels, l.in_channels, x.data(),
                                 params_[pi].data(), y.data(), false);
                const T* b = params_[pi + 1].data();
                for (std::size_t j = 0; j < l.out_channels; ++j) y[j] += b[j];
                if (l.activation == Activation::Relu) apply_relu(y.data(), y.size());
                if (l.activation == Activation::Softmax && !logits) softmax_inplace(y.data(), y.size());
                x = std::move(y);
                break;
            }
        }
        if (cache != nullptr) cache->activations.push_back(x);
    }
    return x;
}

template <typename T>
BasicTensor<T> BasicNetwork<T>::forward(const BasicTensor<T>& batch, Mode mode, Rng& rng,
                                        ForwardCache<T>* cache) const {
    if (batch.shape().rank() != 4 || batch.shape().tail() != input_shape_) {
        throw ShapeError("forward expects a batch of " + input_shape_.to_string() + ", got " +
                         batch.shape().to_string());
    }
    const std::size_t n = batch.shape()[0];
    const std::size_t classes = num_classes();
    BasicTensor<T> probs(Shape{n, classes});
    if (cache != nullptr) cache->samples.assign(n, SampleCache<T>{});
    if (mode == Mode::Infer && cache == nullptr) {
        // samples are independent and the network is read-only here
#pragma omp parallel for schedule(dynamic) if (n > 1)
        for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(n); ++b) {
            const auto out = run_sample(batch.slice(static_cast<std::size_t>(b)), mode, nullptr, nullptr,
                                        false);
            std::copy(out.values().begin(), out.values().end(),
                      probs.data() + static_cast<std::size_t>(b) * classes);
        }
        return probs;
    }
    for (std::size_t b = 0; b < n; ++b) {
        const auto out = run_sample(batch.slice(b), mode, &rng,
                                    cache != nullptr ? &cache->samples[b] : nullptr, false);
        std::copy(out.values().begin(), out.values().end(), probs.data() + b * classes);
    }
    return probs;
}

template <typename T>
BasicTensor<T> BasicNetwork<T>::forward_logits(const BasicTensor<T>& batch, Mode mode, Rng& rng) const {
    if (batch.shape().rank() != 4 || batch.shape().tail() != input_shape_) {
        throw ShapeError("forward expects a batch of " + input_shape_.to_string());
    }
    const std::size_t n = batch.shape()[0];
    const std::size_t classes = num_classes();
    BasicTensor<T> logits(Shape{n, classes});
    for (std::size_t b = 0; b < n; ++b) {
        const auto out = run_sample(batch.slice(b), mode, &rng, nullptr, true);
        std::copy(out.values().begin(), out.values().end(), logits.data() + b * classes);
    }
    return logits;
}

template <typename T>
BasicTensor<T> BasicNetwork<T>::predict(const BasicTensor<T>& batch) const {
    Rng unused(0);
    return forward(batch, Mode::Infer, unused);
}

template <typename T>
ParameterSet<T> BasicNetwork<T>::zero_gradients() const {
    ParameterSet<T> g;
    g.reserve(params_.size());
    for (const auto& p : params_) g.emplace_back(p.shape(), T{0});
    return g;
}

template <typename T>
void BasicNetwork<T>::sample_gradients(const SampleCache<T>& cache, std::span<const T> target, T scale,
                                       ParameterSet<T>& sums) const {
    const auto& acts = cache.activations;
    if (acts.size() != layers_.size() + 1) throw StateError("forward cache is incomplete");
    const auto& probs = acts.back();
    if (target.size() != probs.size()) throw ShapeError("target length does not match class count");
    check_one_hot(target);

    // gradient with respect to the output-layer logits
    BasicTensor<T> g(probs.shape());
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = (probs[j] - target[j]) * scale;

    for (std::size_t i = layers_.size(); i-- > 0;) {
        const auto& l = layers_[i];
        const auto& in = acts[i];
        const auto& out = acts[i + 1];
        const bool need_input_grad = i > 0;
        switch (l.kind) {
            case LayerKind::Dense: {
                if (l.activation == Activation::Relu) {
                    for (std::size_t j = 0; j < g.size(); ++j)
                        if (!(out[j] > T{0})) g[j] = T{0};
                }
                const auto pi = static_cast<std::size_t>(param_index_[i]);
                kernels::gemm_tn_acc(l.in_channels, l.out_channels, std::size_t{1}, in.data(), g.data(),
                                     sums[pi].data());
                T* gb = sums[pi + 1].data();
                for (std::size_t j = 0; j < l.out_channels; ++j) gb[j] += g[j];
                if (need_input_grad) {
                    BasicTensor<T> gin(in.shape());
                    kernels::gemm_nt(std::size_t{1}, l.in_channels, l.out_channels, g.data(),
                                     params_[pi].data(), gin.data(), false);
                    g = std::move(gin);
                }
                break;
            }
            case LayerKind::Conv: {
                if (l.activation == Activation::Relu) {
                    for (std::size_t j = 0; j < g.size(); ++j)
                        if (!(out[j] > T{0})) g[j] = T{0};
                }
                const Shape& s = in.shape();
                const auto geom = kernels::ConvGeometry::make(s[0], s[1], s[2], l.kernel,
                                                              l.out_channels, l.padding);
                const auto pi = static_cast<std::size_t>(param_index_[i]);
                BasicTensor<T> gin;
                if (need_input_grad) gin = BasicTensor<T>(s);
                kernels::conv2d_backward(geom, g.data(), in.data(), params_[pi].data(),
                                         need_input_grad ? gin.data() : nullptr, sums[pi].data(),
                                         sums[pi + 1].data());
                g = std::move(gin);
                break;
            }
            case LayerKind::MaxPool: {
                const auto& idx = cache.pools[i];
                if (idx.index.size() != g.size()) throw StateError("pool indices missing from cache");
                const Shape& s = in.shape();
                const auto geom = kernels::PoolGeometry::make(s[0], s[1], s[2]);
                BasicTensor<T> gin(s);
                kernels::maxpool_backward(geom, g.data(), idx.index.data(), gin.data());
                g = std::move(gin);
                break;
            }
            case LayerKind::Dropout: {
                const auto& mask = cache.masks[i];
                if (!mask.empty()) g = dropout_backward(g, mask, l.rate);
                break;
            }
            case LayerKind::Flatten:
                g = reshape(g, in.shape());
                break;
        }
    }
}

template <typename T>
void BasicNetwork<T>::accumulate_gradients(const ForwardCache<T>& cache, const BasicTensor<T>& targets,
                                           T scale, ParameterSet<T>& sums) const {
    if (cache.samples.empty()) throw StateError("backward called without a training forward cache");
    if (targets.shape() != Shape{cache.samples.size(), num_classes()}) {
        throw ShapeError("targets shape " + targets.shape().to_string() + " does not match the batch");
    }
    if (sums.size() != params_.size()) throw ShapeError("gradient set is not congruent to parameters");
    for (std::size_t b = 0; b < cache.samples.size(); ++b) {
        sample_gradients(cache.samples[b], targets.slice(b), scale, sums);
    }
}

template <typename T>
ParameterSet<T> BasicNetwork<T>::backward(const ForwardCache<T>& cache, const BasicTensor<T>& targets) const {
    if (cache.samples.empty()) throw StateError("backward called without a training forward cache");
    auto sums = zero_gradients();
    accumulate_gradients(cache, targets, T{1} / static_cast<T>(cache.samples.size()), sums);
    return sums;
}

template <typename T>
T batch_cross_entropy(const BasicTensor<T>& probs, const BasicTensor<T>& targets) {
    if (probs.shape() != targets.shape() || probs.shape().rank() != 2) {
        throw ShapeError("batch_cross_entropy shape mismatch");
    }
    const std::size_t n = probs.shape()[0], c = probs.shape()[1];
    T total = T{0};
    for (std::size_t b = 0; b < n; ++b) {
        BasicTensor<T> p(Shape{c}, std::vector<T>(probs.slice(b).begin(), probs.slice(b).end()));
        BasicTensor<T> t(Shape{c}, std::vector<T>(targets.slice(b).begin(), targets.slice(b).end()));
        total += cross_entropy(p, t);
    }
    return total / static_cast<T>(n);
}

std::vector<std::size_t> argmax_rows(const Tensor& probs) {
    const std::size_t n = probs.shape()[0], c = probs.shape()[1];
    std::vector<std::size_t> out(n);
    for (std::size_t b = 0; b < n; ++b) {
        const float* row = probs.data() + b * c;
        out[b] = static_cast<std::size_t>(std::max_element(row, row + c) - row);
    }
    return out;
}

template class BasicNetwork<float>;
template class BasicNetwork<double>;
template float batch_cross_entropy(const BasicTensor<float>&, const BasicTensor<float>&);
template double batch_cross_entropy(const BasicTensor<double>&, const BasicTensor<double>&);

}  // namespace dfq
