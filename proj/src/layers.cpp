#include "dfq/layers.hpp"

#include <algorithm>
#include <cmath>

namespace dfq {

namespace {

void require_rank(const Shape& s, std::size_t rank, const char* what) {
    if (s.rank() != rank) {
        throw ShapeError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                         s.to_string());
    }
}

template <typename T>
kernels::ConvGeometry conv_geometry(const Shape& in, const BasicConvParams<T>& p) {
    require_rank(in, 3, "conv2d input");
    require_rank(p.weights.shape(), 4, "conv2d weights");
    if (p.stride != 1) throw ConfigError("only stride 1 convolution is supported");
    if (p.weights.shape()[0] != p.weights.shape()[1]) throw ShapeError("conv kernel must be square");
    if (in[2] != p.in_channels()) {
        throw ShapeError("conv2d channel mismatch: input " + in.to_string() + ", weights " +
                         p.weights.shape().to_string());
    }
    if (p.bias.size() != p.out_channels()) throw ShapeError("conv2d bias length mismatch");
    return kernels::ConvGeometry::make(in[0], in[1], in[2], p.kernel(), p.out_channels(), p.padding);
}

// Splits [n] or [B, n] into (rows, n).
std::pair<std::size_t, std::size_t> rows_cols(const Shape& s, const char* what) {
    if (s.rank() == 1) return {1, s[0]};
    if (s.rank() == 2) return {s[0], s[1]};
    throw ShapeError(std::string(what) + " expects a vector or a batch of vectors, got " + s.to_string());
}

template <typename T>
void check_one_hot_impl(std::span<const T> target) {
    std::size_t ones = 0;
    for (T v : target) {
        if (v == T{1}) {
            ++ones;
        } else if (v != T{0}) {
            throw ConfigError("target is not one-hot");
        }
    }
    if (ones != 1) throw ConfigError("target is not one-hot");
}

}  // namespace

void check_one_hot(std::span<const float> target) { check_one_hot_impl(target); }
void check_one_hot(std::span<const double> target) { check_one_hot_impl(target); }

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicConvParams<T>& p) {
    const auto g = conv_geometry(input.shape(), p);
    BasicTensor<T> out(Shape{g.out_h, g.out_w, g.out_c});
    kernels::conv2d_forward(g, input.data(), p.weights.data(), p.bias.data(), out.data());
    return out;
}

template <typename T>
ParamGradients<T> conv2d_gradients(const BasicTensor<T>& grad_out, const BasicTensor<T>& cached_input,
                                   const BasicConvParams<T>& p) {
    const auto g = conv_geometry(cached_input.shape(), p);
    if (grad_out.shape() != Shape{g.out_h, g.out_w, g.out_c}) {
        throw ShapeError("conv2d grad_out shape " + grad_out.shape().to_string() +
                         " does not match forward output");
    }
    ParamGradients<T> r{BasicTensor<T>(cached_input.shape()), BasicTensor<T>(p.weights.shape()),
                        BasicTensor<T>(p.bias.shape())};
    kernels::conv2d_backward(g, grad_out.data(), cached_input.data(), p.weights.data(), r.input.data(),
                             r.weights.data(), r.bias.data());
    return r;
}

template <typename T>
PoolResult<T> maxpool_forward(const BasicTensor<T>& input) {
    require_rank(input.shape(), 3, "maxpool input");
    const auto& s = input.shape();
    const auto g = kernels::PoolGeometry::make(s[0], s[1], s[2]);
    PoolResult<T> r;
    r.output = BasicTensor<T>(Shape{g.out_h, g.out_w, g.channels});
    r.indices.input_shape = s;
    r.indices.output_shape = r.output.shape();
    r.indices.index.resize(g.out_size());
    kernels::maxpool_forward(g, input.data(), r.output.data(), r.indices.index.data());
    return r;
}

template <typename T>
BasicTensor<T> maxpool_backward(const BasicTensor<T>& grad_out, const PoolIndices& indices) {
    if (grad_out.shape() != indices.output_shape || indices.index.size() != grad_out.size()) {
        throw ShapeError("maxpool indices do not match grad_out " + grad_out.shape().to_string());
    }
    const auto& s = indices.input_shape;
    const auto g = kernels::PoolGeometry::make(s[0], s[1], s[2]);
    BasicTensor<T> grad_in(s);
    kernels::maxpool_backward(g, grad_out.data(), indices.index.data(), grad_in.data());
    return grad_in;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
    return map_elementwise(input, [](T v) { return v > T{0} ? v : T{0}; });
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& grad_out, const BasicTensor<T>& cached_input) {
    if (grad_out.shape() != cached_input.shape()) throw ShapeError("relu_backward shape mismatch");
    BasicTensor<T> g(grad_out.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = cached_input[i] > T{0} ? grad_out[i] : T{0};
    return g;
}

template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T>& input, const BasicDenseParams<T>& p) {
    const auto [rows, n_in] = rows_cols(input.shape(), "dense input");
    if (n_in != p.inputs()) {
        throw ShapeError("dense input length " + std::to_string(n_in) + " != " +
                         std::to_string(p.inputs()));
    }
    const std::size_t n_out = p.outputs();
    BasicTensor<T> out(input.shape().rank() == 1 ? Shape{n_out} : Shape{rows, n_out});
    kernels::gemm_nn(rows, n_out, n_in, input.data(), p.weights.data(), out.data(), false);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n_out; ++j) out[r * n_out + j] += p.bias[j];
    return out;
}

template <typename T>
ParamGradients<T> dense_gradients(const BasicTensor<T>& grad_out, const BasicTensor<T>& cached_input,
                                  const BasicDenseParams<T>& p) {
    const auto [rows, n_in] = rows_cols(cached_input.shape(), "dense input");
    const auto [grows, n_out] = rows_cols(grad_out.shape(), "dense grad_out");
    if (n_in != p.inputs() || n_out != p.outputs() || rows != grows) {
        throw ShapeError("dense gradient shape mismatch");
    }
    ParamGradients<T> r{BasicTensor<T>(cached_input.shape()), BasicTensor<T>(p.weights.shape()),
                        BasicTensor<T>(p.bias.shape())};
    kernels::gemm_tn_acc(n_in, n_out, rows, cached_input.data(), grad_out.data(), r.weights.data());
    kernels::gemm_nt(rows, n_in, n_out, grad_out.data(), p.weights.data(), r.input.data(), false);
    for (std::size_t b = 0; b < rows; ++b)
        for (std::size_t j = 0; j < n_out; ++j) r.bias[j] += grad_out[b * n_out + j];
    return r;
}

template <typename T>
DropoutResult<T> dropout(const BasicTensor<T>& input, const DropoutConfig& cfg, Rng& rng) {
    if (!(cfg.rate >= 0.0 && cfg.rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
    DropoutResult<T> r{input, std::vector<std::uint8_t>(input.size(), 1)};
    if (cfg.mode == Mode::Infer || cfg.rate == 0.0) return r;
    const T scale = static_cast<T>(1.0 / (1.0 - cfg.rate));
    for (std::size_t i = 0; i < input.size(); ++i) {
        const bool keep = !rng.bernoulli(cfg.rate);
        r.mask[i] = keep ? 1 : 0;
        r.output[i] = keep ? input[i] * scale : T{0};
    }
    return r;
}

template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& grad_out, const std::vector<std::uint8_t>& mask,
                                double rate) {
    if (mask.size() != grad_out.size()) throw ShapeError("dropout mask length mismatch");
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    BasicTensor<T> g(grad_out.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = mask[i] ? grad_out[i] * scale : T{0};
    return g;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
    const auto [rows, n] = rows_cols(logits.shape(), "softmax");
    BasicTensor<T> out(logits.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* z = logits.data() + r * n;
        T* p = out.data() + r * n;
        const T zmax = *std::max_element(z, z + n);
        T sum = T{0};
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = std::exp(z[i] - zmax);
            sum += p[i];
        }
        for (std::size_t i = 0; i < n; ++i) p[i] /= sum;
    }
    return out;
}

template <typename T>
T cross_entropy(const BasicTensor<T>& probs, const BasicTensor<T>& target) {
    if (probs.shape() != target.shape()) throw ShapeError("cross_entropy shape mismatch");
    check_one_hot(target.values());
    T loss = T{0};
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (target[i] != T{0}) loss -= target[i] * std::log(probs[i] + static_cast<T>(kLogEpsilon));
    }
    return loss;
}

template <typename T>
BasicTensor<T> softmax_ce_grad(const BasicTensor<T>& probs, const BasicTensor<T>& target) {
    if (probs.shape() != target.shape()) throw ShapeError("softmax_ce_grad shape mismatch");
    check_one_hot(target.values());
    BasicTensor<T> g(probs.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = probs[i] - target[i];
    return g;
}

#define DFQ_INSTANTIATE(T)                                                                         \
    template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const BasicConvParams<T>&);       \
    template ParamGradients<T> conv2d_gradients(const BasicTensor<T>&, const BasicTensor<T>&,       \
                                                const BasicConvParams<T>&);                         \
    template PoolResult<T> maxpool_forward(const BasicTensor<T>&);                                  \
    template BasicTensor<T> maxpool_backward(const BasicTensor<T>&, const PoolIndices&);            \
    template BasicTensor<T> relu(const BasicTensor<T>&);                                            \
    template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);            \
    template BasicTensor<T> dense_forward(const BasicTensor<T>&, const BasicDenseParams<T>&);       \
    template ParamGradients<T> dense_gradients(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                               const BasicDenseParams<T>&);                         \
    template DropoutResult<T> dropout(const BasicTensor<T>&, const DropoutConfig&, Rng&);           \
    template BasicTensor<T> dropout_backward(const BasicTensor<T>&, const std::vector<std::uint8_t>&, \
                                             double);                                               \
    template BasicTensor<T> softmax(const BasicTensor<T>&);                                         \
    template T cross_entropy(const BasicTensor<T>&, const BasicTensor<T>&);                         \
    template BasicTensor<T> softmax_ce_grad(const BasicTensor<T>&, const BasicTensor<T>&);

DFQ_INSTANTIATE(float)
DFQ_INSTANTIATE(double)

#undef DFQ_INSTANTIATE

}  // namespace dfq
