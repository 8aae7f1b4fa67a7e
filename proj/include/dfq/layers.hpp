#ifndef DFQ_LAYERS_HPP
#define DFQ_LAYERS_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dfq/kernels.hpp"
#include "dfq/random.hpp"
#include "dfq/tensor.hpp"

namespace dfq {

using kernels::Padding;

enum class Mode : std::uint8_t { Train, Infer };

template <typename T>
struct BasicConvParams {
    BasicTensor<T> weights;  // [k, k, c_in, c_out]
    BasicTensor<T> bias;     // [c_out]
    Padding padding = Padding::Same;
    std::size_t stride = 1;

    std::size_t kernel() const { return weights.shape()[0]; }
    std::size_t in_channels() const { return weights.shape()[2]; }
    std::size_t out_channels() const { return weights.shape()[3]; }
    std::size_t parameter_count() const { return weights.size() + bias.size(); }
};

template <typename T>
struct BasicDenseParams {
    BasicTensor<T> weights;  // [n_in, n_out]
    BasicTensor<T> bias;     // [n_out]

    std::size_t inputs() const { return weights.shape()[0]; }
    std::size_t outputs() const { return weights.shape()[1]; }
    std::size_t parameter_count() const { return weights.size() + bias.size(); }
};

using ConvParams = BasicConvParams<float>;
using DenseParams = BasicDenseParams<float>;

struct DropoutConfig {
    double rate = 0.5;
    Mode mode = Mode::Train;
};

/// Winning flat input index per pooled output cell, plus the input shape the
/// indices refer to.
struct PoolIndices {
    Shape input_shape;
    Shape output_shape;
    std::vector<std::uint32_t> index;
};

template <typename T>
struct ParamGradients {
    BasicTensor<T> input;
    BasicTensor<T> weights;
    BasicTensor<T> bias;
};

template <typename T>
struct PoolResult {
    BasicTensor<T> output;
    PoolIndices indices;
};

template <typename T>
struct DropoutResult {
    BasicTensor<T> output;
    std::vector<std::uint8_t> mask;  // 1 = kept
};

inline constexpr double kLogEpsilon = 1e-7;

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicConvParams<T>& p);

template <typename T>
ParamGradients<T> conv2d_gradients(const BasicTensor<T>& grad_out, const BasicTensor<T>& cached_input,
                                   const BasicConvParams<T>& p);

/// 2x2 window, stride 2, floor semantics.
template <typename T>
PoolResult<T> maxpool_forward(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> maxpool_backward(const BasicTensor<T>& grad_out, const PoolIndices& indices);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& grad_out, const BasicTensor<T>& cached_input);

/// input [n_in] -> [n_out], or a batch [B, n_in] -> [B, n_out].
template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T>& input, const BasicDenseParams<T>& p);

template <typename T>
ParamGradients<T> dense_gradients(const BasicTensor<T>& grad_out, const BasicTensor<T>& cached_input,
                                  const BasicDenseParams<T>& p);

/// Inverted dropout. Infer mode returns the input unchanged and an all-ones mask.
template <typename T>
DropoutResult<T> dropout(const BasicTensor<T>& input, const DropoutConfig& cfg, Rng& rng);

template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& grad_out, const std::vector<std::uint8_t>& mask,
                                double rate);

/// Softmax over the last axis ([n] or [B, n]).
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

/// -sum target_i * ln(probs_i + 1e-7). Throws ConfigError for a non-one-hot target.
template <typename T>
T cross_entropy(const BasicTensor<T>& probs, const BasicTensor<T>& target);

/// Gradient of cross_entropy(softmax(z)) with respect to z: probs - target.
template <typename T>
BasicTensor<T> softmax_ce_grad(const BasicTensor<T>& probs, const BasicTensor<T>& target);

void check_one_hot(std::span<const float> target);
void check_one_hot(std::span<const double> target);

}  // namespace dfq

#endif  // DFQ_LAYERS_HPP
