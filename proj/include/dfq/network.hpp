#ifndef DFQ_NETWORK_HPP
#define DFQ_NETWORK_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dfq/layers.hpp"
#include "dfq/random.hpp"
#include "dfq/tensor.hpp"

namespace dfq {

// Quality grades, indexed in the fixed one-hot / report order.
enum class ClassLabel : std::uint8_t { Defect = 0, Fresh = 1, Immature = 2, Mature = 3 };

inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {"defect", "fresh",
                                                                           "immature", "mature"};
inline constexpr std::size_t kInputSize = 256;
inline constexpr std::size_t kInputChannels = 3;

std::string_view class_name(ClassLabel label);
/// Case-insensitive.
std::optional<ClassLabel> parse_class(std::string_view name);
ClassLabel label_from_index(std::size_t index);

enum class LayerKind : std::uint8_t { Conv = 0, MaxPool = 1, Dropout = 2, Flatten = 3, Dense = 4 };
enum class Activation : std::uint8_t { None = 0, Relu = 1, Softmax = 2 };

/// One row of the model summary. Conv and Dense carry their activation, so
/// the layer list lines up with the summary table one-to-one.
struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    std::string name;
    std::size_t kernel = 0;
    Padding padding = Padding::Same;
    std::size_t in_channels = 0;   // conv: c_in, dense: n_in
    std::size_t out_channels = 0;  // conv: c_out, dense: units
    double rate = 0.0;             // dropout only
    Activation activation = Activation::None;

    bool has_parameters() const { return kind == LayerKind::Conv || kind == LayerKind::Dense; }
    Shape weight_shape() const;
    Shape bias_shape() const;
    std::size_t parameter_count() const;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

template <typename T>
using ParameterSet = std::vector<BasicTensor<T>>;

/// Per-sample state recorded by a Train-mode forward pass.
template <typename T>
struct SampleCache {
    std::vector<BasicTensor<T>> activations;  // [0] input, [i + 1] output of layer i
    std::vector<PoolIndices> pools;           // indexed by layer
    std::vector<std::vector<std::uint8_t>> masks;
};

template <typename T>
struct ForwardCache {
    std::vector<SampleCache<T>> samples;
};

template <typename T>
class BasicNetwork {
public:
    BasicNetwork() = default;
    /// Validates the layer chain against input_shape and the parameter tensors.
    BasicNetwork(std::vector<LayerSpec> layers, ParameterSet<T> parameters, double width,
                 Shape input_shape);

    const std::vector<LayerSpec>& layers() const { return layers_; }
    const ParameterSet<T>& parameters() const { return params_; }
    ParameterSet<T>& parameters() { return params_; }
    double width() const { return width_; }
    const Shape& input_shape() const { return input_shape_; }
    std::size_t num_classes() const;
    std::size_t parameter_count() const;

    /// Index into parameters() of a layer's weight tensor (bias follows), or -1.
    std::ptrdiff_t parameter_index(std::size_t layer) const { return param_index_[layer]; }

    /// Output shape of every layer for a single-sample input.
    std::vector<Shape> shape_trace(const Shape& input) const;

    /// batch [B, H, W, C] -> class probabilities [B, classes]. Train mode draws
    /// dropout masks from rng and records them in cache when one is given.
    BasicTensor<T> forward(const BasicTensor<T>& batch, Mode mode, Rng& rng,
                           ForwardCache<T>* cache = nullptr) const;
    /// Same as forward, stopping before the final softmax.
    BasicTensor<T> forward_logits(const BasicTensor<T>& batch, Mode mode, Rng& rng) const;
    /// Deterministic inference forward.
    BasicTensor<T> predict(const BasicTensor<T>& batch) const;

    /// Gradients of the batch-mean cross-entropy for every parameter tensor.
    ParameterSet<T> backward(const ForwardCache<T>& cache, const BasicTensor<T>& targets) const;
    /// Adds scale * (sum of per-sample gradients) into sums.
    void accumulate_gradients(const ForwardCache<T>& cache, const BasicTensor<T>& targets, T scale,
                              ParameterSet<T>& sums) const;

    ParameterSet<T> zero_gradients() const;

    template <typename U>
    BasicNetwork<U> cast() const {
        ParameterSet<U> p;
        p.reserve(params_.size());
        for (const auto& t : params_) p.push_back(t.template cast<U>());
        return BasicNetwork<U>(layers_, std::move(p), width_, input_shape_);
    }

    friend bool operator==(const BasicNetwork&, const BasicNetwork&) = default;

private:
    BasicTensor<T> run_sample(std::span<const T> input, Mode mode, Rng* rng, SampleCache<T>* cache,
                              bool logits) const;
    void sample_gradients(const SampleCache<T>& cache, std::span<const T> target, T scale,
                          ParameterSet<T>& sums) const;

    std::vector<LayerSpec> layers_;
    ParameterSet<T> params_;
    std::vector<std::ptrdiff_t> param_index_;
    double width_ = 1.0;
    Shape input_shape_;
};

using Network = BasicNetwork<float>;

/// Channel/unit count scaled by width, rounded up.
std::size_t scaled_units(std::size_t units, double width);

/// The canonical layer sequence for a width multiplier (no parameters).
std::vector<LayerSpec> canonical_layers(double width);

/// Builds the canonical network with Glorot-uniform weights drawn from seed
/// and zero biases. input_size other than 256 is for desk-scale checks.
Network build_network(double width, std::uint64_t seed, std::size_t input_size = kInputSize);

template <typename T>
T batch_cross_entropy(const BasicTensor<T>& probs, const BasicTensor<T>& targets);

/// Row-wise argmax of [B, classes].
std::vector<std::size_t> argmax_rows(const Tensor& probs);

}  // namespace dfq

#endif  // DFQ_NETWORK_HPP
