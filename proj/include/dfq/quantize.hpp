#ifndef DFQ_QUANTIZE_HPP
#define DFQ_QUANTIZE_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dfq/network.hpp"

namespace dfq {

/// Symmetric per-tensor int8, zero point 0.
struct QuantizedTensor {
    Shape shape;
    std::vector<std::int8_t> values;
    float scale = 1.0f;

    friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

/// Weights are int8; biases stay 32-bit.
struct QuantizedModel {
    std::vector<LayerSpec> layers;
    Shape input_shape;
    double width = 1.0;
    std::vector<QuantizedTensor> weights;  // one per parametric layer, in layer order
    std::vector<Tensor> biases;

    std::size_t parameter_count() const;
    friend bool operator==(const QuantizedModel&, const QuantizedModel&) = default;
};

/// Rounds half away from zero.
std::int8_t quantize_value(double w, double scale);

/// scale = max|w| / 127 (1 for an all-zero tensor). If rounding that scale to
/// float would let some |w - q * scale| exceed scale / 2, the scale is nudged
/// up to a 16-bit mantissa so every q * scale is exact in float.
QuantizedTensor quantize_tensor(const Tensor& w);
Tensor dequantize_tensor(const QuantizedTensor& q);
/// Largest |w - q * scale| over the tensor, in double.
double max_roundtrip_error(const Tensor& w, const QuantizedTensor& q);

QuantizedModel quantize_int8(const Network& net);
Network dequantize(const QuantizedModel& qm);

/// Infer-mode forward with int8 weights: each conv/dense accumulates against
/// the integer values, then applies the tensor scale and the bias. Holds the
/// integer weights widened once so repeated calls do no conversion.
class QuantizedExecutor {
public:
    explicit QuantizedExecutor(const QuantizedModel& qm);

    /// [B, H, W, C] -> probabilities [B, classes]; safe to call concurrently.
    Tensor forward(const Tensor& batch) const;
    /// Same, stopping before the final softmax.
    Tensor logits(const Tensor& batch) const;

private:
    Tensor run(const Tensor& batch, bool softmax) const;

    std::vector<LayerSpec> layers_;
    Shape input_shape_;
    std::vector<Tensor> weights_;  // integer-valued floats, one per parametric layer
    std::vector<Tensor> biases_;
    std::vector<float> scales_;
};

Tensor quantized_forward(const QuantizedModel& qm, const Tensor& batch);

}  // namespace dfq

#endif  // DFQ_QUANTIZE_HPP
