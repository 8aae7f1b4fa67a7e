#include "dfq/quantize.hpp"

#include <algorithm>
#include <cmath>

#include "dfq/errors.hpp"
#include "dfq/kernels.hpp"

namespace dfq {

std::size_t QuantizedModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += w.values.size();
    for (const auto& b : biases) n += b.size();
    return n;
}

std::int8_t quantize_value(double w, double scale) {
    const double r = std::round(w / scale);  // std::round ties away from zero
    return static_cast<std::int8_t>(std::clamp(r, -127.0, 127.0));
}

namespace {

QuantizedTensor quantize_with(const Tensor& w, float scale) {
    QuantizedTensor q{w.shape(), std::vector<std::int8_t>(w.size()), scale};
    for (std::size_t i = 0; i < w.size(); ++i) q.values[i] = quantize_value(w[i], scale);
    return q;
}

bool within_bound(const Tensor& w, const QuantizedTensor& q) {
    return max_roundtrip_error(w, q) <= static_cast<double>(q.scale) / 2.0;
}

// Smallest float >= s whose mantissa fits in 16 bits, so q * s is exact for |q| <= 127.
float snap_scale_up(float s) {
    int e = 0;
    const double m = std::frexp(static_cast<double>(s), &e);  // s = m * 2^e, m in [0.5, 1)
    const double units = std::ceil(m * 65536.0);
    return static_cast<float>(std::ldexp(units / 65536.0, e));
}

}  // namespace

QuantizedTensor quantize_tensor(const Tensor& w) {
    float max_abs = 0.0f;
    for (float v : w.values()) max_abs = std::max(max_abs, std::abs(v));
    if (max_abs == 0.0f) return QuantizedTensor{w.shape(), std::vector<std::int8_t>(w.size(), 0), 1.0f};
    if (!std::isfinite(max_abs)) throw ConfigError("cannot quantize a tensor with non-finite values");
    const auto scale = static_cast<float>(static_cast<double>(max_abs) / 127.0);
    QuantizedTensor q = quantize_with(w, scale);
    if (within_bound(w, q)) return q;
    q = quantize_with(w, snap_scale_up(scale));
    return q;
}

Tensor dequantize_tensor(const QuantizedTensor& q) {
    Tensor t(q.shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(q.values[i]) * q.scale;
    return t;
}

double max_roundtrip_error(const Tensor& w, const QuantizedTensor& q) {
    if (w.shape() != q.shape) throw ShapeError("max_roundtrip_error: shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const float back = static_cast<float>(q.values[i]) * q.scale;
        worst = std::max(worst, std::abs(static_cast<double>(w[i]) - static_cast<double>(back)));
    }
    return worst;
}

QuantizedModel quantize_int8(const Network& net) {
    QuantizedModel qm;
    qm.layers = net.layers();
    qm.input_shape = net.input_shape();
    qm.width = net.width();
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        const auto pi = net.parameter_index(i);
        if (pi < 0) continue;
        qm.weights.push_back(quantize_tensor(net.parameters()[static_cast<std::size_t>(pi)]));
        qm.biases.push_back(net.parameters()[static_cast<std::size_t>(pi) + 1]);
    }
    return qm;
}

Network dequantize(const QuantizedModel& qm) {
    if (qm.weights.size() != qm.biases.size()) throw ShapeError("quantized model weight/bias count mismatch");
    ParameterSet<float> params;
    for (std::size_t i = 0; i < qm.weights.size(); ++i) {
        params.push_back(dequantize_tensor(qm.weights[i]));
        params.push_back(qm.biases[i]);
    }
    return Network(qm.layers, std::move(params), qm.width, qm.input_shape);
}

QuantizedExecutor::QuantizedExecutor(const QuantizedModel& qm) : layers_(qm.layers), input_shape_(qm.input_shape) {
    // constructing the dequantized network validates the layer chain and shapes
    (void)dequantize(qm);
    for (std::size_t i = 0; i < qm.weights.size(); ++i) {
        Tensor w(qm.weights[i].shape);
        for (std::size_t j = 0; j < w.size(); ++j) w[j] = static_cast<float>(qm.weights[i].values[j]);
        weights_.push_back(std::move(w));
        biases_.push_back(qm.biases[i]);
        scales_.push_back(qm.weights[i].scale);
    }
}

Tensor QuantizedExecutor::forward(const Tensor& batch) const { return run(batch, true); }
Tensor QuantizedExecutor::logits(const Tensor& batch) const { return run(batch, false); }

Tensor QuantizedExecutor::run(const Tensor& batch, bool softmax) const {
    if (batch.shape().rank() != 4 || batch.shape().tail() != input_shape_) {
        throw ShapeError("forward expects a batch of " + input_shape_.to_string() + ", got " + batch.shape().to_string());
    }
    const std::size_t n = batch.shape()[0];
    const std::size_t classes = layers_.back().out_channels;
    Tensor out(Shape{n, classes});
#pragma omp parallel for schedule(dynamic) if (n > 1)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(n); ++b) {
        const auto sample = batch.slice(static_cast<std::size_t>(b));
        Tensor x(input_shape_, std::vector<float>(sample.begin(), sample.end()));
        std::size_t p = 0;
        for (const auto& l : layers_) {
            const Shape& s = x.shape();
            if (l.kind == LayerKind::Conv || l.kind == LayerKind::Dense) {
                Tensor y;
                if (l.kind == LayerKind::Conv) {
                    const auto g = kernels::ConvGeometry::make(s[0], s[1], s[2], l.kernel, l.out_channels, l.padding);
                    const std::vector<float> zero(g.out_c, 0.0f);
                    y = Tensor(Shape{g.out_h, g.out_w, g.out_c});
                    kernels::conv2d_forward(g, x.data(), weights_[p].data(), zero.data(), y.data());
                } else {
                    y = Tensor(Shape{l.out_channels});
                    kernels::gemm_nn(std::size_t{1}, l.out_channels, l.in_channels, x.data(), weights_[p].data(),
                                     y.data(), false);
                }
                const float scale = scales_[p];
                const float* bias = biases_[p].data();
                const std::size_t c = l.out_channels;
                for (std::size_t j = 0; j < y.size(); ++j) {
                    float v = y[j] * scale + bias[j % c];
                    if (l.activation == Activation::Relu && !(v > 0.0f)) v = 0.0f;
                    y[j] = v;
                }
                if (l.activation == Activation::Softmax && softmax) {
                    const float zmax = *std::max_element(y.data(), y.data() + c);
                    float sum = 0.0f;
                    for (std::size_t j = 0; j < c; ++j) {
                        y[j] = std::exp(y[j] - zmax);
                        sum += y[j];
                    }
                    for (std::size_t j = 0; j < c; ++j) y[j] /= sum;
                }
                x = std::move(y);
                ++p;
            } else if (l.kind == LayerKind::MaxPool) {
                const auto g = kernels::PoolGeometry::make(s[0], s[1], s[2]);
                Tensor y(Shape{g.out_h, g.out_w, g.channels});
                std::vector<std::uint32_t> idx(g.out_size());
                kernels::maxpool_forward(g, x.data(), y.data(), idx.data());
                x = std::move(y);
            } else if (l.kind == LayerKind::Flatten) {
                x = reshape(x, Shape{x.size()});
            }
            // dropout is the identity at inference
        }
        std::copy(x.values().begin(), x.values().end(), out.data() + static_cast<std::size_t>(b) * classes);
    }
    return out;
}

Tensor quantized_forward(const QuantizedModel& qm, const Tensor& batch) { return QuantizedExecutor(qm).forward(batch); }

}  // namespace dfq
