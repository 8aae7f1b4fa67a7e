#ifndef DFQ_TENSOR_HPP
#define DFQ_TENSOR_HPP

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dfq/errors.hpp"

namespace dfq {

/// Ordered list of positive extents. Images are H x W x C; batches prepend B.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}
    explicit Shape(std::vector<std::size_t> dims);

    std::size_t rank() const { return dims_.size(); }
    std::size_t operator[](std::size_t i) const { return dims_.at(i); }
    std::size_t element_count() const;
    std::span<const std::size_t> dims() const { return dims_; }

    /// Drops the leading extent, e.g. [B,H,W,C] -> [H,W,C].
    Shape tail() const;
    /// Prepends an extent, e.g. [H,W,C] -> [B,H,W,C].
    Shape with_leading(std::size_t extent) const;

    std::string to_string() const;

    friend bool operator==(const Shape&, const Shape&) = default;

private:
    std::vector<std::size_t> dims_;
};

/// Dense row-major tensor. T is float on every production path; double is
/// used by the finite-difference harness.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(Shape shape, T fill = T{0})
        : shape_(std::move(shape)), data_(shape_.element_count(), fill) {}
    BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_.element_count()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_.to_string());
        }
    }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t y, std::size_t x, std::size_t c) {
        return data_[(y * shape_[1] + x) * shape_[2] + c];
    }
    const T& at(std::size_t y, std::size_t x, std::size_t c) const {
        return data_[(y * shape_[1] + x) * shape_[2] + c];
    }

    /// Contiguous view of the i-th slice along the leading axis.
    std::span<T> slice(std::size_t i) {
        const std::size_t n = data_.size() / shape_[0];
        return std::span<T>(data_).subspan(i * n, n);
    }
    std::span<const T> slice(std::size_t i) const {
        const std::size_t n = data_.size() / shape_[0];
        return std::span<const T>(data_).subspan(i * n, n);
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    template <typename U>
    BasicTensor<U> cast() const {
        return BasicTensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

private:
    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename T = float>
BasicTensor<T> create(const Shape& shape, T fill) {
    return BasicTensor<T>(shape, fill);
}

template <typename T, typename F>
BasicTensor<T> map_elementwise(const BasicTensor<T>& t, F&& f) {
    BasicTensor<T> out(t.shape());
    const T* in = t.data();
    T* o = out.data();
    for (std::size_t i = 0; i < t.size(); ++i) o[i] = f(in[i]);
    return out;
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& t, const Shape& shape) {
    if (shape.element_count() != t.size()) {
        throw ShapeError("cannot reshape " + t.shape().to_string() + " to " + shape.to_string());
    }
    return BasicTensor<T>(shape, std::vector<T>(t.values().begin(), t.values().end()));
}

template <typename T>
bool all_finite(const BasicTensor<T>& t);

}  // namespace dfq

#endif  // DFQ_TENSOR_HPP
