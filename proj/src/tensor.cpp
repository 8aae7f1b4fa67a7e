#include "dfq/tensor.hpp"

#include <cmath>
#include <sstream>

namespace dfq {

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw ShapeError("shape must have at least one extent");
    for (std::size_t d : dims_) {
        if (d == 0) throw ShapeError("shape extent must be positive: " + to_string());
    }
}

std::size_t Shape::element_count() const {
    if (dims_.empty()) return 0;
    std::size_t n = 1;
    for (std::size_t d : dims_) n *= d;
    return n;
}

Shape Shape::tail() const {
    if (dims_.size() < 2) throw ShapeError("cannot drop leading extent of " + to_string());
    return Shape(std::vector<std::size_t>(dims_.begin() + 1, dims_.end()));
}

Shape Shape::with_leading(std::size_t extent) const {
    std::vector<std::size_t> d;
    d.reserve(dims_.size() + 1);
    d.push_back(extent);
    d.insert(d.end(), dims_.begin(), dims_.end());
    return Shape(std::move(d));
}

std::string Shape::to_string() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (i) os << ',';
        os << dims_[i];
    }
    os << ']';
    return os.str();
}

template <typename T>
bool all_finite(const BasicTensor<T>& t) {
    for (T v : t.values()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

template bool all_finite(const BasicTensor<float>&);
template bool all_finite(const BasicTensor<double>&);

}  // namespace dfq
