#include "pap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pap {

Shape::Shape(std::initializer_list<int> dims) : Shape(std::span<const int>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const int> dims) {
    if (dims.empty() || dims.size() > kMaxRank) {
        throw ShapeError("tensor rank must be 1.." + std::to_string(kMaxRank) + ", got " +
                         std::to_string(dims.size()));
    }
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (dims[i] <= 0) throw ShapeError("tensor extents must be positive");
        dims_[i] = dims[i];
    }
    rank_ = static_cast<int>(dims.size());
}

std::size_t Shape::numel() const {
    if (rank_ == 0) return 0;
    std::size_t n = 1;
    for (int i = 0; i < rank_; ++i) n *= static_cast<std::size_t>(dims_[i]);
    return n;
}

std::string Shape::str() const {
    std::ostringstream os;
    os << '[';
    for (int i = 0; i < rank_; ++i) os << (i ? "x" : "") << dims_[i];
    os << ']';
    return os.str();
}

bool operator==(const Shape& a, const Shape& b) {
    if (a.rank_ != b.rank_) return false;
    for (int i = 0; i < a.rank_; ++i)
        if (a.dims_[i] != b.dims_[i]) return false;
    return true;
}

void require_same_shape(const Shape& expected, const Shape& actual, const char* what) {
    if (!(expected == actual)) {
        throw ShapeError(std::string(what) + ": expected shape " + expected.str() + ", got " + actual.str());
    }
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_.str());
    }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
    if (shape.numel() != shape_.numel()) {
        throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
    }
    return BasicTensor(shape, data_);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::slice_batch(int first, int count) const {
    if (first < 0 || count <= 0 || first + count > shape_[0]) {
        throw ShapeError("batch slice [" + std::to_string(first) + ", " + std::to_string(first + count) +
                         ") out of range for " + shape_.str());
    }
    std::vector<int> dims(shape_.dims().begin(), shape_.dims().end());
    const std::size_t item = shape_.numel() / static_cast<std::size_t>(shape_[0]);
    dims[0] = count;
    std::vector<T> out(data_.begin() + static_cast<std::ptrdiff_t>(item * first),
                       data_.begin() + static_cast<std::ptrdiff_t>(item * (first + count)));
    return BasicTensor(Shape(std::span<const int>(dims)), std::move(out));
}

template <typename T>
void BasicTensor<T>::fill(T v) {
    std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
BasicTensor<T> stack_batch(std::span<const BasicTensor<T>> items) {
    if (items.empty()) throw ShapeError("stack_batch: no items");
    const Shape& first = items.front().shape();
    if (first.rank() != 4) throw ShapeError("stack_batch: expected rank-4 items, got " + first.str());
    for (const auto& it : items) {
        const Shape& s = it.shape();
        if (s.rank() != 4 || s.c() != first.c() || s.h() != first.h() || s.w() != first.w()) {
            throw ShapeError("stack_batch: item shape " + s.str() + " incompatible with " + first.str());
        }
    }
    int total = 0;
    for (const auto& it : items) total += it.shape().n();
    std::vector<T> data;
    data.reserve(static_cast<std::size_t>(total) * first.c() * first.h() * first.w());
    for (const auto& it : items) data.insert(data.end(), it.values().begin(), it.values().end());
    return BasicTensor<T>(Shape{total, first.c(), first.h(), first.w()}, std::move(data));
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template BasicTensor<float> stack_batch(std::span<const BasicTensor<float>>);
template BasicTensor<double> stack_batch(std::span<const BasicTensor<double>>);

}  // namespace pap
