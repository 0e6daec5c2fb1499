#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pap {

/// Raised whenever operand extents disagree; the message names both shapes.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Up to four positive extents. Rank-4 tensors are read as (batch, channel, height, width).
class Shape {
public:
    static constexpr int kMaxRank = 4;

    Shape() = default;
    Shape(std::initializer_list<int> dims);
    explicit Shape(std::span<const int> dims);

    int rank() const { return rank_; }
    int operator[](int axis) const { return dims_.at(static_cast<std::size_t>(axis)); }
    std::size_t numel() const;
    std::span<const int> dims() const { return {dims_.data(), static_cast<std::size_t>(rank_)}; }

    // Rank-4 accessors.
    int n() const { return (*this)[0]; }
    int c() const { return (*this)[1]; }
    int h() const { return (*this)[2]; }
    int w() const { return (*this)[3]; }

    std::string str() const;
    friend bool operator==(const Shape& a, const Shape& b);

private:
    std::array<int, kMaxRank> dims_{};
    int rank_ = 0;
};

/// Throws ShapeError naming both shapes unless they are equal.
void require_same_shape(const Shape& expected, const Shape& actual, const char* what);

/// Dense row-major tensor. Tensor (float) is the working type; the double
/// instantiation backs the gradient checks.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(Shape shape, T fill = T{0})
        : shape_(shape), data_(shape.numel(), fill) {}
    BasicTensor(Shape shape, std::vector<T> data);

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
    const T& at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

    /// Same data, new extents with equal element count.
    BasicTensor reshaped(Shape shape) const;
    /// Items [first, first+count) along axis 0.
    BasicTensor slice_batch(int first, int count) const;

    void fill(T v);
    bool all_finite() const;

    template <typename U>
    BasicTensor<U> cast() const {
        BasicTensor<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

private:
    std::size_t offset(int n, int c, int h, int w) const {
        return ((static_cast<std::size_t>(n) * shape_.c() + c) * shape_.h() + h) * shape_.w() + w;
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

/// Concatenates rank-4 tensors with identical C,H,W along the batch axis.
template <typename T>
BasicTensor<T> stack_batch(std::span<const BasicTensor<T>> items);

}  // namespace pap
