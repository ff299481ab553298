#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gaf/errors.hpp"

namespace gaf {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

/// Shape-carrying row-major real array.
///
/// Rank-2 arrays are read as (rows, cols); rank-1 arrays as a single row.
template <class T>
class Array {
public:
    using value_type = T;

    Array() = default;

    explicit Array(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
        check_shape();
    }

    Array(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (data_.size() != shape_size(shape_)) {
            throw ShapeError("array data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_string(shape_));
        }
    }

    static Array zeros(Shape shape) { return Array(std::move(shape)); }

    static Array zeros_like(const Array& other) { return Array(other.shape_); }

    static Array scalar(T value) { return Array(Shape{1}, std::vector<T>{value}); }

    static Array vector(std::initializer_list<T> values) {
        return Array(Shape{values.size()}, std::vector<T>(values));
    }

    static Array matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> values) {
        return Array(Shape{rows, cols}, std::vector<T>(values));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::size_t rows() const noexcept { return shape_.size() >= 2 ? shape_[0] : 1; }
    std::size_t cols() const noexcept { return shape_.empty() ? 0 : (shape_.size() >= 2 ? size() / shape_[0] : shape_[0]); }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    std::span<T> row(std::size_t r) { return std::span<T>(data_).subspan(r * cols(), cols()); }
    std::span<const T> row(std::size_t r) const { return std::span<const T>(data_).subspan(r * cols(), cols()); }

    T item() const {
        if (data_.size() != 1) {
            throw ShapeError("item() on array of shape " + shape_string(shape_));
        }
        return data_[0];
    }

    bool all_finite() const noexcept {
        // v - v is 0 for finite values and NaN otherwise; branch-free so it vectorizes.
        bool ok = true;
        for (T v : data_) ok &= (v - v == T(0));
        return ok;
    }

    Array reshaped(Shape shape) const { return Array(std::move(shape), data_); }

    template <class U>
    Array<U> cast() const {
        std::vector<U> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
        return Array<U>(shape_, std::move(out));
    }

    /// Bitwise equality of shape and contents.
    friend bool operator==(const Array& a, const Array& b) {
        return a.shape_ == b.shape_ &&
               std::equal(a.data_.begin(), a.data_.end(), b.data_.begin(), b.data_.end(), [](T x, T y) {
                   return std::memcmp(&x, &y, sizeof(T)) == 0;
               });
    }

private:
    void check_shape() const {
        if (shape_.empty()) {
            throw ShapeError("array shape must have at least one dimension");
        }
        for (auto n : shape_) {
            if (n == 0) {
                throw ShapeError("array dimensions must be positive, got " + shape_string(shape_));
            }
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

/// Largest absolute elementwise difference; shapes must agree.
template <class T>
T max_abs_diff(const Array<T>& a, const Array<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("max_abs_diff: shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    T m{0};
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

}  // namespace gaf
