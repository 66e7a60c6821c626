#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "behrt/errors.hpp"

namespace behrt::numerics {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

// Dense row-major tensor. The element type is the precision switch: double on
// the oracle/test path, float on the training path.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
        if (shape_size(shape_) != values_.size()) {
            throw ShapeError("tensor shape " + to_string(shape_) + " does not hold " +
                             std::to_string(values_.size()) + " values");
        }
    }

    static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r ? rows.begin()->size() : 0;
        std::vector<T> values;
        values.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw ShapeError("ragged matrix literal");
            values.insert(values.end(), row.begin(), row.end());
        }
        return Tensor({r, c}, std::move(values));
    }

    static Tensor vector(std::initializer_list<T> values) {
        return Tensor({values.size()}, std::vector<T>(values));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty() && shape_.empty(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    // Matrix view helpers; a 1-D tensor is treated as a single row.
    std::size_t rows() const noexcept { return shape_.size() >= 2 ? shape_[0] : 1; }
    std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }

    T* data() noexcept { return values_.data(); }
    const T* data() const noexcept { return values_.data(); }
    std::span<T> values() noexcept { return values_; }
    std::span<const T> values() const noexcept { return values_; }
    const std::vector<T>& storage() const noexcept { return values_; }

    T& operator[](std::size_t i) { return values_[i]; }
    const T& operator[](std::size_t i) const { return values_[i]; }
    T& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

    std::span<T> row(std::size_t r) { return std::span<T>(values_).subspan(r * cols(), cols()); }
    std::span<const T> row(std::size_t r) const {
        return std::span<const T>(values_).subspan(r * cols(), cols());
    }

    Tensor reshaped(Shape shape) const {
        if (shape_size(shape) != size()) {
            throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
        }
        return Tensor(std::move(shape), values_);
    }

    void fill(T value) { std::fill(values_.begin(), values_.end(), value); }

    bool all_finite() const {
        return std::all_of(values_.begin(), values_.end(), [](T v) { return std::isfinite(v); });
    }

    template <typename U>
    Tensor<U> cast() const {
        return Tensor<U>(shape_, std::vector<U>(values_.begin(), values_.end()));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.values_ == b.values_;
    }

private:
    Shape shape_;
    std::vector<T> values_;
};

// c[m x n] += a[m x k] * b[k x n]. Four rows of c share each pass over a row of b.
template <typename T>
void gemm_accumulate(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        T* __restrict c0 = c + i * n;
        T* __restrict c1 = c0 + n;
        T* __restrict c2 = c1 + n;
        T* __restrict c3 = c2 + n;
        const T* a0 = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
            const T* __restrict brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                const T bv = brow[j];
                c0[j] += v0 * bv;
                c1[j] += v1 * bv;
                c2[j] += v2 * bv;
                c3[j] += v3 * bv;
            }
        }
    }
    for (; i < m; ++i) {
        T* __restrict crow = c + i * n;
        const T* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* __restrict brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[m x n] += a[m x k] * b^T where b is [n x k].
template <typename T>
void gemm_accumulate_bt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    std::vector<T> bt(k * n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    gemm_accumulate(a, bt.data(), c, m, k, n);
}

// c[k x n] += a^T * b where a is [m x k] and b is [m x n].
template <typename T>
void gemm_accumulate_at(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    std::vector<T> at(k * m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
    gemm_accumulate(at.data(), b, c, k, m, n);
}

}  // namespace behrt::numerics
