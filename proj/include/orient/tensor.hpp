#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "orient/errors.hpp"

namespace orient {

// Dense row-major tensor (last index fastest). Kept deliberately dumb:
// shape bookkeeping plus flat storage, nothing else.
template <typename T>
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<T> v;

    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)), v(count(shape)) {}
    Tensor(std::initializer_list<std::int64_t> s)
        : shape(s), v(count(shape)) {}

    static std::int64_t count(const std::vector<std::int64_t>& s) {
        std::int64_t n = 1;
        for (auto d : s) {
            if (d < 0) throw ShapeError("negative tensor dimension");
            n *= d;
        }
        return n;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    T* data() { return v.data(); }
    const T* data() const { return v.data(); }
    T& operator[](std::int64_t i) { return v[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return v[static_cast<std::size_t>(i)]; }

    void fill(T x) { std::fill(v.begin(), v.end(), x); }
    void zero() { fill(T(0)); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// A learnable tensor: value, gradient and the transfer-learning freeze flag.
// Frozen parameters are skipped by the optimizer.
template <typename T>
struct Parameter {
    Tensor<T> value;
    Tensor<T> grad;
    bool frozen = false;

    Parameter() = default;
    explicit Parameter(std::vector<std::int64_t> s) : value(s), grad(std::move(s)) {}

    void zero_grad() { grad.zero(); }
};

} // namespace orient
