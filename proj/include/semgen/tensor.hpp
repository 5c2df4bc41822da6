#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "semgen/errors.hpp"

namespace semgen {

// Dense row-major tensor. Used for network activations ((N,C,D,H,W)) and
// fully-connected matrices ((N,F)).
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
        int64_t n = 1;
        for (int64_t d : shape_) n *= d;
        data_.assign(static_cast<size_t>(n), T(0));
    }

    Tensor(std::initializer_list<int64_t> shape) : Tensor(std::vector<int64_t>(shape)) {}

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t dim(size_t i) const { return shape_[i]; }
    size_t rank() const { return shape_.size(); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    T& at2(int64_t n, int64_t f) { return data_[static_cast<size_t>(n * shape_[1] + f)]; }
    const T& at2(int64_t n, int64_t f) const { return data_[static_cast<size_t>(n * shape_[1] + f)]; }

    int64_t index5(int64_t n, int64_t c, int64_t z, int64_t y, int64_t x) const {
        return (((n * shape_[1] + c) * shape_[2] + z) * shape_[3] + y) * shape_[4] + x;
    }
    T& at5(int64_t n, int64_t c, int64_t z, int64_t y, int64_t x) {
        return data_[static_cast<size_t>(index5(n, c, z, y, x))];
    }
    const T& at5(int64_t n, int64_t c, int64_t z, int64_t y, int64_t x) const {
        return data_[static_cast<size_t>(index5(n, c, z, y, x))];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    // underlying storage, for kernels that want a flat vector (e.g. biases)
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
        return out;
    }

private:
    std::vector<int64_t> shape_;
    std::vector<T> data_;
};

} // namespace semgen
