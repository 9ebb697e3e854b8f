#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "lta/errors.hpp"

namespace lta {

// Dense row-major tensor. Rank 3 with shape (H, W, C) is the common case:
// index (i, j, k) -> (i * W + j) * C + k, so channels of one spatial
// coordinate are contiguous.
template <typename T>
class TensorT {
  public:
    TensorT() = default;

    explicit TensorT(std::vector<uint32_t> shape) : shape_(std::move(shape)) {
        data_.assign(numel_of(shape_), T(0));
    }

    TensorT(std::vector<uint32_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != numel_of(shape_))
            throw ShapeError("tensor data size does not match shape");
    }

    static size_t numel_of(const std::vector<uint32_t>& shape) {
        size_t n = 1;
        for (uint32_t d : shape) n *= static_cast<size_t>(d);
        return shape.empty() ? 0 : n;
    }

    const std::vector<uint32_t>& shape() const { return shape_; }
    size_t rank() const { return shape_.size(); }
    uint32_t dim(size_t i) const { return shape_.at(i); }
    size_t numel() const { return data_.size(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](size_t i) { return data_[i]; }
    const T& operator[](size_t i) const { return data_[i]; }

    // Rank-3 (H, W, C) access.
    T& operator()(size_t i, size_t j, size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    const T& operator()(size_t i, size_t j, size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    // Rank-2 (H, W) access.
    T& operator()(size_t i, size_t j) { return data_[i * shape_[1] + j]; }
    const T& operator()(size_t i, size_t j) const { return data_[i * shape_[1] + j]; }

    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    bool operator==(const TensorT& o) const = default;

  private:
    std::vector<uint32_t> shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <typename T>
bool same_shape(const TensorT<T>& a, const TensorT<T>& b) {
    return a.same_shape(b);
}

inline void require_shape(const Tensor& t, std::initializer_list<uint32_t> dims,
                          const std::string& what) {
    if (t.shape() != std::vector<uint32_t>(dims))
        throw ShapeError(what + ": unexpected tensor shape");
}

}  // namespace lta
