#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "wpseg/error.hpp"

namespace wpseg {

// 64-byte aligned storage. Vectorized reductions peel by address, so
// alignment that varied with heap history would make sums irreproducible.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense NCHW tensor.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    Tensor(int n, int c, int h, int w, T fill = T{})
        : shape_{n, c, h, w}, data_(static_cast<std::size_t>(n) * c * h * w, fill) {}

    int n() const noexcept { return shape_[0]; }
    int c() const noexcept { return shape_[1]; }
    int h() const noexcept { return shape_[2]; }
    int w() const noexcept { return shape_[3]; }
    const std::array<int, 4>& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t plane_size() const noexcept { return static_cast<std::size_t>(shape_[2]) * shape_[3]; }

    bool same_shape(const Tensor& o) const noexcept { return shape_ == o.shape_; }

    void resize(int n, int c, int h, int w) {
        shape_ = {n, c, h, w};
        data_.assign(static_cast<std::size_t>(n) * c * h * w, T{});
    }
    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> span() noexcept { return data_; }
    std::span<const T> span() const noexcept { return data_; }

    T* plane(int ni, int ci) noexcept { return data_.data() + (static_cast<std::size_t>(ni) * shape_[1] + ci) * plane_size(); }
    const T* plane(int ni, int ci) const noexcept {
        return data_.data() + (static_cast<std::size_t>(ni) * shape_[1] + ci) * plane_size();
    }

    T& operator()(int ni, int ci, int y, int x) noexcept { return plane(ni, ci)[static_cast<std::size_t>(y) * shape_[3] + x]; }
    const T& operator()(int ni, int ci, int y, int x) const noexcept {
        return plane(ni, ci)[static_cast<std::size_t>(y) * shape_[3] + x];
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_[0], shape_[1], shape_[2], shape_[3]);
        for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
        return out;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::array<int, 4> shape_{0, 0, 0, 0};
    AlignedVector<T> data_;
};

template <typename T>
void require_shape(const Tensor<T>& t, int n, int c, int h, int w, const char* what) {
    if (t.n() != n || t.c() != c || t.h() != h || t.w() != w) {
        throw ShapeError(std::string(what) + ": unexpected tensor shape");
    }
}

}  // namespace wpseg
