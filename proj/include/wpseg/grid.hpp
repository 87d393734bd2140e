#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wpseg/error.hpp"

namespace wpseg {

/// Row-major H x W raster.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int height, int width, T fill = T{})
        : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width, fill) {
        if (height < 0 || width < 0) throw ValidationError("negative grid dimensions");
    }

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    const T& operator()(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    bool contains(int y, int x) const noexcept { return y >= 0 && y < height_ && x >= 0 && x < width_; }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    bool same_shape(const Grid& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<T> data_;
};

/// Binary mask with values in {0,1}.
using BinaryMask = Grid<std::uint8_t>;

struct Image {
    std::string id;
    Grid<float> pixels;  // intensities in [0,1]

    int height() const noexcept { return pixels.height(); }
    int width() const noexcept { return pixels.width(); }
};

struct ImageDims {
    int height = 0;
    int width = 0;

    friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

inline ImageDims dims_of(const Image& img) { return {img.height(), img.width()}; }

template <typename T>
ImageDims dims_of(const Grid<T>& g) { return {g.height(), g.width()}; }

inline std::size_t count_foreground(const BinaryMask& m) {
    std::size_t n = 0;
    for (auto v : m.data()) n += v;
    return n;
}

inline void require_same_shape(const BinaryMask& a, const BinaryMask& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ValidationError(std::string(what) + ": mask dimensions differ (" +
                              std::to_string(a.height()) + "x" + std::to_string(a.width()) + " vs " +
                              std::to_string(b.height()) + "x" + std::to_string(b.width()) + ")");
    }
}

}  // namespace wpseg
