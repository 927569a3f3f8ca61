#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "drowsy/error.hpp"

namespace drowsy {

struct Rect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    int right() const { return x + w; }
    int bottom() const { return y + h; }
    long long area() const { return static_cast<long long>(w) * h; }
    bool operator==(const Rect&) const = default;
};

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point2&) const = default;
};

/// True when r is non-empty and lies entirely inside a width x height raster.
inline bool fits(const Rect& r, int width, int height) {
    return r.w >= 1 && r.h >= 1 && r.x >= 0 && r.y >= 0 && r.right() <= width &&
           r.bottom() <= height;
}

/// Intersection of r with [0,width) x [0,height); may come back empty (w or h <= 0).
Rect clip(const Rect& r, int width, int height);

/// Row-major single-channel raster. GrayImage and FloatImage are the two
/// instantiations used throughout the library.
template <typename T>
class Image {
public:
    using value_type = T;

    Image() = default;
    Image(int width, int height, T fill = T{}) : width_(width), height_(height) {
        if (width < 1 || height < 1) {
            throw DimensionError("image dimensions must be positive");
        }
        data_.assign(static_cast<std::size_t>(width) * height, fill);
    }
    Image(int width, int height, std::vector<T> data)
        : width_(width), height_(height), data_(std::move(data)) {
        if (width < 1 || height < 1 ||
            data_.size() != static_cast<std::size_t>(width) * height) {
            throw DimensionError("image data length does not match dimensions");
        }
    }

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return data_.empty(); }
    std::size_t size() const { return data_.size(); }

    T& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    const T& at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    std::span<T> row(int y) { return {data_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)}; }
    std::span<const T> row(int y) const {
        return {data_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)};
    }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    bool operator==(const Image&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using GrayImage = Image<std::uint8_t>;
using FloatImage = Image<double>;

/// Summed-area tables of an 8-bit image: (width+1) x (height+1), with a zero
/// first row and column. 64-bit accumulation keeps every rectangle sum exact.
class IntegralImage {
public:
    IntegralImage() = default;
    explicit IntegralImage(const GrayImage& img);

    int width() const { return width_; }
    int height() const { return height_; }

    /// Sum of pixels in rows < i and columns < j.
    std::int64_t sum_at(int i, int j) const { return sums_[index(i, j)]; }
    std::int64_t sq_sum_at(int i, int j) const { return sq_sums_[index(i, j)]; }

    std::int64_t rect_sum(const Rect& r) const;
    std::int64_t rect_sq_sum(const Rect& r) const;

    // Unchecked variants for inner loops that have already validated geometry.
    std::int64_t rect_sum_unchecked(int x, int y, int w, int h) const {
        const std::size_t stride = static_cast<std::size_t>(width_) + 1;
        const std::int64_t* s = sums_.data();
        const std::size_t a = static_cast<std::size_t>(y) * stride + x;
        const std::size_t b = static_cast<std::size_t>(y + h) * stride + x;
        return s[b + w] - s[b] - s[a + w] + s[a];
    }
    std::int64_t rect_sq_sum_unchecked(int x, int y, int w, int h) const {
        const std::size_t stride = static_cast<std::size_t>(width_) + 1;
        const std::int64_t* s = sq_sums_.data();
        const std::size_t a = static_cast<std::size_t>(y) * stride + x;
        const std::size_t b = static_cast<std::size_t>(y + h) * stride + x;
        return s[b + w] - s[b] - s[a + w] + s[a];
    }

private:
    std::size_t index(int i, int j) const {
        return static_cast<std::size_t>(i) * (static_cast<std::size_t>(width_) + 1) + j;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::int64_t> sums_;
    std::vector<std::int64_t> sq_sums_;
};

IntegralImage integral(const GrayImage& img);
std::int64_t rect_sum(const IntegralImage& ii, const Rect& r);
std::int64_t rect_sq_sum(const IntegralImage& ii, const Rect& r);

// PNM I/O. Reads binary P5/P6 with maxval 255 (P6 converted to luma); writes P5.
GrayImage load_pnm(std::istream& in);
GrayImage load_pnm(const std::filesystem::path& path);
GrayImage decode_pnm(std::span<const std::uint8_t> bytes);
void save_pnm(std::ostream& out, const GrayImage& img);
void save_pnm(const std::filesystem::path& path, const GrayImage& img);

GrayImage crop(const GrayImage& img, const Rect& r);
FloatImage crop(const FloatImage& img, const Rect& r);

/// Bilinear resampling with half-pixel-centre alignment and edge clamping.
GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h);
FloatImage resize_bilinear(const FloatImage& img, int out_w, int out_h);

FloatImage to_float(const GrayImage& img, double scale = 1.0);

/// Rounds and saturates to [0, 255].
GrayImage to_gray(const FloatImage& img);

} // namespace drowsy
