#include "drowsy/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

namespace drowsy {

Rect clip(const Rect& r, int width, int height) {
    const int x0 = std::max(r.x, 0);
    const int y0 = std::max(r.y, 0);
    const int x1 = std::min(r.right(), width);
    const int y1 = std::min(r.bottom(), height);
    return {x0, y0, x1 - x0, y1 - y0};
}

namespace {

std::string describe(const Rect& r) {
    std::ostringstream os;
    os << "(" << r.x << "," << r.y << "," << r.w << "," << r.h << ")";
    return os.str();
}

} // namespace

IntegralImage::IntegralImage(const GrayImage& img) : width_(img.width()), height_(img.height()) {
    const std::size_t stride = static_cast<std::size_t>(width_) + 1;
    sums_.assign(stride * (static_cast<std::size_t>(height_) + 1), 0);
    sq_sums_.assign(sums_.size(), 0);
    for (int y = 0; y < height_; ++y) {
        std::int64_t row_sum = 0;
        std::int64_t row_sq = 0;
        const auto src = img.row(y);
        std::int64_t* above = sums_.data() + static_cast<std::size_t>(y) * stride;
        std::int64_t* cur = above + stride;
        std::int64_t* above_sq = sq_sums_.data() + static_cast<std::size_t>(y) * stride;
        std::int64_t* cur_sq = above_sq + stride;
        for (int x = 0; x < width_; ++x) {
            const std::int64_t v = src[x];
            row_sum += v;
            row_sq += v * v;
            cur[x + 1] = above[x + 1] + row_sum;
            cur_sq[x + 1] = above_sq[x + 1] + row_sq;
        }
    }
}

std::int64_t IntegralImage::rect_sum(const Rect& r) const {
    if (!fits(r, width_, height_)) {
        throw BoundsError("rect " + describe(r) + " outside integral image");
    }
    return rect_sum_unchecked(r.x, r.y, r.w, r.h);
}

std::int64_t IntegralImage::rect_sq_sum(const Rect& r) const {
    if (!fits(r, width_, height_)) {
        throw BoundsError("rect " + describe(r) + " outside integral image");
    }
    return rect_sq_sum_unchecked(r.x, r.y, r.w, r.h);
}

IntegralImage integral(const GrayImage& img) { return IntegralImage(img); }
std::int64_t rect_sum(const IntegralImage& ii, const Rect& r) { return ii.rect_sum(r); }
std::int64_t rect_sq_sum(const IntegralImage& ii, const Rect& r) { return ii.rect_sq_sum(r); }

// ---------------------------------------------------------------------------
// PNM

namespace {

class PnmReader {
public:
    explicit PnmReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    [[noreturn]] void fail(const std::string& what) const {
        throw FormatError("pnm: " + what + " at byte offset " + std::to_string(pos_));
    }

    static bool is_space(std::uint8_t c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
    }

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const auto c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') {
                    ++pos_;
                }
            } else if (is_space(c)) {
                ++pos_;
            } else {
                return;
            }
        }
    }

    long read_uint(const char* field) {
        skip_space_and_comments();
        if (pos_ >= bytes_.size()) {
            fail(std::string("truncated header before ") + field);
        }
        if (bytes_[pos_] < '0' || bytes_[pos_] > '9') {
            fail(std::string("expected decimal ") + field);
        }
        long v = 0;
        while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
            v = v * 10 + (bytes_[pos_] - '0');
            if (v > (1L << 30)) {
                fail(std::string(field) + " too large");
            }
            ++pos_;
        }
        return v;
    }

    GrayImage read() {
        if (bytes_.size() < 2 || bytes_[0] != 'P' || (bytes_[1] != '5' && bytes_[1] != '6')) {
            fail("bad magic (expected P5 or P6)");
        }
        const bool color = bytes_[1] == '6';
        pos_ = 2;
        if (pos_ < bytes_.size() && !is_space(bytes_[pos_]) && bytes_[pos_] != '#') {
            fail("bad magic (expected whitespace after P5/P6)");
        }
        const long w = read_uint("width");
        const long h = read_uint("height");
        const std::size_t maxval_at = pos_;
        const long maxval = read_uint("maxval");
        if (w < 1 || h < 1) {
            fail("zero image dimension");
        }
        if (maxval != 255) {
            pos_ = maxval_at;
            fail("unsupported maxval " + std::to_string(maxval) + " (only 255)");
        }
        if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) {
            fail("missing whitespace after maxval");
        }
        ++pos_;
        const std::size_t channels = color ? 3 : 1;
        const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * channels;
        if (bytes_.size() - pos_ < need) {
            pos_ = bytes_.size();
            fail("truncated payload (need " + std::to_string(need) + " bytes)");
        }
        std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h);
        const std::uint8_t* p = bytes_.data() + pos_;
        if (!color) {
            std::copy(p, p + data.size(), data.begin());
        } else {
            for (std::size_t i = 0; i < data.size(); ++i) {
                const double luma = 0.299 * p[3 * i] + 0.587 * p[3 * i + 1] + 0.114 * p[3 * i + 2];
                data[i] = static_cast<std::uint8_t>(std::min(255.0, std::round(luma)));
            }
        }
        return GrayImage(static_cast<int>(w), static_cast<int>(h), std::move(data));
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace

GrayImage decode_pnm(std::span<const std::uint8_t> bytes) { return PnmReader(bytes).read(); }

GrayImage load_pnm(std::istream& in) {
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_pnm(bytes);
}

GrayImage load_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("pnm: cannot open " + path.string());
    }
    try {
        return load_pnm(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_pnm(std::ostream& out, const GrayImage& img) {
    out << "P5\n" << img.width() << " " << img.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data().data()), static_cast<std::streamsize>(img.size()));
}

void save_pnm(const std::filesystem::path& path, const GrayImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("pnm: cannot write " + path.string());
    }
    save_pnm(out, img);
}

// ---------------------------------------------------------------------------
// Geometry

namespace {

template <typename T>
Image<T> crop_impl(const Image<T>& img, const Rect& r) {
    if (!fits(r, img.width(), img.height())) {
        throw BoundsError("crop rect " + describe(r) + " outside " + std::to_string(img.width()) + "x" +
                          std::to_string(img.height()) + " image");
    }
    Image<T> out(r.w, r.h);
    for (int y = 0; y < r.h; ++y) {
        const auto src = img.row(r.y + y).subspan(static_cast<std::size_t>(r.x), static_cast<std::size_t>(r.w));
        std::copy(src.begin(), src.end(), out.row(y).begin());
    }
    return out;
}

struct Tap {
    int i0;
    int i1;
    double f;
};

std::vector<Tap> bilinear_taps(int in, int out) {
    std::vector<Tap> taps(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
        double s = (i + 0.5) * scale - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(in - 1));
        const int i0 = static_cast<int>(std::floor(s));
        const int i1 = std::min(i0 + 1, in - 1);
        taps[static_cast<std::size_t>(i)] = {i0, i1, s - i0};
    }
    return taps;
}

template <typename T, typename Store>
Image<T> resize_impl(const Image<T>& img, int out_w, int out_h, Store store) {
    if (out_w < 1 || out_h < 1) {
        throw DimensionError("resize target must be at least 1x1");
    }
    if (out_w == img.width() && out_h == img.height()) {
        return img;
    }
    const auto xt = bilinear_taps(img.width(), out_w);
    const auto yt = bilinear_taps(img.height(), out_h);
    Image<T> out(out_w, out_h);
    for (int y = 0; y < out_h; ++y) {
        const Tap& ty = yt[static_cast<std::size_t>(y)];
        const auto r0 = img.row(ty.i0);
        const auto r1 = img.row(ty.i1);
        auto dst = out.row(y);
        for (int x = 0; x < out_w; ++x) {
            const Tap& tx = xt[static_cast<std::size_t>(x)];
            const double top = r0[tx.i0] + tx.f * (static_cast<double>(r0[tx.i1]) - r0[tx.i0]);
            const double bot = r1[tx.i0] + tx.f * (static_cast<double>(r1[tx.i1]) - r1[tx.i0]);
            dst[x] = store(top + ty.f * (bot - top));
        }
    }
    return out;
}

} // namespace

GrayImage crop(const GrayImage& img, const Rect& r) { return crop_impl(img, r); }
FloatImage crop(const FloatImage& img, const Rect& r) { return crop_impl(img, r); }

GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h) {
    return resize_impl(img, out_w, out_h, [](double v) {
        return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
    });
}

FloatImage resize_bilinear(const FloatImage& img, int out_w, int out_h) {
    return resize_impl(img, out_w, out_h, [](double v) { return v; });
}

FloatImage to_float(const GrayImage& img, double scale) {
    FloatImage out(img.width(), img.height());
    std::transform(img.data().begin(), img.data().end(), out.data().begin(),
                   [scale](std::uint8_t v) { return v * scale; });
    return out;
}

GrayImage to_gray(const FloatImage& img) {
    GrayImage out(img.width(), img.height());
    std::transform(img.data().begin(), img.data().end(), out.data().begin(), [](double v) {
        return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
    });
    return out;
}

} // namespace drowsy
