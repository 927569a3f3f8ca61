#include "drowsy/eyeprep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace drowsy {

void PrepConfig::validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) {
        throw DomainError("prep: gamma must lie in (0, 1]");
    }
    if (!(sigma_inner > 0.0 && sigma_inner < sigma_outer)) {
        throw DomainError("prep: need 0 < sigma_inner < sigma_outer");
    }
    if (!(a > 0.0) || !(tau > 0.0)) {
        throw DomainError("prep: a and tau must be positive");
    }
}

FloatImage gamma_correct(const FloatImage& img, double gamma) {
    FloatImage out = img;
    for (double& v : out.data()) {
        if (v < 0.0) {
            throw DomainError("gamma_correct: negative intensity");
        }
        v = std::pow(v, gamma);
    }
    return out;
}

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * i * i / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        total += v;
    }
    for (double& v : k) {
        v /= total;
    }
    return k;
}

FloatImage gaussian_blur(const FloatImage& img, double sigma) {
    const auto k = gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    const int w = img.width();
    const int h = img.height();
    FloatImage tmp(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                acc += k[static_cast<std::size_t>(i + radius)] * img.at(std::clamp(x + i, 0, w - 1), y);
            }
            tmp.at(x, y) = acc;
        }
    }
    FloatImage out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                acc += k[static_cast<std::size_t>(i + radius)] * tmp.at(x, std::clamp(y + i, 0, h - 1));
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

FloatImage dog_filter(const FloatImage& img, double sigma_inner, double sigma_outer) {
    if (!(sigma_inner > 0.0 && sigma_outer > sigma_inner)) {
        throw DomainError("dog_filter: need sigma_outer > sigma_inner > 0");
    }
    const FloatImage inner = gaussian_blur(img, sigma_inner);
    const FloatImage outer = gaussian_blur(img, sigma_outer);
    FloatImage out(img.width(), img.height());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] = inner.data()[i] - outer.data()[i];
    }
    return out;
}

FloatImage contrast_equalize(const FloatImage& img, double a, double tau) {
    if (!(a > 0.0) || !(tau > 0.0)) {
        throw DomainError("contrast_equalize: a and tau must be positive");
    }
    const auto power_mean = [&](const FloatImage& im, double cap) {
        double acc = 0.0;
        for (double v : im.data()) {
            acc += std::pow(std::min(cap, std::abs(v)), a);
        }
        return std::pow(acc / static_cast<double>(im.size()), 1.0 / a);
    };
    const double inf = std::numeric_limits<double>::infinity();
    const double n1 = power_mean(img, inf);
    if (!(n1 > 0.0)) {
        return img;
    }
    FloatImage out = img;
    for (double& v : out.data()) {
        v /= n1;
    }
    const double n2 = power_mean(out, tau);
    if (n2 > 0.0) {
        for (double& v : out.data()) {
            v /= n2;
        }
    }
    for (double& v : out.data()) {
        v = tau * std::tanh(v / tau);
    }
    return out;
}

EyePatch preprocess(const FloatImage& raw_eye, const PrepConfig& cfg) {
    cfg.validate();
    if (raw_eye.width() < 8 || raw_eye.height() < 8) {
        throw DimensionError("preprocess: eye region must be at least 8x8");
    }
    FloatImage img = resize_bilinear(raw_eye, kPatchWidth, kPatchHeight);
    const auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
    const double low = *lo;
    const double range = *hi - *lo;
    for (double& v : img.data()) {
        v = range > 0.0 ? (v - low) / range : 0.0;
    }
    img = gamma_correct(img, cfg.gamma);
    img = dog_filter(img, cfg.sigma_inner, cfg.sigma_outer);
    img = contrast_equalize(img, cfg.a, cfg.tau);
    return {std::move(img)};
}

EyePatch preprocess(const GrayImage& raw_eye, const PrepConfig& cfg) {
    return preprocess(to_float(raw_eye), cfg);
}

} // namespace drowsy
