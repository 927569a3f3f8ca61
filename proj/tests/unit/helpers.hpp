#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "drowsy/raster.hpp"

namespace testutil {

inline drowsy::GrayImage random_gray(std::mt19937_64& rng, int w, int h, int lo = 0, int hi = 255) {
    std::uniform_int_distribution<int> d(lo, hi);
    drowsy::GrayImage img(w, h);
    for (auto& v : img.data()) {
        v = static_cast<std::uint8_t>(d(rng));
    }
    return img;
}

inline drowsy::FloatImage random_float(std::mt19937_64& rng, int w, int h, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    drowsy::FloatImage img(w, h);
    for (auto& v : img.data()) {
        v = d(rng);
    }
    return img;
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("drowsy_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace testutil
