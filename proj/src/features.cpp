#include "drowsy/features.hpp"

#include <algorithm>
#include <cmath>
#include <bit>
#include <numbers>

namespace drowsy {

std::string_view to_string(DescriptorKind k) { return k == DescriptorKind::hog ? "hog" : "lbp"; }

DescriptorKind parse_descriptor_kind(std::string_view s) {
    if (s == "hog") {
        return DescriptorKind::hog;
    }
    if (s == "lbp") {
        return DescriptorKind::lbp;
    }
    throw DomainError("unknown feature kind '" + std::string(s) + "' (expected hog or lbp)");
}

int descriptor_dim(DescriptorKind k) { return k == DescriptorKind::hog ? kHogDim : kLbpDim; }

namespace {

void require_patch(const EyePatch& patch, const char* who) {
    if (patch.pixels.width() != kPatchWidth || patch.pixels.height() != kPatchHeight) {
        throw DimensionError(std::string(who) + ": expected a 48x32 patch, got " +
                             std::to_string(patch.pixels.width()) + "x" + std::to_string(patch.pixels.height()));
    }
}

} // namespace

// ---------------------------------------------------------------------------
// HOG

void hog_vote(std::span<double, kHogBins> hist, double degrees, double magnitude) {
    constexpr double width = 180.0 / kHogBins;
    const double pos = degrees / width - 0.5;
    const double lower = std::floor(pos);
    const double frac = pos - lower;
    const int b0 = (static_cast<int>(lower) % kHogBins + kHogBins) % kHogBins;
    const int b1 = (b0 + 1) % kHogBins;
    hist[static_cast<std::size_t>(b0)] += magnitude * (1.0 - frac);
    hist[static_cast<std::size_t>(b1)] += magnitude * frac;
}

std::vector<double> hog_cell_histograms(const FloatImage& img) {
    const int w = img.width();
    const int h = img.height();
    if (w % kHogCell != 0 || h % kHogCell != 0) {
        throw DimensionError("hog: image sides must be multiples of the cell size");
    }
    const int cells_x = w / kHogCell;
    std::vector<double> hist(static_cast<std::size_t>(cells_x * (h / kHogCell) * kHogBins), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gx = img.at(std::min(x + 1, w - 1), y) - img.at(std::max(x - 1, 0), y);
            const double gy = img.at(x, std::min(y + 1, h - 1)) - img.at(x, std::max(y - 1, 0));
            const double mag = std::sqrt(gx * gx + gy * gy);
            if (mag == 0.0) {
                continue;
            }
            double deg = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
            if (deg < 0.0) {
                deg += 180.0;
            }
            if (deg >= 180.0) {
                deg -= 180.0;
            }
            const std::size_t cell = static_cast<std::size_t>((y / kHogCell) * cells_x + x / kHogCell);
            hog_vote(std::span<double, kHogBins>(hist.data() + cell * kHogBins, kHogBins), deg, mag);
        }
    }
    return hist;
}

FeatureVector hog(const EyePatch& patch) {
    require_patch(patch, "hog");
    const auto cells = hog_cell_histograms(patch.pixels);
    constexpr int cells_x = kPatchWidth / kHogCell;
    constexpr int cells_y = kPatchHeight / kHogCell;
    FeatureVector out{DescriptorKind::hog, {}};
    out.values.reserve(kHogDim);
    const auto normalize = [](std::span<double> v) {
        double norm = 0.0;
        for (double x : v) {
            norm += x * x;
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            return;
        }
        for (double& x : v) {
            x = std::min(x / norm, kHogClip);
        }
        double renorm = 0.0;
        for (double x : v) {
            renorm += x * x;
        }
        renorm = std::sqrt(renorm);
        for (double& x : v) {
            x /= renorm;
        }
    };
    for (int by = 0; by + 1 < cells_y; ++by) {
        for (int bx = 0; bx + 1 < cells_x; ++bx) {
            std::array<double, 4 * kHogBins> block{};
            int k = 0;
            for (int cy = by; cy <= by + 1; ++cy) {
                for (int cx = bx; cx <= bx + 1; ++cx) {
                    const auto* src = cells.data() + static_cast<std::size_t>((cy * cells_x + cx) * kHogBins);
                    std::copy(src, src + kHogBins, block.begin() + k * kHogBins);
                    ++k;
                }
            }
            normalize(block);
            out.values.insert(out.values.end(), block.begin(), block.end());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// LBP

int circular_transitions(unsigned code) {
    const unsigned rotated = ((code << 1) | (code >> 7)) & 0xFFu;
    return std::popcount((code ^ rotated) & 0xFFu);
}

const std::array<std::uint8_t, 256>& uniform_table() {
    static const std::array<std::uint8_t, 256> table = [] {
        std::array<std::uint8_t, 256> t{};
        std::uint8_t next = 0;
        for (unsigned c = 0; c < 256; ++c) {
            t[c] = circular_transitions(c) <= 2 ? next++ : kNonUniform;
        }
        return t;
    }();
    return table;
}

GrayImage quantize_minmax(const FloatImage& img) {
    const auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
    GrayImage out(img.width(), img.height(), 0);
    const double range = *hi - *lo;
    if (!(range > 0.0)) {
        return out;
    }
    for (std::size_t i = 0; i < img.size(); ++i) {
        out.data()[i] = static_cast<std::uint8_t>(std::lround((img.data()[i] - *lo) / range * 255.0));
    }
    return out;
}

FeatureVector lbp_hist(const EyePatch& patch) {
    require_patch(patch, "lbp_hist");
    const GrayImage q = quantize_minmax(patch.pixels);
    const auto& table = uniform_table();
    FeatureVector out{DescriptorKind::lbp, std::vector<double>(kLbpDim, 0.0)};
    constexpr int cells_x = kPatchWidth / kLbpCell;
    constexpr int cells_y = kPatchHeight / kLbpCell;
    // Neighbour offsets clockwise from the top-left, most significant bit first.
    constexpr std::array<std::array<int, 2>, 8> ring{{{-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}}};
    for (int cy = 0; cy < cells_y; ++cy) {
        for (int cx = 0; cx < cells_x; ++cx) {
            double* hist = out.values.data() + static_cast<std::size_t>((cy * cells_x + cx) * kUniformBins);
            double count = 0.0;
            for (int j = 1; j < kLbpCell - 1; ++j) {
                for (int i = 1; i < kLbpCell - 1; ++i) {
                    const int x = cx * kLbpCell + i;
                    const int y = cy * kLbpCell + j;
                    const auto c = q.at(x, y);
                    unsigned code = 0;
                    for (const auto& [dx, dy] : ring) {
                        code = (code << 1) | (q.at(x + dx, y + dy) >= c ? 1u : 0u);
                    }
                    const auto bin = table[code];
                    if (bin != kNonUniform) {
                        hist[bin] += 1.0;
                        count += 1.0;
                    }
                }
            }
            if (count > 0.0) {
                for (int b = 0; b < kUniformBins; ++b) {
                    hist[b] /= count;
                }
            }
        }
    }
    return out;
}

FeatureVector extract(const EyePatch& patch, DescriptorKind kind) {
    return kind == DescriptorKind::hog ? hog(patch) : lbp_hist(patch);
}

std::vector<FeatureVector> extract_batch(const std::vector<EyePatch>& patches, DescriptorKind kind) {
    std::vector<FeatureVector> out(patches.size());
    const auto n = static_cast<std::ptrdiff_t>(patches.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = extract(patches[static_cast<std::size_t>(i)], kind);
    }
    return out;
}

} // namespace drowsy
