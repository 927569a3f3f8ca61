#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drowsy/eyeprep.hpp"

namespace drowsy {

enum class DescriptorKind { hog, lbp };

inline constexpr int kHogDim = 540;
inline constexpr int kLbpDim = 348;

std::string_view to_string(DescriptorKind k);
DescriptorKind parse_descriptor_kind(std::string_view s);
int descriptor_dim(DescriptorKind k);

struct FeatureVector {
    DescriptorKind kind = DescriptorKind::hog;
    std::vector<double> values;

    int dim() const { return static_cast<int>(values.size()); }
};

// HOG over a 48x32 patch: 8x8 cells, 2x2-cell blocks at a one-cell stride,
// 9 unsigned orientation bins, L2-hys block normalisation.
inline constexpr int kHogCell = 8;
inline constexpr int kHogBins = 9;
inline constexpr double kHogClip = 0.2;

/// Per-cell orientation histograms (cells row-major, kHogBins each) of an
/// image whose sides are multiples of the cell size.
std::vector<double> hog_cell_histograms(const FloatImage& img);

/// Distributes `magnitude` at unsigned angle `degrees` in [0,180) between the
/// two nearest bin centres (10, 30, ..., 170), wrapping across 0/180.
void hog_vote(std::span<double, kHogBins> hist, double degrees, double magnitude);

FeatureVector hog(const EyePatch& patch);

// Uniform LBP: 3x2 grid of 16x16 cells, 58 uniform-pattern bins per cell.
inline constexpr int kLbpCell = 16;
inline constexpr int kUniformBins = 58;
inline constexpr std::uint8_t kNonUniform = 0xFF;

/// Bin index (0..57) of each 8-bit code, or kNonUniform. Uniform codes are
/// numbered in increasing code order.
const std::array<std::uint8_t, 256>& uniform_table();

/// Number of circular 0/1 transitions in an 8-bit code.
int circular_transitions(unsigned code);

/// Affine min-max quantisation to 8 bits (all zeros for a constant image).
GrayImage quantize_minmax(const FloatImage& img);

FeatureVector lbp_hist(const EyePatch& patch);

FeatureVector extract(const EyePatch& patch, DescriptorKind kind);

/// Extracts descriptors for many patches in parallel; output order matches input.
std::vector<FeatureVector> extract_batch(const std::vector<EyePatch>& patches, DescriptorKind kind);

} // namespace drowsy
