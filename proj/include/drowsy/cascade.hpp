#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "drowsy/raster.hpp"

namespace drowsy {

enum class FeatureKind { haar, lbp };

struct WeightedRect {
    Rect rect;
    double weight = 0.0;
};

/// Two or three weighted rectangles in base-window coordinates.
struct HaarFeature {
    std::vector<WeightedRect> rects;
};

/// Multi-block LBP: `block` is the top-left cell of a 3x3 grid of equal blocks.
struct LbpFeature {
    Rect block;
};

struct HaarWeak {
    HaarFeature feature;
    double threshold = 0.0;
    double leaf_pass = 0.0;  // normalised feature value < threshold
    double leaf_fail = 0.0;
};

struct LbpWeak {
    LbpFeature feature;
    std::array<std::uint32_t, 8> subset{};
    double leaf_in = 0.0;
    double leaf_out = 0.0;

    bool contains(unsigned code) const { return (subset[code >> 5] >> (code & 31)) & 1u; }
};

using WeakClassifier = std::variant<HaarWeak, LbpWeak>;

struct Stage {
    std::vector<WeakClassifier> weak;
    double threshold = 0.0;
};

struct Cascade {
    int base_w = 0;
    int base_h = 0;
    FeatureKind kind = FeatureKind::haar;
    std::vector<Stage> stages;
    std::string identity;  // source path or caller-supplied label
};

struct Detection {
    Rect rect;
    int neighbors = 0;
    double score = 0.0;
    bool operator==(const Detection&) const = default;
};

/// Parses the boosted-cascade XML layout (stageType BOOST, featureType HAAR or
/// LBP, stump weak classifiers). Throws LoadError naming the element path.
Cascade load_cascade(std::string_view xml);
Cascade load_cascade_file(const std::filesystem::path& path);

// Feature geometry at a given scale, relative to the window origin.
Rect scale_rect(const Rect& r, double scale);

/// 8-bit MB-LBP code of a 3x3 block grid whose top-left block is `block`
/// (absolute image coordinates). Neighbour blocks are visited clockwise from
/// the top-left one, the first neighbour landing in the most significant bit.
unsigned mb_lbp_code(const IntegralImage& ii, const Rect& block);

struct WindowVerdict {
    bool accept = false;
    std::optional<int> rejected_at;
    double last_stage_sum = 0.0;
};

/// Evaluates the cascade on one window. The window must lie inside the image
/// and share the base window's aspect ratio; the scale is window.w / base_w.
WindowVerdict eval_window(const Cascade& c, const IntegralImage& ii, const Rect& window);

/// Evaluates only stages [0, stage_count).
WindowVerdict eval_window(const Cascade& c, const IntegralImage& ii, const Rect& window, int stage_count);

struct DetectParams {
    double scale_factor = 1.1;
    int min_size = 0;   // smallest window width; 0 means the base width
    int max_size = 0;   // largest window width; 0 means unbounded
    double step = 1.0;  // scan stride in base-window pixels
    int min_neighbors = 3;
    double group_eps = 0.2;
};

/// Raw accepted windows over the whole scale ladder, in scan order (scale,
/// then y, then x). Parallel over rows; result identical to the serial scan.
std::vector<Detection> scan_windows(const Cascade& c, const IntegralImage& ii, const DetectParams& p);
std::vector<Detection> scan_windows_serial(const Cascade& c, const IntegralImage& ii, const DetectParams& p);

std::vector<Detection> detect_multiscale(const Cascade& c, const GrayImage& img, const DetectParams& p);
std::vector<Detection> detect_multiscale(const Cascade& c, const IntegralImage& ii, const DetectParams& p);

/// Clusters similar rectangles (union-find over pairwise similarity) and
/// returns member-average rectangles for clusters with >= min_neighbors members.
/// Output is ordered by x, then y, then width.
std::vector<Detection> group_detections(const std::vector<Rect>& raw, int min_neighbors, double eps = 0.2);
std::vector<Detection> group_detections(const std::vector<Detection>& raw, int min_neighbors, double eps = 0.2);

struct EyeRoiConfig {
    double left_x0 = 0.10;
    double left_x1 = 0.50;
    double right_x0 = 0.50;
    double right_x1 = 0.90;
    double y0 = 0.18;
    double y1 = 0.55;
};

struct EyeRois {
    Rect left;   // image-left
    Rect right;  // image-right
};

/// Eye search regions inside a face rectangle, clipped to the image when
/// image dimensions are given (pass 0 to skip clipping).
EyeRois eye_rois(const Rect& face, int image_w = 0, int image_h = 0, const EyeRoiConfig& cfg = {});

} // namespace drowsy
