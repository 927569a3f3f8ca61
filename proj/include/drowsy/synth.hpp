#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "drowsy/raster.hpp"
#include "drowsy/tracker.hpp"
#include "drowsy/vigilance.hpp"

namespace drowsy::synth {

/// Inclusive frame interval.
struct FrameRange {
    int start = 0;
    int end = 0;
    bool contains(int k) const { return k >= start && k <= end; }
};

struct Occlusion {
    EyeSide eye = EyeSide::left;
    FrameRange frames;
};

struct SceneSpec {
    int frames = 1;
    double fps = 30.0;
    int width = 640;
    int height = 480;

    bool face = true;
    double face_x = 260.0;     // top-left of the face square at frame 0
    double face_y = 180.0;
    double face_size = 120.0;
    double vx = 0.0;           // pixels per frame
    double vy = 0.0;

    std::vector<FrameRange> blinks;     // both eyes closed
    std::vector<Occlusion> occlusions;  // one eye replaced by skin
    std::vector<FrameRange> vanish;     // both eyes replaced by skin

    double noise = 0.0;  // Gaussian pixel noise sigma
    std::uint64_t seed = 1;
};

struct EyeTruth {
    Point2 center;
    EyeReading state = EyeReading::open;  // absent when occluded
};

struct FrameTruth {
    int frame = 0;
    double t = 0.0;
    std::optional<Rect> face;
    EyeTruth left;
    EyeTruth right;
};

struct Frame {
    GrayImage image;
    FrameTruth truth;
};

/// Geometry of the synthetic face, as fractions of the face square.
struct FaceLayout {
    static constexpr double eye_x_left = 0.30;
    static constexpr double eye_x_right = 0.70;
    static constexpr double eye_y = 0.40;
    static constexpr double eye_w = 0.25;  // eye box (detector window) width, brow included
    static constexpr double brow_dy = 0.075;
    static constexpr double eye_h = eye_w * 2.0 / 3.0;
};

Frame render_frame(const SceneSpec& spec, int k);

/// Writes frame_NNNNN.pgm files and truth.jsonl into `dir`.
void write_sequence(const SceneSpec& spec, const std::filesystem::path& dir);

SceneSpec parse_scene_spec(const std::string& json_text);

struct EyeDatasetSpec {
    int count = 1000;  // per class
    double noise = 6.0;
    std::uint64_t seed = 1;
};

/// One eye crop comparable to a runtime tracking crop (3:2 box around the eye).
GrayImage render_eye_sample(bool closed, std::uint64_t seed, double noise);

/// Writes open/ and closed/ subdirectories of PGM eye crops into `dir`.
void write_eye_dataset(const EyeDatasetSpec& spec, const std::filesystem::path& dir);

/// Dispatches on the "mode" key: "sequence" (default) or "eyes".
void run_spec(const std::string& json_text, const std::filesystem::path& dir);

} // namespace drowsy::synth
