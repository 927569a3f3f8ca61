#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "drowsy/raster.hpp"

namespace drowsy {

struct Template {
    GrayImage patch;
    int captured_at = 0;  // frame index

    int w() const { return patch.width(); }
    int h() const { return patch.height(); }
};

/// Throws DegenerateTemplateError for a constant patch.
Template make_template(GrayImage patch, int captured_at);

enum class EyeSide { left, right };

/// FIFO pool of the most recently detector-confirmed templates of one eye.
class TemplatePool {
public:
    static constexpr std::size_t kMinCapacity = 10;
    static constexpr std::size_t kMaxCapacity = 20;

    explicit TemplatePool(EyeSide side = EyeSide::left, std::size_t capacity = 16);

    EyeSide side() const { return side_; }
    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return templates_.size(); }
    bool empty() const { return templates_.empty(); }
    const std::deque<Template>& templates() const { return templates_; }

    /// Appends `fresh`, evicting the oldest entry when over capacity.
    /// Returns false (pool unchanged) if the patch is constant.
    bool push(Template fresh);

    void clear() { templates_.clear(); }

private:
    EyeSide side_;
    std::size_t capacity_;
    std::deque<Template> templates_;
};

TemplatePool update_pool(TemplatePool pool, Template fresh);

struct MatchResult {
    Point2 center;    // image coordinates of the matched template centre
    Rect rect;        // matched placement
    double score = 0.0;
};

// Zero-mean normalised cross-correlation of `patch` at every placement inside
// `roi`. Returns the best placement, ties broken by smallest y then smallest x.
// Windows with zero variance score 0. The parallel and serial variants return
// bit-identical results.
template <typename T>
MatchResult ncc_match(const Image<T>& img, const Rect& roi, const Image<T>& patch);
template <typename T>
MatchResult ncc_match_serial(const Image<T>& img, const Rect& roi, const Image<T>& patch);

MatchResult ncc_match(const GrayImage& img, const Rect& roi, const Template& t);

/// Full NCC response surface (placements of `patch` inside `roi`), row-major.
template <typename T>
FloatImage ncc_surface(const Image<T>& img, const Rect& roi, const Image<T>& patch);

struct TrackConfig {
    double roi_margin = 2.0;
    double score_threshold = 0.5;
};

/// Matches every template of the pool inside a ROI centred on the prediction
/// and averages their argmax centres. std::nullopt means tracking is lost.
std::optional<MatchResult> track_eye(const GrayImage& img, const TemplatePool& pool, Point2 predicted_center,
                                     const TrackConfig& cfg = {});

/// Search ROI used by track_eye (before clipping checks).
Rect tracking_roi(const TemplatePool& pool, Point2 predicted_center, double roi_margin, int image_w, int image_h);

struct PairGeometry {
    double min_distance = 0.25;  // fractions of face width
    double max_distance = 0.70;
    double max_dy = 0.35;        // fraction of inter-ocular distance
};

bool verify_pair(Point2 left, Point2 right, double face_w, const PairGeometry& g = {});

/// Constant-velocity filter over [x, y, vx, vy] with a one-frame time step.
struct KalmanTrack {
    Eigen::Vector4d state = Eigen::Vector4d::Zero();
    Eigen::Matrix4d covariance = Eigen::Matrix4d::Identity();
    double q = 0.01;
    double r = 1.0;

    static KalmanTrack start(Point2 at, double q = 0.01, double r = 1.0, double velocity_var = 10.0);

    Point2 position() const { return {state(0), state(1)}; }
    Point2 velocity() const { return {state(2), state(3)}; }

    void predict();
    /// Returns false (no change) for a non-finite measurement.
    bool update(Point2 z);
};

/// One predict (+ update when a finite measurement is given) cycle.
std::pair<KalmanTrack, Point2> kalman_step(KalmanTrack track, std::optional<Point2> measurement);

enum class TrackStatus { detected, tracked, lost };

struct EyeTrack {
    explicit EyeTrack(EyeSide side = EyeSide::left) : pool(side) {}

    TemplatePool pool;
    KalmanTrack filter;
    Rect last_rect;
    bool active = false;  // has a filter initialised from a detection
};

struct TrackState {
    EyeTrack left{EyeSide::left};
    EyeTrack right{EyeSide::right};
    TrackStatus status = TrackStatus::lost;
    double face_w = 0.0;  // width of the most recent detected face
};

struct TrackerConfig {
    TrackConfig match;
    PairGeometry pair;
    std::size_t pool_capacity = 16;
    double kalman_q = 0.01;
    double kalman_r = 1.0;
};

struct EyeObservation {
    Point2 center;      // smoothed
    Rect rect;          // template-sized box around the smoothed centre
    double match_score = 0.0;
};

struct StepResult {
    std::optional<EyeObservation> left;
    std::optional<EyeObservation> right;
    TrackStatus status = TrackStatus::lost;
};

/// Seeds an eye from a detector-confirmed rectangle: captures a template and
/// restarts the filter at the rectangle centre.
void seed_eye(EyeTrack& eye, const GrayImage& img, const Rect& detected, int frame, const TrackerConfig& cfg);

/// Tracks both eyes for one frame. On loss the state's status becomes lost
/// and both eyes are reported absent.
StepResult step_tracking(TrackState& state, const GrayImage& img, const TrackerConfig& cfg = {});

} // namespace drowsy
