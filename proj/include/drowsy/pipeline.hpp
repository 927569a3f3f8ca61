#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "drowsy/cascade.hpp"
#include "drowsy/classify.hpp"
#include "drowsy/eyeprep.hpp"
#include "drowsy/features.hpp"
#include "drowsy/tracker.hpp"
#include "drowsy/vigilance.hpp"

namespace drowsy {

struct PipelineConfig {
    std::filesystem::path face_cascade;  // LBP
    std::filesystem::path eye_cascade;   // Haar
    std::filesystem::path model;
    double fps = 30.0;
    DescriptorKind features = DescriptorKind::hog;

    DetectParams face_detect;
    DetectParams eye_detect;
    EyeRoiConfig eye_regions;
    TrackerConfig tracker;
    PrepConfig prep;
    double svm_threshold = 0.0;
    VigilanceConfig vigilance;

    std::set<int> force_lost_frames;  // fault injection: tracking dropped on these frames
};

/// Parses a JSON config. Unknown keys are rejected. Relative paths are
/// resolved against `base_dir`.
PipelineConfig parse_pipeline_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

struct EyeReport {
    Point2 center;
    Rect rect;
    std::optional<double> match_score;  // absent on detection frames
    EyeState state = EyeState::open;
    double svm_score = 0.0;
};

struct FrameReport {
    int frame = 0;
    double t = 0.0;
    std::optional<Rect> face;
    std::optional<EyeReport> left;
    std::optional<EyeReport> right;
    TrackStatus status = TrackStatus::lost;
    FrameVerdict verdict;
};

std::string_view to_string(TrackStatus s);

/// One JSON object, no trailing newline. Absent values are explicit nulls.
std::string to_jsonl(const FrameReport& r);

enum class PipelineStage { detect, track, preprocess, features, classify };
inline constexpr int kStageCount = 5;

struct RunSummary {
    int frames = 0;
    int detected = 0;
    int tracked = 0;
    int lost = 0;
    int alarms_raised = 0;
    int alarms_released = 0;
    double stage_seconds[kStageCount] = {};
    int stage_calls[kStageCount] = {};
    double total_seconds = 0.0;
    double tracked_seconds = 0.0;
    std::string face_cascade;  // identities of the loaded detectors and model
    std::string eye_cascade;
    std::string model;

    double throughput_fps() const { return total_seconds > 0.0 ? frames / total_seconds : 0.0; }
    double tracked_fps() const { return tracked_seconds > 0.0 ? tracked / tracked_seconds : 0.0; }
};

std::string to_jsonl(const RunSummary& s);

class Pipeline {
public:
    Pipeline(PipelineConfig cfg, Cascade face, Cascade eye, SvmModel model);

    /// Loads the cascades and model named by the config.
    static Pipeline from_config(const PipelineConfig& cfg);

    FrameReport process(const GrayImage& frame);

    const RunSummary& summary() const { return summary_; }
    const PipelineConfig& config() const { return cfg_; }
    const TrackState& track_state() const { return track_; }

private:
    FrameReport detect_frame(const GrayImage& frame, const IntegralImage& ii);
    std::optional<EyeReport> classify_eye(const GrayImage& frame, Point2 center, const Rect& rect,
                                          std::optional<double> match_score);

    PipelineConfig cfg_;
    Cascade face_;
    Cascade eye_;
    SvmModel model_;
    TrackState track_;
    VigilanceState vigilance_;
    RunSummary summary_;
    int next_frame_ = 0;
};

/// Sorted .pgm/.ppm/.pnm files of a directory.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

/// Runs the pipeline over a frame directory, writing one line per frame and a
/// final summary line.
RunSummary run_sequence(const PipelineConfig& cfg, const std::filesystem::path& frames_dir, std::ostream& out);

/// Loads, preprocesses and featurises every image of a directory.
std::vector<FeatureVector> featurize_dir(const std::filesystem::path& dir, DescriptorKind kind,
                                         const PrepConfig& prep = {});

struct TrainReport {
    SvmModel model;
    int open_count = 0;
    int closed_count = 0;
    double training_accuracy = 0.0;
};

TrainReport train_from_dirs(const std::filesystem::path& open_dir, const std::filesystem::path& closed_dir,
                            DescriptorKind kind, const TrainParams& params, const PrepConfig& prep = {});

struct EvalReport {
    RocCurve roc;
    std::vector<double> scores;
    std::vector<bool> closed;
};

/// Throws DimensionError when the model's dimension differs from its kind's
/// descriptor dimension.
EvalReport evaluate_dirs(const SvmModel& model, const std::filesystem::path& open_dir,
                         const std::filesystem::path& closed_dir, const PrepConfig& prep = {});

void write_roc_csv(std::ostream& out, const RocCurve& roc);

} // namespace drowsy
