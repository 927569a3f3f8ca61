#include "drowsy/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace drowsy {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!j.is_object()) {
        throw ConfigError(where + ": expected a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (const auto it = j.find(key); it != j.end()) {
        out = it->get<T>();
    }
}

void read_detect(const json& j, DetectParams& p, const std::string& where) {
    check_keys(j, {"scale_factor", "min_size", "max_size", "step", "min_neighbors", "group_eps"}, where);
    read(j, "scale_factor", p.scale_factor);
    read(j, "min_size", p.min_size);
    read(j, "max_size", p.max_size);
    read(j, "step", p.step);
    read(j, "min_neighbors", p.min_neighbors);
    read(j, "group_eps", p.group_eps);
    if (!(p.scale_factor > 1.0) || !(p.step > 0.0) || p.min_neighbors < 1 || p.group_eps < 0.0) {
        throw ConfigError(where + ": need scale_factor > 1, step > 0, min_neighbors >= 1, group_eps >= 0");
    }
}

std::filesystem::path resolve(const json& j, const char* key, const std::filesystem::path& base) {
    const auto it = j.find(key);
    if (it == j.end()) {
        throw ConfigError(std::string("config: missing '") + key + "'");
    }
    std::filesystem::path p = it->get<std::string>();
    if (p.is_relative() && !base.empty()) {
        p = base / p;
    }
    if (!std::filesystem::exists(p)) {
        throw ConfigError(std::string("config: ") + key + " '" + p.string() + "' does not exist");
    }
    return p;
}

} // namespace

PipelineConfig parse_pipeline_config(const std::string& json_text, const std::filesystem::path& base_dir) {
    PipelineConfig c;
    try {
        const json j = json::parse(json_text);
        check_keys(j,
                   {"face_cascade", "eye_cascade", "model", "fps", "features", "face_detection", "eye_detection",
                    "eye_regions", "tracker", "preprocess", "classifier", "vigilance", "force_lost_frames"},
                   "config");
        c.face_cascade = resolve(j, "face_cascade", base_dir);
        c.eye_cascade = resolve(j, "eye_cascade", base_dir);
        c.model = resolve(j, "model", base_dir);
        read(j, "fps", c.fps);
        if (!(c.fps > 0.0) || !std::isfinite(c.fps)) {
            throw ConfigError("config: fps must be positive");
        }
        if (const auto it = j.find("features"); it != j.end()) {
            c.features = parse_descriptor_kind(it->get<std::string>());
        }
        if (const auto it = j.find("face_detection"); it != j.end()) {
            read_detect(*it, c.face_detect, "face_detection");
        }
        if (const auto it = j.find("eye_detection"); it != j.end()) {
            read_detect(*it, c.eye_detect, "eye_detection");
        }
        if (const auto it = j.find("eye_regions"); it != j.end()) {
            check_keys(*it, {"left_x0", "left_x1", "right_x0", "right_x1", "y0", "y1"}, "eye_regions");
            read(*it, "left_x0", c.eye_regions.left_x0);
            read(*it, "left_x1", c.eye_regions.left_x1);
            read(*it, "right_x0", c.eye_regions.right_x0);
            read(*it, "right_x1", c.eye_regions.right_x1);
            read(*it, "y0", c.eye_regions.y0);
            read(*it, "y1", c.eye_regions.y1);
        }
        if (const auto it = j.find("tracker"); it != j.end()) {
            check_keys(*it, {"roi_margin", "score_threshold", "pool_capacity", "kalman_q", "kalman_r", "pair"},
                       "tracker");
            auto& t = c.tracker;
            read(*it, "roi_margin", t.match.roi_margin);
            read(*it, "score_threshold", t.match.score_threshold);
            read(*it, "pool_capacity", t.pool_capacity);
            read(*it, "kalman_q", t.kalman_q);
            read(*it, "kalman_r", t.kalman_r);
            if (const auto p = it->find("pair"); p != it->end()) {
                check_keys(*p, {"min_distance", "max_distance", "max_dy"}, "tracker.pair");
                read(*p, "min_distance", t.pair.min_distance);
                read(*p, "max_distance", t.pair.max_distance);
                read(*p, "max_dy", t.pair.max_dy);
            }
            if (t.pool_capacity < TemplatePool::kMinCapacity || t.pool_capacity > TemplatePool::kMaxCapacity) {
                throw ConfigError("tracker: pool_capacity must be in [10, 20]");
            }
            if (!(t.match.roi_margin >= 1.0) || t.kalman_q < 0.0 || !(t.kalman_r > 0.0)) {
                throw ConfigError("tracker: need roi_margin >= 1, kalman_q >= 0, kalman_r > 0");
            }
        }
        if (const auto it = j.find("preprocess"); it != j.end()) {
            check_keys(*it, {"gamma", "sigma_inner", "sigma_outer", "a", "tau"}, "preprocess");
            read(*it, "gamma", c.prep.gamma);
            read(*it, "sigma_inner", c.prep.sigma_inner);
            read(*it, "sigma_outer", c.prep.sigma_outer);
            read(*it, "a", c.prep.a);
            read(*it, "tau", c.prep.tau);
            c.prep.validate();
        }
        if (const auto it = j.find("classifier"); it != j.end()) {
            check_keys(*it, {"threshold"}, "classifier");
            read(*it, "threshold", c.svm_threshold);
        }
        if (const auto it = j.find("vigilance"); it != j.end()) {
            check_keys(*it, {"alarm_after", "release_after", "perclos_window"}, "vigilance");
            read(*it, "alarm_after", c.vigilance.alarm_after);
            read(*it, "release_after", c.vigilance.release_after);
            read(*it, "perclos_window", c.vigilance.perclos_window);
        }
        if (const auto it = j.find("force_lost_frames"); it != j.end()) {
            for (const auto& k : *it) {
                c.force_lost_frames.insert(k.get<int>());
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const DomainError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.vigilance.frame_period = 1.0 / c.fps;
    return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config: cannot open " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_pipeline_config(ss.str(), path.parent_path());
}

// ---------------------------------------------------------------------------
// Reports

std::string_view to_string(TrackStatus s) {
    switch (s) {
    case TrackStatus::detected:
        return "detected";
    case TrackStatus::tracked:
        return "tracked";
    case TrackStatus::lost:
        return "lost";
    }
    return "lost";
}

namespace {

json rect_json(const Rect& r) { return {{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}}; }

json eye_json(const std::optional<EyeReport>& e) {
    if (!e) {
        return nullptr;
    }
    json j;
    j["center"] = {e->center.x, e->center.y};
    j["rect"] = rect_json(e->rect);
    j["match_score"] = e->match_score ? json(*e->match_score) : json(nullptr);
    j["state"] = to_string(e->state);
    j["svm_score"] = e->svm_score;
    return j;
}

} // namespace

std::string to_jsonl(const FrameReport& r) {
    json j;
    j["frame"] = r.frame;
    j["t"] = r.t;
    j["face"] = r.face ? rect_json(*r.face) : json(nullptr);
    j["eyes"] = {{"left", eye_json(r.left)}, {"right", eye_json(r.right)}};
    j["status"] = to_string(r.status);
    j["fused"] = to_string(r.verdict.fused);
    j["closed_run"] = r.verdict.closed_run;
    j["perclos"] = r.verdict.perclos;
    j["alarm"] = r.verdict.alarm;
    j["alarm_event"] = to_string(r.verdict.alarm_event);
    return j.dump();
}

std::string to_jsonl(const RunSummary& s) {
    static constexpr const char* names[kStageCount] = {"detect", "track", "preprocess", "features", "classify"};
    json latency = json::object();
    for (int i = 0; i < kStageCount; ++i) {
        latency[names[i]] = s.stage_calls[i] > 0 ? 1000.0 * s.stage_seconds[i] / s.stage_calls[i] : 0.0;
    }
    json j;
    j["summary"] = true;
    j["frames"] = s.frames;
    j["detected"] = s.detected;
    j["tracked"] = s.tracked;
    j["lost"] = s.lost;
    j["alarms_raised"] = s.alarms_raised;
    j["alarms_released"] = s.alarms_released;
    j["latency_ms"] = latency;
    j["throughput_fps"] = s.throughput_fps();
    j["tracked_fps"] = s.tracked_fps();
    j["face_cascade"] = s.face_cascade;
    j["eye_cascade"] = s.eye_cascade;
    j["model"] = s.model;
    return j.dump();
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

using Clock = std::chrono::steady_clock;

class StageTimer {
public:
    StageTimer(RunSummary& s, PipelineStage stage) : s_(s), i_(static_cast<int>(stage)), t0_(Clock::now()) {}
    ~StageTimer() {
        s_.stage_seconds[i_] += std::chrono::duration<double>(Clock::now() - t0_).count();
        ++s_.stage_calls[i_];
    }
    StageTimer(const StageTimer&) = delete;
    StageTimer& operator=(const StageTimer&) = delete;

private:
    RunSummary& s_;
    int i_;
    Clock::time_point t0_;
};

const Detection* strongest(const std::vector<Detection>& d) {
    const Detection* best = nullptr;
    for (const auto& x : d) {
        if (best == nullptr || x.neighbors > best->neighbors) {
            best = &x;
        }
    }
    return best;
}

Point2 center_of(const Rect& r) { return {r.x + r.w / 2.0, r.y + r.h / 2.0}; }

} // namespace

Pipeline::Pipeline(PipelineConfig cfg, Cascade face, Cascade eye, SvmModel model)
    : cfg_(std::move(cfg)), face_(std::move(face)), eye_(std::move(eye)), model_(std::move(model)),
      vigilance_(cfg_.vigilance) {
    if (face_.kind != FeatureKind::lbp) {
        throw ConfigError("pipeline: face cascade must be an LBP cascade");
    }
    if (eye_.kind != FeatureKind::haar) {
        throw ConfigError("pipeline: eye cascade must be a Haar cascade");
    }
    if (model_.kind != cfg_.features || model_.dim() != descriptor_dim(cfg_.features)) {
        throw DimensionError("pipeline: model is " + std::string(to_string(model_.kind)) + " with dim " +
                             std::to_string(model_.dim()) + ", config expects " +
                             std::string(to_string(cfg_.features)) + " with dim " +
                             std::to_string(descriptor_dim(cfg_.features)));
    }
    track_.left.pool = TemplatePool(EyeSide::left, cfg_.tracker.pool_capacity);
    track_.right.pool = TemplatePool(EyeSide::right, cfg_.tracker.pool_capacity);
    summary_.face_cascade = face_.identity;
    summary_.eye_cascade = eye_.identity;
    summary_.model = cfg_.model.filename().string();
}

Pipeline Pipeline::from_config(const PipelineConfig& cfg) {
    return Pipeline(cfg, load_cascade_file(cfg.face_cascade), load_cascade_file(cfg.eye_cascade),
                    load_model(cfg.model));
}

std::optional<EyeReport> Pipeline::classify_eye(const GrayImage& frame, Point2 center, const Rect& rect,
                                                std::optional<double> match_score) {
    const Rect r = clip(rect, frame.width(), frame.height());
    if (r.w < 8 || r.h < 8) {
        return std::nullopt;
    }
    EyePatch patch;
    {
        StageTimer t(summary_, PipelineStage::preprocess);
        patch = preprocess(crop(frame, r), cfg_.prep);
    }
    FeatureVector fv;
    {
        StageTimer t(summary_, PipelineStage::features);
        fv = extract(patch, cfg_.features);
    }
    EyeReport e;
    e.center = center;
    e.rect = rect;
    e.match_score = match_score;
    {
        StageTimer t(summary_, PipelineStage::classify);
        e.svm_score = score(model_, fv);
        e.state = e.svm_score >= cfg_.svm_threshold ? EyeState::closed : EyeState::open;
    }
    return e;
}

FrameReport Pipeline::detect_frame(const GrayImage& frame, const IntegralImage& ii) {
    FrameReport r;
    std::optional<Rect> found[2];
    {
        StageTimer t(summary_, PipelineStage::detect);
        const auto faces = detect_multiscale(face_, ii, cfg_.face_detect);
        const Detection* face = strongest(faces);
        if (face == nullptr) {
            track_.status = TrackStatus::lost;
            return r;
        }
        r.face = face->rect;
        const EyeRois rois = eye_rois(face->rect, frame.width(), frame.height(), cfg_.eye_regions);
        const Rect roi[2] = {rois.left, rois.right};
        for (int side = 0; side < 2; ++side) {
            if (roi[side].w < eye_.base_w || roi[side].h < eye_.base_h) {
                continue;
            }
            const auto eyes = detect_multiscale(eye_, crop(frame, roi[side]), cfg_.eye_detect);
            if (const Detection* e = strongest(eyes)) {
                found[side] = Rect{e->rect.x + roi[side].x, e->rect.y + roi[side].y, e->rect.w, e->rect.h};
            }
        }
    }
    if (!found[0] && !found[1]) {
        track_.status = TrackStatus::lost;
        return r;
    }
    if (found[0] && found[1] &&
        !verify_pair(center_of(*found[0]), center_of(*found[1]), r.face->w, cfg_.tracker.pair)) {
        track_.status = TrackStatus::lost;
        return r;
    }
    track_.face_w = r.face->w;
    track_.status = TrackStatus::detected;
    EyeTrack* tracks[2] = {&track_.left, &track_.right};
    std::optional<EyeReport>* reports[2] = {&r.left, &r.right};
    for (int side = 0; side < 2; ++side) {
        if (!found[side]) {
            tracks[side]->active = false;
            continue;
        }
        seed_eye(*tracks[side], frame, *found[side], next_frame_, cfg_.tracker);
        *reports[side] = classify_eye(frame, center_of(*found[side]), *found[side], std::nullopt);
    }
    r.status = TrackStatus::detected;
    return r;
}

FrameReport Pipeline::process(const GrayImage& frame) {
    const auto t0 = Clock::now();
    const int k = next_frame_;
    FrameReport r;
    if (cfg_.force_lost_frames.contains(k)) {
        track_.status = TrackStatus::lost;
    } else if (track_.status == TrackStatus::lost) {
        r = detect_frame(frame, IntegralImage(frame));
    } else {
        StepResult step;
        {
            StageTimer t(summary_, PipelineStage::track);
            step = step_tracking(track_, frame, cfg_.tracker);
        }
        r.status = step.status;
        if (step.left) {
            r.left = classify_eye(frame, step.left->center, step.left->rect, step.left->match_score);
        }
        if (step.right) {
            r.right = classify_eye(frame, step.right->center, step.right->rect, step.right->match_score);
        }
    }
    r.frame = k;
    r.t = k / cfg_.fps;
    r.status = track_.status;

    FrameEyeObservation obs;
    obs.timestamp = r.t;
    obs.left = r.left ? reading(r.left->state) : EyeReading::absent;
    obs.right = r.right ? reading(r.right->state) : EyeReading::absent;
    r.verdict = vigilance_.update(obs);

    const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
    ++summary_.frames;
    summary_.total_seconds += dt;
    switch (r.status) {
    case TrackStatus::detected:
        ++summary_.detected;
        break;
    case TrackStatus::tracked:
        ++summary_.tracked;
        summary_.tracked_seconds += dt;
        break;
    case TrackStatus::lost:
        ++summary_.lost;
        break;
    }
    summary_.alarms_raised += r.verdict.alarm_event == AlarmEvent::raised;
    summary_.alarms_released += r.verdict.alarm_event == AlarmEvent::released;
    ++next_frame_;
    return r;
}

// ---------------------------------------------------------------------------
// Directories

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw Error("not a directory: " + dir.string());
    }
    std::vector<std::filesystem::path> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".pgm" || ext == ".ppm" || ext == ".pnm")) {
            out.push_back(entry.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

RunSummary run_sequence(const PipelineConfig& cfg, const std::filesystem::path& frames_dir, std::ostream& out) {
    const auto files = list_frames(frames_dir);
    if (files.empty()) {
        throw Error("no frames in " + frames_dir.string());
    }
    Pipeline p = Pipeline::from_config(cfg);
    for (std::size_t k = 0; k < files.size(); ++k) {
        GrayImage img;
        try {
            img = load_pnm(files[k]);
        } catch (const Error& e) {
            throw FormatError("frame " + std::to_string(k) + " (" + files[k].string() + "): " + e.what());
        }
        out << to_jsonl(p.process(img)) << '\n';
    }
    out << to_jsonl(p.summary()) << '\n';
    return p.summary();
}

std::vector<FeatureVector> featurize_dir(const std::filesystem::path& dir, DescriptorKind kind,
                                         const PrepConfig& prep) {
    const auto files = list_frames(dir);
    if (files.empty()) {
        throw Error("no images in " + dir.string());
    }
    std::vector<EyePatch> patches(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) {
        patches[i] = preprocess(load_pnm(files[i]), prep);
    }
    return extract_batch(patches, kind);
}

TrainReport train_from_dirs(const std::filesystem::path& open_dir, const std::filesystem::path& closed_dir,
                            DescriptorKind kind, const TrainParams& params, const PrepConfig& prep) {
    std::vector<LabeledSample> data;
    TrainReport rep;
    for (auto& f : featurize_dir(open_dir, kind, prep)) {
        data.push_back({std::move(f), EyeState::open});
        ++rep.open_count;
    }
    for (auto& f : featurize_dir(closed_dir, kind, prep)) {
        data.push_back({std::move(f), EyeState::closed});
        ++rep.closed_count;
    }
    rep.model = train(data, params);
    std::size_t correct = 0;
    for (const auto& s : data) {
        correct += predict(rep.model, s.features) == s.label;
    }
    rep.training_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    return rep;
}

EvalReport evaluate_dirs(const SvmModel& model, const std::filesystem::path& open_dir,
                         const std::filesystem::path& closed_dir, const PrepConfig& prep) {
    const int expected = descriptor_dim(model.kind);
    if (model.dim() != expected) {
        throw DimensionError("eval: model dim " + std::to_string(model.dim()) + " does not match " +
                             std::string(to_string(model.kind)) + " dim " + std::to_string(expected));
    }
    EvalReport rep;
    for (const bool closed : {false, true}) {
        for (const auto& f : featurize_dir(closed ? closed_dir : open_dir, model.kind, prep)) {
            rep.scores.push_back(score(model, f));
            rep.closed.push_back(closed);
        }
    }
    rep.roc = roc_from_scores(rep.scores, rep.closed);
    return rep;
}

void write_roc_csv(std::ostream& out, const RocCurve& roc) {
    out << "threshold,fpr,tpr\n";
    const auto num = [](double v) {
        if (std::isinf(v)) {
            return std::string(v > 0 ? "inf" : "-inf");
        }
        std::ostringstream s;
        s.precision(17);
        s << v;
        return s.str();
    };
    for (const auto& p : roc.points) {
        out << num(p.threshold) << ',' << num(p.fpr) << ',' << num(p.tpr) << '\n';
    }
    out << "AUC," << num(roc.auc) << '\n';
}

} // namespace drowsy
