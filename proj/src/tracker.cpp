#include "drowsy/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace drowsy {

namespace {

template <typename T>
bool is_constant(const Image<T>& img) {
    const auto& d = img.data();
    return std::all_of(d.begin(), d.end(), [&](T v) { return v == d.front(); });
}

} // namespace

Template make_template(GrayImage patch, int captured_at) {
    if (patch.empty() || is_constant(patch)) {
        throw DegenerateTemplateError("template patch is constant");
    }
    return {std::move(patch), captured_at};
}

// ---------------------------------------------------------------------------
// Template pool

TemplatePool::TemplatePool(EyeSide side, std::size_t capacity) : side_(side), capacity_(capacity) {
    if (capacity < kMinCapacity || capacity > kMaxCapacity) {
        throw DomainError("template pool capacity must lie in [10, 20]");
    }
}

bool TemplatePool::push(Template fresh) {
    if (fresh.patch.empty() || is_constant(fresh.patch)) {
        return false;
    }
    templates_.push_back(std::move(fresh));
    while (templates_.size() > capacity_) {
        templates_.pop_front();
    }
    return true;
}

TemplatePool update_pool(TemplatePool pool, Template fresh) {
    pool.push(std::move(fresh));
    return pool;
}

// ---------------------------------------------------------------------------
// NCC

namespace {

template <typename T>
class NccKernel {
public:
    NccKernel(const Image<T>& img, const Rect& roi, const Image<T>& patch)
        : img_(img), roi_(roi), pw_(patch.width()), ph_(patch.height()) {
        if (!fits(roi, img.width(), img.height())) {
            throw BoundsError("ncc_match: roi outside image");
        }
        if (roi.w < pw_ || roi.h < ph_) {
            throw DimensionError("ncc_match: roi " + std::to_string(roi.w) + "x" + std::to_string(roi.h) +
                                 " smaller than template " + std::to_string(pw_) + "x" + std::to_string(ph_));
        }
        const double n = static_cast<double>(pw_) * ph_;
        double mean = 0.0;
        for (T v : patch.data()) {
            mean += static_cast<double>(v);
        }
        mean /= n;
        centered_.resize(patch.size());
        for (std::size_t i = 0; i < patch.size(); ++i) {
            centered_[i] = static_cast<double>(patch.data()[i]) - mean;
            t_sum_ += centered_[i];
            t_energy_ += centered_[i] * centered_[i];
        }
        if (is_constant(patch) || !(t_energy_ > 0.0)) {
            throw DegenerateTemplateError("ncc_match: constant template");
        }
        // Window sums over the ROI.
        const std::size_t stride = static_cast<std::size_t>(roi.w) + 1;
        sums_.assign(stride * (static_cast<std::size_t>(roi.h) + 1), 0.0);
        sq_sums_.assign(sums_.size(), 0.0);
        for (int y = 0; y < roi.h; ++y) {
            double rs = 0.0;
            double rq = 0.0;
            for (int x = 0; x < roi.w; ++x) {
                const double v = static_cast<double>(img.at(roi.x + x, roi.y + y));
                rs += v;
                rq += v * v;
                sums_[(y + 1) * stride + x + 1] = sums_[y * stride + x + 1] + rs;
                sq_sums_[(y + 1) * stride + x + 1] = sq_sums_[y * stride + x + 1] + rq;
            }
        }
        n_ = n;
    }

    int rows() const { return roi_.h - ph_ + 1; }
    int cols() const { return roi_.w - pw_ + 1; }

    double score(int x, int y) const {
        const std::size_t stride = static_cast<std::size_t>(roi_.w) + 1;
        const auto box = [&](const std::vector<double>& t) {
            return t[(y + ph_) * stride + x + pw_] - t[(y + ph_) * stride + x] - t[y * stride + x + pw_] +
                   t[y * stride + x];
        };
        const double s = box(sums_);
        const double s2 = box(sq_sums_);
        const double var = s2 - s * s / n_;
        if (!(var > 1e-12 * std::max(1.0, s2))) {
            return 0.0;
        }
        double cross = 0.0;
        for (int j = 0; j < ph_; ++j) {
            const auto src = img_.row(roi_.y + y + j);
            const double* t = centered_.data() + static_cast<std::size_t>(j) * pw_;
            const int x0 = roi_.x + x;
            for (int i = 0; i < pw_; ++i) {
                cross += t[i] * static_cast<double>(src[x0 + i]);
            }
        }
        const double num = cross - (s / n_) * t_sum_;
        return std::clamp(num / std::sqrt(t_energy_ * var), -1.0, 1.0);
    }

    struct Best {
        int x = 0;
        int y = 0;
        double score = -2.0;
    };

    Best best_in_row(int y) const {
        Best b{0, y, -2.0};
        for (int x = 0; x < cols(); ++x) {
            const double s = score(x, y);
            if (s > b.score) {
                b = {x, y, s};
            }
        }
        return b;
    }

    MatchResult finish(const Best& b) const {
        MatchResult m;
        m.rect = {roi_.x + b.x, roi_.y + b.y, pw_, ph_};
        m.center = {m.rect.x + pw_ / 2.0, m.rect.y + ph_ / 2.0};
        m.score = b.score;
        return m;
    }

private:
    const Image<T>& img_;
    Rect roi_;
    int pw_;
    int ph_;
    double n_ = 1.0;
    std::vector<double> centered_;
    double t_sum_ = 0.0;
    double t_energy_ = 0.0;
    std::vector<double> sums_;
    std::vector<double> sq_sums_;
};

template <typename T>
MatchResult reduce_rows(const NccKernel<T>& k, const std::vector<typename NccKernel<T>::Best>& rows) {
    typename NccKernel<T>::Best best;
    for (const auto& r : rows) {
        if (r.score > best.score) {
            best = r;
        }
    }
    return k.finish(best);
}

} // namespace

template <typename T>
MatchResult ncc_match(const Image<T>& img, const Rect& roi, const Image<T>& patch) {
    const NccKernel<T> k(img, roi, patch);
    std::vector<typename NccKernel<T>::Best> rows(static_cast<std::size_t>(k.rows()));
#pragma omp parallel for schedule(static)
    for (int y = 0; y < k.rows(); ++y) {
        rows[static_cast<std::size_t>(y)] = k.best_in_row(y);
    }
    return reduce_rows(k, rows);
}

template <typename T>
MatchResult ncc_match_serial(const Image<T>& img, const Rect& roi, const Image<T>& patch) {
    const NccKernel<T> k(img, roi, patch);
    std::vector<typename NccKernel<T>::Best> rows(static_cast<std::size_t>(k.rows()));
    for (int y = 0; y < k.rows(); ++y) {
        rows[static_cast<std::size_t>(y)] = k.best_in_row(y);
    }
    return reduce_rows(k, rows);
}

template <typename T>
FloatImage ncc_surface(const Image<T>& img, const Rect& roi, const Image<T>& patch) {
    const NccKernel<T> k(img, roi, patch);
    FloatImage out(k.cols(), k.rows());
    for (int y = 0; y < k.rows(); ++y) {
        for (int x = 0; x < k.cols(); ++x) {
            out.at(x, y) = k.score(x, y);
        }
    }
    return out;
}

template MatchResult ncc_match(const GrayImage&, const Rect&, const GrayImage&);
template MatchResult ncc_match(const FloatImage&, const Rect&, const FloatImage&);
template MatchResult ncc_match_serial(const GrayImage&, const Rect&, const GrayImage&);
template MatchResult ncc_match_serial(const FloatImage&, const Rect&, const FloatImage&);
template FloatImage ncc_surface(const GrayImage&, const Rect&, const GrayImage&);
template FloatImage ncc_surface(const FloatImage&, const Rect&, const FloatImage&);

MatchResult ncc_match(const GrayImage& img, const Rect& roi, const Template& t) {
    return ncc_match(img, roi, t.patch);
}

// ---------------------------------------------------------------------------
// Eye tracking

namespace {

int median_of(std::vector<int> v) {
    std::sort(v.begin(), v.end());
    return v[(v.size() - 1) / 2];
}

// Nearest integer, halves toward -infinity.
double round_half_down(double v) { return std::ceil(v - 0.5); }

std::pair<int, int> median_size(const TemplatePool& pool) {
    std::vector<int> ws;
    std::vector<int> hs;
    for (const auto& t : pool.templates()) {
        ws.push_back(t.w());
        hs.push_back(t.h());
    }
    return {median_of(ws), median_of(hs)};
}

Rect box_around(Point2 c, int w, int h) {
    return {static_cast<int>(std::lround(c.x - w / 2.0)), static_cast<int>(std::lround(c.y - h / 2.0)), w, h};
}

} // namespace

Rect tracking_roi(const TemplatePool& pool, Point2 predicted_center, double roi_margin, int image_w, int image_h) {
    const auto [mw, mh] = median_size(pool);
    const int rw = static_cast<int>(std::lround(roi_margin * mw));
    const int rh = static_cast<int>(std::lround(roi_margin * mh));
    return clip(box_around(predicted_center, rw, rh), image_w, image_h);
}

std::optional<MatchResult> track_eye(const GrayImage& img, const TemplatePool& pool, Point2 predicted_center,
                                     const TrackConfig& cfg) {
    if (pool.empty()) {
        throw DomainError("track_eye: empty template pool");
    }
    if (!std::isfinite(predicted_center.x) || !std::isfinite(predicted_center.y)) {
        return std::nullopt;
    }
    const Rect roi = tracking_roi(pool, predicted_center, cfg.roi_margin, img.width(), img.height());
    const auto& ts = pool.templates();
    const int n = static_cast<int>(ts.size());
    std::vector<std::optional<MatchResult>> per(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const auto& t = ts[static_cast<std::size_t>(i)];
        if (roi.w >= t.w() && roi.h >= t.h()) {
            per[static_cast<std::size_t>(i)] = ncc_match_serial(img, roi, t.patch);
        }
    }
    double cx = 0.0;
    double cy = 0.0;
    double score = 0.0;
    int used = 0;
    for (const auto& m : per) {
        if (m) {
            cx += m->center.x;
            cy += m->center.y;
            score += m->score;
            ++used;
        }
    }
    if (used == 0) {
        return std::nullopt;
    }
    MatchResult out;
    out.center = {round_half_down(cx / used), round_half_down(cy / used)};
    out.score = score / used;
    const auto [mw, mh] = median_size(pool);
    out.rect = box_around(out.center, mw, mh);
    if (out.score < cfg.score_threshold) {
        return std::nullopt;
    }
    return out;
}

bool verify_pair(Point2 left, Point2 right, double face_w, const PairGeometry& g) {
    if (!(face_w > 0.0) || !(left.x < right.x)) {
        return false;
    }
    const double d = std::hypot(right.x - left.x, right.y - left.y);
    return d >= g.min_distance * face_w && d <= g.max_distance * face_w && std::abs(left.y - right.y) <= g.max_dy * d;
}

// ---------------------------------------------------------------------------
// Kalman

namespace {

void symmetrize(Eigen::Matrix4d& p) { p = 0.5 * (p + p.transpose()).eval(); }

} // namespace

KalmanTrack KalmanTrack::start(Point2 at, double q, double r, double velocity_var) {
    KalmanTrack k;
    k.state << at.x, at.y, 0.0, 0.0;
    k.covariance = Eigen::Vector4d(r, r, velocity_var, velocity_var).asDiagonal();
    k.q = q;
    k.r = r;
    return k;
}

void KalmanTrack::predict() {
    Eigen::Matrix4d f = Eigen::Matrix4d::Identity();
    f(0, 2) = 1.0;
    f(1, 3) = 1.0;
    const Eigen::Matrix4d noise = Eigen::Vector4d(0.25 * q, 0.25 * q, q, q).asDiagonal();
    state = f * state;
    covariance = f * covariance * f.transpose() + noise;
    symmetrize(covariance);
}

bool KalmanTrack::update(Point2 z) {
    if (!std::isfinite(z.x) || !std::isfinite(z.y)) {
        return false;
    }
    Eigen::Matrix<double, 2, 4> h = Eigen::Matrix<double, 2, 4>::Zero();
    h(0, 0) = 1.0;
    h(1, 1) = 1.0;
    const Eigen::Vector2d innovation = Eigen::Vector2d(z.x, z.y) - h * state;
    const Eigen::Matrix2d s = h * covariance * h.transpose() + r * Eigen::Matrix2d::Identity();
    const Eigen::Matrix<double, 4, 2> gain = covariance * h.transpose() * s.inverse();
    state += gain * innovation;
    // Joseph form keeps the covariance positive semidefinite.
    const Eigen::Matrix4d a = Eigen::Matrix4d::Identity() - gain * h;
    covariance = a * covariance * a.transpose() + r * gain * gain.transpose();
    symmetrize(covariance);
    return true;
}

std::pair<KalmanTrack, Point2> kalman_step(KalmanTrack track, std::optional<Point2> measurement) {
    track.predict();
    if (measurement) {
        track.update(*measurement);
    }
    return {track, track.position()};
}

// ---------------------------------------------------------------------------
// Per-frame tracking

void seed_eye(EyeTrack& eye, const GrayImage& img, const Rect& detected, int frame, const TrackerConfig& cfg) {
    const Rect r = clip(detected, img.width(), img.height());
    if (r.w < 1 || r.h < 1) {
        return;
    }
    if (eye.pool.capacity() != cfg.pool_capacity) {
        eye.pool = TemplatePool(eye.pool.side(), cfg.pool_capacity);
    }
    eye.pool.push(Template{crop(img, r), frame});
    eye.filter = KalmanTrack::start({r.x + r.w / 2.0, r.y + r.h / 2.0}, cfg.kalman_q, cfg.kalman_r);
    eye.last_rect = r;
    eye.active = !eye.pool.empty();
}

namespace {

std::optional<EyeObservation> advance_eye(EyeTrack& eye, const GrayImage& img, const TrackerConfig& cfg) {
    if (!eye.active || eye.pool.empty()) {
        return std::nullopt;
    }
    eye.filter.predict();
    const auto m = track_eye(img, eye.pool, eye.filter.position(), cfg.match);
    if (!m) {
        return std::nullopt;
    }
    eye.filter.update(m->center);
    EyeObservation obs;
    obs.center = eye.filter.position();
    obs.rect = box_around(obs.center, m->rect.w, m->rect.h);
    obs.match_score = m->score;
    eye.last_rect = obs.rect;
    return obs;
}

} // namespace

StepResult step_tracking(TrackState& state, const GrayImage& img, const TrackerConfig& cfg) {
    StepResult out;
    if (state.status == TrackStatus::lost) {
        return out;
    }
    out.left = advance_eye(state.left, img, cfg);
    out.right = advance_eye(state.right, img, cfg);
    bool ok = out.left.has_value() || out.right.has_value();
    if (out.left && out.right) {
        ok = verify_pair(out.left->center, out.right->center, state.face_w, cfg.pair);
    }
    if (!ok) {
        state.status = TrackStatus::lost;
        out.left.reset();
        out.right.reset();
    } else {
        state.status = TrackStatus::tracked;
    }
    out.status = state.status;
    return out;
}

} // namespace drowsy
