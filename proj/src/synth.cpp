#include "drowsy/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include <json.hpp>

namespace drowsy::synth {

using nlohmann::json;

namespace {

// Deterministic helpers independent of the standard library's distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }
    bool chance(double p) { return uniform() < p; }

    double gaussian() {
        if (spare_) {
            const double v = *spare_;
            spare_.reset();
            return v;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::mt19937_64 engine_;
    std::optional<double> spare_;
};

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr int kSupersample = 4;

/// Blends `value` into the canvas with the area coverage of the predicate
/// over the bounding box [x0,x1) x [y0,y1).
template <typename Inside>
void paint(FloatImage& canvas, double x0, double y0, double x1, double y1, double value, Inside inside) {
    const int ix0 = std::max(0, static_cast<int>(std::floor(x0)));
    const int iy0 = std::max(0, static_cast<int>(std::floor(y0)));
    const int ix1 = std::min(canvas.width(), static_cast<int>(std::ceil(x1)));
    const int iy1 = std::min(canvas.height(), static_cast<int>(std::ceil(y1)));
    constexpr double step = 1.0 / kSupersample;
    for (int y = iy0; y < iy1; ++y) {
        for (int x = ix0; x < ix1; ++x) {
            int hits = 0;
            for (int sy = 0; sy < kSupersample; ++sy) {
                for (int sx = 0; sx < kSupersample; ++sx) {
                    if (inside(x + (sx + 0.5) * step, y + (sy + 0.5) * step)) {
                        ++hits;
                    }
                }
            }
            if (hits > 0) {
                const double cov = static_cast<double>(hits) / (kSupersample * kSupersample);
                double& p = canvas.at(x, y);
                p = p * (1.0 - cov) + value * cov;
            }
        }
    }
}

void paint_ellipse(FloatImage& canvas, double cx, double cy, double ax, double ay, double value) {
    paint(canvas, cx - ax, cy - ay, cx + ax, cy + ay, value, [=](double x, double y) {
        const double dx = (x - cx) / ax;
        const double dy = (y - cy) / ay;
        return dx * dx + dy * dy <= 1.0;
    });
}

struct EyeLook {
    double skin = 170.0;
    double sclera = 235.0;
    double iris = 35.0;
    double lid = 45.0;
    double openness = 1.0;   // vertical scale of an open eye
    double thickness = 1.0;  // closed lid line thickness scale
    double curve = 0.0;      // closed lid sag, fraction of eye width
    double brow = 80.0;
    double brow_dy = FaceLayout::brow_dy;  // fraction of face size above the eye
    bool has_brow = true;
};

/// Draws one eye centred at (cx, cy) for a face of size `face`.
void paint_eye(FloatImage& canvas, double cx, double cy, double face, bool closed, const EyeLook& look) {
    if (look.has_brow) {
        paint_ellipse(canvas, cx, cy - look.brow_dy * face, 0.09 * face, 0.014 * face, look.brow);
    }
    if (!closed) {
        paint_ellipse(canvas, cx, cy, 0.075 * face, 0.045 * face * look.openness, look.sclera);
        paint_ellipse(canvas, cx, cy, 0.05 * face, 0.0333 * face * look.openness, look.iris);
        return;
    }
    const double ax = 0.06 * face;
    const double ay = 0.0125 * face * look.thickness;
    const double sag = look.curve * face;
    paint(canvas, cx - ax, cy - ay - std::abs(sag), cx + ax, cy + ay + std::abs(sag), look.lid,
          [=](double x, double y) {
              const double dx = (x - cx) / ax;
              const double mid = cy + sag * (1.0 - dx * dx);
              const double dy = (y - mid) / ay;
              return dx * dx + dy * dy <= 1.0;
          });
}

void add_noise(FloatImage& canvas, double sigma, Rng& rng) {
    if (sigma <= 0.0) {
        return;
    }
    for (double& v : canvas.data()) {
        v += sigma * rng.gaussian();
    }
}

bool in_any(const std::vector<FrameRange>& ranges, int k) {
    return std::any_of(ranges.begin(), ranges.end(), [k](const FrameRange& r) { return r.contains(k); });
}

} // namespace

Frame render_frame(const SceneSpec& spec, int k) {
    FloatImage canvas(spec.width, spec.height);
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            canvas.at(x, y) = 50.0 + 20.0 * x / spec.width;
        }
    }
    Frame f;
    f.truth.frame = k;
    f.truth.t = k / spec.fps;
    f.truth.left.state = EyeReading::absent;
    f.truth.right.state = EyeReading::absent;
    if (spec.face) {
        const double s = spec.face_size;
        const double fx = spec.face_x + spec.vx * k;
        const double fy = spec.face_y + spec.vy * k;
        f.truth.face = Rect{static_cast<int>(std::lround(fx)), static_cast<int>(std::lround(fy)),
                            static_cast<int>(std::lround(s)), static_cast<int>(std::lround(s))};
        const EyeLook look;
        paint_ellipse(canvas, fx + 0.5 * s, fy + 0.5 * s, 0.42 * s, 0.5 * s, look.skin);
        paint_ellipse(canvas, fx + 0.5 * s, fy + 0.78 * s, 0.13 * s, 0.025 * s, 100.0);

        const bool closed = in_any(spec.blinks, k);
        const bool vanished = in_any(spec.vanish, k);
        const auto occluded = [&](EyeSide side) {
            return vanished || std::any_of(spec.occlusions.begin(), spec.occlusions.end(), [&](const Occlusion& o) {
                       return o.eye == side && o.frames.contains(k);
                   });
        };
        const auto eye = [&](EyeTruth& truth, double rel_x, EyeSide side) {
            truth.center = {fx + rel_x * s, fy + FaceLayout::eye_y * s};
            if (occluded(side)) {
                truth.state = EyeReading::absent;
                return;
            }
            truth.state = closed ? EyeReading::closed : EyeReading::open;
            paint_eye(canvas, truth.center.x, truth.center.y, s, closed, look);
        };
        eye(f.truth.left, FaceLayout::eye_x_left, EyeSide::left);
        eye(f.truth.right, FaceLayout::eye_x_right, EyeSide::right);
    }
    Rng rng(mix(spec.seed, static_cast<std::uint64_t>(k)));
    add_noise(canvas, spec.noise, rng);
    f.image = to_gray(canvas);
    return f;
}

namespace {

json truth_json(const FrameTruth& t) {
    const auto eye = [](const EyeTruth& e) {
        const char* state = e.state == EyeReading::absent ? "absent" : (e.state == EyeReading::closed ? "closed" : "open");
        return json{{"center", {e.center.x, e.center.y}}, {"state", state}};
    };
    json j;
    j["frame"] = t.frame;
    j["t"] = t.t;
    j["face"] = t.face ? json{t.face->x, t.face->y, t.face->w, t.face->h} : json(nullptr);
    j["left"] = eye(t.left);
    j["right"] = eye(t.right);
    return j;
}

std::string frame_name(int k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%05d.pgm", k);
    return buf;
}

} // namespace

void write_sequence(const SceneSpec& spec, const std::filesystem::path& dir) {
    if (spec.frames < 1) {
        throw DomainError("synth: frames must be >= 1");
    }
    std::filesystem::create_directories(dir);
    std::ofstream truth(dir / "truth.jsonl");
    for (int k = 0; k < spec.frames; ++k) {
        const Frame f = render_frame(spec, k);
        save_pnm(dir / frame_name(k), f.image);
        truth << truth_json(f.truth).dump() << "\n";
    }
}

// ---------------------------------------------------------------------------
// Spec parsing

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) {
        throw ConfigError(where + ": expected a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

FrameRange parse_range(const json& j, const std::string& where) {
    if (j.is_array() && j.size() == 2) {
        return {j[0].get<int>(), j[1].get<int>()};
    }
    reject_unknown(j, {"start", "end", "eye"}, where);
    return {j.at("start").get<int>(), j.at("end").get<int>()};
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (const auto it = j.find(key); it != j.end()) {
        out = it->get<T>();
    }
}

} // namespace

SceneSpec parse_scene_spec(const std::string& json_text) {
    try {
        const json j = json::parse(json_text);
        reject_unknown(j,
                       {"mode", "frames", "fps", "width", "height", "face", "face_x", "face_y", "face_size", "vx", "vy",
                        "blinks", "occlusions", "vanish", "noise", "seed"},
                       "synth spec");
        SceneSpec s;
        read_opt(j, "frames", s.frames);
        read_opt(j, "fps", s.fps);
        read_opt(j, "width", s.width);
        read_opt(j, "height", s.height);
        read_opt(j, "face", s.face);
        read_opt(j, "face_x", s.face_x);
        read_opt(j, "face_y", s.face_y);
        read_opt(j, "face_size", s.face_size);
        read_opt(j, "vx", s.vx);
        read_opt(j, "vy", s.vy);
        read_opt(j, "noise", s.noise);
        read_opt(j, "seed", s.seed);
        for (const auto& b : j.value("blinks", json::array())) {
            s.blinks.push_back(parse_range(b, "blinks"));
        }
        for (const auto& v : j.value("vanish", json::array())) {
            s.vanish.push_back(parse_range(v, "vanish"));
        }
        for (const auto& o : j.value("occlusions", json::array())) {
            reject_unknown(o, {"eye", "start", "end"}, "occlusions");
            const auto eye = o.at("eye").get<std::string>();
            if (eye != "left" && eye != "right") {
                throw ConfigError("occlusions: eye must be left or right");
            }
            s.occlusions.push_back({eye == "left" ? EyeSide::left : EyeSide::right, parse_range(o, "occlusions")});
        }
        if (s.frames < 1 || !(s.fps > 0.0) || s.width < 1 || s.height < 1 || !(s.face_size >= 20.0)) {
            throw ConfigError("synth spec: need frames >= 1, fps > 0, positive size, face_size >= 20");
        }
        return s;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("synth spec: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Eye crops

GrayImage render_eye_sample(bool closed, std::uint64_t seed, double noise) {
    Rng rng(seed);
    const double face = rng.uniform(80.0, 220.0);
    const double box_w = FaceLayout::eye_w * face * rng.uniform(0.9, 1.15);
    const double box_h = box_w * 2.0 / 3.0;
    const int w = std::max(12, static_cast<int>(std::lround(box_w)));
    const int h = std::max(8, static_cast<int>(std::lround(box_h)));

    EyeLook look;
    look.skin = rng.uniform(120.0, 210.0);
    look.sclera = std::min(255.0, look.skin + rng.uniform(25.0, 70.0));
    look.iris = rng.uniform(15.0, 75.0);
    look.lid = rng.uniform(20.0, 85.0);
    look.openness = rng.uniform(0.55, 1.05);
    look.thickness = rng.uniform(0.6, 1.7);
    look.curve = rng.uniform(-0.012, 0.02);
    look.has_brow = rng.chance(0.8);
    look.brow = look.skin * rng.uniform(0.3, 0.7);
    look.brow_dy = rng.uniform(0.06, 0.09);

    FloatImage canvas(w, h, look.skin);
    const double gx = rng.uniform(-25.0, 25.0);
    const double gy = rng.uniform(-25.0, 25.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            canvas.at(x, y) += gx * (x / static_cast<double>(w) - 0.5) + gy * (y / static_cast<double>(h) - 0.5);
        }
    }
    const double cx = w / 2.0 + rng.uniform(-0.1, 0.1) * w;
    const double cy = h / 2.0 + rng.uniform(-0.1, 0.1) * h;
    if (rng.chance(0.2)) {
        // spectacle frame
        const double yline = rng.chance(0.5) ? rng.uniform(0.0, 0.2) * h : rng.uniform(0.8, 1.0) * h;
        paint(canvas, 0.0, yline - 1.0, w, yline + 1.0, rng.uniform(20.0, 90.0),
              [=](double, double y) { return std::abs(y - yline) <= 0.8; });
    }
    paint_eye(canvas, cx, cy, face, closed, look);
    add_noise(canvas, rng.uniform(0.0, 1.5) * noise, rng);
    return to_gray(canvas);
}

void write_eye_dataset(const EyeDatasetSpec& spec, const std::filesystem::path& dir) {
    if (spec.count < 1) {
        throw DomainError("synth: eye dataset count must be >= 1");
    }
    for (const bool closed : {false, true}) {
        const auto sub = dir / (closed ? "closed" : "open");
        std::filesystem::create_directories(sub);
        for (int i = 0; i < spec.count; ++i) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "eye_%05d.pgm", i);
            const std::uint64_t s = mix(spec.seed, static_cast<std::uint64_t>(2 * i + (closed ? 1 : 0)));
            save_pnm(sub / buf, render_eye_sample(closed, s, spec.noise));
        }
    }
}

void run_spec(const std::string& json_text, const std::filesystem::path& dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("synth spec: ") + e.what());
    }
    const std::string mode = j.is_object() ? j.value("mode", "sequence") : "sequence";
    if (mode == "sequence") {
        write_sequence(parse_scene_spec(json_text), dir);
    } else if (mode == "eyes") {
        reject_unknown(j, {"mode", "count", "noise", "seed"}, "synth spec");
        EyeDatasetSpec s;
        read_opt(j, "count", s.count);
        read_opt(j, "noise", s.noise);
        read_opt(j, "seed", s.seed);
        write_eye_dataset(s, dir);
    } else {
        throw ConfigError("synth spec: unknown mode '" + mode + "'");
    }
}

} // namespace drowsy::synth
