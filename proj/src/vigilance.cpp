#include "drowsy/vigilance.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace drowsy {

namespace {

// Absorbs accumulated rounding of timestamp differences (e.g. 45 frames at
// 30 fps landing a hair under 1.5 s).
constexpr double kTimeSlack = 1e-9;

} // namespace

std::string_view to_string(Fused f) {
    switch (f) {
    case Fused::open:
        return "open";
    case Fused::closed:
        return "closed";
    case Fused::unknown:
        return "unknown";
    }
    return "unknown";
}

std::string_view to_string(AlarmEvent e) {
    switch (e) {
    case AlarmEvent::none:
        return "none";
    case AlarmEvent::raised:
        return "raised";
    case AlarmEvent::released:
        return "released";
    }
    return "none";
}

Fused fuse(const FrameEyeObservation& obs) {
    const bool l = obs.left != EyeReading::absent;
    const bool r = obs.right != EyeReading::absent;
    if (!l && !r) {
        return Fused::unknown;
    }
    if (l && r) {
        return obs.left == EyeReading::closed && obs.right == EyeReading::closed ? Fused::closed : Fused::open;
    }
    const EyeReading only = l ? obs.left : obs.right;
    return only == EyeReading::closed ? Fused::closed : Fused::open;
}

VigilanceState::VigilanceState(VigilanceConfig cfg) : cfg_(cfg) {
    if (!(cfg_.alarm_after > 0.0) || !(cfg_.release_after > 0.0) || !(cfg_.perclos_window > 0.0) ||
        cfg_.frame_period < 0.0) {
        throw DomainError("vigilance: durations must be positive");
    }
}

FrameVerdict VigilanceState::update(const FrameEyeObservation& obs) {
    const double t = obs.timestamp;
    if (!std::isfinite(t)) {
        throw SequenceError("vigilance: non-finite timestamp");
    }
    if (last_t_ && !(t > *last_t_)) {
        throw SequenceError("vigilance: timestamp " + std::to_string(t) + " does not follow " +
                            std::to_string(*last_t_));
    }
    const double start = last_t_ ? *last_t_ : t - cfg_.frame_period;
    last_t_ = t;

    FrameVerdict v;
    v.fused = fuse(obs);
    switch (v.fused) {
    case Fused::closed:
        if (closed_run_start_ && unknown_since_) {
            // Frozen stretch: shift the run so unknown time is not counted.
            *closed_run_start_ += start - *unknown_since_;
        }
        if (!closed_run_start_) {
            closed_run_start_ = start;
        }
        unknown_since_.reset();
        open_since_.reset();
        v.closed_run = t - *closed_run_start_;
        break;
    case Fused::open:
        closed_run_start_.reset();
        unknown_since_.reset();
        if (!open_since_) {
            open_since_ = start;
        }
        break;
    case Fused::unknown:
        open_since_.reset();
        if (!unknown_since_) {
            unknown_since_ = start;
        }
        if (closed_run_start_) {
            if (t - *unknown_since_ >= cfg_.release_after - kTimeSlack) {
                closed_run_start_.reset();
                unknown_since_.reset();
            } else {
                v.closed_run = *unknown_since_ - *closed_run_start_;
            }
        }
        break;
    }

    if (v.fused == Fused::closed && !alarm_active_ && v.closed_run >= cfg_.alarm_after - kTimeSlack) {
        alarm_active_ = true;
        v.alarm_event = AlarmEvent::raised;
    } else if (v.fused == Fused::open && alarm_active_ && t - *open_since_ >= cfg_.release_after - kTimeSlack) {
        alarm_active_ = false;
        v.alarm_event = AlarmEvent::released;
    }
    v.alarm = alarm_active_;

    if (t > start) {
        history_.push_back({start, t, v.fused});
    }
    v.perclos = perclos(t);
    return v;
}

double VigilanceState::perclos(double now) {
    const double from = now - cfg_.perclos_window;
    while (!history_.empty() && history_.front().end <= from) {
        history_.pop_front();
    }
    double closed = 0.0;
    double known = 0.0;
    for (const auto& s : history_) {
        if (s.state == Fused::unknown) {
            continue;
        }
        const double d = s.end - std::max(s.start, from);
        known += d;
        if (s.state == Fused::closed) {
            closed += d;
        }
    }
    return known > 0.0 ? std::clamp(closed / known, 0.0, 1.0) : 0.0;
}

} // namespace drowsy
