#pragma once

#include <deque>
#include <optional>
#include <string_view>

#include "drowsy/classify.hpp"

namespace drowsy {

enum class EyeReading { open, closed, absent };
enum class Fused { open, closed, unknown };
enum class AlarmEvent { none, raised, released };

std::string_view to_string(Fused f);
std::string_view to_string(AlarmEvent e);

inline EyeReading reading(EyeState s) { return s == EyeState::closed ? EyeReading::closed : EyeReading::open; }

struct FrameEyeObservation {
    EyeReading left = EyeReading::absent;
    EyeReading right = EyeReading::absent;
    double timestamp = 0.0;  // seconds, strictly increasing
};

/// Both absent -> unknown; one present -> that eye; both present -> closed
/// only when both are closed.
Fused fuse(const FrameEyeObservation& obs);

struct VigilanceConfig {
    double alarm_after = 1.5;     // seconds of continuous closure
    double release_after = 0.5;   // seconds of continuous openness
    double perclos_window = 30.0; // seconds
    double frame_period = 0.0;    // duration credited to the first observation (0 = none)
};

struct FrameVerdict {
    Fused fused = Fused::unknown;
    double closed_run = 0.0;
    double perclos = 0.0;
    bool alarm = false;
    AlarmEvent alarm_event = AlarmEvent::none;
};

/// Duration-based sleepiness decision. Each observation's fused state is
/// credited to the interval since the previous observation, so the n-th
/// consecutive closed frame at a steady rate carries n frame periods of
/// closure.
class VigilanceState {
public:
    explicit VigilanceState(VigilanceConfig cfg = {});

    FrameVerdict update(const FrameEyeObservation& obs);

    bool alarm_active() const { return alarm_active_; }
    const VigilanceConfig& config() const { return cfg_; }

private:
    struct Span {
        double start;
        double end;
        Fused state;
    };

    double perclos(double now);

    VigilanceConfig cfg_;
    std::optional<double> last_t_;
    std::optional<double> closed_run_start_;
    std::optional<double> unknown_since_;  // start of the current unknown stretch
    std::optional<double> open_since_;     // start of the current open stretch
    bool alarm_active_ = false;
    std::deque<Span> history_;
};

} // namespace drowsy
