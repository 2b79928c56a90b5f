#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace meterkit {

/// Frame/time coordinate system shared by every per-frame signal.
struct FrameGrid {
    double frame_rate_hz = 100.0;
    std::size_t num_frames = 0;

    FrameGrid() = default;
    FrameGrid(double rate, std::size_t frames) : frame_rate_hz(rate), num_frames(frames) {
        if (!(frame_rate_hz > 0.0))
            throw std::invalid_argument("FrameGrid: frame_rate_hz must be > 0");
    }

    double duration_sec() const { return static_cast<double>(num_frames) / frame_rate_hz; }

    bool operator==(const FrameGrid&) const = default;
};

/// A tala: named cycle with a fixed number of beats per cycle.
struct TalaSpec {
    std::string name;
    int beats_per_cycle = 1;

    TalaSpec() = default;
    TalaSpec(std::string n, int b) : name(std::move(n)), beats_per_cycle(b) {
        if (beats_per_cycle < 1)
            throw std::invalid_argument("TalaSpec: beats_per_cycle must be >= 1");
    }

    bool operator==(const TalaSpec&) const = default;
};

inline TalaSpec tala_adi() { return {"adi", 8}; }
inline TalaSpec tala_rupaka() { return {"rupaka", 3}; }
inline TalaSpec tala_misra_chapu() { return {"misra_chapu", 7}; }
inline TalaSpec tala_khanda_chapu() { return {"khanda_chapu", 5}; }

inline const std::vector<TalaSpec>& registered_talas() {
    static const std::vector<TalaSpec> talas = {tala_adi(), tala_rupaka(), tala_misra_chapu(),
                                                tala_khanda_chapu()};
    return talas;
}

inline TalaSpec tala_by_name(const std::string& name) {
    for (const auto& t : registered_talas())
        if (t.name == name) return t;
    throw std::invalid_argument("unknown tala: " + name);
}

/// One time-stamped metrical marker. cycle_position is 1-based; 1 is the sama.
struct AnnotationEvent {
    double time_sec = 0.0;
    int cycle_position = 1;

    bool operator==(const AnnotationEvent&) const = default;
};

struct AnnotationSequence {
    std::vector<AnnotationEvent> events;
    TalaSpec tala;

    void validate() const {
        const int b = tala.beats_per_cycle;
        for (std::size_t i = 0; i < events.size(); ++i) {
            if (events[i].time_sec < 0.0)
                throw std::invalid_argument("AnnotationSequence: negative time at event " +
                                            std::to_string(i));
            if (events[i].cycle_position < 1 || events[i].cycle_position > b)
                throw std::invalid_argument("AnnotationSequence: cycle_position out of 1.." +
                                            std::to_string(b) + " at event " + std::to_string(i));
            if (i > 0) {
                if (!(events[i].time_sec > events[i - 1].time_sec))
                    throw std::invalid_argument(
                        "AnnotationSequence: times not strictly increasing at event " +
                        std::to_string(i));
                const int expect = events[i - 1].cycle_position % b + 1;
                if (events[i].cycle_position != expect)
                    throw std::invalid_argument(
                        "AnnotationSequence: cycle_position does not advance by 1 mod B at event " +
                        std::to_string(i));
            }
        }
    }
};

/// Ordered beat (or downbeat) times in seconds.
struct BeatList {
    std::vector<double> times;

    void validate() const {
        for (std::size_t i = 1; i < times.size(); ++i)
            if (!(times[i] > times[i - 1]))
                throw std::invalid_argument("BeatList: times not strictly increasing at index " +
                                            std::to_string(i));
    }

    std::size_t size() const { return times.size(); }
    bool empty() const { return times.empty(); }
};

/// Per-frame rhythmic salience curve (onset detection function).
struct NoveltySignal {
    FrameGrid grid;
    std::vector<double> values;

    void validate() const {
        if (values.size() != grid.num_frames)
            throw std::invalid_argument("NoveltySignal: length does not match grid");
        for (double v : values)
            if (v < 0.0) throw std::invalid_argument("NoveltySignal: negative value");
    }
};

/// Per-frame beat/downbeat probability curves from a neural model.
struct ActivationPair {
    FrameGrid grid;
    std::vector<double> beat;
    std::vector<double> downbeat;

    void validate() const {
        if (beat.size() != downbeat.size() || beat.size() != grid.num_frames)
            throw std::invalid_argument("ActivationPair: lengths do not match grid");
        for (std::size_t i = 0; i < beat.size(); ++i)
            if (beat[i] < 0.0 || beat[i] > 1.0 || downbeat[i] < 0.0 || downbeat[i] > 1.0)
                throw std::invalid_argument("ActivationPair: value outside [0,1] at frame " +
                                            std::to_string(i));
    }
};

/// time -> frame index, round half away from zero, clamped to the grid.
inline std::size_t time_to_frame(double t, const FrameGrid& grid) {
    if (t < 0.0) throw std::invalid_argument("time_to_frame: negative time");
    if (grid.num_frames == 0) throw std::invalid_argument("time_to_frame: empty grid");
    auto idx = static_cast<long long>(std::llround(t * grid.frame_rate_hz));
    idx = std::clamp<long long>(idx, 0, static_cast<long long>(grid.num_frames) - 1);
    return static_cast<std::size_t>(idx);
}

inline double frame_to_time(std::size_t frame, const FrameGrid& grid) {
    return static_cast<double>(frame) / grid.frame_rate_hz;
}

/// Splits annotation events into all beat times and sama (position 1) times.
inline std::pair<BeatList, BeatList> annotations_to_beats_and_downbeats(
    const AnnotationSequence& ann) {
    BeatList beats, downbeats;
    beats.times.reserve(ann.events.size());
    for (const auto& e : ann.events) {
        beats.times.push_back(e.time_sec);
        if (e.cycle_position == 1) downbeats.times.push_back(e.time_sec);
    }
    return {std::move(beats), std::move(downbeats)};
}

/// Binary per-frame target sequence; colliding beats collapse to one 1.
inline std::vector<double> targets_from_beats(const BeatList& beats, const FrameGrid& grid) {
    std::vector<double> targets(grid.num_frames, 0.0);
    for (double t : beats.times) {
        if (t >= grid.duration_sec())
            throw std::invalid_argument("targets_from_beats: beat at " + std::to_string(t) +
                                        " s is outside the grid");
        targets[time_to_frame(t, grid)] = 1.0;
    }
    return targets;
}

}  // namespace meterkit
