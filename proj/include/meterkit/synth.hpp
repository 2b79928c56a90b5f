#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "meterkit/model.hpp"

namespace meterkit {

/// Synthetic tala track description. Generators are deterministic given the
/// spec's seed (mt19937_64 throughout).
struct SynthSpec {
    TalaSpec tala;
    double tempo_bpm = 120.0;
    double duration_sec = 30.0;
    std::vector<double> accent_profile;  // per beat position, downbeat first; empty = all 1.0
    double timing_jitter_std_sec = 0.0;
    int spike_width_frames = 3;
    double noise_floor = 0.0;
    std::uint64_t seed = 42;

    void validate() const {
        if (!(tempo_bpm > 0.0)) throw std::invalid_argument("SynthSpec: tempo_bpm must be > 0");
        if (!(duration_sec > 0.0)) throw std::invalid_argument("SynthSpec: duration must be > 0");
        if (spike_width_frames < 1)
            throw std::invalid_argument("SynthSpec: spike_width_frames must be >= 1");
        if (noise_floor < 0.0) throw std::invalid_argument("SynthSpec: negative noise_floor");
        const double ibi = 60.0 / tempo_bpm;
        if (timing_jitter_std_sec < 0.0 || timing_jitter_std_sec >= 0.5 * ibi)
            throw std::invalid_argument("SynthSpec: jitter std must be < half the IBI");
        for (double a : accent_profile)
            if (a <= 0.0 || a > 1.0)
                throw std::invalid_argument("SynthSpec: accents must lie in (0,1]");
        if (!accent_profile.empty() &&
            static_cast<int>(accent_profile.size()) != tala.beats_per_cycle)
            throw std::invalid_argument("SynthSpec: accent profile length != beats_per_cycle");
    }

    double accent(int cycle_position) const {
        if (accent_profile.empty()) return 1.0;
        return accent_profile[static_cast<std::size_t>(cycle_position - 1)];
    }
};

/// Jittered isochronous beats with cycling 1..B positions. Jitter is resampled
/// when it would reorder beats.
inline AnnotationSequence generate_annotations(const SynthSpec& spec) {
    spec.validate();
    const double ibi = 60.0 / spec.tempo_bpm;
    if (spec.duration_sec < ibi * spec.tala.beats_per_cycle)
        throw std::invalid_argument("generate_annotations: duration covers less than one cycle");
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> jitter(0.0, spec.timing_jitter_std_sec);
    AnnotationSequence ann;
    ann.tala = spec.tala;
    double prev = -1.0;
    for (int i = 0;; ++i) {
        const double nominal = i * ibi;
        if (nominal >= spec.duration_sec) break;
        double t = nominal;
        if (spec.timing_jitter_std_sec > 0.0) {
            do {
                t = nominal + jitter(rng);
            } while (t <= prev || t < 0.0);
        }
        if (t >= spec.duration_sec) break;
        ann.events.push_back({t, i % spec.tala.beats_per_cycle + 1});
        prev = t;
    }
    ann.validate();
    return ann;
}

namespace detail {

/// Triangular spike of unit peak centered at `center`, accumulated with max.
inline void add_spike(std::vector<double>& values, std::size_t center, int width,
                      double amplitude) {
    const long long half = width / 2;
    const auto n = static_cast<long long>(values.size());
    const auto c = static_cast<long long>(center);
    for (long long d = -half; d <= half; ++d) {
        const long long i = c + d;
        if (i < 0 || i >= n) continue;
        const double v = amplitude * (1.0 - std::abs(static_cast<double>(d)) / (half + 1.0));
        values[i] = std::max(values[i], v);
    }
}

}  // namespace detail

/// Novelty curve with accent-scaled triangular spikes at the annotated beats
/// plus a uniform noise floor.
inline NoveltySignal generate_novelty(const SynthSpec& spec, const FrameGrid& grid,
                                      const AnnotationSequence& ann) {
    if (grid.duration_sec() < spec.duration_sec - 1.0 / grid.frame_rate_hz)
        throw std::invalid_argument("generate_novelty: grid does not cover the duration");
    std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_real_distribution<double> noise(0.0, spec.noise_floor);
    NoveltySignal nov;
    nov.grid = grid;
    nov.values.assign(grid.num_frames, 0.0);
    if (spec.noise_floor > 0.0)
        for (double& v : nov.values) v = noise(rng);
    for (const auto& e : ann.events)
        detail::add_spike(nov.values, time_to_frame(e.time_sec, grid), spec.spike_width_frames,
                          spec.accent(e.cycle_position));
    return nov;
}

inline NoveltySignal generate_novelty(const SynthSpec& spec, const FrameGrid& grid) {
    return generate_novelty(spec, grid, generate_annotations(spec));
}

/// Beat/downbeat probability curves; off_phase shifts the beat spikes by half
/// an inter-beat interval, mimicking phase-offset (edupu) percussion.
inline ActivationPair generate_activations(const SynthSpec& spec, const FrameGrid& grid,
                                           bool off_phase = false) {
    const auto ann = generate_annotations(spec);
    if (grid.duration_sec() < spec.duration_sec - 1.0 / grid.frame_rate_hz)
        throw std::invalid_argument("generate_activations: grid does not cover the duration");
    ActivationPair act;
    act.grid = grid;
    act.beat.assign(grid.num_frames, 0.0);
    act.downbeat.assign(grid.num_frames, 0.0);
    const double shift = off_phase ? 0.5 * 60.0 / spec.tempo_bpm : 0.0;
    for (const auto& e : ann.events) {
        const double t = e.time_sec + shift;
        if (t >= grid.duration_sec()) continue;
        detail::add_spike(act.beat, time_to_frame(t, grid), spec.spike_width_frames,
                          spec.accent(e.cycle_position));
        if (e.cycle_position == 1)
            detail::add_spike(act.downbeat, time_to_frame(t, grid), spec.spike_width_frames, 1.0);
    }
    if (spec.noise_floor > 0.0) {
        std::mt19937_64 rng(spec.seed ^ 0xda942042e4dd58b5ull);
        std::uniform_real_distribution<double> noise(0.0, spec.noise_floor);
        for (std::size_t i = 0; i < grid.num_frames; ++i) {
            act.beat[i] = std::clamp(act.beat[i] + noise(rng), 0.0, 1.0);
            act.downbeat[i] = std::clamp(act.downbeat[i] + noise(rng), 0.0, 1.0);
        }
    }
    return act;
}

}  // namespace meterkit
