#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "meterkit/hmm_engine.hpp"
#include "meterkit/model.hpp"

namespace meterkit {

struct PostprocConfig {
    std::vector<int> beats_per_bar = {3, 4};
    double min_tempo_bpm = 55.0;
    double max_tempo_bpm = 215.0;
    double frame_rate_hz = 100.0;
    double transition_lambda = 100.0;

    void validate() const {
        if (beats_per_bar.empty())
            throw std::invalid_argument("PostprocConfig: beats_per_bar must be non-empty");
        for (int b : beats_per_bar)
            if (b < 2) throw std::invalid_argument("PostprocConfig: beats_per_bar values >= 2");
        if (!(min_tempo_bpm > 0.0 && min_tempo_bpm < max_tempo_bpm))
            throw std::invalid_argument("PostprocConfig: need 0 < min_tempo < max_tempo");
        if (!(frame_rate_hz > 0.0))
            throw std::invalid_argument("PostprocConfig: frame_rate_hz must be > 0");
        if (!(transition_lambda > 0.0))
            throw std::invalid_argument("PostprocConfig: transition_lambda must be > 0");
    }
};

inline PostprocConfig default_config() { return {}; }

/// Parameters informed by the four talas of the Carnatic corpus and its
/// observed tempo range.
inline PostprocConfig cmr_informed_config() {
    PostprocConfig cfg;
    cfg.beats_per_bar = {3, 5, 7, 8};
    cfg.min_tempo_bpm = 55.0;
    cfg.max_tempo_bpm = 230.0;
    cfg.frame_rate_hz = 100.0;
    return cfg;
}

/// Sum-head combination: downbeat logits reinforce the beat activation.
inline ActivationPair sum_head_combine(const std::vector<double>& beat_logits,
                                       const std::vector<double>& downbeat_logits,
                                       double frame_rate_hz = 100.0) {
    if (beat_logits.size() != downbeat_logits.size())
        throw std::invalid_argument("sum_head_combine: length mismatch");
    const auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    ActivationPair act;
    act.grid = FrameGrid(frame_rate_hz, beat_logits.size());
    act.beat.resize(beat_logits.size());
    act.downbeat.resize(beat_logits.size());
    for (std::size_t i = 0; i < beat_logits.size(); ++i) {
        act.beat[i] = sigmoid(beat_logits[i] + downbeat_logits[i]);
        act.downbeat[i] = sigmoid(downbeat_logits[i]);
    }
    return act;
}

namespace detail {

/// One ring per (meter, frames-per-beat); ring length = meter * frames_per_beat.
struct PostprocLattice {
    RingHmm hmm;
    std::vector<int> ring_meter;  // beats per bar
    std::vector<int> ring_fpb;    // frames per beat
};

inline PostprocLattice build_postproc_lattice(const PostprocConfig& cfg) {
    const double fps = cfg.frame_rate_hz;
    const int fpb_min =
        std::max(1, static_cast<int>(std::llround(fps * 60.0 / cfg.max_tempo_bpm)));
    const int fpb_max =
        std::max(fpb_min, static_cast<int>(std::llround(fps * 60.0 / cfg.min_tempo_bpm)));

    std::vector<int> meters = cfg.beats_per_bar;
    std::sort(meters.begin(), meters.end());
    meters.erase(std::unique(meters.begin(), meters.end()), meters.end());

    PostprocLattice lat;
    // Emission classes: 0 = downbeat position, 1 = beat position, 2 = interior.
    for (int meter : meters) {
        for (int fpb = fpb_min; fpb <= fpb_max; ++fpb) {
            const auto len = static_cast<std::uint32_t>(meter * fpb);
            lat.hmm.ring_length.push_back(len);
            lat.ring_meter.push_back(meter);
            lat.ring_fpb.push_back(fpb);
            std::vector<std::uint16_t> cls(len, 2);
            for (std::uint32_t p = 0; p < len; p += static_cast<std::uint32_t>(fpb))
                cls[p] = (p == 0) ? 0 : 1;
            lat.hmm.state_class.push_back(std::move(cls));
        }
    }
    const std::size_t num_rings = lat.hmm.ring_length.size();
    lat.hmm.wrap_in.resize(num_rings);
    // Wrap arcs stay within a meter; adjacent-tempo moves weighted by
    // exp(-lambda * |log tempo ratio|), normalized per source ring.
    for (std::size_t from = 0; from < num_rings; ++from) {
        std::vector<std::pair<std::size_t, double>> targets;
        for (long long to = static_cast<long long>(from) - 1;
             to <= static_cast<long long>(from) + 1; ++to) {
            if (to < 0 || to >= static_cast<long long>(num_rings)) continue;
            if (lat.ring_meter[static_cast<std::size_t>(to)] != lat.ring_meter[from]) continue;
            if (std::abs(lat.ring_fpb[static_cast<std::size_t>(to)] - lat.ring_fpb[from]) > 1)
                continue;
            const double ratio = std::log(static_cast<double>(lat.ring_fpb[from]) /
                                          lat.ring_fpb[static_cast<std::size_t>(to)]);
            targets.emplace_back(static_cast<std::size_t>(to),
                                 std::exp(-cfg.transition_lambda * std::abs(ratio)));
        }
        double z = 0.0;
        for (const auto& [to, w] : targets) z += w;
        for (const auto& [to, w] : targets)
            lat.hmm.wrap_in[to].push_back(
                {static_cast<std::uint32_t>(from), std::log(w / z)});
    }
    lat.hmm.finalize();
    return lat;
}

}  // namespace detail

/// Joint beat/downbeat decoding of neural activations: a single Viterbi pass
/// over the union of per-meter lattices selects the meter, tempo curve, and
/// phase simultaneously.
inline std::pair<BeatList, BeatList> postprocess_joint(const ActivationPair& act,
                                                       const PostprocConfig& cfg) {
    cfg.validate();
    act.validate();
    constexpr double kFloor = 1e-5;
    const double fps = cfg.frame_rate_hz;
    const auto min_period = static_cast<std::size_t>(std::llround(fps * 60.0 / cfg.min_tempo_bpm));
    if (act.grid.num_frames < std::max<std::size_t>(1, min_period)) return {};

    const auto lat = detail::build_postproc_lattice(cfg);
    std::vector<double> logs(3);
    const auto emitter = [&](std::size_t k) -> const std::vector<double>& {
        logs[0] = std::log(std::max(act.downbeat[k], kFloor));
        logs[1] = std::log(std::max(act.beat[k], kFloor));
        logs[2] = std::log(std::max(1.0 - act.beat[k], kFloor));
        return logs;
    };
    const auto path = viterbi_rings(lat.hmm, act.grid.num_frames, emitter);

    BeatList beats, downbeats;
    for (std::size_t k = 0; k < path.size(); ++k) {
        const double t = frame_to_time(k, act.grid);
        const int fpb = lat.ring_fpb[path[k].ring];
        if (k == 0) {
            if (path[k].pos % static_cast<std::uint32_t>(fpb) == 0) {
                beats.times.push_back(t);
                if (path[k].pos == 0) downbeats.times.push_back(t);
            }
            continue;
        }
        if (path[k].pos < path[k - 1].pos) {  // wrap: downbeat
            beats.times.push_back(t);
            downbeats.times.push_back(t);
        } else if (path[k].pos % static_cast<std::uint32_t>(fpb) == 0) {
            beats.times.push_back(t);
        }
    }
    return {std::move(beats), std::move(downbeats)};
}

}  // namespace meterkit
