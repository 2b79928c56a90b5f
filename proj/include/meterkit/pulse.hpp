#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "meterkit/model.hpp"

namespace meterkit {

struct Tempogram {
    FrameGrid grid;  // one tempogram column per novelty frame
    std::vector<double> bpm_axis;
    double window_sec = 4.0;
    // Row-major [frames x tempi].
    std::vector<double> magnitudes;
    std::vector<double> phases;

    double magnitude(std::size_t frame, std::size_t tempo) const {
        return magnitudes[frame * bpm_axis.size() + tempo];
    }
    double phase(std::size_t frame, std::size_t tempo) const {
        return phases[frame * bpm_axis.size() + tempo];
    }
};

inline std::vector<double> default_bpm_axis(double min_bpm = 30.0, double max_bpm = 300.0,
                                            double step = 1.0) {
    std::vector<double> axis;
    for (double b = min_bpm; b <= max_bpm + 1e-9; b += step) axis.push_back(b);
    return axis;
}

/// Windowed complex correlation of the (mean-removed) novelty against each
/// tempo frequency, one column per novelty frame.
inline Tempogram fourier_tempogram(const NoveltySignal& nov, const std::vector<double>& bpm_axis,
                                   double window_sec = 4.0) {
    if (bpm_axis.empty()) throw std::invalid_argument("fourier_tempogram: empty bpm axis");
    for (std::size_t i = 1; i < bpm_axis.size(); ++i)
        if (!(bpm_axis[i] > bpm_axis[i - 1]))
            throw std::invalid_argument("fourier_tempogram: bpm axis must be increasing");
    const double fps = nov.grid.frame_rate_hz;
    const auto n_frames = static_cast<long long>(nov.grid.num_frames);
    const long long win = std::max<long long>(2, std::llround(window_sec * fps));
    const long long half = win / 2;

    double mean = 0.0;
    for (double v : nov.values) mean += v;
    if (!nov.values.empty()) mean /= static_cast<double>(nov.values.size());

    Tempogram tg;
    tg.grid = nov.grid;
    tg.bpm_axis = bpm_axis;
    tg.window_sec = window_sec;
    tg.magnitudes.assign(static_cast<std::size_t>(n_frames) * bpm_axis.size(), 0.0);
    tg.phases.assign(tg.magnitudes.size(), 0.0);

    std::vector<double> window(static_cast<std::size_t>(win));
    for (long long i = 0; i < win; ++i)
        window[static_cast<std::size_t>(i)] =
            0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                 static_cast<double>(win - 1));

    for (long long n = 0; n < n_frames; ++n) {
        for (std::size_t ti = 0; ti < bpm_axis.size(); ++ti) {
            const double freq = bpm_axis[ti] / 60.0 / fps;  // cycles per frame
            std::complex<double> acc(0.0);
            for (long long d = -half; d < win - half; ++d) {
                const long long m = n + d;
                if (m < 0 || m >= n_frames) continue;
                const double x = nov.values[static_cast<std::size_t>(m)] - mean;
                const double ang = -2.0 * std::numbers::pi * freq * static_cast<double>(m);
                acc += window[static_cast<std::size_t>(d + half)] * x *
                       std::complex<double>(std::cos(ang), std::sin(ang));
            }
            tg.magnitudes[static_cast<std::size_t>(n) * bpm_axis.size() + ti] = std::abs(acc);
            tg.phases[static_cast<std::size_t>(n) * bpm_axis.size() + ti] = std::arg(acc);
        }
    }
    return tg;
}

/// Predominant local pulse: per kernel frame (half-window hop) take the
/// maximizing tempo, synthesize a windowed cosine with the stored phase,
/// overlap-add, half-wave rectify.
inline NoveltySignal plp_curve(const Tempogram& tg, const FrameGrid& nov_grid) {
    if (tg.bpm_axis.empty() || tg.grid.num_frames == 0)
        throw std::invalid_argument("plp_curve: empty tempogram");
    const double fps = tg.grid.frame_rate_hz;
    const long long win = std::max<long long>(2, std::llround(tg.window_sec * fps));
    const long long half = win / 2;
    const long long hop = std::max<long long>(1, half);
    const auto n_frames = static_cast<long long>(tg.grid.num_frames);

    std::vector<double> acc(nov_grid.num_frames, 0.0);
    for (long long n = 0; n < n_frames; n += hop) {
        std::size_t best = 0;
        for (std::size_t ti = 1; ti < tg.bpm_axis.size(); ++ti)
            if (tg.magnitude(static_cast<std::size_t>(n), ti) >
                tg.magnitude(static_cast<std::size_t>(n), best))
                best = ti;
        if (tg.magnitude(static_cast<std::size_t>(n), best) <= 0.0) continue;
        const double freq = tg.bpm_axis[best] / 60.0 / fps;
        const double phase = tg.phase(static_cast<std::size_t>(n), best);
        for (long long d = -half; d < win - half; ++d) {
            const long long m = n + d;
            if (m < 0 || m >= static_cast<long long>(acc.size())) continue;
            const double w =
                0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(d + half) /
                                     static_cast<double>(win - 1));
            acc[static_cast<std::size_t>(m)] +=
                w * std::cos(2.0 * std::numbers::pi * freq * static_cast<double>(m) + phase);
        }
    }
    NoveltySignal plp;
    plp.grid = nov_grid;
    plp.values.resize(nov_grid.num_frames);
    for (std::size_t i = 0; i < acc.size(); ++i) plp.values[i] = std::max(0.0, acc[i]);
    return plp;
}

/// Dynamic-programming beat tracking under an assumed tempo (Ellis-style).
/// Maximizes sum of novelty at beats plus lambda-weighted log-spacing penalties.
inline BeatList ellis_dp_beats(const NoveltySignal& nov, double target_bpm, double lambda) {
    if (!(target_bpm > 10.0 && target_bpm < 600.0))
        throw std::invalid_argument("ellis_dp_beats: target_bpm out of (10, 600)");
    if (!(lambda > 0.0)) throw std::invalid_argument("ellis_dp_beats: lambda must be > 0");
    const double fps = nov.grid.frame_rate_hz;
    const double period = fps * 60.0 / target_bpm;  // frames per beat
    const auto k = static_cast<long long>(nov.values.size());
    BeatList beats;
    if (static_cast<double>(k) < period) return beats;

    std::vector<double> score(nov.values.size());
    std::vector<long long> pred(nov.values.size(), -1);
    for (long long t = 0; t < k; ++t) {
        const long long lo = std::max<long long>(0, static_cast<long long>(std::ceil(
                                                        static_cast<double>(t) - 2.0 * period)));
        const long long hi = static_cast<long long>(
            std::floor(static_cast<double>(t) - 0.5 * period));
        double best = 0.0;
        long long best_tau = -1;
        for (long long tau = lo; tau <= hi; ++tau) {
            const double gap = static_cast<double>(t - tau);
            const double pen = -std::pow(std::log(gap / period), 2);
            const double cand = score[static_cast<std::size_t>(tau)] + lambda * pen;
            if (best_tau < 0 || cand > best) {
                best = cand;
                best_tau = tau;
            }
        }
        score[static_cast<std::size_t>(t)] =
            nov.values[static_cast<std::size_t>(t)] + (best_tau >= 0 ? best : 0.0);
        pred[static_cast<std::size_t>(t)] = best_tau;
    }

    // Last beat lies within the final target period.
    const long long tail = std::max<long long>(0, k - static_cast<long long>(std::ceil(period)));
    long long cur = tail;
    for (long long t = tail + 1; t < k; ++t)
        if (score[static_cast<std::size_t>(t)] > score[static_cast<std::size_t>(cur)]) cur = t;
    std::vector<long long> frames;
    while (cur >= 0) {
        frames.push_back(cur);
        cur = pred[static_cast<std::size_t>(cur)];
    }
    std::reverse(frames.begin(), frames.end());
    for (long long f : frames) beats.times.push_back(static_cast<double>(f) / fps);
    return beats;
}

/// Median BPM over consecutive inter-beat intervals; even counts average the
/// two central values.
inline double median_tempo_bpm(const BeatList& beats) {
    if (beats.size() < 2) throw std::invalid_argument("median_tempo_bpm: need >= 2 beats");
    std::vector<double> bpm;
    for (std::size_t i = 1; i < beats.size(); ++i)
        bpm.push_back(60.0 / (beats.times[i] - beats.times[i - 1]));
    std::sort(bpm.begin(), bpm.end());
    const std::size_t n = bpm.size();
    return n % 2 == 1 ? bpm[n / 2] : 0.5 * (bpm[n / 2 - 1] + bpm[n / 2]);
}

struct CycleStats {
    double min_sec = 0.0;
    double max_sec = 0.0;
    double median_sec = 0.0;
};

/// Statistics over consecutive sama-to-sama intervals.
inline CycleStats cycle_duration_stats(const AnnotationSequence& ann) {
    std::vector<double> samas;
    for (const auto& e : ann.events)
        if (e.cycle_position == 1) samas.push_back(e.time_sec);
    if (samas.size() < 2)
        throw std::invalid_argument("cycle_duration_stats: need >= 2 sama events");
    std::vector<double> cycles;
    for (std::size_t i = 1; i < samas.size(); ++i) cycles.push_back(samas[i] - samas[i - 1]);
    std::sort(cycles.begin(), cycles.end());
    const std::size_t n = cycles.size();
    CycleStats st;
    st.min_sec = cycles.front();
    st.max_sec = cycles.back();
    st.median_sec = n % 2 == 1 ? cycles[n / 2] : 0.5 * (cycles[n / 2 - 1] + cycles[n / 2]);
    return st;
}

}  // namespace meterkit
