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

struct Spectrogram {
    FrameGrid grid;
    std::size_t num_bins = 0;
    // Row-major [num_frames x num_bins].
    std::vector<double> magnitudes;

    double& at(std::size_t frame, std::size_t bin) { return magnitudes[frame * num_bins + bin]; }
    double at(std::size_t frame, std::size_t bin) const {
        return magnitudes[frame * num_bins + bin];
    }
};

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 FFT. Size must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

/// Direct O(N^2) DFT for non-power-of-two sizes.
inline std::vector<std::complex<double>> dft_direct(const std::vector<std::complex<double>>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0);
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) *
                               static_cast<double>(t) / static_cast<double>(n);
            acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    return out;
}

inline double hann(std::size_t i, std::size_t n) {
    if (n <= 1) return 1.0;
    return 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n - 1));
}

}  // namespace detail

/// Hann-windowed STFT magnitudes; frame t covers samples [t*hop, t*hop + window),
/// zero-padded at the tail. Bins 0..window/2.
inline Spectrogram stft_magnitude(const std::vector<double>& samples, double sample_rate,
                                  std::size_t window_size, std::size_t hop) {
    if (samples.empty()) throw std::invalid_argument("stft_magnitude: empty samples");
    if (hop == 0 || window_size < hop)
        throw std::invalid_argument("stft_magnitude: require window_size >= hop >= 1");
    const std::size_t num_frames = (samples.size() + hop - 1) / hop;
    Spectrogram spec;
    spec.grid = FrameGrid(sample_rate / static_cast<double>(hop), num_frames);
    spec.num_bins = window_size / 2 + 1;
    spec.magnitudes.assign(num_frames * spec.num_bins, 0.0);

    std::vector<std::complex<double>> frame(window_size);
    for (std::size_t t = 0; t < num_frames; ++t) {
        for (std::size_t i = 0; i < window_size; ++i) {
            const std::size_t s = t * hop + i;
            const double x = (s < samples.size()) ? samples[s] : 0.0;
            frame[i] = x * detail::hann(i, window_size);
        }
        if (detail::is_pow2(window_size)) {
            auto f = frame;
            detail::fft_radix2(f);
            for (std::size_t k = 0; k < spec.num_bins; ++k) spec.at(t, k) = std::abs(f[k]);
        } else {
            const auto f = detail::dft_direct(frame);
            for (std::size_t k = 0; k < spec.num_bins; ++k) spec.at(t, k) = std::abs(f[k]);
        }
    }
    return spec;
}

/// m -> ln(1 + gamma * m), shape preserved.
inline Spectrogram log_compress(Spectrogram spec, double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("log_compress: gamma must be > 0");
    for (double& m : spec.magnitudes) m = std::log1p(gamma * m);
    return spec;
}

/// Half-wave rectified first difference summed over bins. Frame 0 is the
/// rectified energy against silence.
inline NoveltySignal spectral_flux(const Spectrogram& spec) {
    if (spec.grid.num_frames < 1) throw std::invalid_argument("spectral_flux: empty spectrogram");
    NoveltySignal nov;
    nov.grid = spec.grid;
    nov.values.assign(spec.grid.num_frames, 0.0);
    for (std::size_t k = 0; k < spec.num_bins; ++k) nov.values[0] += std::max(0.0, spec.at(0, k));
    for (std::size_t n = 1; n < spec.grid.num_frames; ++n)
        for (std::size_t k = 0; k < spec.num_bins; ++k)
            nov.values[n] += std::max(0.0, spec.at(n, k) - spec.at(n - 1, k));
    return nov;
}

enum class NoveltyNorm { Max, MeanSubtractClip };

inline NoveltySignal normalize_novelty(NoveltySignal nov, NoveltyNorm mode) {
    if (nov.values.empty()) throw std::invalid_argument("normalize_novelty: empty signal");
    if (mode == NoveltyNorm::Max) {
        const double m = *std::max_element(nov.values.begin(), nov.values.end());
        if (m > 0.0)
            for (double& v : nov.values) v /= m;
        return nov;
    }
    // Moving average over a 1 s window (truncated at the edges), then clip.
    const auto n = static_cast<long long>(nov.values.size());
    const long long half = std::max<long long>(1, std::llround(nov.grid.frame_rate_hz)) / 2;
    std::vector<double> out(nov.values.size());
    std::vector<double> prefix(nov.values.size() + 1, 0.0);
    for (long long i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + nov.values[i];
    for (long long i = 0; i < n; ++i) {
        const long long lo = std::max<long long>(0, i - half);
        const long long hi = std::min<long long>(n - 1, i + half);
        const double mean = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
        out[i] = std::max(0.0, nov.values[i] - mean);
    }
    nov.values = std::move(out);
    return nov;
}

/// Mean per-cycle novelty shape: each complete sama-to-sama cycle is linearly
/// resampled to bins_per_cycle points and the cycles are averaged.
inline std::vector<double> average_cycle_pattern(const NoveltySignal& nov,
                                                 const AnnotationSequence& ann,
                                                 std::size_t bins_per_cycle) {
    if (bins_per_cycle == 0)
        throw std::invalid_argument("average_cycle_pattern: bins_per_cycle must be positive");
    std::vector<double> samas;
    for (const auto& e : ann.events)
        if (e.cycle_position == 1) samas.push_back(e.time_sec);
    if (samas.size() < 2)
        throw std::invalid_argument("average_cycle_pattern: need at least 2 sama events");

    const auto sample_at = [&](double t) {
        const double x = t * nov.grid.frame_rate_hz;
        const auto i0 = static_cast<long long>(std::floor(x));
        const auto n = static_cast<long long>(nov.values.size());
        const long long a = std::clamp<long long>(i0, 0, n - 1);
        const long long b = std::clamp<long long>(i0 + 1, 0, n - 1);
        const double frac = x - static_cast<double>(i0);
        return nov.values[a] * (1.0 - frac) + nov.values[b] * frac;
    };

    std::vector<double> pattern(bins_per_cycle, 0.0);
    const std::size_t num_cycles = samas.size() - 1;
    for (std::size_t c = 0; c < num_cycles; ++c) {
        const double start = samas[c];
        const double len = samas[c + 1] - samas[c];
        for (std::size_t b = 0; b < bins_per_cycle; ++b) {
            const double t = start + len * static_cast<double>(b) /
                                         static_cast<double>(bins_per_cycle);
            pattern[b] += sample_at(t) / static_cast<double>(num_cycles);
        }
    }
    return pattern;
}

}  // namespace meterkit
