#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "meterkit/hmm_engine.hpp"
#include "meterkit/model.hpp"

namespace meterkit {

struct BarPointerState {
    int position = 0;  // 0 = downbeat
    int tempo = 0;     // index into the tempo grid, 0 = slowest
    int pattern = 0;

    bool operator==(const BarPointerState&) const = default;
};

struct TransitionParams {
    double p_tempo = 0.02;    // probability of an adjacent tempo move, applied at the wrap
    double p_pattern = 0.0;   // probability of switching rhythmic pattern at the wrap
};

/// Efficient discretized (position, tempo, pattern) lattice: one tempo index
/// per whole-cycle length in frames, one position per frame of that cycle.
class BarPointerStateSpace {
public:
    BarPointerStateSpace(TalaSpec tala, double min_bpm, double max_bpm, double frame_rate_hz,
                         int num_patterns = 1, TransitionParams params = {})
        : tala_(std::move(tala)),
          min_bpm_(min_bpm),
          max_bpm_(max_bpm),
          frame_rate_(frame_rate_hz),
          num_patterns_(num_patterns),
          params_(params) {
        if (!(min_bpm > 0.0) || !(max_bpm >= min_bpm))
            throw std::invalid_argument("BarPointerStateSpace: need 0 < min_bpm <= max_bpm");
        if (num_patterns < 1)
            throw std::invalid_argument("BarPointerStateSpace: num_patterns must be >= 1");
        const double frames_per_cycle = frame_rate_hz * 60.0 * tala_.beats_per_cycle;
        const auto n_max = static_cast<long long>(std::llround(frames_per_cycle / min_bpm));
        const auto n_min = static_cast<long long>(std::llround(frames_per_cycle / max_bpm));
        if (n_min < 1 || n_max < n_min)
            throw std::invalid_argument("BarPointerStateSpace: tempo range yields no tempi");
        // Tempo index 0 is the slowest (longest cycle); adjacent indices differ
        // by one frame of cycle length.
        for (long long n = n_max; n >= n_min; --n) positions_.push_back(static_cast<int>(n));
        tempo_base_.resize(positions_.size());
        std::size_t acc = 0;
        for (std::size_t t = 0; t < positions_.size(); ++t) {
            tempo_base_[t] = acc;
            acc += static_cast<std::size_t>(positions_[t]) * num_patterns_;
        }
        total_states_ = acc;
    }

    const TalaSpec& tala() const { return tala_; }
    double frame_rate() const { return frame_rate_; }
    double min_bpm() const { return min_bpm_; }
    double max_bpm() const { return max_bpm_; }
    int num_patterns() const { return num_patterns_; }
    const TransitionParams& params() const { return params_; }
    std::size_t num_tempi() const { return positions_.size(); }
    int positions(int tempo) const { return positions_.at(static_cast<std::size_t>(tempo)); }
    std::size_t total_states() const { return total_states_; }

    double bpm(int tempo) const {
        return frame_rate_ * 60.0 * tala_.beats_per_cycle / positions(tempo);
    }

    bool valid(const BarPointerState& s) const {
        return s.tempo >= 0 && s.tempo < static_cast<int>(num_tempi()) && s.position >= 0 &&
               s.position < positions(s.tempo) && s.pattern >= 0 && s.pattern < num_patterns_;
    }

    /// Flat index, tempo-major, then position, then pattern.
    std::size_t index_of(const BarPointerState& s) const {
        if (!valid(s)) throw std::invalid_argument("BarPointerStateSpace: invalid state");
        return tempo_base_[static_cast<std::size_t>(s.tempo)] +
               static_cast<std::size_t>(s.position) * num_patterns_ +
               static_cast<std::size_t>(s.pattern);
    }

    BarPointerState state_of(std::size_t index) const {
        if (index >= total_states_)
            throw std::invalid_argument("BarPointerStateSpace: index out of range");
        std::size_t t = 0;
        while (t + 1 < tempo_base_.size() && tempo_base_[t + 1] <= index) ++t;
        const std::size_t rel = index - tempo_base_[t];
        return {static_cast<int>(rel / num_patterns_), static_cast<int>(t),
                static_cast<int>(rel % num_patterns_)};
    }

private:
    TalaSpec tala_;
    double min_bpm_;
    double max_bpm_;
    double frame_rate_;
    int num_patterns_;
    TransitionParams params_;
    std::vector<int> positions_;
    std::vector<std::size_t> tempo_base_;
    std::size_t total_states_ = 0;
};

inline BarPointerStateSpace build_state_space(const TalaSpec& tala, double min_bpm, double max_bpm,
                                              double frame_rate_hz, int num_patterns = 1,
                                              TransitionParams params = {}) {
    return BarPointerStateSpace(tala, min_bpm, max_bpm, frame_rate_hz, num_patterns, params);
}

namespace detail {

/// Tempo move distribution at the wrap: (delta tempo index, probability).
/// Moves off the grid fold their mass into staying.
inline std::vector<std::pair<int, double>> wrap_tempo_moves(const BarPointerStateSpace& space,
                                                            int tempo) {
    const double p = space.params().p_tempo;
    const bool can_down = tempo > 0;
    const bool can_up = tempo + 1 < static_cast<int>(space.num_tempi());
    double stay = 1.0 - p;
    if (!can_down) stay += p / 2.0;
    if (!can_up) stay += p / 2.0;
    std::vector<std::pair<int, double>> moves;
    if (can_down && p > 0.0) moves.emplace_back(-1, p / 2.0);
    moves.emplace_back(0, stay);
    if (can_up && p > 0.0) moves.emplace_back(+1, p / 2.0);
    return moves;
}

inline std::vector<std::pair<int, double>> wrap_pattern_moves(const BarPointerStateSpace& space,
                                                              int pattern) {
    const int r = space.num_patterns();
    const double p = space.params().p_pattern;
    std::vector<std::pair<int, double>> moves;
    for (int q = 0; q < r; ++q) {
        if (q == pattern)
            moves.emplace_back(q, r > 1 ? 1.0 - p : 1.0);
        else if (p > 0.0)
            moves.emplace_back(q, p / (r - 1));
    }
    return moves;
}

}  // namespace detail

/// Successors of a state with log probabilities. Mid-bar the advance is
/// deterministic; tempo and pattern may only change at the wrap.
inline std::vector<std::pair<BarPointerState, double>> transition_step(
    const BarPointerStateSpace& space, const BarPointerState& from) {
    if (!space.valid(from)) throw std::invalid_argument("transition_step: invalid state");
    std::vector<std::pair<BarPointerState, double>> out;
    if (from.position + 1 < space.positions(from.tempo)) {
        out.push_back({{from.position + 1, from.tempo, from.pattern}, 0.0});
        return out;
    }
    for (const auto& [dt, pt] : detail::wrap_tempo_moves(space, from.tempo))
        for (const auto& [r, pr] : detail::wrap_pattern_moves(space, from.pattern))
            out.push_back({{0, from.tempo + dt, r}, std::log(pt * pr)});
    std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
        return space.index_of(a.first) < space.index_of(b.first);
    });
    return out;
}

struct GaussComponent {
    double weight = 1.0;
    double mean = 0.0;
    double variance = 1.0;
};

/// Per (pattern, cycle bin) Gaussian mixtures over the novelty value.
struct ObservationModel {
    int bins_per_cycle = 0;
    int num_patterns = 1;
    // mixtures[pattern * bins_per_cycle + bin]
    std::vector<std::vector<GaussComponent>> mixtures;

    static constexpr double kVarianceFloor = 1e-6;

    const std::vector<GaussComponent>& mixture(int pattern, int bin) const {
        return mixtures[static_cast<std::size_t>(pattern) * bins_per_cycle +
                        static_cast<std::size_t>(bin)];
    }

    void validate() const {
        if (bins_per_cycle < 1 || num_patterns < 1 ||
            mixtures.size() != static_cast<std::size_t>(bins_per_cycle) * num_patterns)
            throw std::invalid_argument("ObservationModel: inconsistent shape");
        for (const auto& mix : mixtures) {
            if (mix.empty()) throw std::invalid_argument("ObservationModel: empty mixture");
            double sum = 0.0;
            for (const auto& c : mix) {
                if (!(c.variance > 0.0))
                    throw std::invalid_argument("ObservationModel: non-positive variance");
                sum += c.weight;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw std::invalid_argument("ObservationModel: weights do not sum to 1");
        }
    }
};

inline double log_mixture_density(const std::vector<GaussComponent>& mix, double value) {
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> terms;
    terms.reserve(mix.size());
    for (const auto& c : mix) {
        const double var = std::max(c.variance, ObservationModel::kVarianceFloor);
        const double t = std::log(c.weight) - 0.5 * std::log(2.0 * std::numbers::pi * var) -
                         (value - c.mean) * (value - c.mean) / (2.0 * var);
        terms.push_back(t);
        best = std::max(best, t);
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - best);
    return best + std::log(acc);
}

inline int cycle_bin_of_position(const ObservationModel& model, int position, int ring_length) {
    return static_cast<int>(static_cast<long long>(position) * model.bins_per_cycle /
                            ring_length);
}

inline double emission_log_prob(const ObservationModel& model, const BarPointerState& state,
                                const BarPointerStateSpace& space, double value) {
    if (!space.valid(state)) throw std::invalid_argument("emission_log_prob: invalid state");
    const int bin = cycle_bin_of_position(model, state.position, space.positions(state.tempo));
    return log_mixture_density(model.mixture(state.pattern, bin), value);
}

namespace detail {

struct EmStats {
    double log_likelihood = 0.0;
};

/// Expectation-maximization for a 1-D Gaussian mixture, quantile-split init.
inline std::vector<GaussComponent> fit_gmm_1d(std::vector<double> values, int components,
                                              int max_iters = 50, double tol = 1e-6) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    std::vector<GaussComponent> mix;
    const auto chunk_stats = [&](std::size_t lo, std::size_t hi) {
        GaussComponent c;
        c.weight = static_cast<double>(hi - lo) / static_cast<double>(n);
        double mean = 0.0;
        for (std::size_t i = lo; i < hi; ++i) mean += values[i];
        mean /= static_cast<double>(hi - lo);
        double var = 0.0;
        for (std::size_t i = lo; i < hi; ++i) var += (values[i] - mean) * (values[i] - mean);
        var /= static_cast<double>(hi - lo);
        c.mean = mean;
        c.variance = std::max(var, ObservationModel::kVarianceFloor);
        return c;
    };
    for (int j = 0; j < components; ++j) {
        const std::size_t lo = n * static_cast<std::size_t>(j) / components;
        const std::size_t hi = n * static_cast<std::size_t>(j + 1) / components;
        mix.push_back(chunk_stats(lo, hi));
    }

    std::vector<double> resp(n * mix.size());
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iters; ++it) {
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double norm = 0.0;
            for (std::size_t j = 0; j < mix.size(); ++j) {
                const auto& c = mix[j];
                const double d = values[i] - c.mean;
                const double p = c.weight *
                                 std::exp(-d * d / (2.0 * c.variance)) /
                                 std::sqrt(2.0 * std::numbers::pi * c.variance);
                resp[i * mix.size() + j] = p;
                norm += p;
            }
            norm = std::max(norm, 1e-300);
            for (std::size_t j = 0; j < mix.size(); ++j) resp[i * mix.size() + j] /= norm;
            ll += std::log(norm);
        }
        for (std::size_t j = 0; j < mix.size(); ++j) {
            double w = 0.0, mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                w += resp[i * mix.size() + j];
                mean += resp[i * mix.size() + j] * values[i];
            }
            if (w <= 1e-12) continue;
            mean /= w;
            double var = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                var += resp[i * mix.size() + j] * (values[i] - mean) * (values[i] - mean);
            mix[j].weight = w / static_cast<double>(n);
            mix[j].mean = mean;
            mix[j].variance = std::max(var / w, ObservationModel::kVarianceFloor);
        }
        if (std::abs(ll - prev_ll) < tol) break;
        prev_ll = ll;
    }
    double wsum = 0.0;
    for (const auto& c : mix) wsum += c.weight;
    for (auto& c : mix) c.weight /= wsum;
    return mix;
}

}  // namespace detail

/// Assigns every frame between the first and last sama to a cycle bin (linear
/// position between samas) and fits a per-bin GMM on the novelty values.
inline ObservationModel fit_observation_model(
    const std::vector<std::pair<NoveltySignal, AnnotationSequence>>& training,
    const TalaSpec& tala, int bins_per_cycle = 0, int components = 2) {
    if (bins_per_cycle <= 0) bins_per_cycle = 16 * tala.beats_per_cycle;
    if (components < 1) throw std::invalid_argument("fit_observation_model: components >= 1");
    ObservationModel model;
    model.bins_per_cycle = bins_per_cycle;
    model.num_patterns = 1;
    std::vector<std::vector<double>> bin_values(static_cast<std::size_t>(bins_per_cycle));

    for (const auto& [nov, ann] : training) {
        std::vector<double> samas;
        for (const auto& e : ann.events)
            if (e.cycle_position == 1) samas.push_back(e.time_sec);
        if (samas.size() < 2)
            throw std::invalid_argument(
                "fit_observation_model: every training pair must cover a full cycle");
        std::size_t cycle = 0;
        for (std::size_t f = 0; f < nov.values.size(); ++f) {
            const double t = frame_to_time(f, nov.grid);
            if (t < samas.front() || t >= samas.back()) continue;
            while (cycle + 2 < samas.size() && t >= samas[cycle + 1]) ++cycle;
            const double frac = (t - samas[cycle]) / (samas[cycle + 1] - samas[cycle]);
            const auto bin = std::min<std::size_t>(
                static_cast<std::size_t>(frac * bins_per_cycle),
                static_cast<std::size_t>(bins_per_cycle - 1));
            bin_values[bin].push_back(nov.values[f]);
        }
    }

    for (auto& values : bin_values) {
        if (values.empty()) {
            model.mixtures.push_back({GaussComponent{1.0, 0.0, 1.0}});
        } else if (static_cast<int>(values.size()) < components) {
            double mean = 0.0;
            for (double v : values) mean += v;
            mean /= static_cast<double>(values.size());
            double var = 0.0;
            for (double v : values) var += (v - mean) * (v - mean);
            var /= static_cast<double>(values.size());
            model.mixtures.push_back(
                {GaussComponent{1.0, mean, std::max(var, ObservationModel::kVarianceFloor)}});
        } else {
            model.mixtures.push_back(detail::fit_gmm_1d(values, components));
        }
    }
    model.validate();
    return model;
}

/// Untrained fallback: beat-aligned bins expect strong normalized novelty,
/// off-beat bins expect a low floor.
inline ObservationModel generic_observation_model(const TalaSpec& tala, int bins_per_beat = 16) {
    ObservationModel model;
    model.bins_per_cycle = bins_per_beat * tala.beats_per_cycle;
    model.num_patterns = 1;
    for (int b = 0; b < model.bins_per_cycle; ++b) {
        if (b % bins_per_beat == 0)
            model.mixtures.push_back({GaussComponent{1.0, 0.8, 0.1}});
        else
            model.mixtures.push_back({GaussComponent{1.0, 0.05, 0.05}});
    }
    model.validate();
    return model;
}

namespace detail {

inline RingHmm build_ring_hmm(const BarPointerStateSpace& space, const ObservationModel& model) {
    const auto num_tempi = space.num_tempi();
    const int r = space.num_patterns();
    RingHmm hmm;
    const std::size_t num_rings = num_tempi * static_cast<std::size_t>(r);
    hmm.ring_length.resize(num_rings);
    hmm.state_class.resize(num_rings);
    hmm.wrap_in.resize(num_rings);
    const auto ring_id = [&](int tempo, int pattern) {
        return static_cast<std::uint32_t>(static_cast<std::size_t>(tempo) * r + pattern);
    };
    for (std::size_t t = 0; t < num_tempi; ++t) {
        const int len = space.positions(static_cast<int>(t));
        for (int p = 0; p < r; ++p) {
            const auto id = ring_id(static_cast<int>(t), p);
            hmm.ring_length[id] = static_cast<std::uint32_t>(len);
            auto& cls = hmm.state_class[id];
            cls.resize(static_cast<std::size_t>(len));
            for (int pos = 0; pos < len; ++pos)
                cls[static_cast<std::size_t>(pos)] = static_cast<std::uint16_t>(
                    p * model.bins_per_cycle + cycle_bin_of_position(model, pos, len));
        }
    }
    for (std::size_t t = 0; t < num_tempi; ++t) {
        const BarPointerState wrap{space.positions(static_cast<int>(t)) - 1,
                                   static_cast<int>(t), 0};
        for (int p = 0; p < r; ++p) {
            BarPointerState from = wrap;
            from.pattern = p;
            for (const auto& [to, lp] : transition_step(space, from))
                hmm.wrap_in[ring_id(to.tempo, to.pattern)].push_back(
                    {ring_id(from.tempo, from.pattern), lp});
        }
    }
    hmm.finalize();
    return hmm;
}

/// Per-frame class log table: class id = pattern * bins_per_cycle + bin.
struct BinEmitter {
    const ObservationModel* model;
    const NoveltySignal* nov;
    mutable std::vector<double> logs;

    const std::vector<double>& operator()(std::size_t frame) const {
        const std::size_t n =
            static_cast<std::size_t>(model->num_patterns) * model->bins_per_cycle;
        logs.resize(n);
        const double v = nov->values[frame];
        for (std::size_t c = 0; c < n; ++c)
            logs[c] = log_mixture_density(model->mixtures[c], v);
        return logs;
    }
};

inline std::vector<BarPointerState> ring_path_to_states(const BarPointerStateSpace& space,
                                                        const std::vector<RingState>& path) {
    const int r = space.num_patterns();
    std::vector<BarPointerState> out(path.size());
    for (std::size_t k = 0; k < path.size(); ++k) {
        out[k] = {static_cast<int>(path[k].pos), static_cast<int>(path[k].ring / r),
                  static_cast<int>(path[k].ring % r)};
    }
    return out;
}

}  // namespace detail

/// Exact MAP decoding of the bar-pointer model over a novelty curve.
inline std::vector<BarPointerState> viterbi_decode(const BarPointerStateSpace& space,
                                                   const ObservationModel& model,
                                                   const NoveltySignal& nov) {
    if (nov.values.empty()) throw std::invalid_argument("viterbi_decode: empty novelty");
    model.validate();
    const auto hmm = detail::build_ring_hmm(space, model);
    const auto path = viterbi_rings(hmm, nov.values.size(),
                                    detail::BinEmitter{&model, &nov, {}});
    return detail::ring_path_to_states(space, path);
}

/// Bootstrap particle filter alternative; deterministic given the seed.
inline std::vector<BarPointerState> particle_filter_decode(const BarPointerStateSpace& space,
                                                           const ObservationModel& model,
                                                           const NoveltySignal& nov,
                                                           std::size_t num_particles,
                                                           std::uint64_t seed) {
    if (nov.values.empty()) throw std::invalid_argument("particle_filter_decode: empty novelty");
    model.validate();
    const auto hmm = detail::build_ring_hmm(space, model);
    const auto path = particle_filter_rings(hmm, nov.values.size(), num_particles, seed,
                                            detail::BinEmitter{&model, &nov, {}});
    return detail::ring_path_to_states(space, path);
}

/// Converts a decoded state path to beat and downbeat times. Downbeats fall on
/// position wraps; beats on every per-beat subdivision boundary crossing.
inline std::pair<BeatList, BeatList> states_to_meter(const std::vector<BarPointerState>& path,
                                                     const BarPointerStateSpace& space,
                                                     const FrameGrid& grid) {
    if (path.size() != grid.num_frames)
        throw std::invalid_argument("states_to_meter: path length != num_frames");
    BeatList beats, downbeats;
    const int b = space.tala().beats_per_cycle;
    const auto beat_index = [&](const BarPointerState& s) {
        return static_cast<long long>(s.position) * b / space.positions(s.tempo);
    };
    const auto on_boundary = [&](const BarPointerState& s) {
        const int n = space.positions(s.tempo);
        for (int j = 0; j < b; ++j)
            if (s.position == static_cast<int>(std::llround(static_cast<double>(j) * n / b)))
                return true;
        return false;
    };
    for (std::size_t k = 0; k < path.size(); ++k) {
        const double t = frame_to_time(k, grid);
        if (k == 0) {
            if (on_boundary(path[0])) beats.times.push_back(t);
            if (path[0].position * b < space.positions(path[0].tempo))
                downbeats.times.push_back(t);
            continue;
        }
        // A wrap is a reset to the start of the cycle, not any small backward
        // move: particle-filter paths may carry frame-level jitter from
        // resampling, and only a drop of more than half a cycle means the bar
        // actually turned over.
        const int prev_n = space.positions(path[k - 1].tempo);
        const bool wrap =
            path[k].position < path[k - 1].position &&
            path[k - 1].position - path[k].position > prev_n / 2;
        if (wrap) {
            beats.times.push_back(t);
            downbeats.times.push_back(t);
        } else if (beat_index(path[k]) > beat_index(path[k - 1])) {
            beats.times.push_back(t);
        }
    }
    return {std::move(beats), std::move(downbeats)};
}

}  // namespace meterkit
