#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace meterkit {

/// A state lattice made of position rings. Within a ring the position advances
/// deterministically by one per frame; at the wrap (end of ring) probability
/// mass may move to position 0 of other rings. Emissions are tied through a
/// per-state class id resolved against a per-frame class log-probability table.
///
/// This layout covers both the bar-pointer model (ring = tempo x pattern) and
/// the joint beat/downbeat post-processor (ring = meter x tempo), and keeps
/// Viterbi at O(states) per frame: mid-ring transitions are a pure index
/// rotation, so only wrap states need explicit work.
struct RingHmm {
    struct WrapArc {
        std::uint32_t from_ring;
        double log_prob;
    };

    std::vector<std::uint32_t> ring_length;
    std::vector<std::size_t> ring_base;                  // flat offset per ring
    std::vector<std::vector<WrapArc>> wrap_in;           // per target ring, sorted by from_ring
    std::vector<std::vector<std::uint16_t>> state_class; // per ring, per position
    std::size_t total_states = 0;

    void finalize() {
        ring_base.resize(ring_length.size());
        total_states = 0;
        for (std::size_t r = 0; r < ring_length.size(); ++r) {
            if (ring_length[r] == 0) throw std::invalid_argument("RingHmm: empty ring");
            ring_base[r] = total_states;
            total_states += ring_length[r];
        }
        for (auto& arcs : wrap_in)
            std::sort(arcs.begin(), arcs.end(),
                      [](const WrapArc& a, const WrapArc& b) { return a.from_ring < b.from_ring; });
    }

    /// Outgoing wrap arcs per source ring, in linear probability.
    std::vector<std::vector<std::pair<std::uint32_t, double>>> wrap_out() const {
        std::vector<std::vector<std::pair<std::uint32_t, double>>> out(ring_length.size());
        for (std::uint32_t to = 0; to < wrap_in.size(); ++to)
            for (const auto& arc : wrap_in[to])
                out[arc.from_ring].emplace_back(to, std::exp(arc.log_prob));
        return out;
    }
};

struct RingState {
    std::uint32_t ring = 0;
    std::uint32_t pos = 0;
};

/// Exact MAP path under a uniform initial distribution, ties toward the
/// smaller flat state index. frame_class_logs(k) must return log probabilities
/// indexed by state class, valid until the next call.
template <typename FrameClassLogs>
std::vector<RingState> viterbi_rings(const RingHmm& hmm, std::size_t num_frames,
                                     FrameClassLogs&& frame_class_logs) {
    if (num_frames == 0) throw std::invalid_argument("viterbi_rings: need >= 1 frame");
    const std::size_t num_rings = hmm.ring_length.size();
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();

    // delta[ring_base + phys] where phys = (pos - k) mod len.
    std::vector<double> delta(hmm.total_states);
    const double log_init = -std::log(static_cast<double>(hmm.total_states));
    {
        const std::vector<double>& logs = frame_class_logs(0);
        for (std::size_t r = 0; r < num_rings; ++r) {
            const auto len = hmm.ring_length[r];
            for (std::uint32_t p = 0; p < len; ++p)
                delta[hmm.ring_base[r] + p] = log_init + logs[hmm.state_class[r][p]];
        }
    }

    // Backpointers only at wrap entries: which ring fed position 0 at frame k.
    std::vector<std::uint32_t> wrap_bp(num_frames * num_rings, 0);
    std::vector<double> wrap_out_val(num_rings);
    for (std::size_t k = 1; k < num_frames; ++k) {
        for (std::size_t r = 0; r < num_rings; ++r) {
            const auto len = hmm.ring_length[r];
            const std::size_t phys_last = (len - 1 - (k - 1) % len + len) % len;
            wrap_out_val[r] = delta[hmm.ring_base[r] + phys_last];
        }
        for (std::size_t r = 0; r < num_rings; ++r) {
            double best = kNegInf;
            std::uint32_t best_from = 0;
            for (const auto& arc : hmm.wrap_in[r]) {
                const double cand = wrap_out_val[arc.from_ring] + arc.log_prob;
                if (cand > best) {
                    best = cand;
                    best_from = arc.from_ring;
                }
            }
            const auto len = hmm.ring_length[r];
            const std::size_t phys0 = (len - k % len) % len;
            delta[hmm.ring_base[r] + phys0] = best;
            wrap_bp[k * num_rings + r] = best_from;
        }
        const std::vector<double>& logs = frame_class_logs(k);
        for (std::size_t r = 0; r < num_rings; ++r) {
            const auto len = hmm.ring_length[r];
            double* d = delta.data() + hmm.ring_base[r];
            const std::uint16_t* cls = hmm.state_class[r].data();
            std::size_t phys = (len - k % len) % len;
            for (std::uint32_t p = 0; p < len; ++p) {
                d[phys] += logs[cls[p]];
                if (++phys == len) phys = 0;
            }
        }
    }

    // Final argmax in flat (ring, position) order, strict > keeps the smallest.
    RingState end;
    double best = kNegInf;
    for (std::size_t r = 0; r < num_rings; ++r) {
        const auto len = hmm.ring_length[r];
        for (std::uint32_t p = 0; p < len; ++p) {
            const std::size_t phys = (p + len - (num_frames - 1) % len) % len;
            const double v = delta[hmm.ring_base[r] + phys];
            if (v > best) {
                best = v;
                end = {static_cast<std::uint32_t>(r), p};
            }
        }
    }

    std::vector<RingState> path(num_frames);
    path[num_frames - 1] = end;
    for (std::size_t k = num_frames - 1; k > 0; --k) {
        const RingState cur = path[k];
        if (cur.pos > 0) {
            path[k - 1] = {cur.ring, cur.pos - 1};
        } else {
            const std::uint32_t from = wrap_bp[k * num_rings + cur.ring];
            path[k - 1] = {from, hmm.ring_length[from] - 1};
        }
    }
    return path;
}

/// Total log score of an explicit path (emissions + transitions + uniform
/// prior); -inf for transitions the lattice does not allow. Test oracle helper.
template <typename FrameClassLogs>
double path_log_score(const RingHmm& hmm, const std::vector<RingState>& path,
                      FrameClassLogs&& frame_class_logs) {
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    double score = -std::log(static_cast<double>(hmm.total_states));
    for (std::size_t k = 0; k < path.size(); ++k) {
        const auto& s = path[k];
        score += frame_class_logs(k)[hmm.state_class[s.ring][s.pos]];
        if (k == 0) continue;
        const auto& prev = path[k - 1];
        if (s.pos > 0) {
            if (s.ring != prev.ring || prev.pos + 1 != s.pos) return kNegInf;
        } else {
            if (prev.pos + 1 != hmm.ring_length[prev.ring]) return kNegInf;
            double lp = kNegInf;
            for (const auto& arc : hmm.wrap_in[s.ring])
                if (arc.from_ring == prev.ring) lp = arc.log_prob;
            if (lp == kNegInf) return kNegInf;
            score += lp;
        }
    }
    return score;
}

/// Bootstrap particle filter over the same lattice: deterministic given the
/// seed, systematic resampling when ESS drops below half the particle count.
/// Each particle carries a full state trajectory; the returned path is the
/// ancestral trajectory of the particle with the highest final weight (first
/// on ties), so the estimate is a single coherent path through the lattice.
template <typename FrameClassLogs>
std::vector<RingState> particle_filter_rings(const RingHmm& hmm, std::size_t num_frames,
                                             std::size_t num_particles, std::uint64_t seed,
                                             FrameClassLogs&& frame_class_logs) {
    if (num_frames == 0) throw std::invalid_argument("particle_filter_rings: need >= 1 frame");
    if (num_particles == 0)
        throw std::invalid_argument("particle_filter_rings: need >= 1 particle");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const auto out_arcs = hmm.wrap_out();

    std::vector<RingState> particles(num_particles);
    {
        std::uniform_int_distribution<std::size_t> flat(0, hmm.total_states - 1);
        for (auto& p : particles) {
            std::size_t idx = flat(rng);
            std::uint32_t r = 0;
            while (idx >= hmm.ring_length[r]) idx -= hmm.ring_length[r], ++r;
            p = {r, static_cast<std::uint32_t>(idx)};
        }
    }
    // Weights live in log domain so long runs of mismatched frames cannot
    // underflow a particle's weight to exactly zero and erase its history.
    std::vector<double> log_weights(num_particles, 0.0);
    std::vector<double> weights(num_particles);
    std::vector<RingState> scratch(num_particles);
    // Per-frame particle states plus the resampling genealogy, so the final
    // winner's full trajectory can be reconstructed.
    std::vector<RingState> history(num_frames * num_particles);
    std::vector<std::pair<std::size_t, std::vector<std::uint32_t>>> genealogy;

    for (std::size_t k = 0; k < num_frames; ++k) {
        if (k > 0) {
            for (auto& p : particles) {
                if (p.pos + 1 < hmm.ring_length[p.ring]) {
                    ++p.pos;
                } else {
                    const auto& arcs = out_arcs[p.ring];
                    double u = uni(rng), acc = 0.0;
                    std::uint32_t to = arcs.empty() ? p.ring : arcs.back().first;
                    for (const auto& [ring, prob] : arcs) {
                        acc += prob;
                        if (u <= acc) {
                            to = ring;
                            break;
                        }
                    }
                    p = {to, 0};
                }
            }
        }
        std::copy(particles.begin(), particles.end(), history.begin() + k * num_particles);
        const std::vector<double>& logs = frame_class_logs(k);
        double max_log = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < num_particles; ++i) {
            log_weights[i] += logs[hmm.state_class[particles[i].ring][particles[i].pos]];
            max_log = std::max(max_log, log_weights[i]);
        }
        double total = 0.0;
        for (std::size_t i = 0; i < num_particles; ++i) {
            weights[i] = std::exp(log_weights[i] - max_log);
            total += weights[i];
        }
        double ess_denom = 0.0;
        for (std::size_t i = 0; i < num_particles; ++i) {
            weights[i] /= total;
            ess_denom += weights[i] * weights[i];
        }

        if (1.0 / ess_denom < static_cast<double>(num_particles) / 2.0 &&
            k + 1 < num_frames) {
            const double step = 1.0 / static_cast<double>(num_particles);
            double u = uni(rng) * step;
            double cum = weights[0];
            std::size_t j = 0;
            std::vector<std::uint32_t> parent(num_particles);
            for (std::size_t i = 0; i < num_particles; ++i) {
                const double target = u + static_cast<double>(i) * step;
                while (cum < target && j + 1 < num_particles) cum += weights[++j];
                scratch[i] = particles[j];
                parent[i] = static_cast<std::uint32_t>(j);
            }
            particles.swap(scratch);
            // Roughening (jitter the offspring): resampling duplicates
            // particles whose subsequent dynamics are nearly deterministic, so
            // without perturbation the set would collapse to copies of a few
            // ancestors and could never refine its phase or tempo estimate.
            std::normal_distribution<double> pos_jitter(0.0, 1.5);
            for (auto& p : particles) {
                if (uni(rng) < 0.1 && hmm.ring_length.size() > 1) {
                    const double frac = (static_cast<double>(p.pos) + 0.5) /
                                        static_cast<double>(hmm.ring_length[p.ring]);
                    const std::uint32_t r2 =
                        (p.ring == 0) ? 1
                        : (p.ring + 1 == hmm.ring_length.size()) ? p.ring - 1
                        : (uni(rng) < 0.5 ? p.ring - 1 : p.ring + 1);
                    p.ring = r2;
                    p.pos = std::min(
                        static_cast<std::uint32_t>(frac *
                                                   static_cast<double>(hmm.ring_length[r2])),
                        hmm.ring_length[r2] - 1);
                }
                const long long len = static_cast<long long>(hmm.ring_length[p.ring]);
                long long np = static_cast<long long>(p.pos) +
                               std::llround(pos_jitter(rng));
                np %= len;
                if (np < 0) np += len;
                p.pos = static_cast<std::uint32_t>(np);
            }
            std::fill(log_weights.begin(), log_weights.end(), 0.0);
            genealogy.emplace_back(k, std::move(parent));
        }
    }

    // Backtrack the highest-final-weight particle through the genealogy.
    std::size_t idx = 0;
    for (std::size_t i = 1; i < num_particles; ++i)
        if (log_weights[i] > log_weights[idx]) idx = i;
    std::vector<RingState> path(num_frames);
    auto gen = genealogy.rbegin();
    for (std::size_t k = num_frames; k-- > 0;) {
        path[k] = history[k * num_particles + idx];
        // A resample at the end of frame k-1 reordered the indices used from
        // frame k onward; map back before reading frame k-1's history row.
        if (k > 0 && gen != genealogy.rend() && gen->first == k - 1) {
            idx = gen->second[idx];
            ++gen;
        }
    }
    return path;
}

}  // namespace meterkit
