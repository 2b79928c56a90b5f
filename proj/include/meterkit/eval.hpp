#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "meterkit/model.hpp"

namespace meterkit {

struct MatchResult {
    std::size_t n_tp = 0;
    std::size_t n_fp = 0;
    std::size_t n_fn = 0;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (ref index, pred index)
};

/// Greedy chronological one-to-one matching: each prediction in time order is
/// matched to the nearest unmatched reference within +-tolerance (closed window,
/// ties toward the earlier reference).
inline MatchResult match_events(const BeatList& refs, const BeatList& preds,
                                double tolerance_sec) {
    if (tolerance_sec < 0.0) throw std::invalid_argument("match_events: negative tolerance");
    MatchResult res;
    std::vector<bool> used(refs.size(), false);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        long long best = -1;
        double best_dist = tolerance_sec;
        for (std::size_t j = 0; j < refs.size(); ++j) {
            if (used[j]) continue;
            const double d = std::abs(preds.times[i] - refs.times[j]);
            if (d < best_dist || (d == best_dist && best < 0)) {
                best = static_cast<long long>(j);
                best_dist = d;
            }
        }
        if (best >= 0) {
            used[static_cast<std::size_t>(best)] = true;
            res.pairs.emplace_back(static_cast<std::size_t>(best), i);
        }
    }
    res.n_tp = res.pairs.size();
    res.n_fp = preds.size() - res.n_tp;
    res.n_fn = refs.size() - res.n_tp;
    return res;
}

struct FScore {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
};

inline FScore f_measure(const BeatList& refs, const BeatList& preds,
                        double tolerance_sec = 0.07) {
    if (refs.empty() && preds.empty()) return {1.0, 1.0, 1.0};
    if (refs.empty() || preds.empty()) return {0.0, 0.0, 0.0};
    const auto m = match_events(refs, preds, tolerance_sec);
    const double tp = static_cast<double>(m.n_tp);
    const double p = tp / static_cast<double>(m.n_tp + m.n_fp);
    const double r = tp / static_cast<double>(m.n_tp + m.n_fn);
    const double f = (p + r > 0.0) ? 2.0 * p * r / (p + r) : 0.0;
    return {p, r, f};
}

/// Reference grids at related metrical levels used by the AML metrics.
inline std::vector<std::pair<std::string, BeatList>> metrical_variants(const BeatList& refs) {
    std::vector<std::pair<std::string, BeatList>> out;
    out.emplace_back("identity", refs);
    if (refs.size() < 2) return out;

    BeatList off, dbl, half_even, half_odd;
    for (std::size_t i = 0; i + 1 < refs.size(); ++i)
        off.times.push_back(0.5 * (refs.times[i] + refs.times[i + 1]));
    for (std::size_t i = 0; i < refs.size(); ++i) {
        dbl.times.push_back(refs.times[i]);
        if (i + 1 < refs.size()) dbl.times.push_back(0.5 * (refs.times[i] + refs.times[i + 1]));
        if (i % 2 == 0)
            half_even.times.push_back(refs.times[i]);
        else
            half_odd.times.push_back(refs.times[i]);
    }
    out.emplace_back("off_phase", std::move(off));
    out.emplace_back("double", std::move(dbl));
    out.emplace_back("half_even", std::move(half_even));
    out.emplace_back("half_odd", std::move(half_odd));
    return out;
}

struct ContinuityScores {
    double cml_c = 0.0;
    double cml_t = 0.0;
    double aml_c = 0.0;
    double aml_t = 0.0;
};

struct ContinuityConfig {
    double phase_tolerance = 0.175;    // fraction of the local inter-beat interval
    std::size_t min_segment_len = 3;   // segments shorter than this do not count
};

namespace detail {

inline double local_ibi(const BeatList& refs, std::size_t j) {
    if (j == 0) return refs.times[1] - refs.times[0];
    return refs.times[j] - refs.times[j - 1];
}

inline std::size_t nearest_ref(const BeatList& refs, double t) {
    const auto it = std::lower_bound(refs.times.begin(), refs.times.end(), t);
    if (it == refs.times.begin()) return 0;
    if (it == refs.times.end()) return refs.size() - 1;
    const auto hi = static_cast<std::size_t>(it - refs.times.begin());
    return (t - refs.times[hi - 1] <= refs.times[hi] - t) ? hi - 1 : hi;
}

/// Per-level continuity: (longest qualifying segment, total beats in qualifying
/// segments), both divided by the prediction count by the caller.
inline std::pair<std::size_t, std::size_t> continuity_counts(const BeatList& refs,
                                                             const BeatList& preds,
                                                             const ContinuityConfig& cfg) {
    if (refs.size() < 2 || preds.empty()) return {0, 0};
    std::vector<bool> correct(preds.size(), false);
    std::vector<bool> in_window(preds.size(), false);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const std::size_t j = nearest_ref(refs, preds.times[i]);
        const double window = cfg.phase_tolerance * local_ibi(refs, j);
        in_window[i] = std::abs(preds.times[i] - refs.times[j]) <= window;
        if (i == 0) {
            // The first prediction has no preceding interval; condition (1) only.
            correct[i] = in_window[i];
            continue;
        }
        const double pred_ibi = preds.times[i] - preds.times[i - 1];
        const double ref_ibi = local_ibi(refs, j);
        const bool tempo_ok = std::abs(pred_ibi - ref_ibi) <= cfg.phase_tolerance * ref_ibi;
        correct[i] = in_window[i] && in_window[i - 1] && tempo_ok;
    }
    std::size_t longest = 0, total = 0, run = 0;
    const auto close_run = [&] {
        if (run >= cfg.min_segment_len) {
            longest = std::max(longest, run);
            total += run;
        }
        run = 0;
    };
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (correct[i])
            ++run;
        else
            close_run();
    }
    close_run();
    return {longest, total};
}

}  // namespace detail

inline ContinuityScores continuity_metrics(const BeatList& refs, const BeatList& preds,
                                           const ContinuityConfig& cfg = {}) {
    if (!(cfg.phase_tolerance > 0.0 && cfg.phase_tolerance < 0.5))
        throw std::invalid_argument("continuity_metrics: phase_tolerance must be in (0, 0.5)");
    ContinuityScores s;
    if (refs.empty() || preds.empty()) return s;
    const double n = static_cast<double>(preds.size());
    const auto [cml_seg, cml_all] = detail::continuity_counts(refs, preds, cfg);
    s.cml_c = static_cast<double>(cml_seg) / n;
    s.cml_t = static_cast<double>(cml_all) / n;
    for (const auto& [name, variant] : metrical_variants(refs)) {
        const auto [seg, all] = detail::continuity_counts(variant, preds, cfg);
        s.aml_c = std::max(s.aml_c, static_cast<double>(seg) / n);
        s.aml_t = std::max(s.aml_t, static_cast<double>(all) / n);
    }
    return s;
}

struct MetricSet {
    double f = 0.0;
    double cml_c = 0.0;
    double cml_t = 0.0;
    double aml_c = 0.0;
    double aml_t = 0.0;
};

struct TrackRecord {
    std::string track_id;
    std::string tala;
    MetricSet beat;
    MetricSet downbeat;
};

struct EvalConfig {
    double f_tolerance_sec = 0.07;
    ContinuityConfig continuity;
    bool downbeat_variants = true;  // apply AML variants to downbeats as well
};

inline MetricSet evaluate_level(const BeatList& refs, const BeatList& preds,
                                const EvalConfig& cfg, bool allow_variants) {
    MetricSet m;
    m.f = f_measure(refs, preds, cfg.f_tolerance_sec).f;
    auto cc = cfg.continuity;
    const auto s = continuity_metrics(refs, preds, cc);
    m.cml_c = s.cml_c;
    m.cml_t = s.cml_t;
    m.aml_c = allow_variants ? s.aml_c : s.cml_c;
    m.aml_t = allow_variants ? s.aml_t : s.cml_t;
    return m;
}

inline TrackRecord evaluate_track(const AnnotationSequence& ref_ann, const BeatList& pred_beats,
                                  const BeatList& pred_downbeats, const EvalConfig& cfg = {}) {
    const auto [ref_beats, ref_downbeats] = annotations_to_beats_and_downbeats(ref_ann);
    TrackRecord rec;
    rec.tala = ref_ann.tala.name;
    rec.beat = evaluate_level(ref_beats, pred_beats, cfg, true);
    rec.downbeat = evaluate_level(ref_downbeats, pred_downbeats, cfg, cfg.downbeat_variants);
    return rec;
}

struct EvalReport {
    std::vector<TrackRecord> rows;
    // Aggregate means keyed by group name; "overall" is always present.
    std::vector<std::pair<std::string, TrackRecord>> aggregates;
    std::vector<std::string> missing;
};

enum class GroupBy { Overall, Tala };

inline EvalReport aggregate(const std::vector<TrackRecord>& rows, GroupBy group_by) {
    if (rows.empty()) throw std::invalid_argument("aggregate: no rows");
    EvalReport report;
    report.rows = rows;
    const auto mean_of = [](const std::vector<const TrackRecord*>& group) {
        TrackRecord agg;
        const double n = static_cast<double>(group.size());
        for (const auto* r : group) {
            const auto add = [&](MetricSet& a, const MetricSet& b) {
                a.f += b.f / n;
                a.cml_c += b.cml_c / n;
                a.cml_t += b.cml_t / n;
                a.aml_c += b.aml_c / n;
                a.aml_t += b.aml_t / n;
            };
            add(agg.beat, r->beat);
            add(agg.downbeat, r->downbeat);
        }
        return agg;
    };
    std::vector<const TrackRecord*> all;
    for (const auto& r : rows) all.push_back(&r);
    auto overall = mean_of(all);
    overall.track_id = "overall";
    report.aggregates.emplace_back("overall", std::move(overall));
    if (group_by == GroupBy::Tala) {
        std::map<std::string, std::vector<const TrackRecord*>> groups;
        for (const auto& r : rows) groups[r.tala].push_back(&r);
        for (const auto& [tala, group] : groups) {
            auto agg = mean_of(group);
            agg.track_id = tala;
            agg.tala = tala;
            report.aggregates.emplace_back(tala, std::move(agg));
        }
    }
    return report;
}

}  // namespace meterkit
