#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "meterkit/barpointer.hpp"
#include "meterkit/eval.hpp"
#include "meterkit/model.hpp"
#include "meterkit/pulse.hpp"

namespace meterkit {

using ordered_json = nlohmann::ordered_json;

namespace detail {

inline std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

inline std::string fixed3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << content;
}

inline std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Annotations: CSV `time_sec,cycle_position`, no header, LF line endings.

inline AnnotationSequence read_annotations(const std::string& path, const TalaSpec& tala) {
    AnnotationSequence ann;
    ann.tala = tala;
    const auto lines = detail::split_lines(detail::read_file(path));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto comma = lines[i].find(',');
        if (comma == std::string::npos)
            throw std::runtime_error(path + ": malformed line " + std::to_string(i + 1));
        try {
            std::size_t used = 0;
            const double t = std::stod(lines[i].substr(0, comma), &used);
            const int pos = std::stoi(lines[i].substr(comma + 1));
            ann.events.push_back({t, pos});
        } catch (const std::exception&) {
            throw std::runtime_error(path + ": malformed line " + std::to_string(i + 1));
        }
        if (ann.events.size() > 1 &&
            !(ann.events.back().time_sec > ann.events[ann.events.size() - 2].time_sec))
            throw std::runtime_error(path + ": non-monotonic time at line " +
                                     std::to_string(i + 1));
    }
    ann.validate();
    return ann;
}

inline void write_annotations(const AnnotationSequence& ann, const std::string& path) {
    std::string out;
    for (const auto& e : ann.events)
        out += detail::fixed6(e.time_sec) + "," + std::to_string(e.cycle_position) + "\n";
    detail::write_file(path, out);
}

// ---------------------------------------------------------------------------
// Activations: TSV with a `# frame_rate_hz: <float>` header line.

inline ActivationPair read_activations(const std::string& path) {
    const auto lines = detail::split_lines(detail::read_file(path));
    const std::string header_prefix = "# frame_rate_hz: ";
    if (lines.empty() || lines[0].rfind(header_prefix, 0) != 0)
        throw std::runtime_error(path + ": missing frame_rate_hz header");
    ActivationPair act;
    const double rate = std::stod(lines[0].substr(header_prefix.size()));
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto tab = lines[i].find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error(path + ": malformed row at frame " + std::to_string(i - 1));
        const double b = std::stod(lines[i].substr(0, tab));
        const double d = std::stod(lines[i].substr(tab + 1));
        if (b < 0.0 || b > 1.0 || d < 0.0 || d > 1.0)
            throw std::runtime_error(path + ": value outside [0,1] at frame " +
                                     std::to_string(i - 1));
        act.beat.push_back(b);
        act.downbeat.push_back(d);
    }
    act.grid = FrameGrid(rate, act.beat.size());
    return act;
}

inline void write_activations(const ActivationPair& act, const std::string& path) {
    act.validate();
    std::ostringstream rate;
    rate << act.grid.frame_rate_hz;
    std::string out = "# frame_rate_hz: " + rate.str() + "\n";
    for (std::size_t i = 0; i < act.beat.size(); ++i)
        out += detail::fixed6(act.beat[i]) + "\t" + detail::fixed6(act.downbeat[i]) + "\n";
    detail::write_file(path, out);
}

// ---------------------------------------------------------------------------
// Beat lists: one time per line, 3 decimals.

inline BeatList read_beats(const std::string& path) {
    BeatList beats;
    for (const auto& line : detail::split_lines(detail::read_file(path))) {
        if (line.empty()) continue;
        beats.times.push_back(std::stod(line));
    }
    beats.validate();
    return beats;
}

inline void write_beats(const BeatList& beats, const std::string& path) {
    std::string out;
    for (double t : beats.times) out += detail::fixed3(t) + "\n";
    detail::write_file(path, out);
}

// ---------------------------------------------------------------------------
// Dataset manifest: versioned JSON array of entries.

struct ManifestEntry {
    std::string track_id;
    std::string tala;
    std::string annotation_path;
    std::optional<std::string> audio_path;
    std::optional<std::string> activation_path;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;

    void validate() const {
        std::map<std::string, int> seen;
        for (const auto& e : entries) {
            if (++seen[e.track_id] > 1)
                throw std::invalid_argument("DatasetManifest: duplicate track_id " + e.track_id);
            tala_by_name(e.tala);  // throws on unregistered names
        }
    }
};

inline DatasetManifest manifest_from_json(const ordered_json& j) {
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw std::runtime_error("manifest: unsupported or missing version");
    DatasetManifest m;
    for (const auto& e : j.at("entries")) {
        ManifestEntry entry;
        entry.track_id = e.at("track_id").get<std::string>();
        entry.tala = e.at("tala").get<std::string>();
        entry.annotation_path = e.at("annotation_path").get<std::string>();
        if (e.contains("audio_path")) entry.audio_path = e["audio_path"].get<std::string>();
        if (e.contains("activation_path"))
            entry.activation_path = e["activation_path"].get<std::string>();
        m.entries.push_back(std::move(entry));
    }
    m.validate();
    return m;
}

inline ordered_json manifest_to_json(const DatasetManifest& m) {
    ordered_json j;
    j["version"] = 1;
    j["entries"] = ordered_json::array();
    for (const auto& e : m.entries) {
        ordered_json je;
        je["track_id"] = e.track_id;
        je["tala"] = e.tala;
        je["annotation_path"] = e.annotation_path;
        if (e.audio_path) je["audio_path"] = *e.audio_path;
        if (e.activation_path) je["activation_path"] = *e.activation_path;
        j["entries"].push_back(std::move(je));
    }
    return j;
}

inline DatasetManifest read_manifest(const std::string& path) {
    return manifest_from_json(ordered_json::parse(detail::read_file(path)));
}

inline void write_manifest(const DatasetManifest& m, const std::string& path) {
    detail::write_file(path, manifest_to_json(m).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Stratified two-fold split with within-fold train/validation assignment.

enum class Fold { Fold1, Fold2 };
enum class Role { Train, Validation };

struct SplitAssignment {
    Fold fold = Fold::Fold1;
    Role role = Role::Train;
};

struct SplitPlan {
    std::map<std::string, SplitAssignment> assignments;  // track_id -> assignment
    std::uint64_t seed = 0;
    double val_fraction = 0.2;
};

namespace detail {

/// Largest-remainder apportionment of `total` over fractional ideals.
inline std::vector<std::size_t> largest_remainder(const std::vector<double>& ideals,
                                                  std::size_t total) {
    std::vector<std::size_t> counts(ideals.size());
    std::vector<std::pair<double, std::size_t>> rema;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < ideals.size(); ++i) {
        counts[i] = static_cast<std::size_t>(std::floor(ideals[i]));
        assigned += counts[i];
        rema.emplace_back(ideals[i] - std::floor(ideals[i]), i);
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t k = 0; assigned < total && k < rema.size(); ++k, ++assigned)
        ++counts[rema[k].second];
    return counts;
}

}  // namespace detail

inline SplitPlan stratified_split(const DatasetManifest& manifest, std::uint64_t seed,
                                  double val_fraction = 0.2) {
    manifest.validate();
    std::map<std::string, std::vector<std::string>> by_tala;
    for (const auto& e : manifest.entries) by_tala[e.tala].push_back(e.track_id);
    for (auto& [tala, ids] : by_tala) {
        if (ids.size() < 2)
            throw std::invalid_argument("stratified_split: tala '" + tala +
                                        "' has fewer than 2 tracks");
        std::sort(ids.begin(), ids.end());
    }

    std::mt19937_64 rng(seed);
    std::vector<std::string> talas;
    std::vector<double> half_ideals;
    for (auto& [tala, ids] : by_tala) {
        std::shuffle(ids.begin(), ids.end(), rng);
        talas.push_back(tala);
        half_ideals.push_back(static_cast<double>(ids.size()) / 2.0);
    }
    const std::size_t fold1_total = manifest.entries.size() / 2;
    const auto fold1_counts = detail::largest_remainder(half_ideals, fold1_total);

    SplitPlan plan;
    plan.seed = seed;
    plan.val_fraction = val_fraction;
    std::map<Fold, std::map<std::string, std::vector<std::string>>> folds;
    for (std::size_t i = 0; i < talas.size(); ++i) {
        const auto& ids = by_tala[talas[i]];
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const Fold f = k < fold1_counts[i] ? Fold::Fold1 : Fold::Fold2;
            folds[f][talas[i]].push_back(ids[k]);
        }
    }
    for (auto& [fold, groups] : folds) {
        std::size_t fold_size = 0;
        std::vector<double> val_ideals;
        std::vector<std::string> fold_talas;
        for (const auto& [tala, ids] : groups) {
            fold_size += ids.size();
            fold_talas.push_back(tala);
            val_ideals.push_back(val_fraction * static_cast<double>(ids.size()));
        }
        const auto val_total =
            static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(fold_size)));
        const auto val_counts = detail::largest_remainder(val_ideals, val_total);
        for (std::size_t i = 0; i < fold_talas.size(); ++i) {
            const auto& ids = groups[fold_talas[i]];
            for (std::size_t k = 0; k < ids.size(); ++k)
                plan.assignments[ids[k]] = {fold,
                                            k < val_counts[i] ? Role::Validation : Role::Train};
        }
    }
    return plan;
}

inline ordered_json split_plan_to_json(const SplitPlan& plan) {
    ordered_json j;
    j["seed"] = plan.seed;
    j["val_fraction"] = plan.val_fraction;
    j["assignments"] = ordered_json::object();
    for (const auto& [id, a] : plan.assignments) {
        ordered_json ja;
        ja["fold"] = a.fold == Fold::Fold1 ? 1 : 2;
        ja["role"] = a.role == Role::Train ? "train" : "validation";
        j["assignments"][id] = std::move(ja);
    }
    return j;
}

inline SplitPlan split_plan_from_json(const ordered_json& j) {
    SplitPlan plan;
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.val_fraction = j.at("val_fraction").get<double>();
    for (const auto& [id, ja] : j.at("assignments").items()) {
        SplitAssignment a;
        a.fold = ja.at("fold").get<int>() == 1 ? Fold::Fold1 : Fold::Fold2;
        a.role = ja.at("role").get<std::string>() == "train" ? Role::Train : Role::Validation;
        plan.assignments[id] = a;
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Interleaved ordering: each group's tracks at evenly spaced fractional
// positions, union sorted by position (ties by group name).

inline std::vector<std::string> interleave_order(
    const std::map<std::string, std::vector<std::string>>& groups, std::uint64_t seed) {
    if (groups.empty()) return {};
    std::mt19937_64 rng(seed);
    std::vector<std::tuple<double, std::string, std::string>> placed;
    for (const auto& [name, ids] : groups) {
        auto shuffled = ids;
        std::sort(shuffled.begin(), shuffled.end());
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        const double n = static_cast<double>(shuffled.size());
        for (std::size_t i = 0; i < shuffled.size(); ++i)
            placed.emplace_back((static_cast<double>(i) + 0.5) / n, name, shuffled[i]);
    }
    std::stable_sort(placed.begin(), placed.end(), [](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
        return std::get<1>(a) < std::get<1>(b);
    });
    std::vector<std::string> out;
    out.reserve(placed.size());
    for (const auto& p : placed) out.push_back(std::get<2>(p));
    return out;
}

// ---------------------------------------------------------------------------
// Dataset statistics.

struct TrackStats {
    std::string track_id;
    std::string tala;
    double duration_sec = 0.0;
    std::size_t annotation_count = 0;
    std::size_t sama_count = 0;
    std::optional<double> median_bpm;
    std::optional<CycleStats> cycles;
};

struct TalaStats {
    std::size_t piece_count = 0;
    double total_duration_sec = 0.0;
    double median_duration_sec = 0.0;
    std::size_t annotation_count = 0;
    std::size_t sama_count = 0;
};

struct DatasetStats {
    std::vector<TrackStats> tracks;
    std::map<std::string, TalaStats> per_tala;
    std::vector<std::pair<std::string, std::string>> errors;  // (track_id, message)
};

inline DatasetStats dataset_stats(const DatasetManifest& manifest) {
    DatasetStats stats;
    std::map<std::string, std::vector<double>> durations;
    for (const auto& e : manifest.entries) {
        TrackStats ts;
        ts.track_id = e.track_id;
        ts.tala = e.tala;
        try {
            const auto ann = read_annotations(e.annotation_path, tala_by_name(e.tala));
            ts.annotation_count = ann.events.size();
            for (const auto& ev : ann.events)
                if (ev.cycle_position == 1) ++ts.sama_count;
            ts.duration_sec = ann.events.empty() ? 0.0 : ann.events.back().time_sec;
            const auto [beats, downbeats] = annotations_to_beats_and_downbeats(ann);
            if (beats.size() >= 2) ts.median_bpm = median_tempo_bpm(beats);
            if (downbeats.size() >= 2) ts.cycles = cycle_duration_stats(ann);
        } catch (const std::exception& ex) {
            stats.errors.emplace_back(e.track_id, ex.what());
            continue;
        }
        auto& agg = stats.per_tala[e.tala];
        ++agg.piece_count;
        agg.total_duration_sec += ts.duration_sec;
        agg.annotation_count += ts.annotation_count;
        agg.sama_count += ts.sama_count;
        durations[e.tala].push_back(ts.duration_sec);
        stats.tracks.push_back(std::move(ts));
    }
    for (auto& [tala, ds] : durations) {
        std::sort(ds.begin(), ds.end());
        const std::size_t n = ds.size();
        stats.per_tala[tala].median_duration_sec =
            n % 2 == 1 ? ds[n / 2] : 0.5 * (ds[n / 2 - 1] + ds[n / 2]);
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Evaluation report serialization (JSON + CSV).

namespace detail {

inline ordered_json metric_set_to_json(const MetricSet& m, const std::string& prefix) {
    ordered_json j;
    j[prefix + "_f"] = m.f;
    j[prefix + "_cml_c"] = m.cml_c;
    j[prefix + "_cml_t"] = m.cml_t;
    j[prefix + "_aml_c"] = m.aml_c;
    j[prefix + "_aml_t"] = m.aml_t;
    return j;
}

inline MetricSet metric_set_from_json(const ordered_json& j, const std::string& prefix) {
    MetricSet m;
    m.f = j.at(prefix + "_f").get<double>();
    m.cml_c = j.at(prefix + "_cml_c").get<double>();
    m.cml_t = j.at(prefix + "_cml_t").get<double>();
    m.aml_c = j.at(prefix + "_aml_c").get<double>();
    m.aml_t = j.at(prefix + "_aml_t").get<double>();
    return m;
}

inline ordered_json track_record_to_json(const TrackRecord& r) {
    ordered_json j;
    j["track_id"] = r.track_id;
    j["tala"] = r.tala;
    j.update(metric_set_to_json(r.beat, "beat"));
    j.update(metric_set_to_json(r.downbeat, "downbeat"));
    return j;
}

inline TrackRecord track_record_from_json(const ordered_json& j) {
    TrackRecord r;
    r.track_id = j.at("track_id").get<std::string>();
    r.tala = j.at("tala").get<std::string>();
    r.beat = metric_set_from_json(j, "beat");
    r.downbeat = metric_set_from_json(j, "downbeat");
    return r;
}

}  // namespace detail

inline ordered_json report_to_json(const EvalReport& report) {
    ordered_json j;
    j["version"] = 1;
    j["tracks"] = ordered_json::array();
    for (const auto& r : report.rows) j["tracks"].push_back(detail::track_record_to_json(r));
    j["aggregates"] = ordered_json::array();
    for (const auto& [name, r] : report.aggregates) {
        auto ja = detail::track_record_to_json(r);
        ja["group"] = name;
        j["aggregates"].push_back(std::move(ja));
    }
    j["missing"] = report.missing;
    return j;
}

inline EvalReport report_from_json(const ordered_json& j) {
    EvalReport report;
    for (const auto& jr : j.at("tracks")) report.rows.push_back(detail::track_record_from_json(jr));
    for (const auto& ja : j.at("aggregates"))
        report.aggregates.emplace_back(ja.at("group").get<std::string>(),
                                       detail::track_record_from_json(ja));
    for (const auto& m : j.at("missing")) report.missing.push_back(m.get<std::string>());
    return report;
}

inline void write_report_json(const EvalReport& report, const std::string& path) {
    detail::write_file(path, report_to_json(report).dump(2) + "\n");
}

inline EvalReport read_report_json(const std::string& path) {
    return report_from_json(ordered_json::parse(detail::read_file(path)));
}

inline std::string report_to_csv(const EvalReport& report) {
    std::string out =
        "track_id,tala,beat_f,beat_cml_c,beat_cml_t,beat_aml_c,beat_aml_t,"
        "downbeat_f,downbeat_cml_c,downbeat_cml_t,downbeat_aml_c,downbeat_aml_t\n";
    const auto row = [](const TrackRecord& r) {
        std::string s = r.track_id + "," + r.tala;
        for (double v : {r.beat.f, r.beat.cml_c, r.beat.cml_t, r.beat.aml_c, r.beat.aml_t,
                         r.downbeat.f, r.downbeat.cml_c, r.downbeat.cml_t, r.downbeat.aml_c,
                         r.downbeat.aml_t})
            s += "," + detail::fixed6(v);
        return s + "\n";
    };
    for (const auto& r : report.rows) out += row(r);
    return out;
}

// ---------------------------------------------------------------------------
// Observation model serialization (versioned JSON).

inline ordered_json observation_model_to_json(const ObservationModel& model) {
    model.validate();
    ordered_json j;
    j["version"] = 1;
    j["bins_per_cycle"] = model.bins_per_cycle;
    j["num_patterns"] = model.num_patterns;
    j["mixtures"] = ordered_json::array();
    for (const auto& mix : model.mixtures) {
        ordered_json jm = ordered_json::array();
        for (const auto& c : mix) {
            ordered_json jc;
            jc["weight"] = c.weight;
            jc["mean"] = c.mean;
            jc["variance"] = c.variance;
            jm.push_back(std::move(jc));
        }
        j["mixtures"].push_back(std::move(jm));
    }
    return j;
}

inline ObservationModel observation_model_from_json(const ordered_json& j) {
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw std::runtime_error("observation model: unsupported or missing version");
    ObservationModel model;
    model.bins_per_cycle = j.at("bins_per_cycle").get<int>();
    model.num_patterns = j.at("num_patterns").get<int>();
    for (const auto& jm : j.at("mixtures")) {
        std::vector<GaussComponent> mix;
        for (const auto& jc : jm)
            mix.push_back({jc.at("weight").get<double>(), jc.at("mean").get<double>(),
                           jc.at("variance").get<double>()});
        model.mixtures.push_back(std::move(mix));
    }
    model.validate();
    return model;
}

// ---------------------------------------------------------------------------
// Novelty file: same TSV idea as activations, one value column.

inline NoveltySignal read_novelty(const std::string& path) {
    const auto lines = detail::split_lines(detail::read_file(path));
    const std::string header_prefix = "# frame_rate_hz: ";
    if (lines.empty() || lines[0].rfind(header_prefix, 0) != 0)
        throw std::runtime_error(path + ": missing frame_rate_hz header");
    NoveltySignal nov;
    const double rate = std::stod(lines[0].substr(header_prefix.size()));
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        nov.values.push_back(std::stod(lines[i]));
    }
    nov.grid = FrameGrid(rate, nov.values.size());
    nov.validate();
    return nov;
}

inline void write_novelty(const NoveltySignal& nov, const std::string& path) {
    nov.validate();
    std::ostringstream rate;
    rate << nov.grid.frame_rate_hz;
    std::string out = "# frame_rate_hz: " + rate.str() + "\n";
    for (double v : nov.values) out += detail::fixed6(v) + "\n";
    detail::write_file(path, out);
}

}  // namespace meterkit
