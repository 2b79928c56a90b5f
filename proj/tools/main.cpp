// meterkit command-line tool: feature extraction, meter decoding, synthetic
// data generation, evaluation, and dataset utilities.

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "meterkit/audio.hpp"
#include "meterkit/barpointer.hpp"
#include "meterkit/dataio.hpp"
#include "meterkit/eval.hpp"
#include "meterkit/features.hpp"
#include "meterkit/losses.hpp"
#include "meterkit/model.hpp"
#include "meterkit/postproc.hpp"
#include "meterkit/pulse.hpp"
#include "meterkit/synth.hpp"

namespace mk = meterkit;
using mk::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

unsigned resolve_jobs(unsigned jobs) {
    if (jobs > 0) return jobs;
    if (const char* env = std::getenv("METERKIT_JOBS")) {
        const int v = std::atoi(env);
        if (v > 0) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
    jobs = std::min<unsigned>(jobs, static_cast<unsigned>(n));
    if (jobs <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (unsigned w = 0; w < jobs; ++w)
        workers.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    for (auto& t : workers) t.join();
}

int cmd_features(const std::string& audio_path, const std::string& out_path, double fps,
                 std::size_t window, double gamma) {
    const auto audio = mk::read_wav_mono(audio_path);
    const auto hop = static_cast<std::size_t>(std::llround(audio.sample_rate / fps));
    if (hop == 0) throw UsageError("fps too high for this sample rate");
    auto spec = mk::stft_magnitude(audio.samples, audio.sample_rate, window, hop);
    if (gamma > 0.0) spec = mk::log_compress(std::move(spec), gamma);
    const auto nov =
        mk::normalize_novelty(mk::spectral_flux(spec), mk::NoveltyNorm::Max);
    mk::write_novelty(nov, out_path);
    ordered_json j;
    j["frames"] = nov.grid.num_frames;
    j["frame_rate_hz"] = nov.grid.frame_rate_hz;
    j["duration_sec"] = nov.grid.duration_sec();
    std::cout << j.dump() << "\n";
    return kExitOk;
}

int cmd_track(const std::string& novelty_path, const std::string& tala_name, double min_tempo,
              double max_tempo, const std::string& decoder, const std::string& model_path,
              const std::string& fit_annotations, std::uint64_t seed, std::size_t particles,
              double target_bpm, double lambda, const std::string& out_beats,
              const std::string& out_downbeats) {
    if (!(min_tempo < max_tempo)) throw UsageError("--min-tempo must be below --max-tempo");
    const auto nov_raw = mk::read_novelty(novelty_path);
    const auto nov = mk::normalize_novelty(nov_raw, mk::NoveltyNorm::Max);

    if (decoder == "ellis") {
        const auto beats = mk::ellis_dp_beats(nov, target_bpm, lambda);
        mk::write_beats(beats, out_beats);
        mk::write_beats({}, out_downbeats);
        ordered_json j;
        j["decoder"] = decoder;
        j["beats"] = beats.size();
        std::cout << j.dump() << "\n";
        return kExitOk;
    }

    mk::TalaSpec tala;
    try {
        tala = mk::tala_by_name(tala_name);
    } catch (const std::exception&) {
        std::string names;
        for (const auto& t : mk::registered_talas()) names += " " + t.name;
        throw UsageError("unknown tala '" + tala_name + "'; registered:" + names);
    }

    mk::ObservationModel model;
    if (!model_path.empty()) {
        model = mk::observation_model_from_json(
            ordered_json::parse(mk::detail::read_file(model_path)));
    } else if (!fit_annotations.empty()) {
        const auto ann = mk::read_annotations(fit_annotations, tala);
        model = mk::fit_observation_model({{nov, ann}}, tala);
    } else {
        model = mk::generic_observation_model(tala);
    }

    const auto space =
        mk::build_state_space(tala, min_tempo, max_tempo, nov.grid.frame_rate_hz);
    std::vector<mk::BarPointerState> path;
    if (decoder == "viterbi") {
        path = mk::viterbi_decode(space, model, nov);
    } else if (decoder == "pf") {
        path = mk::particle_filter_decode(space, model, nov, particles, seed);
    } else {
        throw UsageError("unknown decoder '" + decoder + "' (viterbi|pf|ellis)");
    }
    const auto [beats, downbeats] = mk::states_to_meter(path, space, nov.grid);
    mk::write_beats(beats, out_beats);
    mk::write_beats(downbeats, out_downbeats);
    ordered_json j;
    j["decoder"] = decoder;
    j["tala"] = tala.name;
    j["beats"] = beats.size();
    j["downbeats"] = downbeats.size();
    std::cout << j.dump() << "\n";
    return kExitOk;
}

int cmd_postprocess(const std::string& activation_path, const mk::PostprocConfig& cfg,
                    const std::string& out_beats, const std::string& out_downbeats) {
    const auto act = mk::read_activations(activation_path);
    if (act.grid.num_frames == 0) throw UsageError("empty activation file");
    mk::PostprocConfig effective = cfg;
    effective.frame_rate_hz = act.grid.frame_rate_hz;
    const auto [beats, downbeats] = mk::postprocess_joint(act, effective);
    mk::write_beats(beats, out_beats);
    mk::write_beats(downbeats, out_downbeats);
    ordered_json j;
    j["beats_per_bar"] = effective.beats_per_bar;
    j["min_tempo"] = effective.min_tempo_bpm;
    j["max_tempo"] = effective.max_tempo_bpm;
    j["transition_lambda"] = effective.transition_lambda;
    j["beats"] = beats.size();
    j["downbeats"] = downbeats.size();
    std::cout << j.dump() << "\n";
    return kExitOk;
}

int cmd_evaluate(const std::string& manifest_path, const std::string& predictions_dir,
                 const std::string& out_report, const std::string& group_by, double tolerance,
                 unsigned jobs) {
    const auto manifest = mk::read_manifest(manifest_path);
    mk::EvalConfig cfg;
    cfg.f_tolerance_sec = tolerance;

    std::vector<mk::TrackRecord> rows(manifest.entries.size());
    std::vector<char> present(manifest.entries.size(), 0);
    std::vector<std::string> missing;
    parallel_for(manifest.entries.size(), resolve_jobs(jobs), [&](std::size_t i) {
        const auto& e = manifest.entries[i];
        const std::string beats_path = predictions_dir + "/" + e.track_id + ".beats.txt";
        const std::string downbeats_path =
            predictions_dir + "/" + e.track_id + ".downbeats.txt";
        mk::BeatList beats, downbeats;
        try {
            beats = mk::read_beats(beats_path);
            downbeats = mk::read_beats(downbeats_path);
        } catch (const std::exception&) {
            return;  // listed as missing below
        }
        const auto ann = mk::read_annotations(e.annotation_path, mk::tala_by_name(e.tala));
        auto rec = mk::evaluate_track(ann, beats, downbeats, cfg);
        rec.track_id = e.track_id;
        rows[i] = std::move(rec);
        present[i] = 1;
    });
    std::vector<mk::TrackRecord> kept;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (present[i])
            kept.push_back(std::move(rows[i]));
        else
            missing.push_back(manifest.entries[i].track_id);
    }
    if (kept.empty()) throw UsageError("no manifest track has a prediction pair");

    auto report = mk::aggregate(kept, group_by == "tala" ? mk::GroupBy::Tala
                                                         : mk::GroupBy::Overall);
    report.missing = std::move(missing);
    mk::write_report_json(report, out_report);
    mk::detail::write_file(out_report + ".csv", mk::report_to_csv(report));

    std::cerr << "group        beat_f  beat_cml_t  beat_aml_t  down_f  down_cml_t  down_aml_t\n";
    for (const auto& [name, r] : report.aggregates) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-12s %6.3f %11.3f %11.3f %7.3f %11.3f %11.3f\n",
                      name.c_str(), r.beat.f, r.beat.cml_t, r.beat.aml_t, r.downbeat.f,
                      r.downbeat.cml_t, r.downbeat.aml_t);
        std::cerr << line;
    }
    std::cout << mk::report_to_json(report).dump() << "\n";
    return kExitOk;
}

int cmd_stats(const std::string& manifest_path, const std::string& out_csv) {
    const auto manifest = mk::read_manifest(manifest_path);
    const auto stats = mk::dataset_stats(manifest);
    ordered_json j;
    j["per_tala"] = ordered_json::object();
    for (const auto& [tala, ts] : stats.per_tala) {
        ordered_json jt;
        jt["pieces"] = ts.piece_count;
        jt["total_duration_sec"] = ts.total_duration_sec;
        jt["median_duration_sec"] = ts.median_duration_sec;
        jt["annotations"] = ts.annotation_count;
        jt["samas"] = ts.sama_count;
        j["per_tala"][tala] = std::move(jt);
    }
    j["errors"] = ordered_json::array();
    for (const auto& [id, msg] : stats.errors)
        j["errors"].push_back({{"track_id", id}, {"message", msg}});
    std::cout << j.dump() << "\n";
    if (!out_csv.empty()) {
        std::string csv = "track_id,tala,median_bpm,min_cycle,max_cycle,median_cycle\n";
        for (const auto& t : stats.tracks) {
            csv += t.track_id + "," + t.tala;
            csv += t.median_bpm ? "," + mk::detail::fixed3(*t.median_bpm) : ",";
            if (t.cycles)
                csv += "," + mk::detail::fixed3(t.cycles->min_sec) + "," +
                       mk::detail::fixed3(t.cycles->max_sec) + "," +
                       mk::detail::fixed3(t.cycles->median_sec);
            else
                csv += ",,,";
            csv += "\n";
        }
        mk::detail::write_file(out_csv, csv);
    }
    return kExitOk;
}

int cmd_split(const std::string& manifest_path, std::uint64_t seed, double val_fraction,
              const std::string& out_plan) {
    const auto manifest = mk::read_manifest(manifest_path);
    const auto plan = mk::stratified_split(manifest, seed, val_fraction);
    mk::detail::write_file(out_plan, mk::split_plan_to_json(plan).dump(2) + "\n");
    ordered_json j;
    j["seed"] = seed;
    j["tracks"] = plan.assignments.size();
    std::cout << j.dump() << "\n";
    return kExitOk;
}

int cmd_synth(const mk::SynthSpec& spec, double fps, bool off_phase,
              const std::string& out_annotations, const std::string& out_novelty,
              const std::string& out_activations) {
    const mk::FrameGrid grid(fps, static_cast<std::size_t>(std::ceil(spec.duration_sec * fps)));
    const auto ann = mk::generate_annotations(spec);
    if (!out_annotations.empty()) mk::write_annotations(ann, out_annotations);
    if (!out_novelty.empty()) mk::write_novelty(mk::generate_novelty(spec, grid, ann), out_novelty);
    if (!out_activations.empty())
        mk::write_activations(mk::generate_activations(spec, grid, off_phase), out_activations);
    ordered_json j;
    j["tala"] = spec.tala.name;
    j["events"] = ann.events.size();
    j["duration_sec"] = spec.duration_sec;
    std::cout << j.dump() << "\n";
    return kExitOk;
}

int cmd_score_activations(const std::string& activation_path, const std::string& annotation_path,
                          const std::string& tala_name, double positive_weight) {
    const auto act = mk::read_activations(activation_path);
    const auto ann = mk::read_annotations(annotation_path, mk::tala_by_name(tala_name));
    const auto [beats, downbeats] = mk::annotations_to_beats_and_downbeats(ann);
    const auto beat_targets = mk::targets_from_beats(beats, act.grid);
    const auto down_targets = mk::targets_from_beats(downbeats, act.grid);

    mk::LossConfig cfg;
    cfg.positive_weight = positive_weight > 0.0
                              ? positive_weight
                              : std::max(1e-9, mk::positive_weight_from_targets({beat_targets}));
    ordered_json j;
    j["bce_beat"] = mk::bce_loss(beat_targets, act.beat).loss;
    j["bce_downbeat"] = mk::bce_loss(down_targets, act.downbeat).loss;
    j["combined"] = mk::combined_meter_loss(beat_targets, act.beat, down_targets, act.downbeat);
    j["shift_tolerant_beat"] = mk::shift_tolerant_bce(beat_targets, act.beat, cfg).loss;
    j["shift_tolerant_downbeat"] = mk::shift_tolerant_bce(down_targets, act.downbeat, cfg).loss;
    j["positive_weight"] = cfg.positive_weight;
    std::cout << j.dump() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"meter tracking toolkit"};
    app.require_subcommand(1);

    // features
    std::string audio_path, out_novelty;
    double fps = 100.0, gamma = 100.0;
    std::size_t window = 1024;
    auto* features = app.add_subcommand("features", "extract a spectral-flux novelty curve");
    features->add_option("--audio", audio_path)->required();
    features->add_option("--out", out_novelty)->required();
    features->add_option("--fps", fps);
    features->add_option("--window", window);
    features->add_option("--gamma", gamma);

    // track
    std::string novelty_path, tala_name = "adi", decoder = "viterbi";
    std::string model_path, fit_annotations, out_beats, out_downbeats;
    double min_tempo = 55.0, max_tempo = 230.0, target_bpm = 120.0, ellis_lambda = 100.0;
    std::uint64_t seed = 42;
    std::size_t particles = 2000;
    auto* track = app.add_subcommand("track", "decode beats/downbeats from a novelty curve");
    track->add_option("--novelty", novelty_path)->required();
    track->add_option("--tala", tala_name);
    track->add_option("--min-tempo", min_tempo);
    track->add_option("--max-tempo", max_tempo);
    track->add_option("--decoder", decoder);
    track->add_option("--model", model_path);
    track->add_option("--fit-annotations", fit_annotations);
    track->add_option("--seed", seed);
    track->add_option("--particles", particles);
    track->add_option("--target-bpm", target_bpm);
    track->add_option("--lambda", ellis_lambda);
    track->add_option("--out-beats", out_beats)->required();
    track->add_option("--out-downbeats", out_downbeats)->required();

    // postprocess
    std::string activation_path, preset;
    mk::PostprocConfig ppcfg;
    auto* postprocess =
        app.add_subcommand("postprocess", "joint HMM decoding of activation curves");
    postprocess->add_option("--activations", activation_path)->required();
    postprocess->add_option("--preset", preset)->check(CLI::IsMember({"cmr", "default"}));
    postprocess->add_option("--beats-per-bar", ppcfg.beats_per_bar);
    postprocess->add_option("--min-tempo", ppcfg.min_tempo_bpm);
    postprocess->add_option("--max-tempo", ppcfg.max_tempo_bpm);
    postprocess->add_option("--transition-lambda", ppcfg.transition_lambda);
    postprocess->add_option("--out-beats", out_beats)->required();
    postprocess->add_option("--out-downbeats", out_downbeats)->required();

    // evaluate
    std::string manifest_path, predictions_dir, out_report, group_by = "overall";
    double tolerance = 0.07;
    unsigned jobs = 0;
    auto* evaluate = app.add_subcommand("evaluate", "score predictions against a manifest");
    evaluate->add_option("--manifest", manifest_path)->required();
    evaluate->add_option("--predictions-dir", predictions_dir)->required();
    evaluate->add_option("--out-report", out_report)->required();
    evaluate->add_option("--group-by", group_by)->check(CLI::IsMember({"overall", "tala"}));
    evaluate->add_option("--tolerance", tolerance);
    evaluate->add_option("--jobs", jobs);

    // stats
    std::string stats_manifest, stats_csv;
    auto* stats = app.add_subcommand("stats", "dataset statistics from a manifest");
    stats->add_option("--manifest", stats_manifest)->required();
    stats->add_option("--out-csv", stats_csv);

    // split
    std::string split_manifest, out_plan;
    std::uint64_t split_seed = 42;
    double val_fraction = 0.2;
    auto* split = app.add_subcommand("split", "stratified two-fold split plan");
    split->add_option("--manifest", split_manifest)->required();
    split->add_option("--seed", split_seed);
    split->add_option("--val-fraction", val_fraction);
    split->add_option("--out", out_plan)->required();

    // synth
    mk::SynthSpec synth_spec;
    std::string synth_tala = "rupaka";
    double synth_fps = 100.0;
    bool off_phase = false;
    std::string out_annotations, synth_novelty, out_activations;
    auto* synth = app.add_subcommand("synth", "generate synthetic tala ground truth");
    synth->add_option("--tala", synth_tala);
    synth->add_option("--tempo", synth_spec.tempo_bpm);
    synth->add_option("--duration", synth_spec.duration_sec);
    synth->add_option("--jitter", synth_spec.timing_jitter_std_sec);
    synth->add_option("--noise", synth_spec.noise_floor);
    synth->add_option("--spike-width", synth_spec.spike_width_frames);
    synth->add_option("--seed", synth_spec.seed);
    synth->add_option("--fps", synth_fps);
    synth->add_flag("--off-phase", off_phase);
    synth->add_option("--out-annotations", out_annotations);
    synth->add_option("--out-novelty", synth_novelty);
    synth->add_option("--out-activations", out_activations);

    // score-activations
    std::string score_activations_path, score_annotations_path, score_tala = "adi";
    double positive_weight = 0.0;
    auto* score = app.add_subcommand("score-activations",
                                     "loss-based activation quality scoring");
    score->add_option("--activations", score_activations_path)->required();
    score->add_option("--annotations", score_annotations_path)->required();
    score->add_option("--tala", score_tala);
    score->add_option("--w", positive_weight);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (features->parsed()) return cmd_features(audio_path, out_novelty, fps, window, gamma);
        if (track->parsed())
            return cmd_track(novelty_path, tala_name, min_tempo, max_tempo, decoder, model_path,
                             fit_annotations, seed, particles, target_bpm, ellis_lambda, out_beats,
                             out_downbeats);
        if (postprocess->parsed()) {
            if (preset == "cmr") {
                auto informed = mk::cmr_informed_config();
                if (postprocess->count("--beats-per-bar") == 0)
                    ppcfg.beats_per_bar = informed.beats_per_bar;
                if (postprocess->count("--min-tempo") == 0)
                    ppcfg.min_tempo_bpm = informed.min_tempo_bpm;
                if (postprocess->count("--max-tempo") == 0)
                    ppcfg.max_tempo_bpm = informed.max_tempo_bpm;
            }
            return cmd_postprocess(activation_path, ppcfg, out_beats, out_downbeats);
        }
        if (evaluate->parsed())
            return cmd_evaluate(manifest_path, predictions_dir, out_report, group_by, tolerance,
                                jobs);
        if (stats->parsed()) return cmd_stats(stats_manifest, stats_csv);
        if (split->parsed()) return cmd_split(split_manifest, split_seed, val_fraction, out_plan);
        if (synth->parsed()) {
            synth_spec.tala = mk::tala_by_name(synth_tala);
            return cmd_synth(synth_spec, synth_fps, off_phase, out_annotations, synth_novelty,
                             out_activations);
        }
        if (score->parsed())
            return cmd_score_activations(score_activations_path, score_annotations_path,
                                         score_tala, positive_weight);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitInternal;
}
