#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "meterkit/eval.hpp"
#include "meterkit/postproc.hpp"
#include "meterkit/synth.hpp"

using namespace meterkit;

namespace {

ActivationPair meter_activations(int beats_per_bar, double tempo_bpm, double duration_sec,
                                 std::uint64_t seed = 42, double noise = 0.0) {
    SynthSpec spec;
    spec.tala = TalaSpec{"synthetic", beats_per_bar};
    spec.tempo_bpm = tempo_bpm;
    spec.duration_sec = duration_sec;
    spec.noise_floor = noise;
    spec.seed = seed;
    const FrameGrid grid(100.0, static_cast<std::size_t>(duration_sec * 100.0));
    return generate_activations(spec, grid);
}

}  // namespace

TEST_CASE("config presets") {
    const auto informed = cmr_informed_config();
    CHECK(informed.beats_per_bar == std::vector<int>{3, 5, 7, 8});
    CHECK(informed.min_tempo_bpm == 55.0);
    CHECK(informed.max_tempo_bpm == 230.0);
    CHECK(informed.frame_rate_hz == 100.0);
    CHECK(default_config().beats_per_bar == std::vector<int>{3, 4});

    PostprocConfig bad = informed;
    bad.min_tempo_bpm = 300.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = informed;
    bad.beats_per_bar = {1};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("sum_head_combine") {
    const auto act = sum_head_combine({0.0, 2.0, 0.0}, {0.0, -1.0, 20.0});
    CHECK_THAT(act.beat[0], Catch::Matchers::WithinAbs(0.5, 1e-12));
    CHECK_THAT(act.downbeat[0], Catch::Matchers::WithinAbs(0.5, 1e-12));
    CHECK_THAT(act.beat[1], Catch::Matchers::WithinAbs(1.0 / (1.0 + std::exp(-1.0)), 1e-12));
    CHECK_THAT(act.beat[2], Catch::Matchers::WithinAbs(1.0, 1e-6));  // large downbeat logit wins
    CHECK_THROWS_AS(sum_head_combine({0.0}, {0.0, 1.0}), std::invalid_argument);
}

TEST_CASE("joint decoding selects the right meter") {
    const auto act = meter_activations(3, 120.0, 20.0);
    const auto [beats, downbeats] = postprocess_joint(act, cmr_informed_config());
    BeatList ref_beats, ref_downbeats;
    for (double t = 0.0; t < 20.0; t += 0.5) ref_beats.times.push_back(t);
    for (double t = 0.0; t < 20.0; t += 1.5) ref_downbeats.times.push_back(t);
    CHECK(f_measure(ref_beats, beats).f >= 0.99);
    CHECK(f_measure(ref_downbeats, downbeats).f >= 0.99);

    SECTION("downbeats are a subset of beats") {
        for (double d : downbeats.times)
            CHECK(std::find(beats.times.begin(), beats.times.end(), d) != beats.times.end());
    }
    SECTION("IBIs stay within the tempo bounds") {
        for (std::size_t i = 1; i < beats.size(); ++i) {
            const double ibi = beats.times[i] - beats.times[i - 1];
            CHECK(ibi >= 60.0 / 230.0 - 0.011);
            CHECK(ibi <= 60.0 / 55.0 + 0.011);
        }
    }
}

TEST_CASE("restricting to a wrong meter forces mis-metered downbeats") {
    const auto act = meter_activations(3, 120.0, 20.0);
    PostprocConfig cfg = cmr_informed_config();
    cfg.beats_per_bar = {5};
    const auto [beats, downbeats] = postprocess_joint(act, cfg);
    BeatList ref_beats;
    for (double t = 0.0; t < 20.0; t += 0.5) ref_beats.times.push_back(t);
    CHECK(f_measure(ref_beats, beats).f >= 0.99);
    // Downbeats now come every 5 beats = 2.5 s instead of 1.5 s.
    REQUIRE(downbeats.size() >= 3);
    const double spacing = (downbeats.times.back() - downbeats.times.front()) /
                           static_cast<double>(downbeats.size() - 1);
    CHECK_THAT(spacing, Catch::Matchers::WithinAbs(2.5, 0.05));
}

TEST_CASE("all-zero activations still produce a tempo-bounded beat grid") {
    ActivationPair act;
    act.grid = FrameGrid(100.0, 1500);
    act.beat.assign(1500, 0.0);
    act.downbeat.assign(1500, 0.0);
    const auto [beats, downbeats] = postprocess_joint(act, default_config());
    REQUIRE(!beats.empty());
    for (std::size_t i = 1; i < beats.size(); ++i) {
        const double ibi = beats.times[i] - beats.times[i - 1];
        CHECK(ibi >= 60.0 / 215.0 - 0.011);
        CHECK(ibi <= 60.0 / 55.0 + 0.011);
    }
}

TEST_CASE("too-short activations yield empty outputs") {
    ActivationPair act;
    act.grid = FrameGrid(100.0, 50);  // shorter than one 55 BPM beat period
    act.beat.assign(50, 0.5);
    act.downbeat.assign(50, 0.5);
    const auto [beats, downbeats] = postprocess_joint(act, default_config());
    CHECK(beats.empty());
    CHECK(downbeats.empty());
}

TEST_CASE("decoding is invariant to a shared power transform of the activations") {
    // Raising both curves to a common power is monotone in the log domain and
    // must not change the argmax path's beat output.
    const auto act = meter_activations(3, 110.0, 12.0, 7, 0.02);
    PostprocConfig cfg;
    cfg.beats_per_bar = {3};
    cfg.min_tempo_bpm = 90.0;
    cfg.max_tempo_bpm = 140.0;
    const auto base = postprocess_joint(act, cfg);

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> pow_dist(0.5, 0.95);
    for (int trial = 0; trial < 5; ++trial) {
        ActivationPair scaled = act;
        const double p = pow_dist(rng);
        for (auto& v : scaled.beat) v = std::pow(v, p);
        for (auto& v : scaled.downbeat) v = std::pow(v, p);
        const auto out = postprocess_joint(scaled, cfg);
        REQUIRE(out.first.size() == base.first.size());
        for (std::size_t i = 0; i < out.first.size(); ++i)
            CHECK(std::abs(out.first.times[i] - base.first.times[i]) <= 0.011);
    }
}

TEST_CASE("idempotence: re-decoding activations built from the output is stable") {
    const auto act = meter_activations(3, 120.0, 15.0);
    PostprocConfig cfg;
    cfg.beats_per_bar = {3};
    cfg.min_tempo_bpm = 90.0;
    cfg.max_tempo_bpm = 150.0;
    const auto first = postprocess_joint(act, cfg);

    ActivationPair rebuilt;
    rebuilt.grid = act.grid;
    rebuilt.beat.assign(act.grid.num_frames, 0.0);
    rebuilt.downbeat.assign(act.grid.num_frames, 0.0);
    for (double t : first.first.times) {
        const auto f = time_to_frame(t, act.grid);
        rebuilt.beat[f] = 1.0;
        if (f > 0) rebuilt.beat[f - 1] = 0.5;
        if (f + 1 < act.grid.num_frames) rebuilt.beat[f + 1] = 0.5;
    }
    for (double t : first.second.times) rebuilt.downbeat[time_to_frame(t, act.grid)] = 1.0;
    const auto second = postprocess_joint(rebuilt, cfg);
    REQUIRE(second.first.size() == first.first.size());
    for (std::size_t i = 0; i < first.first.size(); ++i)
        CHECK(std::abs(second.first.times[i] - first.first.times[i]) <= 0.011);
}

TEST_CASE("meter selection across all four cycle lengths") {
    for (int b : {3, 5, 7, 8}) {
        const auto act = meter_activations(b, 120.0, 24.0, 100 + static_cast<std::uint64_t>(b));
        const auto [beats, downbeats] = postprocess_joint(act, cmr_informed_config());
        REQUIRE(downbeats.size() >= 3);
        const double spacing = (downbeats.times.back() - downbeats.times.front()) /
                               static_cast<double>(downbeats.size() - 1);
        CHECK_THAT(spacing, Catch::Matchers::WithinAbs(0.5 * b, 0.06));
    }
}
