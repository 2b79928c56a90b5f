#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "meterkit/synth.hpp"

using namespace meterkit;

TEST_CASE("zero-jitter annotations are exactly isochronous") {
    SynthSpec spec;
    spec.tala = tala_rupaka();
    spec.tempo_bpm = 120.0;
    spec.duration_sec = 10.0;
    const auto ann = generate_annotations(spec);
    REQUIRE(ann.events.size() == 20);
    for (std::size_t i = 0; i < ann.events.size(); ++i) {
        CHECK_THAT(ann.events[i].time_sec,
                   Catch::Matchers::WithinAbs(0.5 * static_cast<double>(i), 1e-12));
        CHECK(ann.events[i].cycle_position == static_cast<int>(i % 3) + 1);
    }
    // Samas every 3 beats starting at t=0.
    for (std::size_t i = 0; i < ann.events.size(); i += 3)
        CHECK(ann.events[i].cycle_position == 1);
}

TEST_CASE("annotations are deterministic per seed and jitter-bounded") {
    SynthSpec spec;
    spec.tala = tala_adi();
    spec.tempo_bpm = 90.0;
    spec.duration_sec = 40.0;
    spec.timing_jitter_std_sec = 0.005;
    spec.seed = 7;
    const auto a = generate_annotations(spec);
    const auto b = generate_annotations(spec);
    CHECK(a.events == b.events);

    spec.seed = 8;
    const auto c = generate_annotations(spec);
    CHECK(a.events != c.events);

    // 5-sigma bound on the deviation from the nominal grid.
    const double ibi = 60.0 / spec.tempo_bpm;
    for (std::size_t i = 0; i < a.events.size(); ++i)
        CHECK(std::abs(a.events[i].time_sec - static_cast<double>(i) * ibi) < 5.0 * 0.005);
    // Strictly increasing even with jitter.
    for (std::size_t i = 1; i < a.events.size(); ++i)
        CHECK(a.events[i].time_sec > a.events[i - 1].time_sec);
}

TEST_CASE("spec validation") {
    SynthSpec spec;
    spec.tala = tala_rupaka();

    SECTION("bad tempo") {
        spec.tempo_bpm = 0.0;
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    }
    SECTION("jitter at half the inter-beat interval") {
        spec.timing_jitter_std_sec = 0.25;  // == ibi/2 at 120 BPM
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    }
    SECTION("accent profile length mismatch") {
        spec.accent_profile = {1.0, 0.5};
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    }
    SECTION("accent out of range") {
        spec.accent_profile = {1.0, 0.5, 0.0};
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    }
    SECTION("duration under one cycle") {
        spec.duration_sec = 1.0;  // rupaka cycle at 120 BPM is 1.5 s
        CHECK_THROWS_AS(generate_annotations(spec), std::invalid_argument);
    }
}

TEST_CASE("novelty places accent-scaled triangular spikes on the beats") {
    SynthSpec spec;
    spec.tala = tala_rupaka();
    spec.tempo_bpm = 120.0;
    spec.duration_sec = 6.0;
    spec.accent_profile = {1.0, 0.5, 0.5};
    spec.spike_width_frames = 3;
    const FrameGrid grid(100.0, 600);
    const auto ann = generate_annotations(spec);
    const auto nov = generate_novelty(spec, grid, ann);

    for (const auto& e : ann.events) {
        const auto f = time_to_frame(e.time_sec, grid);
        const double peak = e.cycle_position == 1 ? 1.0 : 0.5;
        CHECK(nov.values[f] == peak);
        // Triangular shoulders at half the peak for width 3.
        if (f > 0 && nov.values[f - 1] < peak)
            CHECK_THAT(nov.values[f - 1], Catch::Matchers::WithinAbs(0.5 * peak, 1e-12));
        if (f + 1 < grid.num_frames && nov.values[f + 1] < peak)
            CHECK_THAT(nov.values[f + 1], Catch::Matchers::WithinAbs(0.5 * peak, 1e-12));
    }
    // Frames far from any beat are exactly zero without a noise floor.
    CHECK(nov.values[25] == 0.0);
    CHECK(nov.values[125] == 0.0);

    SECTION("noise floor bounds the off-beat frames") {
        spec.noise_floor = 0.05;
        const auto noisy = generate_novelty(spec, grid, ann);
        CHECK(noisy.values[25] > 0.0);
        CHECK(noisy.values[25] <= 0.05);
        for (double v : noisy.values) CHECK((v >= 0.0 && v <= 1.0));
    }
    SECTION("grid shorter than the duration rejected") {
        CHECK_THROWS_AS(generate_novelty(spec, FrameGrid(100.0, 100), ann),
                        std::invalid_argument);
    }
}

TEST_CASE("activations mark beats and samas consistently") {
    SynthSpec spec;
    spec.tala = tala_khanda_chapu();
    spec.tempo_bpm = 150.0;
    spec.duration_sec = 8.0;
    spec.spike_width_frames = 3;
    const FrameGrid grid(100.0, 800);
    const auto ann = generate_annotations(spec);
    const auto act = generate_activations(spec, grid);
    act.validate();

    for (const auto& e : ann.events) {
        const auto f = time_to_frame(e.time_sec, grid);
        CHECK(act.beat[f] == 1.0);
        CHECK(act.downbeat[f] == (e.cycle_position == 1 ? 1.0 : 0.0));
    }
    // Downbeat mass never exceeds beat mass anywhere.
    for (std::size_t i = 0; i < grid.num_frames; ++i) CHECK(act.downbeat[i] <= act.beat[i]);

    SECTION("off-phase shifts beats by half an inter-beat interval") {
        const auto off = generate_activations(spec, grid, true);
        const double half_ibi = 0.5 * 60.0 / spec.tempo_bpm;
        for (const auto& e : ann.events) {
            const double t = e.time_sec + half_ibi;
            if (t >= grid.duration_sec()) continue;
            CHECK(off.beat[time_to_frame(t, grid)] == 1.0);
            CHECK(off.beat[time_to_frame(e.time_sec, grid)] < 1.0);
        }
    }
}
