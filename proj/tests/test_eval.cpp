#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "meterkit/eval.hpp"

using namespace meterkit;

namespace {

BeatList isochronous(double ibi, std::size_t count, double offset = 0.0) {
    BeatList b;
    for (std::size_t i = 0; i < count; ++i) b.times.push_back(offset + ibi * static_cast<double>(i));
    return b;
}

// Exhaustive optimal one-to-one matching for small instances: maximum TP count
// over all injective pred->ref assignments within the window.
std::size_t optimal_tp(const BeatList& refs, const BeatList& preds, double tol) {
    std::size_t best = 0;
    std::vector<int> assign(preds.size(), -1);
    const auto rec = [&](auto&& self, std::size_t i, std::vector<bool>& used,
                         std::size_t tp) -> void {
        if (i == preds.size()) {
            best = std::max(best, tp);
            return;
        }
        self(self, i + 1, used, tp);  // leave pred i unmatched
        for (std::size_t j = 0; j < refs.size(); ++j) {
            if (used[j] || std::abs(preds.times[i] - refs.times[j]) > tol) continue;
            used[j] = true;
            self(self, i + 1, used, tp + 1);
            used[j] = false;
        }
    };
    std::vector<bool> used(refs.size(), false);
    rec(rec, 0, used, 0);
    return best;
}

}  // namespace

TEST_CASE("match_events basics") {
    BeatList refs = isochronous(1.0, 4, 1.0);  // {1,2,3,4}
    BeatList preds;
    preds.times = {1.0, 2.5};
    const auto m = match_events(refs, preds, 0.07);
    CHECK(m.n_tp == 1);
    CHECK(m.n_fp == 1);
    CHECK(m.n_fn == 3);

    SECTION("identical lists all match") {
        const auto id = match_events(refs, refs, 0.07);
        CHECK(id.n_tp == 4);
        CHECK(id.n_fp == 0);
        CHECK(id.n_fn == 0);
    }
    SECTION("window is closed at the boundary") {
        // 0.0625 is exactly representable, so the distance computes to exactly
        // the tolerance.
        BeatList edge;
        edge.times = {1.0 + 0.0625};
        CHECK(match_events(refs, edge, 0.0625).n_tp == 1);
        edge.times = {1.0 + 0.0625 + 1e-7};
        CHECK(match_events(refs, edge, 0.0625).n_tp == 0);
    }
}

TEST_CASE("greedy matching never beats the optimal assignment") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> uni(0.0, 4.0);
    std::uniform_int_distribution<std::size_t> cnt(0, 8);
    for (int trial = 0; trial < 1000; ++trial) {
        BeatList refs, preds;
        refs.times.resize(cnt(rng));
        preds.times.resize(cnt(rng));
        for (auto& t : refs.times) t = uni(rng);
        for (auto& t : preds.times) t = uni(rng);
        std::sort(refs.times.begin(), refs.times.end());
        std::sort(preds.times.begin(), preds.times.end());
        const double tol = 0.25;
        const auto greedy = match_events(refs, preds, tol);
        CHECK(greedy.n_tp <= optimal_tp(refs, preds, tol));
        CHECK(greedy.n_tp + greedy.n_fp == preds.size());
        CHECK(greedy.n_tp + greedy.n_fn == refs.size());
    }
}

TEST_CASE("f_measure formulas and edge conventions") {
    BeatList refs = isochronous(1.0, 4, 1.0);
    BeatList preds;
    preds.times = {1.0, 2.5};
    const auto s = f_measure(refs, preds, 0.07);
    CHECK_THAT(s.precision, Catch::Matchers::WithinAbs(0.5, 1e-12));
    CHECK_THAT(s.recall, Catch::Matchers::WithinAbs(0.25, 1e-12));
    CHECK_THAT(s.f, Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));

    CHECK(f_measure({}, {}).f == 1.0);
    CHECK(f_measure(refs, {}).f == 0.0);
    CHECK(f_measure({}, preds).f == 0.0);
    CHECK(f_measure(refs, refs).f == 1.0);
}

TEST_CASE("f_measure uniform offset threshold behaviour") {
    const auto refs = isochronous(0.5, 40, 1.0);
    auto near_miss = refs, miss = refs;
    for (auto& t : near_miss.times) t += 0.069;
    for (auto& t : miss.times) t += 0.071;
    CHECK(f_measure(refs, near_miss, 0.07).f == 1.0);
    CHECK(f_measure(refs, miss, 0.07).f == 0.0);
}

TEST_CASE("metrical_variants generate the five canonical grids") {
    const auto refs = isochronous(1.0, 4);  // {0,1,2,3}
    const auto variants = metrical_variants(refs);
    REQUIRE(variants.size() == 5);
    CHECK(variants[0].first == "identity");
    CHECK(variants[1].second.times == std::vector<double>{0.5, 1.5, 2.5});
    CHECK(variants[2].second.times == std::vector<double>{0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0});
    CHECK(variants[3].second.times == std::vector<double>{0.0, 2.0});
    CHECK(variants[4].second.times == std::vector<double>{1.0, 3.0});

    BeatList single;
    single.times = {1.0};
    CHECK(metrical_variants(single).size() == 1);
}

TEST_CASE("continuity metrics on perfect and half-tempo predictions") {
    const auto refs = isochronous(0.5, 40);
    SECTION("perfect predictions score 1 everywhere") {
        const auto s = continuity_metrics(refs, refs);
        CHECK(s.cml_c == 1.0);
        CHECK(s.cml_t == 1.0);
        CHECK(s.aml_c == 1.0);
        CHECK(s.aml_t == 1.0);
    }
    SECTION("half-tempo predictions: CML_t exactly 0, AML_t exactly 1") {
        BeatList half;
        for (std::size_t i = 0; i < refs.size(); i += 2) half.times.push_back(refs.times[i]);
        const auto s = continuity_metrics(refs, half);
        CHECK(s.cml_t == 0.0);
        CHECK(s.aml_t == 1.0);
    }
    SECTION("empty inputs give zeros") {
        const auto s = continuity_metrics(refs, {});
        CHECK(s.cml_t == 0.0);
        CHECK(s.aml_t == 0.0);
    }
}

TEST_CASE("continuity segment accounting on a constructed break") {
    // 20 predictions: first 10 perfect, last 10 pushed far outside the window.
    const auto refs = isochronous(0.5, 20);
    BeatList preds = refs;
    for (std::size_t i = 10; i < 20; ++i) preds.times[i] += 0.2;
    const auto s = continuity_metrics(refs, preds);
    CHECK_THAT(s.cml_c, Catch::Matchers::WithinAbs(0.5, 1e-12));
    CHECK_THAT(s.cml_t, Catch::Matchers::WithinAbs(0.5, 1e-12));
}

TEST_CASE("continuity ordering invariants on random instances") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> jit(-0.3, 0.3);
    std::uniform_int_distribution<int> n_preds(1, 30);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto refs = isochronous(0.5, 20);
        BeatList preds;
        const int n = n_preds(rng);
        double t = 0.1;
        for (int i = 0; i < n; ++i) {
            t += 0.3 + std::abs(jit(rng));
            preds.times.push_back(t);
        }
        const auto s = continuity_metrics(refs, preds);
        CHECK(s.cml_c <= s.cml_t + 1e-12);
        CHECK(s.cml_t <= s.aml_t + 1e-12);
        CHECK(s.cml_c <= s.aml_c + 1e-12);
        CHECK(s.aml_c <= s.aml_t + 1e-12);
    }
}

TEST_CASE("metrics are invariant under uniform time translation") {
    const auto refs = isochronous(0.5, 30, 0.0);
    BeatList preds = refs;
    for (auto& t : preds.times) t += 0.02;
    const auto base_f = f_measure(refs, preds).f;
    const auto base_c = continuity_metrics(refs, preds);
    auto refs2 = refs;
    auto preds2 = preds;
    for (auto& t : refs2.times) t += 13.7;
    for (auto& t : preds2.times) t += 13.7;
    CHECK_THAT(f_measure(refs2, preds2).f, Catch::Matchers::WithinAbs(base_f, 1e-12));
    const auto c2 = continuity_metrics(refs2, preds2);
    CHECK_THAT(c2.cml_t, Catch::Matchers::WithinAbs(base_c.cml_t, 1e-12));
    CHECK_THAT(c2.aml_t, Catch::Matchers::WithinAbs(base_c.aml_t, 1e-12));
}

TEST_CASE("off-phase predictions: low F, high AML_t") {
    const auto refs = isochronous(0.5, 40);
    BeatList off;
    for (std::size_t i = 0; i + 1 < refs.size(); ++i)
        off.times.push_back(0.5 * (refs.times[i] + refs.times[i + 1]));
    CHECK(f_measure(refs, off).f < 0.2);
    CHECK(continuity_metrics(refs, off).aml_t > 0.9);
}

TEST_CASE("evaluate_track applies both levels independently") {
    AnnotationSequence ann;
    ann.tala = tala_rupaka();
    for (int i = 0; i < 12; ++i) ann.events.push_back({0.5 * i, i % 3 + 1});
    const auto [beats, downbeats] = annotations_to_beats_and_downbeats(ann);

    SECTION("perfect predictions") {
        const auto rec = evaluate_track(ann, beats, downbeats);
        CHECK(rec.beat.f == 1.0);
        CHECK(rec.beat.cml_t == 1.0);
        CHECK(rec.downbeat.f == 1.0);
        CHECK(rec.downbeat.aml_t == 1.0);
        CHECK(rec.tala == "rupaka");
    }
    SECTION("beat-perfect, downbeat-empty") {
        const auto rec = evaluate_track(ann, beats, {});
        CHECK(rec.beat.f == 1.0);
        CHECK(rec.downbeat.f == 0.0);
    }
}

TEST_CASE("aggregate means and grouping") {
    TrackRecord a, b;
    a.track_id = "a";
    a.tala = "adi";
    a.beat.f = 0.4;
    b.track_id = "b";
    b.tala = "rupaka";
    b.beat.f = 0.6;

    const auto rep = aggregate({a, b}, GroupBy::Tala);
    REQUIRE(rep.aggregates.size() == 3);
    CHECK(rep.aggregates[0].first == "overall");
    CHECK_THAT(rep.aggregates[0].second.beat.f, Catch::Matchers::WithinAbs(0.5, 1e-12));
    CHECK(rep.aggregates[1].first == "adi");
    CHECK_THAT(rep.aggregates[1].second.beat.f, Catch::Matchers::WithinAbs(0.4, 1e-12));

    SECTION("single row aggregate equals the row") {
        const auto one = aggregate({a}, GroupBy::Overall);
        CHECK(one.aggregates[0].second.beat.f == 0.4);
    }
    SECTION("order independence") {
        const auto swapped = aggregate({b, a}, GroupBy::Tala);
        CHECK(swapped.aggregates[1].second.beat.f == rep.aggregates[1].second.beat.f);
        CHECK(swapped.aggregates[2].second.beat.f == rep.aggregates[2].second.beat.f);
    }
    SECTION("empty rows rejected") { CHECK_THROWS_AS(aggregate({}, GroupBy::Overall), std::invalid_argument); }
}
