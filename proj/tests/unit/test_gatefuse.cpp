#include <doctest.h>

#include <cmath>

#include "odca/attacksim.hpp"
#include "odca/gatefuse.hpp"
#include "odca/synth.hpp"

using namespace odca;
using namespace odca::gatefuse;

namespace {

struct Fixture {
    repair::DeltaHead head = repair::DeltaHead::random(3);
    forecast::BootstrapBackend backend;
    Repairer rep;

    Fixture() {
        rep.head = &head;
        rep.backend = &backend;
        rep.alignment = {1.0, 0.0, 0, true};
    }
};

ContextWindow ramp(double last) {
    ContextWindow w;
    for (int i = 0; i < 64; ++i) w.values.push_back(last + 0.03 * (63 - i));
    return w;
}

SensorFrame frame(std::optional<double> depth, std::optional<double> lidar) {
    SensorFrame f;
    f.depth = depth;
    f.conf = 0.9;
    f.lidar = lidar;
    f.speed = 1.5;
    f.throttle = 0.3;
    return f;
}

}  // namespace

TEST_CASE("gate values at the defaults") {
    const GateConfig g;
    CHECK(gate(0.15, g) == 0.0);
    CHECK(gate(0.0, g) == 0.0);
    CHECK(gate(0.375, g) == doctest::Approx(0.5));
    CHECK(gate(0.90, g) == 1.0);
    GateConfig sq = g;
    sq.gamma = 2.0;
    CHECK(gate(0.375, sq) == doctest::Approx(0.25));
    sq.tau_high = 0.1;
    CHECK_THROWS_AS(sq.validate(), Error);
}

TEST_CASE("fuse is convex and exact at the ends") {
    CHECK(fuse(2.0, 1.0, 0.25) == doctest::Approx(1.75));
    CHECK(fuse(0.1 + 0.2, 5.0, 0.0) == 0.1 + 0.2);
    CHECK(fuse(1.0, 0.7, 1.0) == 0.7);
    CHECK_THROWS_AS(fuse(1.0, 2.0, 1.5), Error);
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double a = rng.uniform(0, 5), b = rng.uniform(0, 5), w = rng.uniform();
        const double v = fuse(a, b, w);
        CHECK(v >= std::min(a, b));
        CHECK(v <= std::max(a, b));
    }
}

TEST_CASE("agreeing sensors pass the measurement through") {
    Fixture fx;
    const auto out = step(frame(2.0, 2.1), ramp(2.03), 0.02, 1, fx.rep);
    CHECK(out.w == 0.0);
    CHECK(out.d_fused == 2.0);
    CHECK_FALSE(out.used_fallback);
    REQUIRE(out.r_xs);
    CHECK(*out.r_xs == doctest::Approx(0.1));
    REQUIRE(out.r_post);
    CHECK(*out.r_post == doctest::Approx(0.1));
}

TEST_CASE("missing LiDAR falls back to the repair") {
    Fixture fx;
    const auto out = step(frame(2.0, std::nullopt), ramp(2.03), 0.02, 1, fx.rep);
    CHECK(out.used_fallback);
    CHECK(out.w == 1.0);
    CHECK(out.d_fused == out.d_rep);
    CHECK_FALSE(out.r_xs);
    CHECK(trusted_value(frame(2.0, std::nullopt), out) == out.d_fused);
}

TEST_CASE("blackout substitutes the forecast") {
    Fixture fx;
    const auto out = step(frame(std::nullopt, 2.0), ramp(2.03), 0.02, 1, fx.rep);
    CHECK(out.blackout);
    CHECK(out.d_work == out.mu1);
    CHECK(out.w == 1.0);
    CHECK(out.d_fused == out.d_rep);
    CHECK_FALSE(trusted_value(frame(std::nullopt, 2.0), out));
}

TEST_CASE("zero head leaves large disagreement untouched") {
    Fixture fx;
    const repair::DeltaHead zero;
    fx.rep.head = &zero;
    const auto out = step(frame(3.0, 2.0), ramp(2.03), 0.02, 1, fx.rep);
    CHECK(out.w == 1.0);
    CHECK(out.d_fused == 3.0);
    CHECK_FALSE(trusted_value(frame(3.0, 2.0), out));
}

TEST_CASE("partial gate blends") {
    Fixture fx;
    const auto out = step(frame(2.375, 2.0), ramp(2.03), 0.02, 1, fx.rep);
    CHECK(out.w == doctest::Approx(0.5));
    CHECK(out.d_fused == doctest::Approx(0.5 * (out.d_work + out.d_rep)));
}

TEST_CASE("a repairer without a head is rejected") {
    Repairer r;
    CHECK_THROWS_AS(step(frame(2.0, 2.0), ramp(2.0), 0.02, 1, r), Error);
}

TEST_CASE("run_sequence on a clean series") {
    Fixture fx;
    synth::GenConfig g;
    g.n_sequences = 1;
    g.seed = 4;
    const auto seq = synth::generate(g).front();
    fx.rep.alignment = {g.lidar_alpha, g.lidar_beta, 0, true};
    const auto a = run_sequence(seq, fx.rep, {9, false, false});
    const auto b = run_sequence(seq, fx.rep, {9, false, false});
    REQUIRE(a.steps.size() == seq.size());
    int agreed = 0;
    for (std::size_t t = 0; t < seq.size(); ++t) {
        CHECK(a.steps[t].d_fused == b.steps[t].d_fused);
        if (a.steps[t].r_xs && *a.steps[t].r_xs <= fx.rep.gate.tau_low) {
            CHECK(a.steps[t].d_fused == *seq.frames[t].depth);
            ++agreed;
        }
    }
    CHECK(agreed > 0.9 * static_cast<double>(seq.size()));
    CHECK(a.latency_us.empty());
    CHECK(run_sequence(seq, fx.rep, {9, false, true}).latency_us.size() == seq.size());
}

TEST_CASE("run_sequence keeps gated-out frames out of the forecaster history") {
    Fixture fx;
    const repair::DeltaHead zero;
    fx.rep.head = &zero;
    SensorSequence seq;
    for (int t = 0; t < 40; ++t) {
        const double d = 3.0 - 0.03 * t;
        auto f = frame(t >= 20 ? d + 1.0 : d, d);
        f.t = 0.02 * t;
        seq.frames.push_back(f);
    }
    const auto run = run_sequence(seq, fx.rep);
    // Once the depth channel jumps, the forecast keeps extrapolating the
    // trusted approach instead of following the corrupted readings.
    for (int t = 22; t < 40; ++t) CHECK(run.steps[t].mu1 == doctest::Approx(3.0 - 0.03 * t).epsilon(1e-6));
}

TEST_CASE("results table round trips") {
    Fixture fx;
    synth::GenConfig g;
    g.n_sequences = 1;
    g.duration = 2.0;
    const auto clean = synth::generate(g).front();
    auto spec = attack::AttackSpec::preset(attack::Severity::strong);
    spec.seed = 2;
    spec.lead_in = 0.2;
    const auto seq = attack::apply_attack(clean, spec);
    const auto run = run_sequence(seq, fx.rep, {1, false, true});
    const auto table = make_table(seq, run, fx.rep.alignment, &clean);
    CHECK(table.rows.size() == seq.size());
    CHECK(table_from_csv(table_to_csv(table)) == table);
    CHECK(table_from_jsonl(table_to_jsonl(table)) == table);
    for (std::size_t t = 0; t < seq.size(); ++t) CHECK(table.rows[t].label == seq.attacked_at(t));
}
