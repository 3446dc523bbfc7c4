#include <doctest.h>

#include <cmath>

#include "odca/config.hpp"
#include "odca/synth.hpp"

using namespace odca;

TEST_CASE("generator defaults and determinism") {
    synth::GenConfig g;
    g.seed = 7;
    const auto a = synth::generate(g);
    CHECK(a.size() == 13);
    CHECK(a == synth::generate(g));
    for (const auto& s : a) {
        CHECK(s.frames.size() == 400);
        CHECK(s.frames.back().t == doctest::Approx(7.98));
        CHECK_NOTHROW(validate(s));
        CHECK(std::abs(synth::kinematic_residual(s)) < 0.005);
    }
    g.seed = 8;
    CHECK_FALSE(a == synth::generate(g));
}

TEST_CASE("generator validation") {
    synth::GenConfig g;
    g.rate = 0.0;
    CHECK_THROWS_AS(g.validate(), Error);
    g = {};
    g.speeds.clear();
    CHECK_THROWS_AS(g.validate(), Error);
}

TEST_CASE("config defaults survive a TOML round trip") {
    auto cfg = config::from_toml("");
    const auto again = config::from_toml(config::to_toml(cfg));
    CHECK(config::to_json(again) == config::to_json(cfg));
    CHECK(cfg.bench.train.epochs == 200);
    CHECK(cfg.bench.gate.tau_low == 0.15);
}

TEST_CASE("config values and overrides") {
    auto cfg = config::from_toml(R"(
seed = 11
[train]
epochs = 5
[gate]
gamma = 2.0
[closedloop]
durations = [0.5, 2.0]
)");
    CHECK(cfg.seed == 11);
    CHECK(cfg.gen.seed == 11);
    CHECK(cfg.bench.seed == 11);
    CHECK(cfg.bench.train.epochs == 5);
    CHECK(cfg.bench.gate.gamma == 2.0);
    CHECK(cfg.closedloop.durations == std::vector<double>{0.5, 2.0});

    config::apply_override(cfg, "train.epochs=9");
    config::apply_override(cfg, "closedloop.defense=odca");
    config::apply_override(cfg, "closedloop.defense = \"none\"");
    cfg.finalize();
    CHECK(cfg.bench.train.epochs == 9);
    CHECK(cfg.closedloop.defense == "none");
}

TEST_CASE("config errors") {
    CHECK_THROWS_WITH_AS(config::from_toml("[train]\nepoch = 3\n", "run.toml"),
                         doctest::Contains("unknown config key 'train.epoch'"), Error);
    CHECK_THROWS_WITH_AS(config::from_toml("colour = 1\n"), doctest::Contains("colour"), Error);
    CHECK_THROWS_AS(config::from_toml("[train]\nepochs = \"many\"\n"), Error);
    CHECK_THROWS_WITH_AS(config::from_toml("seed = \n", "bad.toml"), doctest::Contains("bad.toml"), Error);
    CHECK_THROWS_AS(config::from_toml("[gate]\ntau_low = 0.9\n"), Error);
    auto cfg = config::from_toml("");
    CHECK_THROWS_AS(config::apply_override(cfg, "train.nope=1"), Error);
    CHECK_THROWS_AS(config::apply_override(cfg, "no-equals-sign"), Error);
}

TEST_CASE("every known key appears in the echo") {
    const auto cfg = config::from_toml("");
    const auto toml = config::to_toml(cfg);
    const auto json = config::to_json(cfg);
    for (const auto& k : config::known_keys()) {
        const auto leaf = k.substr(k.rfind('.') + 1);
        CHECK(toml.find(leaf) != std::string::npos);
        CHECK(json.find("\"" + k + "\"") != std::string::npos);
    }
}
