#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "odca/core.hpp"

using namespace odca;

namespace {

SensorSequence three_frames() {
    SensorSequence s;
    s.id = "trip";
    s.meta = {1.5, 15.0};
    for (int i = 0; i < 3; ++i) {
        SensorFrame f;
        f.t = 0.02 * i;
        f.depth = 2.0 - 0.03 * i;
        f.conf = 0.9;
        f.lidar = i == 1 ? std::nullopt : std::optional<double>(2.1 - 0.03 * i);
        f.speed = 1.5;
        f.throttle = 0.3;
        f.steering = 15.0;
        s.frames.push_back(f);
    }
    s.labels = std::vector<FrameLabel>{{false, AttackKind::none}, {true, AttackKind::bias}, {false, AttackKind::none}};
    return s;
}

std::vector<double> values(const ContextWindow& w) { return w.values; }

}  // namespace

TEST_CASE("estimate_dt takes the median timestamp difference") {
    const std::vector<double> a{0.00, 0.02, 0.04, 0.06};
    CHECK(estimate_dt(a) == doctest::Approx(0.02));
    const std::vector<double> b{0.00, 0.02, 0.05, 0.07};
    CHECK(estimate_dt(b) == doctest::Approx(0.02));
    const std::vector<double> one{1.0};
    CHECK_THROWS_AS(estimate_dt(one), Error);
    const std::vector<double> back{0.0, 0.02, 0.01};
    CHECK_THROWS_AS(estimate_dt(back), Error);
    CHECK(estimate_dt(b, true) == kFixedDt);
}

TEST_CASE("median of odd and even counts") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}

TEST_CASE("make_window fill rules") {
    using D = std::optional<double>;
    const std::vector<D> a{2.0, 1.9, 1.8};
    CHECK(values(make_window(a, 2, 2, 0.02)) == std::vector<double>{1.9, 1.8});

    const std::vector<D> b{2.0, std::nullopt, 1.8};
    const auto wb = make_window(b, 1, 2, 0.02);
    CHECK(values(wb) == std::vector<double>{2.0, 2.0});
    CHECK(wb.is_observed == std::vector<bool>{true, false});

    const std::vector<D> c{2.0};
    const auto wc = make_window(c, 0, 4, 0.02);
    CHECK(values(wc) == std::vector<double>{2.0, 2.0, 2.0, 2.0});
    CHECK(wc.n_padded == 3);
    CHECK(wc.observed().size() == 1);

    const std::vector<D> none{std::nullopt, std::nullopt};
    CHECK_THROWS_AS(make_window(none, 1, 4, 0.02), Error);
    CHECK_THROWS_AS(make_window(c, 3, 4, 0.02), Error);
}

TEST_CASE("make_window over a sequence carries conf and speed") {
    const auto s = three_frames();
    const auto w = make_window(s, 2, 4);
    CHECK(w.values.size() == 4);
    CHECK(w.n_padded == 1);
    CHECK(w.conf.size() == 4);
    CHECK(w.speed[3] == 1.5);
    CHECK(w.dt == doctest::Approx(0.02));
}

TEST_CASE("CSV and JSONL round trips") {
    const auto s = three_frames();
    const auto csv = parse_csv(to_csv(s), "x");
    CHECK(csv == s);
    const auto jl = parse_jsonl(to_jsonl(s), "x");
    CHECK(jl == s);

    const auto dir = std::filesystem::temp_directory_path() / "odca_core_test";
    std::filesystem::create_directories(dir);
    save_sequence(s, dir / "a.csv");
    save_sequence(s, dir / "a.jsonl");
    CHECK(load_sequence(dir / "a.csv") == s);
    CHECK(load_sequence(dir / "a.jsonl") == s);
    std::filesystem::remove_all(dir);
}

TEST_CASE("invalid rows are rejected with their location") {
    const std::string text =
        "t,depth,conf,lidar,speed,throttle,steering,attack_label,attack_kind\n"
        "0,2.0,0.9,2.0,1,0.3,0,0,none\n"
        "0.02,1.9,1.2,1.9,1,0.3,0,0,none\n";
    CHECK_THROWS_WITH_AS(parse_csv(text), doctest::Contains("conf"), Error);
    CHECK_THROWS_AS(parse_csv("a,b\n1,2\n"), Error);
}

TEST_CASE("JSONL without a lidar field leaves it absent") {
    const auto s = parse_jsonl(R"({"t":0,"depth":2.0,"conf":0.9,"speed":1})"
                               "\n");
    REQUIRE(s.frames.size() == 1);
    CHECK_FALSE(s.frames[0].lidar.has_value());
    CHECK(*s.frames[0].depth == 2.0);
}

TEST_CASE("format_double round-trips") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 12345.678, -0.0}) CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("Rng streams are reproducible") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
    Rng c(1);
    for (int i = 0; i < 1000; ++i) {
        const double u = c.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(c.index(7) < 7);
    }
    CHECK(mix_seed(1, 2) != mix_seed(1, 3));
}
