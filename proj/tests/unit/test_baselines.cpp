#include <doctest.h>

#include <cmath>

#include "odca/baselines.hpp"

using namespace odca;
using namespace odca::baselines;

namespace {

SensorSequence approach(double d0, double v, int n, double lidar_offset = 0.0) {
    SensorSequence s;
    for (int i = 0; i < n; ++i) {
        SensorFrame f;
        f.t = 0.02 * i;
        f.depth = d0 - v * f.t;
        f.conf = 0.9;
        f.lidar = *f.depth - lidar_offset;
        f.speed = v;
        s.frames.push_back(f);
    }
    return s;
}

// Constant-velocity Kalman filter in the textbook form P = (I - K H) P.
Series kalman_oracle(const SensorSequence& seq, const align::AffineAlignment& al, const EkfConfig& c) {
    Series out(seq.size());
    double x0 = 0, x1 = 0, p00 = 0, p01 = 0, p11 = 0;
    bool init = false;
    auto update = [&](double z, double r) {
        const double s = p00 + r;
        const double k0 = p00 / s, k1 = p01 / s;
        const double e = z - x0;
        x0 += k0 * e;
        x1 += k1 * e;
        const double n00 = (1 - k0) * p00, n01 = (1 - k0) * p01, n11 = p11 - k1 * p01;
        p00 = n00, p01 = n01, p11 = n11;
    };
    for (std::size_t t = 0; t < seq.size(); ++t) {
        const auto& f = seq.frames[t];
        if (!init) {
            const auto z = f.depth ? f.depth : (f.lidar ? std::optional<double>(al.apply(*f.lidar)) : std::nullopt);
            if (!z) continue;
            x0 = *z, x1 = 0, p00 = c.p0_pos, p01 = 0, p11 = c.p0_vel;
            init = true;
        } else {
            const double dt = f.t - seq.frames[t - 1].t;
            x0 += dt * x1;
            p00 += 2 * dt * p01 + dt * dt * p11 + c.q_pos * dt;
            p01 += dt * p11;
            p11 += c.q_vel * dt;
        }
        if (f.depth) update(*f.depth, c.r_depth / std::max(f.conf.value_or(0.0), 0.05));
        if (f.lidar) update(al.apply(*f.lidar), c.r_lidar);
        out[t] = x0;
    }
    return out;
}

}  // namespace

TEST_CASE("passthrough is the identity, gaps included") {
    auto s = approach(3.0, 1.0, 10);
    s.frames[4].depth.reset();
    const auto p = passthrough(s);
    REQUIRE(p.size() == s.size());
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(p[i] == s.frames[i].depth);
}

TEST_CASE("lidar_only aligns and carries forward") {
    auto s = approach(3.0, 1.0, 10);
    const auto same = lidar_only(s, {1.0, 0.0, 0, true});
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(*same[i] == *s.frames[i].depth);
    const auto shifted = lidar_only(s, {1.0, 0.1, 0, true});
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(*shifted[i] == doctest::Approx(*s.frames[i].depth + 0.1));
    s.frames[5].lidar.reset();
    CHECK(*lidar_only(s, {1.0, 0.0, 0, true})[5] == *s.frames[4].depth);
}

TEST_CASE("ekf matches the textbook filter") {
    auto s = approach(3.0, 1.2, 200, 0.05);
    Rng rng(4);
    for (auto& f : s.frames) {
        *f.depth += rng.normal(0.0, 0.02);
        *f.lidar += rng.normal(0.0, 0.03);
        f.conf = rng.uniform(0.3, 1.0);
    }
    for (int i = 80; i < 120; ++i) s.frames[i].depth.reset();
    const align::AffineAlignment al{1.0, 0.05, 0, true};
    const EkfConfig cfg;
    const auto got = ekf_fuse(s, al, cfg);
    const auto want = kalman_oracle(s, al, cfg);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(*got[i] == doctest::Approx(*want[i]).epsilon(1e-9));
}

TEST_CASE("ekf tracks a clean linear approach") {
    const auto s = approach(3.0, 1.5, 100);
    const auto out = ekf_fuse(s, {1.0, 0.0, 0, true});
    for (std::size_t i = 20; i < s.size(); ++i) CHECK(std::abs(*out[i] - *s.frames[i].depth) < 0.01);
}

TEST_CASE("ekf converges on a constant distance and survives a blackout") {
    auto s = approach(2.0, 0.0, 300);
    for (int i = 100; i < 150; ++i) s.frames[i].depth.reset();
    const auto out = ekf_fuse(s, {1.0, 0.0, 0, true});
    for (const auto& v : out) {
        REQUIRE(v);
        CHECK(std::isfinite(*v));
    }
    CHECK(std::abs(*out.back() - 2.0) < 1e-3);
    EkfConfig bad;
    bad.r_depth = 0.0;
    CHECK_THROWS_AS(ekf_fuse(s, {}, bad), Error);
}

TEST_CASE("forecast_replace substitutes the forecast") {
    const forecast::BootstrapBackend be;
    auto flat = approach(2.0, 0.0, 50);
    for (const auto& v : forecast_replace(flat, be)) CHECK(*v == 2.0);

    auto noisy = approach(3.0, 1.0, 50);
    Rng rng(2);
    for (auto& f : noisy.frames) *f.depth += rng.normal(0.0, 0.01);
    const auto r = forecast_replace(noisy, be);
    int differs = 0;
    for (std::size_t i = 0; i < noisy.size(); ++i) differs += *r[i] != *noisy.frames[i].depth;
    CHECK(differs >= 1);
}

TEST_CASE("carry_forward") {
    const Series s{std::nullopt, 1.0, std::nullopt, 2.0, std::nullopt};
    const auto c = carry_forward(s);
    CHECK_FALSE(c[0]);
    CHECK(*c[2] == 1.0);
    CHECK(*c[4] == 2.0);
}
