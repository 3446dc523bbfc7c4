#include <doctest.h>

#include <vector>

#include "odca/align.hpp"

using namespace odca;
using D = std::optional<double>;

namespace {

// Ordinary least squares on complete pairs.
std::pair<double, double> ols(const std::vector<D>& y, const std::vector<D>& x) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    double n = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sx += *x[i];
        sy += *y[i];
        sxx += *x[i] * *x[i];
        sxy += *x[i] * *y[i];
        ++n;
    }
    const double a = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return {a, (sy - a * sx) / n};
}

}  // namespace

TEST_CASE("exact identity fit") {
    std::vector<D> d, l, c;
    for (int i = 0; i < 20; ++i) {
        d.push_back(1.0 + 0.1 * i);
        l.push_back(1.0 + 0.1 * i);
        c.push_back(0.9);
    }
    const auto a = align::fit_affine(d, l, c);
    CHECK(a.alpha == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(a.beta == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(a.n_used == 20);
    CHECK(a.frozen);
}

TEST_CASE("noisy affine fit recovers the generator") {
    Rng rng(17);
    std::vector<D> d, l, c;
    for (int i = 0; i < 200; ++i) {
        const double lidar = rng.uniform(0.5, 3.0);
        l.push_back(lidar);
        d.push_back(0.95 * lidar + 0.05 + rng.normal(0.0, 0.01));
        c.push_back(0.9);
    }
    const auto a = align::fit_affine(d, l, c);
    CHECK(std::abs(a.alpha - 0.95) <= 0.02);
    CHECK(std::abs(a.beta - 0.05) <= 0.02);
    const auto [oa, ob] = ols(d, l);
    CHECK(std::abs(a.alpha - oa) < 0.01);
    CHECK(std::abs(a.beta - ob) < 0.01);
}

TEST_CASE("gross outliers barely move the Huber fit") {
    Rng rng(5);
    std::vector<D> d, l, c;
    for (int i = 0; i < 20; ++i) {
        const double lidar = 0.5 + 0.1 * i;
        l.push_back(lidar);
        d.push_back(0.95 * lidar + 0.05 + rng.normal(0.0, 0.01));
        c.push_back(0.9);
    }
    const auto [oa, ob] = ols(d, l);
    auto dd = d, ll = l, cc = c;
    for (int k : {3, 9, 15}) {
        ll.push_back(*l[k]);
        dd.push_back(*d[k] + 2.0);
        cc.push_back(0.9);
    }
    const auto a = align::fit_affine(dd, ll, cc);
    CHECK(std::abs(a.alpha - oa) <= 0.04);
    CHECK(std::abs(a.beta - ob) <= 0.04);
}

TEST_CASE("low-confidence and incomplete pairs are skipped") {
    std::vector<D> d, l, c;
    for (int i = 0; i < 10; ++i) {
        d.push_back(1.0 + i);
        l.push_back(1.0 + i);
        c.push_back(0.9);
    }
    d.push_back(50.0), l.push_back(4.0), c.push_back(0.1);
    d.push_back(std::nullopt), l.push_back(5.0), c.push_back(0.9);
    const auto a = align::fit_affine(d, l, c);
    CHECK(a.n_used == 10);
    CHECK(a.alpha == doctest::Approx(1.0));
    std::vector<D> few{1.0}, fl{1.0}, fc{0.9};
    CHECK_THROWS_AS(align::fit_affine(few, fl, fc), Error);
}

TEST_CASE("IRLS objective does not increase") {
    Rng rng(9);
    std::vector<D> d, l, c;
    for (int i = 0; i < 50; ++i) {
        const double lidar = rng.uniform(0.5, 3.0);
        l.push_back(lidar);
        d.push_back(lidar + (i % 10 == 0 ? 1.0 : rng.normal(0.0, 0.02)));
        c.push_back(0.9);
    }
    align::FitTrace trace;
    align::fit_affine(d, l, c, {}, &trace);
    for (std::size_t i = 1; i < trace.objective.size(); ++i)
        CHECK(trace.objective[i] <= trace.objective[i - 1] + 1e-12);
}

TEST_CASE("align_lidar arithmetic") {
    CHECK(align::align_lidar(1.7, {1.0, 0.0}) == doctest::Approx(1.7));
    CHECK(align::align_lidar(1.0, {2.0, 0.5}) == doctest::Approx(2.5));
    CHECK(align::align_lidar(2.0, {0.95, 0.05}) == doctest::Approx(1.95));
}

TEST_CASE("huber loss") {
    CHECK(align::huber(0.05, 0.1) == doctest::Approx(0.5 * 0.05 * 0.05));
    CHECK(align::huber(-1.0, 0.1) == doctest::Approx(0.1 * (1.0 - 0.05)));
}
