#include <doctest.h>

#include <cmath>

#include "odca/metrics.hpp"
#include "oracles.hpp"

using namespace odca;
using namespace odca::metrics;
using D = std::optional<double>;

TEST_CASE("rmse and mae on small cases") {
    const std::vector<double> p{1, 2}, r{1, 4};
    CHECK(rmse(p, r) == doctest::Approx(std::sqrt(2.0)));
    CHECK(mae(p, r) == doctest::Approx(1.0));
    CHECK(rmse(p, p) == 0.0);
    CHECK(mae(p, p) == 0.0);
    const std::vector<D> po{1.0, std::nullopt, 3.0}, ro{1.0, std::nullopt, 4.0};
    CHECK(rmse(po, ro) == doctest::Approx(std::sqrt(0.5)));
    const std::vector<D> hole{1.0, 2.0, std::nullopt}, full{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(rmse(hole, full), Error);
    const std::vector<double> shorter{1.0};
    CHECK_THROWS_AS(rmse(shorter, r), Error);
}

TEST_CASE("rmse is never below mae") {
    Rng rng(12);
    for (int k = 0; k < 1000; ++k) {
        std::vector<double> a(1 + rng.index(20)), b(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.normal(), b[i] = rng.normal();
        CHECK(rmse(a, b) >= mae(a, b) - 1e-12);
    }
}

TEST_CASE("auroc small cases") {
    const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
    const std::vector<bool> l{false, false, true, true};
    CHECK(auroc(s, l) == doctest::Approx(0.75));
    const std::vector<double> sep{0.1, 0.2, 0.8, 0.9};
    CHECK(auroc(sep, l) == 1.0);
    CHECK(auprc(sep, l) == 1.0);
    const std::vector<bool> inv{true, true, false, false};
    CHECK(auroc(sep, inv) == 0.0);
    const std::vector<bool> one_class{true, true, true, true};
    CHECK_THROWS_AS(auroc(sep, one_class), Error);
}

TEST_CASE("auroc equals the pairwise oracle") {
    Rng rng(31);
    for (int k = 0; k < 300; ++k) {
        const std::size_t n = 2 + rng.index(199);
        std::vector<double> s(n);
        std::vector<bool> l(n);
        for (std::size_t i = 0; i < n; ++i) {
            l[i] = rng.bernoulli(0.4);
            // Coarse scores force ties.
            s[i] = std::round(rng.normal(l[i] ? 0.5 : 0.0, 1.0) * 4.0) / 4.0;
        }
        l[0] = true;
        l[1] = false;
        CHECK(auroc(s, l) == doctest::Approx(testing::pairwise_auroc(s, l)).epsilon(1e-12));
    }
}

TEST_CASE("auprc step convention") {
    // Ranked: 0.9 (pos), 0.8 (neg), 0.7 (pos): AP = 1 * 0.5 + 2/3 * 0.5.
    const std::vector<double> s{0.9, 0.8, 0.7};
    const std::vector<bool> l{true, false, true};
    CHECK(auprc(s, l) == doctest::Approx(0.5 + 1.0 / 3.0));
}

TEST_CASE("bounded degradation") {
    CHECK(bounded_degradation(0.229, 0.503) == doctest::Approx(1.1965).epsilon(1e-4));
    CHECK(bounded_degradation(0.111, 0.323) == doctest::Approx(1.9099).epsilon(1e-4));
    CHECK(bounded_degradation(0.3, 0.3) == 0.0);
    CHECK_THROWS_AS(bounded_degradation(0.0, 1.0), Error);
}

TEST_CASE("relative gain") {
    const std::vector<double> ours{0.111, 0.2, 0.323}, ref{0.229, 0.3, 0.503};
    const auto g = rgr(ours, ref);
    CHECK(g.per_severity[0] == doctest::Approx(0.5153).epsilon(1e-4));
    CHECK(g.per_severity[2] == doctest::Approx(0.3579).epsilon(1e-4));
    CHECK(g.mean == doctest::Approx((g.per_severity[0] + g.per_severity[1] + g.per_severity[2]) / 3));
    const auto z = rgr(ref, ref);
    for (double v : z.per_severity) CHECK(v == 0.0);
}

TEST_CASE("closed-loop aggregate") {
    std::vector<TrialSummary> t(30);
    for (int i = 0; i < 5; ++i) t[i] = {true, 0.19};
    auto a = closed_loop_aggregate(t);
    CHECK(a.scr == doctest::Approx(0.1667).epsilon(1e-3));
    CHECK(a.asr == doctest::Approx(0.8333).epsilon(1e-3));
    CHECK(*a.latency_mean == doctest::Approx(0.19));
    CHECK(*a.latency_std == 0.0);

    std::vector<TrialSummary> none(3);
    a = closed_loop_aggregate(none);
    CHECK(a.n_success == 0);
    CHECK_FALSE(a.latency_mean);
    CHECK_FALSE(a.latency_std);

    std::vector<TrialSummary> two{{true, 1.0}, {true, 3.0}};
    CHECK(*closed_loop_aggregate(two).latency_std == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("score streams from a results table") {
    gatefuse::ResultTable t;
    gatefuse::ResultRow a;
    a.d_tilde = 2.0;
    a.d_fused = 2.0;
    a.r_xs = 0.05;
    a.label = false;
    gatefuse::ResultRow b;
    b.d_tilde = 3.0;
    b.d_fused = 2.2;
    b.r_xs = 0.9;
    b.label = true;
    gatefuse::ResultRow c = b;
    c.label.reset();
    t.rows = {a, b, c};
    const auto s = score_streams(t);
    CHECK(s.xs.values == std::vector<double>{0.05, 0.9});
    CHECK(s.chg.values[0] == 0.0);
    CHECK(s.chg.values[1] == doctest::Approx(0.8));
    CHECK(s.chg.labels == std::vector<bool>{false, true});
}

TEST_CASE("report JSON round trip and tables") {
    EvalReport r;
    for (const char* m : {"forecast_replace", "odca"})
        for (const char* sev : {"none", "weak", "mid", "strong"})
            r.cells.push_back({m, sev, std::string(m) == "odca" ? 0.1 : 0.2, 0.05, 10});
    r.diagnostics.push_back({"strong", 0.9, 0.8, 0.95, 0.9, 5, 5});
    r.summarize();
    const auto back = report_from_json(report_to_json(r));
    REQUIRE(back.cells.size() == r.cells.size());
    CHECK(back.cell("odca", "mid")->rmse == 0.1);
    CHECK(back.diagnostics.front().auroc_chg == 0.95);
    const auto t1 = table1_csv(r);
    CHECK(t1.rfind("method,weak,mid,strong,clean,bd,rgr_mean\n", 0) == 0);
    CHECK(t1.find("odca,0.1,0.1,0.1,0.1,0,0.5\n") != std::string::npos);
    CHECK(heatmap_csv(r).find("odca,strong,0.1,0.05") != std::string::npos);
    const auto j = report_to_json(r, R"({"seed":7})");
    CHECK(j.find(R"("config": {)") != std::string::npos);
    CHECK(j.find(R"("seed": 7)") != std::string::npos);
}
