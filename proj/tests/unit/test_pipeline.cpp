#include <doctest.h>

#include <algorithm>
#include <set>

#include "odca/pipeline.hpp"

using namespace odca;
using namespace odca::pipeline;

TEST_CASE("split by series") {
    const auto s = split_by_series(13, 7);
    CHECK(s.train.size() + s.validation.size() + s.test.size() == 13);
    CHECK(s.validation.size() >= 1);
    CHECK(s.test.size() >= 1);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.validation.begin(), s.validation.end());
    all.insert(s.test.begin(), s.test.end());
    CHECK(all.size() == 13);
    CHECK(split_by_series(13, 7).test == s.test);
}

TEST_CASE("attack seeds separate severities, series and repeats") {
    std::set<std::uint64_t> seen;
    for (auto sev : {attack::Severity::weak, attack::Severity::mid, attack::Severity::strong})
        for (std::size_t i = 0; i < 13; ++i)
            for (std::size_t r : {std::size_t{0}, std::size_t{1}, kEvalRepeat}) seen.insert(attack_seed(7, sev, i, r));
    CHECK(seen.size() == 3 * 13 * 3);
}

TEST_CASE("small end-to-end run") {
    synth::GenConfig g;
    g.n_sequences = 4;
    g.duration = 4.0;
    g.seed = 2;
    const auto data = synth::generate(g);
    BenchmarkConfig cfg;
    cfg.attack_repeats = 1;
    cfg.train.epochs = 5;
    const auto split = split_by_series(data.size(), cfg.seed);
    const forecast::BootstrapBackend be;
    const auto model = train_model(data, split, be, cfg);
    CHECK(model.alignment.alpha == doctest::Approx(g.lidar_alpha).epsilon(0.03));
    const auto rep = make_repairer(model.result.head, model.alignment, be, cfg);
    std::size_t tables = 0;
    EvalOptions eo;
    eo.on_table = [&](const std::string&, const gatefuse::ResultTable&) { ++tables; };
    const auto report = evaluate(data, split.test, rep, cfg, eo);
    CHECK(report.cells.size() == kMethods.size() * 4);
    CHECK(tables == kMethods.size() * 4 * split.test.size());
    CHECK(report.cell("odca", "none")->rmse <= 1.05 * report.cell("passthrough", "none")->rmse + 1e-12);
    CHECK(report.diagnostics.size() == 3);
    for (const auto& c : report.cells) CHECK(c.rmse >= c.mae);
    CHECK_THROWS_AS(run_method("oracle", data[0], data[0], rep, cfg), Error);
}

TEST_CASE("ablation subsets") {
    const auto subsets = ablation_subsets(repair::LossWeights{});
    REQUIRE(subsets.size() == 5);
    CHECK(subsets[0].first == "L_ID");
    CHECK(subsets[0].second.lambda_delta0 == 0.0);
    CHECK(subsets[1].second.lambda_delta0 > 0.0);
    CHECK(subsets[4].first == "full");
}
