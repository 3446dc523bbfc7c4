// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "odca/closedloop.hpp"
#include "odca/config.hpp"
#include "odca/metrics.hpp"
#include "odca/pipeline.hpp"
#include "oracles.hpp"

using namespace odca;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
    if (!ok) ++failures;
}

// Runs a criterion; an exception counts as a failure.
void criterion(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
    try {
        const auto [ok, detail] = body();
        report(ok, name, detail);
    } catch (const std::exception& e) {
        report(false, name, std::string("error: ") + e.what());
    }
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int digits = 4) {
    std::ostringstream o;
    o.setf(std::ios::fixed);
    o.precision(digits);
    o << v;
    return o.str();
}

// Shared state of the benchmark criteria.
struct Benchmark {
    config::RunConfig cfg;
    std::vector<SensorSequence> data;
    pipeline::Split split;
    forecast::BootstrapBackend backend;
    pipeline::TrainedModel model;
    metrics::EvalReport report;
    std::vector<double> latency_us;
    double seconds = 0.0;

    explicit Benchmark(const config::RunConfig& c) : cfg(c), backend(c.bootstrap) {}
};

std::pair<bool, std::string> check_metric_fidelity() {
    const auto t0 = Clock::now();
    const double bd = metrics::bounded_degradation(0.229, 0.503);
    const std::vector<double> ours{0.323}, ref{0.503};
    const double g = metrics::rgr(ours, ref).per_severity[0];
    const double secs = seconds_since(t0);
    const bool ok = std::abs(bd - 1.1965) <= 1e-4 && std::abs(g - 0.3579) <= 1e-4 && secs < 1.0;
    return {ok, "bd " + num(bd, 6) + " (want 1.1965), rgr " + num(g, 6) + " (want 0.3579), " + num(secs, 6) + " s"};
}

std::pair<bool, std::string> check_nominal_preservation() {
    Rng rng(2024);
    const auto head = repair::DeltaHead::random(99);
    const forecast::BootstrapBackend be;
    gatefuse::Repairer rep;
    rep.head = &head;
    rep.backend = &be;
    std::size_t violations = 0, steps = 0;
    while (steps < 10000) {
        rep.alignment = {rng.uniform(0.8, 1.2), rng.uniform(-0.2, 0.2), 0, true};
        rep.gate.tau_low = rng.uniform(0.05, 0.3);
        rep.gate.tau_high = rep.gate.tau_low + rng.uniform(0.1, 1.0);
        rep.gate.gamma = rng.uniform(0.5, 3.0);
        ContextWindow ctx;
        const double start = rng.uniform(0.5, 6.0), slope = rng.uniform(-0.05, 0.01);
        for (int i = 0; i < 64; ++i) ctx.values.push_back(start + slope * i + rng.normal(0.0, 0.02));
        SensorFrame f;
        f.depth = rng.uniform(0.2, 8.0);
        f.conf = rng.uniform();
        f.speed = rng.uniform(0.0, 2.5);
        f.throttle = rng.uniform(0.0, 1.0);
        f.steering = rng.uniform(-20.0, 20.0);
        // LiDAR reading whose aligned value lies within tau_low of the depth.
        const double target = *f.depth + rng.uniform(-1.0, 1.0) * rep.gate.tau_low;
        f.lidar = (target - rep.alignment.beta) / rep.alignment.alpha;
        const double r = std::abs(*f.depth - rep.alignment.apply(*f.lidar));
        if (r > rep.gate.tau_low) continue;  // rounding pushed it over the line
        const auto out = gatefuse::step(f, ctx, 0.02, rng.next(), rep);
        if (!(out.d_fused == *f.depth) || out.w != 0.0) ++violations;
        ++steps;
    }
    return {violations == 0, std::to_string(steps) + " steps, " + std::to_string(violations) + " violations"};
}

std::pair<bool, std::string> check_gradients() {
    Rng rng(4242);
    const repair::LossConfig cfg;
    double worst = 0.0;
    std::size_t checked = 0;
    for (int b = 0; b < 10; ++b) {
        const auto set = testing::random_training_set(1000 + b, 300);
        std::vector<repair::FeatureVector> xs;
        for (const auto& f : set.frames) xs.push_back(f.x);
        auto head = repair::DeltaHead::random(2000 + b);
        head.norm = repair::FeatureNorm::fit(xs);
        std::vector<std::size_t> batch;
        for (std::size_t i = 0; i < set.size(); ++i)
            if (rng.bernoulli(0.5)) batch.push_back(i);
        const auto gc = testing::check_gradient(head, set, batch, cfg, 25, rng);
        worst = std::max(worst, gc.max_rel_error);
        checked += gc.checked;
    }
    std::ostringstream w;
    w << std::scientific << std::setprecision(2) << worst;
    return {worst < 1e-5, std::to_string(checked) + " parameter checks over 10 batches, max relative error " + w.str()};
}

std::pair<bool, std::string> check_parameter_count() {
    const repair::DeltaHead head;
    const auto n = repair::count_parameters(head);
    return {n == 921, std::to_string(n) + " trainable parameters"};
}

void run_benchmark(Benchmark& b) {
    const auto t0 = Clock::now();
    b.data = synth::generate(b.cfg.gen);
    b.split = pipeline::split_by_series(b.data.size(), b.cfg.seed);
    b.model = pipeline::train_model(b.data, b.split, b.backend, b.cfg.bench);
    const auto rep = pipeline::make_repairer(b.model.result.head, b.model.alignment, b.backend, b.cfg.bench);
    pipeline::EvalOptions eo;
    eo.timing = true;
    eo.on_table = [&](const std::string&, const gatefuse::ResultTable& t) {
        if (t.method != "odca") return;
        for (const auto& row : t.rows)
            if (row.step_latency_us) b.latency_us.push_back(*row.step_latency_us);
    };
    b.report = pipeline::evaluate(b.data, b.split.test, rep, b.cfg.bench, eo);
    b.seconds = seconds_since(t0);
}

std::pair<bool, std::string> check_ordering(const Benchmark& b) {
    bool ok = b.seconds < 600.0;
    std::string detail;
    for (const char* sev : {"weak", "mid", "strong"}) {
        const double o = b.report.cell("odca", sev)->rmse;
        const double f = b.report.cell("forecast_replace", sev)->rmse;
        const double p = b.report.cell("passthrough", sev)->rmse;
        ok = ok && o < f && o < p;
        detail += std::string(sev) + " odca " + num(o) + " fr " + num(f) + " pt " + num(p) + "; ";
        if (std::string(sev) == "strong") {
            ok = ok && o <= 0.70 * f;
            detail += "strong ratio " + num(o / f, 3) + " (<= 0.70); ";
        }
    }
    detail += "pipeline " + num(b.seconds, 1) + " s";
    return {ok, detail};
}

std::pair<bool, std::string> check_clean(const Benchmark& b) {
    const double o = b.report.cell("odca", "none")->rmse;
    const double p = b.report.cell("passthrough", "none")->rmse;
    return {o <= 1.05 * p, "clean odca " + num(o, 6) + " vs passthrough " + num(p, 6)};
}

std::pair<bool, std::string> check_diagnostics(const Benchmark& b) {
    const metrics::Diagnostics* strong = nullptr;
    for (const auto& d : b.report.diagnostics)
        if (d.severity == "strong") strong = &d;
    if (!strong) return {false, "no strong-severity diagnostics"};
    // The rank-based implementation against the exhaustive pairwise count.
    Rng rng(77);
    std::size_t cases = 0, mismatches = 0;
    for (int k = 0; k < 2000; ++k) {
        const std::size_t n = 2 + rng.index(199);
        std::vector<double> s(n);
        std::vector<bool> l(n);
        for (std::size_t i = 0; i < n; ++i) {
            l[i] = rng.bernoulli(rng.uniform(0.1, 0.9));
            s[i] = k % 2 ? std::round(rng.normal(l[i] ? 0.7 : 0.0, 1.0) * 3.0) : rng.normal(l[i] ? 0.7 : 0.0, 1.0);
        }
        l[0] = true;
        l[n - 1] = false;
        ++cases;
        if (std::abs(metrics::auroc(s, l) - testing::pairwise_auroc(s, l)) > 1e-12) ++mismatches;
    }
    const bool ok = strong->auroc_xs > 0.7 && strong->auroc_chg > 0.7 && mismatches == 0;
    return {ok, "strong auroc xs " + num(strong->auroc_xs) + ", chg " + num(strong->auroc_chg) + "; oracle " +
                    std::to_string(cases - mismatches) + "/" + std::to_string(cases) + " cases equal"};
}

std::pair<bool, std::string> check_persistence(const Benchmark& b) {
    auto sc = b.cfg.closedloop.scenario;
    sc.rho = 1.0;
    const std::vector<double> durations{0.5, 1.0, 3.0};
    const std::size_t n = b.cfg.closedloop.n_trials;
    const auto none = closedloop::persistence_sweep(sc, durations, n, closedloop::Defense::none);
    const auto rep = pipeline::make_repairer(b.model.result.head, b.model.alignment, b.backend, b.cfg.bench);
    const auto odca = closedloop::persistence_sweep(sc, durations, n, closedloop::Defense::odca, &rep);
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < durations.size(); ++i) {
        const double want = std::round(durations[i] * sc.fps);
        ok = ok && std::abs(static_cast<double>(none[i].lost_min) - want) <= 1.0 &&
             std::abs(static_cast<double>(none[i].lost_max) - want) <= 1.0;
        if (i > 0) ok = ok && none[i].asr >= none[i - 1].asr;
        ok = ok && odca[i].asr <= none[i].asr;
        detail += num(durations[i], 1) + " s: lost " + std::to_string(none[i].lost_min) + "-" +
                  std::to_string(none[i].lost_max) + ", asr none " + num(none[i].asr, 3) + " odca " +
                  num(odca[i].asr, 3) + "; ";
    }
    ok = ok && none.back().asr == 1.0;
    return {ok, detail};
}

std::pair<bool, std::string> check_ablation(const Benchmark& b) {
    const auto rows = pipeline::ablation(b.data, b.split, b.backend, b.cfg.bench, attack::Severity::strong);
    double id_only = 0, id_d0 = 0, full = 0, worst_gap = -1e9;
    std::string detail;
    for (const auto& r : rows) {
        if (r.name == "L_ID") id_only = r.rmse;
        if (r.name == "L_ID+L_D0") id_d0 = r.rmse;
        if (r.name == "full") full = r.rmse;
        detail += r.name + " " + num(r.rmse) + "; ";
    }
    for (const auto& r : rows)
        if (r.name != "full") worst_gap = std::max(worst_gap, full - (r.rmse + 0.01));
    return {id_only > id_d0 && worst_gap <= 0.0, detail + "strong severity"};
}

std::pair<bool, std::string> check_latency(const Benchmark& b) {
    if (b.latency_us.empty()) return {false, "no timed steps"};
    const double mean_ms =
        std::accumulate(b.latency_us.begin(), b.latency_us.end(), 0.0) / static_cast<double>(b.latency_us.size()) /
        1000.0;
    return {mean_ms < 5.0, "mean step " + num(mean_ms, 3) + " ms over " + std::to_string(b.latency_us.size()) +
                               " steps"};
}

// Runs the full command chain in `workdir`/ws, capturing every command's
// stdout, then moves workspace and captures to `dest`. Both runs share one
// workspace path so printed paths match.
bool run_cli_chain(const std::string& cli, const fs::path& workdir, const fs::path& dest, std::string& error) {
    const fs::path ws = workdir / "ws", cap = workdir / "stdout";
    for (const auto& p : {ws, cap, dest}) fs::remove_all(p);
    fs::create_directories(cap);
    const std::vector<std::string> cmds{"gen",        "attack",       "align",
                                        "train",      "repair",
                                        "eval --save-tables", "closedloop --defense both",
                                        "sweep --defense both",         "report"};
    int i = 0;
    for (const auto& c : cmds) {
        const fs::path out = cap / ("stdout_" + std::to_string(i++) + ".txt");
        const std::string line =
            "\"" + cli + "\" --workdir \"" + ws.string() + "\" --seed 7 " + c + " > \"" + out.string() + "\"";
        if (std::system(line.c_str()) != 0) {
            error = "command failed: " + c;
            return false;
        }
    }
    fs::create_directories(dest);
    fs::rename(ws, dest / "ws");
    fs::rename(cap, dest / "stdout");
    return true;
}

std::pair<bool, std::string> check_determinism(const std::string& cli, const fs::path& workdir) {
    if (cli.empty()) return {false, "no CLI binary given (--cli)"};
    std::string error;
    const fs::path a = workdir / "det_a", b = workdir / "det_b";
    if (!run_cli_chain(cli, workdir, a, error) || !run_cli_chain(cli, workdir, b, error)) return {false, error};
    std::size_t files = 0, differing = 0;
    std::string first_diff;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), a);
        ++files;
        if (!fs::exists(b / rel) || read_text(e.path()) != read_text(b / rel)) {
            ++differing;
            if (first_diff.empty()) first_diff = rel.string();
        }
    }
    std::size_t files_b = 0;
    for (const auto& e : fs::recursive_directory_iterator(b)) files_b += e.is_regular_file();
    const bool ok = differing == 0 && files == files_b && files > 0;
    return {ok, std::to_string(files) + " output files across 9 commands, " + std::to_string(differing) +
                    " differ" + (first_diff.empty() ? "" : " (first: " + first_diff + ")")};
}

}  // namespace

int main(int argc, char** argv) {
    std::string cli;
    fs::path workdir = fs::temp_directory_path() / "odca-acceptance";
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--cli" && i + 1 < argc) cli = argv[++i];
        else if (a == "--workdir" && i + 1 < argc) workdir = argv[++i];
        else {
            std::cerr << "usage: odca_acceptance [--cli PATH] [--workdir DIR]\n";
            return 2;
        }
    }
    fs::create_directories(workdir);

    criterion("metric-fidelity", check_metric_fidelity);
    criterion("nominal-preservation", check_nominal_preservation);
    criterion("gradient-check", check_gradients);
    criterion("parameter-count", check_parameter_count);

    Benchmark bench(config::from_toml(""));
    bool have_bench = true;
    try {
        run_benchmark(bench);
    } catch (const std::exception& e) {
        have_bench = false;
        report(false, "benchmark", std::string("error: ") + e.what());
    }
    if (have_bench) {
        criterion("resilience-ordering", [&] { return check_ordering(bench); });
        criterion("clean-non-degradation", [&] { return check_clean(bench); });
        criterion("diagnostics-auroc", [&] { return check_diagnostics(bench); });
        criterion("attack-persistence", [&] { return check_persistence(bench); });
        criterion("ablation-ordering", [&] { return check_ablation(bench); });
        criterion("latency-budget", [&] { return check_latency(bench); });
    }
    criterion("cli-determinism", [&] { return check_determinism(cli, workdir); });

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
