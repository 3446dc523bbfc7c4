#include "odca/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace odca::pipeline {

Split split_by_series(std::size_t n, std::uint64_t seed) {
    if (n == 0) throw Error("split: no series");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(seed, 0x5911));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

    std::size_t n_test = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
    std::size_t n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
    if (n >= 3) {
        n_test = std::max<std::size_t>(n_test, 1);
        n_val = std::max<std::size_t>(n_val, 1);
    }
    if (n_test + n_val >= n) {
        n_val = 0;
        n_test = n > 1 ? 1 : 0;
    }
    Split s;
    const std::size_t n_train = n - n_val - n_test;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                        order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.validation.begin(), s.validation.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

const attack::AttackSpec& BenchmarkConfig::spec(attack::Severity s) const {
    switch (s) {
        case attack::Severity::weak: return attacks[0];
        case attack::Severity::mid: return attacks[1];
        case attack::Severity::strong: return attacks[2];
        case attack::Severity::none: break;
    }
    throw Error("no attack spec for severity none");
}

std::uint64_t attack_seed(std::uint64_t base, attack::Severity s, std::size_t index, std::size_t repeat) {
    return mix_seed(mix_seed(base, 0xa7 + static_cast<std::uint64_t>(s)), index, repeat);
}

SensorSequence attacked_variant(const SensorSequence& clean, std::size_t index, attack::Severity s,
                                std::size_t repeat, const BenchmarkConfig& cfg) {
    if (s == attack::Severity::none) return attack::label_clean(clean);
    auto spec = cfg.spec(s);
    spec.seed = attack_seed(cfg.seed, s, index, repeat);
    return attack::apply_attack(clean, spec);
}

namespace {

std::vector<SensorSequence> training_variants(const SensorSequence& clean, std::size_t i, const BenchmarkConfig& cfg) {
    std::vector<SensorSequence> variants{attack::label_clean(clean)};
    for (auto s : {attack::Severity::weak, attack::Severity::mid, attack::Severity::strong})
        for (std::size_t r = 0; r < cfg.attack_repeats; ++r) variants.push_back(attacked_variant(clean, i, s, r, cfg));
    return variants;
}

}  // namespace

repair::TrainingSet build_training_set(const std::vector<SensorSequence>& data, const std::vector<std::size_t>& idx,
                                       const align::AffineAlignment& alignment, const forecast::Backend& backend,
                                       const BenchmarkConfig& cfg) {
    repair::TrainingSet set;
    repair::FeatureOptions fo;
    fo.window = cfg.window;
    fo.horizon = cfg.horizon;
    fo.samples = cfg.samples;
    fo.fixed_dt = cfg.fixed_dt;
    fo.seed = cfg.seed;
    fo.tau_low = cfg.gate.tau_low;
    for (std::size_t i : idx) {
        const auto& clean = data.at(i);
        repair::append_training_frames(set, clean, training_variants(clean, i, cfg), alignment, backend, fo);
    }
    return set;
}

TrainingData build_training_data(const std::vector<SensorSequence>& data, const Split& split,
                                 const align::AffineAlignment& alignment, const forecast::Backend& backend,
                                 const BenchmarkConfig& cfg) {
    return {build_training_set(data, split.train, alignment, backend, cfg),
            build_training_set(data, split.validation, alignment, backend, cfg)};
}

align::AffineAlignment fit_alignment(const std::vector<SensorSequence>& data, const Split& split,
                                     const BenchmarkConfig& cfg) {
    if (split.train.empty()) throw Error("align: the split has no training series");
    std::vector<SensorSequence> calib;
    for (std::size_t i : split.train) calib.push_back(data.at(i));
    return align::fit_from_sequences(calib, cfg.align);
}

gatefuse::Repairer make_repairer(const repair::DeltaHead& head, const align::AffineAlignment& alignment,
                                 const forecast::Backend& backend, const BenchmarkConfig& cfg) {
    gatefuse::Repairer r;
    r.head = &head;
    r.alignment = alignment;
    r.gate = cfg.gate;
    r.backend = &backend;
    r.window = cfg.window;
    r.horizon = cfg.horizon;
    r.samples = cfg.samples;
    return r;
}

gatefuse::ResultTable run_method(const std::string& method, const SensorSequence& seq, const SensorSequence& clean,
                                 const gatefuse::Repairer& repairer, const BenchmarkConfig& cfg, bool timing) {
    const auto& al = repairer.alignment;
    if (method == "passthrough") return gatefuse::make_table(seq, method, baselines::passthrough(seq), al, &clean);
    if (method == "lidar_only") return gatefuse::make_table(seq, method, baselines::lidar_only(seq, al), al, &clean);
    if (method == "ekf") return gatefuse::make_table(seq, method, baselines::ekf_fuse(seq, al, cfg.ekf), al, &clean);
    if (method == "forecast_replace") {
        baselines::ReplaceOptions ro{cfg.window, cfg.horizon, cfg.samples, cfg.seed, cfg.fixed_dt};
        return gatefuse::make_table(seq, method, baselines::forecast_replace(seq, *repairer.backend, ro), al, &clean);
    }
    if (method == "odca") {
        gatefuse::RunOptions ro{cfg.seed, cfg.fixed_dt, timing};
        return gatefuse::make_table(seq, gatefuse::run_sequence(seq, repairer, ro), al, &clean);
    }
    throw Error("unknown method '" + method + "'");
}

std::pair<double, double> pooled_errors(const std::vector<gatefuse::ResultTable>& tables, std::size_t* n_frames) {
    std::vector<std::optional<double>> pred, ref;
    for (const auto& t : tables) {
        std::optional<double> last;
        for (const auto& row : t.rows) {
            if (row.d_fused) last = row.d_fused;
            pred.push_back(last);
            ref.push_back(row.d_clean);
        }
    }
    // Leading frames with nothing to carry forward are scored against the
    // first available estimate of their series instead of being dropped.
    std::size_t base = 0;
    for (const auto& t : tables) {
        std::optional<double> first;
        for (std::size_t i = 0; i < t.rows.size() && !first; ++i) first = pred[base + i];
        for (std::size_t i = 0; i < t.rows.size() && !pred[base + i]; ++i) pred[base + i] = first;
        base += t.rows.size();
    }
    if (n_frames) *n_frames = static_cast<std::size_t>(std::count_if(ref.begin(), ref.end(), [](auto& v) { return v.has_value(); }));
    return {metrics::rmse(pred, ref), metrics::mae(pred, ref)};
}

metrics::EvalReport evaluate(const std::vector<SensorSequence>& data, const std::vector<std::size_t>& idx,
                             const gatefuse::Repairer& repairer, const BenchmarkConfig& cfg, const EvalOptions& opts) {
    if (idx.empty()) throw Error("evaluate: no series to evaluate");
    metrics::EvalReport report;
    for (auto sev : opts.severities) {
        const std::string sev_name(attack::to_string(sev));
        std::vector<std::vector<gatefuse::ResultTable>> per_method(opts.methods.size());
        for (std::size_t i : idx) {
            const auto& clean = data.at(i);
            const auto seq = attacked_variant(clean, i, sev, kEvalRepeat, cfg);
            for (std::size_t m = 0; m < opts.methods.size(); ++m) {
                auto table = run_method(opts.methods[m], seq, clean, repairer, cfg, opts.timing);
                if (opts.on_table) opts.on_table(sev_name, table);
                per_method[m].push_back(std::move(table));
            }
        }
        for (std::size_t m = 0; m < opts.methods.size(); ++m) {
            metrics::CellMetrics c;
            c.method = opts.methods[m];
            c.severity = sev_name;
            std::tie(c.rmse, c.mae) = pooled_errors(per_method[m], &c.n_frames);
            report.cells.push_back(c);
            if (opts.methods[m] != "odca" || sev == attack::Severity::none) continue;
            metrics::ScoreStreams streams;
            for (const auto& t : per_method[m]) metrics::append_streams(streams, metrics::score_streams(t));
            metrics::Diagnostics d;
            d.severity = sev_name;
            d.auroc_xs = metrics::auroc(streams.xs.values, streams.xs.labels);
            d.auprc_xs = metrics::auprc(streams.xs.values, streams.xs.labels);
            d.auroc_chg = metrics::auroc(streams.chg.values, streams.chg.labels);
            d.auprc_chg = metrics::auprc(streams.chg.values, streams.chg.labels);
            d.n_positive = static_cast<std::size_t>(std::count(streams.xs.labels.begin(), streams.xs.labels.end(), true));
            d.n_negative = streams.xs.labels.size() - d.n_positive;
            report.diagnostics.push_back(d);
        }
    }
    report.summarize();
    return report;
}

TrainedModel train_model(const std::vector<SensorSequence>& data, const Split& split,
                         const forecast::Backend& backend, const BenchmarkConfig& cfg,
                         const std::function<void(const repair::EpochLog&)>& on_epoch) {
    TrainedModel m;
    m.alignment = fit_alignment(data, split, cfg);
    const auto sets = build_training_data(data, split, m.alignment, backend, cfg);
    m.result = repair::train(sets.train, sets.validation, cfg.train, on_epoch);
    return m;
}

std::vector<std::pair<std::string, repair::LossWeights>> ablation_subsets(const repair::LossWeights& full) {
    auto pick = [&](bool d0, bool cons, bool kin) {
        repair::LossWeights w = full;
        if (!d0) w.lambda_delta0 = 0.0;
        if (!cons) w.lambda_cons = 0.0;
        if (!kin) w.lambda_kin = 0.0;
        return w;
    };
    return {{"L_ID", pick(false, false, false)},
            {"L_ID+L_D0", pick(true, false, false)},
            {"L_ID+L_D0+L_cons", pick(true, true, false)},
            {"L_ID+L_D0+L_kin", pick(true, false, true)},
            {"full", pick(true, true, true)}};
}

std::vector<AblationRow> ablation(const std::vector<SensorSequence>& data, const Split& split,
                                  const forecast::Backend& backend, const BenchmarkConfig& cfg,
                                  attack::Severity severity) {
    const auto alignment = fit_alignment(data, split, cfg);
    const auto sets = build_training_data(data, split, alignment, backend, cfg);
    std::vector<AblationRow> rows;
    for (const auto& [name, weights] : ablation_subsets(cfg.train.loss.weights)) {
        auto tc = cfg.train;
        tc.loss.weights = weights;
        const auto result = repair::train(sets.train, sets.validation, tc);
        const auto rep = make_repairer(result.head, alignment, backend, cfg);
        EvalOptions eo;
        eo.methods = {"odca"};
        eo.severities = {severity};
        const auto report = evaluate(data, split.test, rep, cfg, eo);
        AblationRow row;
        row.name = name;
        row.weights = weights;
        row.rmse = report.cells.front().rmse;
        row.mae = report.cells.front().mae;
        row.best_epoch = result.best_epoch;
        rows.push_back(row);
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << "variant,lambda_id,lambda_delta0,lambda_cons,lambda_kin,rmse,mae,best_epoch\n";
    for (const auto& r : rows)
        out << r.name << ',' << format_double(r.weights.lambda_id) << ',' << format_double(r.weights.lambda_delta0)
            << ',' << format_double(r.weights.lambda_cons) << ',' << format_double(r.weights.lambda_kin) << ','
            << format_double(r.rmse) << ',' << format_double(r.mae) << ',' << r.best_epoch << '\n';
    return out.str();
}

}  // namespace odca::pipeline
