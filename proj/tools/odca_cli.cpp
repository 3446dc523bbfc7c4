// odca command-line front end. Every command works inside one workspace
// directory; see README.md for the layout.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "odca/closedloop.hpp"
#include "odca/config.hpp"
#include "odca/pipeline.hpp"

namespace fs = std::filesystem;
using namespace odca;
using ojson = nlohmann::ordered_json;

namespace {

struct Globals {
    fs::path workdir = "odca-run";
    fs::path config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    bool verbose = false;
};

struct Workspace {
    fs::path root;
    fs::path data() const { return root / "data"; }
    fs::path manifest() const { return data() / "manifest.json"; }
    fs::path attacked(const std::string& sev) const { return root / "attacked" / sev; }
    fs::path model() const { return root / "model"; }
    fs::path alignment() const { return model() / "alignment.json"; }
    fs::path head() const { return model() / "head.json"; }
    fs::path results(const std::string& sev) const { return root / "results" / sev; }
    fs::path reports() const { return root / "reports"; }
    fs::path closedloop() const { return root / "closedloop"; }
};

config::RunConfig resolve_config(const Globals& g) {
    config::RunConfig cfg = g.config_path.empty() ? config::RunConfig{} : config::load(g.config_path);
    if (g.seed) cfg.seed = *g.seed;
    for (const auto& o : g.overrides) config::apply_override(cfg, o);
    cfg.finalize();
    return cfg;
}

std::string needs(const std::string& what, const fs::path& path, const std::string& command, const Globals& g) {
    return "missing " + what + " at " + path.string() + "; run `odca " + command + " --workdir " +
           g.workdir.string() + "` first";
}

struct Dataset {
    std::vector<SensorSequence> sequences;
    pipeline::Split split;
};

std::vector<std::size_t> index_list(const ojson& j) { return j.get<std::vector<std::size_t>>(); }

Dataset load_dataset(const Workspace& ws, const Globals& g) {
    if (!fs::exists(ws.manifest())) throw Error(needs("dataset", ws.manifest(), "gen", g));
    const auto m = ojson::parse(read_text(ws.manifest()));
    Dataset d;
    for (const auto& id : m.at("sequences")) d.sequences.push_back(load_sequence(ws.data() / (id.get<std::string>() + ".csv")));
    d.split.train = index_list(m.at("split").at("train"));
    d.split.validation = index_list(m.at("split").at("validation"));
    d.split.test = index_list(m.at("split").at("test"));
    return d;
}

align::AffineAlignment load_alignment(const Workspace& ws, const Globals& g) {
    if (!fs::exists(ws.alignment())) throw Error(needs("alignment", ws.alignment(), "align", g));
    return align::load_alignment(ws.alignment());
}

repair::DeltaHead load_head(const Workspace& ws, const Globals& g) {
    if (!fs::exists(ws.head())) throw Error(needs("trained head", ws.head(), "train", g));
    return repair::load_head(ws.head());
}

std::vector<attack::Severity> parse_severities(const std::vector<std::string>& names) {
    std::vector<attack::Severity> out;
    for (const auto& n : names) out.push_back(attack::severity_from_string(n));
    return out;
}

void log(const Globals& g, const std::string& msg) {
    if (g.verbose) std::cerr << msg << '\n';
}

// ---------------------------------------------------------------------------
// Commands

void cmd_gen(const Globals& g) {
    const auto cfg = resolve_config(g);
    const Workspace ws{g.workdir};
    const auto data = synth::generate(cfg.gen);
    const auto split = pipeline::split_by_series(data.size(), cfg.seed);
    fs::create_directories(ws.data());
    ojson m;
    m["sequences"] = ojson::array();
    for (const auto& s : data) {
        save_sequence(s, ws.data() / (s.id + ".csv"));
        m["sequences"].push_back(s.id);
    }
    m["split"] = {{"train", split.train}, {"validation", split.validation}, {"test", split.test}};
    m["config"] = ojson::parse(config::to_json(cfg));
    write_text(ws.manifest(), m.dump(2) + "\n");
    std::cout << "wrote " << data.size() << " sequences to " << ws.data().string() << '\n';
}

void cmd_attack(const Globals& g, const std::vector<std::string>& severities, const fs::path& input,
                const fs::path& output) {
    const auto cfg = resolve_config(g);
    const auto sevs = parse_severities(severities);
    if (!input.empty()) {
        if (output.empty()) throw Error("attack: --input needs --output");
        if (sevs.size() != 1) throw Error("attack: --input takes exactly one --severity");
        auto spec = cfg.bench.spec(sevs.front());
        spec.seed = pipeline::attack_seed(cfg.seed, sevs.front(), 0, pipeline::kEvalRepeat);
        save_sequence(attack::apply_attack(load_sequence(input), spec), output);
        std::cout << "wrote " << output.string() << '\n';
        return;
    }
    const Workspace ws{g.workdir};
    const auto d = load_dataset(ws, g);
    for (auto sev : sevs) {
        const std::string name(attack::to_string(sev));
        fs::create_directories(ws.attacked(name));
        for (std::size_t i = 0; i < d.sequences.size(); ++i) {
            const auto v = pipeline::attacked_variant(d.sequences[i], i, sev, pipeline::kEvalRepeat, cfg.bench);
            save_sequence(v, ws.attacked(name) / (v.id + ".csv"));
        }
        std::cout << "wrote " << d.sequences.size() << " " << name << " sequences to " << ws.attacked(name).string()
                  << '\n';
    }
}

void cmd_align(const Globals& g) {
    const auto cfg = resolve_config(g);
    const Workspace ws{g.workdir};
    const auto d = load_dataset(ws, g);
    const auto a = pipeline::fit_alignment(d.sequences, d.split, cfg.bench);
    fs::create_directories(ws.model());
    align::save_alignment(a, ws.alignment());
    std::cout << "alpha " << format_double(a.alpha) << " beta " << format_double(a.beta) << " n_used " << a.n_used
              << '\n';
}

void cmd_train(const Globals& g) {
    const auto cfg = resolve_config(g);
    const Workspace ws{g.workdir};
    const auto d = load_dataset(ws, g);
    const auto alignment = load_alignment(ws, g);
    const auto backend = forecast::backend_from_env(cfg.bootstrap);
    const auto sets = pipeline::build_training_data(d.sequences, d.split, alignment, *backend, cfg.bench);
    const auto result = repair::train(sets.train, sets.validation, cfg.bench.train, [&](const repair::EpochLog& e) {
            if (g.verbose && e.epoch % 10 == 0)
                std::cerr << "epoch " << e.epoch << " train " << format_double(e.train.total) << " validation "
                          << format_double(e.validation.total) << '\n';
        });
    fs::create_directories(ws.model());
    repair::save_head(result.head, ws.head());
    write_text(ws.model() / "training_log.csv", repair::training_log_csv(result.log));
    write_text(ws.model() / "config.toml", config::to_toml(cfg));
    std::cout << "trained " << result.head.parameter_count() << " parameters, best epoch " << result.best_epoch
              << '\n';
}

void cmd_repair(const Globals& g, const fs::path& input, const fs::path& output, bool timing) {
    const auto cfg = resolve_config(g);
    const Workspace ws{g.workdir};
    const auto alignment = load_alignment(ws, g);
    const auto head = load_head(ws, g);
    const auto backend = forecast::backend_from_env(cfg.bootstrap);
    const auto rep = pipeline::make_repairer(head, alignment, *backend, cfg.bench);
    const gatefuse::RunOptions ro{cfg.seed, cfg.bench.fixed_dt, timing};

    if (!input.empty()) {
        if (output.empty()) throw Error("repair: --input needs --output");
        const auto seq = load_sequence(input);
        const auto run = gatefuse::run_sequence(seq, rep, ro);
        auto table = gatefuse::make_table(seq, run, alignment);
        gatefuse::save_table(table, output);
        std::cout << "wrote " << output.string() << '\n';
        return;
    }
    const auto d = load_dataset(ws, g);
    std::size_t written = 0;
    for (const auto* sev : {"weak", "mid", "strong"}) {
        if (!fs::exists(ws.attacked(sev))) continue;
        fs::create_directories(ws.results(sev));
        for (std::size_t i : d.split.test) {
            const auto& clean = d.sequences[i];
            const fs::path path = ws.attacked(sev) / (clean.id + ".csv");
            if (!fs::exists(path)) throw Error(needs("attacked sequence", path, "attack", g));
            const auto seq = load_sequence(path);
            const auto run = gatefuse::run_sequence(seq, rep, ro);
            gatefuse::save_table(gatefuse::make_table(seq, run, alignment, &clean),
                                 ws.results(sev) / (clean.id + ".odca.csv"));
            ++written;
        }
    }
    if (written == 0) throw Error(needs("attacked sequences", ws.root / "attacked", "attack", g));
    std::cout << "wrote " << written << " result tables under " << (ws.root / "results").string() << '\n';
}

void cmd_eval(const Globals& g, bool ablation, bool save_tables, bool timing) {
    const auto cfg = resolve_config(g);
    const Workspace ws{g.workdir};
    const auto d = load_dataset(ws, g);
    const auto alignment = load_alignment(ws, g);
    const auto head = load_head(ws, g);
    const auto backend = forecast::backend_from_env(cfg.bootstrap);
    const auto rep = pipeline::make_repairer(head, alignment, *backend, cfg.bench);

    pipeline::EvalOptions eo;
    eo.timing = timing;
    if (save_tables)
        eo.on_table = [&](const std::string& sev, const gatefuse::ResultTable& t) {
            fs::create_directories(ws.results(sev));
            gatefuse::save_table(t, ws.results(sev) / (t.sequence_id + "." + t.method + ".csv"));
        };
    const auto report = pipeline::evaluate(d.sequences, d.split.test, rep, cfg.bench, eo);
    fs::create_directories(ws.reports());
    write_text(ws.reports() / "eval.json", metrics::report_to_json(report, config::to_json(cfg)));
    write_text(ws.reports() / "table1.csv", metrics::table1_csv(report));
    write_text(ws.reports() / "heatmap.csv", metrics::heatmap_csv(report));
    write_text(ws.reports() / "radar.csv", metrics::radar_csv(report));
    std::cout << metrics::table1_csv(report);
    if (ablation) {
        log(g, "retraining the loss ablation");
        const auto rows = pipeline::ablation(d.sequences, d.split, *backend, cfg.bench);
        write_text(ws.reports() / "ablation.csv", pipeline::ablation_csv(rows));
        std::cout << pipeline::ablation_csv(rows);
    }
}

std::vector<closedloop::Defense> parse_defenses(const std::string& name) {
    if (name == "both") return {closedloop::Defense::none, closedloop::Defense::odca};
    return {closedloop::defense_from_string(name)};
}

struct DefenseModel {
    std::optional<align::AffineAlignment> alignment;
    std::optional<repair::DeltaHead> head;
    std::shared_ptr<const forecast::Backend> backend;
    std::optional<gatefuse::Repairer> repairer;
};

void prepare_defense(DefenseModel& m, closedloop::Defense def, const config::RunConfig& cfg, const Workspace& ws,
                     const Globals& g) {
    if (def != closedloop::Defense::odca || m.repairer) return;
    m.alignment = load_alignment(ws, g);
    m.head = load_head(ws, g);
    m.backend = forecast::backend_from_env(cfg.bootstrap);
    m.repairer = pipeline::make_repairer(*m.head, *m.alignment, *m.backend, cfg.bench);
}

void cmd_closedloop(const Globals& g, const std::string& defense_opt) {
    const auto cfg = resolve_config(g);
    const Workspace ws{g.workdir};
    DefenseModel model;
    fs::create_directories(ws.closedloop());
    for (auto def : parse_defenses(defense_opt.empty() ? cfg.closedloop.defense : defense_opt)) {
        prepare_defense(model, def, cfg, ws, g);
        const std::string name(closedloop::to_string(def));
        const auto batch = closedloop::run_batch(cfg.closedloop.scenario, cfg.closedloop.n_trials, def,
                                                 model.repairer ? &*model.repairer : nullptr);
        std::string trials;
        for (const auto& t : batch.trials) trials += closedloop::trial_to_jsonl(t);
        write_text(ws.closedloop() / ("trials_" + name + ".jsonl"), trials);
        ojson j = ojson::parse(closedloop::aggregate_to_json(batch.aggregate));
        j["defense"] = name;
        j["t_atk"] = cfg.closedloop.scenario.t_atk;
        j["config"] = ojson::parse(config::to_json(cfg));
        write_text(ws.closedloop() / ("aggregate_" + name + ".json"), j.dump(2) + "\n");
        std::cout << name << ": scr " << format_double(batch.aggregate.scr) << " asr "
                  << format_double(batch.aggregate.asr) << " (" << batch.aggregate.n_trials << " trials)\n";
    }
}

void cmd_sweep(const Globals& g, const std::string& defense_opt) {
    const auto cfg = resolve_config(g);
    const Workspace ws{g.workdir};
    DefenseModel model;
    fs::create_directories(ws.closedloop());
    for (auto def : parse_defenses(defense_opt.empty() ? cfg.closedloop.defense : defense_opt)) {
        prepare_defense(model, def, cfg, ws, g);
        const std::string name(closedloop::to_string(def));
        const auto rows = closedloop::persistence_sweep(cfg.closedloop.scenario, cfg.closedloop.durations,
                                                        cfg.closedloop.n_trials, def,
                                                        model.repairer ? &*model.repairer : nullptr);
        const std::string csv = closedloop::sweep_to_csv(rows);
        write_text(ws.closedloop() / ("sweep_" + name + ".csv"), csv);
        std::cout << "defense " << name << '\n' << csv;
    }
}

// ---------------------------------------------------------------------------
// Report

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& path) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(read_text(path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream o;
    o.setf(std::ios::fixed);
    o.precision(digits);
    o << v;
    return o.str();
}

std::string fmt_cell(const std::string& cell) {
    if (cell.empty()) return "n/a";
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (!end || *end != '\0') return cell;
    // Counts stay integers.
    if (cell.find_first_of(".eE") == std::string::npos) return cell;
    return fmt(v);
}

void markdown_table(std::ostringstream& md, const std::vector<std::vector<std::string>>& rows) {
    if (rows.empty()) return;
    auto line = [&](const std::vector<std::string>& r, bool header) {
        md << '|';
        for (const auto& c : r) md << ' ' << (header ? c : fmt_cell(c)) << " |";
        md << '\n';
    };
    line(rows.front(), true);
    md << '|';
    for (std::size_t i = 0; i < rows.front().size(); ++i) md << " --- |";
    md << '\n';
    for (std::size_t i = 1; i < rows.size(); ++i) line(rows[i], false);
    md << '\n';
}

void cmd_report(const Globals& g) {
    const Workspace ws{g.workdir};
    const fs::path eval_path = ws.reports() / "eval.json";
    if (!fs::exists(eval_path)) throw Error(needs("evaluation report", eval_path, "eval", g));
    const auto text = read_text(eval_path);
    const auto report = metrics::report_from_json(text);
    const auto full = ojson::parse(text);

    std::ostringstream md;
    md << "# odca report\n\n";
    md << "## Distance RMSE (m) by severity\n\n";
    markdown_table(md, read_csv_rows(ws.reports() / "table1.csv"));

    md << "## Residual diagnostics\n\n";
    std::vector<std::vector<std::string>> diag{{"severity", "auroc_xs", "auprc_xs", "auroc_chg", "auprc_chg"}};
    for (const auto& dg : report.diagnostics)
        diag.push_back({dg.severity, format_double(dg.auroc_xs), format_double(dg.auprc_xs),
                        format_double(dg.auroc_chg), format_double(dg.auprc_chg)});
    markdown_table(md, diag);

    if (fs::exists(ws.reports() / "ablation.csv")) {
        md << "## Loss ablation (strong severity)\n\n";
        markdown_table(md, read_csv_rows(ws.reports() / "ablation.csv"));
    }
    std::vector<std::vector<std::string>> summary{{"section", "key", "value"}};
    for (const auto* def : {"none", "odca"}) {
        const fs::path sweep = ws.closedloop() / (std::string("sweep_") + def + ".csv");
        if (fs::exists(sweep)) {
            md << "## Attack persistence, defense " << def << "\n\n";
            markdown_table(md, read_csv_rows(sweep));
        }
        const fs::path agg = ws.closedloop() / (std::string("aggregate_") + def + ".json");
        if (fs::exists(agg)) {
            const auto a = ojson::parse(read_text(agg));
            md << "## Closed loop, defense " << def << "\n\n";
            std::vector<std::vector<std::string>> rows{{"metric", "value"}};
            for (const auto* k : {"t_atk", "n_trials", "n_success", "scr", "asr", "latency_mean", "latency_std"}) {
                const auto& v = a.at(k);
                rows.push_back({k, v.is_null() ? "" : v.dump()});
                summary.push_back({std::string("closedloop_") + def, k, v.is_null() ? "" : v.dump()});
            }
            markdown_table(md, rows);
        }
    }
    for (const auto& c : report.cells) {
        summary.push_back({"rmse", c.method + "/" + c.severity, format_double(c.rmse)});
        summary.push_back({"mae", c.method + "/" + c.severity, format_double(c.mae)});
    }
    for (const auto& dg : report.diagnostics) {
        summary.push_back({"auroc_xs", dg.severity, format_double(dg.auroc_xs)});
        summary.push_back({"auroc_chg", dg.severity, format_double(dg.auroc_chg)});
    }

    md << "## Configuration\n\n```toml\n";
    if (full.contains("config")) {
        for (const auto& [k, v] : full.at("config").items()) md << k << " = " << v.dump() << '\n';
    }
    md << "```\n";
    write_text(ws.reports() / "report.md", md.str());

    std::string csv = "section,key,value\n";
    for (std::size_t i = 1; i < summary.size(); ++i) csv += summary[i][0] + "," + summary[i][1] + "," + summary[i][2] + "\n";
    write_text(ws.reports() / "summary.csv", csv);
    std::cout << "wrote " << (ws.reports() / "report.md").string() << " and " << (ws.reports() / "summary.csv").string()
              << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"odca: gated depth repair toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("-w,--workdir", g.workdir, "Workspace directory")->capture_default_str();
    app.add_option("-c,--config", g.config_path, "TOML run configuration")->check(CLI::ExistingFile);
    app.add_option("--set", g.overrides, "Override a config key, e.g. --set train.epochs=50")->take_all();
    app.add_option("--seed", g.seed, "Top-level seed (overrides the config)");
    app.add_flag("-v,--verbose", g.verbose, "Progress on stderr");

    std::vector<std::string> severities{"weak", "mid", "strong"};
    fs::path input, output;
    bool timing = false, ablation = false, save_tables = false;
    std::string defense;

    auto* gen = app.add_subcommand("gen", "Generate the synthetic benchmark and its split");
    auto* atk = app.add_subcommand("attack", "Write attacked copies of the benchmark (or of one file)");
    atk->add_option("-s,--severity", severities, "Severities to write")->capture_default_str();
    atk->add_option("-i,--input", input, "Attack one sequence file instead of the workspace");
    atk->add_option("-o,--output", output, "Output file for --input");
    auto* aln = app.add_subcommand("align", "Fit the LiDAR-to-depth alignment on the training series");
    auto* trn = app.add_subcommand("train", "Train the delta head");
    auto* rep = app.add_subcommand("repair", "Run the online repair on attacked test series (or on one file)");
    rep->add_option("-i,--input", input, "Repair one sequence file");
    rep->add_option("-o,--output", output, "Result table for --input (.csv or .jsonl)");
    rep->add_flag("--timing", timing, "Record per-step wall-clock latency (not reproducible)");
    auto* evl = app.add_subcommand("eval", "Score every method on the test series");
    evl->add_flag("--ablation", ablation, "Also retrain and score the loss-term ablation");
    evl->add_flag("--save-tables", save_tables, "Write every per-frame result table");
    evl->add_flag("--timing", timing, "Record per-step wall-clock latency (not reproducible)");
    auto* cl = app.add_subcommand("closedloop", "Run closed-loop braking trials");
    cl->add_option("-d,--defense", defense, "none, odca or both (default from config)");
    auto* sw = app.add_subcommand("sweep", "Attack-persistence sweep over closedloop.durations");
    sw->add_option("-d,--defense", defense, "none, odca or both (default from config)");
    auto* rpt = app.add_subcommand("report", "Render reports/report.md and reports/summary.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*gen) cmd_gen(g);
        else if (*atk) cmd_attack(g, severities, input, output);
        else if (*aln) cmd_align(g);
        else if (*trn) cmd_train(g);
        else if (*rep) cmd_repair(g, input, output, timing);
        else if (*evl) cmd_eval(g, ablation, save_tables, timing);
        else if (*cl) cmd_closedloop(g, defense);
        else if (*sw) cmd_sweep(g, defense);
        else if (*rpt) cmd_report(g);
    } catch (const std::exception& e) {
        std::cerr << "odca: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
