#include "odca/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace odca::metrics {

namespace {

template <class Get>
std::pair<double, std::size_t> sum_errors(std::size_t n, Get get, bool squared) {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto [p, r] = get(i);
        if (!r) continue;
        if (!p) throw Error("prediction missing at frame " + std::to_string(i));
        const double e = *p - *r;
        acc += squared ? e * e : std::abs(e);
        ++count;
    }
    if (count == 0) throw Error("no frames with a reference value");
    return {acc, count};
}

void check_lengths(std::size_t a, std::size_t b) {
    if (a != b) throw Error("prediction and reference lengths differ");
    if (a == 0) throw Error("empty series");
}

constexpr std::array<const char*, 3> kSeverities{"weak", "mid", "strong"};

}  // namespace

double rmse(std::span<const std::optional<double>> pred, std::span<const std::optional<double>> ref) {
    check_lengths(pred.size(), ref.size());
    const auto [s, n] = sum_errors(pred.size(), [&](std::size_t i) { return std::pair(pred[i], ref[i]); }, true);
    return std::sqrt(s / static_cast<double>(n));
}

double mae(std::span<const std::optional<double>> pred, std::span<const std::optional<double>> ref) {
    check_lengths(pred.size(), ref.size());
    const auto [s, n] = sum_errors(pred.size(), [&](std::size_t i) { return std::pair(pred[i], ref[i]); }, false);
    return s / static_cast<double>(n);
}

double rmse(std::span<const double> pred, std::span<const double> ref) {
    check_lengths(pred.size(), ref.size());
    const auto [s, n] = sum_errors(
        pred.size(), [&](std::size_t i) { return std::pair(std::optional(pred[i]), std::optional(ref[i])); }, true);
    return std::sqrt(s / static_cast<double>(n));
}

double mae(std::span<const double> pred, std::span<const double> ref) {
    check_lengths(pred.size(), ref.size());
    const auto [s, n] = sum_errors(
        pred.size(), [&](std::size_t i) { return std::pair(std::optional(pred[i]), std::optional(ref[i])); }, false);
    return s / static_cast<double>(n);
}

namespace {

struct Ranked {
    std::vector<std::size_t> order;  // indices sorted by score
    std::size_t pos = 0;
    std::size_t neg = 0;
};

Ranked rank(std::span<const double> scores, const std::vector<bool>& labels, bool descending) {
    if (scores.size() != labels.size()) throw Error("scores and labels differ in length");
    Ranked r;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) throw Error("non-finite score at index " + std::to_string(i));
        labels[i] ? ++r.pos : ++r.neg;
    }
    if (r.pos == 0 || r.neg == 0) throw Error("degenerate labels");
    r.order.resize(scores.size());
    std::iota(r.order.begin(), r.order.end(), std::size_t{0});
    std::stable_sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) {
        return descending ? scores[a] > scores[b] : scores[a] < scores[b];
    });
    return r;
}

}  // namespace

double auroc(std::span<const double> scores, const std::vector<bool>& labels) {
    const auto r = rank(scores, labels, false);
    // Twice the Mann-Whitney U, kept integral so ties stay exact.
    std::uint64_t twice_u = 0;
    std::uint64_t neg_below = 0;
    for (std::size_t i = 0; i < r.order.size();) {
        std::size_t j = i;
        std::uint64_t p = 0, n = 0;
        while (j < r.order.size() && scores[r.order[j]] == scores[r.order[i]]) {
            labels[r.order[j]] ? ++p : ++n;
            ++j;
        }
        twice_u += 2 * p * neg_below + p * n;
        neg_below += n;
        i = j;
    }
    return static_cast<double>(twice_u) / (2.0 * static_cast<double>(r.pos) * static_cast<double>(r.neg));
}

double auprc(std::span<const double> scores, const std::vector<bool>& labels) {
    const auto r = rank(scores, labels, true);
    double ap = 0.0;
    double prev_recall = 0.0;
    std::size_t tp = 0, seen = 0;
    for (std::size_t i = 0; i < r.order.size();) {
        std::size_t j = i;
        while (j < r.order.size() && scores[r.order[j]] == scores[r.order[i]]) {
            if (labels[r.order[j]]) ++tp;
            ++seen;
            ++j;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(r.pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(seen);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

ScoreStreams score_streams(const gatefuse::ResultTable& table) {
    ScoreStreams s;
    for (const auto& row : table.rows) {
        if (!row.label) continue;
        if (row.r_xs) {
            s.xs.values.push_back(*row.r_xs);
            s.xs.labels.push_back(*row.label);
        }
        if (row.d_fused && row.d_tilde) {
            s.chg.values.push_back(std::abs(*row.d_fused - *row.d_tilde));
            s.chg.labels.push_back(*row.label);
        }
    }
    return s;
}

void append_streams(ScoreStreams& into, const ScoreStreams& from) {
    auto cat = [](Scores& a, const Scores& b) {
        a.values.insert(a.values.end(), b.values.begin(), b.values.end());
        a.labels.insert(a.labels.end(), b.labels.begin(), b.labels.end());
    };
    cat(into.xs, from.xs);
    cat(into.chg, from.chg);
}

double bounded_degradation(double rmse_weak, double rmse_strong) {
    if (!(rmse_weak > 0.0)) throw Error("bounded degradation needs rmse_weak > 0");
    return (rmse_strong - rmse_weak) / rmse_weak;
}

Rgr rgr(std::span<const double> rmse_ours, std::span<const double> rmse_reference) {
    if (rmse_ours.size() != rmse_reference.size() || rmse_ours.empty())
        throw Error("rgr needs matching, non-empty severity lists");
    Rgr out;
    for (std::size_t i = 0; i < rmse_ours.size(); ++i) {
        if (!(rmse_reference[i] > 0.0)) throw Error("rgr needs reference RMSE > 0");
        out.per_severity.push_back(1.0 - rmse_ours[i] / rmse_reference[i]);
    }
    out.mean = std::accumulate(out.per_severity.begin(), out.per_severity.end(), 0.0) /
               static_cast<double>(out.per_severity.size());
    return out;
}

ClosedLoopAggregate closed_loop_aggregate(std::span<const TrialSummary> trials) {
    if (trials.empty()) throw Error("closed-loop aggregate needs at least one trial");
    ClosedLoopAggregate a;
    a.n_trials = trials.size();
    std::vector<double> lat;
    for (const auto& t : trials) {
        if (!t.success) continue;
        ++a.n_success;
        if (t.latency) lat.push_back(*t.latency);
    }
    a.scr = static_cast<double>(a.n_success) / static_cast<double>(a.n_trials);
    a.asr = 1.0 - a.scr;
    if (!lat.empty()) {
        const double mean = std::accumulate(lat.begin(), lat.end(), 0.0) / static_cast<double>(lat.size());
        const bool constant = std::all_of(lat.begin(), lat.end(), [&](double v) { return v == lat.front(); });
        a.latency_mean = constant ? lat.front() : mean;
        double ss = 0.0;
        for (double v : lat) ss += (v - mean) * (v - mean);
        a.latency_std = constant || lat.size() < 2 ? 0.0 : std::sqrt(ss / static_cast<double>(lat.size() - 1));
    }
    return a;
}

// ---------------------------------------------------------------------------
// Report

const CellMetrics* EvalReport::cell(const std::string& method, const std::string& severity) const {
    for (const auto& c : cells)
        if (c.method == method && c.severity == severity) return &c;
    return nullptr;
}

void EvalReport::summarize() {
    summary.clear();
    std::vector<std::string> methods;
    for (const auto& c : cells)
        if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
    for (const auto& m : methods) {
        MethodSummary s;
        s.method = m;
        const auto* w = cell(m, "weak");
        const auto* st = cell(m, "strong");
        if (w && st && w->rmse > 0.0) s.bd = bounded_degradation(w->rmse, st->rmse);
        std::vector<double> ours, ref;
        for (const char* sev : kSeverities) {
            const auto* a = cell(m, sev);
            const auto* b = cell("forecast_replace", sev);
            if (!a || !b || !(b->rmse > 0.0)) break;
            ours.push_back(a->rmse);
            ref.push_back(b->rmse);
        }
        if (ours.size() == kSeverities.size()) s.rgr = rgr(ours, ref);
        summary.push_back(s);
    }
}

namespace {

using ojson = nlohmann::ordered_json;

ojson opt_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

}  // namespace

std::string report_to_json(const EvalReport& report, const std::string& config_json) {
    ojson j;
    if (!config_json.empty()) j["config"] = ojson::parse(config_json);
    j["cells"] = ojson::array();
    for (const auto& c : report.cells)
        j["cells"].push_back(
            {{"method", c.method}, {"severity", c.severity}, {"rmse", c.rmse}, {"mae", c.mae}, {"n_frames", c.n_frames}});
    j["diagnostics"] = ojson::array();
    for (const auto& d : report.diagnostics)
        j["diagnostics"].push_back({{"severity", d.severity},
                                    {"auroc_xs", d.auroc_xs},
                                    {"auprc_xs", d.auprc_xs},
                                    {"auroc_chg", d.auroc_chg},
                                    {"auprc_chg", d.auprc_chg},
                                    {"n_positive", d.n_positive},
                                    {"n_negative", d.n_negative}});
    j["summary"] = ojson::array();
    for (const auto& s : report.summary) {
        ojson e{{"method", s.method}, {"bd", opt_json(s.bd)}};
        if (s.rgr) {
            e["rgr_per_severity"] = s.rgr->per_severity;
            e["rgr_mean"] = s.rgr->mean;
        } else {
            e["rgr_per_severity"] = nullptr;
            e["rgr_mean"] = nullptr;
        }
        j["summary"].push_back(e);
    }
    if (report.closed_loop) {
        const auto& a = *report.closed_loop;
        j["closed_loop"] = {{"n_trials", a.n_trials},         {"n_success", a.n_success},
                            {"scr", a.scr},                   {"asr", a.asr},
                            {"latency_mean", opt_json(a.latency_mean)}, {"latency_std", opt_json(a.latency_std)}};
    }
    return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
    EvalReport r;
    try {
        const auto j = nlohmann::json::parse(text);
        for (const auto& c : j.at("cells"))
            r.cells.push_back({c.at("method").get<std::string>(), c.at("severity").get<std::string>(),
                               c.at("rmse").get<double>(), c.at("mae").get<double>(),
                               c.at("n_frames").get<std::size_t>()});
        for (const auto& d : j.at("diagnostics"))
            r.diagnostics.push_back({d.at("severity").get<std::string>(), d.at("auroc_xs").get<double>(),
                                     d.at("auprc_xs").get<double>(), d.at("auroc_chg").get<double>(),
                                     d.at("auprc_chg").get<double>(), d.at("n_positive").get<std::size_t>(),
                                     d.at("n_negative").get<std::size_t>()});
        if (j.contains("closed_loop")) {
            const auto& c = j.at("closed_loop");
            ClosedLoopAggregate a;
            a.n_trials = c.at("n_trials").get<std::size_t>();
            a.n_success = c.at("n_success").get<std::size_t>();
            a.scr = c.at("scr").get<double>();
            a.asr = c.at("asr").get<double>();
            a.latency_mean = opt_from(c, "latency_mean");
            a.latency_std = opt_from(c, "latency_std");
            r.closed_loop = a;
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("bad evaluation report: ") + e.what());
    }
    r.summarize();
    return r;
}

namespace {

std::vector<std::string> method_order(const EvalReport& r) {
    std::vector<std::string> m;
    for (const auto& c : r.cells)
        if (std::find(m.begin(), m.end(), c.method) == m.end()) m.push_back(c.method);
    return m;
}

std::string opt_cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

std::string table1_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "method,weak,mid,strong,clean,bd,rgr_mean\n";
    for (const auto& m : method_order(report)) {
        out << m;
        for (const char* sev : {"weak", "mid", "strong", "none"}) {
            const auto* c = report.cell(m, sev);
            out << ',' << (c ? format_double(c->rmse) : std::string());
        }
        const MethodSummary* s = nullptr;
        for (const auto& e : report.summary)
            if (e.method == m) s = &e;
        out << ',' << (s ? opt_cell(s->bd) : std::string());
        out << ',' << (s && s->rgr ? format_double(s->rgr->mean) : std::string()) << '\n';
    }
    return out.str();
}

std::string heatmap_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "method,severity,rmse,mae\n";
    for (const auto& c : report.cells)
        out << c.method << ',' << c.severity << ',' << format_double(c.rmse) << ',' << format_double(c.mae) << '\n';
    return out.str();
}

std::string radar_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "method,axis,value\n";
    for (const auto& m : method_order(report)) {
        for (const char* sev : kSeverities)
            if (const auto* c = report.cell(m, sev)) out << m << ",rmse_" << sev << ',' << format_double(c->rmse) << '\n';
        for (const auto& s : report.summary) {
            if (s.method != m) continue;
            if (s.bd) {
                out << m << ",bd," << format_double(*s.bd) << '\n';
                out << m << ",bd_inverted," << format_double(1.0 / (1.0 + *s.bd)) << '\n';
            }
            if (s.rgr) out << m << ",rgr_mean," << format_double(s.rgr->mean) << '\n';
        }
    }
    return out.str();
}

}  // namespace odca::metrics
