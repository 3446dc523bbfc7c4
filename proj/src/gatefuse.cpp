#include "odca/gatefuse.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "text.hpp"

namespace odca::gatefuse {

void GateConfig::validate() const {
    if (!(tau_low >= 0.0 && tau_low < tau_high)) throw Error("gate: need 0 <= tau_low < tau_high");
    if (!(gamma > 0.0)) throw Error("gate: gamma must be > 0");
}

double gate(double r_xs, const GateConfig& cfg) {
    const double u = std::clamp((r_xs - cfg.tau_low) / (cfg.tau_high - cfg.tau_low), 0.0, 1.0);
    if (u == 0.0 || u == 1.0 || cfg.gamma == 1.0) return u;
    return std::pow(u, cfg.gamma);
}

double fuse(double d_tilde, double d_rep, double w) {
    if (!(w >= 0.0 && w <= 1.0)) throw Error("fuse: weight outside [0, 1]");
    if (w == 0.0) return d_tilde;
    if (w == 1.0) return d_rep;
    const double v = d_tilde + w * (d_rep - d_tilde);
    return std::clamp(v, std::min(d_tilde, d_rep), std::max(d_tilde, d_rep));
}

StepOutput step(const SensorFrame& frame, const ContextWindow& context, double dt, std::uint64_t seed,
                const Repairer& r) {
    if (!r.head || !r.backend) throw Error("step: repairer is missing its head or forecaster");
    forecast::ForecastRequest req;
    req.context = context;
    req.horizon = r.horizon;
    req.n_samples = r.samples;
    req.seed = seed;
    const auto fc = forecast::forecast(req, *r.backend);

    StepOutput out;
    out.mu1 = fc.mu[0];
    out.sigma1 = fc.sigma[0];
    out.blackout = !frame.depth.has_value();
    out.d_work = out.blackout ? out.mu1 : *frame.depth;
    const double conf = out.blackout ? 0.0 : frame.conf.value_or(0.0);
    const auto x = repair::make_features(out.d_work, conf, out.mu1, out.sigma1, frame.speed, frame.throttle,
                                         frame.steering, dt);
    out.delta = r.head->predict(x);
    out.d_rep = out.d_work + out.delta;
    out.r_delta = std::abs(out.delta);

    std::optional<double> lidar_d;
    if (frame.lidar) lidar_d = r.alignment.apply(*frame.lidar);
    if (lidar_d) out.r_xs = std::abs(out.d_work - *lidar_d);

    if (out.blackout) {
        out.w = 1.0;
    } else if (!lidar_d) {
        out.w = 1.0;
    } else {
        out.w = gate(*out.r_xs, r.gate);
    }
    out.used_fallback = !lidar_d;
    out.d_fused = fuse(out.d_work, out.d_rep, out.w);
    if (!std::isfinite(out.d_fused)) throw Error("step produced a non-finite distance");
    if (lidar_d) out.r_post = std::abs(out.d_fused - *lidar_d);
    return out;
}

std::optional<double> trusted_value(const SensorFrame& frame, const StepOutput& out) {
    if (!frame.depth) return std::nullopt;
    if (out.used_fallback) return out.d_fused;
    if (out.w == 0.0) return *frame.depth;
    return std::nullopt;
}

RunResult run_sequence(const SensorSequence& seq, const Repairer& r, const RunOptions& opts) {
    const std::size_t n = seq.frames.size();
    RunResult result;
    result.steps.reserve(n);
    if (n == 0) return result;
    const double dt = opts.fixed_dt || n < 2 ? kFixedDt : estimate_dt(timestamps(seq));

    std::vector<std::optional<double>> history;
    history.reserve(n);
    bool seen = false;
    for (std::size_t t = 0; t < n; ++t) {
        const auto start = std::chrono::steady_clock::now();
        ContextWindow ctx;
        try {
            if (!seen) {
                const std::optional<double> first = seq.frames[t].depth;
                ctx = make_window(std::span(&first, 1), 0, r.window, dt);
            } else {
                ctx = make_window(history, t - 1, r.window, dt);
            }
        } catch (const Error& e) {
            throw Error("frame " + std::to_string(t) + ": " + e.what());
        }
        auto out = step(seq.frames[t], ctx, dt, repair::step_seed(opts.seed, t), r);
        const auto stop = std::chrono::steady_clock::now();
        history.push_back(trusted_value(seq.frames[t], out));
        seen = seen || history.back().has_value();
        result.steps.push_back(out);
        if (opts.timing)
            result.latency_us.push_back(std::chrono::duration<double, std::micro>(stop - start).count());
    }
    return result;
}

// ---------------------------------------------------------------------------
// Results table

namespace {

using json = nlohmann::ordered_json;

constexpr std::string_view kHeader = "t,d_clean,d_tilde,d_rep,d_fused,w,r_xs,r_delta,r_post,label,step_latency_us";
constexpr std::string_view kMetaPrefix = "# odca-results ";

void fill_common(ResultTable& table, const SensorSequence& seq, const align::AffineAlignment&,
                 const SensorSequence* clean) {
    if (clean && clean->frames.size() != seq.frames.size())
        throw Error("clean reference length differs from the sequence");
    table.sequence_id = seq.id;
    table.rows.resize(seq.frames.size());
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        auto& row = table.rows[i];
        row.t = seq.frames[i].t;
        if (clean) row.d_clean = clean->frames[i].depth;
        if (seq.labels) row.label = (*seq.labels)[i].attacked;
    }
}

}  // namespace

ResultTable make_table(const SensorSequence& seq, const RunResult& run, const align::AffineAlignment& alignment,
                       const SensorSequence* clean) {
    if (run.steps.size() != seq.frames.size()) throw Error("run length differs from the sequence");
    ResultTable table;
    table.method = "odca";
    fill_common(table, seq, alignment, clean);
    for (std::size_t i = 0; i < run.steps.size(); ++i) {
        const auto& s = run.steps[i];
        auto& row = table.rows[i];
        row.d_tilde = s.d_work;
        row.d_rep = s.d_rep;
        row.d_fused = s.d_fused;
        row.w = s.w;
        row.r_xs = s.r_xs;
        row.r_delta = s.r_delta;
        row.r_post = s.r_post;
        if (i < run.latency_us.size()) row.step_latency_us = run.latency_us[i];
    }
    return table;
}

ResultTable make_table(const SensorSequence& seq, const std::string& method,
                       const std::vector<std::optional<double>>& estimate, const align::AffineAlignment& alignment,
                       const SensorSequence* clean) {
    if (estimate.size() != seq.frames.size()) throw Error("estimate length differs from the sequence");
    ResultTable table;
    table.method = method;
    fill_common(table, seq, alignment, clean);
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        const auto& f = seq.frames[i];
        auto& row = table.rows[i];
        row.d_tilde = f.depth;
        row.d_fused = estimate[i];
        if (f.depth && f.lidar) row.r_xs = std::abs(*f.depth - alignment.apply(*f.lidar));
        if (estimate[i] && f.lidar) row.r_post = std::abs(*estimate[i] - alignment.apply(*f.lidar));
    }
    return table;
}

std::string table_to_csv(const ResultTable& table) {
    std::string out;
    out += kMetaPrefix;
    out += json{{"sequence", table.sequence_id}, {"method", table.method}}.dump();
    out += '\n';
    out += kHeader;
    out += '\n';
    auto opt = [&out](const std::optional<double>& v) {
        out += ',';
        if (v) out += format_double(*v);
    };
    for (const auto& r : table.rows) {
        out += format_double(r.t);
        opt(r.d_clean);
        opt(r.d_tilde);
        opt(r.d_rep);
        opt(r.d_fused);
        opt(r.w);
        opt(r.r_xs);
        opt(r.r_delta);
        opt(r.r_post);
        out += ',';
        if (r.label) out += *r.label ? '1' : '0';
        opt(r.step_latency_us);
        out += '\n';
    }
    return out;
}

ResultTable table_from_csv(std::string_view text) {
    ResultTable table;
    bool header_seen = false;
    const auto lines = detail::split_lines(text);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        const auto line = lines[ln];
        const std::size_t row = ln + 1;
        if (line.empty()) continue;
        if (line.front() == '#') {
            if (line.starts_with(kMetaPrefix)) {
                try {
                    const auto m = nlohmann::json::parse(line.substr(kMetaPrefix.size()));
                    table.sequence_id = m.value("sequence", std::string());
                    table.method = m.value("method", std::string());
                } catch (const nlohmann::json::exception& e) {
                    throw Error("row " + std::to_string(row) + ": bad metadata: " + e.what());
                }
            }
            continue;
        }
        if (!header_seen) {
            if (line != kHeader)
                throw Error("row " + std::to_string(row) + ": unexpected header (want " + std::string(kHeader) + ")");
            header_seen = true;
            continue;
        }
        const auto c = detail::split_cells(line);
        if (c.size() != 11)
            throw Error("row " + std::to_string(row) + ": expected 11 columns, got " + std::to_string(c.size()));
        ResultRow r;
        r.t = detail::parse_number(c[0], row, "t");
        r.d_clean = detail::parse_optional(c[1], row, "d_clean");
        r.d_tilde = detail::parse_optional(c[2], row, "d_tilde");
        r.d_rep = detail::parse_optional(c[3], row, "d_rep");
        r.d_fused = detail::parse_optional(c[4], row, "d_fused");
        r.w = detail::parse_optional(c[5], row, "w");
        r.r_xs = detail::parse_optional(c[6], row, "r_xs");
        r.r_delta = detail::parse_optional(c[7], row, "r_delta");
        r.r_post = detail::parse_optional(c[8], row, "r_post");
        if (c[9] == "1") r.label = true;
        else if (c[9] == "0") r.label = false;
        else if (!c[9].empty())
            throw Error("row " + std::to_string(row) + ": malformed label '" + std::string(c[9]) + "'");
        r.step_latency_us = detail::parse_optional(c[10], row, "step_latency_us");
        table.rows.push_back(r);
    }
    if (!header_seen) throw Error("missing results header row");
    return table;
}

std::string table_to_jsonl(const ResultTable& table) {
    std::string out = json{{"sequence", table.sequence_id}, {"method", table.method}}.dump();
    out += '\n';
    for (const auto& r : table.rows) {
        json j;
        j["t"] = r.t;
        auto put = [&j](const char* k, const std::optional<double>& v) {
            if (v) j[k] = *v;
        };
        put("d_clean", r.d_clean);
        put("d_tilde", r.d_tilde);
        put("d_rep", r.d_rep);
        put("d_fused", r.d_fused);
        put("w", r.w);
        put("r_xs", r.r_xs);
        put("r_delta", r.r_delta);
        put("r_post", r.r_post);
        if (r.label) j["label"] = *r.label;
        put("step_latency_us", r.step_latency_us);
        out += j.dump();
        out += '\n';
    }
    return out;
}

ResultTable table_from_jsonl(std::string_view text) {
    ResultTable table;
    const auto lines = detail::split_lines(text);
    bool first = true;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        try {
            const auto j = nlohmann::json::parse(lines[ln]);
            if (first && !j.contains("t")) {
                table.sequence_id = j.value("sequence", std::string());
                table.method = j.value("method", std::string());
                first = false;
                continue;
            }
            first = false;
            ResultRow r;
            r.t = j.at("t").get<double>();
            auto get = [&j](const char* k) -> std::optional<double> {
                if (!j.contains(k) || j.at(k).is_null()) return std::nullopt;
                return j.at(k).get<double>();
            };
            r.d_clean = get("d_clean");
            r.d_tilde = get("d_tilde");
            r.d_rep = get("d_rep");
            r.d_fused = get("d_fused");
            r.w = get("w");
            r.r_xs = get("r_xs");
            r.r_delta = get("r_delta");
            r.r_post = get("r_post");
            if (j.contains("label")) r.label = j.at("label").get<bool>();
            r.step_latency_us = get("step_latency_us");
            table.rows.push_back(r);
        } catch (const nlohmann::json::exception& e) {
            throw Error("row " + std::to_string(ln + 1) + ": " + e.what());
        }
    }
    return table;
}

void save_table(const ResultTable& table, const std::filesystem::path& path) {
    write_text(path, format_for(path) == FileFormat::csv ? table_to_csv(table) : table_to_jsonl(table));
}

ResultTable load_table(const std::filesystem::path& path) {
    const auto text = read_text(path);
    try {
        return format_for(path) == FileFormat::csv ? table_from_csv(text) : table_from_jsonl(text);
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

}  // namespace odca::gatefuse
