#include "odca/closedloop.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "odca/synth.hpp"

namespace odca::closedloop {

void ScenarioConfig::validate() const {
    if (!(d0 > trigger_dist && trigger_dist > d_safe && d_safe > 0.0))
        throw Error("scenario: need d0 > trigger_dist > d_safe > 0");
    if (!(fps > 0.0)) throw Error("scenario: fps must be > 0");
    if (!(v > 0.0)) throw Error("scenario: v must be > 0");
    if (!(decel > 0.0)) throw Error("scenario: decel must be > 0");
    if (k_confirm < 1) throw Error("scenario: k_confirm must be >= 1");
    if (!(rho >= 0.0 && rho <= 1.0)) throw Error("scenario: rho must lie in [0, 1]");
    if (!(t_atk >= 0.0)) throw Error("scenario: t_atk must be >= 0");
    if (t_atk_max && !(*t_atk_max >= t_atk)) throw Error("scenario: t_atk_max must be >= t_atk");
    if (!(p_miss >= 0.0 && p_miss < 1.0)) throw Error("scenario: p_miss must lie in [0, 1)");
    if (!(attack_jitter >= 0.0 && cooldown >= 0.0)) throw Error("scenario: attack_jitter and cooldown must be >= 0");
    if (!(lidar_alpha > 0.0)) throw Error("scenario: lidar_alpha must be > 0");
    if (!(max_time > 0.0)) throw Error("scenario: max_time must be > 0");
}

std::string_view to_string(Defense d) { return d == Defense::none ? "none" : "odca"; }

Defense defense_from_string(std::string_view name) {
    if (name == "none") return Defense::none;
    if (name == "odca") return Defense::odca;
    throw Error("unknown defense '" + std::string(name) + "' (expected none or odca)");
}

std::string_view to_string(Outcome o) {
    switch (o) {
        case Outcome::success: return "success";
        case Outcome::late: return "late";
        case Outcome::missed: return "missed";
    }
    return "missed";
}

TrialLog run_trial(const ScenarioConfig& cfg, Defense defense, const gatefuse::Repairer* repairer) {
    cfg.validate();
    if (defense == Defense::odca && !repairer) throw Error("defense odca needs a trained repairer");

    TrialLog log;
    log.seed = cfg.seed;
    Rng sensor(mix_seed(cfg.seed, 1));
    Rng attack(mix_seed(cfg.seed, 2));
    log.t_atk = cfg.t_atk_max ? attack.uniform(cfg.t_atk, *cfg.t_atk_max) : cfg.t_atk;
    const double jitter = attack.uniform(0.0, cfg.attack_jitter);

    const double dt = 1.0 / cfg.fps;
    double pos = cfg.d0;
    double vel = cfg.v;
    bool braking = false;
    int stable = 0;
    int confirm = 0;
    double run_start = 0.0;
    std::optional<double> atk_start;
    std::optional<double> first_detection;
    std::vector<std::optional<double>> history;
    bool seen = false;
    std::optional<double> last_reported;

    for (std::size_t k = 0;; ++k) {
        const double t = static_cast<double>(k) * dt;
        const bool in_range = pos > 0.0 && pos <= cfg.detect_range;
        const bool miss = sensor.bernoulli(cfg.p_miss);
        const double n_depth = sensor.normal(0.0, cfg.depth_noise);
        const double n_lidar = sensor.normal(0.0, cfg.lidar_noise);
        const double n_conf = sensor.uniform(-0.03, 0.03);

        const bool in_window = log.t_atk > 0.0 && atk_start && t >= *atk_start && t < *atk_start + log.t_atk;
        const bool suppressed = in_window && attack.bernoulli(cfg.rho);
        if (suppressed) ++log.lost_detection_frames;
        const bool detected = in_range && !miss && !suppressed;

        if (!atk_start) {
            stable = detected ? stable + 1 : 0;
            if (stable >= cfg.k_confirm) atk_start = t + jitter;
        }

        FrameRecord rec;
        rec.t = t;
        rec.true_dist = pos;
        rec.detected = detected;
        if (detected) {
            rec.reported_depth = pos + n_depth;
            rec.conf = cfg.conf_nominal + n_conf;
        } else if (in_range) {
            rec.conf = 0.02;
        }
        rec.lidar = (pos - cfg.lidar_beta) / cfg.lidar_alpha + n_lidar;
        if (detected && !first_detection) first_detection = t;

        std::optional<double> usable;
        if (defense == Defense::none) {
            usable = rec.reported_depth;
        } else if (first_detection) {
            SensorFrame f;
            f.t = t;
            f.depth = rec.reported_depth;
            f.conf = rec.conf;
            f.lidar = rec.lidar;
            f.speed = vel;
            f.throttle = braking ? 0.0 : synth::cruise_throttle(vel);
            if (rec.reported_depth) last_reported = rec.reported_depth;
            const std::optional<double> first = last_reported;
            const ContextWindow ctx = !seen ? make_window(std::span(&first, 1), 0, repairer->window, dt)
                                                      : make_window(history, history.size() - 1, repairer->window, dt);
            const auto out = gatefuse::step(f, ctx, dt, repair::step_seed(cfg.seed, k), *repairer);
            history.push_back(gatefuse::trusted_value(f, out));
            seen = seen || history.back().has_value();
            usable = out.d_fused;
        }
        rec.fused_dist = usable;

        if (!braking && usable) {
            if (*usable <= cfg.trigger_dist) {
                if (confirm == 0) run_start = t;
                if (++confirm >= cfg.k_confirm) {
                    braking = true;
                    log.brake_time = t;
                }
            } else {
                confirm = 0;
            }
        }
        rec.brake = braking;
        log.frames.push_back(rec);

        // Advance the vehicle by one frame.
        if (braking && vel > 0.0) {
            if (vel <= cfg.decel * dt) {
                pos -= vel * vel / (2.0 * cfg.decel);
                log.stop_time = t + vel / cfg.decel;
                vel = 0.0;
            } else {
                pos -= vel * dt - 0.5 * cfg.decel * dt * dt;
                vel -= cfg.decel * dt;
            }
        } else {
            pos -= vel * dt;
        }

        const double t_next = t + dt;
        const bool settled = vel == 0.0 || pos < 0.0;
        bool window_over = log.t_atk == 0.0;
        if (atk_start) window_over = t_next >= *atk_start + log.t_atk + cfg.cooldown;
        else if (pos < 0.0) window_over = true;
        if ((settled && window_over) || t_next >= cfg.max_time) break;
    }

    const double final_pos = pos;
    log.d_brake_final = std::max(0.0, cfg.trigger_dist - final_pos);
    const bool stopped_before = log.stop_time.has_value() && final_pos >= 0.0;
    if (!log.brake_time) {
        log.outcome = Outcome::missed;
    } else if (stopped_before && log.d_brake_final <= cfg.d_safe) {
        log.outcome = Outcome::success;
        log.latency = *log.stop_time - run_start;
    } else {
        log.outcome = Outcome::late;
    }
    return log;
}

std::uint64_t trial_seed(std::uint64_t base, std::size_t i) { return mix_seed(base, 0xc1, i); }

BatchResult run_batch(const ScenarioConfig& tmpl, std::size_t n_trials, Defense defense,
                      const gatefuse::Repairer* repairer) {
    if (n_trials == 0) throw Error("run_batch: n_trials must be >= 1");
    BatchResult out;
    std::vector<metrics::TrialSummary> summaries;
    for (std::size_t i = 0; i < n_trials; ++i) {
        ScenarioConfig cfg = tmpl;
        cfg.seed = trial_seed(tmpl.seed, i);
        out.trials.push_back(run_trial(cfg, defense, repairer));
        summaries.push_back({out.trials.back().success(), out.trials.back().latency});
    }
    out.aggregate = metrics::closed_loop_aggregate(summaries);
    return out;
}

std::vector<SweepRow> persistence_sweep(const ScenarioConfig& cfg, const std::vector<double>& t_atk_list,
                                        std::size_t n_trials, Defense defense,
                                        const gatefuse::Repairer* repairer) {
    if (t_atk_list.empty()) throw Error("persistence sweep needs at least one duration");
    std::vector<SweepRow> rows;
    for (double d : t_atk_list) {
        ScenarioConfig c = cfg;
        c.t_atk = d;
        c.t_atk_max.reset();
        const auto batch = run_batch(c, n_trials, defense, repairer);
        SweepRow row;
        row.t_atk = d;
        row.n_trials = n_trials;
        row.lost_min = batch.trials.front().lost_detection_frames;
        double sum = 0.0;
        for (const auto& tr : batch.trials) {
            row.lost_min = std::min(row.lost_min, tr.lost_detection_frames);
            row.lost_max = std::max(row.lost_max, tr.lost_detection_frames);
            sum += static_cast<double>(tr.lost_detection_frames);
        }
        row.lost_mean = sum / static_cast<double>(n_trials);
        row.asr = batch.aggregate.asr;
        rows.push_back(row);
    }
    return rows;
}

namespace {

using ojson = nlohmann::ordered_json;

ojson opt(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

}  // namespace

std::string trial_to_jsonl(const TrialLog& log) {
    std::string out;
    for (const auto& f : log.frames) {
        ojson j{{"t", f.t},
                {"true_dist", f.true_dist},
                {"detected", f.detected},
                {"reported_depth", opt(f.reported_depth)},
                {"lidar", opt(f.lidar)},
                {"conf", opt(f.conf)},
                {"fused_dist", opt(f.fused_dist)},
                {"brake", f.brake}};
        out += j.dump();
        out += '\n';
    }
    ojson trailer{{"trailer", true},
                  {"seed", log.seed},
                  {"t_atk", log.t_atk},
                  {"outcome", std::string(to_string(log.outcome))},
                  {"d_brake_final", log.d_brake_final},
                  {"latency", opt(log.latency)},
                  {"lost_detection_frames", log.lost_detection_frames},
                  {"brake_time", opt(log.brake_time)},
                  {"stop_time", opt(log.stop_time)}};
    out += trailer.dump();
    out += '\n';
    return out;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "t_atk,lost_frames_min,lost_frames_max,lost_frames_mean,asr,n_trials\n";
    for (const auto& r : rows)
        out << format_double(r.t_atk) << ',' << r.lost_min << ',' << r.lost_max << ',' << format_double(r.lost_mean)
            << ',' << format_double(r.asr) << ',' << r.n_trials << '\n';
    return out.str();
}

std::string aggregate_to_json(const metrics::ClosedLoopAggregate& a) {
    ojson j{{"n_trials", a.n_trials}, {"n_success", a.n_success},         {"scr", a.scr},
            {"asr", a.asr},           {"latency_mean", opt(a.latency_mean)}, {"latency_std", opt(a.latency_std)}};
    return j.dump(2) + "\n";
}

}  // namespace odca::closedloop
