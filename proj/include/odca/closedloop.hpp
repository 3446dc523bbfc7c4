#pragma once

// One-dimensional stop-sign approach with detection-suppression attacks, a
// confirm-then-brake controller and an optional repair defense.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "odca/gatefuse.hpp"
#include "odca/metrics.hpp"

namespace odca::closedloop {

struct ScenarioConfig {
    double d0 = 3.0;            // m, initial distance to the sign
    double v = 0.6;             // m/s
    double fps = 16.0;          // detection frame rate
    double trigger_dist = 1.2;  // m
    int k_confirm = 3;
    double decel = 2.0;         // m/s^2
    double d_safe = 0.60;       // m
    double t_atk = 0.0;         // s
    /// When set, each trial draws its duration from U(t_atk, t_atk_max).
    std::optional<double> t_atk_max;
    double rho = 1.0;           // per-frame suppression probability
    double attack_jitter = 0.3; // s, attack start after stable detection is U(0, jitter)
    double cooldown = 1.0;      // s simulated after the window closes
    double detect_range = 1.5;  // m
    double p_miss = 0.05;       // nominal per-frame detection miss
    double conf_nominal = 0.92;
    double depth_noise = 0.01;  // m
    double lidar_noise = 0.02;  // m
    double lidar_alpha = 0.95;  // true depth = alpha * lidar + beta
    double lidar_beta = 0.05;
    double max_time = 20.0;     // s
    std::uint64_t seed = 0;

    void validate() const;
};

enum class Defense { none, odca };
std::string_view to_string(Defense d);
Defense defense_from_string(std::string_view name);

enum class Outcome { success, late, missed };
std::string_view to_string(Outcome o);

struct FrameRecord {
    double t = 0.0;
    double true_dist = 0.0;
    bool detected = false;
    std::optional<double> reported_depth;
    std::optional<double> lidar;
    std::optional<double> conf;
    std::optional<double> fused_dist;
    bool brake = false;

    bool operator==(const FrameRecord&) const = default;
};

struct TrialLog {
    std::vector<FrameRecord> frames;
    Outcome outcome = Outcome::missed;
    double d_brake_final = 0.0;
    std::optional<double> latency;
    std::size_t lost_detection_frames = 0;
    std::optional<double> brake_time;
    std::optional<double> stop_time;
    double t_atk = 0.0;
    std::uint64_t seed = 0;

    bool success() const { return outcome == Outcome::success; }
    bool operator==(const TrialLog&) const = default;
};

/// `repairer` is required when defense is odca.
TrialLog run_trial(const ScenarioConfig& cfg, Defense defense, const gatefuse::Repairer* repairer = nullptr);

/// Seed of trial i in a batch.
std::uint64_t trial_seed(std::uint64_t base, std::size_t i);

struct BatchResult {
    std::vector<TrialLog> trials;
    metrics::ClosedLoopAggregate aggregate;
};

BatchResult run_batch(const ScenarioConfig& tmpl, std::size_t n_trials, Defense defense,
                      const gatefuse::Repairer* repairer = nullptr);

struct SweepRow {
    double t_atk = 0.0;
    std::size_t lost_min = 0;
    std::size_t lost_max = 0;
    double lost_mean = 0.0;
    double asr = 0.0;
    std::size_t n_trials = 0;
};

/// Trials i of every duration share seed trial_seed(cfg.seed, i).
std::vector<SweepRow> persistence_sweep(const ScenarioConfig& cfg, const std::vector<double>& t_atk_list,
                                        std::size_t n_trials, Defense defense,
                                        const gatefuse::Repairer* repairer = nullptr);

std::string trial_to_jsonl(const TrialLog& log);
std::string sweep_to_csv(const std::vector<SweepRow>& rows);
std::string aggregate_to_json(const metrics::ClosedLoopAggregate& a);

}  // namespace odca::closedloop
