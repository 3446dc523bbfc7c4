#pragma once

// Online per-step repair: cross-sensor residual, gate, convex fusion and the
// diagnostic residuals, plus the per-frame results table shared by every
// estimator.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "odca/align.hpp"
#include "odca/core.hpp"
#include "odca/forecast.hpp"
#include "odca/repair.hpp"

namespace odca::gatefuse {

struct GateConfig {
    double tau_low = 0.15;   // m
    double tau_high = 0.60;  // m
    double gamma = 1.0;

    void validate() const;
};

/// w = clip((r - tau_low) / (tau_high - tau_low), 0, 1)^gamma.
double gate(double r_xs, const GateConfig& cfg);

/// (1 - w) d_tilde + w d_rep; returns d_tilde unchanged when w == 0.
double fuse(double d_tilde, double d_rep, double w);

struct StepOutput {
    double d_fused = 0.0;
    double w = 0.0;
    std::optional<double> r_xs;
    double r_delta = 0.0;
    std::optional<double> r_post;
    bool used_fallback = false;

    // Intermediate values kept for the results table.
    double d_work = 0.0;  // observed depth, or mu1 on a blackout
    double d_rep = 0.0;
    double delta = 0.0;
    double mu1 = 0.0;
    double sigma1 = 0.0;
    bool blackout = false;
};

/// Everything a step needs besides the frame and its context.
struct Repairer {
    const repair::DeltaHead* head = nullptr;
    align::AffineAlignment alignment;
    GateConfig gate;
    const forecast::Backend* backend = nullptr;
    std::size_t window = 64;
    std::size_t horizon = 16;
    std::size_t samples = 20;
};

/// One pass of the online algorithm. `context` is the depth history the
/// forecaster sees; `dt` is the sampling period fed to the head.
StepOutput step(const SensorFrame& frame, const ContextWindow& context, double dt, std::uint64_t seed,
                const Repairer& r);

struct RunOptions {
    std::uint64_t seed = 0;
    bool fixed_dt = false;
    bool timing = false;
};

struct RunResult {
    std::vector<StepOutput> steps;
    std::vector<double> latency_us;  // filled when timing is requested
};

/// Entry a step contributes to the forecaster history: the observation when
/// the gate stayed closed, the fused value when LiDAR is absent, otherwise a
/// gap.
std::optional<double> trusted_value(const SensorFrame& frame, const StepOutput& out);

/// Causal left-to-right application. The forecaster context at step t is
/// the trusted history through t - 1, or the current observation until the
/// first trusted entry exists.
RunResult run_sequence(const SensorSequence& seq, const Repairer& r, const RunOptions& opts = {});

// ---------------------------------------------------------------------------
// Results table

struct ResultRow {
    double t = 0.0;
    std::optional<double> d_clean;
    std::optional<double> d_tilde;
    std::optional<double> d_rep;
    std::optional<double> d_fused;
    std::optional<double> w;
    std::optional<double> r_xs;
    std::optional<double> r_delta;
    std::optional<double> r_post;
    std::optional<bool> label;
    std::optional<double> step_latency_us;

    bool operator==(const ResultRow&) const = default;
};

struct ResultTable {
    std::string sequence_id;
    std::string method;
    std::vector<ResultRow> rows;

    bool operator==(const ResultTable&) const = default;
};

/// Rows for a run of the online algorithm. `clean` supplies d_clean when
/// known; labels come from `seq`.
ResultTable make_table(const SensorSequence& seq, const RunResult& run, const align::AffineAlignment& alignment,
                       const SensorSequence* clean = nullptr);

/// Rows for an estimator that only produces a distance series.
ResultTable make_table(const SensorSequence& seq, const std::string& method,
                       const std::vector<std::optional<double>>& estimate, const align::AffineAlignment& alignment,
                       const SensorSequence* clean = nullptr);

std::string table_to_csv(const ResultTable& table);
ResultTable table_from_csv(std::string_view text);
std::string table_to_jsonl(const ResultTable& table);
ResultTable table_from_jsonl(std::string_view text);
void save_table(const ResultTable& table, const std::filesystem::path& path);
ResultTable load_table(const std::filesystem::path& path);

}  // namespace odca::gatefuse
