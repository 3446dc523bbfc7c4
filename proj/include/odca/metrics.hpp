#pragma once

// Recovery-fidelity and diagnostic metrics plus the evaluation report.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odca/gatefuse.hpp"

namespace odca::metrics {

/// Frames where ref is absent are skipped; a missing prediction on an
/// included frame is an error.
double rmse(std::span<const std::optional<double>> pred, std::span<const std::optional<double>> ref);
double mae(std::span<const std::optional<double>> pred, std::span<const std::optional<double>> ref);
double rmse(std::span<const double> pred, std::span<const double> ref);
double mae(std::span<const double> pred, std::span<const double> ref);

/// Mann-Whitney form, ties counted one half.
double auroc(std::span<const double> scores, const std::vector<bool>& labels);
/// Average precision over the ranked list (step convention).
double auprc(std::span<const double> scores, const std::vector<bool>& labels);

struct Scores {
    std::vector<double> values;
    std::vector<bool> labels;
};

struct ScoreStreams {
    Scores xs;   // |d_tilde - lidar aligned|
    Scores chg;  // |d_fused - d_tilde|
};

/// Frames without a label, or without the inputs a score needs, are left out
/// of that stream.
ScoreStreams score_streams(const gatefuse::ResultTable& table);
void append_streams(ScoreStreams& into, const ScoreStreams& from);

/// (strong - weak) / weak.
double bounded_degradation(double rmse_weak, double rmse_strong);

struct Rgr {
    std::vector<double> per_severity;
    double mean = 0.0;
};

/// 1 - ours / reference per severity, and their mean.
Rgr rgr(std::span<const double> rmse_ours, std::span<const double> rmse_reference);

struct TrialSummary {
    bool success = false;
    std::optional<double> latency;
};

struct ClosedLoopAggregate {
    std::size_t n_trials = 0;
    std::size_t n_success = 0;
    double scr = 0.0;
    double asr = 0.0;
    std::optional<double> latency_mean;
    std::optional<double> latency_std;
};

/// Latency statistics are over successes only; the standard deviation is
/// the sample one (zero for a single success).
ClosedLoopAggregate closed_loop_aggregate(std::span<const TrialSummary> trials);

// ---------------------------------------------------------------------------
// Evaluation report

struct CellMetrics {
    std::string method;
    std::string severity;  // none (clean), weak, mid, strong
    double rmse = 0.0;
    double mae = 0.0;
    std::size_t n_frames = 0;
};

struct Diagnostics {
    std::string severity;
    double auroc_xs = 0.0;
    double auprc_xs = 0.0;
    double auroc_chg = 0.0;
    double auprc_chg = 0.0;
    std::size_t n_positive = 0;
    std::size_t n_negative = 0;
};

struct MethodSummary {
    std::string method;
    std::optional<double> bd;
    std::optional<Rgr> rgr;  // against forecast_replace
};

struct EvalReport {
    std::vector<CellMetrics> cells;
    std::vector<Diagnostics> diagnostics;
    std::vector<MethodSummary> summary;
    std::optional<ClosedLoopAggregate> closed_loop;

    const CellMetrics* cell(const std::string& method, const std::string& severity) const;
    /// Fills `summary` from `cells`.
    void summarize();
};

/// `config_json` is embedded verbatim under "config" (empty for none).
std::string report_to_json(const EvalReport& report, const std::string& config_json = {});
EvalReport report_from_json(const std::string& text);

/// method,weak,mid,strong,clean,bd,rgr_mean
std::string table1_csv(const EvalReport& report);
/// method,severity,rmse,mae
std::string heatmap_csv(const EvalReport& report);
/// method,axis,value with BD also given as 1 / (1 + BD).
std::string radar_csv(const EvalReport& report);

}  // namespace odca::metrics
