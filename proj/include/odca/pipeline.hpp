#pragma once

// Benchmark plumbing: by-series split, calibration, training-set assembly,
// evaluation across methods and severities, and the loss ablation.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "odca/align.hpp"
#include "odca/attacksim.hpp"
#include "odca/baselines.hpp"
#include "odca/gatefuse.hpp"
#include "odca/metrics.hpp"
#include "odca/repair.hpp"
#include "odca/synth.hpp"

namespace odca::pipeline {

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

/// Shuffles series indices and cuts 70 / 10 / 20 (at least one series in
/// validation and test when n >= 3).
Split split_by_series(std::size_t n, std::uint64_t seed);

struct BenchmarkConfig {
    std::uint64_t seed = 7;
    std::size_t attack_repeats = 2;
    std::size_t window = 64;
    std::size_t horizon = 16;
    std::size_t samples = 20;
    bool fixed_dt = false;
    std::array<attack::AttackSpec, 3> attacks{attack::AttackSpec::preset(attack::Severity::weak),
                                              attack::AttackSpec::preset(attack::Severity::mid),
                                              attack::AttackSpec::preset(attack::Severity::strong)};
    gatefuse::GateConfig gate;
    repair::TrainConfig train;
    baselines::EkfConfig ekf;
    align::FitOptions align;

    const attack::AttackSpec& spec(attack::Severity s) const;
};

/// Attack seed for series `index`; repeat r < attack_repeats is training,
/// evaluation uses its own stream.
std::uint64_t attack_seed(std::uint64_t base, attack::Severity s, std::size_t index, std::size_t repeat);
inline constexpr std::size_t kEvalRepeat = 1000;

/// Attacked copy of clean series `index` (severity none returns the labeled
/// clean copy).
SensorSequence attacked_variant(const SensorSequence& clean, std::size_t index, attack::Severity s,
                                std::size_t repeat, const BenchmarkConfig& cfg);

/// Clean copy plus attack_repeats variants per severity for each index.
repair::TrainingSet build_training_set(const std::vector<SensorSequence>& data, const std::vector<std::size_t>& idx,
                                       const align::AffineAlignment& alignment, const forecast::Backend& backend,
                                       const BenchmarkConfig& cfg);

struct TrainingData {
    repair::TrainingSet train;
    repair::TrainingSet validation;
};

/// Training sets for the train and validation series of a split.
TrainingData build_training_data(const std::vector<SensorSequence>& data, const Split& split,
                                 const align::AffineAlignment& alignment, const forecast::Backend& backend,
                                 const BenchmarkConfig& cfg);

/// LiDAR alignment fitted on the training series.
align::AffineAlignment fit_alignment(const std::vector<SensorSequence>& data, const Split& split,
                                     const BenchmarkConfig& cfg);

gatefuse::Repairer make_repairer(const repair::DeltaHead& head, const align::AffineAlignment& alignment,
                                 const forecast::Backend& backend, const BenchmarkConfig& cfg);

inline const std::vector<std::string> kMethods{"passthrough", "lidar_only", "ekf", "forecast_replace", "odca"};

/// Result table of one method on one (possibly attacked) sequence.
gatefuse::ResultTable run_method(const std::string& method, const SensorSequence& seq, const SensorSequence& clean,
                                 const gatefuse::Repairer& repairer, const BenchmarkConfig& cfg,
                                 bool timing = false);

struct EvalOptions {
    std::vector<std::string> methods = kMethods;
    std::vector<attack::Severity> severities{attack::Severity::none, attack::Severity::weak, attack::Severity::mid,
                                             attack::Severity::strong};
    bool timing = false;
    /// Receives every result table as it is produced.
    std::function<void(const std::string& severity, const gatefuse::ResultTable&)> on_table;
};

/// Pooled-frame RMSE/MAE per method and severity over the given series,
/// plus odca residual diagnostics for attacked severities.
metrics::EvalReport evaluate(const std::vector<SensorSequence>& data, const std::vector<std::size_t>& idx,
                             const gatefuse::Repairer& repairer, const BenchmarkConfig& cfg,
                             const EvalOptions& opts = {});

/// Carry-forward fill of d_fused, then RMSE/MAE against d_clean, pooled.
std::pair<double, double> pooled_errors(const std::vector<gatefuse::ResultTable>& tables, std::size_t* n_frames = nullptr);

struct TrainedModel {
    align::AffineAlignment alignment;
    repair::TrainResult result;
};

/// Calibration on the training series, then head training with the
/// validation series for early stopping.
TrainedModel train_model(const std::vector<SensorSequence>& data, const Split& split,
                         const forecast::Backend& backend, const BenchmarkConfig& cfg,
                         const std::function<void(const repair::EpochLog&)>& on_epoch = {});

struct AblationRow {
    std::string name;
    repair::LossWeights weights;
    double rmse = 0.0;
    double mae = 0.0;
    int best_epoch = 0;
};

/// The standard loss-term subsets, in reporting order.
std::vector<std::pair<std::string, repair::LossWeights>> ablation_subsets(const repair::LossWeights& full);

/// Retrains per subset on the same data and seeds and scores odca on the
/// test series under `severity`.
std::vector<AblationRow> ablation(const std::vector<SensorSequence>& data, const Split& split,
                                  const forecast::Backend& backend, const BenchmarkConfig& cfg,
                                  attack::Severity severity = attack::Severity::strong);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace odca::pipeline
