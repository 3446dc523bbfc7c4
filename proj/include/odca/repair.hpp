#pragma once

// The additive delta head: an 8 -> 92 -> 1 tanh network predicting a depth
// correction, the four-term corruption-aware objective, and mini-batch
// momentum training with hand-written backpropagation.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "odca/align.hpp"
#include "odca/core.hpp"
#include "odca/forecast.hpp"

namespace odca::repair {

inline constexpr std::size_t kNumFeatures = 8;
inline constexpr std::size_t kDefaultHidden = 92;

/// Feature slots, in input order.
enum Feature : std::size_t { kDepth, kConf, kMu1, kSigma1, kSpeed, kThrottle, kSteering, kDt };

using FeatureVector = std::array<double, kNumFeatures>;

std::string_view feature_name(std::size_t i);

/// Assembles a raw (unstandardized) feature vector.
FeatureVector make_features(double depth, double conf, double mu1, double sigma1, double speed, double throttle,
                            double steering, double dt);

/// Per-channel standardization constants, fitted on training data only.
struct FeatureNorm {
    FeatureVector mean{};
    FeatureVector scale{1, 1, 1, 1, 1, 1, 1, 1};

    static FeatureNorm fit(std::span<const FeatureVector> xs);
    FeatureVector apply(const FeatureVector& x) const;
    bool operator==(const FeatureNorm&) const = default;
};

/// Flat parameter layout: W1 (hidden x inputs, row-major), b1 (hidden),
/// W2 (hidden), b2 (1).
class DeltaHead {
public:
    explicit DeltaHead(std::size_t hidden = kDefaultHidden);

    /// Xavier-uniform weights, zero biases.
    static DeltaHead random(std::uint64_t seed, std::size_t hidden = kDefaultHidden);

    std::size_t hidden() const { return hidden_; }
    std::size_t parameter_count() const { return params_.size(); }
    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }

    FeatureNorm norm;

    /// Correction in meters. Throws on a non-finite feature.
    double predict(const FeatureVector& raw) const;

    /// Forward pass that keeps the hidden activations for backprop.
    double forward(const FeatureVector& raw, FeatureVector& z, std::vector<double>& h) const;
    /// Accumulates g * dDelta/dtheta into grad.
    void backward(double g, const FeatureVector& z, std::span<const double> h, std::span<double> grad) const;

    bool operator==(const DeltaHead&) const = default;

private:
    std::size_t hidden_;
    std::vector<double> params_;

    std::size_t w1() const { return 0; }
    std::size_t b1() const { return hidden_ * kNumFeatures; }
    std::size_t w2() const { return b1() + hidden_; }
    std::size_t b2() const { return w2() + hidden_; }
};

std::size_t count_parameters(const DeltaHead& head);

/// d_rep = d_tilde + Delta.
double predict_delta(const DeltaHead& head, const FeatureVector& f);

void save_head(const DeltaHead& head, const std::filesystem::path& path);
DeltaHead load_head(const std::filesystem::path& path);
std::string head_to_json(const DeltaHead& head);
DeltaHead head_from_json(std::string_view text);

// ---------------------------------------------------------------------------
// Objective

struct LossWeights {
    double lambda_id = 1.0;
    double lambda_delta0 = 0.1;
    double lambda_cons = 0.5;
    double lambda_kin = 0.2;
    double attacked_region_boost = 4.0;

    void validate() const;
    double sum() const { return lambda_id + lambda_delta0 + lambda_cons + lambda_kin; }
};

/// Frame-level masks that are fixed before training.
struct LossConfig {
    LossWeights weights;
    double tau_low = 0.15;    // cross-sensor disagreement threshold for the consistency term
    double conf_high = 0.8;   // "high confidence" cut for identity preservation
};

/// One training frame. Everything except Delta is precomputed.
struct TrainingFrame {
    FeatureVector x{};
    double d_work = 0.0;               // observed depth, or mu1 on a blackout
    double d_clean = 0.0;              // reference
    std::optional<double> lidar_d;     // aligned LiDAR
    double conf = 0.0;
    bool attacked = false;
    double speed = 0.0;
    double dt = 0.02;
    std::optional<std::size_t> next;   // successor frame in the same run

    double r_xs() const { return lidar_d ? std::abs(d_work - *lidar_d) : 0.0; }
};

struct TrainingSet {
    std::vector<TrainingFrame> frames;
    std::size_t size() const { return frames.size(); }
};

struct LossBreakdown {
    double total = 0.0;
    double id = 0.0;
    double delta0 = 0.0;
    double cons = 0.0;
    double kin = 0.0;
};

/// Objective on the frames of `batch` (indices into `set`). The kinematic
/// term pairs each batch frame with its successor.
LossBreakdown loss(const DeltaHead& head, const TrainingSet& set, std::span<const std::size_t> batch,
                   const LossConfig& cfg);

/// Same objective plus its gradient with respect to the flat parameters.
LossBreakdown loss_and_gradient(const DeltaHead& head, const TrainingSet& set, std::span<const std::size_t> batch,
                                const LossConfig& cfg, std::span<double> grad);

/// Convenience: loss over the whole set.
LossBreakdown loss(const DeltaHead& head, const TrainingSet& set, const LossConfig& cfg);

// ---------------------------------------------------------------------------
// Feature assembly

struct FeatureOptions {
    std::size_t window = 64;
    std::size_t horizon = 16;
    std::size_t samples = 20;
    bool fixed_dt = false;
    std::uint64_t seed = 0;
    double tau_low = 0.15;  // residual below which an observation is trusted
};

/// Seed of the forecast issued at step t of a run.
std::uint64_t step_seed(std::uint64_t run_seed, std::size_t t);

/// First-horizon forecast mean and standard deviation.
struct Prior {
    double mu1 = 0.0;
    double sigma1 = 0.0;
};

/// Appends the frames of one run given the forecast features seen at each
/// step (absent where no forecast was made).
void append_run_frames(TrainingSet& set, const SensorSequence& clean, const SensorSequence& variant,
                       std::span<const std::optional<Prior>> priors, double dt,
                       const align::AffineAlignment& alignment);

/// Appends frames built from one clean sequence and its attacked variants.
/// Forecast features use the clean history before t as context, i.e. the
/// history a perfect repair would have produced, with gaps where the
/// variant has no depth.
void append_training_frames(TrainingSet& set, const SensorSequence& clean, std::span<const SensorSequence> variants,
                            const align::AffineAlignment& alignment, const forecast::Backend& backend,
                            const FeatureOptions& opts);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    double learning_rate = 1e-3;
    double momentum = 0.9;
    std::size_t batch_size = 256;
    int epochs = 200;
    int patience = 20;
    std::uint64_t seed = 0;       // batch order
    std::uint64_t init_seed = 0;  // weight init
    LossConfig loss;
};

struct EpochLog {
    int epoch = 0;
    LossBreakdown train;
    LossBreakdown validation;
};

struct TrainResult {
    DeltaHead head;
    std::vector<EpochLog> log;
    int best_epoch = 0;
};

/// Mini-batch gradient descent with momentum. Feature standardization is
/// fitted on `train`; the returned head is the one with the lowest
/// validation loss (training loss when `validation` is empty).
TrainResult train(const TrainingSet& train_set, const TrainingSet& validation, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

std::string training_log_csv(const std::vector<EpochLog>& log);

}  // namespace odca::repair
