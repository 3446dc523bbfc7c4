#pragma once

// Reference estimators: no defense, LiDAR only, constant-velocity Kalman
// fusion, and unconditional forecast replacement.

#include <cstdint>
#include <optional>
#include <vector>

#include "odca/align.hpp"
#include "odca/core.hpp"
#include "odca/forecast.hpp"

namespace odca::baselines {

using Series = std::vector<std::optional<double>>;

/// The raw depth channel; absent stays absent.
Series passthrough(const SensorSequence& seq);

/// Aligned LiDAR, carried forward through gaps.
Series lidar_only(const SensorSequence& seq, const align::AffineAlignment& alignment);

struct EkfConfig {
    double q_pos = 1e-4;
    double q_vel = 1e-3;
    double r_depth = 1e-2;
    double r_lidar = 4e-2;
    double p0_pos = 1.0;  // initial variances
    double p0_vel = 1.0;

    void validate() const;
};

/// State (distance, rate) with sequential depth and LiDAR updates. Depth
/// variance is r_depth / max(conf, 0.05). Output is the posterior distance;
/// frames before the first measurement are absent.
Series ekf_fuse(const SensorSequence& seq, const align::AffineAlignment& alignment, const EkfConfig& cfg = {});

struct ReplaceOptions {
    std::size_t window = 64;
    std::size_t horizon = 16;
    std::size_t samples = 20;
    std::uint64_t seed = 0;
    bool fixed_dt = false;
};

/// mu1 of the forecast from the observed depth through t - 1 (the current
/// observation at t = 0), substituted at every frame.
Series forecast_replace(const SensorSequence& seq, const forecast::Backend& backend, const ReplaceOptions& opts = {});

/// Carries the last value forward over absent entries.
Series carry_forward(const Series& s);

}  // namespace odca::baselines
