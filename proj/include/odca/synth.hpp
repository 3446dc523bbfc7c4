#pragma once

// Synthetic approach-and-stop benchmark generator.

#include <cstdint>
#include <vector>

#include "odca/core.hpp"

namespace odca::synth {

/// Throttle reported while cruising at `speed`.
double cruise_throttle(double speed);

struct GenConfig {
    std::size_t n_sequences = 13;
    double duration = 8.0;  // s
    double rate = 50.0;     // Hz
    std::vector<double> speeds{1.0, 1.5, 2.0};
    std::vector<double> steerings{0.0, 15.0, -15.0};
    double depth_noise = 0.01;
    double conf_low = 0.85;
    double conf_high = 0.95;
    double lidar_alpha = 0.95;  // true depth = alpha * lidar + beta
    double lidar_beta = 0.05;
    double lidar_noise = 0.02;
    double speed_ripple = 0.03;  // relative amplitude while cruising
    std::uint64_t seed = 0;

    void validate() const;
};

/// Clean sequences: cruise with a small speed ripple, brake, then rest in
/// front of the obstacle. Distance is the integral of speed.
std::vector<SensorSequence> generate(const GenConfig& cfg);

/// Mean of (d(t+1) - d(t) + v(t) dt) over cruise frames (throttle > 0).
double kinematic_residual(const SensorSequence& seq);

}  // namespace odca::synth
