#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "odca/core.hpp"

namespace odca::align {

/// Affine map from raw LiDAR range into the depth-distance domain,
/// d = alpha * l + beta. Frozen once fitted for the rest of a run.
struct AffineAlignment {
    double alpha = 1.0;
    double beta = 0.0;
    std::size_t n_used = 0;
    bool frozen = false;

    double apply(double lidar) const { return alpha * lidar + beta; }
};

struct FitOptions {
    double conf_min = 0.8;
    double huber_delta = 0.1;  // m
    int max_iterations = 20;
    double tolerance = 1e-8;
    /// Calibration window measured from the first frame (s).
    double window_s = 5.0;
};

/// Diagnostics of one IRLS run.
struct FitTrace {
    std::vector<double> objective;  // Huber objective after each iteration
    int iterations = 0;
    bool converged = false;
};

/// Huber-robust fit of depth ~ alpha * lidar + beta by iteratively
/// reweighted least squares over pairs with conf >= conf_min.
/// The three series are index-aligned; absent entries are skipped.
AffineAlignment fit_affine(std::span<const std::optional<double>> depth,
                           std::span<const std::optional<double>> lidar,
                           std::span<const std::optional<double>> conf, const FitOptions& opts = {},
                           FitTrace* trace = nullptr);

/// Fit over the calibration window of one or more sequences (pooled).
AffineAlignment fit_from_sequences(std::span<const SensorSequence> seqs, const FitOptions& opts = {});

double align_lidar(double lidar, const AffineAlignment& a);

/// Huber loss rho(r) with threshold delta.
double huber(double r, double delta);

void save_alignment(const AffineAlignment& a, const std::filesystem::path& path);
AffineAlignment load_alignment(const std::filesystem::path& path);

}  // namespace odca::align
