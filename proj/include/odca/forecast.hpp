#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "odca/core.hpp"

namespace odca::forecast {

/// Row-major S x H matrix of sample paths.
struct SampleMatrix {
    std::size_t rows = 0;  // S
    std::size_t cols = 0;  // H
    std::vector<double> data;

    SampleMatrix() = default;
    SampleMatrix(std::size_t s, std::size_t h, double fill = 0.0) : rows(s), cols(h), data(s * h, fill) {}

    double& operator()(std::size_t s, std::size_t h) { return data[s * cols + h]; }
    double operator()(std::size_t s, std::size_t h) const { return data[s * cols + h]; }
    std::span<const double> row(std::size_t s) const { return {data.data() + s * cols, cols}; }

    bool operator==(const SampleMatrix&) const = default;
};

struct ForecastRequest {
    ContextWindow context;
    std::size_t horizon = 16;
    std::size_t n_samples = 20;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ForecastSummary {
    SampleMatrix samples;
    std::vector<double> mu;
    std::vector<double> sigma;

    bool operator==(const ForecastSummary&) const = default;
};

struct Moments {
    std::vector<double> mu;
    std::vector<double> sigma;
};

/// Per-column mean and population standard deviation.
Moments summarize(const SampleMatrix& samples);

/// A frozen probabilistic forecaster. Implementations must tolerate
/// concurrent calls.
class Backend {
public:
    virtual ~Backend() = default;
    virtual SampleMatrix sample(const ForecastRequest& req) const = 0;
    virtual std::string name() const = 0;
};

/// Runs the backend, checks its output and fills in the summary.
ForecastSummary forecast(const ForecastRequest& req, const Backend& backend);

struct BootstrapOptions {
    std::size_t block_len = 4;
    double min_value = 1e-3;  // m
    double clip_mads = 3.0;   // residual clip, in robust standard deviations
    std::size_t drift_window = 32;  // most recent observations used for the drift
};

/// Causal block bootstrap over first differences of the observed entries of
/// the context: constant drift plus resampled residual blocks, accumulated
/// from the last observation. Filled entries after it count as elapsed
/// steps.
SampleMatrix builtin_backend(const ContextWindow& context, std::size_t H, std::size_t S, std::uint64_t seed,
                             const BootstrapOptions& opts = {});

class BootstrapBackend final : public Backend {
public:
    explicit BootstrapBackend(BootstrapOptions opts = {}) : opts_(opts) {}
    SampleMatrix sample(const ForecastRequest& req) const override;
    std::string name() const override { return "builtin"; }

private:
    BootstrapOptions opts_;
};

/// Client for an external forecaster speaking odca-forecast/1 over
/// newline-delimited JSON on a child process's stdin/stdout.
class SidecarBackend final : public Backend {
public:
    struct Options {
        std::filesystem::path program;
        std::vector<std::string> args;
        std::size_t pool_size = 1;
        std::chrono::milliseconds timeout{10000};
    };

    explicit SidecarBackend(Options opts);
    ~SidecarBackend() override;
    SidecarBackend(const SidecarBackend&) = delete;
    SidecarBackend& operator=(const SidecarBackend&) = delete;

    SampleMatrix sample(const ForecastRequest& req) const override;
    std::string name() const override { return "sidecar"; }

    /// Sends one raw line and returns the raw response line (test hook).
    std::string roundtrip_raw(const std::string& line) const;

private:
    struct Process;
    Options opts_;
    std::vector<std::unique_ptr<Process>> pool_;
    mutable std::mutex pick_mutex_;
    mutable std::size_t next_ = 0;
    mutable std::int64_t next_id_ = 1;

    Process& acquire() const;
};

inline constexpr const char* kProtocolName = "odca-forecast/1";

/// Wire encoding shared by the client and test doubles.
std::string encode_request(std::int64_t id, const ForecastRequest& req);
/// Parses a response line; throws Error with the sidecar's diagnostics on an
/// error reply, a mismatched id or a malformed shape.
SampleMatrix decode_response(const std::string& line, std::int64_t expected_id, std::size_t S, std::size_t H);

/// Backend chosen by ODCA_FORECASTER (builtin | sidecar:<path>).
std::shared_ptr<const Backend> backend_from_env(const BootstrapOptions& builtin = {});
std::shared_ptr<const Backend> backend_from_spec(const std::string& spec, const BootstrapOptions& builtin = {});

}  // namespace odca::forecast
