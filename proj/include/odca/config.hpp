#pragma once

// Run configuration: every tunable of the toolkit, loadable from TOML with
// dotted-key overrides, and echoed into reports.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "odca/closedloop.hpp"
#include "odca/pipeline.hpp"
#include "odca/synth.hpp"

namespace odca::config {

struct ClosedLoopSettings {
    closedloop::ScenarioConfig scenario;
    std::size_t n_trials = 30;
    std::string defense = "none";
    std::vector<double> durations{0.5, 1.0, 3.0};
};

struct RunConfig {
    std::uint64_t seed = 7;
    synth::GenConfig gen;
    pipeline::BenchmarkConfig bench;
    forecast::BootstrapOptions bootstrap;
    ClosedLoopSettings closedloop;

    /// Propagates the top-level seed into the module configs and checks
    /// every invariant.
    void finalize();
};

/// Defaults overlaid with a TOML document. Unknown keys are errors.
RunConfig from_toml(std::string_view text, const std::string& source = "config");
RunConfig load(const std::filesystem::path& path);

/// Applies one `section.key=value` override; the value uses TOML syntax
/// (strings may be left unquoted).
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Every key that from_toml accepts, in canonical order.
std::vector<std::string> known_keys();

/// Fully resolved configuration as TOML and as compact JSON.
std::string to_toml(const RunConfig& cfg);
std::string to_json(const RunConfig& cfg);

}  // namespace odca::config
