#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "odca/core.hpp"

namespace odca::attack {

enum class Severity { none, weak, mid, strong };

std::string_view to_string(Severity s);
Severity severity_from_string(std::string_view name);

/// Corruption knobs for one severity level.
struct AttackSpec {
    Severity severity = Severity::none;
    std::uint64_t seed = 0;
    double segment_density = 0.0;  // fraction of the timeline under attack
    double segment_len_min = 0.3;  // s
    double segment_len_max = 3.0;  // s
    double bias_min = 0.0;         // m, magnitude
    double bias_max = 0.0;         // m, magnitude
    double conf_floor = 1.0;
    double blackout_prob = 0.0;
    /// Segments never start before this time (s); keeps a clean warm-up.
    double lead_in = 1.0;

    /// Default preset for a severity; seed is left at zero.
    static AttackSpec preset(Severity s);
    void validate() const;
};

using Interval = std::pair<double, double>;

/// Non-overlapping, sorted attack intervals inside [lead_in, duration].
/// Deterministic in (duration, spec).
std::vector<Interval> generate_segments(double duration, const AttackSpec& spec);

/// Corrupts the depth modality inside generated segments and labels the
/// affected frames. Frames outside segments and the LiDAR channel are left
/// untouched.
SensorSequence apply_attack(const SensorSequence& clean, const AttackSpec& spec);

/// Clean reference copy with all labels cleared to "not attacked".
SensorSequence label_clean(const SensorSequence& clean);

}  // namespace odca::attack
