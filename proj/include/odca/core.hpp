#pragma once

// Shared domain types for the obstacle-distance repair toolkit: synchronized
// sensor frames, labeled sequences, forecaster context windows, and the
// dataset file formats (CSV and JSONL).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace odca {

/// Base error type for every failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Seeded generator with portable real-valued draws. The standard
/// distributions are implementation-defined, so uniform/normal are derived
/// from the raw 64-bit stream here to keep outputs byte-stable.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal(double mean = 0.0, double stddev = 1.0);
    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);
    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
    std::optional<double> spare_;
};

/// splitmix64 finalizer; combines a base seed with stream identifiers.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

struct SensorFrame {
    double t = 0.0;                 // s
    std::optional<double> depth;    // m
    std::optional<double> conf;     // [0, 1]
    std::optional<double> lidar;    // m, raw LiDAR units
    double speed = 0.0;             // m/s
    double throttle = 0.0;
    double steering = 0.0;          // deg

    bool operator==(const SensorFrame&) const = default;
};

enum class AttackKind { none, bias, blackout };

std::string_view to_string(AttackKind kind);
AttackKind attack_kind_from_string(std::string_view name);

struct FrameLabel {
    bool attacked = false;
    AttackKind kind = AttackKind::none;

    bool operator==(const FrameLabel&) const = default;
};

struct SequenceMeta {
    double commanded_speed = 0.0;   // m/s
    double steering_setting = 0.0;  // deg

    bool operator==(const SequenceMeta&) const = default;
};

/// One driving run. Labels, when present, line up with frames one to one.
struct SensorSequence {
    std::string id;
    std::vector<SensorFrame> frames;
    std::optional<std::vector<FrameLabel>> labels;
    SequenceMeta meta;

    std::size_t size() const { return frames.size(); }
    bool attacked_at(std::size_t i) const { return labels && (*labels)[i].attacked; }

    bool operator==(const SensorSequence&) const = default;
};

/// Throws Error naming the first violated invariant (frame index included).
void validate(const SensorFrame& frame, std::size_t index);
void validate(const SensorSequence& seq);

std::vector<double> timestamps(const SensorSequence& seq);

/// Window of the W most recent depth values handed to a forecaster.
struct ContextWindow {
    std::vector<double> values;
    /// Leading entries that are left padding rather than observations.
    std::size_t n_padded = 0;
    /// True where the entry is a real observation rather than a fill. Empty
    /// means every entry after the padding was observed.
    std::vector<bool> is_observed;
    std::vector<double> conf;
    std::vector<double> speed;
    double dt = 0.02;

    std::size_t size() const { return values.size(); }
    std::span<const double> observed() const {
        return std::span<const double>(values).subspan(n_padded);
    }
};

/// Fixed sampling period used when timestamps are not trusted (50 Hz).
inline constexpr double kFixedDt = 0.02;

/// Median successive difference of strictly increasing timestamps.
double estimate_dt(std::span<const double> t, bool force_fixed = false);

/// Median; the mean of the two middle values for an even count.
double median(std::vector<double> v);

/// The W depth values ending at t_index, last-observation-carried-forward
/// through gaps and left-padded with the earliest valid value.
ContextWindow make_window(const SensorSequence& seq, std::size_t t_index, std::size_t W);

/// Same fill rules over a bare series (absent entries are nullopt).
ContextWindow make_window(std::span<const std::optional<double>> depth, std::size_t t_index,
                          std::size_t W, double dt);

enum class FileFormat { csv, jsonl };

/// Picks the format from the extension (.csv / .jsonl / .json).
FileFormat format_for(const std::filesystem::path& path);

SensorSequence load_sequence(const std::filesystem::path& path);
SensorSequence load_sequence(const std::filesystem::path& path, FileFormat format);
void save_sequence(const SensorSequence& seq, const std::filesystem::path& path);
void save_sequence(const SensorSequence& seq, const std::filesystem::path& path, FileFormat format);

SensorSequence parse_csv(std::string_view text, std::string id_hint = {});
std::string to_csv(const SensorSequence& seq);
SensorSequence parse_jsonl(std::string_view text, std::string id_hint = {});
std::string to_jsonl(const SensorSequence& seq);

/// Shortest round-trip decimal form of a double.
std::string format_double(double value);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace odca
