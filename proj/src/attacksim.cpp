#include "odca/attacksim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace odca::attack {

std::string_view to_string(Severity s) {
    switch (s) {
        case Severity::none: return "none";
        case Severity::weak: return "weak";
        case Severity::mid: return "mid";
        case Severity::strong: return "strong";
    }
    return "none";
}

Severity severity_from_string(std::string_view name) {
    if (name == "none" || name == "clean") return Severity::none;
    if (name == "weak") return Severity::weak;
    if (name == "mid") return Severity::mid;
    if (name == "strong") return Severity::strong;
    throw Error("unknown severity '" + std::string(name) + "'");
}

AttackSpec AttackSpec::preset(Severity s) {
    AttackSpec spec;
    spec.severity = s;
    switch (s) {
        case Severity::none:
            break;
        case Severity::weak:
            spec.segment_density = 0.15;
            spec.bias_min = 0.10;
            spec.bias_max = 0.30;
            spec.conf_floor = 0.7;
            spec.blackout_prob = 0.0;
            break;
        case Severity::mid:
            spec.segment_density = 0.25;
            spec.bias_min = 0.30;
            spec.bias_max = 0.80;
            spec.conf_floor = 0.4;
            spec.blackout_prob = 0.1;
            break;
        case Severity::strong:
            spec.segment_density = 0.35;
            spec.bias_min = 0.80;
            spec.bias_max = 2.00;
            spec.conf_floor = 0.1;
            spec.blackout_prob = 0.5;
            break;
    }
    return spec;
}

void AttackSpec::validate() const {
    if (!(segment_density >= 0.0 && segment_density <= 1.0)) throw Error("segment_density must be in [0,1]");
    if (!(bias_min >= 0.0 && bias_min <= bias_max)) throw Error("bias range must satisfy 0 <= min <= max");
    if (!(conf_floor >= 0.0 && conf_floor <= 1.0)) throw Error("conf_floor must be in [0,1]");
    if (!(blackout_prob >= 0.0 && blackout_prob <= 1.0)) throw Error("blackout_prob must be in [0,1]");
    if (!(segment_len_min > 0.0 && segment_len_min <= segment_len_max))
        throw Error("segment length range must satisfy 0 < min <= max");
    if (!(lead_in >= 0.0)) throw Error("lead_in must be >= 0");
}

std::vector<Interval> generate_segments(double duration, const AttackSpec& spec) {
    if (!(duration > 0.0)) throw Error("duration must be > 0");
    spec.validate();
    if (spec.severity == Severity::none || spec.segment_density == 0.0) return {};

    const double usable = duration - spec.lead_in;
    if (usable <= 0.0) return {};
    const double target = std::min(spec.segment_density * duration, usable);

    Rng rng(mix_seed(spec.seed, 0x5e6));
    std::vector<double> lengths;
    double covered = 0.0;
    while (covered < target) {
        double len = rng.uniform(spec.segment_len_min, spec.segment_len_max);
        const double remaining = target - covered;
        if (len >= remaining) {
            len = remaining;
            // A sliver shorter than the minimum joins the previous segment.
            if (len < spec.segment_len_min && !lengths.empty()) {
                lengths.back() += len;
                covered += len;
                break;
            }
        }
        lengths.push_back(len);
        covered += len;
    }

    // Spread the free time over k+1 gaps with Dirichlet(1) proportions.
    const double free_time = usable - covered;
    std::vector<double> gaps(lengths.size() + 1);
    for (auto& g : gaps) g = -std::log(1.0 - rng.uniform());
    const double total = std::accumulate(gaps.begin(), gaps.end(), 0.0);

    std::vector<Interval> out;
    out.reserve(lengths.size());
    double cursor = spec.lead_in;
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        cursor += free_time * gaps[i] / total;
        const double start = cursor;
        const double end = std::min(start + lengths[i], duration);
        out.emplace_back(start, end);
        cursor = end;
    }
    return out;
}

SensorSequence label_clean(const SensorSequence& clean) {
    SensorSequence out = clean;
    out.labels = std::vector<FrameLabel>(clean.frames.size());
    return out;
}

SensorSequence apply_attack(const SensorSequence& clean, const AttackSpec& spec) {
    spec.validate();
    validate(clean);
    if (clean.frames.empty()) throw Error("sequence too sparse");
    const auto n_valid = std::count_if(clean.frames.begin(), clean.frames.end(),
                                       [](const SensorFrame& f) { return f.depth.has_value(); });
    if (static_cast<double>(n_valid) < 0.9 * static_cast<double>(clean.frames.size()))
        throw Error("sequence too sparse");

    SensorSequence out = label_clean(clean);
    if (spec.severity == Severity::none) return out;

    const double t0 = clean.frames.front().t;
    const double dt = clean.frames.size() >= 2 ? estimate_dt(timestamps(clean)) : kFixedDt;
    const double duration = clean.frames.back().t - t0 + dt;
    const auto segments = generate_segments(duration, spec);

    for (std::size_t s = 0; s < segments.size(); ++s) {
        const auto [start, end] = segments[s];
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < clean.frames.size(); ++i) {
            const double rel = clean.frames[i].t - t0;
            if (rel >= start && rel < end) members.push_back(i);
        }
        if (members.empty()) continue;

        Rng rng(mix_seed(spec.seed, 0xa77, s));
        const double magnitude = rng.uniform(spec.bias_min, spec.bias_max);
        double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
        const bool blackout = rng.bernoulli(spec.blackout_prob);

        // Bigger bias comes with a deeper confidence drop.
        const double span = spec.bias_max - spec.bias_min;
        const double q = span > 0.0 ? (magnitude - spec.bias_min) / span : 0.5;
        const double conf_scale = spec.conf_floor + (1.0 - spec.conf_floor) * 0.5 * (1.0 - q);

        double min_depth = std::numeric_limits<double>::infinity();
        for (auto i : members)
            if (clean.frames[i].depth) min_depth = std::min(min_depth, *clean.frames[i].depth);
        if (sign < 0.0 && min_depth - magnitude < 0.1) sign = 1.0;

        for (auto i : members) {
            auto& f = out.frames[i];
            auto& label = (*out.labels)[i];
            label.attacked = true;
            if (blackout) {
                label.kind = AttackKind::blackout;
                f.depth.reset();
                if (f.conf) *f.conf *= 0.05;
            } else {
                label.kind = AttackKind::bias;
                if (f.depth) *f.depth += sign * magnitude;
                if (f.conf) *f.conf *= conf_scale;
            }
        }
    }
    return out;
}

}  // namespace odca::attack
