#include "odca/synth.hpp"

#include <cmath>
#include <numbers>

namespace odca::synth {

double cruise_throttle(double speed) { return 0.1 + 0.15 * speed; }

void GenConfig::validate() const {
    if (n_sequences == 0) throw Error("gen: n_sequences must be >= 1");
    if (!(duration > 0.0 && rate > 0.0)) throw Error("gen: duration and rate must be > 0");
    if (speeds.empty() || steerings.empty()) throw Error("gen: speeds and steerings must be non-empty");
    for (double v : speeds)
        if (!(v > 0.0)) throw Error("gen: speeds must be > 0");
    if (!(depth_noise >= 0.0 && lidar_noise >= 0.0)) throw Error("gen: noise levels must be >= 0");
    if (!(0.0 <= conf_low && conf_low <= conf_high && conf_high <= 1.0))
        throw Error("gen: need 0 <= conf_low <= conf_high <= 1");
    if (!(lidar_alpha > 0.0)) throw Error("gen: lidar_alpha must be > 0");
}

std::vector<SensorSequence> generate(const GenConfig& cfg) {
    cfg.validate();
    const double dt = 1.0 / cfg.rate;
    const auto n_frames = static_cast<std::size_t>(std::llround(cfg.duration * cfg.rate));
    std::vector<SensorSequence> out;
    for (std::size_t s = 0; s < cfg.n_sequences; ++s) {
        Rng rng(mix_seed(cfg.seed, 0x6e, s));
        const double v = cfg.speeds[s % cfg.speeds.size()];
        const double steer = cfg.steerings[(s / cfg.speeds.size()) % cfg.steerings.size()];
        const double decel = rng.uniform(0.8, 1.5);
        const double rest = rng.uniform(0.8, 1.5);
        const double t_brake = cfg.duration * rng.uniform(0.55, 0.7);
        const double period = rng.uniform(1.5, 3.0);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

        // Speed profile, then distance by integrating backwards from rest.
        std::vector<double> speed(n_frames), throttle(n_frames);
        double v_brake = v;
        for (std::size_t i = 0; i < n_frames; ++i) {
            const double t = static_cast<double>(i) * dt;
            if (t < t_brake) {
                speed[i] = v * (1.0 + cfg.speed_ripple * std::sin(2.0 * std::numbers::pi * t / period + phase));
                throttle[i] = cruise_throttle(speed[i]);
                v_brake = speed[i];
            } else {
                speed[i] = std::max(0.0, v_brake - decel * (t - t_brake));
                throttle[i] = 0.0;
            }
        }
        std::vector<double> dist(n_frames);
        dist[n_frames - 1] = rest;
        for (std::size_t i = n_frames - 1; i-- > 0;)
            dist[i] = dist[i + 1] + 0.5 * (speed[i] + speed[i + 1]) * dt;

        SensorSequence seq;
        seq.id = "seq" + std::string(s < 10 ? "0" : "") + std::to_string(s);
        seq.meta = {v, steer};
        seq.frames.resize(n_frames);
        for (std::size_t i = 0; i < n_frames; ++i) {
            auto& f = seq.frames[i];
            f.t = static_cast<double>(i) * dt;
            f.depth = dist[i] + rng.normal(0.0, cfg.depth_noise);
            f.conf = rng.uniform(cfg.conf_low, cfg.conf_high);
            f.lidar = (dist[i] - cfg.lidar_beta) / cfg.lidar_alpha + rng.normal(0.0, cfg.lidar_noise);
            f.speed = speed[i];
            f.throttle = throttle[i];
            f.steering = steer;
        }
        out.push_back(std::move(seq));
    }
    return out;
}

double kinematic_residual(const SensorSequence& seq) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < seq.frames.size(); ++i) {
        const auto& a = seq.frames[i];
        const auto& b = seq.frames[i + 1];
        if (!(a.throttle > 0.0) || !(b.throttle > 0.0) || !a.depth || !b.depth) continue;
        sum += (*b.depth - *a.depth) + a.speed * (b.t - a.t);
        ++n;
    }
    if (n == 0) throw Error("no cruise frames");
    return sum / static_cast<double>(n);
}

}  // namespace odca::synth
