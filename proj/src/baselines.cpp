#include "odca/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "odca/repair.hpp"

namespace odca::baselines {

Series passthrough(const SensorSequence& seq) {
    Series out;
    out.reserve(seq.frames.size());
    for (const auto& f : seq.frames) out.push_back(f.depth);
    return out;
}

Series carry_forward(const Series& s) {
    Series out(s.size());
    std::optional<double> last;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i]) last = s[i];
        out[i] = last;
    }
    return out;
}

Series lidar_only(const SensorSequence& seq, const align::AffineAlignment& alignment) {
    Series out;
    out.reserve(seq.frames.size());
    for (const auto& f : seq.frames)
        out.push_back(f.lidar ? std::optional<double>(alignment.apply(*f.lidar)) : std::nullopt);
    return carry_forward(out);
}

void EkfConfig::validate() const {
    if (!(q_pos > 0 && q_vel > 0 && r_depth > 0 && r_lidar > 0 && p0_pos > 0 && p0_vel > 0))
        throw Error("ekf: all variances must be > 0");
}

namespace {

struct Cv2 {
    double x[2];
    double P[2][2];

    void predict(double dt, const EkfConfig& cfg) {
        x[0] += dt * x[1];
        const double p00 = P[0][0] + dt * (P[1][0] + P[0][1]) + dt * dt * P[1][1] + cfg.q_pos * dt;
        const double p01 = P[0][1] + dt * P[1][1];
        const double p11 = P[1][1] + cfg.q_vel * dt;
        P[0][0] = p00;
        P[0][1] = P[1][0] = p01;
        P[1][1] = p11;
    }

    // Scalar position measurement, Joseph-form covariance update.
    void update(double z, double r) {
        const double s = P[0][0] + r;
        const double k0 = P[0][0] / s;
        const double k1 = P[1][0] / s;
        const double innov = z - x[0];
        x[0] += k0 * innov;
        x[1] += k1 * innov;
        // P' = (I - K H) P (I - K H)^T + K r K^T with H = [1 0].
        const double a00 = 1 - k0, a10 = -k1;
        double A[2][2] = {{a00, 0.0}, {a10, 1.0}};
        double AP[2][2];
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) AP[i][j] = A[i][0] * P[0][j] + A[i][1] * P[1][j];
        double N[2][2];
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) N[i][j] = AP[i][0] * A[j][0] + AP[i][1] * A[j][1];
        const double K[2] = {k0, k1};
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) P[i][j] = N[i][j] + K[i] * r * K[j];
        const double sym = 0.5 * (P[0][1] + P[1][0]);
        P[0][1] = P[1][0] = sym;
    }

    void check_spd(std::size_t t) const {
        const double det = P[0][0] * P[1][1] - P[0][1] * P[1][0];
        if (!(P[0][0] > 0 && P[1][1] > 0 && det > 0) || P[0][1] != P[1][0])
            throw Error("ekf: covariance lost positive definiteness at frame " + std::to_string(t));
    }
};

}  // namespace

Series ekf_fuse(const SensorSequence& seq, const align::AffineAlignment& alignment, const EkfConfig& cfg) {
    cfg.validate();
    Series out(seq.frames.size());
    std::optional<Cv2> kf;
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        const auto& f = seq.frames[t];
        std::optional<double> zd = f.depth;
        std::optional<double> zl;
        if (f.lidar) zl = alignment.apply(*f.lidar);
        if (kf) {
            const double dt = f.t - seq.frames[t - 1].t;
            if (!(dt > 0.0)) throw Error("ekf: non-positive time step at frame " + std::to_string(t));
            kf->predict(dt, cfg);
        } else {
            const auto first = zd ? zd : zl;
            if (!first) continue;
            kf = Cv2{{*first, 0.0}, {{cfg.p0_pos, 0.0}, {0.0, cfg.p0_vel}}};
        }
        if (zd) kf->update(*zd, cfg.r_depth / std::max(f.conf.value_or(0.0), 0.05));
        if (zl) kf->update(*zl, cfg.r_lidar);
        kf->check_spd(t);
        out[t] = kf->x[0];
    }
    return out;
}

Series forecast_replace(const SensorSequence& seq, const forecast::Backend& backend, const ReplaceOptions& opts) {
    const std::size_t n = seq.frames.size();
    Series out(n);
    if (n == 0) return out;
    const double dt = opts.fixed_dt || n < 2 ? kFixedDt : estimate_dt(timestamps(seq));
    std::vector<std::optional<double>> depth(n);
    for (std::size_t i = 0; i < n; ++i) depth[i] = seq.frames[i].depth;
    for (std::size_t t = 0; t < n; ++t) {
        forecast::ForecastRequest req;
        req.horizon = opts.horizon;
        req.n_samples = opts.samples;
        req.seed = repair::step_seed(opts.seed, t);
        try {
            req.context = make_window(depth, t == 0 ? 0 : t - 1, opts.window, dt);
        } catch (const Error&) {
            continue;  // nothing observed yet
        }
        out[t] = forecast::forecast(req, backend).mu[0];
    }
    return out;
}

}  // namespace odca::baselines
