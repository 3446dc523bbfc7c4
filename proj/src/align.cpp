#include "odca/align.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace odca::align {

double huber(double r, double delta) {
    const double a = std::abs(r);
    return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double align_lidar(double lidar, const AffineAlignment& a) { return a.alpha * lidar + a.beta; }

namespace {

struct Pair {
    double x;  // lidar
    double y;  // depth
};

double objective(const std::vector<Pair>& pts, double alpha, double beta, double delta) {
    double s = 0.0;
    for (const auto& p : pts) s += huber(p.y - (alpha * p.x + beta), delta);
    return s;
}

// Weighted least squares for y = alpha x + beta.
bool weighted_fit(const std::vector<Pair>& pts, const std::vector<double>& w, double& alpha, double& beta) {
    double sw = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        sw += w[i];
        sx += w[i] * pts[i].x;
        sy += w[i] * pts[i].y;
    }
    if (!(sw > 0.0)) return false;
    const double mx = sx / sw;
    const double my = sy / sw;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double dx = pts[i].x - mx;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * (pts[i].y - my);
    }
    if (!(sxx > 1e-12 * sw * std::max(1.0, mx * mx))) return false;
    alpha = sxy / sxx;
    beta = my - alpha * mx;
    return true;
}

}  // namespace

AffineAlignment fit_affine(std::span<const std::optional<double>> depth,
                           std::span<const std::optional<double>> lidar,
                           std::span<const std::optional<double>> conf, const FitOptions& opts,
                           FitTrace* trace) {
    if (depth.size() != lidar.size() || depth.size() != conf.size())
        throw Error("fit_affine: series lengths differ");

    std::vector<Pair> pts;
    for (std::size_t i = 0; i < depth.size(); ++i) {
        if (!depth[i] || !lidar[i] || !conf[i]) continue;
        if (*conf[i] < opts.conf_min) continue;
        pts.push_back({*lidar[i], *depth[i]});
    }
    if (pts.size() < 8) throw Error("insufficient calibration data");

    const auto [mn, mx] = std::minmax_element(pts.begin(), pts.end(),
                                              [](const Pair& a, const Pair& b) { return a.x < b.x; });
    if (mn->x == mx->x) throw Error("rank deficient");

    std::vector<double> w(pts.size(), 1.0);
    double alpha = 1.0, beta = 0.0;
    if (!weighted_fit(pts, w, alpha, beta)) throw Error("rank deficient");

    FitTrace local;
    local.objective.push_back(objective(pts, alpha, beta, opts.huber_delta));
    for (int it = 0; it < opts.max_iterations; ++it) {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double r = std::abs(pts[i].y - (alpha * pts[i].x + beta));
            w[i] = r <= opts.huber_delta ? 1.0 : opts.huber_delta / r;
        }
        double na = alpha, nb = beta;
        if (!weighted_fit(pts, w, na, nb)) throw Error("rank deficient");
        const double change = std::max(std::abs(na - alpha), std::abs(nb - beta));
        alpha = na;
        beta = nb;
        local.objective.push_back(objective(pts, alpha, beta, opts.huber_delta));
        local.iterations = it + 1;
        if (change < opts.tolerance) {
            local.converged = true;
            break;
        }
    }
    if (!(alpha > 0.0) || !std::isfinite(beta)) throw Error("alignment produced non-positive scale");
    if (trace) *trace = std::move(local);
    return AffineAlignment{alpha, beta, pts.size(), true};
}

AffineAlignment fit_from_sequences(std::span<const SensorSequence> seqs, const FitOptions& opts) {
    std::vector<std::optional<double>> d, l, c;
    for (const auto& seq : seqs) {
        if (seq.frames.empty()) continue;
        const double t0 = seq.frames.front().t;
        for (const auto& f : seq.frames) {
            if (f.t - t0 > opts.window_s) break;
            d.push_back(f.depth);
            l.push_back(f.lidar);
            c.push_back(f.conf);
        }
    }
    return fit_affine(d, l, c, opts);
}

void save_alignment(const AffineAlignment& a, const std::filesystem::path& path) {
    nlohmann::json j{{"alpha", a.alpha}, {"beta", a.beta}, {"n_used", a.n_used}};
    write_text(path, j.dump(2) + "\n");
}

AffineAlignment load_alignment(const std::filesystem::path& path) {
    try {
        const auto j = nlohmann::json::parse(read_text(path));
        AffineAlignment a;
        a.alpha = j.at("alpha").get<double>();
        a.beta = j.at("beta").get<double>();
        a.n_used = j.value("n_used", std::size_t{0});
        a.frozen = true;
        if (!(a.alpha > 0.0)) throw Error("alpha must be > 0");
        return a;
    } catch (const nlohmann::json::exception& e) {
        throw Error(path.string() + ": bad alignment record: " + e.what());
    }
}

}  // namespace odca::align
