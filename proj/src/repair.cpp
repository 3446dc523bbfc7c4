#include "odca/repair.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace odca::repair {

namespace {
constexpr std::array<std::string_view, kNumFeatures> kFeatureNames{
    "depth", "conf", "mu1", "sigma1", "speed", "throttle", "steering", "dt"};
}

std::string_view feature_name(std::size_t i) { return kFeatureNames.at(i); }

FeatureVector make_features(double depth, double conf, double mu1, double sigma1, double speed, double throttle,
                            double steering, double dt) {
    return {depth, conf, mu1, sigma1, speed, throttle, steering, dt};
}

FeatureNorm FeatureNorm::fit(std::span<const FeatureVector> xs) {
    FeatureNorm n;
    if (xs.empty()) return n;
    const double count = static_cast<double>(xs.size());
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
        double sum = 0.0;
        for (const auto& x : xs) sum += x[k];
        const double mean = sum / count;
        double ss = 0.0;
        for (const auto& x : xs) ss += (x[k] - mean) * (x[k] - mean);
        const double sd = std::sqrt(ss / count);
        n.mean[k] = mean;
        // Constant channels (e.g. a fixed dt) pass through unscaled.
        n.scale[k] = sd > 1e-9 ? sd : 1.0;
    }
    return n;
}

FeatureVector FeatureNorm::apply(const FeatureVector& x) const {
    FeatureVector z;
    for (std::size_t k = 0; k < kNumFeatures; ++k) z[k] = (x[k] - mean[k]) / scale[k];
    return z;
}

DeltaHead::DeltaHead(std::size_t hidden) : hidden_(hidden), params_((kNumFeatures + 1) * hidden + hidden + 1, 0.0) {
    if (hidden == 0) throw Error("delta head needs at least one hidden unit");
}

DeltaHead DeltaHead::random(std::uint64_t seed, std::size_t hidden) {
    DeltaHead head(hidden);
    Rng rng(seed);
    const double a1 = std::sqrt(6.0 / static_cast<double>(kNumFeatures + hidden));
    const double a2 = std::sqrt(6.0 / static_cast<double>(hidden + 1));
    for (std::size_t i = 0; i < hidden * kNumFeatures; ++i) head.params_[head.w1() + i] = rng.uniform(-a1, a1);
    for (std::size_t j = 0; j < hidden; ++j) head.params_[head.w2() + j] = rng.uniform(-a2, a2);
    return head;
}

double DeltaHead::forward(const FeatureVector& raw, FeatureVector& z, std::vector<double>& h) const {
    for (double v : raw)
        if (!std::isfinite(v)) throw Error("delta head: non-finite feature");
    z = norm.apply(raw);
    h.resize(hidden_);
    const double* W1 = params_.data() + w1();
    const double* B1 = params_.data() + b1();
    const double* W2 = params_.data() + w2();
    double out = params_[b2()];
    for (std::size_t j = 0; j < hidden_; ++j) {
        const double* row = W1 + j * kNumFeatures;
        double a = B1[j];
        for (std::size_t k = 0; k < kNumFeatures; ++k) a += row[k] * z[k];
        h[j] = std::tanh(a);
        out += W2[j] * h[j];
    }
    return out;
}

void DeltaHead::backward(double g, const FeatureVector& z, std::span<const double> h, std::span<double> grad) const {
    const double* W2 = params_.data() + w2();
    double* gW1 = grad.data() + w1();
    double* gB1 = grad.data() + b1();
    double* gW2 = grad.data() + w2();
    grad[b2()] += g;
    for (std::size_t j = 0; j < hidden_; ++j) {
        gW2[j] += g * h[j];
        const double da = g * W2[j] * (1.0 - h[j] * h[j]);
        gB1[j] += da;
        double* row = gW1 + j * kNumFeatures;
        for (std::size_t k = 0; k < kNumFeatures; ++k) row[k] += da * z[k];
    }
}

double DeltaHead::predict(const FeatureVector& raw) const {
    FeatureVector z;
    thread_local std::vector<double> h;
    return forward(raw, z, h);
}

std::size_t count_parameters(const DeltaHead& head) { return head.parameter_count(); }

double predict_delta(const DeltaHead& head, const FeatureVector& f) { return head.predict(f); }

// ---------------------------------------------------------------------------
// Serialization

std::string head_to_json(const DeltaHead& head) {
    nlohmann::ordered_json j;
    std::vector<std::string> names(kFeatureNames.begin(), kFeatureNames.end());
    j["architecture"] = {{"type", "mlp"},
                         {"inputs", kNumFeatures},
                         {"hidden", head.hidden()},
                         {"outputs", 1},
                         {"activation", "tanh"},
                         {"features", names},
                         {"layout", "W1[hidden][inputs] row-major, b1[hidden], W2[hidden], b2"}};
    j["parameter_count"] = head.parameter_count();
    j["weights"] = std::vector<double>(head.parameters().begin(), head.parameters().end());
    j["feature_norm"] = {{"mean", head.norm.mean}, {"scale", head.norm.scale}};
    return j.dump();
}

DeltaHead head_from_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        const auto& arch = j.at("architecture");
        if (arch.at("inputs").get<std::size_t>() != kNumFeatures || arch.at("outputs").get<int>() != 1 ||
            arch.at("activation").get<std::string>() != "tanh")
            throw Error("unsupported delta head architecture");
        DeltaHead head(arch.at("hidden").get<std::size_t>());
        const auto w = j.at("weights").get<std::vector<double>>();
        if (w.size() != head.parameter_count())
            throw Error("delta head weight count " + std::to_string(w.size()) + " does not match architecture (" +
                        std::to_string(head.parameter_count()) + ")");
        std::copy(w.begin(), w.end(), head.parameters().begin());
        head.norm.mean = j.at("feature_norm").at("mean").get<FeatureVector>();
        head.norm.scale = j.at("feature_norm").at("scale").get<FeatureVector>();
        return head;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("bad delta head record: ") + e.what());
    }
}

void save_head(const DeltaHead& head, const std::filesystem::path& path) { write_text(path, head_to_json(head) + "\n"); }

DeltaHead load_head(const std::filesystem::path& path) {
    try {
        return head_from_json(read_text(path));
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Objective

void LossWeights::validate() const {
    if (!(lambda_id >= 0 && lambda_delta0 >= 0 && lambda_cons >= 0 && lambda_kin >= 0))
        throw Error("loss weights must be non-negative");
    if (!(attacked_region_boost >= 1.0)) throw Error("attacked_region_boost must be >= 1");
}

namespace {

struct Evaluated {
    double delta;
    FeatureVector z;
    std::vector<double> h;
};

LossBreakdown evaluate(const DeltaHead& head, const TrainingSet& set, std::span<const std::size_t> batch,
                       const LossConfig& cfg, std::span<double> grad) {
    if (batch.empty()) throw Error("loss: empty batch");
    const auto& lw = cfg.weights;
    const bool want_grad = !grad.empty();

    std::vector<Evaluated> cur(batch.size());
    std::vector<Evaluated> nxt(batch.size());
    std::size_t n_id = 0, n_cons = 0, n_kin = 0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& f = set.frames.at(batch[b]);
        cur[b].delta = head.forward(f.x, cur[b].z, cur[b].h);
        if (!f.attacked || f.conf >= cfg.conf_high) ++n_id;
        if (f.lidar_d && f.r_xs() > cfg.tau_low) ++n_cons;
        if (f.next) {
            nxt[b].delta = head.forward(set.frames.at(*f.next).x, nxt[b].z, nxt[b].h);
            ++n_kin;
        }
    }

    LossBreakdown out;
    const double n_all = static_cast<double>(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& f = set.frames[batch[b]];
        const double boost = f.attacked ? lw.attacked_region_boost : 1.0;
        const double rep = f.d_work + cur[b].delta;
        double g = 0.0;  // dL/dDelta_b
        if (!f.attacked || f.conf >= cfg.conf_high) {
            const double e = rep - f.d_clean;
            out.id += boost * e * e / static_cast<double>(n_id);
            g += lw.lambda_id * 2.0 * boost * e / static_cast<double>(n_id);
        }
        out.delta0 += cur[b].delta * cur[b].delta / n_all;
        g += lw.lambda_delta0 * 2.0 * cur[b].delta / n_all;
        if (f.lidar_d && f.r_xs() > cfg.tau_low) {
            const double e = rep - *f.lidar_d;
            out.cons += boost * e * e / static_cast<double>(n_cons);
            g += lw.lambda_cons * 2.0 * boost * e / static_cast<double>(n_cons);
        }
        if (f.next) {
            const auto& fn = set.frames[*f.next];
            const double rep_next = fn.d_work + nxt[b].delta;
            const double r = (rep_next - rep) + f.speed * f.dt;
            out.kin += r * r / static_cast<double>(n_kin);
            const double gk = lw.lambda_kin * 2.0 * r / static_cast<double>(n_kin);
            g -= gk;
            if (want_grad) head.backward(gk, nxt[b].z, nxt[b].h, grad);
        }
        if (want_grad) head.backward(g, cur[b].z, cur[b].h, grad);
    }
    out.total = lw.lambda_id * out.id + lw.lambda_delta0 * out.delta0 + lw.lambda_cons * out.cons +
                lw.lambda_kin * out.kin;
    return out;
}

}  // namespace

LossBreakdown loss(const DeltaHead& head, const TrainingSet& set, std::span<const std::size_t> batch,
                   const LossConfig& cfg) {
    return evaluate(head, set, batch, cfg, {});
}

LossBreakdown loss_and_gradient(const DeltaHead& head, const TrainingSet& set, std::span<const std::size_t> batch,
                                const LossConfig& cfg, std::span<double> grad) {
    if (grad.size() != head.parameter_count()) throw Error("gradient buffer has wrong size");
    std::fill(grad.begin(), grad.end(), 0.0);
    return evaluate(head, set, batch, cfg, grad);
}

LossBreakdown loss(const DeltaHead& head, const TrainingSet& set, const LossConfig& cfg) {
    std::vector<std::size_t> all(set.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return evaluate(head, set, all, cfg, {});
}

// ---------------------------------------------------------------------------
// Feature assembly

std::uint64_t step_seed(std::uint64_t run_seed, std::size_t t) { return mix_seed(run_seed, 0xf0c, t); }

void append_run_frames(TrainingSet& set, const SensorSequence& clean, const SensorSequence& variant,
                       std::span<const std::optional<Prior>> priors, double dt,
                       const align::AffineAlignment& alignment) {
    const std::size_t n = clean.frames.size();
    if (variant.frames.size() != n || priors.size() != n)
        throw Error("attacked variant length differs from its clean sequence");
    const std::size_t base = set.frames.size();
    std::vector<bool> kept(n, false);
    for (std::size_t t = 0; t < n; ++t) {
        const auto& f = variant.frames[t];
        if (!priors[t] || !clean.frames[t].depth) continue;
        const auto [mu1, sigma1] = *priors[t];
        TrainingFrame tf;
        tf.d_work = f.depth.value_or(mu1);
        tf.conf = f.depth ? f.conf.value_or(0.0) : 0.0;
        tf.x = make_features(tf.d_work, tf.conf, mu1, sigma1, f.speed, f.throttle, f.steering, dt);
        tf.d_clean = *clean.frames[t].depth;
        if (f.lidar) tf.lidar_d = alignment.apply(*f.lidar);
        tf.attacked = variant.attacked_at(t);
        tf.speed = f.speed;
        tf.dt = dt;
        set.frames.push_back(tf);
        kept[t] = true;
    }
    // Link successors inside this run.
    std::size_t idx = base;
    for (std::size_t t = 0; t < n; ++t) {
        if (!kept[t]) continue;
        if (t + 1 < n && kept[t + 1]) set.frames[idx].next = idx + 1;
        ++idx;
    }
}

void append_training_frames(TrainingSet& set, const SensorSequence& clean, std::span<const SensorSequence> variants,
                            const align::AffineAlignment& alignment, const forecast::Backend& backend,
                            const FeatureOptions& opts) {
    const std::size_t n = clean.frames.size();
    if (n == 0) return;
    const double dt = opts.fixed_dt || n < 2 ? kFixedDt : estimate_dt(timestamps(clean));

    // Teacher-forced forecasts see the variant's history under the online
    // trust rule: observations inside the gate's closed band, the clean
    // value where LiDAR is absent (standing in for the fused output), and
    // gaps elsewhere.
    auto priors_for = [&](const SensorSequence& variant) {
        std::vector<std::optional<double>> history(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& f = variant.frames[i];
            if (!f.depth) continue;
            if (!f.lidar)
                history[i] = clean.frames[i].depth;
            else if (std::abs(*f.depth - alignment.apply(*f.lidar)) <= opts.tau_low)
                history[i] = f.depth;
        }
        std::vector<std::optional<Prior>> prior(n);
        bool seen = false;
        for (std::size_t t = 0; t < n; ++t) {
            forecast::ForecastRequest req;
            req.horizon = opts.horizon;
            req.n_samples = opts.samples;
            req.seed = step_seed(opts.seed, t);
            try {
                seen = seen || (t > 0 && history[t - 1].has_value());
                if (!seen) {
                    const std::optional<double> first = variant.frames[t].depth;
                    req.context = make_window(std::span(&first, 1), 0, opts.window, dt);
                } else {
                    req.context = make_window(history, t - 1, opts.window, dt);
                }
            } catch (const Error&) {
                continue;
            }
            const auto fc = forecast::forecast(req, backend);
            prior[t] = Prior{fc.mu[0], fc.sigma[0]};
        }
        return prior;
    };
    for (const auto& seq : variants) {
        if (seq.frames.size() != n) throw Error("variant length differs from its clean sequence");
        append_run_frames(set, clean, seq, priors_for(seq), dt, alignment);
    }
}

// ---------------------------------------------------------------------------
// Training

TrainResult train(const TrainingSet& train_set, const TrainingSet& validation, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
    if (train_set.frames.empty()) throw Error("train: empty training set");
    cfg.loss.weights.validate();
    if (cfg.batch_size == 0) throw Error("train: batch_size must be >= 1");

    std::vector<FeatureVector> xs;
    xs.reserve(train_set.size());
    for (const auto& f : train_set.frames) xs.push_back(f.x);

    DeltaHead head = DeltaHead::random(cfg.init_seed);
    head.norm = FeatureNorm::fit(xs);

    // The step minimizes L / sum(lambda): same minimizer, stable step size
    // whatever the weight scale.
    const double wsum = cfg.loss.weights.sum();
    const double step_scale = wsum > 0.0 ? cfg.learning_rate / wsum : cfg.learning_rate;

    auto eval_split = [&](const TrainingSet& s) { return loss(head, s, cfg.loss); };
    const bool has_val = !validation.frames.empty();

    TrainResult result{head, {}, 0};
    EpochLog first{0, eval_split(train_set), has_val ? eval_split(validation) : LossBreakdown{}};
    result.log.push_back(first);
    if (on_epoch) on_epoch(first);
    double best = has_val ? first.validation.total : first.train.total;
    int since_best = 0;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> grad(head.parameter_count());
    std::vector<double> velocity(head.parameter_count(), 0.0);
    Rng rng(mix_seed(cfg.seed, 0x7a1));

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, order.size() - start);
            const auto lb = loss_and_gradient(head, train_set, std::span(order).subspan(start, len), cfg.loss, grad);
            if (!std::isfinite(lb.total)) throw Error("training diverged at epoch " + std::to_string(epoch));
            auto params = head.parameters();
            for (std::size_t p = 0; p < params.size(); ++p) {
                velocity[p] = cfg.momentum * velocity[p] - step_scale * grad[p];
                params[p] += velocity[p];
            }
        }
        EpochLog entry{epoch, eval_split(train_set), has_val ? eval_split(validation) : LossBreakdown{}};
        if (!std::isfinite(entry.train.total) || (has_val && !std::isfinite(entry.validation.total)))
            throw Error("training diverged at epoch " + std::to_string(epoch));
        result.log.push_back(entry);
        if (on_epoch) on_epoch(entry);

        const double score = has_val ? entry.validation.total : entry.train.total;
        if (score < best) {
            best = score;
            result.head = head;
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    return result;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
    std::ostringstream out;
    out << "epoch,train_total,train_id,train_delta0,train_cons,train_kin,val_total,val_id,val_delta0,val_cons,val_kin\n";
    for (const auto& e : log) {
        out << e.epoch;
        for (const auto* b : {&e.train, &e.validation})
            for (double v : {b->total, b->id, b->delta0, b->cons, b->kin}) out << ',' << format_double(v);
        out << '\n';
    }
    return out.str();
}

}  // namespace odca::repair
