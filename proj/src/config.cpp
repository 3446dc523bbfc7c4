#include "odca/config.hpp"

#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>
#include <toml.hpp>

namespace odca::config {

namespace {

using Setter = std::function<void(RunConfig&, const toml::node&)>;
using Getter = std::function<nlohmann::ordered_json(const RunConfig&)>;

struct Entry {
    std::string key;
    Setter set;
    Getter get;
};

[[noreturn]] void type_error(const std::string& key, const char* want) {
    throw Error("config key '" + key + "' must be " + want);
}

double as_double(const std::string& key, const toml::node& n) {
    if (auto v = n.value_exact<double>()) return *v;
    if (auto v = n.value_exact<std::int64_t>()) return static_cast<double>(*v);
    type_error(key, "a number");
}

std::int64_t as_int(const std::string& key, const toml::node& n) {
    if (auto v = n.value_exact<std::int64_t>()) return *v;
    type_error(key, "an integer");
}

std::size_t as_count(const std::string& key, const toml::node& n) {
    const auto v = as_int(key, n);
    if (v < 0) type_error(key, "a non-negative integer");
    return static_cast<std::size_t>(v);
}

Entry dbl(const std::string& key, std::function<double&(RunConfig&)> ref) {
    return {key, [key, ref](RunConfig& c, const toml::node& n) { ref(c) = as_double(key, n); },
            [ref](const RunConfig& c) { return nlohmann::ordered_json(ref(const_cast<RunConfig&>(c))); }};
}

Entry cnt(const std::string& key, std::function<std::size_t&(RunConfig&)> ref) {
    return {key, [key, ref](RunConfig& c, const toml::node& n) { ref(c) = as_count(key, n); },
            [ref](const RunConfig& c) { return nlohmann::ordered_json(ref(const_cast<RunConfig&>(c))); }};
}

Entry integer(const std::string& key, std::function<int&(RunConfig&)> ref) {
    return {key, [key, ref](RunConfig& c, const toml::node& n) { ref(c) = static_cast<int>(as_int(key, n)); },
            [ref](const RunConfig& c) { return nlohmann::ordered_json(ref(const_cast<RunConfig&>(c))); }};
}

Entry boolean(const std::string& key, std::function<bool&(RunConfig&)> ref) {
    return {key,
            [key, ref](RunConfig& c, const toml::node& n) {
                if (auto v = n.value_exact<bool>()) ref(c) = *v;
                else type_error(key, "true or false");
            },
            [ref](const RunConfig& c) { return nlohmann::ordered_json(ref(const_cast<RunConfig&>(c))); }};
}

Entry string(const std::string& key, std::function<std::string&(RunConfig&)> ref) {
    return {key,
            [key, ref](RunConfig& c, const toml::node& n) {
                if (auto v = n.value_exact<std::string>()) ref(c) = *v;
                else type_error(key, "a string");
            },
            [ref](const RunConfig& c) { return nlohmann::ordered_json(ref(const_cast<RunConfig&>(c))); }};
}

Entry dbl_list(const std::string& key, std::function<std::vector<double>&(RunConfig&)> ref) {
    return {key,
            [key, ref](RunConfig& c, const toml::node& n) {
                const auto* arr = n.as_array();
                if (!arr) type_error(key, "an array of numbers");
                std::vector<double> out;
                for (const auto& e : *arr) out.push_back(as_double(key, e));
                ref(c) = std::move(out);
            },
            [ref](const RunConfig& c) { return nlohmann::ordered_json(ref(const_cast<RunConfig&>(c))); }};
}

void add_attack(std::vector<Entry>& e, const std::string& name, std::size_t i) {
    const std::string p = "attack." + name + ".";
    auto spec = [i](RunConfig& c) -> attack::AttackSpec& { return c.bench.attacks[i]; };
    e.push_back(dbl(p + "segment_density", [spec](RunConfig& c) -> double& { return spec(c).segment_density; }));
    e.push_back(dbl(p + "segment_len_min", [spec](RunConfig& c) -> double& { return spec(c).segment_len_min; }));
    e.push_back(dbl(p + "segment_len_max", [spec](RunConfig& c) -> double& { return spec(c).segment_len_max; }));
    e.push_back(dbl(p + "bias_min", [spec](RunConfig& c) -> double& { return spec(c).bias_min; }));
    e.push_back(dbl(p + "bias_max", [spec](RunConfig& c) -> double& { return spec(c).bias_max; }));
    e.push_back(dbl(p + "conf_floor", [spec](RunConfig& c) -> double& { return spec(c).conf_floor; }));
    e.push_back(dbl(p + "blackout_prob", [spec](RunConfig& c) -> double& { return spec(c).blackout_prob; }));
    e.push_back(dbl(p + "lead_in", [spec](RunConfig& c) -> double& { return spec(c).lead_in; }));
}

#define REF(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Entry>& registry() {
    static const std::vector<Entry> entries = [] {
        std::vector<Entry> e;
        e.push_back({"seed",
                     [](RunConfig& c, const toml::node& n) {
                         const auto v = as_int("seed", n);
                         if (v < 0) type_error("seed", "a non-negative integer");
                         c.seed = static_cast<std::uint64_t>(v);
                     },
                     [](const RunConfig& c) { return nlohmann::ordered_json(c.seed); }});

        e.push_back(cnt("gen.n_sequences", REF(gen.n_sequences)));
        e.push_back(dbl("gen.duration", REF(gen.duration)));
        e.push_back(dbl("gen.rate", REF(gen.rate)));
        e.push_back(dbl_list("gen.speeds", REF(gen.speeds)));
        e.push_back(dbl_list("gen.steerings", REF(gen.steerings)));
        e.push_back(dbl("gen.depth_noise", REF(gen.depth_noise)));
        e.push_back(dbl("gen.conf_low", REF(gen.conf_low)));
        e.push_back(dbl("gen.conf_high", REF(gen.conf_high)));
        e.push_back(dbl("gen.lidar_alpha", REF(gen.lidar_alpha)));
        e.push_back(dbl("gen.lidar_beta", REF(gen.lidar_beta)));
        e.push_back(dbl("gen.lidar_noise", REF(gen.lidar_noise)));
        e.push_back(dbl("gen.speed_ripple", REF(gen.speed_ripple)));

        add_attack(e, "weak", 0);
        add_attack(e, "mid", 1);
        add_attack(e, "strong", 2);

        e.push_back(cnt("forecast.window", REF(bench.window)));
        e.push_back(cnt("forecast.horizon", REF(bench.horizon)));
        e.push_back(cnt("forecast.samples", REF(bench.samples)));
        e.push_back(boolean("forecast.fixed_dt", REF(bench.fixed_dt)));
        e.push_back(cnt("forecast.block_len", REF(bootstrap.block_len)));
        e.push_back(dbl("forecast.min_value", REF(bootstrap.min_value)));
        e.push_back(dbl("forecast.clip_mads", REF(bootstrap.clip_mads)));
        e.push_back(cnt("forecast.drift_window", REF(bootstrap.drift_window)));

        e.push_back(dbl("align.conf_min", REF(bench.align.conf_min)));
        e.push_back(dbl("align.huber_delta", REF(bench.align.huber_delta)));
        e.push_back(integer("align.max_iterations", REF(bench.align.max_iterations)));
        e.push_back(dbl("align.tolerance", REF(bench.align.tolerance)));
        e.push_back(dbl("align.window_s", REF(bench.align.window_s)));

        e.push_back(dbl("gate.tau_low", REF(bench.gate.tau_low)));
        e.push_back(dbl("gate.tau_high", REF(bench.gate.tau_high)));
        e.push_back(dbl("gate.gamma", REF(bench.gate.gamma)));

        e.push_back(dbl("loss.lambda_id", REF(bench.train.loss.weights.lambda_id)));
        e.push_back(dbl("loss.lambda_delta0", REF(bench.train.loss.weights.lambda_delta0)));
        e.push_back(dbl("loss.lambda_cons", REF(bench.train.loss.weights.lambda_cons)));
        e.push_back(dbl("loss.lambda_kin", REF(bench.train.loss.weights.lambda_kin)));
        e.push_back(dbl("loss.attacked_region_boost", REF(bench.train.loss.weights.attacked_region_boost)));
        e.push_back(dbl("loss.conf_high", REF(bench.train.loss.conf_high)));

        e.push_back(dbl("train.learning_rate", REF(bench.train.learning_rate)));
        e.push_back(dbl("train.momentum", REF(bench.train.momentum)));
        e.push_back(cnt("train.batch_size", REF(bench.train.batch_size)));
        e.push_back(integer("train.epochs", REF(bench.train.epochs)));
        e.push_back(integer("train.patience", REF(bench.train.patience)));
        e.push_back(cnt("train.attack_repeats", REF(bench.attack_repeats)));

        e.push_back(dbl("ekf.q_pos", REF(bench.ekf.q_pos)));
        e.push_back(dbl("ekf.q_vel", REF(bench.ekf.q_vel)));
        e.push_back(dbl("ekf.r_depth", REF(bench.ekf.r_depth)));
        e.push_back(dbl("ekf.r_lidar", REF(bench.ekf.r_lidar)));
        e.push_back(dbl("ekf.p0_pos", REF(bench.ekf.p0_pos)));
        e.push_back(dbl("ekf.p0_vel", REF(bench.ekf.p0_vel)));

        e.push_back(dbl("closedloop.d0", REF(closedloop.scenario.d0)));
        e.push_back(dbl("closedloop.v", REF(closedloop.scenario.v)));
        e.push_back(dbl("closedloop.fps", REF(closedloop.scenario.fps)));
        e.push_back(dbl("closedloop.trigger_dist", REF(closedloop.scenario.trigger_dist)));
        e.push_back(integer("closedloop.k_confirm", REF(closedloop.scenario.k_confirm)));
        e.push_back(dbl("closedloop.decel", REF(closedloop.scenario.decel)));
        e.push_back(dbl("closedloop.d_safe", REF(closedloop.scenario.d_safe)));
        e.push_back(dbl("closedloop.t_atk", REF(closedloop.scenario.t_atk)));
        e.push_back({"closedloop.t_atk_max",
                     [](RunConfig& c, const toml::node& n) {
                         const double v = as_double("closedloop.t_atk_max", n);
                         // A negative value switches the random duration off.
                         if (v < 0.0) c.closedloop.scenario.t_atk_max.reset();
                         else c.closedloop.scenario.t_atk_max = v;
                     },
                     [](const RunConfig& c) {
                         const auto& v = c.closedloop.scenario.t_atk_max;
                         return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(-1.0);
                     }});
        e.push_back(dbl("closedloop.rho", REF(closedloop.scenario.rho)));
        e.push_back(dbl("closedloop.attack_jitter", REF(closedloop.scenario.attack_jitter)));
        e.push_back(dbl("closedloop.cooldown", REF(closedloop.scenario.cooldown)));
        e.push_back(dbl("closedloop.detect_range", REF(closedloop.scenario.detect_range)));
        e.push_back(dbl("closedloop.p_miss", REF(closedloop.scenario.p_miss)));
        e.push_back(dbl("closedloop.conf_nominal", REF(closedloop.scenario.conf_nominal)));
        e.push_back(dbl("closedloop.depth_noise", REF(closedloop.scenario.depth_noise)));
        e.push_back(dbl("closedloop.lidar_noise", REF(closedloop.scenario.lidar_noise)));
        e.push_back(dbl("closedloop.lidar_alpha", REF(closedloop.scenario.lidar_alpha)));
        e.push_back(dbl("closedloop.lidar_beta", REF(closedloop.scenario.lidar_beta)));
        e.push_back(dbl("closedloop.max_time", REF(closedloop.scenario.max_time)));
        e.push_back(cnt("closedloop.n_trials", REF(closedloop.n_trials)));
        e.push_back(string("closedloop.defense", REF(closedloop.defense)));
        e.push_back(dbl_list("closedloop.durations", REF(closedloop.durations)));
        return e;
    }();
    return entries;
}

#undef REF

const Entry* find(const std::string& key) {
    for (const auto& e : registry())
        if (e.key == key) return &e;
    return nullptr;
}

void walk(RunConfig& cfg, const toml::table& table, const std::string& prefix, const std::string& source) {
    for (const auto& [k, node] : table) {
        const std::string key = prefix.empty() ? std::string(k.str()) : prefix + "." + std::string(k.str());
        if (const auto* sub = node.as_table()) {
            walk(cfg, *sub, key, source);
            continue;
        }
        const Entry* e = find(key);
        if (!e) throw Error(source + ": unknown config key '" + key + "'");
        e->set(cfg, node);
    }
}

}  // namespace

void RunConfig::finalize() {
    gen.seed = seed;
    bench.seed = seed;
    bench.train.seed = seed;
    bench.train.init_seed = mix_seed(seed, 0x1417);
    closedloop.scenario.seed = seed;
    gen.validate();
    for (const auto& a : bench.attacks) a.validate();
    bench.gate.validate();
    bench.train.loss.weights.validate();
    bench.ekf.validate();
    closedloop.scenario.validate();
    closedloop::defense_from_string(closedloop.defense);
    if (bench.window == 0) throw Error("forecast.window must be >= 1");
    if (bench.horizon == 0) throw Error("forecast.horizon must be >= 1");
    if (bench.samples < 2) throw Error("forecast.samples must be >= 2");
    if (bootstrap.block_len == 0) throw Error("forecast.block_len must be >= 1");
    if (bootstrap.drift_window == 0) throw Error("forecast.drift_window must be >= 1");
    if (!(bootstrap.clip_mads > 0.0)) throw Error("forecast.clip_mads must be > 0");
    if (bench.train.batch_size == 0) throw Error("train.batch_size must be >= 1");
    if (bench.train.epochs < 0 || bench.train.patience < 1) throw Error("train.epochs must be >= 0 and patience >= 1");
    if (!(bench.train.learning_rate > 0.0)) throw Error("train.learning_rate must be > 0");
    if (!(bench.train.momentum >= 0.0 && bench.train.momentum < 1.0)) throw Error("train.momentum must lie in [0, 1)");
    if (closedloop.n_trials == 0) throw Error("closedloop.n_trials must be >= 1");
    if (closedloop.durations.empty()) throw Error("closedloop.durations must not be empty");
}

RunConfig from_toml(std::string_view text, const std::string& source) {
    RunConfig cfg;
    try {
        const auto table = toml::parse(text, source);
        walk(cfg, table, "", source);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
        throw Error(msg.str());
    }
    cfg.finalize();
    return cfg;
}

RunConfig load(const std::filesystem::path& path) { return from_toml(read_text(path), path.string()); }

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw Error("override '" + assignment + "' must look like key=value");
    auto trim = [](std::string v) {
        const auto b = v.find_first_not_of(" \t");
        const auto e = v.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    const std::string key = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    const Entry* e = find(key);
    if (!e) throw Error("unknown config key '" + key + "'");
    toml::table doc;
    try {
        doc = toml::parse("v = " + value);
    } catch (const toml::parse_error&) {
        try {
            doc = toml::parse("v = \"" + value + "\"");
        } catch (const toml::parse_error&) {
            throw Error("cannot parse value for '" + key + "': " + value);
        }
    }
    e->set(cfg, *doc.get("v"));
    cfg.finalize();
}

std::vector<std::string> known_keys() {
    std::vector<std::string> keys;
    for (const auto& e : registry()) keys.push_back(e.key);
    return keys;
}

std::string to_json(const RunConfig& cfg) {
    nlohmann::ordered_json j;
    for (const auto& e : registry()) j[e.key] = e.get(cfg);
    return j.dump();
}

std::string to_toml(const RunConfig& cfg) {
    std::ostringstream out;
    std::string section;
    for (const auto& e : registry()) {
        const auto dot = e.key.rfind('.');
        const std::string sec = dot == std::string::npos ? "" : e.key.substr(0, dot);
        const std::string name = dot == std::string::npos ? e.key : e.key.substr(dot + 1);
        if (sec != section) {
            out << "\n[" << sec << "]\n";
            section = sec;
        }
        const auto v = e.get(cfg);
        out << name << " = ";
        if (v.is_array()) {
            out << '[';
            for (std::size_t i = 0; i < v.size(); ++i) out << (i ? ", " : "") << format_double(v[i].get<double>());
            out << ']';
        } else if (v.is_number_float()) {
            std::string s = format_double(v.get<double>());
            if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
            out << s;
        } else {
            out << v.dump();
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace odca::config
