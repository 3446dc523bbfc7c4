#include "odca/core.hpp"

#include "text.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

namespace odca {

using json = nlohmann::json;

double Rng::normal(double mean, double stddev) {
    if (spare_) {
        const double z = *spare_;
        spare_.reset();
        return mean + stddev * z;
    }
    // Box-Muller; u1 kept away from zero.
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    return mean + stddev * r * std::cos(theta);
}

std::size_t Rng::index(std::size_t n) {
    if (n == 0) throw Error("Rng::index: empty range");
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix_seed(mix_seed(seed, a), b);
}

std::string_view to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::none: return "none";
        case AttackKind::bias: return "bias";
        case AttackKind::blackout: return "blackout";
    }
    return "none";
}

AttackKind attack_kind_from_string(std::string_view name) {
    if (name == "none" || name.empty()) return AttackKind::none;
    if (name == "bias") return AttackKind::bias;
    if (name == "blackout") return AttackKind::blackout;
    throw Error("unknown attack kind '" + std::string(name) + "'");
}

void validate(const SensorFrame& f, std::size_t index) {
    auto fail = [&](const std::string& what) {
        throw Error("frame " + std::to_string(index) + ": " + what);
    };
    if (!std::isfinite(f.t)) fail("timestamp not finite");
    if (f.depth && !(std::isfinite(*f.depth) && *f.depth > 0.0)) fail("depth must be finite and > 0");
    if (f.conf && !(*f.conf >= 0.0 && *f.conf <= 1.0)) fail("conf outside [0,1]");
    if (f.lidar && !(std::isfinite(*f.lidar) && *f.lidar > 0.0)) fail("lidar must be finite and > 0");
    if (!std::isfinite(f.speed) || !std::isfinite(f.throttle) || !std::isfinite(f.steering))
        fail("vehicle state not finite");
}

void validate(const SensorSequence& seq) {
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        validate(seq.frames[i], i);
        if (i > 0 && !(seq.frames[i].t > seq.frames[i - 1].t))
            throw Error("frame " + std::to_string(i) + ": timestamps not strictly increasing");
    }
    if (seq.labels && seq.labels->size() != seq.frames.size())
        throw Error("label count does not match frame count");
}

std::vector<double> timestamps(const SensorSequence& seq) {
    std::vector<double> t;
    t.reserve(seq.frames.size());
    for (const auto& f : seq.frames) t.push_back(f.t);
    return t;
}

double estimate_dt(std::span<const double> t, bool force_fixed) {
    if (t.size() < 2) throw Error("insufficient timestamps");
    std::vector<double> diffs;
    diffs.reserve(t.size() - 1);
    for (std::size_t i = 1; i < t.size(); ++i) {
        const double d = t[i] - t[i - 1];
        if (!(d > 0.0)) throw Error("timestamps not strictly increasing");
        diffs.push_back(d);
    }
    if (force_fixed) return kFixedDt;
    return median(std::move(diffs));
}

double median(std::vector<double> v) {
    if (v.empty()) throw Error("median of an empty set");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    if (v.size() % 2 == 1) return v[mid];
    const double upper = v[mid];
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

ContextWindow make_window(std::span<const std::optional<double>> depth, std::size_t t_index,
                          std::size_t W, double dt) {
    if (W == 0) throw Error("window length must be >= 1");
    if (t_index >= depth.size()) throw Error("t_index out of range");

    std::optional<std::size_t> first_valid;
    for (std::size_t i = 0; i <= t_index; ++i) {
        if (depth[i]) {
            first_valid = i;
            break;
        }
    }
    if (!first_valid) throw Error("no valid context");

    ContextWindow win;
    win.dt = dt;
    win.values.resize(W);
    // Values before the first valid sample never enter the window.
    const std::size_t span_start = *first_valid;
    const std::size_t available = t_index - span_start + 1;
    const std::size_t take = std::min(W, available);
    win.n_padded = W - take;

    // Carry-forward state must see samples that precede the window.
    const std::size_t begin = t_index + 1 - take;
    double carry = *depth[span_start];
    for (std::size_t i = span_start; i < begin; ++i)
        if (depth[i]) carry = *depth[i];
    win.is_observed.assign(W, false);
    for (std::size_t k = 0; k < take; ++k) {
        const auto& v = depth[begin + k];
        if (v) carry = *v;
        win.values[win.n_padded + k] = carry;
        win.is_observed[win.n_padded + k] = v.has_value();
    }
    const double pad = win.values[win.n_padded];
    std::fill(win.values.begin(), win.values.begin() + static_cast<std::ptrdiff_t>(win.n_padded), pad);
    return win;
}

ContextWindow make_window(const SensorSequence& seq, std::size_t t_index, std::size_t W) {
    if (t_index >= seq.frames.size()) throw Error("t_index out of range");
    std::vector<std::optional<double>> depth;
    depth.reserve(t_index + 1);
    for (std::size_t i = 0; i <= t_index; ++i) depth.push_back(seq.frames[i].depth);
    const double dt = seq.frames.size() >= 2 ? estimate_dt(timestamps(seq)) : kFixedDt;
    ContextWindow win = make_window(depth, t_index, W, dt);

    win.conf.assign(W, 0.0);
    win.speed.assign(W, 0.0);
    const std::size_t take = W - win.n_padded;
    const std::size_t begin = t_index + 1 - take;
    for (std::size_t k = 0; k < W; ++k) {
        const std::size_t src = k < win.n_padded ? begin : begin + (k - win.n_padded);
        win.conf[k] = seq.frames[src].conf.value_or(0.0);
        win.speed[k] = seq.frames[src].speed;
    }
    return win;
}

// ---------------------------------------------------------------------------
// File I/O

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{}) throw Error("failed to format number");
    return std::string(buf, ptr);
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

FileFormat format_for(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".csv") return FileFormat::csv;
    if (ext == ".jsonl" || ext == ".json") return FileFormat::jsonl;
    throw Error("cannot infer sequence format from '" + path.string() + "' (use .csv or .jsonl)");
}

namespace {

constexpr std::string_view kCsvHeader =
    "t,depth,conf,lidar,speed,throttle,steering,attack_label,attack_kind";
constexpr std::string_view kMetaPrefix = "# odca-sequence ";

json meta_json(const SensorSequence& seq) {
    return json{{"id", seq.id},
                {"commanded_speed", seq.meta.commanded_speed},
                {"steering_setting", seq.meta.steering_setting}};
}

void apply_meta(SensorSequence& seq, const json& m) {
    if (m.contains("id")) seq.id = m.at("id").get<std::string>();
    if (m.contains("commanded_speed")) seq.meta.commanded_speed = m.at("commanded_speed").get<double>();
    if (m.contains("steering_setting")) seq.meta.steering_setting = m.at("steering_setting").get<double>();
}

using detail::parse_number;
using detail::parse_optional;
using detail::split_cells;
using detail::split_lines;

void finish_labels(SensorSequence& seq, std::size_t n_labeled) {
    if (n_labeled == 0) {
        seq.labels.reset();
    } else if (n_labeled != seq.frames.size()) {
        throw Error("attack labels present on some rows but not others");
    }
}

void validate_rows(const SensorSequence& seq, const std::vector<std::size_t>& row_of) {
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        try {
            validate(seq.frames[i], i);
        } catch (const Error& e) {
            throw Error("row " + std::to_string(row_of[i]) + ": " + e.what());
        }
        if (i > 0 && !(seq.frames[i].t > seq.frames[i - 1].t))
            throw Error("row " + std::to_string(row_of[i]) + ": non-monotone timestamp");
    }
}

}  // namespace

std::string to_csv(const SensorSequence& seq) {
    std::string out;
    out.reserve(64 * (seq.frames.size() + 2));
    out += kMetaPrefix;
    out += meta_json(seq).dump();
    out += '\n';
    out += kCsvHeader;
    out += '\n';
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        const auto& f = seq.frames[i];
        out += format_double(f.t);
        out += ',';
        out += opt(f.depth);
        out += ',';
        out += opt(f.conf);
        out += ',';
        out += opt(f.lidar);
        out += ',';
        out += format_double(f.speed);
        out += ',';
        out += format_double(f.throttle);
        out += ',';
        out += format_double(f.steering);
        out += ',';
        if (seq.labels) {
            const auto& l = (*seq.labels)[i];
            out += l.attacked ? '1' : '0';
            out += ',';
            out += to_string(l.kind);
        } else {
            out += ',';
        }
        out += '\n';
    }
    return out;
}

SensorSequence parse_csv(std::string_view text, std::string id_hint) {
    SensorSequence seq;
    seq.id = std::move(id_hint);
    seq.labels.emplace();
    std::vector<std::size_t> row_of;
    bool header_seen = false;
    std::size_t n_labeled = 0;
    const auto lines = split_lines(text);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        const std::string_view line = lines[ln];
        const std::size_t row = ln + 1;
        if (line.empty()) continue;
        if (line.front() == '#') {
            if (line.starts_with(kMetaPrefix)) {
                try {
                    apply_meta(seq, json::parse(line.substr(kMetaPrefix.size())));
                } catch (const json::exception& e) {
                    throw Error("row " + std::to_string(row) + ": bad metadata: " + e.what());
                }
            }
            continue;
        }
        if (!header_seen) {
            const auto cells = split_cells(line);
            const auto expected = split_cells(kCsvHeader);
            if (cells.size() < 8 || !std::equal(expected.begin(), expected.begin() + 8, cells.begin()))
                throw Error("row " + std::to_string(row) + ": unexpected header (want " +
                            std::string(kCsvHeader) + ")");
            header_seen = true;
            continue;
        }
        const auto cells = split_cells(line);
        if (cells.size() < 8 || cells.size() > 9)
            throw Error("row " + std::to_string(row) + ": expected 8 or 9 columns, got " +
                        std::to_string(cells.size()));
        SensorFrame f;
        f.t = parse_number(cells[0], row, "t");
        f.depth = parse_optional(cells[1], row, "depth");
        f.conf = parse_optional(cells[2], row, "conf");
        f.lidar = parse_optional(cells[3], row, "lidar");
        f.speed = parse_number(cells[4], row, "speed");
        f.throttle = parse_number(cells[5], row, "throttle");
        f.steering = parse_number(cells[6], row, "steering");
        FrameLabel label;
        if (!cells[7].empty()) {
            if (cells[7] == "1" || cells[7] == "true") label.attacked = true;
            else if (cells[7] == "0" || cells[7] == "false") label.attacked = false;
            else throw Error("row " + std::to_string(row) + ": malformed attack_label '" + std::string(cells[7]) + "'");
            ++n_labeled;
            if (cells.size() == 9) {
                try {
                    label.kind = attack_kind_from_string(cells[8]);
                } catch (const Error& e) {
                    throw Error("row " + std::to_string(row) + ": " + e.what());
                }
            } else if (label.attacked) {
                label.kind = AttackKind::bias;
            }
        }
        seq.frames.push_back(f);
        seq.labels->push_back(label);
        row_of.push_back(row);
    }
    if (!header_seen) throw Error("missing CSV header row");
    finish_labels(seq, n_labeled);
    validate_rows(seq, row_of);
    return seq;
}

std::string to_jsonl(const SensorSequence& seq) {
    std::string out;
    out += json{{"sequence", meta_json(seq)}}.dump();
    out += '\n';
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        const auto& f = seq.frames[i];
        json j;
        j["t"] = f.t;
        if (f.depth) j["depth"] = *f.depth;
        if (f.conf) j["conf"] = *f.conf;
        if (f.lidar) j["lidar"] = *f.lidar;
        j["speed"] = f.speed;
        j["throttle"] = f.throttle;
        j["steering"] = f.steering;
        if (seq.labels) {
            j["attack_label"] = (*seq.labels)[i].attacked;
            j["attack_kind"] = std::string(to_string((*seq.labels)[i].kind));
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

SensorSequence parse_jsonl(std::string_view text, std::string id_hint) {
    SensorSequence seq;
    seq.id = std::move(id_hint);
    seq.labels.emplace();
    std::vector<std::size_t> row_of;
    std::size_t n_labeled = 0;
    const auto lines = split_lines(text);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        const std::size_t row = ln + 1;
        if (lines[ln].empty()) continue;
        try {
            const json j = json::parse(lines[ln]);
            if (!j.is_object()) throw Error("expected a JSON object");
            if (j.contains("sequence")) {
                apply_meta(seq, j.at("sequence"));
                continue;
            }
            auto opt = [&](const char* key) -> std::optional<double> {
                if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
                return j.at(key).get<double>();
            };
            SensorFrame f;
            f.t = j.at("t").get<double>();
            f.depth = opt("depth");
            f.conf = opt("conf");
            f.lidar = opt("lidar");
            f.speed = j.value("speed", 0.0);
            f.throttle = j.value("throttle", 0.0);
            f.steering = j.value("steering", 0.0);
            FrameLabel label;
            if (j.contains("attack_label")) {
                label.attacked = j.at("attack_label").get<bool>();
                label.kind = j.contains("attack_kind")
                                 ? attack_kind_from_string(j.at("attack_kind").get<std::string>())
                                 : (label.attacked ? AttackKind::bias : AttackKind::none);
                ++n_labeled;
            }
            seq.frames.push_back(f);
            seq.labels->push_back(label);
            row_of.push_back(row);
        } catch (const json::exception& e) {
            throw Error("row " + std::to_string(row) + ": " + e.what());
        } catch (const Error& e) {
            throw Error("row " + std::to_string(row) + ": " + e.what());
        }
    }
    finish_labels(seq, n_labeled);
    validate_rows(seq, row_of);
    return seq;
}

SensorSequence load_sequence(const std::filesystem::path& path, FileFormat format) {
    const std::string text = read_text(path);
    const std::string stem = path.stem().string();
    try {
        return format == FileFormat::csv ? parse_csv(text, stem) : parse_jsonl(text, stem);
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

SensorSequence load_sequence(const std::filesystem::path& path) {
    return load_sequence(path, format_for(path));
}

void save_sequence(const SensorSequence& seq, const std::filesystem::path& path, FileFormat format) {
    validate(seq);
    write_text(path, format == FileFormat::csv ? to_csv(seq) : to_jsonl(seq));
}

void save_sequence(const SensorSequence& seq, const std::filesystem::path& path) {
    save_sequence(seq, path, format_for(path));
}

}  // namespace odca
