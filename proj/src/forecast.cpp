#include "odca/forecast.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

namespace odca::forecast {

void ForecastRequest::validate() const {
    if (horizon < 1) throw Error("forecast horizon must be >= 1");
    if (n_samples < 2) throw Error("forecast needs at least 2 samples");
    if (context.values.empty()) throw Error("forecast context is empty");
    if (context.n_padded >= context.values.size()) throw Error("forecast context has no observations");
    for (double v : context.values)
        if (!std::isfinite(v)) throw Error("forecast context contains non-finite values");
}

Moments summarize(const SampleMatrix& samples) {
    if (samples.rows < 2) throw Error("summarize needs at least 2 sample paths");
    Moments m;
    m.mu.resize(samples.cols);
    m.sigma.resize(samples.cols);
    const double inv = 1.0 / static_cast<double>(samples.rows);
    for (std::size_t h = 0; h < samples.cols; ++h) {
        double lo = samples(0, h), hi = lo, sum = 0.0;
        for (std::size_t s = 0; s < samples.rows; ++s) {
            const double v = samples(s, h);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
        }
        if (lo == hi) {
            m.mu[h] = lo;
            m.sigma[h] = 0.0;
            continue;
        }
        const double mean = sum * inv;
        double ss = 0.0;
        for (std::size_t s = 0; s < samples.rows; ++s) {
            const double d = samples(s, h) - mean;
            ss += d * d;
        }
        m.mu[h] = mean;
        m.sigma[h] = std::sqrt(ss * inv);
    }
    return m;
}

ForecastSummary forecast(const ForecastRequest& req, const Backend& backend) {
    req.validate();
    ForecastSummary out;
    out.samples = backend.sample(req);
    if (out.samples.rows != req.n_samples || out.samples.cols != req.horizon ||
        out.samples.data.size() != req.n_samples * req.horizon)
        throw Error("invalid forecast: backend '" + backend.name() + "' returned wrong shape");
    for (double v : out.samples.data)
        if (!std::isfinite(v)) throw Error("invalid forecast");
    auto m = summarize(out.samples);
    out.mu = std::move(m.mu);
    out.sigma = std::move(m.sigma);
    return out;
}

SampleMatrix builtin_backend(const ContextWindow& context, std::size_t H, std::size_t S, std::uint64_t seed,
                             const BootstrapOptions& opts) {
    const std::size_t n = context.values.size();
    if (n <= context.n_padded) throw Error("builtin forecaster: empty context");
    const bool masked = !context.is_observed.empty();
    if (masked && context.is_observed.size() != n) throw Error("builtin forecaster: observation mask length mismatch");

    // Observations only; filled entries carry no information about motion.
    std::vector<std::size_t> idx;
    for (std::size_t i = context.n_padded; i < n; ++i)
        if (!masked || context.is_observed[i]) idx.push_back(i);
    if (idx.empty()) idx.push_back(n - 1);
    const double last = context.values[idx.back()];
    // Steps from the last observation to the end of the window.
    const std::size_t lead = n - 1 - idx.back();

    SampleMatrix out(S, H, std::max(last, opts.min_value));
    if (idx.size() < 2) return out;

    // Per-step increments; a gap between observations is spread evenly.
    const std::size_t m = idx.size() - 1;
    std::vector<double> inc(m);
    for (std::size_t k = 0; k < m; ++k)
        inc[k] = (context.values[idx[k + 1]] - context.values[idx[k]]) / static_cast<double>(idx[k + 1] - idx[k]);

    // Drift: least-squares slope over the most recent observations, which is
    // a weighted mean of their first differences.
    const std::size_t recent = std::clamp<std::size_t>(opts.drift_window, 2, idx.size());
    double tx = 0.0, ty = 0.0;
    for (std::size_t k = idx.size() - recent; k < idx.size(); ++k) {
        tx += static_cast<double>(idx[k]);
        ty += context.values[idx[k]];
    }
    tx /= static_cast<double>(recent);
    ty /= static_cast<double>(recent);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = idx.size() - recent; k < idx.size(); ++k) {
        const double dx = static_cast<double>(idx[k]) - tx;
        sxy += dx * (context.values[idx[k]] - ty);
        sxx += dx * dx;
    }
    const double drift = sxy / sxx;

    // Residuals are clipped at a few robust standard deviations so one jump
    // in the context cannot dominate the paths, then re-centered.
    std::vector<double> resid = inc;
    const double center = median(resid);
    for (auto& r : resid) r -= center;
    std::vector<double> dev(m);
    for (std::size_t i = 0; i < m; ++i) dev[i] = std::abs(resid[i]);
    const double clip = opts.clip_mads * 1.4826 * median(dev);
    double mean = 0.0;
    for (auto& r : resid) {
        r = std::clamp(r, -clip, clip);
        mean += r;
    }
    mean /= static_cast<double>(m);
    for (auto& r : resid) r -= mean;

    const std::size_t block = std::clamp<std::size_t>(opts.block_len, 1, m);
    Rng rng(seed);
    for (std::size_t s = 0; s < S; ++s) {
        double pos = last;
        std::size_t k = 0;  // steps taken since the last observation
        while (k < lead + H) {
            const std::size_t start = rng.index(m - block + 1);
            for (std::size_t j = 0; j < block && k < lead + H; ++j, ++k) {
                pos += drift + resid[start + j];
                if (k >= lead) out(s, k - lead) = std::max(pos, opts.min_value);
            }
        }
    }
    return out;
}

SampleMatrix BootstrapBackend::sample(const ForecastRequest& req) const {
    return builtin_backend(req.context, req.horizon, req.n_samples, req.seed, opts_);
}

// ---------------------------------------------------------------------------
// Wire protocol

std::string encode_request(std::int64_t id, const ForecastRequest& req) {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["context"] = req.context.values;
    j["horizon"] = req.horizon;
    j["n_samples"] = req.n_samples;
    j["seed"] = req.seed;
    return j.dump();
}

SampleMatrix decode_response(const std::string& line, std::int64_t expected_id, std::size_t S, std::size_t H) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("sidecar sent malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error("sidecar response is not an object");
    if (j.contains("error")) {
        const std::string msg = j.at("error").is_string() ? j.at("error").get<std::string>() : j.at("error").dump();
        throw Error("sidecar error: " + msg);
    }
    if (!j.contains("id") || !j.at("id").is_number_integer() || j.at("id").get<std::int64_t>() != expected_id)
        throw Error("sidecar response id mismatch (expected " + std::to_string(expected_id) + ")");
    if (!j.contains("samples") || !j.at("samples").is_array()) throw Error("sidecar response lacks samples");
    const auto& rows = j.at("samples");
    if (rows.size() != S) throw Error("invalid forecast: sidecar returned " + std::to_string(rows.size()) + " samples");
    SampleMatrix out(S, H);
    for (std::size_t s = 0; s < S; ++s) {
        const auto& r = rows[s];
        if (!r.is_array() || r.size() != H) throw Error("invalid forecast: sidecar sample path has wrong length");
        for (std::size_t h = 0; h < H; ++h) {
            if (!r[h].is_number()) throw Error("invalid forecast");
            out(s, h) = r[h].get<double>();
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Child process management

struct SidecarBackend::Process {
    pid_t pid = -1;
    int fd = -1;
    std::string buffer;
    std::mutex mutex;
    std::string program;

    ~Process() {
        if (fd >= 0) {
            ::shutdown(fd, SHUT_WR);
            ::close(fd);
        }
        if (pid > 0) {
            for (int i = 0; i < 50; ++i) {
                int status = 0;
                if (::waitpid(pid, &status, WNOHANG) == pid) return;
                ::usleep(10000);
            }
            ::kill(pid, SIGKILL);
            ::waitpid(pid, nullptr, 0);
        }
    }

    void send_line(const std::string& line) {
        std::string data = line + "\n";
        std::size_t off = 0;
        while (off < data.size()) {
            const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw Error("sidecar '" + program + "' write failed: " + std::strerror(errno));
            }
            off += static_cast<std::size_t>(n);
        }
    }

    std::string read_line(std::chrono::milliseconds timeout) {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        while (true) {
            const auto nl = buffer.find('\n');
            if (nl != std::string::npos) {
                std::string line = buffer.substr(0, nl);
                buffer.erase(0, nl + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return line;
            }
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) throw Error("sidecar '" + program + "' timed out");
            pollfd p{fd, POLLIN, 0};
            const int rc = ::poll(&p, 1, static_cast<int>(left.count()));
            if (rc < 0) {
                if (errno == EINTR) continue;
                throw Error("sidecar poll failed: " + std::string(std::strerror(errno)));
            }
            if (rc == 0) continue;
            char chunk[65536];
            const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw Error("sidecar read failed: " + std::string(std::strerror(errno)));
            }
            if (n == 0) {
                int status = 0;
                std::string why = "closed its output";
                // The child usually exits right after closing its end.
                for (int i = 0; pid > 0 && i < 50; ++i) {
                    if (::waitpid(pid, &status, WNOHANG) == pid) {
                        pid = -1;
                        if (WIFEXITED(status)) why = "exited with status " + std::to_string(WEXITSTATUS(status));
                        else if (WIFSIGNALED(status)) why = "killed by signal " + std::to_string(WTERMSIG(status));
                        break;
                    }
                    ::usleep(10000);
                }
                throw Error("sidecar '" + program + "' " + why);
            }
            buffer.append(chunk, static_cast<std::size_t>(n));
        }
    }
};

SidecarBackend::SidecarBackend(Options opts) : opts_(std::move(opts)) {
    if (opts_.pool_size == 0) opts_.pool_size = 1;
    for (std::size_t i = 0; i < opts_.pool_size; ++i) {
        int sv[2];
        if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0)
            throw Error("socketpair failed: " + std::string(std::strerror(errno)));
        const std::string prog = opts_.program.string();
        std::vector<std::string> argv_s{prog};
        argv_s.insert(argv_s.end(), opts_.args.begin(), opts_.args.end());
        std::vector<char*> argv;
        for (auto& a : argv_s) argv.push_back(a.data());
        argv.push_back(nullptr);

        const pid_t pid = ::fork();
        if (pid < 0) throw Error("fork failed: " + std::string(std::strerror(errno)));
        if (pid == 0) {
            ::dup2(sv[1], STDIN_FILENO);
            ::dup2(sv[1], STDOUT_FILENO);
            ::execvp(argv[0], argv.data());
            ::_exit(127);
        }
        ::close(sv[1]);
        auto proc = std::make_unique<Process>();
        proc->pid = pid;
        proc->fd = sv[0];
        proc->program = prog;

        const std::string hello = proc->read_line(opts_.timeout);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(hello);
        } catch (const nlohmann::json::exception&) {
            throw Error("sidecar '" + prog + "' sent a malformed handshake: " + hello);
        }
        if (j.contains("error"))
            throw Error("sidecar '" + prog + "' failed to start: " + j.at("error").dump());
        if (!j.contains("protocol") || j.at("protocol") != kProtocolName)
            throw Error("sidecar '" + prog + "' speaks an unsupported protocol: " + hello);
        pool_.push_back(std::move(proc));
    }
}

SidecarBackend::~SidecarBackend() = default;

SidecarBackend::Process& SidecarBackend::acquire() const {
    std::lock_guard lock(pick_mutex_);
    Process& p = *pool_[next_ % pool_.size()];
    ++next_;
    return p;
}

SampleMatrix SidecarBackend::sample(const ForecastRequest& req) const {
    req.validate();
    std::int64_t id = 0;
    {
        std::lock_guard lock(pick_mutex_);
        id = next_id_++;
    }
    Process& proc = acquire();
    std::lock_guard lock(proc.mutex);
    proc.send_line(encode_request(id, req));
    return decode_response(proc.read_line(opts_.timeout), id, req.n_samples, req.horizon);
}

std::string SidecarBackend::roundtrip_raw(const std::string& line) const {
    Process& proc = acquire();
    std::lock_guard lock(proc.mutex);
    proc.send_line(line);
    return proc.read_line(opts_.timeout);
}

std::shared_ptr<const Backend> backend_from_spec(const std::string& spec, const BootstrapOptions& builtin) {
    if (spec.empty() || spec == "builtin") return std::make_shared<BootstrapBackend>(builtin);
    constexpr std::string_view prefix = "sidecar:";
    if (spec.starts_with(prefix)) {
        SidecarBackend::Options o;
        o.program = spec.substr(prefix.size());
        if (o.program.empty()) throw Error("ODCA_FORECASTER=sidecar: needs a program path");
        if (const char* pool = std::getenv("ODCA_SIDECAR_POOL")) o.pool_size = std::max(1, std::atoi(pool));
        return std::make_shared<SidecarBackend>(std::move(o));
    }
    throw Error("unknown forecaster '" + spec + "' (expected builtin or sidecar:<path>)");
}

std::shared_ptr<const Backend> backend_from_env(const BootstrapOptions& builtin) {
    const char* v = std::getenv("ODCA_FORECASTER");
    return backend_from_spec(v ? v : "builtin", builtin);
}

}  // namespace odca::forecast
