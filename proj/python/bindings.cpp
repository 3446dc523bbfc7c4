#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "odca/attacksim.hpp"
#include "odca/closedloop.hpp"
#include "odca/config.hpp"
#include "odca/metrics.hpp"
#include "odca/pipeline.hpp"

namespace py = pybind11;
using namespace odca;

namespace {

std::vector<bool> to_labels(const std::vector<int>& v) { return {v.begin(), v.end()}; }

py::dict run_to_dict(const gatefuse::RunResult& run) {
    std::vector<double> fused, w, rep, delta, mu1, sigma1;
    std::vector<std::optional<double>> r_xs;
    std::vector<bool> fallback, blackout;
    for (const auto& s : run.steps) {
        fused.push_back(s.d_fused);
        w.push_back(s.w);
        rep.push_back(s.d_rep);
        delta.push_back(s.delta);
        mu1.push_back(s.mu1);
        sigma1.push_back(s.sigma1);
        r_xs.push_back(s.r_xs);
        fallback.push_back(s.used_fallback);
        blackout.push_back(s.blackout);
    }
    py::dict d;
    d["d_fused"] = fused;
    d["w"] = w;
    d["d_rep"] = rep;
    d["delta"] = delta;
    d["mu1"] = mu1;
    d["sigma1"] = sigma1;
    d["r_xs"] = r_xs;
    d["used_fallback"] = fallback;
    d["blackout"] = blackout;
    if (!run.latency_us.empty()) d["latency_us"] = run.latency_us;
    return d;
}

}  // namespace

PYBIND11_MODULE(_odca, m) {
    m.doc() = "Gated obstacle-distance repair toolkit";
    py::register_exception<Error>(m, "OdcaError", PyExc_ValueError);

    py::class_<SensorFrame>(m, "SensorFrame")
        .def(py::init<>())
        .def_readwrite("t", &SensorFrame::t)
        .def_readwrite("depth", &SensorFrame::depth)
        .def_readwrite("conf", &SensorFrame::conf)
        .def_readwrite("lidar", &SensorFrame::lidar)
        .def_readwrite("speed", &SensorFrame::speed)
        .def_readwrite("throttle", &SensorFrame::throttle)
        .def_readwrite("steering", &SensorFrame::steering);

    py::class_<SensorSequence>(m, "SensorSequence")
        .def(py::init<>())
        .def_readwrite("id", &SensorSequence::id)
        .def_readwrite("frames", &SensorSequence::frames)
        .def_property_readonly("attacked",
                               [](const SensorSequence& s) {
                                   std::vector<bool> out(s.size());
                                   for (std::size_t i = 0; i < s.size(); ++i) out[i] = s.attacked_at(i);
                                   return out;
                               })
        .def_property_readonly("depth",
                               [](const SensorSequence& s) {
                                   std::vector<std::optional<double>> out;
                                   for (const auto& f : s.frames) out.push_back(f.depth);
                                   return out;
                               })
        .def("__len__", &SensorSequence::size)
        .def("to_csv", [](const SensorSequence& s) { return to_csv(s); })
        .def("__eq__", [](const SensorSequence& a, const SensorSequence& b) { return a == b; });

    m.def("load_sequence", py::overload_cast<const std::filesystem::path&>(&load_sequence), py::arg("path"));
    m.def("save_sequence", py::overload_cast<const SensorSequence&, const std::filesystem::path&>(&save_sequence),
          py::arg("sequence"), py::arg("path"));

    m.def(
        "generate",
        [](std::size_t n_sequences, std::uint64_t seed, double duration) {
            synth::GenConfig g;
            g.n_sequences = n_sequences;
            g.seed = seed;
            g.duration = duration;
            g.validate();
            return synth::generate(g);
        },
        py::arg("n_sequences") = 13, py::arg("seed") = 7, py::arg("duration") = 8.0,
        "Synthetic clean approach sequences.");

    m.def(
        "apply_attack",
        [](const SensorSequence& clean, const std::string& severity, std::uint64_t seed) {
            auto spec = attack::AttackSpec::preset(attack::severity_from_string(severity));
            spec.seed = seed;
            return attack::apply_attack(clean, spec);
        },
        py::arg("clean"), py::arg("severity"), py::arg("seed") = 0);

    py::class_<align::AffineAlignment>(m, "AffineAlignment")
        .def(py::init([](double alpha, double beta) { return align::AffineAlignment{alpha, beta, 0, true}; }),
             py::arg("alpha") = 1.0, py::arg("beta") = 0.0)
        .def_readonly("alpha", &align::AffineAlignment::alpha)
        .def_readonly("beta", &align::AffineAlignment::beta)
        .def_readonly("n_used", &align::AffineAlignment::n_used)
        .def("apply", &align::AffineAlignment::apply);
    m.def(
        "fit_alignment",
        [](const std::vector<SensorSequence>& seqs) { return align::fit_from_sequences(seqs); }, py::arg("sequences"));

    py::class_<gatefuse::GateConfig>(m, "GateConfig")
        .def(py::init([](double lo, double hi, double gamma) {
                 gatefuse::GateConfig g{lo, hi, gamma};
                 g.validate();
                 return g;
             }),
             py::arg("tau_low") = 0.15, py::arg("tau_high") = 0.60, py::arg("gamma") = 1.0)
        .def_readonly("tau_low", &gatefuse::GateConfig::tau_low)
        .def_readonly("tau_high", &gatefuse::GateConfig::tau_high)
        .def_readonly("gamma", &gatefuse::GateConfig::gamma);
    m.def("gate", &gatefuse::gate, py::arg("r_xs"), py::arg("config") = gatefuse::GateConfig{});
    m.def("fuse", &gatefuse::fuse, py::arg("d_tilde"), py::arg("d_rep"), py::arg("w"));

    m.def(
        "forecast",
        [](const std::vector<double>& context, std::size_t horizon, std::size_t n_samples, std::uint64_t seed) {
            const auto backend = forecast::backend_from_env();
            forecast::ForecastRequest req;
            req.context.values = context;
            req.horizon = horizon;
            req.n_samples = n_samples;
            req.seed = seed;
            const auto fc = forecast::forecast(req, *backend);
            return py::make_tuple(fc.mu, fc.sigma);
        },
        py::arg("context"), py::arg("horizon") = 16, py::arg("n_samples") = 20, py::arg("seed") = 0,
        "Per-step forecast mean and standard deviation from the backend chosen by ODCA_FORECASTER.");

    py::class_<repair::DeltaHead>(m, "DeltaHead")
        .def(py::init<std::size_t>(), py::arg("hidden") = repair::kDefaultHidden)
        .def_static("random", &repair::DeltaHead::random, py::arg("seed"), py::arg("hidden") = repair::kDefaultHidden)
        .def_property_readonly("parameter_count", &repair::DeltaHead::parameter_count)
        .def("predict",
             [](const repair::DeltaHead& h, double depth, double conf, double mu1, double sigma1, double speed,
                double throttle, double steering, double dt) {
                 return h.predict(repair::make_features(depth, conf, mu1, sigma1, speed, throttle, steering, dt));
             })
        .def("save", [](const repair::DeltaHead& h, const std::filesystem::path& p) { repair::save_head(h, p); })
        .def_static("load", [](const std::filesystem::path& p) { return repair::load_head(p); });

    m.def(
        "train",
        [](const std::vector<SensorSequence>& data, std::uint64_t seed, int epochs) {
            auto cfg = config::from_toml("");
            cfg.seed = seed;
            cfg.bench.train.epochs = epochs;
            cfg.finalize();
            const forecast::BootstrapBackend backend(cfg.bootstrap);
            const auto split = pipeline::split_by_series(data.size(), cfg.seed);
            pipeline::TrainedModel model;
            {
                py::gil_scoped_release release;
                model = pipeline::train_model(data, split, backend, cfg.bench);
            }
            return py::make_tuple(model.result.head, model.alignment, model.result.best_epoch);
        },
        py::arg("sequences"), py::arg("seed") = 7, py::arg("epochs") = 200,
        "Fits the alignment and the delta head; returns (head, alignment, best_epoch).");

    m.def(
        "repair",
        [](const SensorSequence& seq, const repair::DeltaHead& head, const align::AffineAlignment& alignment,
           std::uint64_t seed, const gatefuse::GateConfig& gate, bool timing) {
            const auto backend = forecast::backend_from_env();
            gatefuse::Repairer r;
            r.head = &head;
            r.alignment = alignment;
            r.gate = gate;
            r.backend = backend.get();
            return run_to_dict(gatefuse::run_sequence(seq, r, {seed, false, timing}));
        },
        py::arg("sequence"), py::arg("head"), py::arg("alignment"), py::arg("seed") = 0,
        py::arg("gate") = gatefuse::GateConfig{}, py::arg("timing") = false, "Runs the online repair over a sequence.");

    m.def("rmse",
          [](const std::vector<std::optional<double>>& p, const std::vector<std::optional<double>>& r) {
              return metrics::rmse(p, r);
          },
          py::arg("pred"), py::arg("ref"));
    m.def("mae",
          [](const std::vector<std::optional<double>>& p, const std::vector<std::optional<double>>& r) {
              return metrics::mae(p, r);
          },
          py::arg("pred"), py::arg("ref"));
    m.def("auroc",
          [](const std::vector<double>& s, const std::vector<int>& l) { return metrics::auroc(s, to_labels(l)); },
          py::arg("scores"), py::arg("labels"));
    m.def("auprc",
          [](const std::vector<double>& s, const std::vector<int>& l) { return metrics::auprc(s, to_labels(l)); },
          py::arg("scores"), py::arg("labels"));
    m.def("bounded_degradation", &metrics::bounded_degradation, py::arg("rmse_weak"), py::arg("rmse_strong"));
    m.def(
        "rgr",
        [](const std::vector<double>& ours, const std::vector<double>& ref) {
            const auto g = metrics::rgr(ours, ref);
            return py::make_tuple(g.per_severity, g.mean);
        },
        py::arg("rmse_ours"), py::arg("rmse_reference"));

    m.def(
        "persistence_sweep",
        [](const std::vector<double>& durations, std::size_t n_trials, std::uint64_t seed) {
            closedloop::ScenarioConfig sc;
            sc.seed = seed;
            py::list rows;
            for (const auto& r : closedloop::persistence_sweep(sc, durations, n_trials, closedloop::Defense::none)) {
                py::dict d;
                d["t_atk"] = r.t_atk;
                d["lost_min"] = r.lost_min;
                d["lost_max"] = r.lost_max;
                d["asr"] = r.asr;
                rows.append(d);
            }
            return rows;
        },
        py::arg("durations"), py::arg("n_trials") = 30, py::arg("seed") = 7,
        "Closed-loop attack-persistence sweep without a defense.");

    m.def(
        "config_echo",
        [](const std::vector<std::string>& overrides) {
            auto cfg = config::from_toml("");
            for (const auto& o : overrides) config::apply_override(cfg, o);
            return config::to_toml(cfg);
        },
        py::arg("overrides") = std::vector<std::string>{}, "Resolved configuration as TOML.");
}
