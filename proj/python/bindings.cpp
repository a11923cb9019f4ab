#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "samcnn/config.hpp"
#include "samcnn/decomposition.hpp"
#include "samcnn/error.hpp"
#include "samcnn/io.hpp"

namespace py = pybind11;
using namespace samcnn;

namespace {

Weights weights_from(const RowMatrix& w) {
  if (w.rows() % 2 != 0 || w.rows() == 0) throw DimensionError("weight matrix needs 2m rows");
  Weights out(static_cast<std::size_t>(w.rows() / 2), static_cast<std::size_t>(w.cols()));
  out.matrix() = w;
  return out;
}

py::dict trial_dict(const TrialResult& r) {
  py::dict d;
  d["d"] = r.cell.d;
  d["mu_norm"] = r.cell.mu_norm;
  d["seed"] = r.cell.seed;
  d["algo"] = r.cell.variant;
  d["ok"] = r.ok;
  d["error"] = r.error;
  d["train_loss"] = r.train_loss;
  d["test_error"] = r.test_error;
  d["test_stderr"] = r.test_stderr;
  d["converged_iteration"] = r.converged_iteration;
  d["max_gamma"] = r.max_gamma;
  d["max_sum_zeta"] = r.max_sum_zeta;
  d["structural_violations"] = r.structural_violations;
  d["digest"] = r.digest;
  return d;
}

} // namespace

PYBIND11_MODULE(_samcnn, m) {
  m.doc() = "Two-layer patch CNN trained by SGD or SAM on signal-plus-noise data";
  m.attr("__version__") = SAMCNN_VERSION;

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<DegenerateBasisError>(m, "DegenerateBasisError", base.ptr());

  py::class_<DataParams>(m, "DataParams")
      .def(py::init([](std::size_t d, std::size_t P, double sigma_p, double p, double mu_norm) {
             DataParams q{d, P, sigma_p, p, mu_norm};
             q.validate();
             return q;
           }),
           py::arg("d") = 1000, py::arg("P") = 2, py::arg("sigma_p") = 1.0, py::arg("p") = 0.0,
           py::arg("mu_norm") = 1.0)
      .def_readwrite("d", &DataParams::d)
      .def_readwrite("P", &DataParams::P)
      .def_readwrite("sigma_p", &DataParams::sigma_p)
      .def_readwrite("p", &DataParams::p)
      .def_readwrite("mu_norm", &DataParams::mu_norm);

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("params", &Dataset::params)
      .def_readonly("mu", &Dataset::mu)
      .def_readonly("seed", &Dataset::seed)
      .def("__len__", &Dataset::size)
      .def_property_readonly("xi", [](const Dataset& ds) { return make_patch_data(ds).xi; })
      .def_property_readonly("y", [](const Dataset& ds) { return make_patch_data(ds).y; })
      .def_property_readonly("y_hat", [](const Dataset& ds) { return make_patch_data(ds).y_hat; })
      .def_property_readonly("signal_pos",
                             [](const Dataset& ds) {
                               std::vector<std::size_t> out;
                               for (const auto& s : ds.samples) out.push_back(s.signal_pos);
                               return out;
                             })
      .def("patches", [](const Dataset& ds, std::size_t i) { return ds.samples.at(i).patches(ds.mu); },
           py::arg("i"), "P x d input of sample i")
      .def("save", [](const Dataset& ds, const std::string& path) { write_dataset(path, ds); })
      .def_static("load", &read_dataset);

  m.def("gen_dataset", py::overload_cast<const DataParams&, std::size_t, std::uint64_t>(&gen_dataset),
        py::arg("params"), py::arg("n"), py::arg("seed"));
  m.def("derive_seed", [](std::uint64_t seed, const std::string& tag) { return derive_seed(seed, tag); });

  py::enum_<InitScheme>(m, "InitScheme")
      .value("gaussian", InitScheme::gaussian)
      .value("uniform_fan_in", InitScheme::uniform_fan_in);
  py::enum_<Algorithm>(m, "Algorithm").value("sgd", Algorithm::sgd).value("sam", Algorithm::sam);

  py::class_<NetConfig>(m, "NetConfig")
      .def(py::init([](std::size_t m_, std::size_t d, InitScheme init, double sigma_0) {
             return NetConfig{m_, d, init, sigma_0};
           }),
           py::arg("m") = 10, py::arg("d") = 1000, py::arg("init") = InitScheme::uniform_fan_in,
           py::arg("sigma_0") = 0.01)
      .def_readwrite("m", &NetConfig::m)
      .def_readwrite("d", &NetConfig::d)
      .def_readwrite("init", &NetConfig::init)
      .def_readwrite("sigma_0", &NetConfig::sigma_0);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init([](double eta, std::size_t B, std::size_t epochs, Algorithm algo, double tau, std::uint64_t seed,
                       std::size_t record_every) {
             TrainConfig t;
             t.eta = eta;
             t.B = B;
             t.epochs = epochs;
             t.algo = algo;
             t.tau = tau;
             t.seed = seed;
             t.record_every = record_every;
             return t;
           }),
           py::arg("eta") = 0.01, py::arg("B") = 20, py::arg("epochs") = 100, py::arg("algo") = Algorithm::sgd,
           py::arg("tau") = 0.0, py::arg("seed") = 0, py::arg("record_every") = 0)
      .def_readwrite("eta", &TrainConfig::eta)
      .def_readwrite("B", &TrainConfig::B)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("algo", &TrainConfig::algo)
      .def_readwrite("tau", &TrainConfig::tau)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("record_every", &TrainConfig::record_every)
      .def_readwrite("sam_iterations", &TrainConfig::sam_iterations);

  m.def("init_weights", [](const NetConfig& c, std::uint64_t seed) { return init_weights(c, seed).matrix(); },
        py::arg("net"), py::arg("seed"), "2m x d matrix; rows [0, m) are the +1 filters");
  m.def("forward",
        [](const RowMatrix& w, const Matrix& patches) { return forward(weights_from(w), patches); },
        py::arg("weights"), py::arg("patches"));
  m.def("margins",
        [](const RowMatrix& w, const Dataset& ds) { return evaluate(weights_from(w), make_patch_data(ds)).margins; },
        py::arg("weights"), py::arg("dataset"));
  m.def("loss", &loss);
  m.def("loss_grad", &loss_grad);
  m.def("batch_loss",
        [](const RowMatrix& w, const Dataset& ds, const std::vector<std::size_t>& batch) {
          return batch_loss(weights_from(w), make_patch_data(ds), batch);
        },
        py::arg("weights"), py::arg("dataset"), py::arg("batch"));
  m.def("batch_gradient",
        [](const RowMatrix& w, const Dataset& ds, const std::vector<std::size_t>& batch) {
          return batch_gradient(weights_from(w), make_patch_data(ds), batch).matrix();
        },
        py::arg("weights"), py::arg("dataset"), py::arg("batch"));
  m.def("sgd_step",
        [](const RowMatrix& w, const Dataset& ds, const std::vector<std::size_t>& batch, double eta) {
          return sgd_step(weights_from(w), make_patch_data(ds), batch, eta).matrix();
        },
        py::arg("weights"), py::arg("dataset"), py::arg("batch"), py::arg("eta"));
  m.def("sam_step",
        [](const RowMatrix& w, const Dataset& ds, const std::vector<std::size_t>& batch, double eta, double tau) {
          return sam_step(weights_from(w), make_patch_data(ds), batch, eta, tau).matrix();
        },
        py::arg("weights"), py::arg("dataset"), py::arg("batch"), py::arg("eta"), py::arg("tau"));

  m.def(
      "train",
      [](const Dataset& ds, const NetConfig& net, const TrainConfig& cfg, bool track) {
        DecompositionTracker tracker;
        std::vector<TrainHook*> hooks;
        if (track) hooks.push_back(&tracker);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(ds, net, cfg, hooks);
        }
        py::dict out;
        out["initial"] = r.initial.matrix();
        out["final"] = r.final.matrix();
        std::vector<std::size_t> its;
        std::vector<double> losses;
        std::vector<Vector> margins;
        for (const auto& p : r.trajectory.points) {
          its.push_back(p.iteration);
          losses.push_back(p.train_loss);
          margins.push_back(p.margins);
        }
        out["iterations"] = its;
        out["train_loss"] = losses;
        out["margins"] = margins;
        if (track) {
          out["gamma"] = tracker.coeffs().gamma;
          out["zeta"] = tracker.coeffs().zeta;
          out["omega"] = tracker.coeffs().omega;
        }
        return out;
      },
      py::arg("dataset"), py::arg("net"), py::arg("cfg"), py::arg("track_coefficients") = false,
      "Train and return weights, per-record losses and margins (and tracked coefficients).");

  m.def(
      "test_error",
      [](const RowMatrix& w, const Dataset& ds, std::size_t n_test, std::uint64_t seed) {
        Stream rng(seed);
        const TestError e = estimate_test_error(weights_from(w), ds.params, ds.mu, n_test, rng);
        return py::make_tuple(e.rate, e.std_error);
      },
      py::arg("weights"), py::arg("dataset"), py::arg("n_test") = 1000, py::arg("seed") = 0);

  m.def(
      "decompose",
      [](const RowMatrix& w, const RowMatrix& w0, const Dataset& ds) {
        const Basis basis(make_patch_data(ds));
        const OracleSolution s = oracle_solve(weights_from(w), weights_from(w0), basis);
        py::dict out;
        out["gamma"] = s.gamma;
        out["rho"] = s.rho;
        out["residual"] = s.residual;
        out["max_relative_residual"] = s.max_relative_residual;
        return out;
      },
      py::arg("weights"), py::arg("initial"), py::arg("dataset"),
      "Least-squares signal and noise coefficients of W - W0.");

  m.def("regime_ratio", &regime_ratio, py::arg("n"), py::arg("mu_norm"), py::arg("d"), py::arg("P"),
        py::arg("sigma_p"));
  m.def(
      "classify_regime",
      [](std::size_t n, double mu, std::size_t d, std::size_t P, double sigma_p) {
        return to_string(classify_regime(n, mu, d, P, sigma_p));
      },
      py::arg("n"), py::arg("mu_norm"), py::arg("d"), py::arg("P"), py::arg("sigma_p"));

  m.def(
      "run_grid",
      [](const std::string& config_text, std::size_t jobs, const std::string& out_dir) {
        const GridSpec spec = parse_config(config_text).grid_spec();
        std::vector<TrialResult> rows;
        {
          py::gil_scoped_release release;
          rows = run_grid(spec, {out_dir, jobs, false});
        }
        py::list out;
        for (const auto& r : rows) out.append(trial_dict(r));
        return out;
      },
      py::arg("config"), py::arg("jobs") = 1, py::arg("out_dir") = "",
      "Run a grid described by config text; returns one dict per trial.");
  m.def("parse_config", [](const std::string& text) { return parse_config(text).dump(); }, py::arg("text"),
        "Validate config text and return its canonical form.");
}
