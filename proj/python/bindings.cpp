#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sdfeel/config.hpp"
#include "sdfeel/errors.hpp"
#include "sdfeel/event_sim.hpp"
#include "sdfeel/experiment.hpp"
#include "sdfeel/metrics.hpp"
#include "sdfeel/model_math.hpp"
#include "sdfeel/topology.hpp"

namespace py = pybind11;
using namespace sdfeel;

namespace {

py::array_t<double> to_numpy(const DenseMatrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) view(i, j) = m(i, j);
  return out;
}

DenseMatrix from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-d array");
  DenseMatrix m(a.shape(0), a.shape(1));
  auto view = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    for (py::ssize_t j = 0; j < a.shape(1); ++j) m(i, j) = view(i, j);
  return m;
}

py::array_t<double> to_numpy(const ModelVector& v) {
  // A bare count argument yields a zero stride under pybind11 3; pass the shape explicitly.
  return py::array_t<double>(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())}, v.values().data());
}

SampleBatch make_batch(const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
                       const py::array_t<double, py::array::c_style | py::array::forcecast>& y, bool categorical) {
  if (x.ndim() != 2 || y.ndim() != 1 || x.shape(0) != y.shape(0))
    throw DimensionError("features must be (n, F) and labels (n,)");
  SampleBatch b;
  b.feature_dim = x.shape(1);
  b.features.assign(x.data(), x.data() + x.size());
  b.labels.assign(y.data(), y.data() + y.size());
  for (double label : b.labels) b.classes.push_back(categorical ? static_cast<int>(label) : 0);
  b.validate();
  return b;
}

TaskSpec make_task(const std::string& kind, std::size_t feature_dim, std::size_t num_classes, double regularization) {
  TaskSpec t;
  t.kind = parse_task_kind(kind);
  t.feature_dim = feature_dim;
  t.num_classes = num_classes;
  t.regularization = regularization;
  t.validate();
  return t;
}

py::dict trace_columns(const std::vector<MetricsRecord>& trace) {
  std::vector<std::uint64_t> k, staleness;
  std::vector<double> time, loss, grad, consensus;
  std::vector<std::int64_t> trigger;
  for (const auto& r : trace) {
    k.push_back(r.k);
    time.push_back(r.sim_time);
    loss.push_back(r.global_loss);
    grad.push_back(r.grad_norm_sq);
    consensus.push_back(r.consensus_error);
    staleness.push_back(r.max_staleness);
    trigger.push_back(r.trigger_cluster);
  }
  py::dict d;
  d["k"] = py::array(py::cast(k));
  d["sim_time"] = py::array(py::cast(time));
  d["global_loss"] = py::array(py::cast(loss));
  d["grad_norm_sq"] = py::array(py::cast(grad));
  d["consensus_error"] = py::array(py::cast(consensus));
  d["max_staleness"] = py::array(py::cast(staleness));
  d["trigger_cluster"] = py::array(py::cast(trigger));
  return d;
}

}  // namespace

PYBIND11_MODULE(_sdfeel, m) {
  m.doc() = "Asynchronous semi-decentralized federated edge learning simulator";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def(
      "psi",
      [](std::uint64_t delta, double scale) {
        PsiConfig cfg;
        cfg.scale = scale;
        return psi(delta, cfg);
      },
      py::arg("delta"), py::arg("scale") = 0.5);

  m.def(
      "ring",
      [](std::size_t d) {
        const Topology t = build_ring(d);
        std::vector<std::vector<std::size_t>> adj;
        for (std::size_t i = 0; i < t.size(); ++i) adj.push_back(t.neighbors(i));
        return adj;
      },
      py::arg("num_servers"));

  m.def(
      "mixing_matrix",
      [](std::size_t trigger, std::vector<std::vector<std::size_t>> adjacency,
         std::vector<std::uint64_t> last_broadcast, std::uint64_t current_k, double scale) {
        const Topology topo = Topology::from_adjacency(std::move(adjacency));
        StalenessVector s{std::move(last_broadcast), current_k};
        PsiConfig cfg;
        cfg.scale = scale;
        return to_numpy(build_mixing_matrix(trigger, topo, s, cfg));
      },
      py::arg("trigger"), py::arg("adjacency"), py::arg("last_broadcast"), py::arg("current_k"), py::arg("scale") = 0.5,
      "Staleness-aware mixing matrix for one trigger.");

  m.def(
      "uniform_neighbor_matrix",
      [](std::vector<std::vector<std::size_t>> adjacency) {
        return to_numpy(uniform_neighbor_matrix(Topology::from_adjacency(std::move(adjacency))));
      },
      py::arg("adjacency"));

  m.def(
      "second_eigenvalue_modulus",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& p) {
        return second_eigenvalue_modulus(from_numpy(p));
      },
      py::arg("matrix"));

  m.def("epochs_for", &epochs_for, py::arg("speed"), py::arg("beta"));
  m.def(
      "staleness_bound", [](std::vector<double> latencies) { return staleness_bound(latencies); },
      py::arg("iteration_latency"));

  m.def(
      "loss_and_gradient",
      [](const std::string& kind, const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& y,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& w, std::size_t num_classes,
         double regularization) {
        const TaskSpec task = make_task(kind, x.ndim() == 2 ? x.shape(1) : 0, num_classes, regularization);
        const SampleBatch batch = make_batch(x, y, task.kind == TaskKind::kLogistic);
        ModelVector model(std::vector<double>(w.data(), w.data() + w.size()));
        ModelVector g;
        const double loss = evaluate_loss_and_gradient(task, model, batch, &g);
        return py::make_tuple(loss, to_numpy(g));
      },
      py::arg("kind"), py::arg("features"), py::arg("labels"), py::arg("model"), py::arg("num_classes") = 0,
      py::arg("regularization") = 0.0);

  m.def(
      "theorem_bound",
      [](double eta, double smoothness, double tau_min, double tau_max, double delta_max, double h, double sigma_sq,
         double kappa_sq, double rho_max, std::vector<double> client_weights, double iterations, double loss_gap) {
        BoundInputs in{eta,        smoothness, tau_min,  tau_max, delta_max,
                       h,          sigma_sq,   kappa_sq, rho_max, std::move(client_weights),
                       iterations, loss_gap};
        const BoundResult r = theorem_bound(in);
        py::dict d;
        d["feasible"] = r.feasible;
        d["step_condition"] = r.step_condition;
        d["guard_condition"] = r.guard_condition;
        d["bound"] = r.bound;
        d["u1"] = r.u1;
        d["u2"] = r.u2;
        d["u3"] = r.u3;
        d["u4"] = r.u4;
        d["a"] = r.a;
        d["b"] = r.b;
        d["c"] = r.c;
        return d;
      },
      py::arg("eta"), py::arg("smoothness"), py::arg("tau_min"), py::arg("tau_max"), py::arg("delta_max"),
      py::arg("heterogeneity_gap"), py::arg("sigma_sq"), py::arg("kappa_sq"), py::arg("rho_max"),
      py::arg("client_weights"), py::arg("iterations"), py::arg("loss_gap"));

  m.def(
      "validate_config",
      [](const std::string& text) {
        ExperimentConfig c = parse_config_text(text);
        validate_config(c);
        return render_config(c);
      },
      py::arg("text"), "Parse and validate config text; returns it with defaults resolved.");

  m.def(
      "simulate",
      [](const std::string& text, const std::string& mode) {
        const PreparedExperiment prepared = prepare_experiment(parse_config_text(text));
        FederationState state = build_federation(prepared);
        const SimulationSetup setup = build_setup(prepared);
        RunResult result;
        {
          py::gil_scoped_release release;
          const RunMode rm = parse_run_mode(mode);
          if (rm == RunMode::kBoth) throw ConfigError("mode: simulate runs one mode at a time");
          result = rm == RunMode::kAsync ? run_async(state, setup, prepared.config.stop)
                                         : run_sync(state, setup, prepared.config.stop);
        }
        py::dict d = trace_columns(result.trace);
        d["output"] = to_numpy(result.consensus.output);
        d["consensus_rounds"] = result.consensus.rounds;
        d["stop_reason"] = to_string(result.stop_reason);
        d["time_to_target"] = result.time_to_target;
        d["iteration_latency"] = result.iteration_latency;
        d["staleness_bound"] = staleness_bound(result);
        d["taus"] = result.taus;
        return d;
      },
      py::arg("config_text"), py::arg("mode") = "async", "Run one mode in memory and return the trace columns.");

  m.def(
      "run_experiment",
      [](const std::string& text, const std::filesystem::path& out_dir) {
        ExperimentSummary s;
        {
          const ExperimentConfig cfg = parse_config_text(text);
          py::gil_scoped_release release;
          s = run_experiment(cfg, out_dir);
        }
        return s.to_json();
      },
      py::arg("config_text"), py::arg("out_dir"), "Run and write outputs; returns summary JSON text.");

  m.def(
      "evaluate_bound", [](const std::string& text) { return evaluate_bound(parse_config_text(text)).to_json(); },
      py::arg("config_text"));
}
