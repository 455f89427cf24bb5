#include "sdfeel/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <system_error>

#include "json.hpp"
#include "sdfeel/errors.hpp"
#include "sdfeel/random.hpp"

namespace sdfeel {

namespace {

using Json = nlohmann::ordered_json;

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

template <typename T>
Json optional_json(const std::optional<T>& v) {
  if (!v) return Json(nullptr);
  if constexpr (std::is_floating_point_v<T>) return number_or_null(*v);
  return Json(*v);
}

Topology load_topology(const ExperimentConfig& config) {
  if (config.topology_kind == "ring")
    return config.num_clusters == 1 ? single_server() : build_ring(config.num_clusters);
  std::filesystem::path path = config.adjacency_file;
  if (path.is_relative()) path = config.base_dir / path;
  std::ifstream in(path);
  if (!in) throw ConfigError("topology.adjacency_file: cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  Topology topo = Topology::parse_adjacency_list(buf.str());
  if (topo.size() != config.num_clusters)
    throw ConfigError("topology.adjacency_file: lists " + std::to_string(topo.size()) +
                      " servers but clusters.count is " + std::to_string(config.num_clusters));
  return topo;
}

std::vector<std::size_t> iota_rows(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> rows(end - begin);
  std::iota(rows.begin(), rows.end(), begin);
  return rows;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string(), "write failed");
}

std::string model_csv(const ModelVector& model) {
  std::string out = "index,value\n";
  char buf[64];
  for (std::size_t i = 0; i < model.size(); ++i) {
    const auto res = std::to_chars(buf, buf + sizeof(buf), model[i]);
    out += std::to_string(i) + ',' + std::string(buf, res.ptr) + '\n';
  }
  return out;
}

double speed_ratio(const std::vector<double>& speeds) {
  const auto [lo, hi] = std::minmax_element(speeds.begin(), speeds.end());
  return *hi / *lo;
}

double rho_of(const Topology& topo) {
  return topo.size() > 1 ? second_eigenvalue_modulus(uniform_neighbor_matrix(topo)) : 0.0;
}

}  // namespace

PreparedExperiment prepare_experiment(const ExperimentConfig& input) {
  PreparedExperiment p;
  p.config = input;
  ExperimentConfig& c = p.config;
  validate_config(c);
  const std::size_t num_clusters = c.num_clusters;
  const std::size_t num_clients = num_clusters * c.clients_per_cluster;

  p.topology = load_topology(c);

  SyntheticDataset all = synthesize_dataset(c.task, c.num_samples + c.test_samples, c.data_classes, c.noise, c.seed);
  p.dataset.ground_truth = all.ground_truth;
  p.dataset.data = subset(all.data, iota_rows(0, c.num_samples));
  if (c.test_samples > 0) p.test_data = subset(all.data, iota_rows(c.num_samples, c.num_samples + c.test_samples));

  p.shards = c.partition == PartitionKind::kDirichlet
                 ? dirichlet_partition(num_clients, c.data_classes, c.alpha, p.dataset.data, c.seed)
                 : uniform_partition(num_clients, p.dataset.data, c.seed);
  p.cluster_of.resize(num_clients);
  for (std::size_t s = 0; s < num_clients; ++s) p.cluster_of[s] = s % num_clusters;
  p.weights = compute_weights(p.shards, p.cluster_of, num_clusters);

  p.speeds =
      c.client_speeds.empty() ? geometric_speeds(num_clients, c.min_speed, c.heterogeneity_gap) : c.client_speeds;

  if (c.deadlines.size() == 1) {
    p.deadlines.assign(num_clusters, c.deadlines.front());
  } else if (!c.deadlines.empty()) {
    p.deadlines = c.deadlines;
  } else {
    for (std::size_t d = 0; d < num_clusters; ++d) {
      double slowest = std::numeric_limits<double>::infinity();
      for (std::size_t i : p.weights.members[d]) slowest = std::min(slowest, p.speeds[i]);
      p.deadlines.push_back(deadline_for_min_batches(slowest, c.min_batches, c.latency.flops_per_epoch));
    }
  }

  for (std::size_t d = 0; d < num_clusters; ++d)
    p.beta.push_back(c.beta ? *c.beta : p.deadlines[d] / c.latency.flops_per_epoch);

  Rng rng = make_stream(c.seed, StreamTag::kInitialModel);
  std::normal_distribution<double> normal(0.0, 1.0);
  p.initial_model = ModelVector(c.task.parameter_count());
  for (std::size_t i = 0; i < p.initial_model.size(); ++i) p.initial_model[i] = c.init_scale * normal(rng);
  return p;
}

FederationState build_federation(const PreparedExperiment& p) {
  std::vector<SampleBatch> batches;
  batches.reserve(p.shards.size());
  for (const auto& s : p.shards) batches.push_back(s.samples);
  TrainingParams params{p.config.eta, p.config.batch_size, p.config.intra_base, p.config.psi};
  return make_federation(p.config.task, std::move(batches), p.weights, p.topology, params, p.speeds, p.deadlines,
                         p.initial_model, p.config.seed);
}

SimulationSetup build_setup(const PreparedExperiment& p) {
  SimulationSetup setup;
  setup.latency = p.config.latency;
  setup.beta = p.beta;
  setup.consensus_max_rounds = p.config.consensus_max_rounds;
  setup.consensus_tol = p.config.consensus_tol;
  setup.seed = p.config.seed;
  setup.train_data = p.dataset.data;
  setup.test_data = p.test_data;
  return setup;
}

std::string ExperimentSummary::to_json() const {
  Json j;
  j["run_id"] = run_id;
  j["seed"] = seed;
  j["rho_max_hat"] = number_or_null(rho_max_hat);
  j["heterogeneity_gap"] = number_or_null(heterogeneity_gap);
  Json runs = Json::array();
  for (const auto& m : modes) {
    Json r;
    r["mode"] = std::string(to_string(m.mode));
    r["final_loss"] = number_or_null(m.final_loss);
    r["final_sim_time"] = number_or_null(m.final_sim_time);
    r["final_k"] = m.final_k;
    r["time_to_target"] = optional_json(m.time_to_target);
    r["stop_reason"] = m.stop_reason;
    r["delta_max_observed"] = m.delta_max_observed;
    r["delta_max_bound"] = m.delta_max_bound;
    r["consensus_rounds"] = m.consensus_rounds;
    r["consensus_converged"] = m.consensus_converged;
    r["output_loss"] = number_or_null(m.output_loss);
    r["output_accuracy"] = optional_json(m.output_accuracy);
    r["trace"] = m.trace_path.filename().string();
    runs.push_back(r);
  }
  j["runs"] = runs;
  j["speedup"] = optional_json(speedup);
  return j.dump(2) + "\n";
}

ExperimentSummary run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  const PreparedExperiment prepared = prepare_experiment(config);
  const ExperimentConfig& c = prepared.config;

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir.string(), "cannot create output directory (" + ec.message() + ")");
  write_text(out_dir / "resolved_config.txt", render_config(c));
  export_partition_csv(prepared.shards, out_dir / "partition.csv");

  ExperimentSummary summary;
  summary.run_id = c.run_id;
  summary.seed = c.seed;
  summary.rho_max_hat = rho_of(prepared.topology);
  summary.heterogeneity_gap = speed_ratio(prepared.speeds);

  std::vector<RunMode> modes;
  if (c.mode != RunMode::kSync) modes.push_back(RunMode::kAsync);
  if (c.mode != RunMode::kAsync) modes.push_back(RunMode::kSync);
  const std::string ext = c.trace_format == TraceFormat::kCsv ? ".csv" : ".jsonl";

  for (RunMode mode : modes) {
    const std::string stem = c.run_id + "_" + std::string(to_string(mode));
    const auto trace_path = out_dir / (stem + ext);
    FederationState state = build_federation(prepared);
    const SimulationSetup setup = build_setup(prepared);
    RunResult result;
    try {
      result = mode == RunMode::kAsync ? run_async(state, setup, c.stop) : run_sync(state, setup, c.stop);
    } catch (const DivergedRun& e) {
      export_trace(e.partial().trace, trace_path, c.trace_format);
      throw;
    }
    export_trace(result.trace, trace_path, c.trace_format);
    write_text(out_dir / (stem + "_final_model.csv"), model_csv(result.consensus.output));

    ModeSummary m;
    m.mode = mode;
    m.final_loss = result.trace.back().global_loss;
    m.final_sim_time = result.trace.back().sim_time;
    m.final_k = result.trace.back().k;
    m.time_to_target = result.time_to_target;
    m.stop_reason = to_string(result.stop_reason);
    const StalenessReport staleness = staleness_bound_check(result);
    m.delta_max_observed = staleness.observed_max;
    m.delta_max_bound = staleness.bound;
    m.consensus_rounds = result.consensus.rounds;
    m.consensus_converged = result.consensus.converged;
    m.output_loss = evaluate_loss(c.task, result.consensus.output, prepared.dataset.data);
    if (prepared.test_data && c.task.kind == TaskKind::kLogistic)
      m.output_accuracy = classification_accuracy(c.task, result.consensus.output, *prepared.test_data);
    m.trace_path = trace_path;
    summary.modes.push_back(m);
  }

  if (summary.modes.size() == 2 && summary.modes[0].time_to_target && summary.modes[1].time_to_target &&
      *summary.modes[0].time_to_target > 0.0)
    summary.speedup = *summary.modes[1].time_to_target / *summary.modes[0].time_to_target;

  write_text(out_dir / "summary.json", summary.to_json());
  return summary;
}

std::string BoundReport::to_json() const {
  Json j;
  Json in;
  in["eta"] = inputs.eta;
  in["smoothness"] = number_or_null(inputs.smoothness);
  in["tau_min"] = inputs.tau_min;
  in["tau_max"] = inputs.tau_max;
  in["delta_max"] = inputs.delta_max;
  in["heterogeneity_gap"] = number_or_null(inputs.heterogeneity_gap);
  in["sigma_sq"] = number_or_null(inputs.sigma_sq);
  in["kappa_sq"] = number_or_null(inputs.kappa_sq);
  in["rho_max"] = number_or_null(inputs.rho_max);
  in["iterations"] = inputs.iterations;
  in["loss_gap"] = number_or_null(inputs.loss_gap);
  j["inputs"] = in;
  Json out;
  out["feasible"] = result.feasible;
  out["step_condition"] = result.step_condition;
  out["guard_condition"] = result.guard_condition;
  out["bound"] = number_or_null(result.bound);
  out["first_term"] = number_or_null(result.first_term);
  out["u1"] = number_or_null(result.u1);
  out["u2"] = number_or_null(result.u2);
  out["u3"] = number_or_null(result.u3);
  out["u4"] = number_or_null(result.u4);
  out["a"] = number_or_null(result.a);
  out["b"] = number_or_null(result.b);
  out["c"] = number_or_null(result.c);
  j["result"] = out;
  return j.dump(2) + "\n";
}

BoundReport evaluate_bound(const ExperimentConfig& config) {
  const PreparedExperiment p = prepare_experiment(config);
  const ExperimentConfig& c = p.config;
  BoundReport report;

  std::vector<double> latencies;
  for (double t : p.deadlines) latencies.push_back(iteration_latency(t, c.latency));
  std::size_t tau_min = std::numeric_limits<std::size_t>::max();
  std::size_t tau_max = 0;
  for (std::size_t i = 0; i < p.speeds.size(); ++i) {
    const std::size_t tau = epochs_for(p.speeds[i], p.beta[p.cluster_of[i]]);
    tau_min = std::min(tau_min, tau);
    tau_max = std::max(tau_max, tau);
  }

  std::vector<SampleBatch> batches;
  for (const auto& s : p.shards) batches.push_back(s.samples);
  report.estimates =
      estimate_assumption_constants(c.task, batches, p.weights, p.initial_model, c.batch_size, 50, c.seed);
  report.estimates.rho_max_hat = rho_of(p.topology);
  report.estimates.heterogeneity_gap = speed_ratio(p.speeds);

  BoundInputs& in = report.inputs;
  in.eta = c.eta;
  in.smoothness = smoothness_constant(c.task, p.dataset.data);
  in.tau_min = static_cast<double>(tau_min);
  in.tau_max = static_cast<double>(tau_max);
  in.delta_max = static_cast<double>(staleness_bound(latencies));
  in.heterogeneity_gap = report.estimates.heterogeneity_gap;
  in.sigma_sq = report.estimates.sigma_sq_hat;
  in.kappa_sq = report.estimates.kappa_hat * report.estimates.kappa_hat;
  in.rho_max = report.estimates.rho_max_hat;
  in.client_weights = p.weights.m;
  in.iterations = static_cast<double>(c.stop.max_global_iters.value_or(1000));
  if (in.iterations < 1.0) in.iterations = 1.0;
  in.loss_gap = evaluate_loss(c.task, p.initial_model, p.dataset.data);
  report.result = theorem_bound(in);
  return report;
}

}  // namespace sdfeel
