#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sdfeel/config.hpp"
#include "sdfeel/data_partition.hpp"
#include "sdfeel/event_sim.hpp"
#include "sdfeel/metrics.hpp"
#include "sdfeel/topology.hpp"
#include "sdfeel/training.hpp"

namespace sdfeel {

// Everything a run needs that is derived from the config and the seed. Async
// and sync runs built from the same instance share data, partition and the
// initial model.
struct PreparedExperiment {
  ExperimentConfig config;
  Topology topology = single_server();
  SyntheticDataset dataset;  // training rows
  std::optional<SampleBatch> test_data;
  std::vector<ClientShard> shards;
  std::vector<std::size_t> cluster_of;
  DataWeights weights;
  std::vector<double> speeds;     // per client
  std::vector<double> deadlines;  // T_comp per cluster
  std::vector<double> beta;       // per cluster
  ModelVector initial_model;
};

PreparedExperiment prepare_experiment(const ExperimentConfig& config);
FederationState build_federation(const PreparedExperiment& prepared);
SimulationSetup build_setup(const PreparedExperiment& prepared);

struct ModeSummary {
  RunMode mode = RunMode::kAsync;
  double final_loss = 0.0;
  double final_sim_time = 0.0;
  std::uint64_t final_k = 0;
  std::optional<double> time_to_target;
  std::string stop_reason;
  std::uint64_t delta_max_observed = 0;
  std::uint64_t delta_max_bound = 0;
  std::size_t consensus_rounds = 0;
  bool consensus_converged = false;
  double output_loss = 0.0;  // F at the consensus output
  std::optional<double> output_accuracy;
  std::filesystem::path trace_path;
};

struct ExperimentSummary {
  std::string run_id;
  std::uint64_t seed = 0;
  double rho_max_hat = 0.0;
  double heterogeneity_gap = 1.0;  // realised max/min client speed
  std::vector<ModeSummary> modes;
  // sync time-to-target / async time-to-target, when both reached the target.
  std::optional<double> speedup;

  std::string to_json() const;
};

// Runs the requested mode(s) and writes into `out_dir`: the resolved config,
// the partition manifest, one trace and one final model per mode, and
// summary.json. Throws DivergedRun after writing the partial trace.
ExperimentSummary run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

struct BoundReport {
  BoundInputs inputs;
  BoundResult result;
  AnalysisEstimates estimates;

  std::string to_json() const;
};

// Estimates the analysis constants for the configured federation at the
// initial model and evaluates the convergence bound. No simulation is run.
BoundReport evaluate_bound(const ExperimentConfig& config);

}  // namespace sdfeel
