#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdfeel/errors.hpp"
#include "sdfeel/metrics.hpp"
#include "sdfeel/training.hpp"

namespace sdfeel {

struct LatencyParams {
  double model_bits = 32.0;          // 32 * M
  double rate_client_server = 5e6;   // bits/s
  double rate_server_server = 10e6;  // bits/s
  double flops_per_epoch = 1e6;      // work of one mini-batch step
  double jitter = 0.0;               // multiplicative U(-jitter, jitter); 0 = deterministic

  void validate() const;
};

// tau_i = max(1, floor(beta * h_i)).
std::size_t epochs_for(double speed, double beta);

// T_iter = model_bits / R_ct-sr + model_bits / R_sr-sr + T_comp.
// Throws ValidationError if T_comp <= 0.
double iteration_latency(double deadline, const LatencyParams& params);

// Deadline that lets the slowest client finish `min_batches` mini-batch steps.
double deadline_for_min_batches(double slowest_speed, std::size_t min_batches, double flops_per_epoch);

// Ordered by (time, cluster_id, sequence_number).
struct SimEvent {
  double time = 0.0;
  std::size_t cluster_id = 0;
  std::uint64_t sequence_number = 0;

  friend bool operator<(const SimEvent& a, const SimEvent& b) {
    if (a.time != b.time) return a.time < b.time;
    if (a.cluster_id != b.cluster_id) return a.cluster_id < b.cluster_id;
    return a.sequence_number < b.sequence_number;
  }
  friend bool operator>(const SimEvent& a, const SimEvent& b) { return b < a; }
};

struct StopCriteria {
  std::optional<double> max_sim_time_s;
  std::optional<std::uint64_t> max_global_iters;
  std::optional<double> target_loss;

  bool any() const { return max_sim_time_s || max_global_iters || target_loss; }
};

struct SimulationSetup {
  LatencyParams latency;
  // Per-cluster beta; tau_i = epochs_for(h_i, beta[cluster of i]).
  std::vector<double> beta;
  std::size_t consensus_max_rounds = 200;
  double consensus_tol = 1e-6;
  std::uint64_t seed = 0;
  // Full training set for F and its gradient; optional held-out set for accuracy.
  SampleBatch train_data;
  std::optional<SampleBatch> test_data;
  bool capture_steps = false;
};

enum class StopReason { kMaxSimTime, kMaxGlobalIters, kTargetLoss };
std::string to_string(StopReason reason);

struct RunResult {
  std::vector<MetricsRecord> trace;
  std::vector<StepRecord> steps;          // filled when capture_steps is set
  std::vector<double> iteration_latency;  // T_iter per cluster
  std::vector<std::size_t> taus;          // epochs per client used by this run
  // Shortest and longest iteration actually simulated. Equal to the extremes
  // of iteration_latency unless latency jitter is on.
  double realized_latency_min = 0.0;
  double realized_latency_max = 0.0;
  StopReason stop_reason = StopReason::kMaxGlobalIters;
  ConsensusResult consensus;
  std::optional<double> time_to_target;
  std::uint64_t max_staleness = 0;
};

// Thrown by the run loops; carries every record emitted before the failure.
class DivergedRun : public DivergenceError {
 public:
  DivergedRun(const DivergenceError& cause, RunResult partial)
      : DivergenceError(cause.iteration(), cause.reason()), partial_(std::move(partial)) {}

  const RunResult& partial() const { return partial_; }

 private:
  RunResult partial_;
};

std::vector<std::size_t> client_epochs(const FederationState& state, std::span<const double> beta);

// Event loop: each popped completion runs cluster_step for that cluster and
// schedules its next completion T_iter later. An instant at which every
// cluster completes is run as a barrier_step. One MetricsRecord per step,
// starting with the initial model at k = 0. Stops when any criterion holds,
// then runs the consensus phase.
RunResult run_async(FederationState& state, const SimulationSetup& setup, const StopCriteria& stop);

// Barrier rounds with shared tau = min_i tau_i; each round lasts
// max_d T_iter^(d) and advances k by D.
RunResult run_sync(FederationState& state, const SimulationSetup& setup, const StopCriteria& stop);

struct StalenessReport {
  std::uint64_t observed_max = 0;
  std::uint64_t bound = 0;
};

// (D - 1) * ceil(max T_iter / min T_iter) + (D - 1).
std::uint64_t staleness_bound(std::span<const double> iteration_latency);
std::uint64_t staleness_bound(std::size_t num_clusters, double min_latency, double max_latency);

// Bound from the latencies a run actually realized, so jittered runs are covered.
std::uint64_t staleness_bound(const RunResult& result);

// Throws InvariantError when a record exceeds the bound.
StalenessReport staleness_bound_check(std::span<const MetricsRecord> trace, std::span<const double> iteration_latency);
StalenessReport staleness_bound_check(const RunResult& result);

}  // namespace sdfeel
