#include "sdfeel/event_sim.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>
#include <string>

#include "sdfeel/errors.hpp"

namespace sdfeel {

void LatencyParams::validate() const {
  if (!(model_bits > 0.0)) throw ConfigError("latency.model_bits must be > 0");
  if (!(rate_client_server > 0.0)) throw ConfigError("latency.rate_client_server_bps must be > 0");
  if (!(rate_server_server > 0.0)) throw ConfigError("latency.rate_server_server_bps must be > 0");
  if (!(flops_per_epoch > 0.0)) throw ConfigError("latency.flops_per_epoch must be > 0");
  if (!(jitter >= 0.0 && jitter < 1.0)) throw ConfigError("latency.jitter must be in [0, 1)");
}

std::size_t epochs_for(double speed, double beta) {
  if (!(beta > 0.0) || !(speed > 0.0)) throw ConfigError("epochs_for needs beta > 0 and speed > 0");
  // The relative nudge keeps products such as 10 * 3.0000000000000004 from flooring below an integer.
  const double product = beta * speed;
  const double floored = std::floor(product * (1.0 + 1e-12));
  return floored < 1.0 ? 1 : static_cast<std::size_t>(floored);
}

double iteration_latency(double deadline, const LatencyParams& params) {
  if (!(deadline > 0.0)) throw ValidationError("T_comp must be positive");
  return params.model_bits / params.rate_client_server + params.model_bits / params.rate_server_server + deadline;
}

double deadline_for_min_batches(double slowest_speed, std::size_t min_batches, double flops_per_epoch) {
  if (!(slowest_speed > 0.0) || min_batches == 0 || !(flops_per_epoch > 0.0))
    throw ConfigError("deadline rule needs positive speed, batch count and flops");
  return static_cast<double>(min_batches) * flops_per_epoch / slowest_speed;
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kMaxSimTime:
      return "max_sim_time";
    case StopReason::kMaxGlobalIters:
      return "max_global_iters";
    case StopReason::kTargetLoss:
      return "target_loss";
  }
  return "unknown";
}

std::vector<std::size_t> client_epochs(const FederationState& state, std::span<const double> beta) {
  if (beta.size() != state.clusters.size()) throw ConfigError("one beta per cluster is required");
  std::vector<std::size_t> taus;
  taus.reserve(state.clients.size());
  for (const auto& c : state.clients) taus.push_back(epochs_for(c.speed, beta[c.cluster_id]));
  return taus;
}

namespace {

void note_latency(RunResult& out, double duration) {
  if (out.realized_latency_max == 0.0) {
    out.realized_latency_min = out.realized_latency_max = duration;
    return;
  }
  out.realized_latency_min = std::min(out.realized_latency_min, duration);
  out.realized_latency_max = std::max(out.realized_latency_max, duration);
}

StalenessReport check_against(std::span<const MetricsRecord> trace, std::uint64_t bound) {
  StalenessReport report;
  report.bound = bound;
  for (const auto& r : trace) report.observed_max = std::max(report.observed_max, r.max_staleness);
  if (report.observed_max > report.bound)
    throw InvariantError("observed staleness " + std::to_string(report.observed_max) + " exceeds bound " +
                         std::to_string(report.bound));
  return report;
}

class RunRecorder {
 public:
  RunRecorder(const FederationState& state, const SimulationSetup& setup, const StopCriteria& stop, RunResult& out)
      : state_(state), setup_(setup), stop_(stop), out_(out) {}

  // Appends a record; returns true when a stop criterion is met.
  bool record(std::uint64_t k, double time, std::int64_t trigger, std::uint64_t staleness) {
    const auto models = state_.server_models();
    MetricsRecord r = make_record(k, time, models, state_.weights, state_.task, setup_.train_data,
                                  setup_.test_data ? &*setup_.test_data : nullptr);
    r.trigger_cluster = trigger;
    r.max_staleness = staleness;
    if (!std::isfinite(r.global_loss) || !std::isfinite(r.grad_norm_sq))
      throw DivergenceError(k, "global loss is not finite");
    out_.max_staleness = std::max(out_.max_staleness, staleness);
    out_.trace.push_back(r);
    if (stop_.target_loss && r.global_loss <= *stop_.target_loss) {
      out_.time_to_target = time;
      out_.stop_reason = StopReason::kTargetLoss;
      return true;
    }
    if (stop_.max_global_iters && k >= *stop_.max_global_iters) {
      out_.stop_reason = StopReason::kMaxGlobalIters;
      return true;
    }
    return false;
  }

  bool past_time_limit(double next_time) {
    if (stop_.max_sim_time_s && next_time > *stop_.max_sim_time_s) {
      out_.stop_reason = StopReason::kMaxSimTime;
      return true;
    }
    return false;
  }

 private:
  const FederationState& state_;
  const SimulationSetup& setup_;
  const StopCriteria& stop_;
  RunResult& out_;
};

void finish(FederationState& state, const SimulationSetup& setup, RunResult& out) {
  out.consensus = consensus_phase(state.server_models(), state.topology, state.weights, setup.consensus_max_rounds,
                                  setup.consensus_tol);
}

void check_setup(const FederationState& state, const SimulationSetup& setup, const StopCriteria& stop) {
  if (!stop.any()) throw ConfigError("at least one stop criterion is required");
  setup.latency.validate();
  if (setup.beta.size() != state.clusters.size()) throw ConfigError("one beta per cluster is required");
}

}  // namespace

RunResult run_async(FederationState& state, const SimulationSetup& setup, const StopCriteria& stop) {
  check_setup(state, setup, stop);
  RunResult out;
  out.taus = client_epochs(state, setup.beta);
  const std::size_t num_clusters = state.clusters.size();
  for (const auto& c : state.clusters) out.iteration_latency.push_back(iteration_latency(c.deadline, setup.latency));

  Rng jitter_rng = make_stream(setup.seed, StreamTag::kLatencyJitter);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<std::uint64_t> completions(num_clusters, 0);
  std::vector<double> clock(num_clusters, 0.0);
  std::uint64_t sequence = 0;
  auto next_completion = [&](std::size_t d) {
    ++completions[d];
    double duration = out.iteration_latency[d];
    if (setup.latency.jitter > 0.0) {
      duration *= 1.0 + setup.latency.jitter * unit(jitter_rng);
      clock[d] += duration;
    } else {
      // Multiplying avoids drift so that commensurate latencies tie exactly.
      clock[d] = static_cast<double>(completions[d]) * out.iteration_latency[d];
    }
    note_latency(out, duration);
    return SimEvent{clock[d], d, sequence++};
  };

  std::priority_queue<SimEvent, std::vector<SimEvent>, std::greater<>> queue;
  for (std::size_t d = 0; d < num_clusters; ++d) queue.push(next_completion(d));

  RunRecorder recorder(state, setup, stop, out);
  std::uint64_t k = 0;
  try {
    bool stopped = recorder.record(0, 0.0, -1, 0);
    while (!stopped) {
      const SimEvent head = queue.top();
      if (recorder.past_time_limit(head.time)) break;

      std::vector<SimEvent> tied;
      if (num_clusters > 1) {
        while (!queue.empty() && queue.top().time == head.time) {
          tied.push_back(queue.top());
          queue.pop();
        }
        if (tied.size() < num_clusters) {
          for (std::size_t t = 1; t < tied.size(); ++t) queue.push(tied[t]);
          tied.resize(1);
        }
      } else {
        queue.pop();
        tied.push_back(head);
      }

      StepRecord* log = nullptr;
      if (setup.capture_steps) log = &out.steps.emplace_back();
      if (tied.size() == num_clusters && num_clusters > 1) {
        barrier_step(state, k, out.taus, log);
        k += num_clusters;
        for (const auto& e : tied) queue.push(next_completion(e.cluster_id));
        stopped = recorder.record(k, head.time, -1, 0);
      } else {
        const std::size_t d = head.cluster_id;
        const std::uint64_t staleness = cluster_step(state, d, k, out.taus, log);
        k += 1;
        queue.push(next_completion(d));
        stopped = recorder.record(k, head.time, static_cast<std::int64_t>(d), staleness);
      }
    }
  } catch (const DivergenceError& e) {
    throw DivergedRun(e, std::move(out));
  }
  finish(state, setup, out);
  return out;
}

RunResult run_sync(FederationState& state, const SimulationSetup& setup, const StopCriteria& stop) {
  check_setup(state, setup, stop);
  RunResult out;
  const auto taus = client_epochs(state, setup.beta);
  const std::size_t shared_tau = *std::min_element(taus.begin(), taus.end());
  out.taus.assign(taus.size(), shared_tau);
  for (const auto& c : state.clusters) out.iteration_latency.push_back(iteration_latency(c.deadline, setup.latency));
  const double round_latency = *std::max_element(out.iteration_latency.begin(), out.iteration_latency.end());
  const std::size_t num_clusters = state.clusters.size();

  Rng jitter_rng = make_stream(setup.seed, StreamTag::kLatencyJitter);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  RunRecorder recorder(state, setup, stop, out);
  std::uint64_t k = 0;
  std::uint64_t rounds = 0;
  double time = 0.0;
  try {
    bool stopped = recorder.record(0, 0.0, -1, 0);
    while (!stopped) {
      double next_time = 0.0;
      if (setup.latency.jitter > 0.0) {
        double slowest = 0.0;
        for (double t : out.iteration_latency) {
          const double duration = t * (1.0 + setup.latency.jitter * unit(jitter_rng));
          note_latency(out, duration);
          slowest = std::max(slowest, duration);
        }
        next_time = time + slowest;
      } else {
        for (double t : out.iteration_latency) note_latency(out, t);
        next_time = static_cast<double>(rounds + 1) * round_latency;
      }
      if (recorder.past_time_limit(next_time)) break;
      time = next_time;
      ++rounds;
      StepRecord* log = nullptr;
      if (setup.capture_steps) log = &out.steps.emplace_back();
      sync_round(state, k, shared_tau, log);
      k += num_clusters;
      stopped = recorder.record(k, time, -1, 0);
    }
  } catch (const DivergenceError& e) {
    throw DivergedRun(e, std::move(out));
  }
  finish(state, setup, out);
  return out;
}

std::uint64_t staleness_bound(std::size_t num_clusters, double min_latency, double max_latency) {
  if (num_clusters == 0) throw ConfigError("no clusters");
  if (!(min_latency > 0.0) || max_latency < min_latency) throw ConfigError("latencies must satisfy 0 < min <= max");
  const auto others = static_cast<std::uint64_t>(num_clusters - 1);
  const auto ratio = static_cast<std::uint64_t>(std::ceil(max_latency / min_latency - 1e-12));
  return others * ratio + others;
}

std::uint64_t staleness_bound(std::span<const double> iteration_latency) {
  if (iteration_latency.empty()) throw ConfigError("no clusters");
  const auto [lo, hi] = std::minmax_element(iteration_latency.begin(), iteration_latency.end());
  return staleness_bound(iteration_latency.size(), *lo, *hi);
}

std::uint64_t staleness_bound(const RunResult& result) {
  // A run stopped before any iteration realized nothing; fall back to nominal.
  if (result.realized_latency_max <= 0.0) return staleness_bound(result.iteration_latency);
  const auto [lo, hi] = std::minmax_element(result.iteration_latency.begin(), result.iteration_latency.end());
  return staleness_bound(result.iteration_latency.size(), std::min(*lo, result.realized_latency_min),
                         std::max(*hi, result.realized_latency_max));
}

StalenessReport staleness_bound_check(std::span<const MetricsRecord> trace, std::span<const double> iteration_latency) {
  return check_against(trace, staleness_bound(iteration_latency));
}

StalenessReport staleness_bound_check(const RunResult& result) {
  return check_against(result.trace, staleness_bound(result));
}

}  // namespace sdfeel
