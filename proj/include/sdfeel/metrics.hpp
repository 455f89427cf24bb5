#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "sdfeel/data_partition.hpp"
#include "sdfeel/model_math.hpp"

namespace sdfeel {

struct MetricsRecord {
  std::uint64_t k = 0;
  double sim_time = 0.0;
  double global_loss = 0.0;   // F(y_bar_k)
  double grad_norm_sq = 0.0;  // |grad F(y_bar_k)|^2
  double consensus_error = 0.0;
  std::uint64_t max_staleness = 0;
  std::int64_t trigger_cluster = -1;  // -1: initial record or barrier step
  std::optional<double> test_accuracy;

  bool operator==(const MetricsRecord&) const = default;
};

// y_bar = sum_d m_tilde_d y^(d)
ModelVector auxiliary_global(std::span<const ModelVector> models, const DataWeights& weights);

// sum_d m_tilde_d |y_bar - y^(d)|^2
double consensus_error(std::span<const ModelVector> models, const DataWeights& weights);

// Snapshot of all server models at one instant.
MetricsRecord make_record(std::uint64_t k, double sim_time, std::span<const ModelVector> models,
                          const DataWeights& weights, const TaskSpec& task, const SampleBatch& train_data,
                          const SampleBatch* test_data);

struct AnalysisEstimates {
  double sigma_sq_hat = 0.0;
  double kappa_hat = 0.0;
  double rho_max_hat = 0.0;
  double heterogeneity_gap = 1.0;
  std::uint64_t delta_max_observed = 0;
};

// sigma_sq_hat: per client, the mean of |g_batch - grad F_i|^2 over
// `num_probes` mini-batches at `probe`, maximised over clients.
// kappa_hat: max_i |grad F_i(probe) - grad F(probe)| with F = sum_i m_i F_i.
// The remaining fields are left for the caller.
AnalysisEstimates estimate_assumption_constants(const TaskSpec& task, std::span<const SampleBatch> shards,
                                                const DataWeights& weights, const ModelVector& probe,
                                                std::size_t batch_size, std::size_t num_probes, std::uint64_t seed);

struct BoundInputs {
  double eta = 0.0;
  double smoothness = 0.0;  // L
  double tau_min = 1.0;
  double tau_max = 1.0;
  double delta_max = 0.0;
  double heterogeneity_gap = 1.0;  // H
  double sigma_sq = 0.0;
  double kappa_sq = 0.0;
  double rho_max = 0.0;
  std::vector<double> client_weights;  // m_i
  double iterations = 1.0;             // K
  double loss_gap = 1.0;               // F(y_bar_0) - F(y_bar_K), upper estimate
};

struct BoundResult {
  bool feasible = false;         // both learning-rate conditions hold
  bool step_condition = false;   // 1 - eta L H tau_max - C >= 0
  bool guard_condition = false;  // 1 - 2 eta^2 L^2 U2 > 0
  double bound = 0.0;            // +inf when U1 <= 0 or 1 - 2 eta^2 L^2 U2 <= 0
  double u1 = 0.0, u2 = 0.0, u3 = 0.0, u4 = 0.0;
  double a = 0.0, b = 0.0, c = 0.0;
  double first_term = 0.0;
};

// Convergence bound on (1/K) sum_k E|grad F(y_bar_k)|^2 and the learning-rate
// conditions. The rho sums are closed with S = 1/(1 - rho_max): sum rho^2 <= S,
// (sum rho)^2 <= S^2, and the K-indexed double sum in C is replaced by S^2.
BoundResult theorem_bound(const BoundInputs& in);

enum class TraceFormat { kCsv, kJsonl };

inline constexpr const char* kTraceCsvHeader =
    "k,sim_time,global_loss,grad_norm_sq,consensus_error,max_staleness,trigger_cluster,test_accuracy";

void export_trace(std::span<const MetricsRecord> trace, const std::filesystem::path& path, TraceFormat format);
std::vector<MetricsRecord> read_trace(const std::filesystem::path& path, TraceFormat format);

}  // namespace sdfeel
