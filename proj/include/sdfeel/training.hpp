#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sdfeel/data_partition.hpp"
#include "sdfeel/model_math.hpp"
#include "sdfeel/random.hpp"
#include "sdfeel/topology.hpp"

namespace sdfeel {

// Draws mini-batches without replacement; the permutation is reshuffled when
// fewer than batch_size unused rows remain. Returned rows are sorted so a
// full-shard batch sums in the same order as a full-shard evaluation.
class MinibatchSampler {
 public:
  MinibatchSampler() = default;
  MinibatchSampler(std::size_t shard_size, Rng rng);

  std::span<const std::size_t> next(std::size_t batch_size);

 private:
  std::vector<std::size_t> permutation_;
  std::vector<std::size_t> batch_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

struct ClientState {
  std::size_t client_id = 0;
  std::size_t cluster_id = 0;
  double speed = 1.0;
  ModelVector start_model;    // w_{k,0}: last model broadcast by the cluster
  std::uint64_t start_k = 0;  // iteration whose broadcast produced start_model
  MinibatchSampler sampler;
};

struct UpdateDelta {
  std::size_t client_id = 0;
  ModelVector delta;  // (w_end - w_start) / tau
  std::size_t tau = 1;
  ModelVector displacement;  // w_end - w_start
  ModelVector gradient_sum;  // sum of the tau applied mini-batch gradients
};

// Runs tau mini-batch SGD steps from `start_model`. Throws DivergenceError
// tagged with `iteration` when a parameter becomes non-finite.
UpdateDelta local_update(ClientState& client, const ModelVector& start_model, std::size_t tau, double eta,
                         std::size_t batch_size, const TaskSpec& task, const SampleBatch& shard,
                         std::uint64_t iteration = 0);

// Which server model the cluster's averaged update is applied to.
enum class IntraBase {
  kCurrent,    // y at the aggregation instant (default)
  kBroadcast,  // y as it was when the clients were seeded
};

struct ClusterState {
  std::size_t cluster_id = 0;
  ModelVector server_model;     // y^(d)
  ModelVector broadcast_model;  // copy taken at the last broadcast
  double deadline = 1.0;        // T_comp^(d), seconds
  std::vector<std::size_t> clients;
  std::uint64_t last_broadcast_k = 0;
};

// y_hat = base + tau_bar * sum_i m_hat_i * delta_i with tau_bar = sum_i m_hat_i tau_i.
// Throws ProtocolError if a member client has no delta.
ModelVector intra_aggregate(const ClusterState& cluster, std::span<const UpdateDelta> deltas,
                            const DataWeights& weights, IntraBase base = IntraBase::kCurrent);

// In place: `models[trigger]` holds y_hat, the others their stored y. Every
// j in N_d + {d} becomes sum_{i in N_j + {j}} p[i][j] models[i] (evaluated on
// the pre-update values); all other models are untouched.
void inter_aggregate(std::size_t trigger, const Topology& topology, const MixingMatrix& p,
                     std::vector<ModelVector>& models);

// Simultaneous mixing of every server: y_j <- sum_{i in N_j + {j}} p[i][j] y_i.
std::vector<ModelVector> mix_all(const Topology& topology, const MixingMatrix& p,
                                 const std::vector<ModelVector>& models);

// Seeds every client of the cluster with its server model and records k.
void broadcast(ClusterState& cluster, std::span<ClientState> clients, std::uint64_t k);

struct ConsensusResult {
  ModelVector output;  // sum_d m_tilde_d y^(d) of the final models
  std::vector<ModelVector> models;
  std::size_t rounds = 0;
  bool converged = false;
  std::vector<double> max_distance;  // before round 0, then after each round
};

double max_pairwise_distance(const std::vector<ModelVector>& models);

// Repeats uniform-neighbour mixing until the max pairwise model distance is
// below `tol` or `max_rounds` is reached (converged == false then).
ConsensusResult consensus_phase(std::vector<ModelVector> models, const Topology& topology, const DataWeights& weights,
                                std::size_t max_rounds, double tol);

struct ClientUpdateRecord {
  std::size_t client_id = 0;
  std::size_t tau = 0;
  std::uint64_t start_k = 0;
  ModelVector gradient_sum;
};

// Per-step log used by trace analysis and recursion checks.
struct StepRecord {
  std::uint64_t k_begin = 0;          // index of the first iteration in the step
  std::vector<std::size_t> triggers;  // one cluster, or all clusters for a barrier step
  std::vector<ClientUpdateRecord> updates;
  std::vector<ModelVector> models_after;
  std::uint64_t max_staleness = 0;
};

struct TrainingParams {
  double eta = 0.01;
  std::size_t batch_size = 10;
  IntraBase intra_base = IntraBase::kCurrent;
  PsiConfig psi;
};

// All mutable protocol state of one federation.
struct FederationState {
  TaskSpec task;
  std::vector<SampleBatch> shards;  // by client
  DataWeights weights;
  Topology topology = single_server();
  TrainingParams params;
  std::vector<ClusterState> clusters;
  std::vector<ClientState> clients;

  std::vector<ModelVector> server_models() const;
};

// Builds clusters/clients with every server at `initial_model`; each client
// gets its own sampler stream derived from `seed`.
FederationState make_federation(const TaskSpec& task, std::vector<SampleBatch> shards, const DataWeights& weights,
                                const Topology& topology, const TrainingParams& params,
                                std::span<const double> client_speeds, std::span<const double> deadlines,
                                const ModelVector& initial_model, std::uint64_t seed);

// One asynchronous iteration of cluster `trigger` with global index k:
// local updates, intra-cluster aggregation, staleness-aware inter-cluster
// mixing, broadcast. `taus` is indexed by client id. Returns the largest
// staleness over all clusters at this instant.
std::uint64_t cluster_step(FederationState& state, std::size_t trigger, std::uint64_t k,
                           std::span<const std::size_t> taus, StepRecord* log = nullptr);

// Every cluster completes at once (iterations k_begin .. k_begin + D - 1):
// all intra-aggregate, then one uniform-neighbour mixing with zero staleness.
void barrier_step(FederationState& state, std::uint64_t k_begin, std::span<const std::size_t> taus,
                  StepRecord* log = nullptr);

// Synchronous round: barrier_step with one shared epoch count.
void sync_round(FederationState& state, std::uint64_t k_begin, std::size_t shared_tau, StepRecord* log = nullptr);

}  // namespace sdfeel
