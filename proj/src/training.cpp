#include "sdfeel/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sdfeel/errors.hpp"

namespace sdfeel {

MinibatchSampler::MinibatchSampler(std::size_t shard_size, Rng rng) : permutation_(shard_size), rng_(std::move(rng)) {
  std::iota(permutation_.begin(), permutation_.end(), 0);
  std::shuffle(permutation_.begin(), permutation_.end(), rng_);
}

std::span<const std::size_t> MinibatchSampler::next(std::size_t batch_size) {
  if (batch_size == 0 || batch_size > permutation_.size())
    throw ConfigError("batch size " + std::to_string(batch_size) + " does not fit a shard of " +
                      std::to_string(permutation_.size()) + " samples");
  if (cursor_ + batch_size > permutation_.size()) {
    std::shuffle(permutation_.begin(), permutation_.end(), rng_);
    cursor_ = 0;
  }
  batch_.assign(permutation_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                permutation_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size));
  cursor_ += batch_size;
  std::sort(batch_.begin(), batch_.end());
  return batch_;
}

UpdateDelta local_update(ClientState& client, const ModelVector& start_model, std::size_t tau, double eta,
                         std::size_t batch_size, const TaskSpec& task, const SampleBatch& shard,
                         std::uint64_t iteration) {
  if (tau == 0) throw ConfigError("local update needs tau >= 1");
  if (!(eta > 0.0)) throw ConfigError("learning rate must be positive");

  ModelVector w = start_model;
  ModelVector gradient_sum(start_model.size());
  ModelVector g;
  for (std::size_t l = 0; l < tau; ++l) {
    evaluate_loss_and_gradient(task, w, shard, client.sampler.next(batch_size), &g);
    axpy(-eta, g, w);
    gradient_sum += g;
    if (!w.all_finite())
      throw DivergenceError(iteration, "client " + std::to_string(client.client_id) + " produced a non-finite model");
  }

  UpdateDelta out;
  out.client_id = client.client_id;
  out.tau = tau;
  out.displacement = w - start_model;
  out.delta = ModelVector(w.size());
  for (std::size_t j = 0; j < w.size(); ++j) out.delta[j] = out.displacement[j] / static_cast<double>(tau);
  out.gradient_sum = std::move(gradient_sum);

  // tau * delta == -eta * sum(g) up to rounding of the tau sequential steps.
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double scale = std::max({1.0, std::abs(start_model[j]), std::abs(w[j])});
    const double mismatch = std::abs(out.displacement[j] + eta * out.gradient_sum[j]);
    if (mismatch > 1e-12 * scale * static_cast<double>(tau))
      throw InvariantError("local update displacement disagrees with accumulated gradients");
  }
  return out;
}

ModelVector intra_aggregate(const ClusterState& cluster, std::span<const UpdateDelta> deltas,
                            const DataWeights& weights, IntraBase base) {
  ModelVector combined(cluster.server_model.size());
  double tau_bar = 0.0;
  for (std::size_t client : cluster.clients) {
    const auto it =
        std::find_if(deltas.begin(), deltas.end(), [&](const UpdateDelta& u) { return u.client_id == client; });
    if (it == deltas.end())
      throw ProtocolError("cluster " + std::to_string(cluster.cluster_id) + " is missing the update of client " +
                          std::to_string(client));
    const double m_hat = weights.m_hat.at(client);
    axpy(m_hat, it->delta, combined);
    tau_bar += m_hat * static_cast<double>(it->tau);
  }
  ModelVector y_hat = base == IntraBase::kCurrent ? cluster.server_model : cluster.broadcast_model;
  axpy(tau_bar, combined, y_hat);
  return y_hat;
}

namespace {

ModelVector mix_column(std::size_t j, const Topology& topology, const MixingMatrix& p,
                       const std::vector<ModelVector>& models) {
  ModelVector out(models[j].size());
  axpy(p(j, j), models[j], out);
  for (std::size_t i : topology.neighbors(j)) axpy(p(i, j), models[i], out);
  return out;
}

}  // namespace

void inter_aggregate(std::size_t trigger, const Topology& topology, const MixingMatrix& p,
                     std::vector<ModelVector>& models) {
  if (models.size() != topology.size() || p.rows() != topology.size())
    throw DimensionError("inter-cluster aggregation shape mismatch");
  for (const auto& m : models) require_same_size(m, models[trigger], "inter_aggregate");
  std::vector<std::size_t> touched{trigger};
  touched.insert(touched.end(), topology.neighbors(trigger).begin(), topology.neighbors(trigger).end());
  std::vector<ModelVector> updated;
  updated.reserve(touched.size());
  for (std::size_t j : touched) updated.push_back(mix_column(j, topology, p, models));
  for (std::size_t k = 0; k < touched.size(); ++k) models[touched[k]] = std::move(updated[k]);
}

std::vector<ModelVector> mix_all(const Topology& topology, const MixingMatrix& p,
                                 const std::vector<ModelVector>& models) {
  if (models.size() != topology.size() || p.rows() != topology.size()) throw DimensionError("mixing shape mismatch");
  std::vector<ModelVector> out;
  out.reserve(models.size());
  for (std::size_t j = 0; j < models.size(); ++j) out.push_back(mix_column(j, topology, p, models));
  return out;
}

void broadcast(ClusterState& cluster, std::span<ClientState> clients, std::uint64_t k) {
  for (std::size_t i : cluster.clients) {
    clients[i].start_model = cluster.server_model;
    clients[i].start_k = k;
  }
  cluster.broadcast_model = cluster.server_model;
  cluster.last_broadcast_k = k;
}

double max_pairwise_distance(const std::vector<ModelVector>& models) {
  double worst = 0.0;
  for (std::size_t a = 0; a < models.size(); ++a)
    for (std::size_t b = a + 1; b < models.size(); ++b) worst = std::max(worst, squared_distance(models[a], models[b]));
  return std::sqrt(worst);
}

ConsensusResult consensus_phase(std::vector<ModelVector> models, const Topology& topology, const DataWeights& weights,
                                std::size_t max_rounds, double tol) {
  if (models.size() != weights.num_clusters()) throw DimensionError("one model per cluster is required");
  const MixingMatrix p = uniform_neighbor_matrix(topology);
  ConsensusResult result;
  result.max_distance.push_back(max_pairwise_distance(models));
  while (result.max_distance.back() >= tol && result.rounds < max_rounds) {
    models = mix_all(topology, p, models);
    ++result.rounds;
    result.max_distance.push_back(max_pairwise_distance(models));
  }
  result.converged = result.max_distance.back() < tol;
  result.output = ModelVector(models.front().size());
  for (std::size_t d = 0; d < models.size(); ++d) axpy(weights.m_tilde[d], models[d], result.output);
  result.models = std::move(models);
  return result;
}

std::vector<ModelVector> FederationState::server_models() const {
  std::vector<ModelVector> out;
  out.reserve(clusters.size());
  for (const auto& c : clusters) out.push_back(c.server_model);
  return out;
}

FederationState make_federation(const TaskSpec& task, std::vector<SampleBatch> shards, const DataWeights& weights,
                                const Topology& topology, const TrainingParams& params,
                                std::span<const double> client_speeds, std::span<const double> deadlines,
                                const ModelVector& initial_model, std::uint64_t seed) {
  const std::size_t num_clients = shards.size();
  if (weights.num_clients() != num_clients || client_speeds.size() != num_clients)
    throw ConfigError("client count mismatch between shards, weights and speeds");
  if (weights.num_clusters() != topology.size() || deadlines.size() != topology.size())
    throw ConfigError("cluster count mismatch between weights, topology and deadlines");
  if (initial_model.size() != task.parameter_count()) throw DimensionError("initial model has the wrong dimension");

  FederationState state;
  state.task = task;
  state.weights = weights;
  state.topology = topology;
  state.params = params;
  for (std::size_t d = 0; d < topology.size(); ++d) {
    ClusterState c;
    c.cluster_id = d;
    c.server_model = initial_model;
    c.broadcast_model = initial_model;
    c.deadline = deadlines[d];
    c.clients = weights.members[d];
    state.clusters.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < num_clients; ++i) {
    if (!(client_speeds[i] > 0.0)) throw ConfigError("client speeds must be positive");
    if (shards[i].size() < params.batch_size)
      throw ConfigError("client " + std::to_string(i) + " holds " + std::to_string(shards[i].size()) +
                        " samples, fewer than train.batch_size");
    ClientState cs;
    cs.client_id = i;
    cs.cluster_id = weights.cluster_of[i];
    cs.speed = client_speeds[i];
    cs.start_model = initial_model;
    cs.sampler = MinibatchSampler(shards[i].size(), make_stream(seed, StreamTag::kClientSampler, i));
    state.clients.push_back(std::move(cs));
  }
  state.shards = std::move(shards);
  return state;
}

namespace {

std::vector<UpdateDelta> run_cluster_clients(FederationState& state, std::size_t d, std::uint64_t k,
                                             std::span<const std::size_t> taus, StepRecord* log) {
  std::vector<UpdateDelta> deltas;
  for (std::size_t i : state.clusters[d].clients) {
    ClientState& client = state.clients[i];
    if (client.start_k > k) throw InvariantError("client trains on a model from the future");
    deltas.push_back(local_update(client, client.start_model, taus[i], state.params.eta, state.params.batch_size,
                                  state.task, state.shards[i], k));
    if (log) log->updates.push_back({i, taus[i], client.start_k, deltas.back().gradient_sum});
  }
  return deltas;
}

void require_finite(const ModelVector& m, std::uint64_t k, std::size_t d) {
  if (!m.all_finite()) throw DivergenceError(k, "server " + std::to_string(d) + " holds a non-finite model");
}

}  // namespace

std::uint64_t cluster_step(FederationState& state, std::size_t trigger, std::uint64_t k,
                           std::span<const std::size_t> taus, StepRecord* log) {
  if (taus.size() != state.clients.size()) throw ConfigError("one epoch count per client is required");
  if (log) {
    log->k_begin = k;
    log->triggers = {trigger};
  }
  const auto deltas = run_cluster_clients(state, trigger, k, taus, log);
  ModelVector y_hat = intra_aggregate(state.clusters[trigger], deltas, state.weights, state.params.intra_base);

  // The trigger's own model is fresh at this instant.
  StalenessVector staleness;
  staleness.current_k = k;
  for (const auto& c : state.clusters) staleness.last_broadcast.push_back(c.last_broadcast_k);
  staleness.last_broadcast[trigger] = k;

  const MixingMatrix p = build_mixing_matrix(trigger, state.topology, staleness, state.params.psi);
  std::vector<ModelVector> models = state.server_models();
  models[trigger] = std::move(y_hat);
  inter_aggregate(trigger, state.topology, p, models);
  for (std::size_t d = 0; d < models.size(); ++d) {
    require_finite(models[d], k, d);
    state.clusters[d].server_model = std::move(models[d]);
  }
  broadcast(state.clusters[trigger], state.clients, k);

  const std::uint64_t max_staleness = staleness.max_delta();
  if (log) {
    log->models_after = state.server_models();
    log->max_staleness = max_staleness;
  }
  return max_staleness;
}

void barrier_step(FederationState& state, std::uint64_t k_begin, std::span<const std::size_t> taus, StepRecord* log) {
  if (taus.size() != state.clients.size()) throw ConfigError("one epoch count per client is required");
  const std::size_t num_clusters = state.clusters.size();
  const std::uint64_t k_last = k_begin + num_clusters - 1;
  if (log) {
    log->k_begin = k_begin;
    log->triggers.resize(num_clusters);
    std::iota(log->triggers.begin(), log->triggers.end(), 0);
  }
  std::vector<ModelVector> y_hat;
  y_hat.reserve(num_clusters);
  for (std::size_t d = 0; d < num_clusters; ++d) {
    const auto deltas = run_cluster_clients(state, d, k_begin + d, taus, log);
    y_hat.push_back(intra_aggregate(state.clusters[d], deltas, state.weights, state.params.intra_base));
  }
  auto mixed = mix_all(state.topology, uniform_neighbor_matrix(state.topology), y_hat);
  for (std::size_t d = 0; d < num_clusters; ++d) {
    require_finite(mixed[d], k_last, d);
    state.clusters[d].server_model = std::move(mixed[d]);
    broadcast(state.clusters[d], state.clients, k_last);
  }
  if (log) {
    log->models_after = state.server_models();
    log->max_staleness = 0;
  }
}

void sync_round(FederationState& state, std::uint64_t k_begin, std::size_t shared_tau, StepRecord* log) {
  const std::vector<std::size_t> taus(state.clients.size(), shared_tau);
  barrier_step(state, k_begin, taus, log);
}

}  // namespace sdfeel
