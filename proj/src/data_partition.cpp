#include "sdfeel/data_partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "sdfeel/errors.hpp"
#include "sdfeel/random.hpp"

namespace sdfeel {

SyntheticDataset synthesize_dataset(const TaskSpec& task, std::size_t num_samples, std::size_t num_classes,
                                    double noise, std::uint64_t seed) {
  task.validate();
  if (num_classes == 0) throw ConfigError("data.num_classes must be positive");
  if (num_samples < num_classes) throw ConfigError("data.num_samples must be >= data.num_classes");
  if (!(noise >= 0.0)) throw ConfigError("data.noise must be >= 0");
  if (task.kind == TaskKind::kLogistic && num_classes != task.num_classes)
    throw ConfigError("logistic task needs data.num_classes == task.num_classes");

  Rng rng = make_stream(seed, StreamTag::kDataset);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t f = task.feature_dim;

  const double mean_scale = task.kind == TaskKind::kLogistic ? 3.0 : 1.0;
  std::vector<double> means(num_classes * f);
  for (double& v : means) v = mean_scale * normal(rng);

  SyntheticDataset out;
  if (task.kind == TaskKind::kQuadratic) {
    out.ground_truth = ModelVector(f);
    for (std::size_t j = 0; j < f; ++j) out.ground_truth[j] = normal(rng);
  }

  SampleBatch& data = out.data;
  data.feature_dim = f;
  data.features.resize(num_samples * f);
  data.labels.resize(num_samples);
  data.classes.resize(num_samples);
  const double feature_noise = task.kind == TaskKind::kLogistic ? noise : 1.0;
  for (std::size_t i = 0; i < num_samples; ++i) {
    const auto cls = i % num_classes;
    data.classes[i] = static_cast<int>(cls);
    double target = 0.0;
    for (std::size_t j = 0; j < f; ++j) {
      const double x = means[cls * f + j] + feature_noise * normal(rng);
      data.features[i * f + j] = x;
      if (task.kind == TaskKind::kQuadratic) target += x * out.ground_truth[j];
    }
    if (task.kind == TaskKind::kQuadratic) {
      const double eps = normal(rng);
      data.labels[i] = target + noise * eps;
    } else {
      data.labels[i] = static_cast<double>(cls);
    }
  }
  return out;
}

namespace {

std::vector<ClientShard> build_shards(std::vector<std::vector<std::size_t>> assignment, const SampleBatch& data) {
  std::vector<ClientShard> shards(assignment.size());
  for (std::size_t c = 0; c < assignment.size(); ++c) {
    std::sort(assignment[c].begin(), assignment[c].end());
    shards[c].client_id = c;
    shards[c].samples = subset(data, assignment[c]);
    shards[c].sample_indices = std::move(assignment[c]);
  }
  return shards;
}

// Largest-remainder apportionment of `total` items by `proportions`
// (which sum to 1). Ties on the remainder go to the lower index.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& proportions) {
  const std::size_t n = proportions.size();
  std::vector<std::size_t> counts(n);
  std::vector<double> remainder(n);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double exact = static_cast<double>(total) * proportions[i];
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < total; k = (k + 1) % n, ++assigned) ++counts[order[k]];
  // Floating error can overshoot by a unit when proportions sum slightly above 1.
  for (; assigned > total; --assigned) --*std::max_element(counts.begin(), counts.end());
  return counts;
}

}  // namespace

std::vector<ClientShard> dirichlet_partition(std::size_t num_clients, std::size_t num_classes, double alpha,
                                             const SampleBatch& global_data, std::uint64_t seed) {
  if (num_clients == 0) throw ConfigError("partition needs at least one client");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("data.alpha must be finite and > 0");
  global_data.validate();

  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < global_data.size(); ++i) {
    const auto cls = static_cast<std::size_t>(global_data.classes[i]);
    if (cls >= num_classes) throw ConfigError("sample class index exceeds data.num_classes");
    by_class[cls].push_back(i);
  }
  for (std::size_t l = 0; l < num_classes; ++l)
    if (by_class[l].size() < num_clients)
      throw ConfigError("class " + std::to_string(l) + " has fewer samples than clients");

  Rng rng = make_stream(seed, StreamTag::kPartition);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  constexpr int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<std::vector<std::size_t>> assignment(num_clients);
    bool degenerate = false;
    for (std::size_t l = 0; l < num_classes && !degenerate; ++l) {
      std::vector<double> p(num_clients);
      double sum = 0.0;
      for (double& v : p) sum += (v = gamma(rng));
      if (!(sum > 0.0)) {
        degenerate = true;
        break;
      }
      for (double& v : p) v /= sum;
      const auto counts = apportion(by_class[l].size(), p);
      std::vector<std::size_t> members = by_class[l];
      std::shuffle(members.begin(), members.end(), rng);
      std::size_t cursor = 0;
      for (std::size_t c = 0; c < num_clients; ++c)
        for (std::size_t k = 0; k < counts[c]; ++k) assignment[c].push_back(members[cursor++]);
    }
    if (degenerate) continue;
    if (std::all_of(assignment.begin(), assignment.end(), [](const auto& a) { return !a.empty(); }))
      return build_shards(std::move(assignment), global_data);
  }
  throw ConfigError("dirichlet partition left a client empty after " + std::to_string(kMaxAttempts) +
                    " attempts; increase data.alpha or data.num_samples");
}

std::vector<ClientShard> uniform_partition(std::size_t num_clients, const SampleBatch& global_data,
                                           std::uint64_t seed) {
  if (num_clients == 0) throw ConfigError("partition needs at least one client");
  global_data.validate();
  if (global_data.size() < num_clients) throw ConfigError("fewer samples than clients");
  std::vector<std::size_t> order(global_data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_stream(seed, StreamTag::kPartition);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> assignment(num_clients);
  for (std::size_t i = 0; i < order.size(); ++i) assignment[i % num_clients].push_back(order[i]);
  return build_shards(std::move(assignment), global_data);
}

DataWeights compute_weights(std::span<const std::size_t> shard_sizes, std::span<const std::size_t> cluster_of,
                            std::size_t num_clusters) {
  if (shard_sizes.size() != cluster_of.size())
    throw ConfigError("cluster assignment must cover every client exactly once");
  if (num_clusters == 0) throw ConfigError("at least one cluster is required");
  DataWeights w;
  w.cluster_of.assign(cluster_of.begin(), cluster_of.end());
  w.members.resize(num_clusters);
  std::vector<double> cluster_total(num_clusters, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < shard_sizes.size(); ++i) {
    if (shard_sizes[i] == 0) throw ConfigError("client " + std::to_string(i) + " has no data");
    if (cluster_of[i] >= num_clusters)
      throw ConfigError("client " + std::to_string(i) + " assigned to unknown cluster");
    w.members[cluster_of[i]].push_back(i);
    cluster_total[cluster_of[i]] += static_cast<double>(shard_sizes[i]);
    total += static_cast<double>(shard_sizes[i]);
  }
  for (std::size_t d = 0; d < num_clusters; ++d)
    if (w.members[d].empty()) throw ConfigError("cluster " + std::to_string(d) + " has no clients");

  w.m.resize(shard_sizes.size());
  w.m_hat.resize(shard_sizes.size());
  w.m_tilde.resize(num_clusters);
  for (std::size_t d = 0; d < num_clusters; ++d) w.m_tilde[d] = cluster_total[d] / total;
  for (std::size_t i = 0; i < shard_sizes.size(); ++i) {
    const auto size = static_cast<double>(shard_sizes[i]);
    w.m[i] = size / total;
    w.m_hat[i] = size / cluster_total[cluster_of[i]];
  }
  return w;
}

DataWeights compute_weights(std::span<const ClientShard> shards, std::span<const std::size_t> cluster_of,
                            std::size_t num_clusters) {
  std::vector<std::size_t> sizes;
  sizes.reserve(shards.size());
  for (const auto& s : shards) sizes.push_back(s.size());
  return compute_weights(sizes, cluster_of, num_clusters);
}

double partition_skew(std::span<const ClientShard> shards, std::size_t num_classes) {
  double worst = 0.0;
  for (const auto& shard : shards) {
    std::vector<std::size_t> counts(num_classes, 0);
    for (int cls : shard.samples.classes) ++counts[static_cast<std::size_t>(cls)];
    const auto top = *std::max_element(counts.begin(), counts.end());
    worst = std::max(worst, static_cast<double>(top) / static_cast<double>(shard.size()));
  }
  return worst;
}

void export_partition_csv(std::span<const ClientShard> shards, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(path.string(), "cannot open partition manifest for writing");
  out << "client_id,sample_index,class\n";
  for (const auto& shard : shards)
    for (std::size_t k = 0; k < shard.size(); ++k)
      out << shard.client_id << ',' << shard.sample_indices[k] << ',' << shard.samples.classes[k] << '\n';
  if (!out) throw IoError(path.string(), "failed writing partition manifest");
}

}  // namespace sdfeel
