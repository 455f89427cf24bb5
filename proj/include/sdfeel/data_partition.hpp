#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sdfeel/model_math.hpp"

namespace sdfeel {

struct SyntheticDataset {
  SampleBatch data;
  // w* used to generate quadratic labels; empty for the logistic task.
  ModelVector ground_truth;
};

// Quadratic: sample i belongs to class i % num_classes; x ~ N(mu_class, I) and
// b = x . w* + noise * N(0, 1). Logistic: x ~ mu_class + noise * N(0, I) with
// class means drawn N(0, 3^2 I).
SyntheticDataset synthesize_dataset(const TaskSpec& task, std::size_t num_samples, std::size_t num_classes,
                                    double noise, std::uint64_t seed);

struct ClientShard {
  std::size_t client_id = 0;
  std::vector<std::size_t> sample_indices;  // rows of the global dataset, ascending
  SampleBatch samples;

  std::size_t size() const { return sample_indices.size(); }
};

// Per-class Dirichlet(alpha) proportions over clients, converted to counts by
// largest-remainder rounding. Draws that leave a client empty are redrawn, up
// to 100 attempts.
std::vector<ClientShard> dirichlet_partition(std::size_t num_clients, std::size_t num_classes, double alpha,
                                             const SampleBatch& global_data, std::uint64_t seed);

// Shuffled split into near-equal shards (sizes differ by at most one).
std::vector<ClientShard> uniform_partition(std::size_t num_clients, const SampleBatch& global_data, std::uint64_t seed);

struct DataWeights {
  std::vector<double> m;        // |S_i| / |S|
  std::vector<double> m_hat;    // |S_i| / |S~_d|, d the cluster of i
  std::vector<double> m_tilde;  // |S~_d| / |S|
  std::vector<std::size_t> cluster_of;
  std::vector<std::vector<std::size_t>> members;  // clients of each cluster, ascending

  std::size_t num_clients() const { return m.size(); }
  std::size_t num_clusters() const { return m_tilde.size(); }
};

DataWeights compute_weights(std::span<const std::size_t> shard_sizes, std::span<const std::size_t> cluster_of,
                            std::size_t num_clusters);
DataWeights compute_weights(std::span<const ClientShard> shards, std::span<const std::size_t> cluster_of,
                            std::size_t num_clusters);

// Max over clients of the largest single-class share of that client's data.
double partition_skew(std::span<const ClientShard> shards, std::size_t num_classes);

// CSV manifest with header `client_id,sample_index,class`.
void export_partition_csv(std::span<const ClientShard> shards, const std::filesystem::path& path);

}  // namespace sdfeel
