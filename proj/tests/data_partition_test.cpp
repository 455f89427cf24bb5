#include "sdfeel/data_partition.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "sdfeel/errors.hpp"
#include "test_util.hpp"

namespace sdfeel {
namespace {

using testing::feature_matrix;
using testing::logistic_task;
using testing::quadratic_task;

SampleBatch balanced_classes(std::size_t per_class, std::size_t classes) {
  SampleBatch b;
  b.feature_dim = 1;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      b.features.push_back(static_cast<double>(i));
      b.labels.push_back(static_cast<double>(c));
      b.classes.push_back(static_cast<int>(c));
    }
  return b;
}

TEST(Synthesize, NoiselessQuadraticRecoversGroundTruth) {
  const TaskSpec task = quadratic_task(6);
  const SyntheticDataset ds = synthesize_dataset(task, 300, 10, 0.0, 3);
  ASSERT_EQ(ds.ground_truth.size(), 6u);
  const Eigen::MatrixXd x = feature_matrix(ds.data);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(ds.data.labels.data(), 300);
  const Eigen::VectorXd w = x.colPivHouseholderQr().solve(y);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(w(i), ds.ground_truth[i], 1e-8);
}

TEST(Synthesize, MinimalDatasetHasEachClassOnce) {
  const SyntheticDataset ds = synthesize_dataset(logistic_task(2, 4), 4, 4, 0.1, 1);
  std::multiset<int> seen(ds.data.classes.begin(), ds.data.classes.end());
  for (int c = 0; c < 4; ++c) EXPECT_EQ(seen.count(c), 1u);
}

TEST(Synthesize, SameSeedIsBitIdentical) {
  const TaskSpec task = logistic_task(3, 3);
  const auto a = synthesize_dataset(task, 90, 3, 0.5, 42);
  const auto b = synthesize_dataset(task, 90, 3, 0.5, 42);
  EXPECT_EQ(a.data.features, b.data.features);
  EXPECT_EQ(a.data.classes, b.data.classes);
  const auto c = synthesize_dataset(task, 90, 3, 0.5, 43);
  EXPECT_NE(a.data.features, c.data.features);
}

TEST(Synthesize, RejectsTooFewSamples) {
  EXPECT_THROW(synthesize_dataset(quadratic_task(2), 3, 4, 0.1, 1), ConfigError);
}

TEST(Dirichlet, SmallAlphaIsMoreSkewed) {
  const SampleBatch data = synthesize_dataset(logistic_task(2, 10), 3000, 10, 1.0, 9).data;
  double skew_small = 0.0, skew_large = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    skew_small += partition_skew(dirichlet_partition(30, 10, 0.5, data, seed), 10);
    skew_large += partition_skew(dirichlet_partition(30, 10, 100.0, data, seed), 10);
  }
  EXPECT_GT(skew_small / 20.0, skew_large / 20.0);
}

TEST(Dirichlet, HugeAlphaSplitsEvenly) {
  const SampleBatch data = balanced_classes(1000, 2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto shards = dirichlet_partition(2, 2, 1e6, data, seed);
    for (const auto& s : shards) {
      std::size_t per_class[2] = {0, 0};
      for (int c : s.samples.classes) ++per_class[c];
      EXPECT_NEAR(static_cast<double>(per_class[0]), 500.0, 50.0);
      EXPECT_NEAR(static_cast<double>(per_class[1]), 500.0, 50.0);
    }
  }
}

TEST(Dirichlet, SingleClientHoldsEverything) {
  const SampleBatch data = balanced_classes(7, 3);
  const auto shards = dirichlet_partition(1, 3, 0.5, data, 1);
  ASSERT_EQ(shards.size(), 1u);
  EXPECT_EQ(shards[0].size(), 21u);
}

TEST(Dirichlet, LosslessDisjointAndNonEmpty) {
  const SampleBatch data = synthesize_dataset(logistic_task(2, 5), 1000, 5, 1.0, 2).data;
  for (double alpha : {0.1, 0.5, 10.0}) {
    const auto shards = dirichlet_partition(12, 5, alpha, data, 17);
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (const auto& s : shards) {
      EXPECT_GE(s.size(), 1u);
      EXPECT_TRUE(std::is_sorted(s.sample_indices.begin(), s.sample_indices.end()));
      total += s.size();
      for (std::size_t idx : s.sample_indices) EXPECT_TRUE(seen.insert(idx).second);
      for (std::size_t r = 0; r < s.size(); ++r) EXPECT_EQ(s.samples.classes[r], data.classes[s.sample_indices[r]]);
    }
    EXPECT_EQ(total, data.size());
  }
}

TEST(Dirichlet, DeterministicForSeed) {
  const SampleBatch data = synthesize_dataset(logistic_task(2, 4), 400, 4, 1.0, 2).data;
  const auto a = dirichlet_partition(8, 4, 0.5, data, 5);
  const auto b = dirichlet_partition(8, 4, 0.5, data, 5);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].sample_indices, b[i].sample_indices);
}

TEST(Dirichlet, RejectsBadInputs) {
  const SampleBatch data = balanced_classes(2, 2);
  EXPECT_THROW(dirichlet_partition(2, 2, 0.0, data, 1), ConfigError);
  EXPECT_THROW(dirichlet_partition(3, 2, 0.5, data, 1), ConfigError);  // fewer samples per class than clients
}

TEST(Uniform, NearEqualSizes) {
  const SampleBatch data = balanced_classes(10, 3);
  const auto shards = uniform_partition(4, data, 1);
  std::size_t total = 0;
  for (const auto& s : shards) {
    EXPECT_TRUE(s.size() == 7 || s.size() == 8);
    total += s.size();
  }
  EXPECT_EQ(total, 30u);
}

TEST(Weights, EqualSizesTwoClusters) {
  const std::vector<std::size_t> sizes{5, 5, 5, 5}, cluster{0, 0, 1, 1};
  const DataWeights w = compute_weights(sizes, cluster, 2);
  for (double m : w.m) EXPECT_DOUBLE_EQ(m, 0.25);
  for (double m : w.m_hat) EXPECT_DOUBLE_EQ(m, 0.5);
  for (double m : w.m_tilde) EXPECT_DOUBLE_EQ(m, 0.5);
}

TEST(Weights, HandArithmeticExample) {
  const std::vector<std::size_t> sizes{10, 30, 60}, cluster{0, 0, 1};
  const DataWeights w = compute_weights(sizes, cluster, 2);
  EXPECT_NEAR(w.m_hat[0], 0.25, 1e-15);
  EXPECT_NEAR(w.m_hat[1], 0.75, 1e-15);
  EXPECT_NEAR(w.m_hat[2], 1.0, 1e-15);
  EXPECT_NEAR(w.m_tilde[0], 0.4, 1e-15);
  EXPECT_NEAR(w.m_tilde[1], 0.6, 1e-15);
  EXPECT_NEAR(w.m[0], 0.1, 1e-15);
  EXPECT_NEAR(w.m[1], 0.3, 1e-15);
  EXPECT_NEAR(w.m[2], 0.6, 1e-15);
}

TEST(Weights, SingleClusterCollapses) {
  const std::vector<std::size_t> sizes{3, 9}, cluster{0, 0};
  const DataWeights w = compute_weights(sizes, cluster, 1);
  EXPECT_DOUBLE_EQ(w.m_tilde[0], 1.0);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_DOUBLE_EQ(w.m[i], w.m_hat[i]);
}

TEST(Weights, EmptyClusterRejected) {
  const std::vector<std::size_t> sizes{3, 9}, cluster{0, 0};
  EXPECT_THROW(compute_weights(sizes, cluster, 2), ConfigError);
  const std::vector<std::size_t> empty_client{3, 0};
  EXPECT_THROW(compute_weights(empty_client, std::vector<std::size_t>{0, 1}, 2), ConfigError);
}

TEST(Weights, NormalizationsHoldForRandomAssignments) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t clusters = 1 + rng() % 6;
    const std::size_t clients = clusters + rng() % 20;
    std::vector<std::size_t> sizes(clients), cluster(clients);
    for (std::size_t i = 0; i < clients; ++i) {
      sizes[i] = 1 + rng() % 500;
      cluster[i] = i < clusters ? i : rng() % clusters;
    }
    const DataWeights w = compute_weights(sizes, cluster, clusters);
    EXPECT_NEAR(std::accumulate(w.m.begin(), w.m.end(), 0.0), 1.0, 1e-12);
    EXPECT_NEAR(std::accumulate(w.m_tilde.begin(), w.m_tilde.end(), 0.0), 1.0, 1e-12);
    std::vector<double> hat_sum(clusters, 0.0);
    for (std::size_t i = 0; i < clients; ++i) {
      hat_sum[cluster[i]] += w.m_hat[i];
      EXPECT_NEAR(w.m[i], w.m_hat[i] * w.m_tilde[cluster[i]], 1e-12);
    }
    for (double s : hat_sum) EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Export, ManifestHasHeaderAndOneRowPerSample) {
  const SampleBatch data = balanced_classes(3, 2);
  const auto shards = uniform_partition(2, data, 1);
  const auto path = std::filesystem::temp_directory_path() / "sdfeel_partition_test.csv";
  export_partition_csv(shards, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "client_id,sample_index,class");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 6u);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace sdfeel
