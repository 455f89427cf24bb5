#include "sdfeel/topology.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "sdfeel/errors.hpp"
#include "test_util.hpp"

namespace sdfeel {
namespace {

using testing::to_eigen;

// Random connected graph: a random spanning tree plus extra edges.
Topology random_topology(std::size_t d, std::mt19937_64& rng) {
  std::vector<std::vector<std::size_t>> adj(d);
  auto link = [&](std::size_t a, std::size_t b) {
    if (a == b || std::find(adj[a].begin(), adj[a].end(), b) != adj[a].end()) return;
    adj[a].push_back(b);
    adj[b].push_back(a);
  };
  for (std::size_t v = 1; v < d; ++v) link(v, rng() % v);
  const std::size_t extra = rng() % (d + 1);
  for (std::size_t e = 0; e < extra; ++e) link(rng() % d, rng() % d);
  return Topology::from_adjacency(adj);
}

StalenessVector random_staleness(std::size_t d, std::mt19937_64& rng) {
  StalenessVector s;
  s.current_k = 20;
  for (std::size_t j = 0; j < d; ++j) s.last_broadcast.push_back(20 - rng() % 21);
  return s;
}

TEST(Ring, Degrees) {
  const Topology six = build_ring(6);
  for (std::size_t d = 0; d < 6; ++d) EXPECT_EQ(six.degree(d), 2u);
  EXPECT_TRUE(six.connected(0, 5));
  EXPECT_FALSE(six.connected(0, 3));

  const Topology three = build_ring(3);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      if (a != b) EXPECT_TRUE(three.connected(a, b));

  const Topology two = build_ring(2);
  EXPECT_EQ(two.degree(0), 1u);
  EXPECT_EQ(two.degree(1), 1u);
  EXPECT_THROW(build_ring(1), ConfigError);
}

TEST(Adjacency, ParsesAndRoundTrips) {
  const Topology t = Topology::parse_adjacency_list("# line graph\n0: 1\n1: 0,2\n\n2: 1\n");
  EXPECT_EQ(t.size(), 3u);
  EXPECT_EQ(t.degree(1), 2u);
  const Topology again = Topology::parse_adjacency_list(t.to_adjacency_list());
  for (std::size_t d = 0; d < 3; ++d) EXPECT_EQ(again.neighbors(d), t.neighbors(d));
}

TEST(Adjacency, RejectsInvalidGraphs) {
  EXPECT_THROW(Topology::parse_adjacency_list("0: 1\n1:\n"), ConfigError);                // asymmetric
  EXPECT_THROW(Topology::parse_adjacency_list("0: 0\n"), ConfigError);                    // self loop
  EXPECT_THROW(Topology::parse_adjacency_list("0: 1\n1: 0\n2: 3\n3: 2\n"), ConfigError);  // disconnected
  EXPECT_THROW(Topology::parse_adjacency_list("0: 1,1\n1: 0\n"), ConfigError);            // duplicate
  EXPECT_THROW(Topology::parse_adjacency_list("0: x\n"), ConfigError);
}

TEST(Psi, DefaultAndConstant) {
  EXPECT_EQ(psi(0), 0.5);
  EXPECT_EQ(psi(1), 0.25);
  for (std::uint64_t d = 0; d < 50; ++d) {
    EXPECT_GT(psi(d), 0.0);
    EXPECT_GE(psi(d), psi(d + 1));
  }
  PsiConfig constant;
  constant.kind = PsiConfig::Kind::kConstant;
  constant.value = 0.7;
  EXPECT_EQ(psi(0, constant), psi(99, constant));
}

TEST(MixingMatrix, LineGraphWorkedExample) {
  // Servers 1-2-3 are indices 0-1-2; trigger is the middle one.
  const Topology line = Topology::parse_adjacency_list("0: 1\n1: 0,2\n2: 1\n");
  const StalenessVector s{{1, 2, 0}, 2};  // delta = (1, 0, 2)
  const MixingMatrix p = build_mixing_matrix(1, line, s);
  EXPECT_DOUBLE_EQ(p(0, 1), 3.0 / 11.0);
  EXPECT_DOUBLE_EQ(p(1, 1), 6.0 / 11.0);
  EXPECT_DOUBLE_EQ(p(2, 1), 2.0 / 11.0);
  EXPECT_DOUBLE_EQ(p(1, 0), 3.0 / 11.0);
  EXPECT_DOUBLE_EQ(p(0, 0), 8.0 / 11.0);
  EXPECT_DOUBLE_EQ(p(1, 2), 2.0 / 11.0);
  EXPECT_DOUBLE_EQ(p(2, 2), 9.0 / 11.0);
  EXPECT_EQ(p(0, 2), 0.0);
  EXPECT_EQ(p(2, 0), 0.0);
}

TEST(MixingMatrix, ZeroStalenessGivesUniformColumn) {
  const Topology ring = build_ring(6);
  const StalenessVector s{std::vector<std::uint64_t>(6, 4), 4};
  const MixingMatrix p = build_mixing_matrix(3, ring, s);
  EXPECT_DOUBLE_EQ(p(2, 3), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(p(3, 3), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(p(4, 3), 1.0 / 3.0);
}

TEST(MixingMatrix, TwoServersGiveAllHalves) {
  const MixingMatrix p = build_mixing_matrix(0, build_ring(2), StalenessVector{{0, 0}, 0});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(p(i, j), 0.5);
}

TEST(MixingMatrix, RandomDrawsAreSymmetricStochasticWithIdentityBlock) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 2 + rng() % 9;
    const Topology topo = random_topology(d, rng);
    const std::size_t trigger = rng() % d;
    const MixingMatrix p = build_mixing_matrix(trigger, topo, random_staleness(d, rng));
    EXPECT_LE(max_abs_asymmetry(p), 1e-12);
    for (std::size_t j = 0; j < d; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        EXPECT_GE(p(i, j), 0.0);
        col += p(i, j);
      }
      EXPECT_NEAR(col, 1.0, 1e-12);
      const bool touched = j == trigger || topo.connected(j, trigger);
      if (!touched)
        for (std::size_t i = 0; i < d; ++i) EXPECT_EQ(p(i, j), i == j ? 1.0 : 0.0);
    }
  }
}

TEST(MixingMatrix, WeightNonIncreasingInNeighbourStaleness) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 2 + rng() % 7;
    const Topology topo = random_topology(d, rng);
    const std::size_t trigger = rng() % d;
    if (topo.degree(trigger) == 0) continue;
    const std::size_t j = topo.neighbors(trigger)[rng() % topo.degree(trigger)];
    StalenessVector s = random_staleness(d, rng);
    s.current_k = 40;
    const double before = build_mixing_matrix(trigger, topo, s)(j, trigger);
    if (s.last_broadcast[j] == 0) continue;
    s.last_broadcast[j] -= 1;  // one more iteration of staleness
    EXPECT_LE(build_mixing_matrix(trigger, topo, s)(j, trigger), before);
  }
}

TEST(MixingMatrix, ProductsStayColumnStochastic) {
  std::mt19937_64 rng(8);
  const Topology topo = build_ring(7);
  DenseMatrix prod = DenseMatrix::identity(7);
  for (int step = 0; step < 200; ++step) {
    prod = prod * build_mixing_matrix(rng() % 7, topo, random_staleness(7, rng));
    EXPECT_NO_THROW(require_column_stochastic(prod, 1e-10));
  }
}

TEST(MixingMatrix, ConstantPsiIgnoresStaleness) {
  PsiConfig constant;
  constant.kind = PsiConfig::Kind::kConstant;
  const Topology ring = build_ring(5);
  const MixingMatrix a = build_mixing_matrix(2, ring, StalenessVector{{0, 9, 9, 3, 1}, 9}, constant);
  const MixingMatrix b = build_mixing_matrix(2, ring, StalenessVector{{9, 9, 9, 9, 9}, 9}, constant);
  EXPECT_EQ(a, b);
}

TEST(UniformNeighbor, RegularAndIrregularGraphs) {
  const MixingMatrix ring = uniform_neighbor_matrix(build_ring(6));
  EXPECT_DOUBLE_EQ(ring(0, 0), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(ring(1, 0), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(ring(5, 0), 1.0 / 3.0);
  // Star: doubly stochastic and symmetric despite unequal degrees.
  const Topology star = Topology::parse_adjacency_list("0: 1,2,3\n1: 0\n2: 0\n3: 0\n");
  const MixingMatrix p = uniform_neighbor_matrix(star);
  EXPECT_EQ(max_abs_asymmetry(p), 0.0);
  EXPECT_NO_THROW(require_column_stochastic(p, 1e-12));
}

TEST(SpectralGap, TrivialCases) {
  EXPECT_EQ(second_eigenvalue_modulus(DenseMatrix::identity(4)), 1.0);
  DenseMatrix half(2, 2, 0.5);
  EXPECT_NEAR(second_eigenvalue_modulus(half), 0.0, 1e-15);
  EXPECT_EQ(second_eigenvalue_modulus(DenseMatrix::identity(1)), 0.0);
}

TEST(SpectralGap, RingMatchesDenseEigensolver) {
  for (std::size_t d : {3u, 4u, 6u, 10u}) {
    const MixingMatrix p = uniform_neighbor_matrix(build_ring(d));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(to_eigen(p));
    std::vector<double> mags;
    for (int i = 0; i < eig.eigenvalues().size(); ++i) mags.push_back(std::abs(eig.eigenvalues()(i)));
    std::sort(mags.rbegin(), mags.rend());
    const double rho = second_eigenvalue_modulus(p);
    EXPECT_NEAR(rho, mags[1], 1e-8) << "D=" << d;
    if (d > 3) {
      EXPECT_GT(rho, 0.0);
      EXPECT_LT(rho, 1.0);
    }
  }
}

TEST(SpectralGap, RejectsNonStochastic) {
  DenseMatrix m = DenseMatrix::identity(3);
  m(0, 0) = 2.0;
  EXPECT_THROW(second_eigenvalue_modulus(m), ValidationError);
  DenseMatrix neg(2, 2, 0.5);
  neg(0, 0) = 1.5;
  neg(1, 0) = -0.5;
  EXPECT_THROW(require_column_stochastic(neg), ValidationError);
}

TEST(SpectralGap, ProductDeviationSumsAreBounded) {
  for (std::size_t d : {4u, 5u, 6u}) {
    const MixingMatrix p = uniform_neighbor_matrix(build_ring(d));
    const double rho = second_eigenvalue_modulus(p);
    for (std::size_t k = 1; k <= 30; ++k) {
      double sum = 0.0;
      for (std::size_t s = 0; s < k; ++s) {
        const std::vector<MixingMatrix> seq(k - s, p);
        const double dev = product_deviation_norm(seq);
        EXPECT_NEAR(dev, std::pow(rho, static_cast<double>(k - s)), 1e-10);
        sum += dev;
      }
      EXPECT_LE(sum, 1.0 / (1.0 - rho) + 1e-12);
    }
  }
}

TEST(Staleness, DeltaAndMax) {
  const StalenessVector s{{3, 7, 10}, 10};
  EXPECT_EQ(s.delta(0), 7u);
  EXPECT_EQ(s.delta(2), 0u);
  EXPECT_EQ(s.max_delta(), 7u);
}

}  // namespace
}  // namespace sdfeel
