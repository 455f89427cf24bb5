#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sdfeel/linalg.hpp"

namespace sdfeel {

// Undirected, connected edge-server graph without self loops.
class Topology {
 public:
  // Validates symmetry, absence of self loops and duplicates, and connectivity.
  static Topology from_adjacency(std::vector<std::vector<std::size_t>> neighbors);

  // Parses one `d: j1,j2,...` line per server; blank lines and `#` comments
  // are ignored. Servers must be listed as 0..D-1.
  static Topology parse_adjacency_list(std::string_view text);

  std::size_t size() const { return neighbors_.size(); }
  const std::vector<std::size_t>& neighbors(std::size_t d) const { return neighbors_[d]; }
  std::size_t degree(std::size_t d) const { return neighbors_[d].size(); }
  bool connected(std::size_t a, std::size_t b) const;

  std::string to_adjacency_list() const;

 private:
  explicit Topology(std::vector<std::vector<std::size_t>> neighbors) : neighbors_(std::move(neighbors)) {}

  std::vector<std::vector<std::size_t>> neighbors_;
};

// Ring over D >= 2 servers (D == 2 is a single edge).
Topology build_ring(std::size_t num_servers);

// A lone server with no neighbours.
Topology single_server();

// delta_k^(j) = current_k - last_broadcast[j].
struct StalenessVector {
  std::vector<std::uint64_t> last_broadcast;
  std::uint64_t current_k = 0;

  std::uint64_t delta(std::size_t j) const;
  std::uint64_t max_delta() const;
};

struct PsiConfig {
  enum class Kind { kInverse, kConstant };
  Kind kind = Kind::kInverse;
  // kInverse: scale / (delta + 1). The default 0.5 gives 1 / (2 (delta + 1)).
  double scale = 0.5;
  // kConstant: psi == value regardless of staleness.
  double value = 1.0;

  void validate() const;
};

double psi(std::uint64_t delta, const PsiConfig& config = {});

using MixingMatrix = DenseMatrix;

// Staleness-aware mixing matrix for an aggregation triggered by `trigger`.
// Column `trigger` holds psi(delta^(i)) / Psi over i in N_d + {d}; every
// neighbour j gets p[d][j] = p[j][d] and p[j][j] = 1 - p[d][j]; all other
// servers keep an identity row/column. Models mix as y_j <- sum_i p[i][j] y_i.
MixingMatrix build_mixing_matrix(std::size_t trigger, const Topology& topology, const StalenessVector& staleness,
                                 const PsiConfig& psi_config = {});

// Constant symmetric doubly stochastic matrix with Metropolis weights
// 1 / (1 + max(deg_i, deg_j)). On regular graphs every server averages
// itself and its neighbours uniformly.
MixingMatrix uniform_neighbor_matrix(const Topology& topology);

// Throws ValidationError unless `p` is square, nonnegative and its columns
// sum to one within `tol`.
void require_column_stochastic(const MixingMatrix& p, double tol = 1e-10);

// Second-largest eigenvalue modulus of a symmetric column-stochastic matrix.
// Returns 0 for a 1x1 matrix.
double second_eigenvalue_modulus(const MixingMatrix& p);

// || P_first * ... * P_last - (1/D) 1 1^T ||_op over a sequence of mixing
// matrices, in application order.
double product_deviation_norm(std::span<const MixingMatrix> sequence);

}  // namespace sdfeel
