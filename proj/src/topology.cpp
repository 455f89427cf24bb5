#include "sdfeel/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>

#include "sdfeel/errors.hpp"

namespace sdfeel {

Topology Topology::from_adjacency(std::vector<std::vector<std::size_t>> neighbors) {
  const std::size_t n = neighbors.size();
  if (n == 0) throw ConfigError("topology needs at least one server");
  for (std::size_t d = 0; d < n; ++d) {
    auto& list = neighbors[d];
    std::sort(list.begin(), list.end());
    if (std::adjacent_find(list.begin(), list.end()) != list.end())
      throw ConfigError("server " + std::to_string(d) + " lists a neighbour twice");
    for (std::size_t j : list) {
      if (j >= n) throw ConfigError("server " + std::to_string(d) + " lists unknown neighbour " + std::to_string(j));
      if (j == d) throw ConfigError("server " + std::to_string(d) + " lists itself as a neighbour");
    }
  }
  for (std::size_t d = 0; d < n; ++d)
    for (std::size_t j : neighbors[d])
      if (!std::binary_search(neighbors[j].begin(), neighbors[j].end(), d))
        throw ConfigError("adjacency is not symmetric between servers " + std::to_string(d) + " and " +
                          std::to_string(j));

  std::vector<bool> seen(n, false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const std::size_t d = stack.back();
    stack.pop_back();
    for (std::size_t j : neighbors[d])
      if (!seen[j]) {
        seen[j] = true;
        ++reached;
        stack.push_back(j);
      }
  }
  if (reached != n) throw ConfigError("topology is not connected");
  return Topology(std::move(neighbors));
}

Topology Topology::parse_adjacency_list(std::string_view text) {
  std::vector<std::vector<std::size_t>> neighbors;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos)
      throw ConfigError("adjacency line " + std::to_string(line_no) + ": expected `d: j1,j2,...`");
    std::size_t d = 0;
    try {
      d = std::stoul(line.substr(0, colon));
    } catch (const std::exception&) {
      throw ConfigError("adjacency line " + std::to_string(line_no) + ": bad server index");
    }
    if (d != neighbors.size())
      throw ConfigError("adjacency line " + std::to_string(line_no) + ": servers must be listed in order 0..D-1");
    std::vector<std::size_t> list;
    std::istringstream items(line.substr(colon + 1));
    std::string item;
    while (std::getline(items, item, ',')) {
      if (item.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        list.push_back(std::stoul(item));
      } catch (const std::exception&) {
        throw ConfigError("adjacency line " + std::to_string(line_no) + ": bad neighbour '" + item + "'");
      }
    }
    neighbors.push_back(std::move(list));
  }
  return from_adjacency(std::move(neighbors));
}

bool Topology::connected(std::size_t a, std::size_t b) const {
  const auto& list = neighbors_[a];
  return std::binary_search(list.begin(), list.end(), b);
}

std::string Topology::to_adjacency_list() const {
  std::ostringstream out;
  for (std::size_t d = 0; d < neighbors_.size(); ++d) {
    out << d << ':';
    for (std::size_t k = 0; k < neighbors_[d].size(); ++k) out << (k ? "," : " ") << neighbors_[d][k];
    out << '\n';
  }
  return out.str();
}

Topology build_ring(std::size_t num_servers) {
  if (num_servers < 2) throw ConfigError("ring topology needs at least 2 servers");
  std::vector<std::vector<std::size_t>> neighbors(num_servers);
  for (std::size_t d = 0; d < num_servers; ++d) {
    const std::size_t next = (d + 1) % num_servers;
    const std::size_t prev = (d + num_servers - 1) % num_servers;
    neighbors[d].push_back(next);
    if (prev != next) neighbors[d].push_back(prev);
  }
  return Topology::from_adjacency(std::move(neighbors));
}

Topology single_server() { return Topology::from_adjacency({{}}); }

std::uint64_t StalenessVector::delta(std::size_t j) const {
  if (last_broadcast[j] > current_k) throw InvariantError("last broadcast lies in the future");
  return current_k - last_broadcast[j];
}

std::uint64_t StalenessVector::max_delta() const {
  std::uint64_t worst = 0;
  for (std::size_t j = 0; j < last_broadcast.size(); ++j) worst = std::max(worst, delta(j));
  return worst;
}

void PsiConfig::validate() const {
  if (kind == Kind::kInverse && !(scale > 0.0 && std::isfinite(scale))) throw ConfigError("psi.scale must be > 0");
  if (kind == Kind::kConstant && !(value > 0.0 && std::isfinite(value))) throw ConfigError("psi.value must be > 0");
}

double psi(std::uint64_t delta, const PsiConfig& config) {
  if (config.kind == PsiConfig::Kind::kConstant) return config.value;
  return config.scale / (static_cast<double>(delta) + 1.0);
}

namespace {

// Both psi kinds are proportional to 1 / (delta + 1) or to 1, so the column
// weights are ratios of integers n_i = lcm / (delta_i + 1). Dividing exact
// integers gives correctly rounded weights. Empty when the lcm gets too large.
std::optional<std::vector<double>> integer_weights(std::span<const std::uint64_t> deltas, bool constant) {
  constexpr std::uint64_t kExact = std::uint64_t{1} << 53;
  std::uint64_t l = 1;
  if (!constant)
    for (std::uint64_t d : deltas) {
      if (d >= kExact) return std::nullopt;
      l = std::lcm(l, d + 1);
      if (l > kExact / (deltas.size() + 1)) return std::nullopt;
    }
  std::uint64_t total = 0;
  std::vector<std::uint64_t> n;
  for (std::uint64_t d : deltas) {
    n.push_back(constant ? 1 : l / (d + 1));
    total += n.back();
  }
  std::vector<double> w;
  for (std::uint64_t v : n) w.push_back(static_cast<double>(v) / static_cast<double>(total));
  return w;
}

}  // namespace

MixingMatrix build_mixing_matrix(std::size_t trigger, const Topology& topology, const StalenessVector& staleness,
                                 const PsiConfig& psi_config) {
  const std::size_t n = topology.size();
  if (trigger >= n) throw ConfigError("trigger cluster out of range");
  if (staleness.last_broadcast.size() != n) throw DimensionError("staleness vector does not match topology");

  MixingMatrix p = MixingMatrix::identity(n);
  const auto& hood = topology.neighbors(trigger);
  std::vector<std::uint64_t> deltas{staleness.delta(trigger)};
  for (std::size_t j : hood) deltas.push_back(staleness.delta(j));

  std::vector<double> w;
  if (auto exact = integer_weights(deltas, psi_config.kind == PsiConfig::Kind::kConstant)) {
    w = std::move(*exact);
  } else {
    double total = 0.0;
    for (std::uint64_t d : deltas) total += psi(d, psi_config);
    for (std::uint64_t d : deltas) w.push_back(psi(d, psi_config) / total);
  }

  p(trigger, trigger) = w[0];
  for (std::size_t k = 0; k < hood.size(); ++k) {
    const std::size_t j = hood[k];
    p(j, trigger) = w[k + 1];
    p(trigger, j) = w[k + 1];
    p(j, j) = 1.0 - w[k + 1];
  }
  return p;
}

MixingMatrix uniform_neighbor_matrix(const Topology& topology) {
  const std::size_t n = topology.size();
  MixingMatrix p(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double off = 0.0;
    for (std::size_t j : topology.neighbors(i)) {
      const double w = 1.0 / (1.0 + static_cast<double>(std::max(topology.degree(i), topology.degree(j))));
      p(j, i) = w;
      off += w;
    }
    p(i, i) = 1.0 - off;
  }
  return p;
}

void require_column_stochastic(const MixingMatrix& p, double tol) {
  if (p.rows() != p.cols()) throw ValidationError("mixing matrix must be square");
  for (std::size_t j = 0; j < p.cols(); ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) {
      if (p(i, j) < -tol) throw ValidationError("mixing matrix has a negative entry");
      sum += p(i, j);
    }
    if (std::abs(sum - 1.0) > tol)
      throw ValidationError("mixing matrix column " + std::to_string(j) + " sums to " + std::to_string(sum));
  }
}

double second_eigenvalue_modulus(const MixingMatrix& p) {
  require_column_stochastic(p);
  if (max_abs_asymmetry(p) > 1e-10) throw ValidationError("mixing matrix is not symmetric");
  if (p.rows() < 2) return 0.0;
  auto eig = symmetric_eigenvalues(p);
  for (double& v : eig) v = std::abs(v);
  std::sort(eig.begin(), eig.end(), std::greater<>());
  return eig[1];
}

double product_deviation_norm(std::span<const MixingMatrix> sequence) {
  if (sequence.empty()) throw ValidationError("empty mixing-matrix sequence");
  const std::size_t n = sequence.front().rows();
  MixingMatrix product = MixingMatrix::identity(n);
  for (const auto& p : sequence) {
    require_column_stochastic(p);
    product = product * p;
  }
  return operator_norm(product - MixingMatrix(n, n, 1.0 / static_cast<double>(n)));
}

}  // namespace sdfeel
