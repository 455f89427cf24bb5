#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sdfeel/event_sim.hpp"
#include "sdfeel/metrics.hpp"
#include "sdfeel/model_math.hpp"
#include "sdfeel/topology.hpp"
#include "sdfeel/training.hpp"

namespace sdfeel {

enum class RunMode { kAsync, kSync, kBoth };
std::string_view to_string(RunMode mode);
RunMode parse_run_mode(std::string_view text);

enum class PartitionKind { kDirichlet, kUniform };

// Flat `section.key = value` configuration. Every field is validated by
// parse_config / validate_config before anything runs.
struct ExperimentConfig {
  std::string run_id = "run";
  RunMode mode = RunMode::kAsync;
  std::uint64_t seed = 1;

  std::string topology_kind = "ring";  // ring | adjacency
  std::filesystem::path adjacency_file;
  std::size_t num_clusters = 0;
  std::size_t clients_per_cluster = 5;

  // Explicit speeds (FLOPS, one per client) or a geometric spread
  // min_speed .. heterogeneity_gap * min_speed assigned round-robin.
  std::vector<double> client_speeds;
  double heterogeneity_gap = 1.0;
  double min_speed = 1e9;

  // Per-cluster T_comp in seconds (one value applies to all), or the rule
  // "slowest client of the cluster completes min_batches steps".
  std::vector<double> deadlines;
  std::size_t min_batches = 100;

  std::optional<double> beta;  // absent: beta_d = T_comp^(d) / flops_per_epoch
  double eta = 0.001;
  std::size_t batch_size = 10;
  IntraBase intra_base = IntraBase::kCurrent;

  TaskSpec task;
  std::size_t num_samples = 3000;
  std::size_t test_samples = 0;
  std::size_t data_classes = 0;  // 0: task.num_classes for logistic, 10 for quadratic
  double alpha = 0.5;
  double noise = 0.1;
  PartitionKind partition = PartitionKind::kDirichlet;
  double init_scale = 0.1;

  LatencyParams latency;
  bool model_bits_auto = true;  // 32 * M
  PsiConfig psi;
  StopCriteria stop;
  std::size_t consensus_max_rounds = 200;
  double consensus_tol = 1e-6;

  std::filesystem::path output_dir = "out";
  TraceFormat trace_format = TraceFormat::kCsv;

  std::filesystem::path base_dir;  // resolves relative paths in the file
};

// Parses `key = value` lines; `#` starts a comment. Throws ConfigError naming
// the offending key for unknown, duplicate, missing or invalid entries.
ExperimentConfig parse_config_text(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig parse_config(const std::filesystem::path& path);

// Checks cross-field constraints and fills derived defaults.
void validate_config(ExperimentConfig& config);

// Every key with its resolved value, in a stable order. Parsing the rendered
// text yields an equivalent configuration.
std::string render_config(const ExperimentConfig& config);

// Geometric spread h_s = min_speed * H^(s / (C - 1)), s = 0 .. C-1.
std::vector<double> geometric_speeds(std::size_t num_clients, double min_speed, double heterogeneity_gap);

}  // namespace sdfeel
