#include "sdfeel/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "sdfeel/errors.hpp"

namespace sdfeel {

std::string_view to_string(RunMode mode) {
  switch (mode) {
    case RunMode::kAsync:
      return "async";
    case RunMode::kSync:
      return "sync";
    case RunMode::kBoth:
      return "both";
  }
  return "async";
}

RunMode parse_run_mode(std::string_view text) {
  if (text == "async") return RunMode::kAsync;
  if (text == "sync") return RunMode::kSync;
  if (text == "both") return RunMode::kBoth;
  throw ConfigError("mode: expected async|sync|both, got '" + std::string(text) + "'");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size() || !std::isfinite(v))
    throw ConfigError(key + ": expected a finite number, got '" + value + "'");
  return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
  return v;
}

std::vector<double> to_double_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list of numbers");
  return out;
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_list(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_number(values[i]);
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"run_id",
       [](auto& c, auto& k, auto& v) {
         if (v.empty() || v.find_first_of("/\\ ") != std::string::npos) throw ConfigError(k + ": must be a plain name");
         c.run_id = v;
       }},
      {"mode", [](auto& c, auto&, auto& v) { c.mode = parse_run_mode(v); }},
      {"seed", [](auto& c, auto& k, auto& v) { c.seed = to_uint(k, v); }},
      {"topology.kind",
       [](auto& c, auto& k, auto& v) {
         if (v != "ring" && v != "adjacency") throw ConfigError(k + ": expected ring|adjacency");
         c.topology_kind = v;
       }},
      {"topology.adjacency_file", [](auto& c, auto&, auto& v) { c.adjacency_file = v; }},
      {"clusters.count", [](auto& c, auto& k, auto& v) { c.num_clusters = to_uint(k, v); }},
      {"clusters.clients_per_cluster", [](auto& c, auto& k, auto& v) { c.clients_per_cluster = to_uint(k, v); }},
      {"clusters.deadline_s", [](auto& c, auto& k, auto& v) { c.deadlines = to_double_list(k, v); }},
      {"clusters.min_batches", [](auto& c, auto& k, auto& v) { c.min_batches = to_uint(k, v); }},
      {"clients.speeds", [](auto& c, auto& k, auto& v) { c.client_speeds = to_double_list(k, v); }},
      {"clients.heterogeneity_gap", [](auto& c, auto& k, auto& v) { c.heterogeneity_gap = to_double(k, v); }},
      {"clients.min_speed", [](auto& c, auto& k, auto& v) { c.min_speed = to_double(k, v); }},
      {"train.beta", [](auto& c, auto& k, auto& v) { c.beta = to_double(k, v); }},
      {"train.eta", [](auto& c, auto& k, auto& v) { c.eta = to_double(k, v); }},
      {"train.batch_size", [](auto& c, auto& k, auto& v) { c.batch_size = to_uint(k, v); }},
      {"train.intra_base",
       [](auto& c, auto& k, auto& v) {
         if (v == "current")
           c.intra_base = IntraBase::kCurrent;
         else if (v == "broadcast")
           c.intra_base = IntraBase::kBroadcast;
         else
           throw ConfigError(k + ": expected current|broadcast");
       }},
      {"train.init_scale", [](auto& c, auto& k, auto& v) { c.init_scale = to_double(k, v); }},
      {"task.kind",
       [](auto& c, auto& k, auto& v) {
         try {
           c.task.kind = parse_task_kind(v);
         } catch (const ConfigError& e) {
           throw ConfigError(k + ": " + e.what());
         }
       }},
      {"task.feature_dim", [](auto& c, auto& k, auto& v) { c.task.feature_dim = to_uint(k, v); }},
      {"task.num_classes", [](auto& c, auto& k, auto& v) { c.task.num_classes = to_uint(k, v); }},
      {"task.regularization", [](auto& c, auto& k, auto& v) { c.task.regularization = to_double(k, v); }},
      {"data.num_samples", [](auto& c, auto& k, auto& v) { c.num_samples = to_uint(k, v); }},
      {"data.test_samples", [](auto& c, auto& k, auto& v) { c.test_samples = to_uint(k, v); }},
      {"data.num_classes", [](auto& c, auto& k, auto& v) { c.data_classes = to_uint(k, v); }},
      {"data.alpha", [](auto& c, auto& k, auto& v) { c.alpha = to_double(k, v); }},
      {"data.noise", [](auto& c, auto& k, auto& v) { c.noise = to_double(k, v); }},
      {"data.partition",
       [](auto& c, auto& k, auto& v) {
         if (v == "dirichlet")
           c.partition = PartitionKind::kDirichlet;
         else if (v == "uniform")
           c.partition = PartitionKind::kUniform;
         else
           throw ConfigError(k + ": expected dirichlet|uniform");
       }},
      {"latency.model_bits",
       [](auto& c, auto& k, auto& v) {
         if (v == "auto") {
           c.model_bits_auto = true;
         } else {
           c.model_bits_auto = false;
           c.latency.model_bits = to_double(k, v);
         }
       }},
      {"latency.rate_client_server_bps",
       [](auto& c, auto& k, auto& v) { c.latency.rate_client_server = to_double(k, v); }},
      {"latency.rate_server_server_bps",
       [](auto& c, auto& k, auto& v) { c.latency.rate_server_server = to_double(k, v); }},
      {"latency.flops_per_epoch", [](auto& c, auto& k, auto& v) { c.latency.flops_per_epoch = to_double(k, v); }},
      {"latency.jitter", [](auto& c, auto& k, auto& v) { c.latency.jitter = to_double(k, v); }},
      {"psi.kind",
       [](auto& c, auto& k, auto& v) {
         if (v == "inverse")
           c.psi.kind = PsiConfig::Kind::kInverse;
         else if (v == "constant")
           c.psi.kind = PsiConfig::Kind::kConstant;
         else
           throw ConfigError(k + ": expected inverse|constant");
       }},
      {"psi.scale", [](auto& c, auto& k, auto& v) { c.psi.scale = to_double(k, v); }},
      {"psi.value", [](auto& c, auto& k, auto& v) { c.psi.value = to_double(k, v); }},
      {"stop.max_sim_time_s", [](auto& c, auto& k, auto& v) { c.stop.max_sim_time_s = to_double(k, v); }},
      {"stop.max_global_iters", [](auto& c, auto& k, auto& v) { c.stop.max_global_iters = to_uint(k, v); }},
      {"stop.target_loss", [](auto& c, auto& k, auto& v) { c.stop.target_loss = to_double(k, v); }},
      {"consensus.max_rounds", [](auto& c, auto& k, auto& v) { c.consensus_max_rounds = to_uint(k, v); }},
      {"consensus.tol", [](auto& c, auto& k, auto& v) { c.consensus_tol = to_double(k, v); }},
      {"output.dir", [](auto& c, auto&, auto& v) { c.output_dir = v; }},
      {"output.format",
       [](auto& c, auto& k, auto& v) {
         if (v == "csv")
           c.trace_format = TraceFormat::kCsv;
         else if (v == "jsonl")
           c.trace_format = TraceFormat::kJsonl;
         else
           throw ConfigError(k + ": expected csv|jsonl");
       }},
  };
  return table;
}

const std::set<std::string> kRequired = {"task.kind", "clusters.count"};

void require(bool ok, const std::string& key, const std::string& constraint) {
  if (!ok) throw ConfigError(key + ": " + constraint);
}

}  // namespace

ExperimentConfig parse_config_text(std::string_view text, const std::filesystem::path& base_dir) {
  ExperimentConfig config;
  config.base_dir = base_dir;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected `key = value`");
    const std::string key = trim(std::string_view(stripped).substr(0, eq));
    const std::string value = trim(std::string_view(stripped).substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(key + ": unknown key (line " + std::to_string(line_no) + ")");
    if (!seen.insert(key).second) throw ConfigError(key + ": duplicate key (line " + std::to_string(line_no) + ")");
    it->second(config, key, value);
  }
  for (const auto& key : kRequired)
    if (!seen.count(key)) throw ConfigError(key + ": missing required key");
  validate_config(config);
  return config;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot read config file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.parent_path());
}

void validate_config(ExperimentConfig& c) {
  require(c.num_clusters >= 1, "clusters.count", "must be >= 1");
  require(c.clients_per_cluster >= 1, "clusters.clients_per_cluster", "must be >= 1");
  const std::size_t num_clients = c.num_clusters * c.clients_per_cluster;
  if (c.topology_kind == "adjacency")
    require(!c.adjacency_file.empty(), "topology.adjacency_file", "required when topology.kind = adjacency");

  if (!c.client_speeds.empty()) {
    require(c.client_speeds.size() == num_clients, "clients.speeds",
            "needs one speed per client (" + std::to_string(num_clients) + ")");
    for (double h : c.client_speeds) require(h > 0.0, "clients.speeds", "every speed must be > 0");
  }
  require(c.heterogeneity_gap >= 1.0, "clients.heterogeneity_gap", "must be >= 1");
  require(c.min_speed > 0.0, "clients.min_speed", "must be > 0");

  if (!c.deadlines.empty()) {
    require(c.deadlines.size() == 1 || c.deadlines.size() == c.num_clusters, "clusters.deadline_s",
            "needs one value or one per cluster");
    for (double t : c.deadlines) require(t > 0.0, "clusters.deadline_s", "T_comp must be > 0");
  }
  require(c.min_batches >= 1, "clusters.min_batches", "must be >= 1");
  if (c.beta) require(*c.beta > 0.0, "train.beta", "must be > 0");
  require(c.eta > 0.0, "train.eta", "must be > 0");
  require(c.batch_size >= 1, "train.batch_size", "must be >= 1");
  require(c.init_scale >= 0.0, "train.init_scale", "must be >= 0");

  require(c.task.feature_dim >= 1, "task.feature_dim", "must be >= 1");
  if (c.task.kind == TaskKind::kLogistic) require(c.task.num_classes >= 2, "task.num_classes", "must be >= 2");
  require(c.task.regularization >= 0.0, "task.regularization", "must be >= 0");

  if (c.data_classes == 0) c.data_classes = c.task.kind == TaskKind::kLogistic ? c.task.num_classes : 10;
  if (c.task.kind == TaskKind::kLogistic)
    require(c.data_classes == c.task.num_classes, "data.num_classes", "must equal task.num_classes for logistic");
  require(c.alpha > 0.0, "data.alpha", "Dirichlet concentration must be > 0");
  require(c.noise >= 0.0, "data.noise", "must be >= 0");
  require(c.num_samples >= c.data_classes, "data.num_samples", "must be >= data.num_classes");
  if (c.partition == PartitionKind::kDirichlet)
    require(c.num_samples >= num_clients * c.data_classes, "data.num_samples",
            "Dirichlet partition needs at least one sample per class per client");
  require(c.num_samples >= num_clients * c.batch_size, "data.num_samples",
          "too small for every client to hold a mini-batch on average");

  if (c.model_bits_auto) c.latency.model_bits = 32.0 * static_cast<double>(c.task.parameter_count());
  require(c.latency.model_bits > 0.0, "latency.model_bits", "must be > 0");
  require(c.latency.rate_client_server > 0.0, "latency.rate_client_server_bps", "must be > 0");
  require(c.latency.rate_server_server > 0.0, "latency.rate_server_server_bps", "must be > 0");
  require(c.latency.flops_per_epoch > 0.0, "latency.flops_per_epoch", "must be > 0");
  require(c.latency.jitter >= 0.0 && c.latency.jitter < 1.0, "latency.jitter", "must be in [0, 1)");

  if (c.psi.kind == PsiConfig::Kind::kInverse)
    require(c.psi.scale > 0.0, "psi.scale", "must be > 0");
  else
    require(c.psi.value > 0.0, "psi.value", "must be > 0");

  require(c.stop.any(), "stop", "set at least one of stop.max_sim_time_s, stop.max_global_iters, stop.target_loss");
  if (c.stop.max_sim_time_s) require(*c.stop.max_sim_time_s >= 0.0, "stop.max_sim_time_s", "must be >= 0");
  require(c.consensus_tol > 0.0, "consensus.tol", "must be > 0");
}

std::string render_config(const ExperimentConfig& c) {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("run_id", c.run_id);
  kv.emplace_back("mode", std::string(to_string(c.mode)));
  kv.emplace_back("seed", std::to_string(c.seed));
  kv.emplace_back("topology.kind", c.topology_kind);
  if (!c.adjacency_file.empty()) kv.emplace_back("topology.adjacency_file", c.adjacency_file.string());
  kv.emplace_back("clusters.count", std::to_string(c.num_clusters));
  kv.emplace_back("clusters.clients_per_cluster", std::to_string(c.clients_per_cluster));
  if (!c.deadlines.empty()) kv.emplace_back("clusters.deadline_s", format_list(c.deadlines));
  kv.emplace_back("clusters.min_batches", std::to_string(c.min_batches));
  if (!c.client_speeds.empty()) kv.emplace_back("clients.speeds", format_list(c.client_speeds));
  kv.emplace_back("clients.heterogeneity_gap", format_number(c.heterogeneity_gap));
  kv.emplace_back("clients.min_speed", format_number(c.min_speed));
  if (c.beta) kv.emplace_back("train.beta", format_number(*c.beta));
  kv.emplace_back("train.eta", format_number(c.eta));
  kv.emplace_back("train.batch_size", std::to_string(c.batch_size));
  kv.emplace_back("train.intra_base", c.intra_base == IntraBase::kCurrent ? "current" : "broadcast");
  kv.emplace_back("train.init_scale", format_number(c.init_scale));
  kv.emplace_back("task.kind", std::string(to_string(c.task.kind)));
  kv.emplace_back("task.feature_dim", std::to_string(c.task.feature_dim));
  kv.emplace_back("task.num_classes", std::to_string(c.task.num_classes));
  kv.emplace_back("task.regularization", format_number(c.task.regularization));
  kv.emplace_back("data.num_samples", std::to_string(c.num_samples));
  kv.emplace_back("data.test_samples", std::to_string(c.test_samples));
  kv.emplace_back("data.num_classes", std::to_string(c.data_classes));
  kv.emplace_back("data.alpha", format_number(c.alpha));
  kv.emplace_back("data.noise", format_number(c.noise));
  kv.emplace_back("data.partition", c.partition == PartitionKind::kDirichlet ? "dirichlet" : "uniform");
  kv.emplace_back("latency.model_bits", c.model_bits_auto ? "auto" : format_number(c.latency.model_bits));
  kv.emplace_back("latency.rate_client_server_bps", format_number(c.latency.rate_client_server));
  kv.emplace_back("latency.rate_server_server_bps", format_number(c.latency.rate_server_server));
  kv.emplace_back("latency.flops_per_epoch", format_number(c.latency.flops_per_epoch));
  kv.emplace_back("latency.jitter", format_number(c.latency.jitter));
  kv.emplace_back("psi.kind", c.psi.kind == PsiConfig::Kind::kInverse ? "inverse" : "constant");
  kv.emplace_back("psi.scale", format_number(c.psi.scale));
  kv.emplace_back("psi.value", format_number(c.psi.value));
  if (c.stop.max_sim_time_s) kv.emplace_back("stop.max_sim_time_s", format_number(*c.stop.max_sim_time_s));
  if (c.stop.max_global_iters) kv.emplace_back("stop.max_global_iters", std::to_string(*c.stop.max_global_iters));
  if (c.stop.target_loss) kv.emplace_back("stop.target_loss", format_number(*c.stop.target_loss));
  kv.emplace_back("consensus.max_rounds", std::to_string(c.consensus_max_rounds));
  kv.emplace_back("consensus.tol", format_number(c.consensus_tol));
  kv.emplace_back("output.dir", c.output_dir.string());
  kv.emplace_back("output.format", c.trace_format == TraceFormat::kCsv ? "csv" : "jsonl");

  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

std::vector<double> geometric_speeds(std::size_t num_clients, double min_speed, double heterogeneity_gap) {
  if (!(min_speed > 0.0) || !(heterogeneity_gap >= 1.0))
    throw ConfigError("geometric speeds need min_speed > 0 and heterogeneity_gap >= 1");
  std::vector<double> speeds(num_clients, min_speed);
  if (num_clients < 2) return speeds;
  for (std::size_t s = 0; s < num_clients; ++s) {
    const double frac = static_cast<double>(s) / static_cast<double>(num_clients - 1);
    speeds[s] = min_speed * std::pow(heterogeneity_gap, frac);
  }
  speeds.back() = min_speed * heterogeneity_gap;
  return speeds;
}

}  // namespace sdfeel
