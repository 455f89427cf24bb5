#include "sdfeel/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "json.hpp"
#include "sdfeel/errors.hpp"
#include "sdfeel/random.hpp"
#include "sdfeel/training.hpp"

namespace sdfeel {

ModelVector auxiliary_global(std::span<const ModelVector> models, const DataWeights& weights) {
  if (models.size() != weights.num_clusters() || models.empty())
    throw DimensionError("one model per cluster is required");
  ModelVector out(models.front().size());
  for (std::size_t d = 0; d < models.size(); ++d) axpy(weights.m_tilde[d], models[d], out);
  return out;
}

double consensus_error(std::span<const ModelVector> models, const DataWeights& weights) {
  const ModelVector mean = auxiliary_global(models, weights);
  double err = 0.0;
  for (std::size_t d = 0; d < models.size(); ++d) err += weights.m_tilde[d] * squared_distance(mean, models[d]);
  return err;
}

MetricsRecord make_record(std::uint64_t k, double sim_time, std::span<const ModelVector> models,
                          const DataWeights& weights, const TaskSpec& task, const SampleBatch& train_data,
                          const SampleBatch* test_data) {
  MetricsRecord r;
  r.k = k;
  r.sim_time = sim_time;
  const ModelVector mean = auxiliary_global(models, weights);
  ModelVector g;
  r.global_loss = evaluate_loss_and_gradient(task, mean, train_data, &g);
  r.grad_norm_sq = squared_norm(g);
  double err = 0.0;
  for (std::size_t d = 0; d < models.size(); ++d) err += weights.m_tilde[d] * squared_distance(mean, models[d]);
  r.consensus_error = err;
  if (test_data && task.kind == TaskKind::kLogistic) r.test_accuracy = classification_accuracy(task, mean, *test_data);
  return r;
}

AnalysisEstimates estimate_assumption_constants(const TaskSpec& task, std::span<const SampleBatch> shards,
                                                const DataWeights& weights, const ModelVector& probe,
                                                std::size_t batch_size, std::size_t num_probes, std::uint64_t seed) {
  if (num_probes == 0) throw ConfigError("num_probes must be >= 1");
  if (shards.size() != weights.num_clients()) throw DimensionError("one shard per client is required");
  AnalysisEstimates est;

  std::vector<ModelVector> local_grads;
  ModelVector global_grad(probe.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    local_grads.push_back(evaluate_gradient(task, probe, shards[i]));
    axpy(weights.m[i], local_grads.back(), global_grad);
  }

  ModelVector g;
  for (std::size_t i = 0; i < shards.size(); ++i) {
    est.kappa_hat = std::max(est.kappa_hat, std::sqrt(squared_distance(local_grads[i], global_grad)));
    MinibatchSampler sampler(shards[i].size(), make_stream(seed, StreamTag::kProbe, i));
    const std::size_t b = std::min(batch_size, shards[i].size());
    double variance = 0.0;
    for (std::size_t p = 0; p < num_probes; ++p) {
      evaluate_loss_and_gradient(task, probe, shards[i], sampler.next(b), &g);
      variance += squared_distance(g, local_grads[i]);
    }
    est.sigma_sq_hat = std::max(est.sigma_sq_hat, variance / static_cast<double>(num_probes));
  }
  return est;
}

BoundResult theorem_bound(const BoundInputs& in) {
  if (!(in.eta > 0.0) || !(in.smoothness > 0.0) || !(in.tau_min >= 1.0) || !(in.tau_max >= in.tau_min) ||
      !(in.iterations > 0.0) || !(in.heterogeneity_gap >= 1.0) || in.delta_max < 0.0 || in.sigma_sq < 0.0 ||
      in.kappa_sq < 0.0 || !(in.rho_max >= 0.0 && in.rho_max < 1.0))
    throw ConfigError("theorem_bound inputs out of range");

  BoundResult r;
  const double e2l2 = in.eta * in.eta * in.smoothness * in.smoothness;
  const double tau = in.tau_max;
  const double h = in.heterogeneity_gap;
  const double dm2 = in.delta_max * in.delta_max;
  r.u2 = tau * (tau - 1.0);
  const double denom = 1.0 - 2.0 * e2l2 * r.u2;
  const double inf = std::numeric_limits<double>::infinity();
  r.guard_condition = denom > 0.0;
  if (!r.guard_condition) {
    r.feasible = false;
    r.bound = inf;
    r.u1 = r.u3 = r.u4 = r.a = r.b = r.c = r.first_term = inf;
    return r;
  }
  r.u3 = (1.0 + 4.0 * e2l2 * r.u2) / denom;
  r.u4 = (1.0 + 22.0 * e2l2 * r.u2) / denom;
  r.u1 = (1.0 - 14.0 * e2l2 * r.u2) / denom;

  const double s = 1.0 / (1.0 - in.rho_max);
  r.a = 4.0 * e2l2 * dm2 * tau * h * r.u4 + 4.0 * e2l2 * (tau - 1.0) / denom + 8.0 * e2l2 * tau * h * r.u3 * s;
  r.b = 8.0 * e2l2 * dm2 * tau * h * r.u4 + 24.0 * e2l2 * r.u2 / denom + 16.0 * e2l2 * tau * h * r.u3 * s * s;
  r.c = 8.0 * e2l2 * dm2 * tau * r.u4 + 16.0 * e2l2 * tau * tau * r.u3 * s * s;

  const double lr_condition = 1.0 - in.eta * in.smoothness * h * tau - r.c;
  r.step_condition = lr_condition >= 0.0;
  r.feasible = r.step_condition && r.guard_condition;

  if (!(r.u1 > 0.0)) {
    r.bound = inf;
    r.first_term = inf;
    return r;
  }
  const double sum_m2 =
      std::inner_product(in.client_weights.begin(), in.client_weights.end(), in.client_weights.begin(), 0.0);
  r.first_term = 2.0 * in.loss_gap / (in.eta * in.tau_min * r.u1 * in.iterations);
  r.bound = r.first_term + in.eta * in.smoothness * h * h * sum_m2 * in.sigma_sq / r.u1 + r.a * in.sigma_sq / r.u1 +
            r.b * in.kappa_sq / r.u1;
  return r;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::filesystem::path& path) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError(path.string(), "malformed number '" + s + "' in trace");
  return v;
}

}  // namespace

void export_trace(std::span<const MetricsRecord> trace, const std::filesystem::path& path, TraceFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open trace for writing");
  if (format == TraceFormat::kCsv) {
    out << kTraceCsvHeader << '\n';
    for (const auto& r : trace) {
      out << r.k << ',' << format_double(r.sim_time) << ',' << format_double(r.global_loss) << ','
          << format_double(r.grad_norm_sq) << ',' << format_double(r.consensus_error) << ',' << r.max_staleness << ','
          << r.trigger_cluster << ',';
      if (r.test_accuracy) out << format_double(*r.test_accuracy);
      out << '\n';
    }
  } else {
    for (const auto& r : trace) {
      nlohmann::ordered_json j;
      j["k"] = r.k;
      j["sim_time"] = r.sim_time;
      j["global_loss"] = r.global_loss;
      j["grad_norm_sq"] = r.grad_norm_sq;
      j["consensus_error"] = r.consensus_error;
      j["max_staleness"] = r.max_staleness;
      j["trigger_cluster"] = r.trigger_cluster;
      j["test_accuracy"] = r.test_accuracy ? nlohmann::ordered_json(*r.test_accuracy) : nlohmann::ordered_json(nullptr);
      out << j.dump() << '\n';
    }
  }
  if (!out) throw IoError(path.string(), "failed writing trace");
}

std::vector<MetricsRecord> read_trace(const std::filesystem::path& path, TraceFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open trace for reading");
  std::vector<MetricsRecord> trace;
  std::string line;
  if (format == TraceFormat::kCsv) {
    if (!std::getline(in, line) || line != kTraceCsvHeader) throw IoError(path.string(), "unexpected trace header");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (cells.size() == 7 && line.back() == ',') cells.emplace_back();
      if (cells.size() != 8) throw IoError(path.string(), "trace row has " + std::to_string(cells.size()) + " fields");
      MetricsRecord r;
      r.k = std::stoull(cells[0]);
      r.sim_time = parse_double(cells[1], path);
      r.global_loss = parse_double(cells[2], path);
      r.grad_norm_sq = parse_double(cells[3], path);
      r.consensus_error = parse_double(cells[4], path);
      r.max_staleness = std::stoull(cells[5]);
      r.trigger_cluster = std::stoll(cells[6]);
      if (!cells[7].empty()) r.test_accuracy = parse_double(cells[7], path);
      trace.push_back(r);
    }
  } else {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      MetricsRecord r;
      r.k = j.at("k").get<std::uint64_t>();
      r.sim_time = j.at("sim_time").get<double>();
      r.global_loss = j.at("global_loss").get<double>();
      r.grad_norm_sq = j.at("grad_norm_sq").get<double>();
      r.consensus_error = j.at("consensus_error").get<double>();
      r.max_staleness = j.at("max_staleness").get<std::uint64_t>();
      r.trigger_cluster = j.at("trigger_cluster").get<std::int64_t>();
      if (!j.at("test_accuracy").is_null()) r.test_accuracy = j.at("test_accuracy").get<double>();
      trace.push_back(r);
    }
  }
  return trace;
}

}  // namespace sdfeel
