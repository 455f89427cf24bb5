#include "sdfeel/config.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "sdfeel/errors.hpp"

namespace sdfeel {
namespace {

const char* kPaperShaped = R"(# six edge clusters on a ring
run_id = paper
mode = both
topology.kind = ring
clusters.count = 6
clusters.clients_per_cluster = 5
train.batch_size = 10
train.eta = 0.001
task.kind = logistic
task.feature_dim = 8
task.num_classes = 10
data.num_samples = 3000
data.alpha = 0.5
stop.max_global_iters = 100
)";

ExperimentConfig validated(const std::string& text) {
  ExperimentConfig c = parse_config_text(text);
  validate_config(c);
  return c;
}

// Runs `fn` and returns the ConfigError message, or "" if nothing was thrown.
template <typename Fn>
std::string config_error(Fn fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Parse, PaperShapedConfigAccepted) {
  const ExperimentConfig c = validated(kPaperShaped);
  EXPECT_EQ(c.run_id, "paper");
  EXPECT_EQ(c.mode, RunMode::kBoth);
  EXPECT_EQ(c.num_clusters, 6u);
  EXPECT_EQ(c.clients_per_cluster, 5u);
  EXPECT_EQ(c.batch_size, 10u);
  EXPECT_DOUBLE_EQ(c.eta, 0.001);
  EXPECT_DOUBLE_EQ(c.alpha, 0.5);
  EXPECT_EQ(c.task.kind, TaskKind::kLogistic);
  EXPECT_EQ(c.data_classes, 10u);
  EXPECT_DOUBLE_EQ(c.latency.model_bits, 32.0 * static_cast<double>(c.task.parameter_count()));
  ASSERT_TRUE(c.stop.max_global_iters.has_value());
  EXPECT_EQ(*c.stop.max_global_iters, 100u);
}

TEST(Parse, CommentsAndWhitespace) {
  const ExperimentConfig c = parse_config_text(
      "  task.kind=quadratic   # trailing comment\n\n# whole line\nclusters.count =3\nstop.max_sim_time_s= 5\n");
  EXPECT_EQ(c.task.kind, TaskKind::kQuadratic);
  EXPECT_EQ(c.num_clusters, 3u);
  EXPECT_DOUBLE_EQ(*c.stop.max_sim_time_s, 5.0);
}

TEST(Parse, HeterogeneityGapGivesGeometricSpread) {
  const auto speeds = geometric_speeds(30, 2e6, 30.0);
  ASSERT_EQ(speeds.size(), 30u);
  EXPECT_EQ(*std::min_element(speeds.begin(), speeds.end()), 2e6);
  EXPECT_EQ(*std::max_element(speeds.begin(), speeds.end()) / 2e6, 30.0);
  for (std::size_t i = 1; i < speeds.size(); ++i) {
    EXPECT_GT(speeds[i], speeds[i - 1]);
    if (i + 1 < speeds.size()) EXPECT_NEAR(speeds[i] / speeds[i - 1], std::pow(30.0, 1.0 / 29.0), 1e-12);
  }
  EXPECT_EQ(geometric_speeds(1, 5.0, 30.0), std::vector<double>{5.0});
  EXPECT_THROW(geometric_speeds(3, 1.0, 0.5), ConfigError);
}

TEST(Validate, RejectsZeroAlphaNamingKey) {
  const std::string text = "task.kind = logistic\nclusters.count = 2\ndata.alpha = 0\nstop.max_global_iters = 1\n";
  const std::string zero = config_error([&] { validated(text); });
  EXPECT_NE(zero.find("data.alpha"), std::string::npos) << zero;
  EXPECT_NE(zero.find("> 0"), std::string::npos) << zero;
}

TEST(Parse, UnknownDuplicateAndMissingKeys) {
  const std::string unknown =
      config_error([] { parse_config_text("task.kind = quadratic\nclusters.count = 2\nfoo.bar = 1\n"); });
  EXPECT_NE(unknown.find("foo.bar"), std::string::npos) << unknown;
  EXPECT_NE(unknown.find("line 3"), std::string::npos) << unknown;

  const std::string dup = config_error([] { parse_config_text("task.kind = quadratic\ntask.kind = logistic\n"); });
  EXPECT_NE(dup.find("task.kind"), std::string::npos) << dup;

  const std::string missing = config_error([] { parse_config_text("task.kind = quadratic\n"); });
  EXPECT_NE(missing.find("clusters.count"), std::string::npos) << missing;

  const std::string bad_number =
      config_error([] { parse_config_text("clusters.count = three\ntask.kind = quadratic\n"); });
  EXPECT_NE(bad_number.find("clusters.count"), std::string::npos) << bad_number;

  const std::string no_equals = config_error([] { parse_config_text("task.kind quadratic\n"); });
  EXPECT_FALSE(no_equals.empty());
}

TEST(Validate, ConstraintViolations) {
  const std::string base = "task.kind = quadratic\nclusters.count = 3\n";
  EXPECT_NE(config_error([&] { validated(base); }).find("stop"), std::string::npos);
  EXPECT_FALSE(config_error([&] { validated(base + "stop.max_global_iters = 5\nlatency.jitter = 1\n"); }).empty());
  EXPECT_FALSE(config_error([&] { validated(base + "stop.max_global_iters = 5\nmode = fast\n"); }).empty());
  EXPECT_FALSE(
      config_error([&] { validated(base + "stop.max_global_iters = 5\nclusters.deadline_s = 1,2\n"); }).empty());
  EXPECT_FALSE(config_error([&] { validated(base + "stop.max_global_iters = 5\nclients.speeds = 1,2\n"); }).empty());
  EXPECT_FALSE(config_error([&] { validated(base + "stop.max_global_iters = 5\ntrain.eta = -1\n"); }).empty());
  EXPECT_TRUE(config_error([&] { validated(base + "stop.max_global_iters = 5\n"); }).empty());
}

TEST(Render, RoundTripsThroughParser) {
  const ExperimentConfig c =
      validated(std::string(kPaperShaped) + "clients.heterogeneity_gap = 30\nstop.target_loss = 0.5\n");
  const std::string text = render_config(c);
  ExperimentConfig again = parse_config_text(text);
  validate_config(again);
  EXPECT_EQ(render_config(again), text);
  EXPECT_NE(text.find("data.alpha = 0.5"), std::string::npos);
  EXPECT_NE(text.find("clients.heterogeneity_gap = 30"), std::string::npos);
}

TEST(Parse, FileErrorsAreIoErrors) {
  EXPECT_THROW(parse_config("/nonexistent/sdfeel.cfg"), IoError);
  const auto path = std::filesystem::temp_directory_path() / "sdfeel_config_test.cfg";
  {
    std::ofstream out(path);
    out << kPaperShaped;
  }
  const ExperimentConfig c = parse_config(path);
  EXPECT_EQ(c.base_dir, path.parent_path());
  std::filesystem::remove(path);
}

TEST(RunModeText, RoundTrips) {
  for (RunMode m : {RunMode::kAsync, RunMode::kSync, RunMode::kBoth}) EXPECT_EQ(parse_run_mode(to_string(m)), m);
  EXPECT_THROW(parse_run_mode("gossip"), ConfigError);
}

}  // namespace
}  // namespace sdfeel
