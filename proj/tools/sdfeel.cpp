// Command-line runner: `sdfeel run|validate|bound <config>`.
//
// Exit codes: 0 success, 1 invalid configuration, 2 divergence, 3 I/O error.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "sdfeel/config.hpp"
#include "sdfeel/errors.hpp"
#include "sdfeel/experiment.hpp"

namespace fs = std::filesystem;
using namespace sdfeel;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitDivergence = 2;
constexpr int kExitIo = 3;

// Without --out, a relative output.dir is resolved against $SDFEEL_OUTPUT_ROOT when set.
fs::path resolve_output(const fs::path& dir) {
  if (dir.is_absolute()) return dir;
  if (const char* root = std::getenv("SDFEEL_OUTPUT_ROOT"); root && *root) return fs::path(root) / dir;
  return dir;
}

int classify(const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitDivergence;
  }
}

struct RunOptions {
  std::string config_path;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::size_t replicates = 1;
  std::size_t parallel = 1;
};

ExperimentConfig load(const std::string& path, const RunOptions* overrides) {
  ExperimentConfig config = parse_config(path);
  if (overrides) {
    if (overrides->mode) config.mode = parse_run_mode(*overrides->mode);
    if (overrides->seed) config.seed = *overrides->seed;
    if (overrides->out) config.output_dir = *overrides->out;
  }
  return config;
}

int do_run(const RunOptions& opts) {
  ExperimentConfig base;
  try {
    base = load(opts.config_path, &opts);
    if (opts.replicates == 0 || opts.parallel == 0) throw ConfigError("--replicates and --parallel must be >= 1");
  } catch (...) {
    return classify(std::current_exception());
  }
  const fs::path out_root = opts.out ? fs::path(*opts.out) : resolve_output(base.output_dir);

  if (opts.replicates == 1) {
    try {
      const ExperimentSummary summary = run_experiment(base, out_root);
      std::cout << summary.to_json();
      return kExitOk;
    } catch (...) {
      return classify(std::current_exception());
    }
  }

  // Independent replicates with seeds seed, seed+1, ... in rep_<r>/.
  std::vector<std::exception_ptr> errors(opts.replicates);
  std::atomic<std::size_t> next{0};
  std::mutex print_mutex;
  auto worker = [&] {
    for (std::size_t r = next++; r < opts.replicates; r = next++) {
      ExperimentConfig cfg = base;
      cfg.seed = base.seed + r;
      try {
        const auto summary = run_experiment(cfg, out_root / ("rep_" + std::to_string(r)));
        std::lock_guard lock(print_mutex);
        std::cout << "replicate " << r << " seed " << cfg.seed << " done\n";
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t threads = std::min(opts.parallel, opts.replicates);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  int code = kExitOk;
  for (std::size_t r = 0; r < errors.size(); ++r) {
    if (!errors[r]) continue;
    std::cerr << "replicate " << r << ": ";
    code = std::max(code, classify(errors[r]));
  }
  return code;
}

int do_validate(const std::string& path) {
  try {
    const PreparedExperiment prepared = prepare_experiment(load(path, nullptr));
    std::cout << render_config(prepared.config);
    return kExitOk;
  } catch (...) {
    return classify(std::current_exception());
  }
}

int do_bound(const std::string& path, std::optional<std::uint64_t> seed) {
  try {
    RunOptions overrides;
    overrides.seed = seed;
    const BoundReport report = evaluate_bound(load(path, &overrides));
    std::cout << report.to_json();
    return kExitOk;
  } catch (...) {
    return classify(std::current_exception());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asynchronous semi-decentralized federated edge learning simulator"};
  app.require_subcommand(1);

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "Run an experiment and write traces plus a summary");
  run->add_option("config", run_opts.config_path, "Configuration file")->required();
  run->add_option("--mode", run_opts.mode, "async, sync or both")->check(CLI::IsMember({"async", "sync", "both"}));
  run->add_option("--seed", run_opts.seed, "Override the config seed");
  run->add_option("--out", run_opts.out, "Output directory");
  run->add_option("--replicates", run_opts.replicates, "Independent seeded replicates");
  run->add_option("--parallel", run_opts.parallel, "Replicates run concurrently");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a configuration and print it with defaults resolved");
  validate->add_option("config", validate_path, "Configuration file")->required();

  std::string bound_path;
  std::optional<std::uint64_t> bound_seed;
  auto* bound = app.add_subcommand("bound", "Evaluate the convergence bound for a configuration");
  bound->add_option("config", bound_path, "Configuration file")->required();
  bound->add_option("--seed", bound_seed, "Override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  if (*run) return do_run(run_opts);
  if (*validate) return do_validate(validate_path);
  return do_bound(bound_path, bound_seed);
}
