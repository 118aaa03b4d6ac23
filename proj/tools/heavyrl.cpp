#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "heavyrl/harness.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kConfigError = 2;

struct RunFlags {
  std::string config;
  std::string out;
  std::vector<std::uint64_t> seeds;
  int jobs = 1;
  std::optional<double> bonus_scale;
};

void add_run_flags(CLI::App* cmd, RunFlags& flags) {
  cmd->add_option("--config", flags.config, "experiment config (JSON)")->required();
  cmd->add_option("--out", flags.out, "output directory (overrides output_dir)");
  cmd->add_option("--seeds", flags.seeds, "comma-separated seeds (overrides seeds)")
      ->delimiter(',');
  cmd->add_option("--jobs", flags.jobs, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--bonus-scale", flags.bonus_scale, "multiplier on every confidence radius")
      ->check(CLI::NonNegativeNumber);
}

int run_experiment_command(const RunFlags& flags, heavyrl::ExperimentKind expected) {
  heavyrl::ExperimentConfig config;
  try {
    config = heavyrl::load_config(flags.config);
    if (config.kind != expected) {
      throw heavyrl::ConfigError("kind", "config is '" + heavyrl::kind_name(config.kind) +
                                             "' but the subcommand runs '" +
                                             heavyrl::kind_name(expected) + "'");
    }
    if (!flags.seeds.empty()) config.seeds = flags.seeds;
    if (flags.bonus_scale) {
      if (config.kind == heavyrl::ExperimentKind::regression_check) {
        throw heavyrl::ConfigError("--bonus-scale", "regression-check has no confidence bonus");
      }
      for (auto& a : config.algorithms) a.bonus_scale = *flags.bonus_scale;
    }
    if (!flags.out.empty()) config.output_dir = flags.out;
    config.validate();
  } catch (const heavyrl::ConfigError& e) {
    std::cerr << "config error: " << flags.config << ": " << e.what() << "\n";
    return kConfigError;
  }

  const int jobs = heavyrl::effective_jobs(flags.jobs);
  std::cout << config.name << " (" << heavyrl::kind_name(config.kind) << ", fingerprint "
            << config.fingerprint() << ", jobs " << jobs << ")\n";
  const auto result = heavyrl::run_experiment(config, jobs);
  try {
    heavyrl::write_experiment(config, result, config.output_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }

  for (const auto& [name, suite] : result.suites) {
    std::printf("  %-28s %d/%d (%.1f%%)\n", name.c_str(), suite.held(), suite.trials(),
                100.0 * suite.frequency());
  }
  for (const auto& r : result.records) {
    if (r.complete) {
      std::printf("  %-40s final regret %.6g\n", r.run_id.c_str(), r.final_regret());
    } else {
      std::printf("  %-40s FAILED: %s\n", r.run_id.c_str(), r.error.c_str());
    }
  }
  for (const auto& c : heavyrl::aggregate(result.records)) {
    if (c.t.empty()) continue;
    std::printf("  mean %-20s %.6g +- %.3g over %d runs (t = %lld)\n", c.algorithm.c_str(),
                c.mean.back(), c.stddev.back(), c.runs, static_cast<long long>(c.t.back()));
  }
  std::cout << "wrote " << fs::path(config.output_dir).string() << "\n";
  return result.ok() ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heavy-tailed linear bandits and linear MDPs: experiment runner"};
  app.require_subcommand(1);

  RunFlags bandit_flags, mdp_flags, regress_flags;
  auto* bandit = app.add_subcommand("bandit", "run a bandit experiment");
  add_run_flags(bandit, bandit_flags);
  auto* mdp = app.add_subcommand("mdp", "run a linear-MDP experiment");
  add_run_flags(mdp, mdp_flags);
  auto* regress = app.add_subcommand("regress-check", "run the concentration and perturbation suites");
  add_run_flags(regress, regress_flags);

  auto* selftest = app.add_subcommand("selftest", "evaluate the worked examples of every module");
  bool verbose = false;
  selftest->add_flag("-v,--verbose", verbose, "print details of passing checks");

  auto* report = app.add_subcommand("report", "aggregate stored run CSVs and render the figure");
  std::string report_dir, report_name;
  report->add_option("--out", report_dir, "experiment output directory")->required();
  report->add_option("--name", report_name, "figure name (default: the experiment name)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (*bandit) return run_experiment_command(bandit_flags, heavyrl::ExperimentKind::bandit);
  if (*mdp) return run_experiment_command(mdp_flags, heavyrl::ExperimentKind::mdp);
  if (*regress) {
    return run_experiment_command(regress_flags, heavyrl::ExperimentKind::regression_check);
  }
  if (*selftest) {
    int failed = 0;
    const auto checks = heavyrl::selftest();
    for (const auto& c : checks) {
      failed += !c.passed;
      std::cout << (c.passed ? "ok    " : "FAIL  ") << c.name;
      if (!c.detail.empty() && (!c.passed || verbose)) std::cout << "  [" << c.detail << "]";
      std::cout << "\n";
    }
    std::cout << checks.size() - failed << "/" << checks.size() << " checks passed\n";
    return failed == 0 ? kOk : kFailed;
  }
  if (*report) {
    try {
      const int n = heavyrl::report(report_dir, report_name);
      std::cout << "aggregated " << n << " runs in " << report_dir << "\n";
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kFailed;
    }
  }
  return kOk;
}
