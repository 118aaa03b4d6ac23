#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "heavyrl/bandit.hpp"
#include "heavyrl/linear_mdp.hpp"
#include "heavyrl/record.hpp"
#include "heavyrl/suites.hpp"
#include "json.hpp"

namespace heavyrl {

/// Raised for malformed or out-of-range configuration. `where` is either a
/// field path such as `algorithms[1].bonus_scale` or `line 4, column 7`.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& where, const std::string& message);
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

enum class ExperimentKind { bandit, mdp, regression_check };

struct AlgorithmConfig {
  std::string name;
  /// Distinguishes entries sharing an algorithm; defaults to `name`.
  std::string label;
  double bonus_scale = 1.0;
  double delta = 0.1;
  double epsilon = 1.0;
  /// T for bandits, K for MDPs.
  std::int64_t horizon = 1000;
  std::optional<double> sigma_min;
  std::optional<double> nu_min;
  int folds = 0;
  double truncation_scale = 1.0;
};

struct MdpEnvironmentConfig {
  int states = 3;
  int actions = 2;
  int horizon = 3;
  MdpRewardSpec rewards;
  MdpNoiseSpec noise;
  std::uint64_t seed = 1;
  int initial_state = 0;

  LinearMDPSpec build() const;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ExperimentKind kind = ExperimentKind::bandit;
  std::vector<AlgorithmConfig> algorithms;
  BanditInstance bandit;
  MdpEnvironmentConfig mdp;
  ConcentrationSuiteConfig concentration;
  PerturbationSuiteConfig perturbation;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "out";
  bool emit_figures = true;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// Sorted keys, defaults filled in, integral floats written as integers.
  /// Output location and figure switch are excluded.
  nlohmann::json canonical() const;
  /// 16 hex digits of FNV-1a over canonical().dump().
  std::string fingerprint() const;
};

/// Parses and validates a config document. Relative `environment.file`
/// references resolve against `base_dir`.
ExperimentConfig parse_config(const std::string& text,
                              const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);

std::string kind_name(ExperimentKind kind);

/// 1 when HEAVYRL_DETERMINISTIC=1, otherwise max(1, requested).
int effective_jobs(int requested);

struct ExperimentResult {
  std::vector<RunRecord> records;
  /// Regression-check suites, in config order: concentration, perturbation.
  std::vector<std::pair<std::string, SuiteResult>> suites;
  bool suites_passed = true;

  int failed_runs() const;
  bool ok() const { return failed_runs() == 0 && suites_passed; }
};

/// Executes every (algorithm, seed) pair with at most `jobs` workers. Records
/// come back in (algorithm, seed) config order regardless of scheduling.
ExperimentResult run_experiment(const ExperimentConfig& config, int jobs);

std::string make_run_id(const std::string& algorithm, std::uint64_t seed,
                        const std::string& fingerprint);

inline constexpr const char* kCsvHeader =
    "schema=1,run_id,seed,t,instant_regret,cum_regret,diag_json";

/// %.17g formatting, so values round-trip exactly.
std::string format_double(double x);
std::string run_csv(const RunRecord& record);
/// Inverse of run_csv; throws std::runtime_error on a malformed file.
RunRecord parse_run_csv(const std::string& text);

struct RegretCurve {
  std::string algorithm;
  int runs = 0;
  std::vector<std::int64_t> t;
  std::vector<double> mean;
  /// Sample standard deviation (0 for a single run).
  std::vector<double> stddev;
};

/// Groups complete runs by algorithm (first-appearance order) and averages the
/// cumulative regret over the common prefix of t, summing in seed order.
std::vector<RegretCurve> aggregate(const std::vector<RunRecord>& records);
std::string summary_csv(const std::vector<RegretCurve>& curves);
std::string regret_svg(const std::vector<RegretCurve>& curves, const std::string& title);

/// Writes runs/<run_id>.csv, summary.csv, summary.json, config.json and (if
/// enabled) <name>.svg under `dir`.
void write_experiment(const ExperimentConfig& config, const ExperimentResult& result,
                      const std::filesystem::path& dir);

/// Re-reads runs/*.csv under `dir`, rewrites summary.csv and renders
/// <name>.svg. Returns the number of runs read.
int report(const std::filesystem::path& dir, const std::string& name);

struct SelftestCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Worked examples from every module, evaluated against closed forms or
/// independent computations.
std::vector<SelftestCheck> selftest();

}  // namespace heavyrl
