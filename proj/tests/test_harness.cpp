#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "heavyrl/harness.hpp"

namespace fs = std::filesystem;
using heavyrl::ConfigError;
using heavyrl::ExperimentConfig;
using heavyrl::RunRecord;

namespace {

const char* kSmall = R"({
  "name": "small",
  "kind": "bandit",
  "seeds": [3, 1, 2],
  "defaults": {"horizon": 120, "epsilon": 1.0},
  "algorithms": [{"name": "heavy_oful"}, {"name": "oful"}, {"name": "median_of_means", "folds": 3}],
  "environment": {"dim": 3, "noise": {"kind": "student_t", "df": 3, "scale": 0.5}}
})";

std::string where_of(const std::string& text) {
  try {
    heavyrl::parse_config(text);
  } catch (const ConfigError& e) {
    return e.where();
  }
  return "<accepted>";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("heavyrl_test_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

std::map<std::string, std::string> csv_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir / "runs")) {
    out[e.path().filename().string()] = slurp(e.path());
  }
  return out;
}

}  // namespace

TEST_CASE("config validation names the offending field") {
  CHECK(where_of(R"({"kind":"bandit","seeds":[1,1],"algorithms":[{"name":"oful"}]})") == "seeds[1]");
  CHECK(where_of(R"({"kind":"bandit","seeds":[],"algorithms":[{"name":"oful"}]})") == "seeds");
  CHECK(where_of(R"({"kind":"bandit","algorithms":[{"name":"oful"}]})") == "seeds");
  CHECK(where_of(R"({"kind":"bandits","seeds":[1]})") == "kind");
  CHECK(where_of(R"({"kind":"bandit","seeds":[1],"algorithms":[{"name":"oful","bonus_scale":-1}]})") ==
        "algorithms[0].bonus_scale");
  CHECK(where_of(R"({"kind":"bandit","seeds":[1],"algorithms":[{"name":"oful","delta":1}]})") ==
        "algorithms[0].delta");
  CHECK(where_of(R"({"kind":"bandit","seeds":[1],"algorithms":[{"name":"ofu"}]})") ==
        "algorithms[0].name");
  CHECK(where_of(R"({"kind":"bandit","seeds":[1],"algorithms":[{"name":"oful","horizon":0}]})") ==
        "algorithms[0].horizon");
  CHECK(where_of(R"({"kind":"bandit","seeds":[1],"algorithms":[{"name":"oful"}],"extra":1})") == "extra");
  CHECK(where_of(R"({"kind":"bandit","seeds":[1],"algorithms":[{"name":"oful"},{"name":"oful"}]})") ==
        "algorithms[1].label");
  CHECK(where_of(R"({"kind":"bandit","seeds":[1],"algorithms":[{"name":"oful"}],
                     "environment":{"dim":2,"theta_star":[1,2,3]}})") == "environment.theta_star");
  CHECK(where_of(R"({"kind":"bandit","seeds":[1],"algorithms":[{"name":"oful","epsilon":1}],
                     "environment":{"noise":{"kind":"student_t","df":2}}})") == "environment");
  CHECK(where_of(R"({"kind":"mdp","seeds":[1],"algorithms":[{"name":"heavy_lsvi_ucb","epsilon":0.5}]})") ==
        "algorithms[0].epsilon");
  CHECK(where_of("{\"kind\": \"bandit\",\n \"seeds\": [1,]}") == "line 2, column 14");
  CHECK(where_of(kSmall) == "<accepted>");
}

TEST_CASE("environment file references resolve against the config directory") {
  const fs::path dir = scratch("envfile");
  fs::create_directories(dir / "sub");
  std::ofstream(dir / "sub" / "env.json") << R"({"states": 2, "actions": 2, "horizon": 2})";
  std::ofstream(dir / "sub" / "run.json")
      << R"({"kind":"mdp","seeds":[1],"algorithms":[{"name":"heavy_lsvi_ucb","episodes":5}],
            "environment":{"file":"env.json"}})";
  const ExperimentConfig c = heavyrl::load_config(dir / "sub" / "run.json");
  CHECK(c.mdp.states == 2);
  CHECK(c.mdp.horizon == 2);
  CHECK_THROWS_AS(heavyrl::parse_config(
                      R"({"kind":"mdp","seeds":[1],"algorithms":[{"name":"heavy_lsvi_ucb"}],
                          "environment":{"file":"missing.json"}})",
                      dir),
                  ConfigError);
  CHECK_THROWS_AS(heavyrl::load_config(dir / "nope.json"), ConfigError);
}

TEST_CASE("fingerprint is canonical") {
  const auto a = heavyrl::parse_config(
      R"({"kind":"bandit","seeds":[1],"algorithms":[{"name":"oful","delta":0.1,"horizon":10}]})");
  const auto b = heavyrl::parse_config(
      R"({"algorithms":[{"horizon":10,"name":"oful","delta":1e-1,"bonus_scale":1.0}],
          "output_dir":"elsewhere","emit_figures":false,"seeds":[1],"kind":"bandit"})");
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.fingerprint().size() == 16);
  const auto c = heavyrl::parse_config(
      R"({"kind":"bandit","seeds":[2],"algorithms":[{"name":"oful","delta":0.1,"horizon":10}]})");
  CHECK(a.fingerprint() != c.fingerprint());
  CHECK(a.canonical()["algorithms"][0]["bonus_scale"].is_number_integer());
  CHECK(a.canonical()["environment"]["theta_star"].size() == 5);
}

TEST_CASE("csv round trip and quoting") {
  RunRecord r;
  r.run_id = "heavy_oful-s7-0011aabb";
  r.seed = 7;
  r.rows = {{1, 0.1, 0.1, R"({"a":"x,y","b":[1,2]})"}, {2, 1.0 / 3.0, 0.1 + 1.0 / 3.0, "{}"}};
  const std::string text = heavyrl::run_csv(r);
  CHECK(text.rfind(std::string(heavyrl::kCsvHeader) + "\n", 0) == 0);
  CHECK(text.find(R"("{""a"":""x,y"",""b"":[1,2]}")") != std::string::npos);
  const RunRecord back = heavyrl::parse_run_csv(text);
  CHECK(back.run_id == r.run_id);
  CHECK(back.algorithm == "heavy_oful");
  CHECK(back.seed == 7);
  REQUIRE(back.rows.size() == 2);
  CHECK(back.rows[0].diag_json == r.rows[0].diag_json);
  CHECK(back.rows[1].instant_regret == r.rows[1].instant_regret);
  CHECK(back.rows[1].cum_regret == r.rows[1].cum_regret);
  CHECK(heavyrl::run_csv(back) == text);
  CHECK_THROWS(heavyrl::parse_run_csv("t,regret\n"));
  CHECK_THROWS(heavyrl::parse_run_csv(std::string(heavyrl::kCsvHeader) + "\n1,a,1,1,0\n"));
}

TEST_CASE("aggregation is the mean and sample deviation per t") {
  std::vector<RunRecord> runs(3);
  const double finals[3] = {1.0, 2.0, 4.5};
  for (int i = 0; i < 3; ++i) {
    runs[i].algorithm = "a";
    runs[i].rows = {{1, 0.5, 0.5, "{}"}, {2, finals[i] - 0.5, finals[i], "{}"}};
  }
  runs[2].rows.push_back({3, 1.0, 5.5, "{}"});
  RunRecord failed;
  failed.algorithm = "a";
  failed.complete = false;
  failed.rows = {{1, 100.0, 100.0, "{}"}};
  runs.push_back(failed);
  const auto curves = heavyrl::aggregate(runs);
  REQUIRE(curves.size() == 1);
  CHECK(curves[0].runs == 3);
  CHECK(curves[0].t.size() == 2);
  CHECK(curves[0].mean[0] == 0.5);
  CHECK(curves[0].stddev[0] == 0.0);
  CHECK(curves[0].mean[1] == doctest::Approx(7.5 / 3.0));
  const double m = 7.5 / 3.0;
  const double sd = std::sqrt(((1 - m) * (1 - m) + (2 - m) * (2 - m) + (4.5 - m) * (4.5 - m)) / 2.0);
  CHECK(curves[0].stddev[1] == doctest::Approx(sd));
}

TEST_CASE("experiment outputs: summary mean equals per-seed csv columns") {
  const ExperimentConfig config = heavyrl::parse_config(kSmall);
  const fs::path dir = scratch("summary");
  const auto result = heavyrl::run_experiment(config, 2);
  CHECK(result.ok());
  REQUIRE(result.records.size() == 9);
  CHECK(result.records[0].run_id == heavyrl::make_run_id("heavy_oful", 3, config.fingerprint()));
  CHECK(result.records[4].run_id == heavyrl::make_run_id("oful", 1, config.fingerprint()));
  heavyrl::write_experiment(config, result, dir);
  CHECK(fs::exists(dir / "small.svg"));
  CHECK(fs::exists(dir / "summary.json"));
  CHECK(fs::exists(dir / "config.json"));

  // per algorithm, per t: sum of the cum_regret columns / number of seeds
  std::map<std::string, std::map<long long, std::vector<double>>> columns;
  for (const auto& [name, text] : csv_files(dir)) {
    const RunRecord r = heavyrl::parse_run_csv(text);
    CHECK(r.rows.size() == 120);
    double prev = 0.0;
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
      CHECK(r.rows[i].t == static_cast<long long>(i + 1));
      CHECK(r.rows[i].cum_regret >= prev);
      prev = r.rows[i].cum_regret;
      columns[r.algorithm][r.rows[i].t].push_back(r.rows[i].cum_regret);
    }
  }
  std::istringstream summary(slurp(dir / "summary.csv"));
  std::string line;
  std::getline(summary, line);
  CHECK(line == "algorithm,t,runs,mean_cum_regret,std_cum_regret");
  int rows = 0;
  double worst = 0.0;
  while (std::getline(summary, line)) {
    std::istringstream cells(line);
    std::string algo, t, n, mean, sd;
    std::getline(cells, algo, ',');
    std::getline(cells, t, ',');
    std::getline(cells, n, ',');
    std::getline(cells, mean, ',');
    std::getline(cells, sd, ',');
    const auto& col = columns.at(algo).at(std::stoll(t));
    REQUIRE(col.size() == 3);
    const double want = (col[0] + col[1] + col[2]) / 3.0;
    worst = std::max(worst, std::abs(std::stod(mean) - want));
    CHECK(n == "3");
    ++rows;
  }
  CHECK(rows == 3 * 120);
  CHECK(worst <= 1e-12);

  const std::string svg = slurp(dir / "small.svg");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("median_of_means") != std::string::npos);
  std::size_t polygons = 0;
  for (std::size_t p = svg.find("<polygon"); p != std::string::npos; p = svg.find("<polygon", p + 1)) {
    ++polygons;
  }
  CHECK(polygons == 3);
}

TEST_CASE("reruns are byte-identical regardless of worker count") {
  const ExperimentConfig config = heavyrl::parse_config(kSmall);
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  heavyrl::write_experiment(config, heavyrl::run_experiment(config, 1), a);
  heavyrl::write_experiment(config, heavyrl::run_experiment(config, 4), b);
  const auto fa = csv_files(a), fb = csv_files(b);
  CHECK(fa.size() == 9);
  CHECK(fa == fb);
  CHECK(slurp(a / "summary.csv") == slurp(b / "summary.csv"));

  const auto mdp = heavyrl::parse_config(
      R"({"kind":"mdp","seeds":[1,2],"algorithms":[{"name":"heavy_lsvi_ucb","episodes":60}]})");
  const fs::path c = scratch("det_c"), d = scratch("det_d");
  heavyrl::write_experiment(mdp, heavyrl::run_experiment(mdp, 2), c);
  heavyrl::write_experiment(mdp, heavyrl::run_experiment(mdp, 1), d);
  CHECK(csv_files(c) == csv_files(d));
}

TEST_CASE("report re-aggregates stored runs") {
  const ExperimentConfig config = heavyrl::parse_config(kSmall);
  const fs::path dir = scratch("report");
  heavyrl::write_experiment(config, heavyrl::run_experiment(config, 1), dir);
  const std::string before = slurp(dir / "summary.csv");
  fs::remove(dir / "small.svg");
  CHECK(heavyrl::report(dir, "") == 9);
  CHECK(fs::exists(dir / "small.svg"));
  // same rows, possibly grouped in another order
  auto lines = [](const std::string& s) {
    std::multiset<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) out.insert(l);
    return out;
  };
  CHECK(lines(slurp(dir / "summary.csv")) == lines(before));
  CHECK(heavyrl::report(dir, "renamed") == 9);
  CHECK(fs::exists(dir / "renamed.svg"));
  CHECK_THROWS(heavyrl::report(scratch("empty"), ""));
}

TEST_CASE("deterministic mode forces one job") {
  ::unsetenv("HEAVYRL_DETERMINISTIC");
  CHECK(heavyrl::effective_jobs(4) == 4);
  CHECK(heavyrl::effective_jobs(0) == 1);
  ::setenv("HEAVYRL_DETERMINISTIC", "1", 1);
  CHECK(heavyrl::effective_jobs(4) == 1);
  ::setenv("HEAVYRL_DETERMINISTIC", "0", 1);
  CHECK(heavyrl::effective_jobs(4) == 4);
  ::unsetenv("HEAVYRL_DETERMINISTIC");
}

TEST_CASE("failed runs are reported") {
  heavyrl::ExperimentResult result;
  result.records.resize(2);
  CHECK(result.ok());
  result.records[1].complete = false;
  CHECK(result.failed_runs() == 1);
  CHECK_FALSE(result.ok());
}

TEST_CASE("regression suites") {
  heavyrl::ConcentrationSuiteConfig conc;
  conc.runs = 5;
  conc.horizon = 300;
  const auto c = heavyrl::concentration_suite(conc, 9);
  CHECK(c.trials() == 5);
  CHECK(c.frequency() >= 0.8);
  CHECK(heavyrl::concentration_suite(conc, 9).outcomes == c.outcomes);

  heavyrl::PerturbationSuiteConfig pert;
  pert.trials = 10;
  pert.horizon = 100;
  const auto p = heavyrl::perturbation_suite(pert, 9);
  CHECK(p.frequency() == 1.0);
  for (double ratio : p.detail) CHECK(ratio > 0.0);

  conc.df = 1.5;
  CHECK_THROWS_AS(heavyrl::concentration_suite(conc, 1), std::invalid_argument);
}

TEST_CASE("selftest passes on a clean tree") {
  for (const auto& check : heavyrl::selftest()) {
    INFO(check.name << " " << check.detail);
    CHECK(check.passed);
  }
}
