#include "heavyrl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace heavyrl {

using nlohmann::json;
namespace fs = std::filesystem;

ConfigError::ConfigError(const std::string& where, const std::string& message)
    : std::runtime_error(where + ": " + message), where_(where) {}

namespace {

// Strict object reader: every key must be consumed, every value is range-checked.
class Fields {
 public:
  Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(label(), "expected an object");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  std::string at(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  double number(const std::string& key, double fallback, double lo, double hi) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number()) throw ConfigError(at(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x) || x < lo || x > hi) {
      throw ConfigError(at(key), "must be in [" + format_double(lo) + ", " + format_double(hi) +
                                     "], got " + format_double(x));
    }
    return x;
  }

  // Open interval on the low side.
  double positive(const std::string& key, double fallback, double hi = 1e300) {
    const double x = number(key, fallback, 0.0, hi);
    if (has(key) && !(x > 0.0)) throw ConfigError(at(key), "must be > 0");
    return x;
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback, std::int64_t lo,
                       std::int64_t hi) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
    const std::int64_t x = v.get<std::int64_t>();
    if (x < lo || x > hi) {
      throw ConfigError(at(key), "must be in [" + std::to_string(lo) + ", " +
                                     std::to_string(hi) + "], got " + std::to_string(x));
    }
    return x;
  }

  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_string()) throw ConfigError(at(key), "expected a string");
    return v.get<std::string>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(at(key), "expected true or false");
    return v.get<bool>();
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError(at(key), "unknown key");
    }
  }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

constexpr double kHuge = 1e300;
constexpr std::int64_t kMaxHorizon = 100'000'000;

json num(double x) {
  if (std::isfinite(x) && x == std::floor(x) && std::abs(x) < 9007199254740992.0) {
    return static_cast<std::int64_t>(x);
  }
  return x;
}

const std::map<std::string, NoiseKind> kNoiseKinds = {
    {"student_t", NoiseKind::student_t},
    {"gaussian", NoiseKind::gaussian},
    {"deterministic", NoiseKind::deterministic}};

const std::map<std::string, ArmKind> kArmKinds = {{"unit_sphere", ArmKind::unit_sphere},
                                                   {"standard_basis", ArmKind::standard_basis},
                                                   {"fixed", ArmKind::fixed}};

template <class Enum>
std::string enum_name(const std::map<std::string, Enum>& table, Enum value) {
  for (const auto& [k, v] : table) {
    if (v == value) return k;
  }
  return "?";
}

template <class Enum>
Enum enum_value(const std::map<std::string, Enum>& table, Fields& f, const std::string& key,
                Enum fallback) {
  if (!f.has(key)) return fallback;
  const std::string s = f.string(key, "");
  auto it = table.find(s);
  if (it == table.end()) {
    std::string options;
    for (const auto& [k, v] : table) options += (options.empty() ? "" : ", ") + k;
    throw ConfigError(f.at(key), "unknown value '" + s + "' (expected one of " + options + ")");
  }
  return it->second;
}

Vector vector_field(const json& v, const std::string& path, int dim) {
  if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
  if (static_cast<int>(v.size()) != dim) {
    throw ConfigError(path, "expected " + std::to_string(dim) + " entries, got " +
                                std::to_string(v.size()));
  }
  Vector out(dim);
  for (int i = 0; i < dim; ++i) {
    if (!v[i].is_number()) throw ConfigError(path + "[" + std::to_string(i) + "]", "expected a number");
    out[i] = v[i].get<double>();
    if (!std::isfinite(out[i])) throw ConfigError(path + "[" + std::to_string(i) + "]", "not finite");
  }
  return out;
}

BanditInstance parse_bandit_environment(const json& obj, const std::string& path) {
  Fields f(obj, path);
  BanditInstance env;
  env.noise.kind = NoiseKind::gaussian;
  env.dim = static_cast<int>(f.integer("dim", 5, 1, 4096));
  env.B = f.positive("B", 1.0);
  env.L = f.positive("L", 1.0);
  env.reveal_nu = f.boolean("reveal_nu", true);
  if (f.has("theta_star")) {
    const json& v = f.raw("theta_star");
    if (v.is_string() && v.get<std::string>() == "uniform") {
      env.theta_star = Vector::Ones(env.dim) / std::sqrt(static_cast<double>(env.dim));
    } else if (v.is_string()) {
      throw ConfigError(f.at("theta_star"), "expected \"uniform\" or an array");
    } else {
      env.theta_star = vector_field(v, f.at("theta_star"), env.dim);
    }
  } else {
    env.theta_star = Vector::Ones(env.dim) / std::sqrt(static_cast<double>(env.dim));
  }
  if (f.has("decision_set")) {
    Fields ds(f.raw("decision_set"), f.at("decision_set"));
    env.decision_set.kind = enum_value(kArmKinds, ds, "kind", ArmKind::unit_sphere);
    if (env.decision_set.kind == ArmKind::fixed) {
      if (!ds.has("arms")) throw ConfigError(ds.at("arms"), "fixed decision sets list their arms");
      const json& arms = ds.raw("arms");
      if (!arms.is_array() || arms.empty()) {
        throw ConfigError(ds.at("arms"), "expected a non-empty array of arms");
      }
      for (std::size_t i = 0; i < arms.size(); ++i) {
        env.decision_set.fixed.push_back(
            vector_field(arms[i], ds.at("arms") + "[" + std::to_string(i) + "]", env.dim));
      }
      env.decision_set.arms = static_cast<int>(arms.size());
    } else {
      env.decision_set.arms = static_cast<int>(ds.integer("arms", 20, 1, 100000));
    }
    ds.finish();
  }
  if (f.has("noise")) {
    Fields nz(f.raw("noise"), f.at("noise"));
    env.noise.kind = enum_value(kNoiseKinds, nz, "kind", NoiseKind::gaussian);
    env.noise.df = nz.positive("df", env.noise.df);
    env.noise.scale = nz.number("scale", env.noise.scale, 0.0, kHuge);
    env.noise.log10_lo = nz.number("log10_lo", 0.0, -30.0, 30.0);
    env.noise.log10_hi = nz.number("log10_hi", env.noise.log10_lo, -30.0, 30.0);
    if (env.noise.log10_hi < env.noise.log10_lo) {
      throw ConfigError(nz.at("log10_hi"), "must be >= log10_lo");
    }
    nz.finish();
  }
  f.finish();
  return env;
}

MdpEnvironmentConfig parse_mdp_environment(const json& obj, const std::string& path) {
  Fields f(obj, path);
  MdpEnvironmentConfig env;
  env.states = static_cast<int>(f.integer("states", env.states, 1, 1000));
  env.actions = static_cast<int>(f.integer("actions", env.actions, 1, 1000));
  env.horizon = static_cast<int>(f.integer("horizon", env.horizon, 1, 1000));
  env.seed = static_cast<std::uint64_t>(f.integer("seed", 1, 0, INT64_MAX));
  env.initial_state = static_cast<int>(f.integer("initial_state", 0, 0, env.states - 1));
  if (f.has("rewards")) {
    Fields r(f.raw("rewards"), f.at("rewards"));
    env.rewards.lo = r.number("lo", env.rewards.lo, 0.0, 1.0);
    env.rewards.hi = r.number("hi", env.rewards.hi, env.rewards.lo, 1.0);
    env.rewards.cap = r.number("cap", 0.0, 0.0, kHuge);
    env.rewards.concentration = r.positive("concentration", env.rewards.concentration);
    env.rewards.epsilon = r.positive("epsilon", 1.0, 1.0);
    env.rewards.epsilon_prime = r.positive("epsilon_prime", 1.0, 1.0);
    r.finish();
  }
  if (f.has("noise")) {
    Fields nz(f.raw("noise"), f.at("noise"));
    env.noise.kind = enum_value(kNoiseKinds, nz, "kind", NoiseKind::student_t);
    env.noise.df = nz.positive("df", env.noise.df);
    env.noise.scale_lo = nz.number("scale_lo", 0.0, 0.0, kHuge);
    env.noise.scale_hi = nz.number("scale_hi", env.noise.scale_lo, env.noise.scale_lo, kHuge);
    nz.finish();
  }
  f.finish();
  return env;
}

const std::set<std::string> kBanditAlgorithms = {"heavy_oful", "oful", "truncation",
                                                 "median_of_means"};

AlgorithmConfig parse_algorithm(const json& obj, const std::string& path, ExperimentKind kind) {
  Fields f(obj, path);
  AlgorithmConfig a;
  if (!f.has("name")) throw ConfigError(f.at("name"), "missing");
  a.name = f.string("name", "");
  if (kind == ExperimentKind::bandit && !kBanditAlgorithms.count(a.name)) {
    throw ConfigError(f.at("name"), "unknown bandit algorithm '" + a.name +
                                        "' (expected heavy_oful, oful, truncation or "
                                        "median_of_means)");
  }
  if (kind == ExperimentKind::mdp && a.name != "heavy_lsvi_ucb") {
    throw ConfigError(f.at("name"), "unknown mdp algorithm '" + a.name +
                                        "' (expected heavy_lsvi_ucb)");
  }
  a.label = f.string("label", a.name);
  if (a.label.empty() || a.label.find_first_not_of(
                             "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.") !=
                             std::string::npos) {
    throw ConfigError(f.at("label"), "use letters, digits, '_' or '.'");
  }
  a.bonus_scale = f.number("bonus_scale", a.bonus_scale, 0.0, 1e6);
  a.delta = f.number("delta", a.delta, 0.0, 1.0);
  if (!(a.delta > 0.0 && a.delta < 1.0)) throw ConfigError(f.at("delta"), "must be in (0, 1)");
  if (kind == ExperimentKind::mdp && f.has("epsilon")) {
    throw ConfigError(f.at("epsilon"), "set environment.rewards.epsilon for mdp experiments");
  }
  a.epsilon = f.positive("epsilon", a.epsilon, 1.0);
  a.horizon = f.integer(kind == ExperimentKind::mdp ? "episodes" : "horizon", a.horizon, 1,
                        kMaxHorizon);
  if (f.has("sigma_min")) a.sigma_min = f.positive("sigma_min", 1.0);
  if (f.has("nu_min")) {
    if (kind != ExperimentKind::mdp) throw ConfigError(f.at("nu_min"), "only used by mdp runs");
    a.nu_min = f.positive("nu_min", 1.0);
  }
  if (f.has("folds")) {
    if (a.name != "median_of_means") throw ConfigError(f.at("folds"), "only used by median_of_means");
    a.folds = static_cast<int>(f.integer("folds", 0, 0, 100000));
  }
  if (f.has("truncation_scale")) {
    if (a.name != "truncation") throw ConfigError(f.at("truncation_scale"), "only used by truncation");
    a.truncation_scale = f.positive("truncation_scale", 1.0);
  }
  f.finish();
  return a;
}

json read_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(origin + "line " + std::to_string(line) + ", column " + std::to_string(col),
                      "malformed JSON");
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

std::string kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::bandit:
      return "bandit";
    case ExperimentKind::mdp:
      return "mdp";
    case ExperimentKind::regression_check:
      return "regression-check";
  }
  return "?";
}

LinearMDPSpec MdpEnvironmentConfig::build() const {
  LinearMDPSpec spec = make_tabular_linear_mdp(states, actions, horizon, rewards, noise, seed);
  spec.initial_state = initial_state;
  return spec;
}

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
  const json doc = read_json(text, "");
  Fields f(doc, "");
  ExperimentConfig c;
  c.name = f.string("name", c.name);
  if (c.name.empty() ||
      c.name.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.-") !=
          std::string::npos) {
    throw ConfigError("name", "use letters, digits, '_', '.' or '-'");
  }
  if (!f.has("kind")) throw ConfigError("kind", "missing (bandit, mdp or regression-check)");
  const std::string kind = f.string("kind", "");
  if (kind == "bandit") {
    c.kind = ExperimentKind::bandit;
  } else if (kind == "mdp") {
    c.kind = ExperimentKind::mdp;
  } else if (kind == "regression-check") {
    c.kind = ExperimentKind::regression_check;
  } else {
    throw ConfigError("kind", "unknown kind '" + kind + "' (expected bandit, mdp or regression-check)");
  }

  if (!f.has("seeds")) throw ConfigError("seeds", "missing");
  const json& seeds = f.raw("seeds");
  if (!seeds.is_array()) throw ConfigError("seeds", "expected an array of integers");
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!seeds[i].is_number_integer() || seeds[i].get<std::int64_t>() < 0) {
      throw ConfigError("seeds[" + std::to_string(i) + "]", "expected a non-negative integer");
    }
    c.seeds.push_back(seeds[i].get<std::uint64_t>());
  }
  c.output_dir = f.string("output_dir", c.output_dir);
  c.emit_figures = f.boolean("emit_figures", c.emit_figures);

  if (c.kind == ExperimentKind::regression_check) {
    if (f.has("algorithms")) throw ConfigError("algorithms", "not used by regression-check");
    if (f.has("environment")) throw ConfigError("environment", "not used by regression-check");
    if (f.has("suites")) {
      Fields s(f.raw("suites"), "suites");
      if (s.has("concentration")) {
        Fields k(s.raw("concentration"), "suites.concentration");
        auto& cc = c.concentration;
        cc.runs = static_cast<int>(k.integer("runs", cc.runs, 1, 100000));
        cc.dim = static_cast<int>(k.integer("dim", cc.dim, 1, 1000));
        cc.horizon = k.integer("horizon", cc.horizon, 1, kMaxHorizon);
        cc.epsilon = k.positive("epsilon", cc.epsilon, 1.0);
        cc.delta = k.number("delta", cc.delta, 0.0, 1.0);
        cc.df = k.positive("df", cc.df);
        cc.lambda = k.positive("lambda", cc.lambda);
        cc.theta_norm = k.number("theta_norm", cc.theta_norm, 0.0, 1.0);
        k.finish();
      }
      if (s.has("perturbation")) {
        Fields k(s.raw("perturbation"), "suites.perturbation");
        auto& pc = c.perturbation;
        pc.trials = static_cast<int>(k.integer("trials", pc.trials, 1, 100000));
        pc.dim = static_cast<int>(k.integer("dim", pc.dim, 1, 1000));
        pc.horizon = k.integer("horizon", pc.horizon, 1, kMaxHorizon);
        pc.noise_scale = k.positive("noise_scale", pc.noise_scale);
        k.finish();
      }
      s.finish();
    }
  } else {
    if (f.has("suites")) throw ConfigError("suites", "only used by regression-check");
    json defaults = json::object();
    if (f.has("defaults")) {
      defaults = f.raw("defaults");
      if (!defaults.is_object()) throw ConfigError("defaults", "expected an object");
    }
    if (!f.has("algorithms")) throw ConfigError("algorithms", "missing");
    const json& algos = f.raw("algorithms");
    if (!algos.is_array() || algos.empty()) {
      throw ConfigError("algorithms", "expected a non-empty array");
    }
    for (std::size_t i = 0; i < algos.size(); ++i) {
      const std::string path = "algorithms[" + std::to_string(i) + "]";
      if (!algos[i].is_object()) throw ConfigError(path, "expected an object");
      json merged = defaults;
      merged.update(algos[i]);
      c.algorithms.push_back(parse_algorithm(merged, path, c.kind));
    }

    json env = json::object();
    std::string env_path = "environment";
    if (f.has("environment")) {
      env = f.raw("environment");
      if (env.is_object() && env.contains("file")) {
        if (env.size() != 1 || !env["file"].is_string()) {
          throw ConfigError("environment.file", "a file reference stands alone and is a string");
        }
        const fs::path file = base_dir / env["file"].get<std::string>();
        std::string text2;
        try {
          text2 = read_file(file);
        } catch (const std::exception& e) {
          throw ConfigError("environment.file", e.what());
        }
        env = read_json(text2, file.string() + ": ");
        env_path = file.filename().string();
      }
    }
    if (c.kind == ExperimentKind::bandit) {
      c.bandit = parse_bandit_environment(env, env_path);
    } else {
      c.mdp = parse_mdp_environment(env, env_path);
    }
  }
  f.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(path.string(), "cannot read config file");
  }
  return parse_config(text, path.parent_path());
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seeds", "must be non-empty");
  std::set<std::uint64_t> seen;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!seen.insert(seeds[i]).second) {
      throw ConfigError("seeds[" + std::to_string(i) + "]",
                        "duplicate seed " + std::to_string(seeds[i]));
    }
  }
  if (kind == ExperimentKind::regression_check) {
    try {
      concentration.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("suites.concentration", e.what());
    }
    try {
      perturbation.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("suites.perturbation", e.what());
    }
    return;
  }
  if (algorithms.empty()) throw ConfigError("algorithms", "must be non-empty");
  std::set<std::string> labels;
  for (std::size_t i = 0; i < algorithms.size(); ++i) {
    const auto& a = algorithms[i];
    const std::string path = "algorithms[" + std::to_string(i) + "]";
    if (!labels.insert(a.label).second) {
      throw ConfigError(path + ".label", "duplicate label '" + a.label + "'");
    }
    if (kind == ExperimentKind::bandit) {
      BanditInstance inst = bandit;
      inst.noise.epsilon = a.epsilon;
      try {
        inst.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError("environment", std::string(e.what()) + " (with " + path +
                                             ".epsilon = " + format_double(a.epsilon) + ")");
      }
    }
  }
  if (kind == ExperimentKind::mdp) {
    LinearMDPSpec spec;
    try {
      spec = mdp.build();
      spec.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("environment", e.what());
    }
    for (std::size_t i = 0; i < algorithms.size(); ++i) {
      const auto& a = algorithms[i];
      try {
        MdpLearnerParams::for_spec(spec, a.horizon, a.delta, a.bonus_scale, a.nu_min, a.sigma_min)
            .validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError("algorithms[" + std::to_string(i) + "]", e.what());
      }
    }
  }
}

json ExperimentConfig::canonical() const {
  json c;
  c["name"] = name;
  c["kind"] = kind_name(kind);
  c["seeds"] = seeds;
  if (kind == ExperimentKind::regression_check) {
    c["suites"]["concentration"] = {{"runs", concentration.runs},
                                    {"dim", concentration.dim},
                                    {"horizon", concentration.horizon},
                                    {"epsilon", num(concentration.epsilon)},
                                    {"delta", num(concentration.delta)},
                                    {"df", num(concentration.df)},
                                    {"lambda", num(concentration.lambda)},
                                    {"theta_norm", num(concentration.theta_norm)}};
    c["suites"]["perturbation"] = {{"trials", perturbation.trials},
                                   {"dim", perturbation.dim},
                                   {"horizon", perturbation.horizon},
                                   {"noise_scale", num(perturbation.noise_scale)}};
    return c;
  }
  json algos = json::array();
  for (const auto& a : algorithms) {
    json j = {{"name", a.name},
              {"label", a.label},
              {"bonus_scale", num(a.bonus_scale)},
              {"delta", num(a.delta)}};
    j[kind == ExperimentKind::mdp ? "episodes" : "horizon"] = a.horizon;
    if (kind == ExperimentKind::bandit) j["epsilon"] = num(a.epsilon);
    if (a.sigma_min) j["sigma_min"] = num(*a.sigma_min);
    if (a.nu_min) j["nu_min"] = num(*a.nu_min);
    if (a.name == "median_of_means") j["folds"] = a.folds;
    if (a.name == "truncation") j["truncation_scale"] = num(a.truncation_scale);
    algos.push_back(j);
  }
  c["algorithms"] = algos;
  json env;
  if (kind == ExperimentKind::bandit) {
    const auto& b = bandit;
    env["dim"] = b.dim;
    env["B"] = num(b.B);
    env["L"] = num(b.L);
    env["reveal_nu"] = b.reveal_nu;
    env["theta_star"] = json::array();
    for (int i = 0; i < b.dim; ++i) env["theta_star"].push_back(num(b.theta_star[i]));
    env["decision_set"]["kind"] = enum_name(kArmKinds, b.decision_set.kind);
    if (b.decision_set.kind == ArmKind::fixed) {
      env["decision_set"]["arms"] = json::array();
      for (const Vector& arm : b.decision_set.fixed) {
        json row = json::array();
        for (int i = 0; i < arm.size(); ++i) row.push_back(num(arm[i]));
        env["decision_set"]["arms"].push_back(row);
      }
    } else {
      env["decision_set"]["arms"] = b.decision_set.arms;
    }
    env["noise"] = {{"kind", enum_name(kNoiseKinds, b.noise.kind)},
                    {"df", num(b.noise.df)},
                    {"scale", num(b.noise.scale)},
                    {"log10_lo", num(b.noise.log10_lo)},
                    {"log10_hi", num(b.noise.log10_hi)}};
  } else {
    const auto& m = mdp;
    env = {{"states", m.states},
           {"actions", m.actions},
           {"horizon", m.horizon},
           {"seed", m.seed},
           {"initial_state", m.initial_state}};
    env["rewards"] = {{"lo", num(m.rewards.lo)},
                      {"hi", num(m.rewards.hi)},
                      {"cap", num(m.rewards.cap)},
                      {"concentration", num(m.rewards.concentration)},
                      {"epsilon", num(m.rewards.epsilon)},
                      {"epsilon_prime", num(m.rewards.epsilon_prime)}};
    env["noise"] = {{"kind", enum_name(kNoiseKinds, m.noise.kind)},
                    {"df", num(m.noise.df)},
                    {"scale_lo", num(m.noise.scale_lo)},
                    {"scale_hi", num(m.noise.scale_hi)}};
  }
  c["environment"] = env;
  return c;
}

std::string ExperimentConfig::fingerprint() const {
  const std::string text = canonical().dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int effective_jobs(int requested) {
  const char* env = std::getenv("HEAVYRL_DETERMINISTIC");
  if (env && std::string(env) == "1") return 1;
  return std::max(1, requested);
}

int ExperimentResult::failed_runs() const {
  int n = 0;
  for (const auto& r : records) n += !r.complete;
  return n;
}

std::string make_run_id(const std::string& algorithm, std::uint64_t seed,
                        const std::string& fingerprint) {
  return algorithm + "-s" + std::to_string(seed) + "-" + fingerprint.substr(0, 8);
}

ExperimentResult run_experiment(const ExperimentConfig& config, int jobs) {
  config.validate();
  ExperimentResult result;
  if (config.kind == ExperimentKind::regression_check) {
    for (std::uint64_t seed : config.seeds) {
      auto conc = concentration_suite(config.concentration, seed);
      auto pert = perturbation_suite(config.perturbation, seed);
      result.suites_passed &= conc.frequency() >= 0.85 && pert.frequency() == 1.0;
      result.suites.emplace_back("concentration/" + std::to_string(seed), std::move(conc));
      result.suites.emplace_back("perturbation/" + std::to_string(seed), std::move(pert));
    }
    return result;
  }

  const std::string fp = config.fingerprint();
  std::optional<LinearMDPSpec> spec;
  if (config.kind == ExperimentKind::mdp) spec = config.mdp.build();

  struct Task {
    const AlgorithmConfig* algo;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const auto& a : config.algorithms) {
    for (std::uint64_t s : config.seeds) tasks.push_back({&a, s});
  }
  result.records.resize(tasks.size());

  auto execute = [&](const Task& task) {
    const AlgorithmConfig& a = *task.algo;
    RunRecord record;
    try {
      if (config.kind == ExperimentKind::bandit) {
        BanditInstance inst = config.bandit;
        inst.noise.epsilon = a.epsilon;
        LearnerParams p =
            LearnerParams::for_instance(inst, a.horizon, a.epsilon, a.delta, a.bonus_scale);
        if (a.sigma_min) p.sigma_min = *a.sigma_min;
        p.folds = a.folds;
        p.truncation_scale = a.truncation_scale;
        auto learner = make_bandit_learner(a.name, p);
        record = run_bandit(inst, *learner, a.horizon, task.seed);
      } else {
        const auto params = MdpLearnerParams::for_spec(*spec, a.horizon, a.delta, a.bonus_scale,
                                                       a.nu_min, a.sigma_min);
        record = run_mdp(*spec, params, task.seed).record;
      }
    } catch (const std::exception& e) {
      record.complete = false;
      record.error = e.what();
    }
    record.algorithm = a.label;
    record.seed = task.seed;
    record.fingerprint = fp;
    record.run_id = make_run_id(a.label, task.seed, fp);
    return record;
  };

  const int workers = std::min<int>(effective_jobs(jobs), static_cast<int>(tasks.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) result.records[i] = execute(tasks[i]);
    return result;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < tasks.size(); i = next++) {
        result.records[i] = execute(tasks[i]);
      }
    });
  }
  for (auto& th : pool) th.join();
  return result;
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string run_csv(const RunRecord& record) {
  std::string out = kCsvHeader;
  out += '\n';
  const std::string prefix = "1," + record.run_id + "," + std::to_string(record.seed) + ",";
  for (const auto& row : record.rows) {
    out += prefix;
    out += std::to_string(row.t);
    out += ',';
    out += format_double(row.instant_regret);
    out += ',';
    out += format_double(row.cum_regret);
    out += ",\"";
    for (char ch : row.diag_json) {
      if (ch == '"') out += '"';
      out += ch;
    }
    out += "\"\n";
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cells.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.emplace_back();
    } else {
      cells.back() += ch;
    }
  }
  if (quoted) throw std::runtime_error("unterminated quote");
  return cells;
}

}  // namespace

RunRecord parse_run_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw std::runtime_error("missing or unsupported CSV header");
  }
  RunRecord record;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 7 || cells[0] != "1") {
      throw std::runtime_error("malformed row at line " + std::to_string(lineno));
    }
    if (record.rows.empty()) {
      record.run_id = cells[1];
      record.seed = std::stoull(cells[2]);
      record.algorithm = record.run_id.substr(0, record.run_id.find('-'));
      const auto dash = record.run_id.rfind('-');
      if (dash != std::string::npos) record.fingerprint = record.run_id.substr(dash + 1);
    } else if (cells[1] != record.run_id) {
      throw std::runtime_error("mixed run ids at line " + std::to_string(lineno));
    }
    record.rows.push_back({std::stoll(cells[3]), std::stod(cells[4]), std::stod(cells[5]), cells[6]});
  }
  return record;
}

std::vector<RegretCurve> aggregate(const std::vector<RunRecord>& records) {
  std::vector<RegretCurve> curves;
  std::vector<std::vector<const RunRecord*>> groups;
  for (const auto& r : records) {
    if (!r.complete || r.rows.empty()) continue;
    auto it = std::find_if(curves.begin(), curves.end(),
                           [&](const RegretCurve& c) { return c.algorithm == r.algorithm; });
    if (it == curves.end()) {
      curves.push_back({r.algorithm, 0, {}, {}, {}});
      groups.emplace_back();
      it = curves.end() - 1;
    }
    groups[it - curves.begin()].push_back(&r);
  }
  for (std::size_t g = 0; g < curves.size(); ++g) {
    auto& curve = curves[g];
    auto& runs = groups[g];
    // seed order fixes the summation order, so report() reproduces the run's summary
    std::stable_sort(runs.begin(), runs.end(),
                     [](const RunRecord* a, const RunRecord* b) { return a->seed < b->seed; });
    curve.runs = static_cast<int>(runs.size());
    std::size_t len = runs.front()->rows.size();
    for (const auto* r : runs) len = std::min(len, r->rows.size());
    const double n = static_cast<double>(runs.size());
    for (std::size_t i = 0; i < len; ++i) {
      double sum = 0.0;
      for (const auto* r : runs) sum += r->rows[i].cum_regret;
      const double mean = sum / n;
      double ss = 0.0;
      for (const auto* r : runs) ss += (r->rows[i].cum_regret - mean) * (r->rows[i].cum_regret - mean);
      curve.t.push_back(runs.front()->rows[i].t);
      curve.mean.push_back(mean);
      curve.stddev.push_back(runs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0);
    }
  }
  return curves;
}

std::string summary_csv(const std::vector<RegretCurve>& curves) {
  std::string out = "algorithm,t,runs,mean_cum_regret,std_cum_regret\n";
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.t.size(); ++i) {
      out += c.algorithm + "," + std::to_string(c.t[i]) + "," + std::to_string(c.runs) + "," +
             format_double(c.mean[i]) + "," + format_double(c.stddev[i]) + "\n";
    }
  }
  return out;
}

namespace {

std::string fmt(double x, int digits = 2) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string tick_label(double x) {
  char buf[40];
  if (x != 0.0 && (std::abs(x) >= 1e6 || std::abs(x) < 1e-2)) {
    std::snprintf(buf, sizeof buf, "%.0e", x);
  } else {
    std::snprintf(buf, sizeof buf, "%g", x);
  }
  return buf;
}

double nice_step(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10.0 * mag;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string regret_svg(const std::vector<RegretCurve>& curves, const std::string& title) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  const double W = 720, H = 460, left = 80, right = 190, top = 40, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;

  double tmax = 1.0, ymax = 0.0;
  for (const auto& c : curves) {
    if (!c.t.empty()) tmax = std::max(tmax, static_cast<double>(c.t.back()));
    for (std::size_t i = 0; i < c.mean.size(); ++i) ymax = std::max(ymax, c.mean[i] + c.stddev[i]);
  }
  if (!(ymax > 0.0)) ymax = 1.0;
  const double ystep = nice_step(ymax, 5);
  ymax = std::ceil(ymax / ystep) * ystep;
  const double xstep = nice_step(tmax, 5);
  auto X = [&](double t) { return left + pw * t / tmax; };
  auto Y = [&](double y) { return top + ph * (1.0 - y / ymax); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" viewBox=\"0 0 " << W << " " << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << left + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
    << escape_xml(title) << "</text>\n";
  for (double y = 0.0; y <= ymax + 1e-9 * ymax; y += ystep) {
    s << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << fmt(Y(y))
      << "\" y2=\"" << fmt(Y(y)) << "\" stroke=\"#e5e5e5\"/>\n";
    s << "<text x=\"" << left - 6 << "\" y=\"" << fmt(Y(y) + 4) << "\" text-anchor=\"end\">"
      << tick_label(y) << "</text>\n";
  }
  for (double t = 0.0; t <= tmax + 1e-9 * tmax; t += xstep) {
    s << "<line x1=\"" << fmt(X(t)) << "\" x2=\"" << fmt(X(t)) << "\" y1=\"" << top + ph
      << "\" y2=\"" << top + ph + 5 << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << fmt(X(t)) << "\" y=\"" << top + ph + 20 << "\" text-anchor=\"middle\">"
      << tick_label(t) << "</text>\n";
  }
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">t</text>\n";
  s << "<text transform=\"translate(20," << top + ph / 2
    << ") rotate(-90)\" text-anchor=\"middle\">cumulative regret (mean &#177; 1 std)</text>\n";

  for (std::size_t k = 0; k < curves.size(); ++k) {
    const auto& c = curves[k];
    const char* color = palette[k % 8];
    if (c.t.empty()) continue;
    // at most ~400 vertices per series; the last point is always kept
    const std::size_t stride = std::max<std::size_t>(1, c.t.size() / 400);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < c.t.size(); i += stride) idx.push_back(i);
    if (idx.back() != c.t.size() - 1) idx.push_back(c.t.size() - 1);

    s << "<polygon fill=\"" << color << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
    for (std::size_t i : idx) s << fmt(X(c.t[i])) << "," << fmt(Y(c.mean[i] + c.stddev[i])) << " ";
    for (auto it = idx.rbegin(); it != idx.rend(); ++it) {
      s << fmt(X(c.t[*it])) << "," << fmt(Y(std::max(0.0, c.mean[*it] - c.stddev[*it]))) << " ";
    }
    s << "\"/>\n";
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t i : idx) s << fmt(X(c.t[i])) << "," << fmt(Y(c.mean[i])) << " ";
    s << "\"/>\n";
    const double ly = top + 14 + 20.0 * k;
    s << "<line x1=\"" << left + pw + 14 << "\" x2=\"" << left + pw + 38 << "\" y1=\"" << ly
      << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"3\"/>\n";
    s << "<text x=\"" << left + pw + 44 << "\" y=\"" << ly + 4 << "\">" << escape_xml(c.algorithm)
      << " (n=" << c.runs << ")</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void write_experiment(const ExperimentConfig& config, const ExperimentResult& result,
                      const fs::path& dir) {
  fs::create_directories(dir);
  write_file(dir / "config.json", config.canonical().dump(2) + "\n");
  json summary = {{"name", config.name},
                  {"kind", kind_name(config.kind)},
                  {"fingerprint", config.fingerprint()}};

  if (config.kind == ExperimentKind::regression_check) {
    std::string csv = "suite,seed,trial,held,detail\n";
    json suites = json::array();
    for (const auto& [name, res] : result.suites) {
      const std::string suite = name.substr(0, name.find('/'));
      const std::string seed = name.substr(name.find('/') + 1);
      for (int i = 0; i < res.trials(); ++i) {
        csv += suite + "," + seed + "," + std::to_string(i) + "," +
               (res.outcomes[i] ? "1" : "0") + "," + format_double(res.detail[i]) + "\n";
      }
      suites.push_back({{"suite", suite},
                        {"seed", std::stoull(seed)},
                        {"trials", res.trials()},
                        {"held", res.held()},
                        {"frequency", res.frequency()}});
    }
    write_file(dir / "regress.csv", csv);
    summary["suites"] = suites;
    summary["passed"] = result.suites_passed;
    write_file(dir / "summary.json", summary.dump(2) + "\n");
    return;
  }

  fs::create_directories(dir / "runs");
  json runs = json::array();
  for (const auto& r : result.records) {
    write_file(dir / "runs" / (r.run_id + ".csv"), run_csv(r));
    json j = {{"run_id", r.run_id},
              {"algorithm", r.algorithm},
              {"seed", r.seed},
              {"status", r.complete ? "complete" : "failed"},
              {"rows", r.rows.size()},
              {"final_regret", r.final_regret()}};
    if (!r.complete) j["error"] = r.error;
    runs.push_back(j);
  }
  const auto curves = aggregate(result.records);
  write_file(dir / "summary.csv", summary_csv(curves));
  json finals = json::object();
  for (const auto& c : curves) {
    if (c.t.empty()) continue;
    finals[c.algorithm] = {{"runs", c.runs},
                           {"t", c.t.back()},
                           {"mean_cum_regret", c.mean.back()},
                           {"std_cum_regret", c.stddev.back()}};
  }
  summary["runs"] = runs;
  summary["final"] = finals;
  summary["failed_runs"] = result.failed_runs();
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  if (config.emit_figures) write_file(dir / (config.name + ".svg"), regret_svg(curves, config.name));
}

int report(const fs::path& dir, const std::string& name) {
  const fs::path runs_dir = dir / "runs";
  if (!fs::is_directory(runs_dir)) throw std::runtime_error("no runs/ directory under " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(runs_dir)) {
    if (entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RunRecord> records;
  for (const auto& file : files) {
    try {
      records.push_back(parse_run_csv(read_file(file)));
    } catch (const std::exception& e) {
      throw std::runtime_error(file.string() + ": " + e.what());
    }
  }
  std::string title = name;
  if (title.empty() && fs::exists(dir / "summary.json")) {
    const json s = json::parse(read_file(dir / "summary.json"), nullptr, false);
    if (s.is_object() && s.contains("name") && s["name"].is_string()) title = s["name"];
  }
  if (title.empty()) title = "regret";
  const auto curves = aggregate(records);
  write_file(dir / "summary.csv", summary_csv(curves));
  write_file(dir / (title + ".svg"), regret_svg(curves, title));
  return static_cast<int>(records.size());
}

}  // namespace heavyrl
