#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "heavyrl/harness.hpp"
#include "heavyrl/huber.hpp"
#include "heavyrl/linear_mdp.hpp"
#include "heavyrl/regression.hpp"

namespace py = pybind11;
using namespace heavyrl;

namespace {

py::dict record_dict(const RunRecord& r) {
  const auto n = static_cast<py::ssize_t>(r.rows.size());
  py::array_t<std::int64_t> t(n);
  py::array_t<double> inst(n), cum(n);
  auto pt = t.mutable_unchecked<1>();
  auto pi = inst.mutable_unchecked<1>();
  auto pc = cum.mutable_unchecked<1>();
  for (py::ssize_t i = 0; i < n; ++i) {
    pt(i) = r.rows[i].t;
    pi(i) = r.rows[i].instant_regret;
    pc(i) = r.rows[i].cum_regret;
  }
  py::dict d;
  d["run_id"] = r.run_id;
  d["algorithm"] = r.algorithm;
  d["seed"] = r.seed;
  d["complete"] = r.complete;
  d["error"] = r.error;
  d["t"] = t;
  d["instant_regret"] = inst;
  d["cum_regret"] = cum;
  return d;
}

py::dict suite_dict(const SuiteResult& s) {
  py::dict d;
  d["outcomes"] = s.outcomes;
  d["detail"] = s.detail;
  d["frequency"] = s.frequency();
  return d;
}

}  // namespace

PYBIND11_MODULE(_heavyrl, m) {
  m.doc() = "Heavy-tailed linear bandits and linear MDPs via adaptive Huber regression";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("huber_loss", py::vectorize(huber_loss), py::arg("x"), py::arg("tau"));
  m.def("huber_grad", py::vectorize(huber_grad), py::arg("x"), py::arg("tau"));
  m.def("huber_kappa", &huber_kappa, py::arg("dim"), py::arg("horizon"), py::arg("L"),
        py::arg("lam"), py::arg("sigma_min"));

  py::class_<HuberScheduleConfig>(m, "HuberSchedule")
      .def_readonly("epsilon", &HuberScheduleConfig::epsilon)
      .def_readonly("horizon", &HuberScheduleConfig::horizon)
      .def_readonly("delta", &HuberScheduleConfig::delta)
      .def_readonly("kappa", &HuberScheduleConfig::kappa)
      .def_readonly("c0", &HuberScheduleConfig::c0)
      .def_readonly("c1", &HuberScheduleConfig::c1)
      .def_readonly("tau0", &HuberScheduleConfig::tau0)
      .def_readonly("B", &HuberScheduleConfig::B)
      .def_readonly("L", &HuberScheduleConfig::L)
      .def_readonly("sigma_min", &HuberScheduleConfig::sigma_min);

  m.def(
      "default_schedule",
      [](int dim, double epsilon, std::int64_t horizon, double delta, double b, double B,
         double L, double lam, std::optional<double> sigma_min) {
        const double smin = sigma_min.value_or(1.0 / std::sqrt(static_cast<double>(horizon)));
        const double kappa = huber_kappa(dim, horizon, L, lam, smin);
        return default_schedule(epsilon, horizon, delta, b, kappa, B, L, smin);
      },
      py::arg("dim"), py::arg("epsilon"), py::arg("horizon"), py::arg("delta") = 0.1,
      py::arg("b") = 1.0, py::arg("B") = 1.0, py::arg("L") = 1.0, py::arg("lam") = 1.0,
      py::arg("sigma_min") = py::none());

  py::class_<HuberRegressor>(m, "HuberRegressor")
      .def(py::init<int, double, const HuberScheduleConfig&>(), py::arg("dim"), py::arg("lam"),
           py::arg("schedule"))
      .def(
          "record",
          [](HuberRegressor& r, const Vector& phi, double y, double nu) {
            const auto out = r.record(phi, y, nu);
            py::dict d;
            d["sigma"] = out.weights.sigma;
            d["tau"] = out.weights.tau;
            d["w"] = out.weights.w;
            d["iterations"] = out.iterations;
            d["converged"] = out.converged;
            return d;
          },
          py::arg("phi"), py::arg("y"), py::arg("nu"))
      .def_property_readonly("theta", &HuberRegressor::theta)
      .def_property_readonly("t", &HuberRegressor::t)
      .def_property_readonly("radius", &HuberRegressor::confidence_radius)
      .def_property_readonly("gram", [](const HuberRegressor& r) { return r.precision().gram(); })
      .def("contains",
           [](const HuberRegressor& r, const Vector& theta) {
             return r.confidence_set().contains(theta);
           })
      .def("serialize", &HuberRegressor::serialize)
      .def_static("deserialize", &HuberRegressor::deserialize);

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def_readonly("name", &ExperimentConfig::name)
      .def_property_readonly("kind", [](const ExperimentConfig& c) { return kind_name(c.kind); })
      .def_readwrite("seeds", &ExperimentConfig::seeds)
      .def_readwrite("output_dir", &ExperimentConfig::output_dir)
      .def("fingerprint", &ExperimentConfig::fingerprint)
      .def("canonical", [](const ExperimentConfig& c) { return c.canonical().dump(); });

  m.def("parse_config", &parse_config, py::arg("text"), py::arg("base_dir") = ".");
  m.def("load_config", &load_config, py::arg("path"));

  m.def(
      "run_experiment",
      [](const ExperimentConfig& config, int jobs, std::optional<std::string> out) {
        config.validate();
        ExperimentResult result;
        {
          py::gil_scoped_release release;
          result = run_experiment(config, effective_jobs(jobs));
          if (out) write_experiment(config, result, *out);
        }
        py::dict d;
        py::list runs;
        for (const auto& r : result.records) runs.append(record_dict(r));
        py::dict suites;
        for (const auto& [name, s] : result.suites) suites[py::str(name)] = suite_dict(s);
        d["runs"] = runs;
        d["suites"] = suites;
        d["ok"] = result.ok();
        return d;
      },
      py::arg("config"), py::arg("jobs") = 1, py::arg("out") = py::none());

  m.def("report", &report, py::arg("dir"), py::arg("name") = "");

  m.def("exact_dp_values", [](const ExperimentConfig& config) {
    const auto dp = exact_dp_oracle(config.mdp.build());
    return dp.V;
  });

  m.def("selftest", [] {
    std::vector<std::tuple<std::string, bool, std::string>> out;
    for (const auto& c : selftest()) out.emplace_back(c.name, c.passed, c.detail);
    return out;
  });
}
