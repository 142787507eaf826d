#include "indiff/errors.hpp"
#include "indiff/routes.hpp"
#include "indiff/scenario_io.hpp"
#include "indiff/validation.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>

namespace py = pybind11;
using namespace indiff;

namespace {

RouteOptions route_options(std::size_t paths, std::size_t steps, std::uint64_t seed,
                           std::optional<std::size_t> j_override) {
  RouteOptions o;
  o.paths = paths;
  o.steps = steps;
  o.seed = seed;
  o.j_override = j_override;
  return o;
}

py::dict pricing_dict(const PricingResult& r) {
  py::dict out;
  out["route"] = r.route;
  out["price"] = r.price;
  out["price_stderr"] = r.price_stderr;
  out["y0_lambda"] = r.y0_lambda;
  out["y0_zero"] = r.y0_zero;
  out["hedge_mean"] = r.hedge_mean;
  out["hedge_stderr"] = r.hedge_stderr;
  out["strategy_mean"] = r.strategy_mean;
  out["strategy_stderr"] = r.strategy_stderr;
  out["diagnostics"] = r.diagnostics;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Utility indifference pricing under basis risk";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ScenarioError>(m, "ScenarioError", PyExc_ValueError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);

  py::class_<Scenario>(m, "Scenario")
      .def_readonly("name", &Scenario::name)
      .def_readonly("d", &Scenario::d)
      .def_readonly("T", &Scenario::T)
      .def_readonly("gamma", &Scenario::gamma)
      .def_readonly("lambda_", &Scenario::lambda)
      .def("with_lambda", &Scenario::with_lambda)
      .def("summary_json", [](const Scenario& s) { return scenario_summary(s).dump(); })
      .def("__repr__", [](const Scenario& s) { return "<Scenario " + s.name + ">"; });

  m.def("reference_scenario", &reference_scenario);
  m.def("orthogonal_scenario", [] { return orthogonal_variant(reference_scenario()); });
  m.def("load_scenario", [](const std::string& file) { return load_config(file).scenario; }, py::arg("path"));
  m.def("scenario_from_json", [](const std::string& text) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("not valid JSON: ") + e.what());
    }
    return config_from_json(j).scenario;
  });

  m.def("constants_json", [](const Scenario& s) { return ledger_to_json(validate_scenario(s)).dump(); });

  m.def(
      "oracle",
      [](const Scenario& s) -> py::object {
        const std::optional<OracleValue> v = oracle_route(s);
        if (!v) return py::none();
        py::dict out;
        out["price"] = v->price;
        out["method"] = v->method;
        return out;
      },
      py::arg("scenario"));

  m.def(
      "price",
      [](const Scenario& s, const std::string& route, std::size_t paths, std::size_t steps, std::uint64_t seed,
         std::optional<std::size_t> j_override) {
        const ConstantsLedger ledger = validate_scenario(s);
        const RouteOptions o = route_options(paths, steps, seed, j_override);
        py::gil_scoped_release release;
        PricingResult r;
        if (route == "bsde") {
          r = run_bsde_route(s, ledger, o);
        } else if (route == "fde") {
          r = run_fde_route(s, ledger, o);
        } else if (route == "perturbation") {
          r = run_perturbation_route(s, ledger, o);
        } else if (route == "girsanov") {
          r = run_girsanov_route(s, ledger, o).pricing;
        } else {
          throw ConfigError("unknown route '" + route + "'");
        }
        py::gil_scoped_acquire hold;
        return pricing_dict(r);
      },
      py::arg("scenario"), py::arg("route") = "bsde", py::arg("paths") = 50000, py::arg("steps") = 50,
      py::arg("seed") = 42, py::arg("j_override") = py::none());
}
