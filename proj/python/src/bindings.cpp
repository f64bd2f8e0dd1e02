// Python extension. Structured values cross the boundary as JSON text; the
// package __init__ turns them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tabdiff/appshell/bundle.hpp"
#include "tabdiff/appshell/commands.hpp"
#include "tabdiff/appshell/experiments.hpp"
#include "tabdiff/appshell/generate.hpp"
#include "tabdiff/appshell/service.hpp"
#include "tabdiff/designs.hpp"
#include "tabdiff/evalkit.hpp"
#include "tabdiff/mask.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

std::string run_command_text(const std::string& command, const std::string& config) {
  py::gil_scoped_release release;
  return tabdiff::run_command(command, json::parse(config)).to_json().dump();
}

std::string replay_text(const std::string& manifest_path, const std::string& out_dir) {
  py::gil_scoped_release release;
  const auto m = tabdiff::load_manifest(manifest_path);
  std::optional<std::filesystem::path> out;
  if (!out_dir.empty()) out = out_dir;
  return tabdiff::replay_manifest(m, out).to_json().dump();
}

struct PyModel {
  std::shared_ptr<const tabdiff::ModelBundle> bundle;

  static PyModel load(const std::string& dir) {
    return PyModel{std::make_shared<const tabdiff::ModelBundle>(tabdiff::load_bundle(dir))};
  }
  std::string describe() const { return tabdiff::describe_model(*bundle).dump(); }
  std::string generate(const std::string& request) const {
    const auto req = tabdiff::GenerateRequest::from_json(json::parse(request));
    py::gil_scoped_release release;
    return tabdiff::result_payload(*bundle, tabdiff::run_generate(*bundle, req)).dump();
  }
  std::string experiment(const std::string& name, const std::string& config) const {
    const auto cfg = tabdiff::ExperimentConfig::from_json(json::parse(config));
    py::gil_scoped_release release;
    const auto report = tabdiff::run_experiment(name, *bundle, cfg);
    json tables = json::object();
    for (const auto& t : report.tables) tables[t.name] = t.to_json();
    return json{{"experiment", report.experiment}, {"summary", report.summary}, {"tables", tables}}.dump();
  }
};

}  // namespace

PYBIND11_MODULE(_tabdiff, m) {
  m.doc() = "Guided tabular diffusion core";

  static py::exception<tabdiff::Error> base(m, "Error", PyExc_RuntimeError);
  static py::exception<tabdiff::SpecError> spec_error(m, "SpecError", base.ptr());
  static py::exception<tabdiff::ConfigError> config_error(m, "ConfigError", base.ptr());
  static py::exception<tabdiff::ShapeError> shape_error(m, "ShapeError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const tabdiff::SpecError& e) {
      py::set_error(spec_error, e.what());
    } catch (const tabdiff::ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const tabdiff::ShapeError& e) {
      py::set_error(shape_error, e.what());
    } catch (const tabdiff::Error& e) {
      py::set_error(base, e.what());
    } catch (const json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("_run_command", &run_command_text, py::arg("command"), py::arg("config"));
  m.def("_replay", &replay_text, py::arg("manifest"), py::arg("out_dir") = "");

  m.def("mask_from_spec", [](std::size_t dim, const std::string& spec) {
    const auto mask = tabdiff::mask_from_spec(dim, spec);
    return std::vector<int>(mask.bits.begin(), mask.bits.end());
  }, py::arg("dim"), py::arg("spec"));
  m.def("mask_to_spec", [](const std::vector<int>& bits) {
    tabdiff::Mask mask;
    for (int b : bits) mask.bits.push_back(b ? 1 : 0);
    return tabdiff::mask_to_spec(mask);
  }, py::arg("bits"));

  m.def("mape", [](const std::vector<double>& values, double target) { return tabdiff::mape(values, target); },
        py::arg("values"), py::arg("target"));
  m.def("mmd", [](const std::vector<tabdiff::Vector>& a, const std::vector<tabdiff::Vector>& b,
                  std::optional<double> bandwidth) {
    const auto r = tabdiff::mmd_rbf(a, b, bandwidth);
    return py::make_tuple(r.value, r.bandwidth);
  }, py::arg("a"), py::arg("b"), py::arg("bandwidth") = py::none());
  m.def("_prd", [](const std::vector<tabdiff::Vector>& real, const std::vector<tabdiff::Vector>& gen,
                   std::size_t clusters, std::uint64_t seed) {
    return tabdiff::to_json(tabdiff::prd(real, gen, clusters, 1001, seed)).dump();
  }, py::arg("real"), py::arg("generated"), py::arg("clusters") = 20, py::arg("seed") = 0);

  m.def("synthetic_performance", [](const tabdiff::Vector& x) {
    return tabdiff::SyntheticProblem{}.performance(x);
  }, py::arg("x"));
  m.def("synthetic_dataset", [](std::size_t n, std::uint64_t seed) {
    const auto d = tabdiff::synth_generate(tabdiff::SyntheticProblem{}, n, seed);
    return py::make_tuple(d.designs, d.performance);
  }, py::arg("n"), py::arg("seed") = 0);

  py::class_<PyModel>(m, "_Model")
      .def_static("load", &PyModel::load, py::arg("path"))
      .def_property_readonly("name", [](const PyModel& p) { return p.bundle->name; })
      .def_property_readonly("dim", [](const PyModel& p) { return p.bundle->schema.dim(); })
      .def("default_target", [](const PyModel& p) { return p.bundle->default_target(); })
      .def("default_reference", [](const PyModel& p) { return p.bundle->default_reference(); })
      .def("_describe", &PyModel::describe)
      .def("_generate", &PyModel::generate, py::arg("request"))
      .def("_experiment", &PyModel::experiment, py::arg("name"), py::arg("config"));
}
