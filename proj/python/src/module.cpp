#include "latentfit/coxph.hpp"
#include "latentfit/error.hpp"
#include "latentfit/fit.hpp"
#include "latentfit/likelihood.hpp"
#include "latentfit/model_spec.hpp"
#include "latentfit/workloads.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace py = pybind11;
using namespace latentfit;

namespace {

using Columns = std::map<std::string, std::vector<double>>;

DataTable to_table(const Columns& columns) {
  DataTable t;
  for (const auto& [name, values] : columns) t.set(name, values);
  return t;
}

Columns from_table(const DataTable& t) {
  Columns out;
  for (const auto& name : t.names()) out[name] = t.column(name);
  return out;
}

// Rows mean, sd, q025, q50, q975.
Eigen::MatrixXd summary_matrix(const std::vector<Summary>& s) {
  Eigen::MatrixXd m(s.size(), 5);
  for (std::size_t i = 0; i < s.size(); ++i) m.row(i) << s[i].mean, s[i].sd, s[i].q025, s[i].q50, s[i].q975;
  return m;
}

py::dict run_fit(const std::string& spec_text, const Columns& data, const std::string& strategy,
                 const std::string& int_strategy, const std::string& mode, int threads,
                 std::optional<Eigen::VectorXd> fixed_theta, std::optional<std::vector<int>> vb_nodes) {
  const ModelSpec spec = parse_model_spec_string(spec_text);
  const DataTable table = to_table(data);
  FitConfig cfg;
  cfg.strategy = strategy_from_string(strategy);
  cfg.int_strategy = int_strategy_from_string(int_strategy);
  cfg.mode = formulation_from_string(mode);
  cfg.threads = threads;
  cfg.fixed_theta = std::move(fixed_theta);
  cfg.vb_nodes = std::move(vb_nodes);

  FitResult r;
  {
    py::gil_scoped_release release;
    r = fit(spec, table, cfg);
  }

  py::list hyper;
  for (const auto& h : r.hyper_summary) {
    py::dict d;
    d["name"] = h.name;
    d["mode"] = h.mode;
    d["mean"] = h.mean;
    d["sd"] = h.sd;
    d["precision_mean"] = h.precision_mean;
    hyper.append(d);
  }
  const auto& rep = r.report;
  py::dict report;
  report["mode"] = rep.mode;
  report["strategy"] = rep.strategy;
  report["int_strategy"] = rep.int_strategy;
  report["n"] = rep.n;
  report["m"] = rep.m;
  report["field_dim"] = rep.field_dim;
  report["q"] = rep.q;
  report["grid_points"] = rep.grid_points;
  report["vb_nodes"] = rep.vb_nodes;
  report["time_total"] = rep.time_total;
  report["all_converged"] = rep.all_converged();

  py::dict out;
  out["labels"] = r.latent_labels;
  out["latent"] = summary_matrix(r.latent_summary);
  out["linpred"] = summary_matrix(r.linpred_summary);
  out["hyper"] = hyper;
  out["report"] = report;
  return out;
}

std::pair<Columns, std::string> simulate(const std::string& kind, int n, int items, double beta,
                                         std::uint64_t seed) {
  if (kind == "irt") return {from_table(simulate_irt(n, items, seed).table), emit_model_spec(irt_model_spec(n, items))};
  if (kind == "glm") return {from_table(simulate_glm(n, 0.5, beta, seed).table), emit_model_spec(glm_model_spec())};
  if (kind == "cox") return {from_table(simulate_cox_table(n, beta, seed).table), ""};
  throw Error("unknown simulation kind '" + kind + "' (expected irt, glm or cox)");
}

std::pair<Columns, std::string> augment_cox(const std::vector<double>& time, const std::vector<double>& event,
                                            const Columns& covariates, int bins, const std::string& baseline) {
  if (baseline != "rw1" && baseline != "rw2") throw Error("baseline must be rw1 or rw2");
  const auto kind = baseline == "rw2" ? ComponentKind::Rw2 : ComponentKind::Rw1;
  const auto grid = cox::make_bins(time, bins);
  const auto a = cox::augment(time, event, to_table(covariates), grid);
  std::vector<std::string> names;
  for (const auto& [name, _] : covariates) names.push_back(name);
  return {from_table(a.table), emit_model_spec(cox::cox_model_spec(names, bins, kind))};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Latent Gaussian model inference core";

  auto base = py::register_exception<Error>(m, "LatentfitError", PyExc_RuntimeError);
  py::register_exception<SpecError>(m, "SpecError", base.ptr());

  m.def("fit", &run_fit, py::arg("spec"), py::arg("data"), py::arg("strategy") = "vb",
        py::arg("int_strategy") = "grid", py::arg("mode") = "modern", py::arg("threads") = 1,
        py::arg("fixed_theta") = py::none(), py::arg("vb_nodes") = py::none());
  m.def("canonical_spec", [](const std::string& text) { return emit_model_spec(parse_model_spec_string(text)); },
        py::arg("text"));
  m.def("simulate", &simulate, py::arg("kind"), py::arg("n"), py::arg("items") = 20, py::arg("beta") = 0.1,
        py::arg("seed") = 1);
  m.def("augment_cox", &augment_cox, py::arg("time"), py::arg("event"), py::arg("covariates"), py::arg("bins"),
        py::arg("baseline") = "rw1");
  m.def(
      "expected_poisson_loglik",
      [](double y, double mu, double sigma, int nodes) {
        return expected_loglik_gh(Family{.kind = FamilyKind::Poisson}, Datum{y, 0.0, 1.0}, mu, sigma, {}, nodes);
      },
      py::arg("y"), py::arg("mu"), py::arg("sigma"), py::arg("nodes") = kDefaultHermiteNodes);
}
