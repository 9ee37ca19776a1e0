// latentfit command-line tool: fit, simulate, benchmark, oracle.
// Exit codes: 0 success with every convergence flag set, 1 fit completed but
// something did not converge, 2 usage or input error.

#include "latentfit/coxph.hpp"
#include "latentfit/data.hpp"
#include "latentfit/error.hpp"
#include "latentfit/fit.hpp"
#include "latentfit/model_spec.hpp"
#include "latentfit/oracle.hpp"
#include "latentfit/workloads.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace latentfit;

namespace {

struct FitArgs {
  std::string model, data, out = "latentfit_out";
  std::string strategy = "vb", int_strategy = "grid", mode = "modern";
  int threads = 1;
  std::uint64_t seed = 1;
  int n_gh = kDefaultHermiteNodes;
  std::vector<int> vb_nodes;
  int cox_bins = 0;
  std::string baseline = "rw1";
  std::vector<std::string> covariates;
};

struct SimArgs {
  std::string kind = "glm", out = "latentfit_sim";
  int n = 500, items = 20, bins = 50;
  double beta = 0.1, beta0 = -1.0;
  std::uint64_t seed = 1;
};

struct BenchArgs {
  std::string suite = "cox", out;
  std::vector<int> sizes{100, 1000};
  std::vector<std::string> modes{"modern", "classic"};
  int threads = 1;
  std::uint64_t seed = 1;
};

struct OracleArgs {
  std::string model, data, method = "metropolis";
  long draws = 200000;
  std::uint64_t seed = 1;
};

FitConfig make_config(const FitArgs& a) {
  FitConfig c;
  c.strategy = strategy_from_string(a.strategy);
  c.int_strategy = int_strategy_from_string(a.int_strategy);
  c.mode = formulation_from_string(a.mode);
  c.threads = a.threads;
  c.seed = a.seed;
  c.vb.n_gh = a.n_gh;
  if (!a.vb_nodes.empty()) c.vb_nodes = a.vb_nodes;
  return c;
}

// Model spec and data table, augmenting survival data when bins are requested.
std::pair<ModelSpec, DataTable> load_problem(const FitArgs& a, int& subjects) {
  DataTable data = read_csv_file(a.data);
  if (a.cox_bins > 0) {
    const auto baseline = component_kind_from_string(a.baseline);
    auto p = prepare_cox(data, a.covariates, a.cox_bins, baseline);
    subjects = data.rows();
    if (p.augmented.dropped > 0)
      std::cerr << "warning: dropped " << p.augmented.dropped << " zero-exposure rows\n";
    fs::create_directories(a.out);
    write_csv_file((fs::path(a.out) / "augmented.csv").string(), p.augmented.table);
    ModelSpec spec = a.model.empty() ? p.spec : parse_model_spec_file(a.model);
    return {std::move(spec), std::move(p.augmented.table)};
  }
  if (a.model.empty()) throw Error("--model is required unless --cox-bins is given");
  return {parse_model_spec_file(a.model), std::move(data)};
}

int run_fit(const FitArgs& a) {
  int subjects = 0;
  auto [spec, data] = load_problem(a, subjects);
  auto result = fit(spec, data, make_config(a));
  result.report.subjects = subjects;
  write_outputs(result, a.out);
  std::cout << "latent effects\n";
  for (std::size_t j = 0; j < result.latent_summary.size() && j < 40; ++j) {
    const auto& s = result.latent_summary[j];
    std::cout << "  " << result.latent_labels[j] << ": mean " << format_number(s.mean) << " sd "
              << format_number(s.sd) << " [" << format_number(s.q025) << ", " << format_number(s.q975) << "]\n";
  }
  if (result.latent_summary.size() > 40) std::cout << "  ... see latent.csv\n";
  for (const auto& h : result.hyper_summary)
    std::cout << "  " << h.name << ": log-precision mean " << format_number(h.mean) << " sd " << format_number(h.sd)
              << "\n";
  std::cout << "outputs written to " << a.out << "\n";
  if (!result.report.all_converged()) {
    std::cerr << "warning: not all convergence flags are set (see report.txt)\n";
    return 1;
  }
  return 0;
}

int run_simulate(const SimArgs& a) {
  const Suite kind = suite_from_string(a.kind);
  fs::create_directories(a.out);
  const fs::path out(a.out);
  SimulatedData sim;
  ModelSpec spec;
  switch (kind) {
    case Suite::Cox:
      sim = simulate_cox_table(a.n, a.beta, a.seed);
      spec = cox::cox_model_spec({"x"}, a.bins);
      break;
    case Suite::Irt:
      sim = simulate_irt(a.n, a.items, a.seed);
      spec = irt_model_spec(a.n, a.items);
      break;
    case Suite::Glm:
      sim = simulate_glm(a.n, a.beta0, a.beta, a.seed);
      spec = glm_model_spec();
      break;
  }
  write_csv_file((out / "data.csv").string(), sim.table);
  write_csv_file((out / "truth.csv").string(), sim.truth);
  std::ofstream(out / "model.spec") << emit_model_spec(spec);
  std::cout << "wrote " << sim.table.rows() << " rows to " << (out / "data.csv").string() << "\n";
  if (kind == Suite::Cox)
    std::cout << "fit with: latentfit fit --data " << (out / "data.csv").string() << " --cox-bins " << a.bins
              << " --covariates x\n";
  return 0;
}

int run_benchmark_cmd(const BenchArgs& a) {
  std::vector<Formulation> modes;
  for (const auto& m : a.modes) modes.push_back(formulation_from_string(m));
  FitConfig c;
  c.threads = a.threads;
  c.int_strategy = IntStrategy::EmpiricalBayes;
  const auto rows = run_benchmark(suite_from_string(a.suite), a.sizes, modes, c, a.seed);
  write_benchmark_text(std::cout, rows);
  if (!a.out.empty()) {
    std::ofstream csv(a.out);
    if (!csv) throw Error("cannot write " + a.out);
    write_benchmark_csv(csv, rows);
  }
  return 0;
}

// Box for quadrature: engine summaries widened to +-10 sd.
std::pair<std::vector<double>, std::vector<double>> quadrature_box(const FitResult& r) {
  std::vector<double> lo, hi;
  for (const auto& s : r.latent_summary) {
    lo.push_back(s.mean - 10.0 * s.sd);
    hi.push_back(s.mean + 10.0 * s.sd);
  }
  for (const auto& h : r.hyper_summary) {
    const double w = h.sd > 0.0 ? 10.0 * h.sd : 5.0;
    lo.push_back(h.mean - w);
    hi.push_back(h.mean + w);
  }
  return {lo, hi};
}

int run_oracle(const OracleArgs& a) {
  const ModelSpec spec = parse_model_spec_file(a.model);
  const DataTable data = read_csv_file(a.data);
  const BuiltModel built = build_model(spec, data);
  const auto lgm = oracle::DenseLgm::from_built(built);
  oracle::OracleResult res;
  if (a.method == "metropolis") {
    oracle::MetropolisOptions o;
    o.draws = a.draws;
    o.seed = a.seed;
    res = oracle::metropolis_lgm(lgm, o);
  } else if (a.method == "quadrature") {
    const auto [lo, hi] = quadrature_box(fit_built(built, {}));
    res = oracle::quadrature_posterior([&](std::span<const double> z) { return lgm.log_joint(z); }, lo, hi);
  } else {
    throw Error("unknown oracle method '" + a.method + "' (expected metropolis or quadrature)");
  }
  std::cout << "name,mean,sd,mcse\n";
  const int m = lgm.latent_dim();
  for (std::size_t k = 0; k < res.means.size(); ++k) {
    const std::string name = static_cast<int>(k) < m ? built.model->latent_label(static_cast<int>(k))
                                                     : "theta:" + built.model->hyper()[k - m].name;
    std::cout << csv_escape(name) << ',' << format_number(res.means[k]) << ',' << format_number(res.sds[k]) << ','
              << (res.mcse.empty() ? std::string() : format_number(res.mcse[k])) << '\n';
  }
  std::cerr << res.method << ": " << res.evaluations << " evaluations";
  if (res.draws) std::cerr << ", " << res.draws << " kept draws, acceptance " << res.acceptance;
  std::cerr << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latentfit: approximate Bayesian inference for latent Gaussian models"};
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model and write summaries");
  fit_cmd->add_option("--model", fa.model, "Model spec file");
  fit_cmd->add_option("--data", fa.data, "CSV data file")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--out", fa.out, "Output directory")->capture_default_str();
  fit_cmd->add_option("--strategy", fa.strategy, "gaussian or vb")
      ->check(CLI::IsMember({"gaussian", "vb"}))->capture_default_str();
  fit_cmd->add_option("--int-strategy", fa.int_strategy, "eb or grid")
      ->check(CLI::IsMember({"eb", "grid"}))->capture_default_str();
  fit_cmd->add_option("--mode", fa.mode, "modern or classic")
      ->check(CLI::IsMember({"modern", "classic"}))->capture_default_str();
  fit_cmd->add_option("--threads", fa.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  fit_cmd->add_option("--seed", fa.seed, "Seed (recorded; the fit is deterministic)")->capture_default_str();
  fit_cmd->add_option("--n-gh", fa.n_gh, "Gauss-Hermite nodes")->check(CLI::PositiveNumber)->capture_default_str();
  fit_cmd->add_option("--vb-nodes", fa.vb_nodes, "Latent indices for the mean correction")->delimiter(',');
  fit_cmd->add_option("--cox-bins", fa.cox_bins, "Treat data as survival (time, event) on this many bins");
  fit_cmd->add_option("--baseline", fa.baseline, "Baseline hazard prior: rw1 or rw2")
      ->check(CLI::IsMember({"rw1", "rw2"}))->capture_default_str();
  fit_cmd->add_option("--covariates", fa.covariates, "Survival covariate columns")->delimiter(',');

  SimArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "Write a seeded synthetic dataset, its truth and a model spec");
  sim_cmd->add_option("--kind", sa.kind, "cox, irt or glm")
      ->check(CLI::IsMember({"cox", "irt", "glm"}))->capture_default_str();
  sim_cmd->add_option("--n", sa.n, "Subjects, students or observations")->check(CLI::PositiveNumber)
      ->capture_default_str();
  sim_cmd->add_option("--items", sa.items, "IRT items")->check(CLI::PositiveNumber)->capture_default_str();
  sim_cmd->add_option("--bins", sa.bins, "Cox baseline bins in the emitted spec")->capture_default_str();
  sim_cmd->add_option("--beta", sa.beta, "Cox log hazard ratio or GLM slope")->capture_default_str();
  sim_cmd->add_option("--beta0", sa.beta0, "GLM intercept")->capture_default_str();
  sim_cmd->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
  sim_cmd->add_option("--out", sa.out, "Output directory")->capture_default_str();

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("benchmark", "Time modern and classic fits across sizes");
  bench_cmd->add_option("--suite", ba.suite, "cox, irt or glm")
      ->check(CLI::IsMember({"cox", "irt", "glm"}))->capture_default_str();
  bench_cmd->add_option("--sizes", ba.sizes, "Comma-separated sizes")->delimiter(',');
  bench_cmd->add_option("--modes", ba.modes, "Comma-separated formulations")->delimiter(',');
  bench_cmd->add_option("--threads", ba.threads, "Worker threads")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--seed", ba.seed, "Random seed");
  bench_cmd->add_option("--out", ba.out, "CSV output file");

  OracleArgs oa;
  auto* oracle_cmd = app.add_subcommand("oracle", "Reference posterior moments by sampling or quadrature");
  oracle_cmd->add_option("--model", oa.model, "Model spec file")->required()->check(CLI::ExistingFile);
  oracle_cmd->add_option("--data", oa.data, "CSV data file")->required()->check(CLI::ExistingFile);
  oracle_cmd->add_option("--method", oa.method, "metropolis or quadrature")
      ->check(CLI::IsMember({"metropolis", "quadrature"}))->capture_default_str();
  oracle_cmd->add_option("--draws", oa.draws, "Metropolis draws")->capture_default_str();
  oracle_cmd->add_option("--seed", oa.seed, "Random seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (fit_cmd->parsed()) return run_fit(fa);
    if (sim_cmd->parsed()) return run_simulate(sa);
    if (bench_cmd->parsed()) return run_benchmark_cmd(ba);
    if (oracle_cmd->parsed()) return run_oracle(oa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
