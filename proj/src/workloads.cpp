#include "latentfit/workloads.hpp"

#include "latentfit/error.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

namespace latentfit {

SimulatedData simulate_irt(int students, int items, std::uint64_t seed) {
  if (students < 1 || items < 1) throw Error("simulate_irt: sizes must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> kappa(students), alpha(items);
  for (auto& v : kappa) v = normal(rng);
  for (auto& v : alpha) v = normal(rng);
  std::vector<double> y, student, item;
  for (int j = 0; j < students; ++j)
    for (int i = 0; i < items; ++i) {
      const double eta = kappa[j] - alpha[i];
      y.push_back(unif(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0);
      student.push_back(j);
      item.push_back(i);
    }
  SimulatedData d;
  d.table.set("y", std::move(y));
  d.table.set("student", std::move(student));
  d.table.set("item", std::move(item));
  std::vector<double> kind, index, value;
  for (int j = 0; j < students; ++j) kind.push_back(0), index.push_back(j), value.push_back(kappa[j]);
  for (int i = 0; i < items; ++i) kind.push_back(1), index.push_back(i), value.push_back(alpha[i]);
  d.truth.set("kind", std::move(kind));
  d.truth.set("index", std::move(index));
  d.truth.set("value", std::move(value));
  return d;
}

ModelSpec irt_model_spec(int students, int items) {
  ModelSpec spec;
  spec.family = FamilyKind::Binomial;
  spec.response = "y";
  spec.components.push_back({.name = "ability", .kind = ComponentKind::Iid, .column = "student", .size = students});
  // Difficulties enter with a minus sign.
  spec.components.push_back(
      {.name = "difficulty", .kind = ComponentKind::Iid, .column = "item", .size = items, .weight = -1.0});
  return spec;
}

SimulatedData simulate_glm(int n, double beta0, double beta1, std::uint64_t seed) {
  if (n < 1) throw Error("simulate_glm: n must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = normal(rng);
    std::poisson_distribution<int> pois(std::exp(beta0 + beta1 * x[i]));
    y[i] = pois(rng);
  }
  SimulatedData d;
  d.table.set("y", std::move(y));
  d.table.set("x", std::move(x));
  d.truth.set("beta0", {beta0});
  d.truth.set("beta1", {beta1});
  return d;
}

ModelSpec glm_model_spec() {
  ModelSpec spec;
  spec.family = FamilyKind::Poisson;
  spec.response = "y";
  spec.components.push_back({.name = "(Intercept)", .kind = ComponentKind::Intercept});
  spec.components.push_back({.name = "x", .kind = ComponentKind::Linear, .column = "x"});
  return spec;
}

SimulatedData simulate_cox_table(int n, double beta, std::uint64_t seed) {
  auto s = cox::simulate_cox(n, beta, seed);
  SimulatedData d;
  d.table.set("time", std::move(s.time));
  d.table.set("event", std::move(s.event));
  d.table.set("x", std::move(s.x));
  d.truth.set("beta", {beta});
  return d;
}

CoxProblem prepare_cox(const DataTable& survival, const std::vector<std::string>& covariates, int bins,
                       ComponentKind baseline) {
  const auto& time = survival.column("time");
  const auto& event = survival.column("event");
  DataTable cov;
  for (const auto& c : covariates) cov.set(c, survival.column(c));
  CoxProblem p;
  p.bins = cox::make_bins(time, bins);
  p.augmented = cox::augment(time, event, cov, p.bins);
  p.spec = cox::cox_model_spec(covariates, bins, baseline);
  return p;
}

Suite suite_from_string(std::string_view s) {
  if (s == "cox") return Suite::Cox;
  if (s == "irt") return Suite::Irt;
  if (s == "glm") return Suite::Glm;
  throw Error("unknown suite '" + std::string(s) + "' (expected cox, irt or glm)");
}

std::string_view to_string(Suite s) {
  switch (s) {
    case Suite::Cox: return "cox";
    case Suite::Irt: return "irt";
    case Suite::Glm: return "glm";
  }
  return "?";
}

std::vector<BenchmarkRow> run_benchmark(Suite suite, const std::vector<int>& sizes,
                                        const std::vector<Formulation>& modes, const FitConfig& config,
                                        std::uint64_t seed) {
  std::vector<BenchmarkRow> rows;
  for (int size : sizes) {
    // Data are built once per size so both formulations see the same rows.
    ModelSpec spec;
    DataTable table;
    switch (suite) {
      case Suite::Cox: {
        const auto sim = simulate_cox_table(size, 0.1, seed);
        auto p = prepare_cox(sim.table, {"x"}, 50);
        spec = std::move(p.spec);
        table = std::move(p.augmented.table);
        break;
      }
      case Suite::Irt: {
        constexpr int kItems = 20;
        spec = irt_model_spec(size, kItems);
        table = simulate_irt(size, kItems, seed).table;
        break;
      }
      case Suite::Glm:
        spec = glm_model_spec();
        table = simulate_glm(size, 0.5, 0.3, seed).table;
        break;
    }
    const BuiltModel built = build_model(spec, table);
    for (Formulation mode : modes) {
      BenchmarkRow row;
      row.suite = std::string(to_string(suite));
      row.size = size;
      row.mode = std::string(to_string(mode));
      FitConfig c = config;
      c.mode = mode;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const auto r = fit_built(built, c);
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        row.m = r.report.m;
        row.n = r.report.n;
        row.field_dim = r.report.field_dim;
        row.ok = r.report.all_converged();
        if (!row.ok) row.error = "not converged";
      } catch (const std::exception& e) {
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_benchmark_text(std::ostream& out, const std::vector<BenchmarkRow>& rows) {
  out << std::left << std::setw(6) << "suite" << std::right << std::setw(8) << "size" << std::setw(9) << "mode"
      << std::setw(11) << "seconds" << std::setw(8) << "m" << std::setw(9) << "n" << std::setw(11) << "field"
      << "  status\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(6) << r.suite << std::right << std::setw(8) << r.size << std::setw(9) << r.mode
        << std::setw(11) << std::fixed << std::setprecision(3) << r.seconds << std::setw(8) << r.m << std::setw(9)
        << r.n << std::setw(11) << r.field_dim << "  " << (r.ok ? "ok" : r.error) << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows) {
  out << "suite,size,mode,seconds,m,n,field_dim,ok,error\n";
  for (const auto& r : rows)
    out << r.suite << ',' << r.size << ',' << r.mode << ',' << format_number(r.seconds) << ',' << r.m << ',' << r.n
        << ',' << r.field_dim << ',' << (r.ok ? 1 : 0) << ',' << csv_escape(r.error) << '\n';
}

}  // namespace latentfit
