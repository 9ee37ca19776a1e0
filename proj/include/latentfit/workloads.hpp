#pragma once

// Seeded synthetic datasets with known truth, their model specs, and the
// classic-vs-modern timing harness.

#include "latentfit/coxph.hpp"
#include "latentfit/data.hpp"
#include "latentfit/fit.hpp"
#include "latentfit/lgm.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace latentfit {

struct SimulatedData {
  DataTable table;
  /// Generating parameters in a small numeric table.
  DataTable truth;
};

/// Rasch model: y_ij ~ Bernoulli(logit^-1(kappa_j - alpha_i)) for student j and
/// item i, kappa and alpha iid N(0, 1). Columns y, student, item.
/// Truth columns: kind (0 ability, 1 difficulty), index, value.
SimulatedData simulate_irt(int students, int items, std::uint64_t seed);
ModelSpec irt_model_spec(int students, int items);

/// Poisson GLM: x ~ N(0, 1), y ~ Poisson(exp(beta0 + beta1 x)). Columns y, x.
SimulatedData simulate_glm(int n, double beta0, double beta1, std::uint64_t seed);
ModelSpec glm_model_spec();

/// Weibull-hazard survival data: columns time, event, x; truth beta.
SimulatedData simulate_cox_table(int n, double beta, std::uint64_t seed);

/// Augments survival columns (time, event, covariates) onto `bins` equal-width bins.
struct CoxProblem {
  cox::BinGrid bins;
  cox::AugmentedData augmented;
  ModelSpec spec;
};
CoxProblem prepare_cox(const DataTable& survival, const std::vector<std::string>& covariates, int bins,
                       ComponentKind baseline = ComponentKind::Rw1);

enum class Suite { Cox, Irt, Glm };
Suite suite_from_string(std::string_view s);
std::string_view to_string(Suite s);

struct BenchmarkRow {
  std::string suite;
  int size = 0;
  std::string mode;
  double seconds = 0.0;  ///< fit time (inference only, data generation excluded)
  int m = 0;
  int n = 0;
  int field_dim = 0;
  bool ok = false;
  std::string error;
};

/// Fits each size in each formulation. Failures are recorded, not thrown.
std::vector<BenchmarkRow> run_benchmark(Suite suite, const std::vector<int>& sizes,
                                        const std::vector<Formulation>& modes, const FitConfig& config,
                                        std::uint64_t seed);
void write_benchmark_text(std::ostream& out, const std::vector<BenchmarkRow>& rows);
void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows);

}  // namespace latentfit
