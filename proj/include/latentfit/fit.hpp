#pragma once

// End-to-end inference: mode search over theta, integration grid, per-point
// Gaussian marginals with optional variational mean correction, summaries.

#include "latentfit/inner.hpp"
#include "latentfit/lgm.hpp"
#include "latentfit/outer.hpp"
#include "latentfit/posterior.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace latentfit {

enum class Strategy { Gaussian, Vb };
enum class IntStrategy { EmpiricalBayes, Grid };

std::string_view to_string(Strategy s);
std::string_view to_string(IntStrategy s);
Strategy strategy_from_string(std::string_view s);
IntStrategy int_strategy_from_string(std::string_view s);

struct FitConfig {
  Strategy strategy = Strategy::Vb;
  IntStrategy int_strategy = IntStrategy::Grid;
  Formulation mode = Formulation::Modern;
  int threads = 1;
  std::uint64_t seed = 1;
  double tau_noise = kDefaultNoisePrecision;
  /// Latent indices for the mean correction; default is the fixed effects.
  std::optional<std::vector<int>> vb_nodes;
  /// Initial theta; defaults to 4 for every log-precision.
  std::optional<Eigen::VectorXd> theta_start;
  /// Skip the mode search and integrate at this single theta.
  std::optional<Eigen::VectorXd> fixed_theta;

  InnerOptions inner;
  ModeOptions mode_search;
  GridOptions grid;
  VbOptions vb;

  /// Throws Error on invalid settings (threads < 1, n_gh < 1, ...).
  void validate() const;
};

inline constexpr int kMaxDefaultVbNodes = 30;
inline constexpr double kDefaultThetaStart = 4.0;

struct RunReport {
  std::string mode;
  std::string strategy;
  std::string int_strategy;
  int threads = 1;
  int n = 0;          ///< observations (augmented rows for survival data)
  int m = 0;          ///< latent dimension
  int field_dim = 0;  ///< m, or n + m in the classic layout
  int q = 0;
  int subjects = 0;   ///< survival subjects before augmentation, 0 otherwise
  int grid_points = 0;
  int failed_points = 0;
  int vb_nodes = 0;
  int mode_iterations = 0;
  int evaluations = 0;
  double time_build = 0.0;
  double time_mode = 0.0;
  double time_grid = 0.0;
  double time_marginals = 0.0;
  double time_vb = 0.0;
  double time_total = 0.0;
  bool mode_converged = true;
  bool inner_converged = true;
  bool vb_converged = true;

  bool all_converged() const { return mode_converged && inner_converged && vb_converged; }
  /// Flat key=value lines.
  void write(std::ostream& out) const;
};

struct FitResult {
  BuiltModel built;
  HyperGrid grid;
  MarginalMixture latent;
  MarginalMixture linpred;
  std::vector<Summary> latent_summary;
  std::vector<Summary> linpred_summary;
  std::vector<HyperSummary> hyper_summary;
  std::vector<std::string> latent_labels;
  /// Mean correction at each grid point (empty info when disabled).
  std::vector<VBCorrection> vb;
  /// Uncorrected conditional modes at each grid point (latent block).
  std::vector<Eigen::VectorXd> gaussian_means;
  RunReport report;

  const Summary& summary_of(std::string_view label) const;
};

FitResult fit(const ModelSpec& spec, const DataTable& data, const FitConfig& config);
FitResult fit_built(BuiltModel built, const FitConfig& config);

/// Summary CSVs: latent.csv, linpred.csv, hyper.csv and report.txt in `dir`.
void write_outputs(const FitResult& result, const std::string& dir);

}  // namespace latentfit
