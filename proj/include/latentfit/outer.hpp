#pragma once

// Hyperparameter posterior: log pi~(theta | y), smart finite-difference
// gradients, quasi-Newton mode search, Hessian and the integration grid.

#include "latentfit/inner.hpp"
#include "latentfit/lgm.hpp"

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace latentfit {

enum class Formulation { Modern, Classic };

std::string_view to_string(Formulation f);
Formulation formulation_from_string(std::string_view name);

/// One evaluation of the hyperparameter posterior.
struct ThetaEval {
  Eigen::VectorXd theta;
  double log_post = 0.0;
  double logdet_q = 0.0;
  std::shared_ptr<const InnerResult> inner;  ///< null for pure test functions
};

/// log pi~(theta | y) = log pi(theta) + 1/2 logdet Q - 1/2 mu^T Q mu
///                      + sum_i log pi(y_i | eta_i) - 1/2 logdet Q_X,
/// evaluated at the conditional mode mu(theta). The 2 pi terms cancel.
/// Immutable; evaluate() may be called concurrently.
class ThetaEvaluator {
 public:
  explicit ThetaEvaluator(const BuiltModel& built, Formulation formulation = Formulation::Modern,
                          double tau_noise = kDefaultNoisePrecision, InnerOptions inner = {});

  int num_hyper() const { return model_->num_hyper(); }
  Formulation formulation() const { return formulation_; }
  /// Length of the field the inner iteration works on (m, or n + m).
  int field_dim() const { return problem().dim(); }
  /// Index of the first latent entry inside that field.
  int latent_offset() const { return classic_ ? classic_->latent_offset() : 0; }
  int latent_dim() const { return model_->dim(); }
  int num_obs() const { return obs_.size(); }

  const LatentModel& model() const { return *model_; }
  const Family& family() const { return family_; }
  const Observations& observations() const { return obs_; }
  /// Design of the working field: A, or [I 0] in the classic layout.
  const DesignMatrix& field_design() const { return problem().design(); }
  /// The model's own design matrix A.
  const DesignMatrix& design() const { return a_; }
  const InnerProblem& problem() const { return classic_ ? classic_->problem() : *modern_; }

  /// Prior precision of the working field.
  sparse::SparseSym field_prior(std::span<const double> theta) const;

  /// `warm_start` (length field_dim() or 0) seeds the inner iteration.
  ThetaEval evaluate(const Eigen::VectorXd& theta, const Eigen::VectorXd& warm_start = {}) const;

 private:
  std::shared_ptr<const LatentModel> model_;
  DesignMatrix a_;
  Observations obs_;
  Family family_;
  Formulation formulation_;
  InnerOptions inner_options_;
  std::shared_ptr<const InnerProblem> modern_;
  std::shared_ptr<const ClassicAugmentation> classic_;
  std::shared_ptr<const sparse::SymbolicCholesky> prior_symbolic_;
};

/// Orthonormal frame for finite differences. Columns come from modified
/// Gram-Schmidt on the most recent steps (newest first), completed with
/// canonical vectors. The history keeps at most dim() directions.
class GradientBasis {
 public:
  GradientBasis() = default;
  explicit GradientBasis(int dim);

  int dim() const { return dim_; }
  void push(const Eigen::VectorXd& step);
  const std::vector<Eigen::VectorXd>& history() const { return history_; }
  const Eigen::MatrixXd& matrix() const { return g_; }

 private:
  void rebuild();
  int dim_ = 0;
  std::vector<Eigen::VectorXd> history_;
  Eigen::MatrixXd g_;
};

using ScalarFunction = std::function<double(const Eigen::VectorXd&)>;

/// Central differences along the columns of G, mapped back with G.
/// The 2q evaluations run on up to `threads` workers.
Eigen::VectorXd smart_gradient(const ScalarFunction& f, const Eigen::VectorXd& theta, const GradientBasis& basis,
                               double h, int threads = 1);

struct ModeOptions {
  double gradient_step = 5e-3;
  double tol_grad = 1e-4;
  double tol_step = 1e-6;
  int max_iter = 200;
  /// Longest allowed step in any coordinate.
  double max_step = 2.0;
  int threads = 1;
};

struct ModeResult {
  Eigen::VectorXd theta;
  double log_post = 0.0;
  Eigen::VectorXd gradient;
  GradientBasis basis;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// BFGS ascent of f with smart gradients. `on_accept` runs after each accepted
/// step with the new point (used to refresh warm starts).
ModeResult find_mode(const ScalarFunction& f, const Eigen::VectorXd& start, const ModeOptions& options = {},
                     const std::function<void(const Eigen::VectorXd&)>& on_accept = {});

struct GridOptions {
  double hessian_step = 1e-2;
  double dz = 0.75;
  double drop = 2.5;
  /// Collapse the grid to the mode.
  bool empirical_bayes = false;
  int max_points = 5000;
  int threads = 1;
};

struct ThetaPoint {
  Eigen::VectorXd theta;
  Eigen::VectorXd z;
  double log_post = 0.0;
  double weight = 0.0;
  std::shared_ptr<const InnerResult> inner;
};

struct HyperGrid {
  Eigen::VectorXd mode;
  double mode_log_post = 0.0;
  /// Negative Hessian of log pi~ at the mode after eigenvalue repair.
  Eigen::MatrixXd hessian;
  /// Eigen-decomposition of hessian^{-1} = V diag(lambda) V^T.
  Eigen::MatrixXd eigenvectors;
  Eigen::VectorXd eigenvalues;
  std::vector<ThetaPoint> points;  ///< mode first, then lexicographic in z
  int failed_points = 0;
  int repaired_eigenvalues = 0;
};

using PointFunction = std::function<ThetaEval(const Eigen::VectorXd&)>;

/// Hessian of f at `mode` by central differences in the basis frame.
Eigen::MatrixXd hessian_in_basis(const ScalarFunction& f, const Eigen::VectorXd& mode, double f_mode,
                                 const Eigen::MatrixXd& g, double h, int threads = 1);

/// Builds the weighted grid around `mode`. `mode_eval` is the evaluation at
/// the mode; `f` evaluates further points (failures are skipped).
HyperGrid hessian_and_grid(const PointFunction& f, const ThetaEval& mode_eval, const GradientBasis& basis,
                           const GridOptions& options = {});

/// Weighted mean and sd of each hyperparameter over the grid.
struct HyperSummary {
  std::string name;
  double mode = 0.0;
  double mean = 0.0;  ///< of theta_j (log precision)
  double sd = 0.0;
  double precision_mean = 0.0;  ///< weighted mean of exp(theta_j)
};
std::vector<HyperSummary> summarize_hyper(const HyperGrid& grid, const std::vector<HyperParam>& hyper);

}  // namespace latentfit
