#pragma once

// Gaussian approximation of the latent field given theta: Newton iteration on
// the second-order likelihood expansion, plus the augmented "classic" layout
// where the linear predictor is part of the field.

#include "latentfit/lgm.hpp"
#include "latentfit/likelihood.hpp"
#include "latentfit/sparse.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <span>
#include <vector>

namespace latentfit {

struct InnerOptions {
  double tol_step = 1e-6;
  /// Gradient test: ||A^T g - Q mu||_inf <= tol_grad * (1 + ||A^T b||_inf).
  double tol_grad = 1e-6;
  int max_iter = 50;
  int max_halvings = 10;
  double c_min = kCurvatureFloor;
};

/// Noise precision used to tie eta to A x in the augmented layout.
inline const double kDefaultNoisePrecision = std::exp(14.0);

struct InnerResult {
  Eigen::VectorXd mu;
  Eigen::VectorXd eta;  ///< A mu
  sparse::CholFactor factor;  ///< of Q_X = Q + A^T D A at mu
  Eigen::VectorXd c;    ///< curvatures at the mode
  int iterations = 0;
  bool converged = false;
  int clamped = 0;
  double grad_norm = 0.0;
  double loglik_at_mode = 0.0;  ///< sum_i log pi(y_i | eta_i)
  double prior_quad = 0.0;      ///< mu^T Q mu
  double logdet_qx = 0.0;
  /// log pi(mu | theta, y) up to the prior normalizer, per accepted iterate.
  std::vector<double> objective_trace;
};

/// Fixed structure shared by every theta: the design matrix, the pattern of
/// Q + A^T D A and its symbolic factorization. Immutable, safe to share.
class InnerProblem {
 public:
  InnerProblem(std::shared_ptr<const sparse::SparsePattern> prior_pattern, DesignMatrix a);

  int dim() const { return a_.cols(); }
  int num_obs() const { return a_.rows(); }
  const DesignMatrix& design() const { return a_; }
  const std::shared_ptr<const sparse::SparsePattern>& prior_pattern() const { return prior_pattern_; }
  const std::shared_ptr<const sparse::SymbolicCholesky>& symbolic() const { return symbolic_; }

  /// Q + A^T diag(c) A on the precomputed pattern; `q` must use prior_pattern().
  sparse::SparseSym assemble(const sparse::SparseSym& q, const Eigen::VectorXd& c) const;

 private:
  std::shared_ptr<const sparse::SparsePattern> prior_pattern_;
  DesignMatrix a_;
  std::shared_ptr<const sparse::SparsePattern> qx_pattern_;
  std::shared_ptr<const sparse::SymbolicCholesky> symbolic_;
  std::vector<int> q_to_qx_;
  // For row i, entries [pair_ptr_[i], pair_ptr_[i+1]) add c_i * pair_coef_ at pair_pos_.
  std::vector<int> pair_ptr_;
  std::vector<int> pair_pos_;
  std::vector<double> pair_coef_;
};

/// Conditional mode and precision. `warm_start` of size 0 starts from zero.
/// Non-convergence is reported through `converged`; NotPositiveDefinite is
/// rethrown when a retry with a raised curvature floor also fails.
InnerResult gaussian_approx(const InnerProblem& problem, const sparse::SparseSym& q, const Family& family,
                            const Observations& obs, std::span<const double> theta,
                            const Eigen::VectorXd& warm_start = {}, const InnerOptions& options = {});

InnerResult gaussian_approx(const sparse::SparseSym& q, const DesignMatrix& a, const Family& family,
                            const Observations& obs, std::span<const double> theta,
                            const Eigen::VectorXd& warm_start = {}, const InnerOptions& options = {});

/// Field [eta; x] with prior precision
///   [ t I      -t A         ]
///   [ -t A^T   Q + t A^T A  ]
/// and design [I 0], so each observation touches one field entry.
class ClassicAugmentation {
 public:
  ClassicAugmentation(std::shared_ptr<const sparse::SparsePattern> prior_pattern, const DesignMatrix& a,
                      double tau_noise = kDefaultNoisePrecision);

  int num_obs() const { return n_; }
  int latent_offset() const { return n_; }
  double tau_noise() const { return tau_; }
  const InnerProblem& problem() const { return *problem_; }

  /// Augmented prior; `q` must use the original prior pattern.
  sparse::SparseSym prior(const sparse::SparseSym& q) const;

 private:
  int n_ = 0;
  double tau_ = 0.0;
  std::shared_ptr<const sparse::SparsePattern> pattern_;
  std::vector<double> base_;
  std::vector<int> q_to_aug_;
  std::shared_ptr<const InnerProblem> problem_;
};

/// Runs the inner iteration on the augmented field. The result's mu has
/// length n + m with the latent block starting at n.
InnerResult classic_augmented_approx(const sparse::SparseSym& q, const DesignMatrix& a, const Family& family,
                                     const Observations& obs, std::span<const double> theta,
                                     double tau_noise = kDefaultNoisePrecision,
                                     const InnerOptions& options = {});

}  // namespace latentfit
