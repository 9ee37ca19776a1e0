#pragma once

// Posterior marginals as Gaussian mixtures over the hyperparameter grid, the
// low-rank variational mean correction, and mixture summaries.

#include "latentfit/inner.hpp"
#include "latentfit/lgm.hpp"
#include "latentfit/likelihood.hpp"
#include "latentfit/sparse.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace latentfit {

struct MixtureComponent {
  double weight = 0.0;
  double mean = 0.0;
  double sd = 0.0;
};

using Mixture = std::vector<MixtureComponent>;

/// Weights shared by all targets, one mean/sd column per grid point.
struct MarginalMixture {
  Eigen::VectorXd weights;  ///< K
  Eigen::MatrixXd means;    ///< targets x K
  Eigen::MatrixXd sds;      ///< targets x K

  int targets() const { return static_cast<int>(means.rows()); }
  int points() const { return static_cast<int>(weights.size()); }
  Mixture target(int j) const;
};

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
};

double mixture_mean(const Mixture& mix);
double mixture_variance(const Mixture& mix);
double mixture_cdf(const Mixture& mix, double x);
/// Bisection on the CDF inside [min mean - 10 sd, max mean + 10 sd].
double mixture_quantile(const Mixture& mix, double p);
Summary summarize(const Mixture& mix);

/// Var(eta_i) = sum_{j,l} A_ij A_il C_jl using only stored entries of C.
/// Throws MissingCEntry when a needed entry is outside the filled pattern.
Eigen::VectorXd linpred_variances(const DesignMatrix& a, const sparse::SelectedInverse& c);

struct VbOptions {
  int n_gh = kDefaultHermiteNodes;
  double tol = 1e-4;
  int max_iter = 25;
  int max_halvings = 10;
};

struct VBCorrection {
  std::vector<int> nodes;
  Eigen::VectorXd lambda;  ///< accumulated over re-centred steps
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = true;
};

struct VbResult {
  Eigen::VectorXd mu;  ///< mu + M lambda
  VBCorrection info;
};

/// Minimizes E[-log lik] + 1/2 mu*^T Q mu* over mu* = mu + M lambda with
/// M = Q_X^{-1}[:, nodes]. Expectations use Gauss-Hermite with the linear
/// predictor sds `eta_sd` held fixed. Empty `nodes` returns mu unchanged.
VbResult vb_correct(const InnerResult& inner, const DesignMatrix& a, const sparse::SparseSym& q,
                    const Family& family, const Observations& obs, std::span<const double> theta,
                    std::span<const int> nodes, const Eigen::VectorXd& eta_sd, const VbOptions& options = {});

/// Mixture of per-point Gaussians with the given weights.
MarginalMixture assemble_mixture(const Eigen::VectorXd& weights, const std::vector<Eigen::VectorXd>& means,
                                 const std::vector<Eigen::VectorXd>& sds);

}  // namespace latentfit
