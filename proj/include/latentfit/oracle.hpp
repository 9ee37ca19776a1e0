#pragma once

// Brute-force references: dense linear algebra, tensor-product adaptive
// quadrature for tiny posteriors, and an adaptive random-walk Metropolis
// sampler. Nothing here calls into the approximation engine.

#include "latentfit/lgm.hpp"
#include "latentfit/likelihood.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace latentfit::oracle {

inline constexpr int kDenseCap = 500;

struct OracleResult {
  std::vector<double> means;
  std::vector<double> sds;
  std::vector<double> mcse;  ///< empty for deterministic oracles
  std::string method;
  long evaluations = 0;
  long draws = 0;
  std::uint64_t seed = 0;
  double acceptance = 0.0;
};

/// Q^{-1} by dense Cholesky. Throws SizeCapExceeded above kDenseCap.
Eigen::MatrixXd dense_inverse(const Eigen::MatrixXd& q);
/// diag(A Sigma A^T).
Eigen::VectorXd dense_linpred_variance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& sigma);

using LogDensity = std::function<double(std::span<const double>)>;

/// Moments of exp(log_density) over a box of dimension 1 to 3 by nested
/// adaptive Gauss-Kronrod. The box must contain essentially all the mass.
OracleResult quadrature_posterior(const LogDensity& log_density, std::span<const double> lower,
                                  std::span<const double> upper, double rel_tol = 1e-8);

struct MetropolisOptions {
  long draws = 200000;
  std::uint64_t seed = 1;
  double burn_in_fraction = 0.2;
  int batches = 50;
  double target_low = 0.23;
  double target_high = 0.40;
};

/// Adaptive random-walk Metropolis. The proposal covariance and scale adapt
/// during burn-in only; `start` seeds the chain.
OracleResult metropolis(const LogDensity& log_density, std::span<const double> start,
                        const MetropolisOptions& options = {});

/// Dense, self-contained description of an LGM:
///   Q(theta) = q0 + sum_k exp(theta_k) s_k, eta = A x + offset.
struct DenseLgm {
  Eigen::MatrixXd a;
  Eigen::MatrixXd q0;
  std::vector<Eigen::MatrixXd> s;
  std::vector<GammaPrior> priors;
  FamilyKind family = FamilyKind::Gaussian;
  int likelihood_hyper = -1;  ///< theta index of the Gaussian observation precision
  Eigen::VectorXd y, offset, trials;

  int latent_dim() const { return static_cast<int>(a.cols()); }
  int num_hyper() const { return static_cast<int>(priors.size()); }

  /// Reads A, the prior blocks and the observations off a built model.
  static DenseLgm from_built(const BuiltModel& built);

  /// log pi(y | x, theta) + log pi(x | theta) + log pi(theta) for z = (x, theta).
  double log_joint(std::span<const double> z) const;
};

/// Metropolis over (x, theta) of a dense LGM. Reports latent means first,
/// then hyperparameters.
OracleResult metropolis_lgm(const DenseLgm& lgm, const MetropolisOptions& options = {});

}  // namespace latentfit::oracle
