#pragma once

// Observation families, their second-order expansion and Gauss-Hermite
// expectations.

#include <Eigen/Dense>

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace latentfit {

enum class FamilyKind { Gaussian, Poisson, Binomial };

std::string_view to_string(FamilyKind kind);
/// Accepts "gaussian", "poisson", "binomial" and "bernoulli" (alias).
FamilyKind family_from_string(std::string_view name);

/// Observation family. Gaussian uses the identity link and one
/// log-precision hyperparameter; Poisson the log link with the exposure as
/// an offset log(E); Binomial the logit link with a trial count.
struct Family {
  FamilyKind kind = FamilyKind::Gaussian;
  int hyper_index = -1;  ///< Gaussian log-precision position in theta

  double gaussian_precision(std::span<const double> theta) const;
  int num_hyper() const { return kind == FamilyKind::Gaussian ? 1 : 0; }
};

/// One observation. `offset` is added to the linear predictor before the
/// link is applied.
struct Datum {
  double y = 0.0;
  double offset = 0.0;
  double trials = 1.0;
};

struct Observations {
  Eigen::VectorXd y;
  Eigen::VectorXd offset;
  Eigen::VectorXd trials;

  static Observations from_response(Eigen::VectorXd y);
  int size() const { return static_cast<int>(y.size()); }
  Datum operator[](int i) const { return {y[i], offset[i], trials[i]}; }
  /// Throws SupportViolation / NonFiniteValue.
  void validate(FamilyKind kind) const;
};

/// Log-likelihood and its first two derivatives in eta.
struct LogLikTerms {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

/// Exact log density / mass including normalizing constants.
double log_lik(const Family& family, const Datum& obs, double eta, std::span<const double> theta);
LogLikTerms log_lik_terms(const Family& family, const Datum& obs, double eta,
                          std::span<const double> theta);

/// Per-observation coefficients of the quadratic b*eta - c*eta^2/2 that
/// matches the log-likelihood to second order at eta0.
struct PseudoData {
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  Eigen::VectorXd gradient;  ///< d log-lik / d eta at eta0, before clamping
  int clamped = 0;
};

inline constexpr double kCurvatureFloor = 1e-8;

PseudoData pseudo_data(const Family& family, const Observations& obs, const Eigen::VectorXd& eta0,
                       std::span<const double> theta, double c_min = kCurvatureFloor);

/// Probabilists' Gauss-Hermite rule: E[f(Z)] ~ sum_j weights[j] f(nodes[j])
/// for Z ~ N(0, 1).
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Cached per node count; safe to call concurrently.
const GaussHermite& gauss_hermite(int n_nodes);

inline constexpr int kDefaultHermiteNodes = 15;

/// E[log pi(y | eta)] for eta ~ N(mu, sigma^2).
double expected_loglik_gh(const Family& family, const Datum& obs, double mu, double sigma,
                          std::span<const double> theta, int n_nodes = kDefaultHermiteNodes);

/// E[l], E[l'], E[l''] under eta ~ N(mu, sigma^2); the expectations of the
/// derivatives are the derivatives of the expectation in mu.
LogLikTerms expected_loglik_terms_gh(const Family& family, const Datum& obs, double mu,
                                     double sigma, std::span<const double> theta,
                                     int n_nodes = kDefaultHermiteNodes);

}  // namespace latentfit
