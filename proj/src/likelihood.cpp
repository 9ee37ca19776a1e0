#include "latentfit/likelihood.hpp"

#include "latentfit/error.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace latentfit {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// log(1 + exp(x)) without overflow.
double log1pexp(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool is_count(double v) { return v >= 0.0 && std::floor(v) == v; }

}  // namespace

std::string_view to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::Gaussian: return "gaussian";
    case FamilyKind::Poisson: return "poisson";
    case FamilyKind::Binomial: return "binomial";
  }
  return "unknown";
}

FamilyKind family_from_string(std::string_view name) {
  if (name == "gaussian") return FamilyKind::Gaussian;
  if (name == "poisson") return FamilyKind::Poisson;
  if (name == "binomial" || name == "bernoulli") return FamilyKind::Binomial;
  throw Error("unknown family '" + std::string(name) + "'");
}

double Family::gaussian_precision(std::span<const double> theta) const {
  if (hyper_index < 0 || hyper_index >= static_cast<int>(theta.size()))
    throw MissingHyperparameter("gaussian family needs its log-precision in theta");
  return std::exp(theta[hyper_index]);
}

Observations Observations::from_response(Eigen::VectorXd y) {
  Observations o;
  const auto n = y.size();
  o.y = std::move(y);
  o.offset = Eigen::VectorXd::Zero(n);
  o.trials = Eigen::VectorXd::Ones(n);
  return o;
}

void Observations::validate(FamilyKind kind) const {
  if (offset.size() != y.size() || trials.size() != y.size())
    throw DimensionMismatch("observation vectors have different lengths");
  for (int i = 0; i < size(); ++i) {
    if (!std::isfinite(y[i]) || !std::isfinite(offset[i]) || !std::isfinite(trials[i]))
      throw NonFiniteValue("observation " + std::to_string(i) + " is not finite");
    switch (kind) {
      case FamilyKind::Gaussian: break;
      case FamilyKind::Poisson:
        if (!is_count(y[i]))
          throw SupportViolation("poisson response must be a non-negative integer (row " +
                                 std::to_string(i) + ")");
        break;
      case FamilyKind::Binomial:
        if (!is_count(trials[i]) || trials[i] < 1.0)
          throw SupportViolation("binomial trials must be a positive integer (row " +
                                 std::to_string(i) + ")");
        if (!is_count(y[i]) || y[i] > trials[i])
          throw SupportViolation("binomial response outside [0, trials] (row " + std::to_string(i) +
                                 ")");
        break;
    }
  }
}

LogLikTerms log_lik_terms(const Family& family, const Datum& obs, double eta,
                          std::span<const double> theta) {
  const double x = eta + obs.offset;
  LogLikTerms t;
  switch (family.kind) {
    case FamilyKind::Gaussian: {
      const double tau = family.gaussian_precision(theta);
      const double r = obs.y - x;
      t.value = 0.5 * std::log(tau) - 0.5 * kLog2Pi - 0.5 * tau * r * r;
      t.d1 = tau * r;
      t.d2 = -tau;
      break;
    }
    case FamilyKind::Poisson: {
      if (obs.y < 0.0) throw SupportViolation("poisson response must be non-negative");
      const double mean = std::exp(x);
      t.value = obs.y * x - mean - std::lgamma(obs.y + 1.0);
      t.d1 = obs.y - mean;
      t.d2 = -mean;
      break;
    }
    case FamilyKind::Binomial: {
      const double n = obs.trials;
      if (obs.y < 0.0 || obs.y > n) throw SupportViolation("binomial response outside [0, trials]");
      const double p = logistic(x);
      t.value = obs.y * x - n * log1pexp(x) + std::lgamma(n + 1.0) - std::lgamma(obs.y + 1.0) -
                std::lgamma(n - obs.y + 1.0);
      t.d1 = obs.y - n * p;
      t.d2 = -n * p * (1.0 - p);
      break;
    }
  }
  return t;
}

double log_lik(const Family& family, const Datum& obs, double eta, std::span<const double> theta) {
  return log_lik_terms(family, obs, eta, theta).value;
}

PseudoData pseudo_data(const Family& family, const Observations& obs, const Eigen::VectorXd& eta0,
                       std::span<const double> theta, double c_min) {
  const int n = obs.size();
  if (eta0.size() != n) throw DimensionMismatch("pseudo_data: eta0 length does not match data");
  PseudoData pd;
  pd.b.resize(n);
  pd.c.resize(n);
  pd.gradient.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto t = log_lik_terms(family, obs[i], eta0[i], theta);
    double c = -t.d2;
    if (!(c >= c_min)) {
      c = c_min;
      ++pd.clamped;
    }
    pd.c[i] = c;
    pd.gradient[i] = t.d1;
    pd.b[i] = t.d1 + c * eta0[i];
  }
  return pd;
}

const GaussHermite& gauss_hermite(int n_nodes) {
  if (n_nodes < 1) throw Error("Gauss-Hermite rule needs at least one node");
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<GaussHermite>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n_nodes];
  if (!slot) {
    // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite
    // polynomials: He_{k+1} = x He_k - k He_{k-1}.
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n_nodes, n_nodes);
    for (int k = 1; k < n_nodes; ++k) jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(double(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
    auto rule = std::make_unique<GaussHermite>();
    rule->nodes.resize(n_nodes);
    rule->weights.resize(n_nodes);
    double total = 0.0;
    for (int k = 0; k < n_nodes; ++k) {
      rule->nodes[k] = es.eigenvalues()[k];
      rule->weights[k] = es.eigenvectors()(0, k) * es.eigenvectors()(0, k);
      total += rule->weights[k];
    }
    for (auto& w : rule->weights) w /= total;
    // Exact symmetry of the nodes keeps odd moments at zero.
    for (int k = 0; k < n_nodes / 2; ++k) {
      const double x = 0.5 * (rule->nodes[n_nodes - 1 - k] - rule->nodes[k]);
      const double w = 0.5 * (rule->weights[n_nodes - 1 - k] + rule->weights[k]);
      rule->nodes[k] = -x;
      rule->nodes[n_nodes - 1 - k] = x;
      rule->weights[k] = rule->weights[n_nodes - 1 - k] = w;
    }
    if (n_nodes % 2 == 1) rule->nodes[n_nodes / 2] = 0.0;
    slot = std::move(rule);
  }
  return *slot;
}

LogLikTerms expected_loglik_terms_gh(const Family& family, const Datum& obs, double mu,
                                     double sigma, std::span<const double> theta, int n_nodes) {
  if (sigma < 0.0) throw Error("expected_loglik_gh: negative sigma");
  if (sigma == 0.0) return log_lik_terms(family, obs, mu, theta);
  const auto& rule = gauss_hermite(n_nodes);
  LogLikTerms acc;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const auto t = log_lik_terms(family, obs, mu + sigma * rule.nodes[k], theta);
    acc.value += rule.weights[k] * t.value;
    acc.d1 += rule.weights[k] * t.d1;
    acc.d2 += rule.weights[k] * t.d2;
  }
  return acc;
}

double expected_loglik_gh(const Family& family, const Datum& obs, double mu, double sigma,
                          std::span<const double> theta, int n_nodes) {
  return expected_loglik_terms_gh(family, obs, mu, sigma, theta, n_nodes).value;
}

}  // namespace latentfit
