#include "latentfit/posterior.hpp"

#include "latentfit/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace latentfit {

Mixture MarginalMixture::target(int j) const {
  Mixture m(points());
  for (int k = 0; k < points(); ++k) m[k] = {weights[k], means(j, k), sds(j, k)};
  return m;
}

double mixture_mean(const Mixture& mix) {
  double s = 0.0;
  for (const auto& c : mix) s += c.weight * c.mean;
  return s;
}

double mixture_variance(const Mixture& mix) {
  const double mean = mixture_mean(mix);
  double s = 0.0;
  for (const auto& c : mix) s += c.weight * (c.sd * c.sd + (c.mean - mean) * (c.mean - mean));
  return s;
}

double mixture_cdf(const Mixture& mix, double x) {
  double s = 0.0;
  for (const auto& c : mix) {
    if (c.sd > 0.0)
      s += c.weight * 0.5 * std::erfc(-(x - c.mean) / (c.sd * std::sqrt(2.0)));
    else
      s += c.weight * (x >= c.mean ? 1.0 : 0.0);
  }
  return s;
}

double mixture_quantile(const Mixture& mix, double p) {
  if (mix.empty()) throw Error("quantile of an empty mixture");
  if (!(p > 0.0 && p < 1.0)) throw Error("quantile level must lie in (0, 1)");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& c : mix) {
    lo = std::min(lo, c.mean - 10.0 * c.sd);
    hi = std::max(hi, c.mean + 10.0 * c.sd);
  }
  // Bisect until the CDF is within 1e-10 of p or the bracket is one ulp wide.
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double f = mixture_cdf(mix, mid);
    if (std::abs(f - p) <= 1e-10) return mid;
    (f < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Summary summarize(const Mixture& mix) {
  Summary s;
  // Mixture weights may carry round-off; the moments use them as given.
  s.mean = mixture_mean(mix);
  s.sd = std::sqrt(std::max(0.0, mixture_variance(mix)));
  s.q025 = mixture_quantile(mix, 0.025);
  s.q50 = mixture_quantile(mix, 0.5);
  s.q975 = mixture_quantile(mix, 0.975);
  return s;
}

Eigen::VectorXd linpred_variances(const DesignMatrix& a, const sparse::SelectedInverse& c) {
  if (a.cols() != c.size()) throw DimensionMismatch("design columns do not match the selected inverse");
  const auto rp = a.row_ptr();
  const auto ci = a.col_idx();
  const auto v = a.values();
  const auto cv = c.values();
  Eigen::VectorXd var(a.rows());
  for (int i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (int k1 = rp[i]; k1 < rp[i + 1]; ++k1) {
      for (int k2 = rp[i]; k2 < k1; ++k2) {
        const int pos = c.position(ci[k1], ci[k2]);
        if (pos < 0)
          throw MissingCEntry("linear predictor " + std::to_string(i) + " needs C(" + std::to_string(ci[k1]) +
                              "," + std::to_string(ci[k2]) + ")");
        s += 2.0 * v[k1] * v[k2] * cv[pos];
      }
      s += v[k1] * v[k1] * cv[c.position(ci[k1], ci[k1])];
    }
    var[i] = s;
  }
  return var;
}

namespace {

// -sum_i E[log pi(y_i | eta)] under eta ~ N(eta_i, sd_i^2), with first and
// second derivatives in eta_i.
struct ExpectedTerms {
  double value = 0.0;
  Eigen::VectorXd d1, d2;
};

ExpectedTerms expected_terms(const Family& family, const Observations& obs, const Eigen::VectorXd& eta,
                             const Eigen::VectorXd& sd, std::span<const double> theta, int n_gh) {
  ExpectedTerms t;
  t.d1.resize(obs.size());
  t.d2.resize(obs.size());
  for (int i = 0; i < obs.size(); ++i) {
    const auto e = expected_loglik_terms_gh(family, obs[i], eta[i], sd[i], theta, n_gh);
    t.value -= e.value;
    t.d1[i] = e.d1;
    t.d2[i] = e.d2;
  }
  return t;
}

}  // namespace

VbResult vb_correct(const InnerResult& inner, const DesignMatrix& a, const sparse::SparseSym& q,
                    const Family& family, const Observations& obs, std::span<const double> theta,
                    std::span<const int> nodes, const Eigen::VectorXd& eta_sd, const VbOptions& options) {
  VbResult r;
  r.mu = inner.mu;
  r.info.nodes.assign(nodes.begin(), nodes.end());
  const int p = static_cast<int>(nodes.size());
  r.info.lambda = Eigen::VectorXd::Zero(p);
  if (p == 0) return r;
  if (eta_sd.size() != obs.size() || a.rows() != obs.size() || a.cols() != inner.mu.size())
    throw DimensionMismatch("vb_correct: inconsistent dimensions");

  const Eigen::MatrixXd m = sparse::inverse_columns(inner.factor, nodes);
  Eigen::MatrixXd am(a.rows(), p), qm(m.rows(), p);
  for (int k = 0; k < p; ++k) {
    am.col(k) = a.multiply(m.col(k));
    qm.col(k) = q.multiply(m.col(k));
  }
  const Eigen::MatrixXd mqm = m.transpose() * qm;

  Eigen::VectorXd eta = a.multiply(r.mu);
  Eigen::VectorXd qmu = q.multiply(r.mu);
  auto terms = expected_terms(family, obs, eta, eta_sd, theta, options.n_gh);
  double obj = terms.value + 0.5 * r.mu.dot(qmu);
  r.info.objective_trace.push_back(obj);
  r.info.converged = false;

  for (int it = 0; it < options.max_iter; ++it) {
    // Quadratic model in lambda around the current centre.
    const Eigen::VectorXd grad = -am.transpose() * terms.d1 + m.transpose() * qmu;
    const Eigen::MatrixXd hess = am.transpose() * (-terms.d2).asDiagonal() * am + mqm;
    const Eigen::VectorXd step = -hess.ldlt().solve(grad);
    if (!step.allFinite()) break;

    double t = 1.0;
    bool accepted = false;
    Eigen::VectorXd mu_new, eta_new, qmu_new;
    ExpectedTerms terms_new;
    double obj_new = 0.0;
    for (int h = 0; h <= options.max_halvings; ++h, t *= 0.5) {
      mu_new = r.mu + m * (t * step);
      eta_new = eta + am * (t * step);
      qmu_new = qmu + qm * (t * step);
      terms_new = expected_terms(family, obs, eta_new, eta_sd, theta, options.n_gh);
      obj_new = terms_new.value + 0.5 * mu_new.dot(qmu_new);
      if (std::isfinite(obj_new) && obj_new <= obj + 1e-12 * (1.0 + std::abs(obj))) {
        accepted = true;
        break;
      }
    }
    r.info.iterations = it + 1;
    if (!accepted) {
      // The quadratic model no longer predicts descent: we are at the optimum.
      r.info.converged = step.lpNorm<Eigen::Infinity>() < 1e3 * options.tol;
      break;
    }
    r.mu = std::move(mu_new);
    eta = std::move(eta_new);
    qmu = std::move(qmu_new);
    terms = std::move(terms_new);
    obj = obj_new;
    r.info.lambda += t * step;
    r.info.objective_trace.push_back(obj);
    if ((t * step).lpNorm<Eigen::Infinity>() < options.tol) {
      r.info.converged = true;
      break;
    }
  }
  return r;
}

MarginalMixture assemble_mixture(const Eigen::VectorXd& weights, const std::vector<Eigen::VectorXd>& means,
                                 const std::vector<Eigen::VectorXd>& sds) {
  const int k = static_cast<int>(weights.size());
  if (static_cast<int>(means.size()) != k || static_cast<int>(sds.size()) != k)
    throw DimensionMismatch("mixture: one mean/sd vector per grid point required");
  MarginalMixture mix;
  mix.weights = weights;
  const int t = k ? static_cast<int>(means[0].size()) : 0;
  mix.means.resize(t, k);
  mix.sds.resize(t, k);
  for (int j = 0; j < k; ++j) {
    if (means[j].size() != t || sds[j].size() != t) throw DimensionMismatch("mixture: ragged targets");
    mix.means.col(j) = means[j];
    mix.sds.col(j) = sds[j];
  }
  return mix;
}

}  // namespace latentfit
