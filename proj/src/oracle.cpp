#include "latentfit/oracle.hpp"

#include "latentfit/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace latentfit::oracle {

Eigen::MatrixXd dense_inverse(const Eigen::MatrixXd& q) {
  if (q.rows() > kDenseCap || q.cols() > kDenseCap)
    throw SizeCapExceeded("dense oracle limited to " + std::to_string(kDenseCap) + " rows");
  if (q.rows() != q.cols()) throw DimensionMismatch("dense_inverse: matrix is not square");
  Eigen::LLT<Eigen::MatrixXd> llt(q);
  if (llt.info() != Eigen::Success) throw Error("dense_inverse: matrix is not positive definite");
  return llt.solve(Eigen::MatrixXd::Identity(q.rows(), q.cols()));
}

Eigen::VectorXd dense_linpred_variance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& sigma) {
  if (a.rows() > kDenseCap || a.cols() > kDenseCap)
    throw SizeCapExceeded("dense oracle limited to " + std::to_string(kDenseCap) + " rows");
  if (a.cols() != sigma.rows()) throw DimensionMismatch("dense_linpred_variance: shapes differ");
  return (a * sigma).cwiseProduct(a).rowwise().sum();
}

// ---------------------------------------------------------------------------
// Quadrature

namespace {

using boost::math::quadrature::gauss_kronrod;

// Integral over the box of g(z) exp(log_density(z) - shift), nested from
// the last coordinate inwards.
double nested(const std::function<double(std::span<const double>)>& integrand, std::span<const double> lo,
              std::span<const double> hi, double tol, long& evals) {
  const int d = static_cast<int>(lo.size());
  std::vector<double> z(d);
  std::function<double(int)> level = [&](int k) -> double {
    auto f = [&](double v) {
      z[k] = v;
      if (k + 1 == d) {
        ++evals;
        return integrand(z);
      }
      return level(k + 1);
    };
    return gauss_kronrod<double, 31>::integrate(f, lo[k], hi[k], 12, tol);
  };
  return level(0);
}

}  // namespace

OracleResult quadrature_posterior(const LogDensity& log_density, std::span<const double> lower,
                                  std::span<const double> upper, double rel_tol) {
  const int d = static_cast<int>(lower.size());
  if (d < 1 || d > 3) throw SizeCapExceeded("quadrature oracle handles 1 to 3 dimensions");
  if (static_cast<int>(upper.size()) != d) throw DimensionMismatch("quadrature box bounds differ in length");

  // Coarse scan for the peak so the integrand stays O(1).
  double shift = -std::numeric_limits<double>::infinity();
  {
    const int per = d == 1 ? 401 : d == 2 ? 81 : 31;
    std::vector<int> idx(d, 0);
    std::vector<double> z(d);
    for (bool more = true; more;) {
      for (int k = 0; k < d; ++k) z[k] = lower[k] + (upper[k] - lower[k]) * idx[k] / (per - 1);
      shift = std::max(shift, log_density(z));
      more = false;
      for (int k = 0; k < d; ++k) {
        if (++idx[k] < per) {
          more = true;
          break;
        }
        idx[k] = 0;
      }
    }
  }
  if (!std::isfinite(shift)) throw Error("quadrature oracle: density is not finite on the box");

  OracleResult r;
  r.method = "quadrature";
  auto moment = [&](int k, int power) {
    return nested(
        [&](std::span<const double> z) {
          const double w = std::exp(log_density(z) - shift);
          return power == 0 ? w : power == 1 ? w * z[k] : w * z[k] * z[k];
        },
        lower, upper, rel_tol, r.evaluations);
  };
  const double mass = moment(0, 0);
  for (int k = 0; k < d; ++k) {
    const double m1 = moment(k, 1) / mass;
    const double m2 = moment(k, 2) / mass;
    r.means.push_back(m1);
    r.sds.push_back(std::sqrt(std::max(0.0, m2 - m1 * m1)));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Metropolis

OracleResult metropolis(const LogDensity& log_density, std::span<const double> start,
                        const MetropolisOptions& options) {
  const int d = static_cast<int>(start.size());
  if (d < 1) throw Error("metropolis: empty state");
  if (options.draws < 10L * options.batches) throw Error("metropolis: too few draws for batch means");
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const long burn = static_cast<long>(options.burn_in_fraction * options.draws);
  const long kept = options.draws - burn;
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(start.data(), d);
  auto lp_at = [&](const Eigen::VectorXd& v) { return log_density(std::span<const double>(v.data(), d)); };
  double lp = lp_at(x);
  if (!std::isfinite(lp)) throw Error("metropolis: start has zero density");

  double scale = 2.38 / std::sqrt(double(d));
  Eigen::MatrixXd chol = 0.1 * Eigen::MatrixXd::Identity(d, d);
  // Running moments of the burn-in chain for the proposal covariance.
  Eigen::VectorXd run_mean = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd run_m2 = Eigen::MatrixXd::Zero(d, d);
  long run_n = 0;
  int window_accept = 0, window = 0;

  const long batch_len = kept / options.batches;
  Eigen::MatrixXd batch_sums = Eigen::MatrixXd::Zero(d, options.batches);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d), sum2 = Eigen::VectorXd::Zero(d);
  long accepted_kept = 0;

  Eigen::VectorXd eps(d);
  for (long it = 0; it < options.draws; ++it) {
    for (int k = 0; k < d; ++k) eps[k] = normal(rng);
    const Eigen::VectorXd prop = x + scale * (chol * eps);
    const double lp_prop = lp_at(prop);
    const bool accept = std::isfinite(lp_prop) && std::log(unif(rng)) < lp_prop - lp;
    if (accept) {
      x = prop;
      lp = lp_prop;
    }
    if (it < burn) {
      ++window;
      window_accept += accept;
      if (it >= burn / 10) {
        ++run_n;
        const Eigen::VectorXd delta = x - run_mean;
        run_mean += delta / double(run_n);
        run_m2 += delta * (x - run_mean).transpose();
      }
      if (window == 200) {
        const double rate = window_accept / 200.0;
        if (rate < options.target_low) scale *= 0.8;
        if (rate > options.target_high) scale *= 1.25;
        window = window_accept = 0;
      }
      if (run_n > 10L * d && run_n % 500 == 0) {
        Eigen::MatrixXd cov = run_m2 / double(run_n - 1);
        cov.diagonal().array() += 1e-12 * (1.0 + cov.diagonal().maxCoeff());
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() == Eigen::Success) chol = llt.matrixL();
      }
    } else {
      const long j = it - burn;
      accepted_kept += accept;
      sum += x;
      sum2 += x.cwiseProduct(x);
      const long b = std::min<long>(j / std::max<long>(batch_len, 1), options.batches - 1);
      batch_sums.col(b) += x;
    }
  }

  OracleResult r;
  r.method = "metropolis";
  r.draws = kept;
  r.seed = options.seed;
  r.evaluations = options.draws + 1;
  r.acceptance = double(accepted_kept) / double(kept);
  for (int k = 0; k < d; ++k) {
    const double mean = sum[k] / kept;
    r.means.push_back(mean);
    r.sds.push_back(std::sqrt(std::max(0.0, sum2[k] / kept - mean * mean)));
    // Batch means; the last batch absorbs the remainder.
    Eigen::VectorXd bm(options.batches);
    for (int b = 0; b < options.batches; ++b) {
      const long len = b + 1 < options.batches ? batch_len : kept - batch_len * (options.batches - 1);
      bm[b] = batch_sums(k, b) / double(len);
    }
    const double bmean = bm.mean();
    const double var = (bm.array() - bmean).square().sum() / (options.batches - 1);
    r.mcse.push_back(std::sqrt(var / options.batches));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Dense LGM

DenseLgm DenseLgm::from_built(const BuiltModel& built) {
  const auto& model = *built.model;
  if (model.dim() > kDenseCap || built.a.rows() > 100000)
    throw SizeCapExceeded("dense LGM oracle limited to " + std::to_string(kDenseCap) + " latent entries");
  DenseLgm d;
  d.a = built.a.to_dense();
  const int q = model.num_hyper();
  std::vector<double> zero(q, 0.0);
  const Eigen::MatrixXd q_at_zero = model.prior_precision(zero).to_dense();
  d.q0 = q_at_zero;
  for (int k = 0; k < q; ++k) {
    std::vector<double> t = zero;
    t[k] = std::log(2.0);
    // Q is affine in each exp(theta_k): the difference isolates s_k.
    Eigen::MatrixXd s = model.prior_precision(t).to_dense() - q_at_zero;
    d.q0 -= s;
    d.s.push_back(std::move(s));
    d.priors.push_back(model.hyper()[k].prior);
  }
  d.family = built.family.kind;
  d.likelihood_hyper = built.family.hyper_index;
  d.y = built.obs.y;
  d.offset = built.obs.offset;
  d.trials = built.obs.trials;
  return d;
}

double DenseLgm::log_joint(std::span<const double> z) const {
  const int m = latent_dim();
  const int q = num_hyper();
  if (static_cast<int>(z.size()) != m + q) throw DimensionMismatch("log_joint: state has the wrong length");
  const Eigen::Map<const Eigen::VectorXd> x(z.data(), m);
  Eigen::MatrixXd prec = q0;
  double lp = 0.0;
  for (int k = 0; k < q; ++k) {
    const double th = z[m + k];
    if (!std::isfinite(th) || std::abs(th) > 50.0) return -std::numeric_limits<double>::infinity();
    prec += std::exp(th) * s[k];
    const auto& g = priors[k];
    lp += g.shape * std::log(g.rate) - std::lgamma(g.shape) + g.shape * th - g.rate * std::exp(th);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd l = llt.matrixL();
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  lp += 0.5 * logdet - 0.5 * x.dot(prec * x) - 0.5 * m * std::log(2.0 * M_PI);

  const Eigen::VectorXd eta = a * x + offset;
  const double tau = likelihood_hyper >= 0 ? std::exp(z[m + likelihood_hyper]) : 0.0;
  for (int i = 0; i < eta.size(); ++i) {
    const double e = eta[i];
    switch (family) {
      case FamilyKind::Gaussian:
        lp += 0.5 * std::log(tau / (2.0 * M_PI)) - 0.5 * tau * (y[i] - e) * (y[i] - e);
        break;
      case FamilyKind::Poisson:
        lp += y[i] * e - std::exp(e) - std::lgamma(y[i] + 1.0);
        break;
      case FamilyKind::Binomial: {
        const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        lp += y[i] * e - trials[i] * softplus + std::lgamma(trials[i] + 1.0) - std::lgamma(y[i] + 1.0) -
              std::lgamma(trials[i] - y[i] + 1.0);
        break;
      }
    }
  }
  return lp;
}

OracleResult metropolis_lgm(const DenseLgm& lgm, const MetropolisOptions& options) {
  std::vector<double> start(lgm.latent_dim() + lgm.num_hyper(), 0.0);
  return metropolis([&](std::span<const double> z) { return lgm.log_joint(z); }, start, options);
}

}  // namespace latentfit::oracle
