#include <doctest.h>

#include "latentfit/error.hpp"
#include "latentfit/inner.hpp"
#include "test_util.hpp"

#include <cmath>
#include <random>

using namespace latentfit;
using latentfit::testing::max_abs;
using latentfit::testing::random_spd;

namespace {

DesignMatrix random_design(int n, int m, int per_row, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> col(0, m - 1);
  std::normal_distribution<double> nd;
  std::vector<std::tuple<int, int, double>> t;
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < per_row; ++k) t.emplace_back(i, col(rng), 0.5 * nd(rng));
  return DesignMatrix::from_triplets(n, m, t);
}

Eigen::MatrixXd dense_qx(const sparse::SparseSym& q, const DesignMatrix& a, const Eigen::VectorXd& c) {
  const Eigen::MatrixXd ad = a.to_dense();
  return q.to_dense() + ad.transpose() * c.asDiagonal() * ad;
}

// Inverse of the factored matrix, column by column.
Eigen::MatrixXd factor_inverse(const sparse::CholFactor& f) {
  Eigen::MatrixXd inv(f.size(), f.size());
  for (int j = 0; j < f.size(); ++j) inv.col(j) = f.solve(Eigen::VectorXd::Unit(f.size(), j));
  return inv;
}

const Family kGauss{FamilyKind::Gaussian, 0};
const Family kPoisson{FamilyKind::Poisson, -1};
const Family kBinomial{FamilyKind::Binomial, -1};

}  // namespace

TEST_CASE("gaussian likelihood: one step to the conjugate posterior") {
  const int n = 60, m = 15;
  const auto q = random_spd(m, 0.2, 3);
  const auto a = random_design(n, m, 3, 4);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = nd(rng);
  const auto obs = Observations::from_response(y);
  const std::vector<double> theta{std::log(3.0)};
  const auto r = gaussian_approx(q, a, kGauss, obs, theta);
  CHECK(r.converged);
  CHECK(r.iterations == 1);

  const Eigen::MatrixXd ad = a.to_dense();
  const Eigen::MatrixXd qx = q.to_dense() + 3.0 * ad.transpose() * ad;
  const Eigen::VectorXd mean = qx.ldlt().solve(3.0 * ad.transpose() * y);
  CHECK(max_abs(r.mu - mean) <= 1e-10 * (1.0 + max_abs(mean)));
  CHECK(max_abs(factor_inverse(r.factor) - qx.inverse()) <= 1e-10);
  CHECK(r.logdet_qx == doctest::Approx(std::log(qx.determinant())).epsilon(1e-10));
}

TEST_CASE("poisson intercept: root of 3 e^b + b = 6") {
  // Independent scalar Newton on the stationarity condition.
  double beta = 0.0;
  for (int k = 0; k < 100; ++k) beta -= (3.0 * std::exp(beta) + beta - 6.0) / (3.0 * std::exp(beta) + 1.0);

  const auto q = sparse::SparseSym::identity(1);
  std::vector<std::tuple<int, int, double>> t{{0, 0, 1.0}, {1, 0, 1.0}, {2, 0, 1.0}};
  const auto a = DesignMatrix::from_triplets(3, 1, t);
  const auto obs = Observations::from_response(Eigen::Vector3d(1, 2, 3));
  const auto r = gaussian_approx(q, a, kPoisson, obs, {});
  CHECK(r.converged);
  // The gradient test stops within ~1e-9 of the root; one more Newton step would reach round-off.
  CHECK(std::abs(r.mu[0] - beta) <= 1e-8);
  CHECK(r.logdet_qx == doctest::Approx(std::log(1.0 + 3.0 * std::exp(beta))).epsilon(1e-8));

  SUBCASE("warm start at the mode is a fixed point") {
    const auto w = gaussian_approx(q, a, kPoisson, obs, {}, Eigen::VectorXd::Constant(1, beta));
    CHECK(w.iterations == 1);
    CHECK(std::abs(w.mu[0] - beta) <= 1e-14);
  }
}

TEST_CASE("non-gaussian: gradient test, monotone objective, Q_X at the mode") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const int n = 120, m = 25;
    const auto q = random_spd(m, 0.15, seed);
    const auto a = random_design(n, m, 3, seed + 100);
    std::mt19937_64 rng(seed);
    const bool pois = seed % 2 == 0;
    Eigen::VectorXd y(n);
    Observations obs;
    if (pois) {
      std::poisson_distribution<int> pd(2.0);
      for (int i = 0; i < n; ++i) y[i] = pd(rng);
      obs = Observations::from_response(y);
    } else {
      std::binomial_distribution<int> bd(4, 0.3);
      for (int i = 0; i < n; ++i) y[i] = bd(rng);
      obs = Observations::from_response(y);
      obs.trials.setConstant(4.0);
    }
    const Family& fam = pois ? kPoisson : kBinomial;
    const auto r = gaussian_approx(q, a, fam, obs, {});
    REQUIRE(r.converged);

    const auto pd = pseudo_data(fam, obs, r.eta, {});
    const Eigen::VectorXd grad = a.transpose_multiply(pd.gradient) - q.multiply(r.mu);
    const double scale = 1.0 + a.transpose_multiply(pd.b).lpNorm<Eigen::Infinity>();
    CHECK(grad.lpNorm<Eigen::Infinity>() <= 1e-6 * scale);

    for (std::size_t k = 1; k < r.objective_trace.size(); ++k)
      CHECK(r.objective_trace[k] >= r.objective_trace[k - 1] - 1e-12 * std::abs(r.objective_trace[k - 1]));

    const Eigen::MatrixXd qx = dense_qx(q, a, pd.c);
    CHECK(max_abs(factor_inverse(r.factor) * qx - Eigen::MatrixXd::Identity(m, m)) <= 1e-9);
  }
}

TEST_CASE("damping recovers from a far-off start") {
  const int n = 50, m = 5;
  const auto q = random_spd(m, 0.5, 9);
  const auto a = random_design(n, m, 2, 10);
  std::mt19937_64 rng(1);
  std::poisson_distribution<int> pd(3.0);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = pd(rng);
  const auto obs = Observations::from_response(y);
  const auto ref = gaussian_approx(q, a, kPoisson, obs, {});
  const auto far = gaussian_approx(q, a, kPoisson, obs, {}, Eigen::VectorXd::Constant(m, 12.0));
  CHECK(far.converged);
  CHECK(max_abs(far.mu - ref.mu) <= 1e-6);
  for (std::size_t k = 1; k < far.objective_trace.size(); ++k)
    CHECK(far.objective_trace[k] >= far.objective_trace[k - 1] - 1e-12 * std::abs(far.objective_trace[k - 1]));
}

TEST_CASE("max_iter reports non-convergence with the best iterate") {
  const auto q = sparse::SparseSym::identity(1);
  std::vector<std::tuple<int, int, double>> t{{0, 0, 1.0}};
  const auto a = DesignMatrix::from_triplets(1, 1, t);
  const auto obs = Observations::from_response(Eigen::VectorXd::Constant(1, 50.0));
  InnerOptions opt;
  opt.max_iter = 1;
  const auto r = gaussian_approx(q, a, kPoisson, obs, {}, {}, opt);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 1);
  CHECK(r.objective_trace.back() > r.objective_trace.front());
}

TEST_CASE("classic augmentation agrees with the modern field") {
  const int n = 40, m = 8;
  const auto q = random_spd(m, 0.3, 21);
  const auto a = random_design(n, m, 2, 22);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = nd(rng);
  const auto obs = Observations::from_response(y);
  const std::vector<double> theta{0.5};
  const auto modern = gaussian_approx(q, a, kGauss, obs, theta);
  for (double log_tau : {12.0, 14.0}) {
    const auto classic = classic_augmented_approx(q, a, kGauss, obs, theta, std::exp(log_tau));
    CHECK(classic.converged);
    CHECK(classic.mu.size() == n + m);
    CHECK(classic.factor.size() == n + m);
    CHECK(modern.factor.size() == m);
    CHECK(max_abs(classic.mu.tail(m) - modern.mu) <= 1e-4);
  }

  SUBCASE("augmented prior blocks") {
    const ClassicAugmentation aug(q.pattern_ptr(), a, 7.0);
    const Eigen::MatrixXd qa = aug.prior(q).to_dense();
    const Eigen::MatrixXd ad = a.to_dense();
    Eigen::MatrixXd expect(n + m, n + m);
    expect << 7.0 * Eigen::MatrixXd::Identity(n, n), -7.0 * ad, -7.0 * ad.transpose(),
        q.to_dense() + 7.0 * ad.transpose() * ad;
    CHECK(max_abs(qa - expect) <= 1e-12);
  }
}

TEST_CASE("classic: poisson latent means close to the modern field") {
  const int n = 30, m = 4;
  const auto q = random_spd(m, 0.5, 31);
  const auto a = random_design(n, m, 2, 32);
  std::mt19937_64 rng(3);
  std::poisson_distribution<int> pd(2.0);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = pd(rng);
  const auto obs = Observations::from_response(y);
  const auto modern = gaussian_approx(q, a, kPoisson, obs, {});
  const auto classic = classic_augmented_approx(q, a, kPoisson, obs, {});
  CHECK(classic.converged);
  CHECK(max_abs(classic.mu.tail(m) - modern.mu) <= 1e-4);
}

TEST_CASE("no observations returns the prior") {
  const auto q = random_spd(6, 0.4, 41);
  const DesignMatrix a(0, 6, {0}, {}, {});
  const Observations obs;
  const auto r = gaussian_approx(q, a, kPoisson, obs, {});
  CHECK(r.converged);
  CHECK(max_abs(r.mu) == 0.0);
  CHECK(r.logdet_qx == doctest::Approx(sparse::factorize(q).logdet()));
  const auto c = classic_augmented_approx(q, a, kPoisson, obs, {});
  CHECK(c.mu.size() == 6);
  CHECK(max_abs(c.mu) == 0.0);
}

TEST_CASE("dimension checks") {
  const auto q = random_spd(4, 0.5, 1);
  const auto a = random_design(5, 4, 2, 2);
  const auto obs = Observations::from_response(Eigen::VectorXd::Zero(4));
  CHECK_THROWS_AS(gaussian_approx(q, a, kPoisson, obs, {}), DimensionMismatch);
  const auto obs5 = Observations::from_response(Eigen::VectorXd::Zero(5));
  CHECK_THROWS_AS(gaussian_approx(q, a, kPoisson, obs5, {}, Eigen::VectorXd::Zero(3)), DimensionMismatch);
  const InnerProblem problem(q.pattern_ptr(), a);
  const auto other = random_spd(4, 0.9, 77);
  if (!(other.pattern() == q.pattern()))
    CHECK_THROWS_AS(gaussian_approx(problem, other, kPoisson, obs5, {}), DimensionMismatch);
}
