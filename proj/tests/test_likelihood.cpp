#include <doctest.h>

#include "latentfit/error.hpp"
#include "latentfit/likelihood.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace latentfit;

namespace {

const Family kPoisson{FamilyKind::Poisson, -1};
const Family kBinomial{FamilyKind::Binomial, -1};
const Family kGaussian{FamilyKind::Gaussian, 0};

// Bernoulli log-likelihood under a normal eta, integrated with adaptive
// Gauss-Kronrod on the standard-normal scale. Written independently of the
// library's log_lik.
double bernoulli_expectation_oracle(double y, double mu, double sigma) {
  auto integrand = [&](double z) {
    const double eta = mu + sigma * z;
    const double ll = y * eta - std::log1p(std::exp(eta));
    return ll * std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  };
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -40.0, 40.0, 25,
                                                                      1e-14, &err);
}

}  // namespace

TEST_CASE("log_lik reference values") {
  const std::vector<double> none;
  CHECK(log_lik(kPoisson, {0.0, 0.0, 1.0}, 0.0, none) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(log_lik(kBinomial, {1.0, 0.0, 1.0}, 0.0, none) == doctest::Approx(std::log(0.5)).epsilon(1e-15));
  const std::vector<double> theta{0.0};
  CHECK(log_lik(kGaussian, {1.0, 0.0, 1.0}, 0.0, theta) ==
        doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi) - 0.5).epsilon(1e-15));
  // Exposure enters as an offset: rate exp(eta) * E.
  CHECK(log_lik(kPoisson, {2.0, std::log(3.0), 1.0}, 0.0, none) ==
        doctest::Approx(2.0 * std::log(3.0) - 3.0 - std::log(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(log_lik(kPoisson, {-1.0, 0.0, 1.0}, 0.0, none), SupportViolation);
  CHECK_THROWS_AS(log_lik(kGaussian, {1.0, 0.0, 1.0}, 0.0, none), MissingHyperparameter);
}

TEST_CASE("pseudo_data reference values") {
  const std::vector<double> none;
  SUBCASE("gaussian is exact") {
    const std::vector<double> theta{std::log(2.5)};
    auto obs = Observations::from_response(Eigen::Vector3d(1.0, -2.0, 0.5));
    for (double e0 : {-3.0, 0.0, 4.0}) {
      const auto pd = pseudo_data(kGaussian, obs, Eigen::Vector3d::Constant(e0), theta);
      for (int i = 0; i < 3; ++i) {
        CHECK(pd.c[i] == doctest::Approx(2.5));
        CHECK(pd.b[i] == doctest::Approx(2.5 * obs.y[i]));
      }
    }
  }
  SUBCASE("poisson y=2 at 0") {
    auto obs = Observations::from_response(Eigen::VectorXd::Constant(1, 2.0));
    const auto pd = pseudo_data(kPoisson, obs, Eigen::VectorXd::Zero(1), none);
    CHECK(pd.c[0] == doctest::Approx(1.0));
    CHECK(pd.b[0] == doctest::Approx(1.0));
  }
  SUBCASE("bernoulli y=1 at 0") {
    auto obs = Observations::from_response(Eigen::VectorXd::Constant(1, 1.0));
    const auto pd = pseudo_data(kBinomial, obs, Eigen::VectorXd::Zero(1), none);
    CHECK(pd.b[0] == doctest::Approx(0.5));
    CHECK(pd.c[0] == doctest::Approx(0.25));
  }
  SUBCASE("curvature floor") {
    auto obs = Observations::from_response(Eigen::VectorXd::Constant(1, 0.0));
    const auto pd = pseudo_data(kPoisson, obs, Eigen::VectorXd::Constant(1, -40.0), none);
    CHECK(pd.c[0] == kCurvatureFloor);
    CHECK(pd.clamped == 1);
  }
}

TEST_CASE("pseudo_data matches finite differences of log_lik") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> eta(-2.5, 2.5);
  const std::vector<double> theta{0.7};
  const double h = 1e-4;
  const double h2 = 1e-3;
  for (int rep = 0; rep < 200; ++rep) {
    for (const Family& fam : {kPoisson, kBinomial, kGaussian}) {
      Datum d{static_cast<double>(rep % 4), 0.3, 5.0};
      if (fam.kind == FamilyKind::Gaussian) d.y = 0.05 * rep - 5.0;
      const double e0 = eta(rng);
      auto obs = Observations::from_response(Eigen::VectorXd::Constant(1, d.y));
      obs.offset[0] = d.offset;
      obs.trials[0] = d.trials;
      const auto pd = pseudo_data(fam, obs, Eigen::VectorXd::Constant(1, e0), theta);
      const double fp = log_lik(fam, d, e0 + h, theta), f0 = log_lik(fam, d, e0, theta),
                   fm = log_lik(fam, d, e0 - h, theta);
      const double g = (fp - fm) / (2 * h);
      const double c = -(log_lik(fam, d, e0 + h2, theta) - 2 * f0 + log_lik(fam, d, e0 - h2, theta)) / (h2 * h2);
      CHECK(std::abs(g - (pd.b[0] - pd.c[0] * e0)) <= 1e-6 * std::max(1.0, std::abs(g)));
      CHECK(std::abs(c - pd.c[0]) <= 1e-6 * std::max(1.0, std::abs(c)));
    }
  }
}

TEST_CASE("Gauss-Hermite expected log-likelihood") {
  const std::vector<double> none;
  SUBCASE("degenerate sigma") {
    const Datum d{3.0, 0.0, 1.0};
    CHECK(expected_loglik_gh(kPoisson, d, 0.4, 0.0, none) == log_lik(kPoisson, d, 0.4, none));
  }
  SUBCASE("lognormal mean identity") {
    const double v = expected_loglik_gh(kPoisson, {0.0, 0.0, 1.0}, 0.0, std::sqrt(2.0 * std::log(2.0)), none);
    CHECK(v == doctest::Approx(-2.0).epsilon(1e-12));
  }
  SUBCASE("bernoulli against adaptive quadrature") {
    const double ref = bernoulli_expectation_oracle(1.0, 0.3, 0.7);
    CHECK(std::abs(expected_loglik_gh(kBinomial, {1.0, 0.0, 1.0}, 0.3, 0.7, none, 25) - ref) <= 1e-8);
  }
  SUBCASE("error shrinks monotonically with the node count") {
    for (double mu : {-1.0, 0.3, 1.2}) {
      for (double sigma : {0.4, 1.0, 1.8}) {
        const double ref = bernoulli_expectation_oracle(0.0, mu, sigma);
        double last = INFINITY;
        for (int nj : {5, 9, 15, 25}) {
          const double err = std::abs(expected_loglik_gh(kBinomial, {0.0, 0.0, 1.0}, mu, sigma, none, nj) - ref);
          CHECK(err <= last + 1e-15);
          last = err;
        }
      }
    }
  }
  SUBCASE("rule integrates polynomials exactly") {
    const auto& r = gauss_hermite(7);
    double m0 = 0, m2 = 0, m4 = 0, m13 = 0;
    for (std::size_t k = 0; k < r.nodes.size(); ++k) {
      const double x = r.nodes[k];
      m0 += r.weights[k];
      m2 += r.weights[k] * x * x;
      m4 += r.weights[k] * std::pow(x, 4);
      m13 += r.weights[k] * std::pow(x, 13);
    }
    CHECK(m0 == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(m2 == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(m4 == doctest::Approx(3.0).epsilon(1e-13));
    CHECK(std::abs(m13) < 1e-9);
  }
  SUBCASE("derivative expectations are derivatives of the expectation") {
    const Datum d{2.0, 0.0, 1.0};
    const double h = 1e-5;
    const auto t = expected_loglik_terms_gh(kPoisson, d, 0.2, 0.6, none);
    const double fp = expected_loglik_gh(kPoisson, d, 0.2 + h, 0.6, none);
    const double fm = expected_loglik_gh(kPoisson, d, 0.2 - h, 0.6, none);
    CHECK(t.d1 == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-8));
  }
}

TEST_CASE("observation validation") {
  auto obs = Observations::from_response(Eigen::Vector2d(1.0, 2.5));
  CHECK_THROWS_AS(obs.validate(FamilyKind::Poisson), SupportViolation);
  CHECK_NOTHROW(obs.validate(FamilyKind::Gaussian));
  auto bin = Observations::from_response(Eigen::Vector2d(1.0, 2.0));
  CHECK_THROWS_AS(bin.validate(FamilyKind::Binomial), SupportViolation);
  bin.trials[1] = 3.0;
  CHECK_NOTHROW(bin.validate(FamilyKind::Binomial));
  CHECK(family_from_string("bernoulli") == FamilyKind::Binomial);
  CHECK_THROWS_AS(family_from_string("weibull"), Error);
}
