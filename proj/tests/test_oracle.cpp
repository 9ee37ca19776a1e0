#include <doctest.h>

#include "latentfit/error.hpp"
#include "latentfit/oracle.hpp"
#include "test_util.hpp"

#include <cmath>
#include <random>

using namespace latentfit;
using namespace latentfit::oracle;

TEST_CASE("dense inverse of small matrices") {
  const Eigen::MatrixXd d = Eigen::Vector2d(2.0, 4.0).asDiagonal();
  const Eigen::MatrixXd di = dense_inverse(d);
  CHECK(di(0, 0) == doctest::Approx(0.5));
  CHECK(di(1, 1) == doctest::Approx(0.25));
  CHECK(di(0, 1) == 0.0);

  Eigen::Matrix2d m;
  m << 4, 2, 2, 3;
  const Eigen::MatrixXd mi = dense_inverse(m);
  CHECK(mi(0, 0) == doctest::Approx(0.375).epsilon(1e-15));
  CHECK(mi(0, 1) == doctest::Approx(-0.25).epsilon(1e-15));
  CHECK(mi(1, 1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("dense inverse residual on a random SPD matrix of size 200") {
  const Eigen::MatrixXd q = testing::random_spd(200, 0.05, 9).to_dense();
  const Eigen::MatrixXd qi = dense_inverse(q);
  CHECK(testing::max_abs(q * qi - Eigen::MatrixXd::Identity(200, 200)) < 1e-9);
}

TEST_CASE("dense oracles refuse oversized inputs") {
  CHECK_THROWS_AS(dense_inverse(Eigen::MatrixXd::Identity(501, 501)), SizeCapExceeded);
  CHECK_THROWS_AS(dense_linpred_variance(Eigen::MatrixXd::Zero(501, 3), Eigen::MatrixXd::Identity(3, 3)),
                  SizeCapExceeded);
  CHECK_THROWS_AS(dense_inverse(-Eigen::MatrixXd::Identity(3, 3)), Error);
}

TEST_CASE("quadrature: gaussian conjugate posterior") {
  // y_i ~ N(b, 1), b ~ N(0, 1/t0): posterior N(sum y / (n + t0), 1 / (n + t0)).
  const std::vector<double> y{0.3, 1.1, -0.4, 2.0};
  const double t0 = 0.5;
  auto lp = [&](std::span<const double> b) {
    double v = -0.5 * t0 * b[0] * b[0];
    for (double yi : y) v -= 0.5 * (yi - b[0]) * (yi - b[0]);
    return v;
  };
  const auto r = quadrature_posterior(lp, std::vector<double>{-10.0}, std::vector<double>{10.0});
  const double prec = y.size() + t0;
  CHECK(std::abs(r.means[0] - 3.0 / prec) < 1e-8);
  CHECK(std::abs(r.sds[0] - 1.0 / std::sqrt(prec)) < 1e-8);
  CHECK(r.mcse.empty());
  CHECK(r.method == "quadrature");
}

TEST_CASE("quadrature: normalization invariance and a 2-d correlated Gaussian") {
  auto lp = [](std::span<const double> z) {
    // Precision [[2, 0.8], [0.8, 1]], mean (0.5, -1).
    const double a = z[0] - 0.5, b = z[1] + 1.0;
    return -0.5 * (2.0 * a * a + 1.6 * a * b + b * b);
  };
  const std::vector<double> lo{-8.0, -9.0}, hi{9.0, 8.0};
  const auto r1 = quadrature_posterior(lp, lo, hi);
  const auto r2 = quadrature_posterior([&](std::span<const double> z) { return lp(z) + 123.0; }, lo, hi);
  Eigen::Matrix2d prec;
  prec << 2.0, 0.8, 0.8, 1.0;
  const Eigen::Matrix2d cov = prec.inverse();
  CHECK(std::abs(r1.means[0] - 0.5) < 1e-8);
  CHECK(std::abs(r1.means[1] + 1.0) < 1e-8);
  CHECK(std::abs(r1.sds[0] - std::sqrt(cov(0, 0))) < 1e-7);
  CHECK(std::abs(r1.sds[1] - std::sqrt(cov(1, 1))) < 1e-7);
  CHECK(std::abs(r1.means[0] - r2.means[0]) < 1e-12);
  CHECK(std::abs(r1.sds[1] - r2.sds[1]) < 1e-12);
  CHECK_THROWS_AS(quadrature_posterior(lp, std::vector<double>(4, 0.0), std::vector<double>(4, 1.0)),
                  SizeCapExceeded);
}

TEST_CASE("quadrature: poisson intercept with y = (1, 2, 3) is stable across tolerances") {
  auto lp = [](std::span<const double> b) {
    return -0.5 * 0.001 * b[0] * b[0] + 6.0 * b[0] - 3.0 * std::exp(b[0]);
  };
  const auto a = quadrature_posterior(lp, std::vector<double>{-10.0}, std::vector<double>{5.0}, 1e-8);
  const auto b = quadrature_posterior(lp, std::vector<double>{-12.0}, std::vector<double>{6.0}, 1e-11);
  CHECK(std::abs(a.means[0] - b.means[0]) < 1e-8);
  // Flat-prior limit: E[b] = digamma(6) - log 3.
  const double flat = 1.7061176684318 - std::log(3.0);
  CHECK(std::abs(a.means[0] - flat) < 1e-3);
}

TEST_CASE("metropolis: standard normal within 3 MCSE") {
  MetropolisOptions opts;
  opts.draws = 100000;
  opts.seed = 4;
  const auto r = metropolis([](std::span<const double> z) { return -0.5 * z[0] * z[0]; },
                            std::vector<double>{0.0}, opts);
  REQUIRE(r.mcse.size() == 1);
  CHECK(std::abs(r.means[0]) <= 3.0 * r.mcse[0]);
  CHECK(std::abs(r.sds[0] - 1.0) < 0.05);
  CHECK(r.draws == 80000);
  CHECK(r.acceptance > 0.1);
}

TEST_CASE("metropolis is reproducible under a fixed seed") {
  MetropolisOptions opts;
  opts.draws = 20000;
  opts.seed = 99;
  auto lp = [](std::span<const double> z) { return -0.5 * (z[0] * z[0] + 4.0 * z[1] * z[1]); };
  const std::vector<double> start{1.0, 1.0};
  const auto a = metropolis(lp, start, opts);
  const auto b = metropolis(lp, start, opts);
  CHECK(a.means == b.means);
  CHECK(a.sds == b.sds);
  CHECK(a.mcse == b.mcse);
}

TEST_CASE("dense LGM: log joint by direct algebra and a conjugate metropolis check") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  DataTable d;
  std::vector<double> y(30), x(30);
  for (int i = 0; i < 30; ++i) {
    x[i] = nd(rng);
    y[i] = 1.0 + 0.5 * x[i] + 0.3 * nd(rng);
  }
  d.set("y", y);
  d.set("x", x);
  ModelSpec spec{.family = FamilyKind::Gaussian, .response = "y"};
  spec.components = {{.name = "(Intercept)", .kind = ComponentKind::Intercept},
                     {.name = "x", .kind = ComponentKind::Linear, .column = "x"}};
  const auto built = build_model(spec, d);
  const auto lgm = DenseLgm::from_built(built);
  REQUIRE(lgm.latent_dim() == 2);
  REQUIRE(lgm.num_hyper() == 1);
  CHECK(testing::max_abs(lgm.q0 - 0.001 * Eigen::MatrixXd::Identity(2, 2)) < 1e-15);

  const double b0 = 0.9, b1 = 0.4, th = 2.0, tau = std::exp(th);
  double ref = 0.5 * 2.0 * std::log(0.001) - 0.5 * 0.001 * (b0 * b0 + b1 * b1) - std::log(2.0 * M_PI);
  const auto& g = lgm.priors[0];
  ref += g.shape * std::log(g.rate) - std::lgamma(g.shape) + g.shape * th - g.rate * tau;
  for (int i = 0; i < 30; ++i) {
    const double r = y[i] - b0 - b1 * x[i];
    ref += 0.5 * std::log(tau / (2.0 * M_PI)) - 0.5 * tau * r * r;
  }
  const std::vector<double> z{b0, b1, th};
  CHECK(lgm.log_joint(z) == doctest::Approx(ref).epsilon(1e-12));

  // A very informative prior pins tau, leaving a conjugate latent posterior.
  auto pinned = lgm;
  pinned.priors[0] = {1e4, 1e4 / tau};
  MetropolisOptions opts;
  opts.draws = 200000;
  opts.seed = 7;
  const auto r = metropolis_lgm(pinned, opts);
  const Eigen::MatrixXd a = built.a.to_dense();
  const Eigen::MatrixXd prec = lgm.q0 + tau * a.transpose() * a;
  const Eigen::VectorXd mean = prec.ldlt().solve(tau * a.transpose() * Eigen::Map<const Eigen::VectorXd>(y.data(), 30));
  for (int k = 0; k < 2; ++k) CHECK(std::abs(r.means[k] - mean[k]) <= 3.0 * r.mcse[k]);
}
