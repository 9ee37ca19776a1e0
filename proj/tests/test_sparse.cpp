#include <doctest.h>

#include "latentfit/error.hpp"
#include "latentfit/sparse.hpp"
#include "test_util.hpp"

#include <cmath>
#include <numeric>
#include <random>

using namespace latentfit;
using namespace latentfit::sparse;
using latentfit::testing::random_spd;

namespace {

SparseSym two_by_two() {
  const std::vector<std::tuple<int, int, double>> t{{0, 0, 4.0}, {1, 0, 2.0}, {1, 1, 3.0}};
  return SparseSym::from_triplets(2, t);
}

Eigen::MatrixXd permuted(const SparseSym& q, std::span<const int> perm) {
  const Eigen::MatrixXd d = q.to_dense();
  const int n = q.size();
  Eigen::MatrixXd out(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) out(a, b) = d(perm[a], perm[b]);
  return out;
}

}  // namespace

TEST_CASE("pattern construction adds the diagonal and removes duplicates") {
  const std::vector<std::pair<int, int>> e{{0, 2}, {2, 0}, {1, 2}};
  const auto p = SparsePattern::from_entries(3, e);
  CHECK(p.nnz() == 5);
  CHECK(p.find(0, 0) >= 0);
  CHECK(p.find(0, 2) == p.find(2, 0));
  CHECK(p.find(0, 1) == -1);
  const auto adj = p.adjacency();
  CHECK(adj[2] == std::vector<int>{0, 1, 2});
  CHECK(SparsePattern::from_adjacency(adj) == p);
  CHECK_THROWS_AS(SparsePattern::from_entries(2, std::vector<std::pair<int, int>>{{0, 3}}), IndexOutOfRange);
}

TEST_CASE("factorize identity") {
  const auto f = factorize(SparseSym::identity(3));
  CHECK((f.dense_l() - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(f.logdet() == 0.0);
}

TEST_CASE("factorize 2x2 by hand") {
  const auto q = two_by_two();
  const auto f = factorize(q, SymbolicCholesky::analyze(q.pattern_ptr(), Ordering::Natural));
  const Eigen::MatrixXd l = f.dense_l();
  CHECK(l(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(l(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(l(1, 1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(l(0, 1) == 0.0);
  CHECK(f.logdet() == doctest::Approx(std::log(8.0)).epsilon(1e-14));
}

TEST_CASE("factor reconstructs the permuted matrix and its log-determinant") {
  for (int n : {50, 120, 200}) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      const auto q = random_spd(n, 0.05, seed * 31 + n);
      const auto f = factorize(q);
      const Eigen::MatrixXd l = f.dense_l();
      const Eigen::MatrixXd pqp = permuted(q, f.symbolic().perm());
      CHECK(latentfit::testing::max_abs(pqp - l * l.transpose()) <= 1e-12 * q.max_abs());
      const double dense_logdet = 2.0 * Eigen::LLT<Eigen::MatrixXd>(q.to_dense())
                                            .matrixL().toDenseMatrix().diagonal().array().log().sum();
      CHECK(std::abs(f.logdet() - dense_logdet) <= 1e-9);
      for (int j = 0; j < n; ++j) CHECK(l(j, j) > 0.0);
    }
  }
}

TEST_CASE("solve") {
  SUBCASE("identity") {
    const Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(4, -1.0, 2.0);
    CHECK((factorize(SparseSym::identity(4)).solve(b) - b).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("2x2 by hand") {
    // Q (1, 2) = (8, 8).
    const auto x = factorize(two_by_two()).solve(Eigen::Vector2d(8.0, 8.0));
    CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(x[1] == doctest::Approx(2.0).epsilon(1e-14));
  }
  SUBCASE("random n=100 residual") {
    const auto q = random_spd(100, 0.05, 99);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z;
    Eigen::VectorXd b(100);
    for (auto& v : b) v = z(rng);
    const auto x = factorize(q).solve(b);
    CHECK((q.multiply(x) - b).lpNorm<Eigen::Infinity>() / b.lpNorm<Eigen::Infinity>() <= 1e-10);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(factorize(SparseSym::identity(3)).solve(Eigen::VectorXd::Ones(2)), DimensionMismatch);
  }
}

TEST_CASE("selected inverse") {
  SUBCASE("diagonal reciprocal") {
    const std::vector<std::tuple<int, int, double>> t{{0, 0, 2.0}, {1, 1, 4.0}};
    const auto c = selected_inverse(factorize(SparseSym::from_triplets(2, t)));
    CHECK(c(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(c(1, 1) == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("2x2 by hand") {
    const auto c = selected_inverse(factorize(two_by_two()));
    CHECK(c(0, 0) == doctest::Approx(0.375).epsilon(1e-14));
    CHECK(c(0, 1) == doctest::Approx(-0.25).epsilon(1e-14));
    CHECK(c(1, 0) == doctest::Approx(-0.25).epsilon(1e-14));
    CHECK(c(1, 1) == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("random n=200 against the dense inverse") {
    const auto q = random_spd(200, 0.03, 7);
    const auto f = factorize(q);
    const auto c = selected_inverse(f);
    const Eigen::MatrixXd dense = q.to_dense().inverse();
    const auto& s = f.symbolic();
    double worst = 0.0;
    int checked = 0;
    for (int j = 0; j < 200; ++j)
      for (int p = s.l_col_ptr()[j]; p < s.l_col_ptr()[j + 1]; ++p) {
        const int a = s.perm()[s.l_row_idx()[p]];
        const int b = s.perm()[j];
        const double scale = std::sqrt(dense(a, a) * dense(b, b));
        worst = std::max(worst, std::abs(c(a, b) - dense(a, b)) / scale);
        ++checked;
      }
    CHECK(checked == s.l_nnz());
    CHECK(worst <= 1e-9);
    // Every entry of the original pattern is available.
    const auto& pat = q.pattern();
    for (int j = 0; j < 200; ++j)
      for (int p = pat.col_ptr()[j]; p < pat.col_ptr()[j + 1]; ++p) CHECK(c.contains(pat.row_idx()[p], j));
  }
  SUBCASE("missing entries are reported") {
    const auto c = selected_inverse(factorize(SparseSym::identity(3)));
    CHECK_THROWS_AS(c(0, 2), MissingCEntry);
  }
}

TEST_CASE("inverse columns") {
  SUBCASE("identity") {
    const std::vector<int> cols{1};
    const auto m = inverse_columns(factorize(SparseSym::identity(3)), cols);
    CHECK(m.col(0).isApprox(Eigen::Vector3d(0, 1, 0)));
  }
  SUBCASE("2x2") {
    const std::vector<int> cols{0};
    const auto m = inverse_columns(factorize(two_by_two()), cols);
    CHECK(m(0, 0) == doctest::Approx(0.375).epsilon(1e-14));
    CHECK(m(1, 0) == doctest::Approx(-0.25).epsilon(1e-14));
  }
  SUBCASE("random n=100 and agreement with the selected inverse") {
    const auto q = random_spd(100, 0.05, 11);
    const auto f = factorize(q);
    const std::vector<int> cols{0, 17, 42, 63, 99};
    const auto m = inverse_columns(f, cols);
    const Eigen::MatrixXd dense = q.to_dense().inverse();
    const auto c = selected_inverse(f);
    for (std::size_t t = 0; t < cols.size(); ++t) {
      const Eigen::VectorXd ref = dense.col(cols[t]);
      CHECK((m.col(t) - ref).norm() / ref.norm() <= 1e-10);
      for (int i = 0; i < 100; ++i)
        if (c.contains(i, cols[t])) CHECK(std::abs(c(i, cols[t]) - m(i, t)) <= 1e-10);
    }
  }
  SUBCASE("out of range") {
    const std::vector<int> cols{3};
    CHECK_THROWS_AS(inverse_columns(factorize(SparseSym::identity(3)), cols), IndexOutOfRange);
  }
}

TEST_CASE("selected-inverse diagonal does not depend on the ordering") {
  const auto q = random_spd(80, 0.06, 3);
  const Eigen::VectorXd amd = selected_inverse(factorize(q)).diagonal();
  const Eigen::VectorXd nat =
      selected_inverse(factorize(q, SymbolicCholesky::analyze(q.pattern_ptr(), Ordering::Natural))).diagonal();
  std::vector<int> perm(80);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(8));
  const Eigen::VectorXd rnd =
      selected_inverse(factorize(q, SymbolicCholesky::analyze(q.pattern_ptr(), perm))).diagonal();
  CHECK((amd - nat).lpNorm<Eigen::Infinity>() <= 1e-12);
  CHECK((amd - rnd).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("symbolic analysis is reused across numeric factorizations") {
  auto q1 = random_spd(60, 0.05, 21);
  const auto sym = SymbolicCholesky::analyze(q1.pattern_ptr());
  std::vector<double> v(q1.values().begin(), q1.values().end());
  for (auto& x : v) x *= 1.7;
  const SparseSym q2(q1.pattern_ptr(), v);
  const auto f2 = factorize(q2, sym);
  CHECK(f2.symbolic_ptr() == sym);
  CHECK(f2.logdet() == doctest::Approx(factorize(q1, sym).logdet() + 60 * std::log(1.7)).epsilon(1e-12));
  // A structurally different matrix triggers a fresh analysis.
  const auto other = random_spd(60, 0.05, 22);
  CHECK(factorize(other, sym).symbolic_ptr() != sym);
}

TEST_CASE("minimum degree ordering") {
  // Arrow matrix: hub 0 connected to every leaf. Eliminating leaves first
  // gives no fill; the hub cannot go before the last two nodes.
  const int n = 30;
  std::vector<std::tuple<int, int, double>> t;
  for (int i = 0; i < n; ++i) t.emplace_back(i, i, i == 0 ? n : 2.0);
  for (int i = 1; i < n; ++i) t.emplace_back(i, 0, 1.0);
  const auto q = SparseSym::from_triplets(n, t);
  const auto perm = minimum_degree_order(q.pattern());
  CHECK(std::find(perm.begin(), perm.end(), 0) - perm.begin() >= n - 2);
  CHECK(perm == minimum_degree_order(q.pattern()));
  CHECK(SymbolicCholesky::analyze(q.pattern_ptr())->l_nnz() == q.pattern().nnz());
}

TEST_CASE("non positive definite input is rejected without modification") {
  const std::vector<std::tuple<int, int, double>> t{{0, 0, 1.0}, {1, 0, 2.0}, {1, 1, 1.0}};
  const auto q = SparseSym::from_triplets(2, t);
  const std::vector<double> before(q.values().begin(), q.values().end());
  CHECK_THROWS_AS(factorize(q), NotPositiveDefinite);
  CHECK(std::equal(before.begin(), before.end(), q.values().begin()));
}
