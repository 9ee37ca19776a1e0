#pragma once

// Sparse symmetric linear algebra: fill-reducing ordering, simplicial
// Cholesky with a reusable symbolic analysis, solves, log-determinants and
// the Takahashi selected inverse.
//
// Storage is compressed-column lower triangle (diagonal included) with
// strictly increasing row indices per column, so the diagonal is always the
// first entry of its column.

#include <Eigen/Dense>

#include <memory>
#include <span>
#include <tuple>
#include <vector>

namespace latentfit::sparse {

class SparseSym;
class SymbolicCholesky;
class CholFactor;
CholFactor factorize(const SparseSym& q, std::shared_ptr<const SymbolicCholesky> symbolic);

/// Symmetric sparsity graph stored as its lower triangle.
class SparsePattern {
 public:
  SparsePattern() = default;

  /// `entries` may name either triangle and may repeat; the diagonal is
  /// always added.
  static SparsePattern from_entries(int n, std::span<const std::pair<int, int>> entries);
  /// `adjacency[i]` lists neighbours of i; must be symmetric.
  static SparsePattern from_adjacency(const std::vector<std::vector<int>>& adjacency);

  int size() const { return n_; }
  int nnz() const { return static_cast<int>(row_idx_.size()); }
  std::span<const int> col_ptr() const { return col_ptr_; }
  std::span<const int> row_idx() const { return row_idx_; }

  /// Storage position of (i, j) in either triangle, or -1.
  int find(int i, int j) const;

  /// Symmetric neighbour lists (sorted, diagonal included).
  std::vector<std::vector<int>> adjacency() const;

  bool operator==(const SparsePattern& other) const = default;

 private:
  int n_ = 0;
  std::vector<int> col_ptr_{0};
  std::vector<int> row_idx_;
};

/// Symmetric matrix on a shared pattern. Several matrices built for
/// different hyperparameters share one pattern object so that the symbolic
/// factorization can be reused.
class SparseSym {
 public:
  SparseSym() = default;
  SparseSym(std::shared_ptr<const SparsePattern> pattern, std::vector<double> values);

  /// Builds pattern and values from (row, col, value) triplets in either
  /// triangle; duplicates are summed. Missing diagonal entries become 0.
  static SparseSym from_triplets(int n, std::span<const std::tuple<int, int, double>> triplets);
  static SparseSym from_dense(const Eigen::MatrixXd& dense, double drop_tol = 0.0);
  static SparseSym identity(int n);

  int size() const { return pattern_ ? pattern_->size() : 0; }
  const SparsePattern& pattern() const { return *pattern_; }
  const std::shared_ptr<const SparsePattern>& pattern_ptr() const { return pattern_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  /// Entry (i, j); zero outside the pattern.
  double operator()(int i, int j) const;

  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const;
  double quadratic_form(const Eigen::VectorXd& x) const;
  double max_abs() const;
  Eigen::MatrixXd to_dense() const;

 private:
  std::shared_ptr<const SparsePattern> pattern_;
  std::vector<double> values_;
};

enum class Ordering { MinimumDegree, Natural };

/// Deterministic minimum-degree elimination order (ties go to the lowest
/// index). Returns perm with perm[new] = old.
std::vector<int> minimum_degree_order(const SparsePattern& pattern);

/// Ordering plus the structure of L for one pattern. Immutable and shared
/// between all numeric factorizations of matrices on that pattern.
class SymbolicCholesky {
 public:
  static std::shared_ptr<const SymbolicCholesky> analyze(
      std::shared_ptr<const SparsePattern> pattern, Ordering ordering = Ordering::MinimumDegree);
  /// Uses a caller-supplied permutation (perm[new] = old).
  static std::shared_ptr<const SymbolicCholesky> analyze(
      std::shared_ptr<const SparsePattern> pattern, std::vector<int> perm);

  int size() const { return n_; }
  bool matches(const SparsePattern& pattern) const;
  const std::shared_ptr<const SparsePattern>& source_pattern() const { return source_; }

  std::span<const int> perm() const { return perm_; }
  std::span<const int> inverse_perm() const { return iperm_; }
  std::span<const int> parent() const { return parent_; }
  std::span<const int> l_col_ptr() const { return l_col_ptr_; }
  std::span<const int> l_row_idx() const { return l_row_idx_; }
  int l_nnz() const { return static_cast<int>(l_row_idx_.size()); }

  /// Position of L(row, col) in permuted coordinates (row >= col), or -1.
  int find_l(int row, int col) const;

 private:
  friend CholFactor factorize(const SparseSym&, std::shared_ptr<const SymbolicCholesky>);

  int n_ = 0;
  std::shared_ptr<const SparsePattern> source_;
  std::vector<int> perm_, iperm_, parent_;
  std::vector<int> l_col_ptr_, l_row_idx_;
  // Lower triangle of P Q P^T and the map from source storage into it.
  std::vector<int> a_col_ptr_, a_row_idx_, src_to_a_;
};

/// Numeric factor P Q P^T = L L^T.
class CholFactor {
 public:
  int size() const { return symbolic_->size(); }
  const SymbolicCholesky& symbolic() const { return *symbolic_; }
  const std::shared_ptr<const SymbolicCholesky>& symbolic_ptr() const { return symbolic_; }
  std::span<const double> l_values() const { return l_; }
  double logdet() const { return logdet_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  /// Dense copy of L in permuted coordinates; for tests and small problems.
  Eigen::MatrixXd dense_l() const;

 private:
  friend CholFactor factorize(const SparseSym&, std::shared_ptr<const SymbolicCholesky>);
  std::shared_ptr<const SymbolicCholesky> symbolic_;
  std::vector<double> l_;
  double logdet_ = 0.0;
};

/// Pivots at or below this value raise NotPositiveDefinite.
inline constexpr double kPivotThreshold = 1e-300;

/// Factorizes `q`, reusing `symbolic` when it was built for the same
/// pattern and running a fresh minimum-degree analysis otherwise (also when
/// `symbolic` is null). Throws NotPositiveDefinite; never modifies `q`.
CholFactor factorize(const SparseSym& q, std::shared_ptr<const SymbolicCholesky> symbolic);
CholFactor factorize(const SparseSym& q);

/// Entries of Q^{-1} on the filled pattern of L + L^T.
class SelectedInverse {
 public:
  int size() const { return symbolic_->size(); }
  /// (Q^{-1})_{ij} in original coordinates; throws MissingCEntry when the
  /// entry is outside the filled pattern.
  double operator()(int i, int j) const;
  bool contains(int i, int j) const;
  Eigen::VectorXd diagonal() const;

  /// Storage position of (i, j) (original coordinates), or -1. Positions are
  /// stable for every selected inverse sharing the same symbolic analysis.
  int position(int i, int j) const;
  std::span<const double> values() const { return c_; }
  const SymbolicCholesky& symbolic() const { return *symbolic_; }

 private:
  friend SelectedInverse selected_inverse(const CholFactor&);
  std::shared_ptr<const SymbolicCholesky> symbolic_;
  std::vector<double> c_;
};

SelectedInverse selected_inverse(const CholFactor& factor);

/// Columns of Q^{-1} by solving against unit vectors.
Eigen::MatrixXd inverse_columns(const CholFactor& factor, std::span<const int> cols);

}  // namespace latentfit::sparse
