#include "latentfit/sparse.hpp"

#include "latentfit/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

namespace latentfit::sparse {

namespace {

int lower_position(std::span<const int> col_ptr, std::span<const int> row_idx, int row, int col) {
  auto first = row_idx.begin() + col_ptr[col];
  auto last = row_idx.begin() + col_ptr[col + 1];
  auto it = std::lower_bound(first, last, row);
  if (it == last || *it != row) return -1;
  return static_cast<int>(it - row_idx.begin());
}

void check_permutation(const std::vector<int>& perm, int n) {
  if (static_cast<int>(perm.size()) != n)
    throw DimensionMismatch("permutation length " + std::to_string(perm.size()) +
                            " does not match dimension " + std::to_string(n));
  std::vector<char> seen(n, 0);
  for (int p : perm) {
    if (p < 0 || p >= n || seen[p]) throw Error("invalid permutation");
    seen[p] = 1;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// SparsePattern

SparsePattern SparsePattern::from_entries(int n, std::span<const std::pair<int, int>> entries) {
  std::vector<std::vector<int>> cols(n);
  for (int j = 0; j < n; ++j) cols[j].push_back(j);
  for (auto [i, j] : entries) {
    if (i < 0 || j < 0 || i >= n || j >= n)
      throw IndexOutOfRange("pattern entry (" + std::to_string(i) + ", " + std::to_string(j) +
                            ") outside dimension " + std::to_string(n));
    if (i < j) std::swap(i, j);
    cols[j].push_back(i);
  }
  SparsePattern p;
  p.n_ = n;
  p.col_ptr_.assign(n + 1, 0);
  for (int j = 0; j < n; ++j) {
    auto& c = cols[j];
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    p.col_ptr_[j + 1] = p.col_ptr_[j] + static_cast<int>(c.size());
  }
  p.row_idx_.reserve(p.col_ptr_[n]);
  for (auto& c : cols) p.row_idx_.insert(p.row_idx_.end(), c.begin(), c.end());
  return p;
}

SparsePattern SparsePattern::from_adjacency(const std::vector<std::vector<int>>& adjacency) {
  const int n = static_cast<int>(adjacency.size());
  std::vector<std::pair<int, int>> entries;
  for (int i = 0; i < n; ++i)
    for (int j : adjacency[i]) {
      if (j < 0 || j >= n) throw IndexOutOfRange("adjacency index out of range");
      if (std::find(adjacency[j].begin(), adjacency[j].end(), i) == adjacency[j].end() && i != j)
        throw Error("adjacency is not symmetric at (" + std::to_string(i) + ", " +
                    std::to_string(j) + ")");
      if (j <= i) entries.emplace_back(i, j);
    }
  return from_entries(n, entries);
}

int SparsePattern::find(int i, int j) const {
  if (i < j) std::swap(i, j);
  if (j < 0 || i >= n_) return -1;
  return lower_position(col_ptr_, row_idx_, i, j);
}

std::vector<std::vector<int>> SparsePattern::adjacency() const {
  std::vector<std::vector<int>> adj(n_);
  for (int j = 0; j < n_; ++j)
    for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) {
      const int i = row_idx_[p];
      adj[j].push_back(i);
      if (i != j) adj[i].push_back(j);
    }
  for (auto& a : adj) std::sort(a.begin(), a.end());
  return adj;
}

// ---------------------------------------------------------------------------
// SparseSym

SparseSym::SparseSym(std::shared_ptr<const SparsePattern> pattern, std::vector<double> values)
    : pattern_(std::move(pattern)), values_(std::move(values)) {
  if (!pattern_) throw Error("SparseSym requires a pattern");
  if (static_cast<int>(values_.size()) != pattern_->nnz())
    throw DimensionMismatch("SparseSym: " + std::to_string(values_.size()) + " values for " +
                            std::to_string(pattern_->nnz()) + " pattern entries");
}

SparseSym SparseSym::from_triplets(int n, std::span<const std::tuple<int, int, double>> triplets) {
  std::vector<std::pair<int, int>> entries;
  entries.reserve(triplets.size());
  for (const auto& [i, j, v] : triplets) entries.emplace_back(i, j);
  auto pattern = std::make_shared<const SparsePattern>(SparsePattern::from_entries(n, entries));
  std::vector<double> values(pattern->nnz(), 0.0);
  for (const auto& [i, j, v] : triplets) values[pattern->find(i, j)] += v;
  return SparseSym(std::move(pattern), std::move(values));
}

SparseSym SparseSym::from_dense(const Eigen::MatrixXd& dense, double drop_tol) {
  if (dense.rows() != dense.cols()) throw DimensionMismatch("from_dense: matrix not square");
  std::vector<std::tuple<int, int, double>> t;
  for (int j = 0; j < dense.cols(); ++j)
    for (int i = j; i < dense.rows(); ++i)
      if (i == j || std::abs(dense(i, j)) > drop_tol) t.emplace_back(i, j, dense(i, j));
  return from_triplets(static_cast<int>(dense.rows()), t);
}

SparseSym SparseSym::identity(int n) {
  std::vector<std::tuple<int, int, double>> t;
  for (int i = 0; i < n; ++i) t.emplace_back(i, i, 1.0);
  return from_triplets(n, t);
}

double SparseSym::operator()(int i, int j) const {
  const int p = pattern_->find(i, j);
  return p < 0 ? 0.0 : values_[p];
}

Eigen::VectorXd SparseSym::multiply(const Eigen::VectorXd& x) const {
  const int n = size();
  if (x.size() != n) throw DimensionMismatch("SparseSym::multiply: dimension mismatch");
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  auto cp = pattern_->col_ptr();
  auto ri = pattern_->row_idx();
  for (int j = 0; j < n; ++j)
    for (int p = cp[j]; p < cp[j + 1]; ++p) {
      const int i = ri[p];
      y[i] += values_[p] * x[j];
      if (i != j) y[j] += values_[p] * x[i];
    }
  return y;
}

double SparseSym::quadratic_form(const Eigen::VectorXd& x) const { return x.dot(multiply(x)); }

double SparseSym::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

Eigen::MatrixXd SparseSym::to_dense() const {
  const int n = size();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  auto cp = pattern_->col_ptr();
  auto ri = pattern_->row_idx();
  for (int j = 0; j < n; ++j)
    for (int p = cp[j]; p < cp[j + 1]; ++p) {
      d(ri[p], j) = values_[p];
      d(j, ri[p]) = values_[p];
    }
  return d;
}

// ---------------------------------------------------------------------------
// Ordering

std::vector<int> minimum_degree_order(const SparsePattern& pattern) {
  const int n = pattern.size();
  std::vector<std::set<int>> adj(n);
  {
    auto cp = pattern.col_ptr();
    auto ri = pattern.row_idx();
    for (int j = 0; j < n; ++j)
      for (int p = cp[j]; p < cp[j + 1]; ++p) {
        const int i = ri[p];
        if (i == j) continue;
        adj[i].insert(j);
        adj[j].insert(i);
      }
  }
  std::set<std::pair<int, int>> queue;  // (degree, node)
  for (int i = 0; i < n; ++i) queue.emplace(static_cast<int>(adj[i].size()), i);

  std::vector<int> perm;
  perm.reserve(n);
  std::vector<int> nbrs;
  while (!queue.empty()) {
    const int v = queue.begin()->second;
    queue.erase(queue.begin());
    perm.push_back(v);
    nbrs.assign(adj[v].begin(), adj[v].end());
    for (int u : nbrs) {
      queue.erase({static_cast<int>(adj[u].size()), u});
      adj[u].erase(v);
    }
    // Eliminating v turns its neighbourhood into a clique.
    for (std::size_t a = 0; a < nbrs.size(); ++a)
      for (std::size_t b = a + 1; b < nbrs.size(); ++b) {
        adj[nbrs[a]].insert(nbrs[b]);
        adj[nbrs[b]].insert(nbrs[a]);
      }
    for (int u : nbrs) queue.emplace(static_cast<int>(adj[u].size()), u);
    adj[v].clear();
  }
  return perm;
}

// ---------------------------------------------------------------------------
// Symbolic analysis

std::shared_ptr<const SymbolicCholesky> SymbolicCholesky::analyze(
    std::shared_ptr<const SparsePattern> pattern, Ordering ordering) {
  std::vector<int> perm;
  if (ordering == Ordering::MinimumDegree) {
    perm = minimum_degree_order(*pattern);
  } else {
    perm.resize(pattern->size());
    std::iota(perm.begin(), perm.end(), 0);
  }
  return analyze(std::move(pattern), std::move(perm));
}

std::shared_ptr<const SymbolicCholesky> SymbolicCholesky::analyze(
    std::shared_ptr<const SparsePattern> pattern, std::vector<int> perm) {
  if (!pattern) throw Error("analyze: null pattern");
  const int n = pattern->size();
  check_permutation(perm, n);

  auto s = std::make_shared<SymbolicCholesky>();
  s->n_ = n;
  s->source_ = pattern;
  s->perm_ = std::move(perm);
  s->iperm_.assign(n, 0);
  for (int k = 0; k < n; ++k) s->iperm_[s->perm_[k]] = k;

  // Lower triangle of the permuted matrix, remembering where each source
  // entry lands.
  auto cp = pattern->col_ptr();
  auto ri = pattern->row_idx();
  const int nnz = pattern->nnz();
  std::vector<int> a_col_of(nnz), a_row_of(nnz);
  s->a_col_ptr_.assign(n + 1, 0);
  for (int j = 0; j < n; ++j)
    for (int p = cp[j]; p < cp[j + 1]; ++p) {
      int pi = s->iperm_[ri[p]], pj = s->iperm_[j];
      if (pi < pj) std::swap(pi, pj);
      a_col_of[p] = pj;
      a_row_of[p] = pi;
      ++s->a_col_ptr_[pj + 1];
    }
  std::partial_sum(s->a_col_ptr_.begin(), s->a_col_ptr_.end(), s->a_col_ptr_.begin());
  {
    std::vector<std::vector<std::pair<int, int>>> cols(n);  // (row, source position)
    for (int p = 0; p < nnz; ++p) cols[a_col_of[p]].emplace_back(a_row_of[p], p);
    s->a_row_idx_.resize(nnz);
    s->src_to_a_.resize(nnz);
    for (int j = 0; j < n; ++j) {
      std::sort(cols[j].begin(), cols[j].end());
      int q = s->a_col_ptr_[j];
      for (auto [row, src] : cols[j]) {
        s->a_row_idx_[q] = row;
        s->src_to_a_[src] = q;
        ++q;
      }
    }
  }

  // struct(L_j) = struct(A_j) ∪ (struct(L_c) \ {c}) over etree children c.
  s->parent_.assign(n, -1);
  std::vector<std::vector<int>> children(n);
  std::vector<std::vector<int>> lcols(n);
  std::vector<int> mark(n, -1);
  for (int j = 0; j < n; ++j) {
    auto& col = lcols[j];
    col.push_back(j);
    mark[j] = j;
    for (int q = s->a_col_ptr_[j]; q < s->a_col_ptr_[j + 1]; ++q) {
      const int i = s->a_row_idx_[q];
      if (mark[i] != j) {
        mark[i] = j;
        col.push_back(i);
      }
    }
    for (int c : children[j]) {
      for (std::size_t t = 1; t < lcols[c].size(); ++t) {
        const int i = lcols[c][t];
        if (mark[i] != j) {
          mark[i] = j;
          col.push_back(i);
        }
      }
    }
    std::sort(col.begin() + 1, col.end());
    if (col.size() > 1) {
      s->parent_[j] = col[1];
      children[col[1]].push_back(j);
    }
  }
  s->l_col_ptr_.assign(n + 1, 0);
  for (int j = 0; j < n; ++j)
    s->l_col_ptr_[j + 1] = s->l_col_ptr_[j] + static_cast<int>(lcols[j].size());
  s->l_row_idx_.reserve(s->l_col_ptr_[n]);
  for (auto& col : lcols) {
    s->l_row_idx_.insert(s->l_row_idx_.end(), col.begin(), col.end());
    std::vector<int>().swap(col);
  }
  return s;
}

bool SymbolicCholesky::matches(const SparsePattern& pattern) const {
  return source_.get() == &pattern || *source_ == pattern;
}

int SymbolicCholesky::find_l(int row, int col) const {
  if (row < col) std::swap(row, col);
  return lower_position(l_col_ptr_, l_row_idx_, row, col);
}

// ---------------------------------------------------------------------------
// Numeric factorization (left-looking, column linked lists)

CholFactor factorize(const SparseSym& q) { return factorize(q, nullptr); }

CholFactor factorize(const SparseSym& q, std::shared_ptr<const SymbolicCholesky> symbolic) {
  if (!symbolic || !symbolic->matches(q.pattern()))
    symbolic = SymbolicCholesky::analyze(q.pattern_ptr());
  const SymbolicCholesky& s = *symbolic;
  const int n = s.n_;

  std::vector<double> a(s.a_row_idx_.size());
  {
    auto qv = q.values();
    for (std::size_t p = 0; p < qv.size(); ++p) a[s.src_to_a_[p]] = qv[p];
  }

  CholFactor f;
  f.symbolic_ = symbolic;
  f.l_.assign(s.l_row_idx_.size(), 0.0);
  auto& l = f.l_;
  const auto& lp = s.l_col_ptr_;
  const auto& li = s.l_row_idx_;

  std::vector<double> x(n, 0.0);
  std::vector<int> next(n, -1);  // next[k]: position in column k of the next row to use
  std::vector<int> head(n, -1), link(n, -1);  // columns k waiting to update column j
  double logdet = 0.0;

  for (int j = 0; j < n; ++j) {
    for (int qpos = s.a_col_ptr_[j]; qpos < s.a_col_ptr_[j + 1]; ++qpos) x[s.a_row_idx_[qpos]] = a[qpos];

    int k = head[j];
    while (k != -1) {
      const int knext = link[k];
      const int pos = next[k];
      const double ljk = l[pos];
      for (int p = pos; p < lp[k + 1]; ++p) x[li[p]] -= l[p] * ljk;
      next[k] = pos + 1;
      if (next[k] < lp[k + 1]) {
        const int r = li[next[k]];
        link[k] = head[r];
        head[r] = k;
      }
      k = knext;
    }

    const double d = x[j];
    if (!(d > kPivotThreshold) || !std::isfinite(d)) throw NotPositiveDefinite(j, d);
    const double ljj = std::sqrt(d);
    logdet += 2.0 * std::log(ljj);
    l[lp[j]] = ljj;
    x[j] = 0.0;
    for (int p = lp[j] + 1; p < lp[j + 1]; ++p) {
      l[p] = x[li[p]] / ljj;
      x[li[p]] = 0.0;
    }
    if (lp[j] + 1 < lp[j + 1]) {
      next[j] = lp[j] + 1;
      const int r = li[next[j]];
      link[j] = head[r];
      head[r] = j;
    }
  }
  f.logdet_ = logdet;
  return f;
}

Eigen::VectorXd CholFactor::solve(const Eigen::VectorXd& b) const {
  const SymbolicCholesky& s = *symbolic_;
  const int n = s.size();
  if (b.size() != n)
    throw DimensionMismatch("solve: rhs length " + std::to_string(b.size()) +
                            " does not match dimension " + std::to_string(n));
  auto perm = s.perm();
  auto lp = s.l_col_ptr();
  auto li = s.l_row_idx();
  std::vector<double> y(n);
  for (int k = 0; k < n; ++k) y[k] = b[perm[k]];
  for (int j = 0; j < n; ++j) {
    y[j] /= l_[lp[j]];
    const double yj = y[j];
    for (int p = lp[j] + 1; p < lp[j + 1]; ++p) y[li[p]] -= l_[p] * yj;
  }
  for (int j = n - 1; j >= 0; --j) {
    double acc = y[j];
    for (int p = lp[j] + 1; p < lp[j + 1]; ++p) acc -= l_[p] * y[li[p]];
    y[j] = acc / l_[lp[j]];
  }
  Eigen::VectorXd out(n);
  for (int k = 0; k < n; ++k) out[perm[k]] = y[k];
  return out;
}

Eigen::MatrixXd CholFactor::dense_l() const {
  const SymbolicCholesky& s = *symbolic_;
  const int n = s.size();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  auto lp = s.l_col_ptr();
  auto li = s.l_row_idx();
  for (int j = 0; j < n; ++j)
    for (int p = lp[j]; p < lp[j + 1]; ++p) d(li[p], j) = l_[p];
  return d;
}

// ---------------------------------------------------------------------------
// Selected inverse
//
// Backward recursion over columns of L:
//   C_ij = delta_ij / L_ii^2 - (1/L_ii) * sum_{k>i, L_ki != 0} L_ki C_kj
// Every C_kj needed lies in the filled pattern, so the result lives on the
// storage of L.

SelectedInverse selected_inverse(const CholFactor& factor) {
  const SymbolicCholesky& s = factor.symbolic();
  const int n = s.size();
  auto lp = s.l_col_ptr();
  auto li = s.l_row_idx();
  auto l = factor.l_values();

  SelectedInverse out;
  out.symbolic_ = factor.symbolic_ptr();
  out.c_.assign(l.size(), 0.0);
  auto& c = out.c_;

  std::vector<int> where(n, -1);  // row -> offset within the current column
  std::vector<double> acc;
  for (int i = n - 1; i >= 0; --i) {
    const int begin = lp[i] + 1;
    const int end = lp[i + 1];
    const int len = end - begin;
    for (int t = 0; t < len; ++t) where[li[begin + t]] = t;
    acc.assign(len, 0.0);

    // acc[t] = sum_k L_ki C(k, j_t) over k in struct(L_i), using symmetry:
    // each stored C(k, j) with k >= j, both in struct(L_i), feeds two sums.
    for (int t = 0; t < len; ++t) {
      const int j = li[begin + t];
      const double lji = l[begin + t];
      for (int p = lp[j]; p < lp[j + 1]; ++p) {
        const int k = li[p];
        const int tk = where[k];
        if (tk < 0) continue;
        if (k == j) {
          acc[t] += lji * c[p];
        } else {
          acc[t] += l[begin + tk] * c[p];
          acc[tk] += lji * c[p];
        }
      }
    }
    const double lii = l[lp[i]];
    double diag_sum = 0.0;
    for (int t = 0; t < len; ++t) {
      c[begin + t] = -acc[t] / lii;
      diag_sum += l[begin + t] * c[begin + t];
    }
    c[lp[i]] = 1.0 / (lii * lii) - diag_sum / lii;
    for (int t = 0; t < len; ++t) where[li[begin + t]] = -1;
  }
  return out;
}

int SelectedInverse::position(int i, int j) const {
  const int n = size();
  if (i < 0 || j < 0 || i >= n || j >= n) return -1;
  auto ip = symbolic_->inverse_perm();
  return symbolic_->find_l(ip[i], ip[j]);
}

bool SelectedInverse::contains(int i, int j) const { return position(i, j) >= 0; }

double SelectedInverse::operator()(int i, int j) const {
  const int p = position(i, j);
  if (p < 0)
    throw MissingCEntry("selected inverse has no entry (" + std::to_string(i) + ", " +
                        std::to_string(j) + ")");
  return c_[p];
}

Eigen::VectorXd SelectedInverse::diagonal() const {
  const int n = size();
  auto ip = symbolic_->inverse_perm();
  auto lp = symbolic_->l_col_ptr();
  Eigen::VectorXd d(n);
  for (int i = 0; i < n; ++i) d[i] = c_[lp[ip[i]]];
  return d;
}

Eigen::MatrixXd inverse_columns(const CholFactor& factor, std::span<const int> cols) {
  const int n = factor.size();
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(cols.size()));
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  for (std::size_t t = 0; t < cols.size(); ++t) {
    const int j = cols[t];
    if (j < 0 || j >= n)
      throw IndexOutOfRange("inverse_columns: column " + std::to_string(j) + " outside [0, " +
                            std::to_string(n) + ")");
    e[j] = 1.0;
    out.col(static_cast<Eigen::Index>(t)) = factor.solve(e);
    e[j] = 0.0;
  }
  return out;
}

}  // namespace latentfit::sparse
