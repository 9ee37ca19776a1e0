#include "latentfit/inner.hpp"

#include "latentfit/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace latentfit {

namespace {

using sparse::SparsePattern;
using sparse::SparseSym;

// Appends every stored (row >= col) entry of `pattern`, shifted by `offset`.
void append_pattern(const SparsePattern& pattern, int offset, std::vector<std::pair<int, int>>& out) {
  const auto cp = pattern.col_ptr();
  const auto ri = pattern.row_idx();
  for (int j = 0; j < pattern.size(); ++j)
    for (int p = cp[j]; p < cp[j + 1]; ++p) out.emplace_back(ri[p] + offset, j + offset);
}

// Lower-triangle pairs (j, l) touched by row i of A^T A, shifted by `offset`.
template <class F>
void for_each_row_pair(const DesignMatrix& a, int i, F&& f) {
  const auto rp = a.row_ptr();
  const auto ci = a.col_idx();
  const auto v = a.values();
  for (int k1 = rp[i]; k1 < rp[i + 1]; ++k1)
    for (int k2 = rp[i]; k2 <= k1; ++k2) {
      const int r = std::max(ci[k1], ci[k2]);
      const int c = std::min(ci[k1], ci[k2]);
      f(r, c, v[k1] * v[k2]);
    }
}

std::vector<int> position_map(const SparsePattern& from, const SparsePattern& into, int offset) {
  std::vector<int> map(from.nnz());
  const auto cp = from.col_ptr();
  const auto ri = from.row_idx();
  for (int j = 0; j < from.size(); ++j)
    for (int p = cp[j]; p < cp[j + 1]; ++p) map[p] = into.find(ri[p] + offset, j + offset);
  return map;
}

double loglik_sum(const Family& family, const Observations& obs, const Eigen::VectorXd& eta,
                  std::span<const double> theta) {
  double s = 0.0;
  for (int i = 0; i < obs.size(); ++i) s += log_lik(family, obs[i], eta[i], theta);
  return s;
}

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

// Round-off scale of the objective: a multiple of eps times the magnitudes
// summed into sum_i log pi(y_i | eta_i) - 1/2 mu^T Q mu.
double objective_noise(const SparseSym& q, const Eigen::VectorXd& mu, double ll) {
  const auto cp = q.pattern().col_ptr();
  const auto ri = q.pattern().row_idx();
  const auto v = q.values();
  double quad = 0.0;
  for (int j = 0; j < q.size(); ++j)
    for (int p = cp[j]; p < cp[j + 1]; ++p)
      quad += (ri[p] == j ? 1.0 : 2.0) * std::abs(v[p] * mu[ri[p]] * mu[j]);
  return 64.0 * std::numeric_limits<double>::epsilon() * (std::abs(ll) + 0.5 * quad);
}

}  // namespace

// ---------------------------------------------------------------------------

InnerProblem::InnerProblem(std::shared_ptr<const SparsePattern> prior_pattern, DesignMatrix a)
    : prior_pattern_(std::move(prior_pattern)), a_(std::move(a)) {
  if (!prior_pattern_) throw Error("InnerProblem: null prior pattern");
  if (prior_pattern_->size() != a_.cols())
    throw DimensionMismatch("design has " + std::to_string(a_.cols()) + " columns, prior has dimension " +
                            std::to_string(prior_pattern_->size()));
  std::vector<std::pair<int, int>> entries;
  append_pattern(*prior_pattern_, 0, entries);
  for (int i = 0; i < a_.rows(); ++i)
    for_each_row_pair(a_, i, [&](int r, int c, double) { entries.emplace_back(r, c); });
  qx_pattern_ = std::make_shared<const SparsePattern>(SparsePattern::from_entries(a_.cols(), entries));
  entries.clear();
  entries.shrink_to_fit();
  symbolic_ = sparse::SymbolicCholesky::analyze(qx_pattern_);
  q_to_qx_ = position_map(*prior_pattern_, *qx_pattern_, 0);

  pair_ptr_.reserve(a_.rows() + 1);
  pair_ptr_.push_back(0);
  for (int i = 0; i < a_.rows(); ++i) {
    for_each_row_pair(a_, i, [&](int r, int c, double coef) {
      pair_pos_.push_back(qx_pattern_->find(r, c));
      pair_coef_.push_back(coef);
    });
    pair_ptr_.push_back(static_cast<int>(pair_pos_.size()));
  }
}

SparseSym InnerProblem::assemble(const SparseSym& q, const Eigen::VectorXd& c) const {
  if (q.pattern_ptr() != prior_pattern_ && !(q.pattern() == *prior_pattern_))
    throw DimensionMismatch("prior precision does not use the problem's pattern");
  if (c.size() != a_.rows()) throw DimensionMismatch("curvature vector length does not match data");
  std::vector<double> v(qx_pattern_->nnz(), 0.0);
  const auto qv = q.values();
  for (std::size_t p = 0; p < qv.size(); ++p) v[q_to_qx_[p]] += qv[p];
  for (int i = 0; i < a_.rows(); ++i) {
    const double ci = c[i];
    for (int k = pair_ptr_[i]; k < pair_ptr_[i + 1]; ++k) v[pair_pos_[k]] += ci * pair_coef_[k];
  }
  return SparseSym(qx_pattern_, std::move(v));
}

// ---------------------------------------------------------------------------

InnerResult gaussian_approx(const InnerProblem& problem, const SparseSym& q, const Family& family,
                            const Observations& obs, std::span<const double> theta,
                            const Eigen::VectorXd& warm_start, const InnerOptions& options) {
  const auto& a = problem.design();
  const int m = problem.dim();
  if (obs.size() != problem.num_obs())
    throw DimensionMismatch("design has " + std::to_string(problem.num_obs()) + " rows, data has " +
                            std::to_string(obs.size()));
  if (warm_start.size() != 0 && warm_start.size() != m)
    throw DimensionMismatch("warm start has the wrong length");
  for (double t : theta)
    if (!std::isfinite(t)) throw NonFiniteValue("non-finite hyperparameter");

  InnerResult r;
  Eigen::VectorXd mu = warm_start.size() ? warm_start : Eigen::VectorXd::Zero(m);
  Eigen::VectorXd eta = a.multiply(mu);
  double ll = loglik_sum(family, obs, eta, theta);
  double obj = ll - 0.5 * q.quadratic_form(mu);
  r.objective_trace.push_back(obj);

  double last_step = std::numeric_limits<double>::infinity();
  bool full_step = false;
  for (int iter = 0;; ++iter) {
    auto pd = pseudo_data(family, obs, eta, theta, options.c_min);
    sparse::CholFactor factor;
    try {
      factor = sparse::factorize(problem.assemble(q, pd.c), problem.symbolic());
    } catch (const NotPositiveDefinite&) {
      const double floor = std::max(1e-4, 1e-3 * inf_norm(pd.c));
      pd = pseudo_data(family, obs, eta, theta, floor);
      factor = sparse::factorize(problem.assemble(q, pd.c), problem.symbolic());
    }
    const Eigen::VectorXd atb = a.transpose_multiply(pd.b);
    const Eigen::VectorXd grad = a.transpose_multiply(pd.gradient) - q.multiply(mu);
    const double gnorm = inf_norm(grad);
    const bool grad_ok = gnorm <= options.tol_grad * (1.0 + inf_norm(atb));

    // Newton step and decrement grad^T Q_X^{-1} grad (the predicted gain, x2).
    const Eigen::VectorXd step = factor.solve(atb) - mu;
    const double decrement = grad.dot(step);
    const bool at_noise = 0.5 * decrement <= objective_noise(q, mu, ll);

    bool done = false;
    if (iter > 0 && (grad_ok || (full_step && last_step < options.tol_step) || at_noise)) {
      r.converged = true;
      done = true;
    } else if (iter >= options.max_iter) {
      done = true;
    }

    Eigen::VectorXd cand, cand_eta;
    double cand_ll = 0.0, cand_obj = 0.0, t = 1.0;
    bool accepted = false;
    if (!done) {
      for (int h = 0; h <= options.max_halvings; ++h, t *= 0.5) {
        cand = mu + t * step;
        cand_eta = a.multiply(cand);
        cand_ll = loglik_sum(family, obs, cand_eta, theta);
        cand_obj = cand_ll - 0.5 * q.quadratic_form(cand);
        if (std::isfinite(cand_obj) && cand_obj >= obj - 1e-12 * (1.0 + std::abs(obj))) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        // No ascent along the Newton direction. Converged if the Newton
        // decrement grad^T Q_X^{-1} grad is below objective round-off, which
        // happens when the gradient is dominated by cancellation in Q mu.
        const double decrement = grad.dot(step);
        r.converged = grad_ok || 0.5 * decrement <= 1e-12 * (1.0 + std::abs(obj));
        done = true;
      }
    }

    if (done) {
      r.iterations = iter;
      r.grad_norm = gnorm;
      r.clamped = pd.clamped;
      r.c = std::move(pd.c);
      r.logdet_qx = factor.logdet();
      r.factor = std::move(factor);
      r.loglik_at_mode = ll;
      r.prior_quad = q.quadratic_form(mu);
      r.mu = std::move(mu);
      r.eta = std::move(eta);
      return r;
    }

    last_step = t * inf_norm(step);
    full_step = t == 1.0;
    mu = std::move(cand);
    eta = std::move(cand_eta);
    ll = cand_ll;
    obj = cand_obj;
    r.objective_trace.push_back(obj);
  }
}

InnerResult gaussian_approx(const SparseSym& q, const DesignMatrix& a, const Family& family,
                            const Observations& obs, std::span<const double> theta,
                            const Eigen::VectorXd& warm_start, const InnerOptions& options) {
  const InnerProblem problem(q.pattern_ptr(), a);
  return gaussian_approx(problem, q, family, obs, theta, warm_start, options);
}

// ---------------------------------------------------------------------------

ClassicAugmentation::ClassicAugmentation(std::shared_ptr<const SparsePattern> prior_pattern,
                                         const DesignMatrix& a, double tau_noise)
    : n_(a.rows()), tau_(tau_noise) {
  if (!prior_pattern || prior_pattern->size() != a.cols())
    throw DimensionMismatch("augmentation: prior and design disagree");
  if (!(tau_noise > 0.0)) throw Error("noise precision must be positive");
  const int m = a.cols();
  const int total = n_ + m;

  std::vector<std::pair<int, int>> entries;
  for (int i = 0; i < n_; ++i) entries.emplace_back(i, i);
  const auto rp = a.row_ptr();
  const auto ci = a.col_idx();
  const auto av = a.values();
  for (int i = 0; i < n_; ++i)
    for (int k = rp[i]; k < rp[i + 1]; ++k) entries.emplace_back(n_ + ci[k], i);
  append_pattern(*prior_pattern, n_, entries);
  for (int i = 0; i < n_; ++i)
    for_each_row_pair(a, i, [&](int r, int c, double) { entries.emplace_back(n_ + r, n_ + c); });
  pattern_ = std::make_shared<const SparsePattern>(SparsePattern::from_entries(total, entries));
  entries.clear();
  entries.shrink_to_fit();

  base_.assign(pattern_->nnz(), 0.0);
  for (int i = 0; i < n_; ++i) {
    base_[pattern_->find(i, i)] += tau_;
    for (int k = rp[i]; k < rp[i + 1]; ++k) base_[pattern_->find(n_ + ci[k], i)] -= tau_ * av[k];
    for_each_row_pair(a, i, [&](int r, int c, double coef) { base_[pattern_->find(n_ + r, n_ + c)] += tau_ * coef; });
  }
  q_to_aug_ = position_map(*prior_pattern, *pattern_, n_);

  std::vector<int> ptr(n_ + 1), idx(n_);
  for (int i = 0; i <= n_; ++i) ptr[i] = i;
  for (int i = 0; i < n_; ++i) idx[i] = i;
  DesignMatrix select(n_, total, std::move(ptr), std::move(idx), std::vector<double>(n_, 1.0));
  problem_ = std::make_shared<const InnerProblem>(pattern_, std::move(select));
}

SparseSym ClassicAugmentation::prior(const SparseSym& q) const {
  if (q.size() + n_ != pattern_->size() || static_cast<int>(q.values().size()) != static_cast<int>(q_to_aug_.size()))
    throw DimensionMismatch("augmentation: prior precision does not match");
  std::vector<double> v(base_);
  const auto qv = q.values();
  for (std::size_t p = 0; p < qv.size(); ++p) v[q_to_aug_[p]] += qv[p];
  return SparseSym(pattern_, std::move(v));
}

InnerResult classic_augmented_approx(const SparseSym& q, const DesignMatrix& a, const Family& family,
                                     const Observations& obs, std::span<const double> theta, double tau_noise,
                                     const InnerOptions& options) {
  const ClassicAugmentation aug(q.pattern_ptr(), a, tau_noise);
  return gaussian_approx(aug.problem(), aug.prior(q), family, obs, theta, {}, options);
}

}  // namespace latentfit
