#include "latentfit/outer.hpp"

#include "latentfit/error.hpp"
#include "latentfit/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace latentfit {

std::string_view to_string(Formulation f) { return f == Formulation::Modern ? "modern" : "classic"; }

Formulation formulation_from_string(std::string_view name) {
  if (name == "modern") return Formulation::Modern;
  if (name == "classic") return Formulation::Classic;
  throw Error("unknown mode '" + std::string(name) + "' (expected modern or classic)");
}

// ---------------------------------------------------------------------------
// ThetaEvaluator

ThetaEvaluator::ThetaEvaluator(const BuiltModel& built, Formulation formulation, double tau_noise,
                               InnerOptions inner)
    : model_(built.model), a_(built.a), obs_(built.obs), family_(built.family), formulation_(formulation),
      inner_options_(inner) {
  if (formulation_ == Formulation::Modern) {
    modern_ = std::make_shared<const InnerProblem>(model_->prior_pattern(), a_);
    prior_symbolic_ = sparse::SymbolicCholesky::analyze(model_->prior_pattern());
  } else {
    classic_ = std::make_shared<const ClassicAugmentation>(model_->prior_pattern(), a_, tau_noise);
    // Q_aug already contains the pattern of Q_X, so one analysis serves both.
    prior_symbolic_ = classic_->problem().symbolic();
  }
}

sparse::SparseSym ThetaEvaluator::field_prior(std::span<const double> theta) const {
  auto q = model_->prior_precision(theta);
  return classic_ ? classic_->prior(q) : q;
}

ThetaEval ThetaEvaluator::evaluate(const Eigen::VectorXd& theta, const Eigen::VectorXd& warm_start) const {
  if (theta.size() != num_hyper())
    throw DimensionMismatch("theta has " + std::to_string(theta.size()) + " entries, model has " +
                            std::to_string(num_hyper()) + " hyperparameters");
  const std::span<const double> th(theta.data(), theta.size());
  const auto q = field_prior(th);
  ThetaEval e;
  e.theta = theta;
  e.logdet_q = sparse::factorize(q, prior_symbolic_).logdet();
  auto inner = std::make_shared<InnerResult>(
      gaussian_approx(problem(), q, family_, obs_, th, warm_start, inner_options_));
  e.log_post = model_->theta_log_prior(th) + 0.5 * e.logdet_q - 0.5 * inner->prior_quad + inner->loglik_at_mode -
               0.5 * inner->logdet_qx;
  e.inner = std::move(inner);
  return e;
}

// ---------------------------------------------------------------------------
// Smart gradient

GradientBasis::GradientBasis(int dim) : dim_(dim) { rebuild(); }

void GradientBasis::push(const Eigen::VectorXd& step) {
  if (step.size() != dim_) throw DimensionMismatch("basis step has the wrong length");
  if (!(step.norm() > 0.0)) return;
  history_.insert(history_.begin(), step);
  if (static_cast<int>(history_.size()) > dim_) history_.resize(dim_);
  rebuild();
}

void GradientBasis::rebuild() {
  std::vector<Eigen::VectorXd> cols;
  auto add = [&](Eigen::VectorXd v) {
    const double n0 = v.norm();
    if (!(n0 > 0.0)) return;
    v /= n0;
    // Two MGS passes keep G^T G = I at round-off level.
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& c : cols) v -= c.dot(v) * c;
    const double n1 = v.norm();
    if (n1 > 1e-8) cols.push_back(v / n1);
  };
  for (const auto& d : history_) {
    if (static_cast<int>(cols.size()) == dim_) break;
    add(d);
  }
  for (int k = 0; k < dim_ && static_cast<int>(cols.size()) < dim_; ++k) add(Eigen::VectorXd::Unit(dim_, k));
  g_.resize(dim_, dim_);
  for (int k = 0; k < dim_; ++k) g_.col(k) = cols[k];
}

Eigen::VectorXd smart_gradient(const ScalarFunction& f, const Eigen::VectorXd& theta, const GradientBasis& basis,
                               double h, int threads) {
  const int q = static_cast<int>(theta.size());
  if (basis.dim() != q) throw DimensionMismatch("gradient basis dimension does not match theta");
  if (!(h > 0.0)) throw Error("finite-difference step must be positive");
  const Eigen::MatrixXd& g = basis.matrix();
  std::vector<double> vals(2 * q);
  parallel_for(2 * q, threads, [&](int k) {
    const int col = k / 2;
    const double sign = k % 2 == 0 ? 1.0 : -1.0;
    vals[k] = f(theta + sign * h * g.col(col));
  });
  Eigen::VectorXd directional(q);
  for (int k = 0; k < q; ++k) directional[k] = (vals[2 * k] - vals[2 * k + 1]) / (2.0 * h);
  return g * directional;
}

// ---------------------------------------------------------------------------
// Mode search

ModeResult find_mode(const ScalarFunction& f, const Eigen::VectorXd& start, const ModeOptions& options,
                     const std::function<void(const Eigen::VectorXd&)>& on_accept) {
  const int q = static_cast<int>(start.size());
  ModeResult r;
  r.theta = start;
  r.basis = GradientBasis(q);
  auto safe_f = [&](const Eigen::VectorXd& x) {
    try {
      const double v = f(x);
      return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      return -std::numeric_limits<double>::infinity();
    }
  };
  r.log_post = f(start);
  r.evaluations = 1;
  if (q == 0) {
    r.converged = true;
    r.gradient.resize(0);
    return r;
  }
  auto gradient = [&](const Eigen::VectorXd& x) {
    r.evaluations += 2 * q;
    return smart_gradient(safe_f, x, r.basis, options.gradient_step, options.threads);
  };

  Eigen::VectorXd g = gradient(r.theta);
  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(q, q);
  bool fresh_metric = true;
  for (r.iterations = 0; r.iterations < options.max_iter; ++r.iterations) {
    if (g.lpNorm<Eigen::Infinity>() < options.tol_grad) {
      r.converged = true;
      break;
    }
    Eigen::VectorXd d = hinv * g;
    if (!(d.dot(g) > 0.0)) {
      hinv.setIdentity();
      fresh_metric = true;
      d = g;
    }
    const double longest = d.lpNorm<Eigen::Infinity>();
    if (longest > options.max_step) d *= options.max_step / longest;

    double t = 1.0, f_new = 0.0;
    bool accepted = false;
    Eigen::VectorXd x_new;
    for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
      x_new = r.theta + t * d;
      f_new = safe_f(x_new);
      ++r.evaluations;
      if (f_new >= r.log_post + 1e-4 * t * d.dot(g)) {
        accepted = true;
        break;
      }
      if (t * d.lpNorm<Eigen::Infinity>() < 0.1 * options.tol_step) break;
    }
    if (!accepted) {
      if (fresh_metric) {
        // No ascent along the gradient down to the step tolerance.
        r.converged = true;
        break;
      }
      hinv.setIdentity();
      fresh_metric = true;
      continue;
    }
    const Eigen::VectorXd s = x_new - r.theta;
    r.theta = x_new;
    r.log_post = f_new;
    if (on_accept) on_accept(r.theta);
    if (s.lpNorm<Eigen::Infinity>() < options.tol_step) {
      r.converged = true;
      ++r.iterations;
      break;
    }
    r.basis.push(s);
    const Eigen::VectorXd g_new = gradient(r.theta);
    const Eigen::VectorXd y = g - g_new;  // gradient change of -f
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh_metric) hinv *= sy / y.squaredNorm();
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd i = Eigen::MatrixXd::Identity(q, q);
      hinv = (i - rho * s * y.transpose()) * hinv * (i - rho * y * s.transpose()) + rho * s * s.transpose();
      fresh_metric = false;
    }
    g = g_new;
  }
  r.gradient = g;
  if (!r.converged && g.lpNorm<Eigen::Infinity>() < options.tol_grad) r.converged = true;
  return r;
}

// ---------------------------------------------------------------------------
// Hessian and grid

Eigen::MatrixXd hessian_in_basis(const ScalarFunction& f, const Eigen::VectorXd& mode, double f_mode,
                                 const Eigen::MatrixXd& g, double h, int threads) {
  const int q = static_cast<int>(mode.size());
  struct Probe {
    int i, j;
    double si, sj;
  };
  std::vector<Probe> probes;
  for (int i = 0; i < q; ++i) {
    probes.push_back({i, i, 1.0, 0.0});
    probes.push_back({i, i, -1.0, 0.0});
  }
  for (int i = 0; i < q; ++i)
    for (int j = i + 1; j < q; ++j)
      for (double si : {1.0, -1.0})
        for (double sj : {1.0, -1.0}) probes.push_back({i, j, si, sj});
  std::vector<double> vals(probes.size());
  parallel_for(static_cast<int>(probes.size()), threads, [&](int k) {
    const auto& p = probes[k];
    Eigen::VectorXd x = mode + p.si * h * g.col(p.i);
    if (p.i != p.j) x += p.sj * h * g.col(p.j);
    vals[k] = f(x);
  });
  Eigen::MatrixXd hpsi = Eigen::MatrixXd::Zero(q, q);
  for (int i = 0; i < q; ++i) hpsi(i, i) = (vals[2 * i] - 2.0 * f_mode + vals[2 * i + 1]) / (h * h);
  std::size_t k = 2 * q;
  for (int i = 0; i < q; ++i)
    for (int j = i + 1; j < q; ++j, k += 4) {
      const double v = (vals[k] - vals[k + 1] - vals[k + 2] + vals[k + 3]) / (4.0 * h * h);
      hpsi(i, j) = hpsi(j, i) = v;
    }
  Eigen::MatrixXd hess = g * hpsi * g.transpose();
  return 0.5 * (hess + hess.transpose());
}

namespace {

using Key = std::vector<int>;

bool within(double mode_lp, double lp, double drop) { return std::isfinite(lp) && mode_lp - lp <= drop; }

}  // namespace

HyperGrid hessian_and_grid(const PointFunction& f, const ThetaEval& mode_eval, const GradientBasis& basis,
                           const GridOptions& options) {
  HyperGrid grid;
  const int q = static_cast<int>(mode_eval.theta.size());
  grid.mode = mode_eval.theta;
  grid.mode_log_post = mode_eval.log_post;
  grid.points.push_back({mode_eval.theta, Eigen::VectorXd::Zero(q), mode_eval.log_post, 1.0, mode_eval.inner});
  if (q == 0) return grid;
  if (basis.dim() != q) throw DimensionMismatch("gradient basis dimension does not match theta");

  auto scalar = [&](const Eigen::VectorXd& x) {
    try {
      return f(x).log_post;
    } catch (const Error&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  const Eigen::MatrixXd h = hessian_in_basis(scalar, grid.mode, grid.mode_log_post, basis.matrix(),
                                             options.hessian_step, options.threads);
  if (!h.allFinite()) throw Error("Hessian at the mode is not finite");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(-h);
  Eigen::VectorXd p = es.eigenvalues();
  const double pmax = p.maxCoeff();
  for (int k = 0; k < q; ++k) {
    const double floor = pmax > 0.0 ? 1e-6 * pmax : 1.0;
    if (!(p[k] >= floor)) {
      p[k] = floor;
      ++grid.repaired_eigenvalues;
    }
  }
  grid.eigenvectors = es.eigenvectors();
  grid.eigenvalues = p.cwiseInverse();
  grid.hessian = grid.eigenvectors * p.asDiagonal() * grid.eigenvectors.transpose();
  if (options.empirical_bayes) return grid;

  const Eigen::MatrixXd scale = grid.eigenvectors * grid.eigenvalues.cwiseSqrt().asDiagonal();
  auto z_of = [&](const Key& k) {
    Eigen::VectorXd z(q);
    for (int i = 0; i < q; ++i) z[i] = options.dz * k[i];
    return z;
  };

  std::map<Key, ThetaPoint> kept;
  std::set<Key> visited{Key(q, 0)};
  auto evaluate_batch = [&](const std::vector<Key>& keys) {
    std::vector<ThetaPoint> pts(keys.size());
    std::vector<char> ok(keys.size(), 0);
    parallel_for(static_cast<int>(keys.size()), options.threads, [&](int idx) {
      const Eigen::VectorXd z = z_of(keys[idx]);
      const Eigen::VectorXd theta = grid.mode + scale * z;
      try {
        auto e = f(theta);
        pts[idx] = {theta, z, e.log_post, 0.0, std::move(e.inner)};
        ok[idx] = 1;
      } catch (const Error&) {
        ok[idx] = 0;
      }
    });
    std::vector<char> inside(keys.size(), 0);
    for (std::size_t idx = 0; idx < keys.size(); ++idx) {
      if (!ok[idx] || !std::isfinite(pts[idx].log_post)) {
        ++grid.failed_points;
        continue;
      }
      if (within(grid.mode_log_post, pts[idx].log_post, options.drop)) {
        inside[idx] = 1;
        kept.emplace(keys[idx], std::move(pts[idx]));
      }
    }
    return inside;
  };

  if (q <= 2) {
    std::vector<Key> frontier{Key(q, 0)};
    while (!frontier.empty() && static_cast<int>(kept.size()) + 1 < options.max_points) {
      std::set<Key> next;
      for (const auto& k : frontier) {
        // All lattice neighbours at Chebyshev distance one.
        const int count = q == 1 ? 3 : 9;
        for (int c = 0; c < count; ++c) {
          Key n = k;
          n[0] += c % 3 - 1;
          if (q == 2) n[1] += c / 3 - 1;
          if (!visited.count(n)) next.insert(n);
        }
      }
      std::vector<Key> keys(next.begin(), next.end());
      for (const auto& k : keys) visited.insert(k);
      const auto inside = evaluate_batch(keys);
      frontier.clear();
      for (std::size_t idx = 0; idx < keys.size(); ++idx)
        if (inside[idx]) frontier.push_back(keys[idx]);
    }
  } else {
    // Walk outwards along each axis until the drop threshold is crossed.
    std::vector<int> reach(2 * q, 0);
    std::vector<char> open(2 * q, 1);
    for (int step = 1; static_cast<int>(kept.size()) + 1 < options.max_points; ++step) {
      std::vector<Key> keys;
      std::vector<int> ray_of;
      for (int ray = 0; ray < 2 * q; ++ray) {
        if (!open[ray]) continue;
        Key k(q, 0);
        k[ray / 2] = (ray % 2 == 0 ? 1 : -1) * step;
        keys.push_back(k);
        ray_of.push_back(ray);
      }
      if (keys.empty()) break;
      const auto inside = evaluate_batch(keys);
      for (std::size_t idx = 0; idx < keys.size(); ++idx)
        if (!inside[idx]) open[ray_of[idx]] = 0;
    }
  }

  for (auto& [k, pt] : kept) grid.points.push_back(std::move(pt));
  double lp_max = -std::numeric_limits<double>::infinity();
  for (const auto& pt : grid.points) lp_max = std::max(lp_max, pt.log_post);
  double total = 0.0;
  for (auto& pt : grid.points) total += pt.weight = std::exp(pt.log_post - lp_max);
  for (auto& pt : grid.points) pt.weight /= total;
  return grid;
}

std::vector<HyperSummary> summarize_hyper(const HyperGrid& grid, const std::vector<HyperParam>& hyper) {
  std::vector<HyperSummary> out;
  for (std::size_t j = 0; j < hyper.size(); ++j) {
    HyperSummary s;
    s.name = hyper[j].name;
    s.mode = grid.mode[j];
    double m1 = 0.0, m2 = 0.0, pm = 0.0;
    for (const auto& pt : grid.points) {
      m1 += pt.weight * pt.theta[j];
      m2 += pt.weight * pt.theta[j] * pt.theta[j];
      pm += pt.weight * std::exp(pt.theta[j]);
    }
    s.mean = m1;
    s.sd = std::sqrt(std::max(0.0, m2 - m1 * m1));
    s.precision_mean = pm;
    out.push_back(s);
  }
  return out;
}

}  // namespace latentfit
