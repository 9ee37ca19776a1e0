#include "latentfit/lgm.hpp"

#include "latentfit/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace latentfit {

std::string_view to_string(ComponentKind kind) {
  switch (kind) {
    case ComponentKind::Intercept: return "intercept";
    case ComponentKind::Linear: return "linear";
    case ComponentKind::Iid: return "iid";
    case ComponentKind::Rw1: return "rw1";
    case ComponentKind::Rw2: return "rw2";
  }
  return "unknown";
}

ComponentKind component_kind_from_string(std::string_view name) {
  for (auto k : {ComponentKind::Intercept, ComponentKind::Linear, ComponentKind::Iid,
                 ComponentKind::Rw1, ComponentKind::Rw2})
    if (to_string(k) == name) return k;
  throw Error("unknown component kind '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// DesignMatrix

DesignMatrix::DesignMatrix(int rows, int cols, std::vector<int> row_ptr, std::vector<int> col_idx,
                           std::vector<double> values)
    : rows_(rows), cols_(cols), row_ptr_(std::move(row_ptr)), col_idx_(std::move(col_idx)),
      values_(std::move(values)) {
  if (static_cast<int>(row_ptr_.size()) != rows_ + 1 || col_idx_.size() != values_.size() ||
      row_ptr_.back() != static_cast<int>(col_idx_.size()))
    throw DimensionMismatch("inconsistent compressed-row arrays");
  for (int c : col_idx_)
    if (c < 0 || c >= cols_) throw IndexOutOfRange("design column out of range");
}

DesignMatrix DesignMatrix::from_triplets(int rows, int cols,
                                         std::span<const std::tuple<int, int, double>> triplets) {
  std::vector<std::vector<std::pair<int, double>>> r(rows);
  for (const auto& [i, j, v] : triplets) {
    if (i < 0 || i >= rows || j < 0 || j >= cols) throw IndexOutOfRange("design entry out of range");
    r[i].emplace_back(j, v);
  }
  std::vector<int> ptr{0}, idx;
  std::vector<double> val;
  for (auto& row : r) {
    std::sort(row.begin(), row.end(), [](auto& a, auto& b) { return a.first < b.first; });
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (!idx.empty() && static_cast<int>(idx.size()) > ptr.back() && idx.back() == row[k].first) {
        val.back() += row[k].second;
      } else {
        idx.push_back(row[k].first);
        val.push_back(row[k].second);
      }
    }
    ptr.push_back(static_cast<int>(idx.size()));
  }
  return DesignMatrix(rows, cols, std::move(ptr), std::move(idx), std::move(val));
}

DesignMatrix DesignMatrix::identity(int n) {
  std::vector<int> ptr(n + 1), idx(n);
  std::iota(ptr.begin(), ptr.end(), 0);
  std::iota(idx.begin(), idx.end(), 0);
  return DesignMatrix(n, n, std::move(ptr), std::move(idx), std::vector<double>(n, 1.0));
}

Eigen::VectorXd DesignMatrix::multiply(const Eigen::VectorXd& x) const {
  if (x.size() != cols_) throw DimensionMismatch("A x: dimension mismatch");
  Eigen::VectorXd y(rows_);
  for (int i = 0; i < rows_; ++i) {
    double acc = 0.0;
    for (int p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) acc += values_[p] * x[col_idx_[p]];
    y[i] = acc;
  }
  return y;
}

Eigen::VectorXd DesignMatrix::transpose_multiply(const Eigen::VectorXd& v) const {
  if (v.size() != rows_) throw DimensionMismatch("A^T v: dimension mismatch");
  Eigen::VectorXd y = Eigen::VectorXd::Zero(cols_);
  for (int i = 0; i < rows_; ++i)
    for (int p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) y[col_idx_[p]] += values_[p] * v[i];
  return y;
}

Eigen::MatrixXd DesignMatrix::to_dense() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows_, cols_);
  for (int i = 0; i < rows_; ++i)
    for (int p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) d(i, col_idx_[p]) += values_[p];
  return d;
}

// ---------------------------------------------------------------------------
// Random walk structure and scaling

Eigen::MatrixXd random_walk_structure(int order, int size) {
  if (order != 1 && order != 2) throw Error("random walk order must be 1 or 2");
  const int rows = size - order;
  if (rows < 1) throw Error("random walk of order " + std::to_string(order) + " needs at least " +
                            std::to_string(order + 1) + " levels");
  Eigen::MatrixXd diff = Eigen::MatrixXd::Zero(rows, size);
  for (int i = 0; i < rows; ++i) {
    if (order == 1) {
      diff(i, i) = -1.0;
      diff(i, i + 1) = 1.0;
    } else {
      diff(i, i) = 1.0;
      diff(i, i + 1) = -2.0;
      diff(i, i + 2) = 1.0;
    }
  }
  return diff.transpose() * diff;
}

double random_walk_scale(int order, int size) {
  if (size > 2000) throw SizeCapExceeded("random walk scaling limited to 2000 levels");
  const Eigen::MatrixXd r = random_walk_structure(order, size);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
  const double cutoff = 1e-10 * es.eigenvalues().maxCoeff();
  Eigen::VectorXd var = Eigen::VectorXd::Zero(size);
  for (int k = 0; k < size; ++k) {
    const double lambda = es.eigenvalues()[k];
    if (lambda <= cutoff) continue;
    var += es.eigenvectors().col(k).array().square().matrix() / lambda;
  }
  return std::exp(var.array().log().mean());
}

// ---------------------------------------------------------------------------
// Hyperpriors

double log_gamma_on_log_scale(const GammaPrior& prior, double theta) {
  // Gamma(a, r) density of tau = e^theta, times the Jacobian e^theta.
  return prior.shape * std::log(prior.rate) - std::lgamma(prior.shape) + prior.shape * theta -
         prior.rate * std::exp(theta);
}

double theta_log_prior(std::span<const HyperParam> hyper, std::span<const double> theta) {
  if (theta.size() < hyper.size()) throw MissingHyperparameter("theta shorter than hyperparameter list");
  double acc = 0.0;
  for (std::size_t j = 0; j < hyper.size(); ++j) acc += log_gamma_on_log_scale(hyper[j].prior, theta[j]);
  return acc;
}

// ---------------------------------------------------------------------------
// LatentModel

LatentModel::LatentModel(std::vector<ComponentLayout> components, std::vector<HyperParam> hyper,
                         double fixed_effect_precision)
    : components_(std::move(components)), hyper_(std::move(hyper)),
      fixed_effect_precision_(fixed_effect_precision) {
  for (const auto& c : components_) {
    if (c.offset != dim_) throw Error("component '" + c.spec.name + "' is not contiguous");
    if (c.size < 1) throw EmptyComponent("component '" + c.spec.name + "' has no levels");
    dim_ += c.size;
  }

  struct Entry {
    int i, j;
    double scaled, constant;
    int hyper;
  };
  std::vector<Entry> entries;
  for (const auto& c : components_) {
    const int o = c.offset;
    switch (c.spec.kind) {
      case ComponentKind::Intercept:
      case ComponentKind::Linear:
        for (int k = 0; k < c.size; ++k) entries.push_back({o + k, o + k, 0.0, fixed_effect_precision_, -1});
        break;
      case ComponentKind::Iid: {
        const double fixed = c.spec.fixed_precision.value_or(0.0);
        for (int k = 0; k < c.size; ++k)
          entries.push_back({o + k, o + k, c.hyper >= 0 ? 1.0 : 0.0, c.hyper >= 0 ? 0.0 : fixed, c.hyper});
        break;
      }
      case ComponentKind::Rw1:
      case ComponentKind::Rw2: {
        const int order = c.spec.kind == ComponentKind::Rw1 ? 1 : 2;
        const Eigen::MatrixXd r = random_walk_structure(order, c.size);
        const double fixed_tau = c.spec.fixed_precision.value_or(1.0);
        for (int b = 0; b < c.size; ++b)
          for (int a = b; a < c.size; ++a) {
            double base = c.scale * r(a, b);
            if (a == b) base += c.scale * kRandomWalkJitter;
            const double pen = c.spec.constrained ? kSumToZeroPrecision : 0.0;
            if (base == 0.0 && pen == 0.0) continue;
            if (c.hyper >= 0)
              entries.push_back({o + a, o + b, base, pen, c.hyper});
            else
              entries.push_back({o + a, o + b, 0.0, fixed_tau * base + pen, -1});
          }
        break;
      }
    }
  }
  std::vector<std::pair<int, int>> pe;
  pe.reserve(entries.size());
  for (const auto& e : entries) pe.emplace_back(e.i, e.j);
  pattern_ = std::make_shared<const sparse::SparsePattern>(sparse::SparsePattern::from_entries(dim_, pe));
  scaled_.assign(pattern_->nnz(), 0.0);
  constant_.assign(pattern_->nnz(), 0.0);
  entry_hyper_.assign(pattern_->nnz(), -1);
  for (const auto& e : entries) {
    const int p = pattern_->find(e.i, e.j);
    scaled_[p] += e.scaled;
    constant_[p] += e.constant;
    if (e.hyper >= 0) entry_hyper_[p] = e.hyper;
  }
}

const ComponentLayout& LatentModel::component(std::string_view name) const {
  for (const auto& c : components_)
    if (c.spec.name == name) return c;
  throw Error("no component named '" + std::string(name) + "'");
}

std::vector<int> LatentModel::fixed_effect_indices() const {
  std::vector<int> out;
  for (const auto& c : components_)
    if (c.spec.kind == ComponentKind::Intercept || c.spec.kind == ComponentKind::Linear)
      for (int k = 0; k < c.size; ++k) out.push_back(c.offset + k);
  return out;
}

std::string LatentModel::latent_label(int j) const {
  for (const auto& c : components_) {
    if (j >= c.offset && j < c.offset + c.size) {
      if (c.spec.kind == ComponentKind::Intercept || c.spec.kind == ComponentKind::Linear)
        return c.spec.name;
      return c.spec.name + "[" + format_number(c.levels[j - c.offset]) + "]";
    }
  }
  throw IndexOutOfRange("latent index " + std::to_string(j) + " out of range");
}

sparse::SparseSym LatentModel::prior_precision(std::span<const double> theta) const {
  if (static_cast<int>(theta.size()) < num_hyper())
    throw MissingHyperparameter("prior_precision: theta has " + std::to_string(theta.size()) +
                                " entries, model needs " + std::to_string(num_hyper()));
  std::vector<double> tau(num_hyper());
  for (int k = 0; k < num_hyper(); ++k) {
    if (!std::isfinite(theta[k])) throw NonFiniteValue("non-finite hyperparameter");
    tau[k] = std::exp(theta[k]);
  }
  std::vector<double> v(constant_);
  for (std::size_t p = 0; p < v.size(); ++p)
    if (entry_hyper_[p] >= 0) v[p] += tau[entry_hyper_[p]] * scaled_[p];
  return sparse::SparseSym(pattern_, std::move(v));
}

double LatentModel::theta_log_prior(std::span<const double> theta) const {
  return latentfit::theta_log_prior(hyper_, theta);
}

// ---------------------------------------------------------------------------
// build_model

namespace {

void require_finite(const std::vector<double>& col, const std::string& name) {
  for (std::size_t i = 0; i < col.size(); ++i)
    if (!std::isfinite(col[i]))
      throw NonFiniteValue("column '" + name + "' row " + std::to_string(i) + " is not finite");
}

// Level index of each row for iid / random-walk components.
std::vector<int> level_indices(ComponentLayout& c, const std::vector<double>& col) {
  std::vector<int> idx(col.size());
  if (c.spec.size > 0) {
    c.size = c.spec.size;
    c.levels.resize(c.size);
    std::iota(c.levels.begin(), c.levels.end(), 0.0);
    for (std::size_t i = 0; i < col.size(); ++i) {
      const double v = col[i];
      if (v != std::floor(v) || v < 0 || v >= c.size)
        throw Error("component '" + c.spec.name + "': value " + format_number(v) + " in row " +
                    std::to_string(i) + " is not an integer level in [0, " + std::to_string(c.size) + ")");
      idx[i] = static_cast<int>(v);
    }
    return idx;
  }
  c.levels = col;
  std::sort(c.levels.begin(), c.levels.end());
  c.levels.erase(std::unique(c.levels.begin(), c.levels.end()), c.levels.end());
  c.size = static_cast<int>(c.levels.size());
  for (std::size_t i = 0; i < col.size(); ++i)
    idx[i] = static_cast<int>(std::lower_bound(c.levels.begin(), c.levels.end(), col[i]) - c.levels.begin());
  return idx;
}

}  // namespace

BuiltModel build_model(const ModelSpec& spec, const DataTable& data) {
  if (spec.components.empty()) throw EmptyComponent("model has no components");
  const int n = data.rows();

  std::vector<HyperParam> hyper;
  Family family{spec.family, -1};
  if (spec.family == FamilyKind::Gaussian) {
    family.hyper_index = 0;
    hyper.push_back({"gaussian.precision", spec.likelihood_prior});
  }

  std::vector<ComponentLayout> layouts;
  std::vector<std::tuple<int, int, double>> triplets;
  int offset = 0;
  for (const auto& cs : spec.components) {
    for (const auto& other : layouts)
      if (other.spec.name == cs.name) throw Error("duplicate component name '" + cs.name + "'");
    ComponentLayout c;
    c.spec = cs;
    c.offset = offset;
    if (!std::isfinite(cs.weight)) throw NonFiniteValue("component '" + cs.name + "' weight");
    switch (cs.kind) {
      case ComponentKind::Intercept:
        c.size = 1;
        for (int i = 0; i < n; ++i) triplets.emplace_back(i, offset, cs.weight);
        break;
      case ComponentKind::Linear: {
        const auto& x = data.column(cs.column);
        require_finite(x, cs.column);
        c.size = 1;
        for (int i = 0; i < n; ++i) triplets.emplace_back(i, offset, cs.weight * x[i]);
        break;
      }
      case ComponentKind::Iid:
      case ComponentKind::Rw1:
      case ComponentKind::Rw2: {
        const auto& col = data.column(cs.column);
        require_finite(col, cs.column);
        const auto idx = level_indices(c, col);
        if (c.size == 0) throw EmptyComponent("component '" + cs.name + "' has no levels");
        const int min_size = cs.kind == ComponentKind::Rw1 ? 2 : cs.kind == ComponentKind::Rw2 ? 3 : 1;
        if (c.size < min_size)
          throw EmptyComponent("component '" + cs.name + "' needs at least " + std::to_string(min_size) +
                               " levels, has " + std::to_string(c.size));
        for (int i = 0; i < n; ++i) triplets.emplace_back(i, offset + idx[i], cs.weight);
        if (cs.fixed_precision) {
          if (!(*cs.fixed_precision > 0.0))
            throw Error("component '" + cs.name + "': fixed precision must be positive");
        } else {
          c.hyper = static_cast<int>(hyper.size());
          hyper.push_back({cs.name + ".precision", cs.prior});
        }
        if (cs.kind != ComponentKind::Iid && cs.scaled)
          c.scale = random_walk_scale(cs.kind == ComponentKind::Rw1 ? 1 : 2, c.size);
        break;
      }
    }
    offset += c.size;
    layouts.push_back(std::move(c));
  }
  for (const auto& h : hyper)
    if (!(h.prior.shape > 0.0) || !(h.prior.rate > 0.0))
      throw Error("hyperprior for '" + h.name + "' needs positive shape and rate");

  BuiltModel out;
  out.family = family;
  out.model = std::make_shared<const LatentModel>(std::move(layouts), std::move(hyper),
                                                  spec.fixed_effect_precision);
  out.a = DesignMatrix::from_triplets(n, offset, triplets);

  const auto& y = data.column(spec.response);
  require_finite(y, spec.response);
  out.obs = Observations::from_response(Eigen::Map<const Eigen::VectorXd>(y.data(), n));
  if (!spec.exposure.empty()) {
    const auto& e = data.column(spec.exposure);
    for (int i = 0; i < n; ++i) {
      if (!(e[i] > 0.0) || !std::isfinite(e[i]))
        throw SupportViolation("exposure must be positive (row " + std::to_string(i) + ")");
      out.obs.offset[i] += std::log(e[i]);
    }
  }
  if (!spec.offset.empty()) {
    const auto& o = data.column(spec.offset);
    require_finite(o, spec.offset);
    for (int i = 0; i < n; ++i) out.obs.offset[i] += o[i];
  }
  if (!spec.trials.empty()) {
    const auto& t = data.column(spec.trials);
    for (int i = 0; i < n; ++i) out.obs.trials[i] = t[i];
  }
  out.obs.validate(spec.family);
  return out;
}

}  // namespace latentfit
