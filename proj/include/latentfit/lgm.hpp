#pragma once

// Latent Gaussian model assembly: component layout, prior precision Q(theta),
// the sparse design matrix A linking linear predictors to the latent field,
// and log-gamma hyperpriors on log-precisions.

#include "latentfit/data.hpp"
#include "latentfit/likelihood.hpp"
#include "latentfit/sparse.hpp"

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

namespace latentfit {

enum class ComponentKind { Intercept, Linear, Iid, Rw1, Rw2 };

std::string_view to_string(ComponentKind kind);
ComponentKind component_kind_from_string(std::string_view name);

/// Gamma(shape, rate) prior on a precision tau = exp(theta).
struct GammaPrior {
  double shape = 1.0;
  double rate = 5e-5;
  bool operator==(const GammaPrior&) const = default;
};

inline constexpr double kDefaultFixedEffectPrecision = 0.001;
/// Diagonal jitter for intrinsic random walks, relative to tau * scale.
inline constexpr double kRandomWalkJitter = 1e-5;
/// Precision of the soft sum-to-zero pseudo-observation.
inline constexpr double kSumToZeroPrecision = 1e6;

struct ComponentSpec {
  std::string name;
  ComponentKind kind = ComponentKind::Intercept;
  /// Covariate column (linear) or level column (iid, rw1, rw2).
  std::string column;
  /// Number of levels. 0 means "the distinct values found in the data";
  /// otherwise the column must hold integers in [0, size).
  int size = 0;
  /// Multiplies the component's contribution to the linear predictor.
  double weight = 1.0;
  bool scaled = false;
  bool constrained = false;
  /// Random effects with a known precision carry no hyperparameter.
  std::optional<double> fixed_precision;
  GammaPrior prior;

  bool operator==(const ComponentSpec&) const = default;
};

/// Parsed model description (see model_spec.hpp for the text format).
struct ModelSpec {
  FamilyKind family = FamilyKind::Gaussian;
  std::string response;
  std::string exposure;  ///< Poisson exposure column (offset log E)
  std::string offset;    ///< additive offset column
  std::string trials;    ///< binomial trial-count column
  double fixed_effect_precision = kDefaultFixedEffectPrecision;
  GammaPrior likelihood_prior;  ///< Gaussian observation precision
  std::vector<ComponentSpec> components;

  bool operator==(const ModelSpec&) const = default;
};

struct HyperParam {
  std::string name;
  GammaPrior prior;
};

/// A component after it has been laid out in the latent field.
struct ComponentLayout {
  ComponentSpec spec;
  int offset = 0;
  int size = 0;
  int hyper = -1;       ///< index into theta, -1 when the precision is fixed
  double scale = 1.0;   ///< generalized-variance scaling (random walks)
  std::vector<double> levels;
};

/// Sparse n x m matrix in compressed-row form.
class DesignMatrix {
 public:
  DesignMatrix() = default;
  DesignMatrix(int rows, int cols, std::vector<int> row_ptr, std::vector<int> col_idx,
               std::vector<double> values);
  static DesignMatrix from_triplets(int rows, int cols,
                                    std::span<const std::tuple<int, int, double>> triplets);
  static DesignMatrix identity(int n);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int nnz() const { return static_cast<int>(col_idx_.size()); }
  std::span<const int> row_ptr() const { return row_ptr_; }
  std::span<const int> col_idx() const { return col_idx_; }
  std::span<const double> values() const { return values_; }

  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const;
  Eigen::VectorXd transpose_multiply(const Eigen::VectorXd& v) const;
  Eigen::MatrixXd to_dense() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<int> row_ptr_{0};
  std::vector<int> col_idx_;
  std::vector<double> values_;
};

class LatentModel {
 public:
  LatentModel(std::vector<ComponentLayout> components, std::vector<HyperParam> hyper,
              double fixed_effect_precision);

  int dim() const { return dim_; }
  int num_hyper() const { return static_cast<int>(hyper_.size()); }
  const std::vector<ComponentLayout>& components() const { return components_; }
  const std::vector<HyperParam>& hyper() const { return hyper_; }
  const ComponentLayout& component(std::string_view name) const;
  double fixed_effect_precision() const { return fixed_effect_precision_; }

  /// Latent indices of intercept and linear coefficients.
  std::vector<int> fixed_effect_indices() const;
  /// Human-readable label of latent index j, e.g. "age[3]".
  std::string latent_label(int j) const;

  /// Block-diagonal prior precision. All returned matrices share one pattern.
  sparse::SparseSym prior_precision(std::span<const double> theta) const;
  const std::shared_ptr<const sparse::SparsePattern>& prior_pattern() const { return pattern_; }

  /// Sum of log-gamma densities of exp(theta_j) plus the log-Jacobian.
  double theta_log_prior(std::span<const double> theta) const;

 private:
  std::vector<ComponentLayout> components_;
  std::vector<HyperParam> hyper_;
  double fixed_effect_precision_;
  int dim_ = 0;
  std::shared_ptr<const sparse::SparsePattern> pattern_;
  // value_p = tau_{hyper_p} * scaled_p + constant_p
  std::vector<double> scaled_;
  std::vector<double> constant_;
  std::vector<int> entry_hyper_;
};

/// Everything needed to run inference on one dataset.
struct BuiltModel {
  std::shared_ptr<const LatentModel> model;
  DesignMatrix a;
  Observations obs;
  Family family;
};

/// Lays out the latent field, builds A row by row and extracts the
/// observations. Throws UnknownColumn, EmptyComponent, NonFiniteValue.
BuiltModel build_model(const ModelSpec& spec, const DataTable& data);

/// log density of theta under independent log-gamma priors.
double theta_log_prior(std::span<const HyperParam> hyper, std::span<const double> theta);
double log_gamma_on_log_scale(const GammaPrior& prior, double theta);

/// First- or second-difference structure matrix (dense, size x size).
Eigen::MatrixXd random_walk_structure(int order, int size);
/// Geometric mean of the generalized-inverse marginal variances of the
/// structure matrix; multiplying the structure by it gives a prior whose
/// typical marginal variance is 1/tau.
double random_walk_scale(int order, int size);

}  // namespace latentfit
