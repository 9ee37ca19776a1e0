#pragma once

// Piecewise-exponential Cox model: bins, augmentation to Poisson rows with
// log-exposure offsets, and a Weibull-hazard simulator.

#include "latentfit/data.hpp"
#include "latentfit/lgm.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace latentfit::cox {

/// Cut points 0 = s_0 < s_1 < ... < s_B. Bin k (0-based) is (s_k, s_{k+1}].
struct BinGrid {
  std::vector<double> cuts;

  int bins() const { return static_cast<int>(cuts.size()) - 1; }
  double width(int k) const { return cuts[k + 1] - cuts[k]; }
  /// Bin containing t; throws when t is outside (0, s_B].
  int bin_of(double t) const;
};

/// B equal-width bins on [0, max t].
BinGrid make_bins(std::span<const double> times, int bins);
/// Cuts at empirical quantiles of the event times, so every bin holds at
/// least one event; the last cut is max t.
BinGrid quantile_bins(std::span<const double> times, std::span<const double> events, int bins);
/// Validates user-supplied cuts (must start at 0 and increase strictly).
BinGrid bins_from_cuts(std::vector<double> cuts);

struct AugmentedData {
  /// Columns: y, exposure, bin, subject, then the covariates.
  DataTable table;
  int dropped = 0;  ///< rows removed for zero exposure
};

/// One Poisson row per subject and bin at risk, ordered by (subject, bin).
AugmentedData augment(std::span<const double> times, std::span<const double> events, const DataTable& covariates,
                      const BinGrid& bins);

struct SurvivalData {
  std::vector<double> time;
  std::vector<double> event;
  std::vector<double> x;  ///< centred, unit-sd covariate
};

/// Hazard 1.2 t^0.2 exp(beta x): T = (E / exp(beta x))^(1/1.2) with E ~ Exp(1).
/// Times beyond `horizon` are censored there.
SurvivalData simulate_cox(int n, double beta, std::uint64_t seed,
                          double horizon = std::numeric_limits<double>::infinity());

/// Poisson model on augmented rows: intercept, one slope per covariate and a
/// scaled, sum-to-zero random walk on the bin index.
ModelSpec cox_model_spec(const std::vector<std::string>& covariates, int bins,
                         ComponentKind baseline = ComponentKind::Rw1);

}  // namespace latentfit::cox
