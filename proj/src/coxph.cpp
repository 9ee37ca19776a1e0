#include "latentfit/coxph.hpp"

#include "latentfit/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace latentfit::cox {

int BinGrid::bin_of(double t) const {
  if (!(t > cuts.front()) || t > cuts.back())
    throw SurvivalDataError("time " + format_number(t) + " outside the bin grid (0, " + format_number(cuts.back()) +
                            "]");
  // First cut >= t closes the bin.
  const auto it = std::lower_bound(cuts.begin() + 1, cuts.end(), t);
  return static_cast<int>(it - cuts.begin()) - 1;
}

namespace {

void check_times(std::span<const double> times) {
  if (times.empty()) throw SurvivalDataError("no survival times");
  for (std::size_t i = 0; i < times.size(); ++i)
    if (!(times[i] > 0.0) || !std::isfinite(times[i]))
      throw SurvivalDataError("time in row " + std::to_string(i) + " must be positive and finite");
}

}  // namespace

BinGrid bins_from_cuts(std::vector<double> cuts) {
  if (cuts.size() < 2) throw SurvivalDataError("a bin grid needs at least two cut points");
  if (cuts.front() != 0.0) throw SurvivalDataError("the first cut point must be 0");
  for (std::size_t k = 1; k < cuts.size(); ++k)
    if (!(cuts[k] > cuts[k - 1])) throw SurvivalDataError("cut points must increase strictly");
  return BinGrid{std::move(cuts)};
}

BinGrid make_bins(std::span<const double> times, int bins) {
  check_times(times);
  if (bins < 1) throw SurvivalDataError("need at least one bin");
  const double tmax = *std::max_element(times.begin(), times.end());
  std::vector<double> cuts(bins + 1);
  for (int k = 0; k <= bins; ++k) cuts[k] = tmax * k / bins;
  cuts.back() = tmax;
  return bins_from_cuts(std::move(cuts));
}

BinGrid quantile_bins(std::span<const double> times, std::span<const double> events, int bins) {
  check_times(times);
  if (events.size() != times.size()) throw DimensionMismatch("times and events differ in length");
  if (bins < 1) throw SurvivalDataError("need at least one bin");
  std::vector<double> ev;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (events[i] != 0.0) ev.push_back(times[i]);
  if (ev.empty()) throw SurvivalDataError("quantile bins need at least one event");
  std::sort(ev.begin(), ev.end());
  const double tmax = *std::max_element(times.begin(), times.end());
  std::vector<double> cuts{0.0};
  const int b = std::min<int>(bins, static_cast<int>(ev.size()));
  // Cut k closes on the event with rank ceil(k * E / b), so each bin owns one.
  for (int k = 1; k < b; ++k) {
    const std::size_t rank = (k * ev.size() + b - 1) / b;
    const double c = ev[rank - 1];
    if (c > cuts.back()) cuts.push_back(c);
  }
  if (tmax > cuts.back()) cuts.push_back(tmax);
  return bins_from_cuts(std::move(cuts));
}

AugmentedData augment(std::span<const double> times, std::span<const double> events, const DataTable& covariates,
                      const BinGrid& bins) {
  check_times(times);
  const std::size_t n = times.size();
  if (events.size() != n) throw DimensionMismatch("times and events differ in length");
  if (covariates.cols() > 0 && covariates.rows() != static_cast<int>(n))
    throw DimensionMismatch("covariate table has a different number of subjects");
  std::vector<double> y, exposure, bin, subject;
  std::vector<std::vector<double>> cov(covariates.cols());
  AugmentedData out;
  for (std::size_t i = 0; i < n; ++i) {
    if (events[i] != 0.0 && events[i] != 1.0)
      throw SurvivalDataError("event indicator in row " + std::to_string(i) + " must be 0 or 1");
    const int last = bins.bin_of(times[i]);
    for (int k = 0; k <= last; ++k) {
      const double e = k < last ? bins.width(k) : times[i] - bins.cuts[k];
      if (e < 0.0) throw SurvivalDataError("negative exposure");
      if (e == 0.0) {
        ++out.dropped;
        continue;
      }
      y.push_back(k == last ? events[i] : 0.0);
      exposure.push_back(e);
      bin.push_back(k);
      subject.push_back(static_cast<double>(i));
      for (int c = 0; c < covariates.cols(); ++c) cov[c].push_back(covariates.column(covariates.names()[c])[i]);
    }
  }
  out.table.set("y", std::move(y));
  out.table.set("exposure", std::move(exposure));
  out.table.set("bin", std::move(bin));
  out.table.set("subject", std::move(subject));
  for (int c = 0; c < covariates.cols(); ++c) out.table.set(covariates.names()[c], std::move(cov[c]));
  return out;
}

SurvivalData simulate_cox(int n, double beta, std::uint64_t seed, double horizon) {
  if (n < 1) throw Error("simulate_cox: n must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::exponential_distribution<double> expo(1.0);
  SurvivalData d;
  d.x.resize(n);
  for (auto& v : d.x) v = normal(rng);
  if (n > 1) {
    double mean = 0.0;
    for (double v : d.x) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : d.x) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1));
    for (auto& v : d.x) v = (v - mean) / sd;
  }
  d.time.resize(n);
  d.event.resize(n);
  for (int i = 0; i < n; ++i) {
    const double t = std::pow(expo(rng) / std::exp(beta * d.x[i]), 1.0 / 1.2);
    d.event[i] = t <= horizon ? 1.0 : 0.0;
    d.time[i] = std::min(t, horizon);
  }
  return d;
}

ModelSpec cox_model_spec(const std::vector<std::string>& covariates, int bins, ComponentKind baseline) {
  if (baseline != ComponentKind::Rw1 && baseline != ComponentKind::Rw2)
    throw Error("baseline hazard must be rw1 or rw2");
  ModelSpec spec;
  spec.family = FamilyKind::Poisson;
  spec.response = "y";
  spec.exposure = "exposure";
  spec.components.push_back({.name = "(Intercept)", .kind = ComponentKind::Intercept});
  for (const auto& c : covariates) spec.components.push_back({.name = c, .kind = ComponentKind::Linear, .column = c});
  ComponentSpec b{.name = "baseline", .kind = baseline, .column = "bin", .size = bins};
  b.scaled = true;
  b.constrained = true;
  spec.components.push_back(b);
  return spec;
}

}  // namespace latentfit::cox
