#include "latentfit/fit.hpp"

#include "latentfit/error.hpp"
#include "latentfit/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>

namespace latentfit {

std::string_view to_string(Strategy s) { return s == Strategy::Vb ? "vb" : "gaussian"; }
std::string_view to_string(IntStrategy s) { return s == IntStrategy::Grid ? "grid" : "eb"; }

Strategy strategy_from_string(std::string_view s) {
  if (s == "vb") return Strategy::Vb;
  if (s == "gaussian") return Strategy::Gaussian;
  throw Error("unknown strategy '" + std::string(s) + "' (expected gaussian or vb)");
}

IntStrategy int_strategy_from_string(std::string_view s) {
  if (s == "grid") return IntStrategy::Grid;
  if (s == "eb") return IntStrategy::EmpiricalBayes;
  throw Error("unknown integration strategy '" + std::string(s) + "' (expected eb or grid)");
}

void FitConfig::validate() const {
  if (threads < 1) throw Error("threads must be at least 1");
  if (vb.n_gh < 1) throw Error("number of Gauss-Hermite nodes must be at least 1");
  if (!(tau_noise > 0.0) || !std::isfinite(tau_noise)) throw Error("noise precision must be positive");
  if (!(grid.dz > 0.0) || !(grid.drop > 0.0)) throw Error("grid spacing and drop must be positive");
  if (vb.max_iter < 0 || inner.max_iter < 1 || mode_search.max_iter < 0) throw Error("iteration limits must be >= 0");
}

void RunReport::write(std::ostream& out) const {
  auto b = [](bool v) { return v ? "true" : "false"; };
  out << "mode=" << mode << "\n"
      << "strategy=" << strategy << "\n"
      << "int_strategy=" << int_strategy << "\n"
      << "threads=" << threads << "\n"
      << "n=" << n << "\n"
      << "m=" << m << "\n"
      << "field_dim=" << field_dim << "\n"
      << "q=" << q << "\n"
      << "subjects=" << subjects << "\n"
      << "grid_points=" << grid_points << "\n"
      << "failed_points=" << failed_points << "\n"
      << "vb_nodes=" << vb_nodes << "\n"
      << "mode_iterations=" << mode_iterations << "\n"
      << "evaluations=" << evaluations << "\n"
      << "time_build=" << format_number(time_build) << "\n"
      << "time_mode=" << format_number(time_mode) << "\n"
      << "time_grid=" << format_number(time_grid) << "\n"
      << "time_marginals=" << format_number(time_marginals) << "\n"
      << "time_vb=" << format_number(time_vb) << "\n"
      << "time_total=" << format_number(time_total) << "\n"
      << "mode_converged=" << b(mode_converged) << "\n"
      << "inner_converged=" << b(inner_converged) << "\n"
      << "vb_converged=" << b(vb_converged) << "\n"
      << "all_converged=" << b(all_converged()) << "\n";
}

const Summary& FitResult::summary_of(std::string_view label) const {
  for (std::size_t j = 0; j < latent_labels.size(); ++j)
    if (latent_labels[j] == label) return latent_summary[j];
  throw Error("no latent entry named '" + std::string(label) + "'");
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<int> default_vb_nodes(const LatentModel& model) {
  auto nodes = model.fixed_effect_indices();
  if (static_cast<int>(nodes.size()) > kMaxDefaultVbNodes) nodes.resize(kMaxDefaultVbNodes);
  return nodes;
}

}  // namespace

FitResult fit(const ModelSpec& spec, const DataTable& data, const FitConfig& config) {
  const auto t0 = Clock::now();
  BuiltModel built = build_model(spec, data);
  const double t_build = seconds_since(t0);
  FitResult r = fit_built(std::move(built), config);
  r.report.time_build += t_build;
  r.report.time_total += t_build;
  return r;
}

FitResult fit_built(BuiltModel built, const FitConfig& config) {
  config.validate();
  const auto t_start = Clock::now();
  FitResult r;
  RunReport& rep = r.report;
  rep.mode = std::string(to_string(config.mode));
  rep.strategy = std::string(to_string(config.strategy));
  rep.int_strategy = std::string(to_string(config.int_strategy));
  rep.threads = config.threads;

  const ThetaEvaluator eval(built, config.mode, config.tau_noise, config.inner);
  const LatentModel& model = eval.model();
  const int q = eval.num_hyper();
  const int m = eval.latent_dim();
  const int offset = eval.latent_offset();
  rep.n = eval.num_obs();
  rep.m = m;
  rep.field_dim = eval.field_dim();
  rep.q = q;
  rep.time_build = seconds_since(t_start);

  // Mode search. The warm start only changes between line searches, so every
  // evaluation sees the same state regardless of the thread count.
  auto t_phase = Clock::now();
  Eigen::VectorXd warm;
  std::mutex warm_mutex;
  auto warm_copy = [&] {
    std::lock_guard lock(warm_mutex);
    return warm;
  };
  ThetaEval mode_eval;
  GradientBasis basis(q);
  if (config.fixed_theta) {
    if (config.fixed_theta->size() != q)
      throw MissingHyperparameter("fixed theta has " + std::to_string(config.fixed_theta->size()) +
                                  " entries, model needs " + std::to_string(q));
    mode_eval = eval.evaluate(*config.fixed_theta);
    rep.evaluations = 1;
  } else {
    Eigen::VectorXd start = config.theta_start.value_or(Eigen::VectorXd::Constant(q, kDefaultThetaStart));
    if (start.size() != q)
      throw MissingHyperparameter("theta start has " + std::to_string(start.size()) + " entries, model needs " +
                                  std::to_string(q));
    ModeOptions mopts = config.mode_search;
    mopts.threads = config.threads;
    const ScalarFunction f = [&](const Eigen::VectorXd& th) { return eval.evaluate(th, warm_copy()).log_post; };
    const auto mode = find_mode(f, start, mopts, [&](const Eigen::VectorXd& th) {
      auto e = eval.evaluate(th, warm_copy());
      std::lock_guard lock(warm_mutex);
      warm = e.inner->mu;
    });
    rep.mode_iterations = mode.iterations;
    rep.evaluations = mode.evaluations;
    rep.mode_converged = mode.converged;
    basis = mode.basis;
    mode_eval = eval.evaluate(mode.theta, warm_copy());
    if (!std::isfinite(mode_eval.log_post)) throw Error("log posterior of theta is not finite at the mode");
    warm = mode_eval.inner->mu;
  }
  rep.time_mode = seconds_since(t_phase);

  // Integration grid.
  t_phase = Clock::now();
  if (config.fixed_theta || q == 0) {
    r.grid.mode = mode_eval.theta;
    r.grid.mode_log_post = mode_eval.log_post;
    r.grid.points.push_back({mode_eval.theta, Eigen::VectorXd::Zero(q), mode_eval.log_post, 1.0, mode_eval.inner});
  } else {
    GridOptions gopts = config.grid;
    gopts.threads = config.threads;
    gopts.empirical_bayes = config.int_strategy == IntStrategy::EmpiricalBayes;
    const Eigen::VectorXd warm_mode = warm;
    r.grid = hessian_and_grid([&](const Eigen::VectorXd& th) { return eval.evaluate(th, warm_mode); }, mode_eval,
                              basis, gopts);
  }
  const int k_points = static_cast<int>(r.grid.points.size());
  rep.grid_points = k_points;
  rep.failed_points = r.grid.failed_points;
  rep.time_grid = seconds_since(t_phase);

  // Per-point Gaussian marginals and mean correction.
  std::vector<int> nodes;
  if (config.strategy == Strategy::Vb) {
    nodes = config.vb_nodes.value_or(default_vb_nodes(model));
    for (int j : nodes)
      if (j < 0 || j >= m) throw IndexOutOfRange("VB node " + std::to_string(j) + " outside the latent field");
    for (int& j : nodes) j += offset;
  }
  rep.vb_nodes = static_cast<int>(nodes.size());

  const DesignMatrix& field_a = eval.field_design();
  std::vector<Eigen::VectorXd> lat_mean(k_points), lat_sd(k_points), lp_mean(k_points), lp_sd(k_points);
  r.vb.resize(k_points);
  r.gaussian_means.resize(k_points);
  std::vector<double> t_marg(k_points, 0.0), t_vb(k_points, 0.0);
  parallel_for(k_points, config.threads, [&](int k) {
    const auto tk = Clock::now();
    const ThetaPoint& pt = r.grid.points[k];
    const InnerResult& inner = *pt.inner;
    const auto sel = sparse::selected_inverse(inner.factor);
    const Eigen::VectorXd diag = sel.diagonal();
    lat_sd[k] = diag.segment(offset, m).cwiseMax(0.0).cwiseSqrt();
    lp_sd[k] = linpred_variances(field_a, sel).cwiseMax(0.0).cwiseSqrt();
    r.gaussian_means[k] = inner.mu.segment(offset, m);
    t_marg[k] = seconds_since(tk);

    const auto tv = Clock::now();
    Eigen::VectorXd mu = inner.mu;
    r.vb[k].lambda.resize(0);
    if (!nodes.empty()) {
      std::vector<double> th(pt.theta.data(), pt.theta.data() + pt.theta.size());
      const auto qf = eval.field_prior(th);
      auto vb = vb_correct(inner, field_a, qf, eval.family(), eval.observations(), th, nodes, lp_sd[k], config.vb);
      mu = std::move(vb.mu);
      r.vb[k] = std::move(vb.info);
    }
    lat_mean[k] = mu.segment(offset, m);
    lp_mean[k] = field_a.multiply(mu);
    t_vb[k] = seconds_since(tv);
  });
  for (int k = 0; k < k_points; ++k) {
    rep.time_marginals += t_marg[k];
    rep.time_vb += t_vb[k];
    rep.inner_converged = rep.inner_converged && r.grid.points[k].inner->converged;
    rep.vb_converged = rep.vb_converged && r.vb[k].converged;
  }

  Eigen::VectorXd weights(k_points);
  for (int k = 0; k < k_points; ++k) weights[k] = r.grid.points[k].weight;
  r.latent = assemble_mixture(weights, lat_mean, lat_sd);
  r.linpred = assemble_mixture(weights, lp_mean, lp_sd);
  r.latent_summary.resize(m);
  r.linpred_summary.resize(rep.n);
  parallel_for(m, config.threads, [&](int j) { r.latent_summary[j] = summarize(r.latent.target(j)); });
  parallel_for(rep.n, config.threads, [&](int i) { r.linpred_summary[i] = summarize(r.linpred.target(i)); });
  r.hyper_summary = summarize_hyper(r.grid, model.hyper());
  r.latent_labels.resize(m);
  for (int j = 0; j < m; ++j) r.latent_labels[j] = model.latent_label(j);
  r.built = std::move(built);
  rep.time_total = seconds_since(t_start);
  return r;
}

namespace {

void write_summary_row(std::ostream& out, const Summary& s) {
  out << format_number(s.mean) << ',' << format_number(s.sd) << ',' << format_number(s.q025) << ','
      << format_number(s.q50) << ',' << format_number(s.q975) << '\n';
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

}  // namespace

void write_outputs(const FitResult& result, const std::string& dir) {
  const std::filesystem::path base(dir);
  std::filesystem::create_directories(base);
  {
    auto out = open_out(base / "latent.csv");
    out << "name,mean,sd,q025,q50,q975\n";
    for (std::size_t j = 0; j < result.latent_summary.size(); ++j) {
      out << csv_escape(result.latent_labels[j]) << ',';
      write_summary_row(out, result.latent_summary[j]);
    }
  }
  {
    auto out = open_out(base / "linpred.csv");
    out << "index,mean,sd,q025,q50,q975\n";
    for (std::size_t i = 0; i < result.linpred_summary.size(); ++i) {
      out << i << ',';
      write_summary_row(out, result.linpred_summary[i]);
    }
  }
  {
    auto out = open_out(base / "hyper.csv");
    out << "name,mode,mean,sd,precision_mean\n";
    for (const auto& h : result.hyper_summary)
      out << csv_escape(h.name) << ',' << format_number(h.mode) << ',' << format_number(h.mean) << ','
          << format_number(h.sd) << ',' << format_number(h.precision_mean) << '\n';
  }
  {
    auto out = open_out(base / "report.txt");
    result.report.write(out);
  }
}

}  // namespace latentfit
