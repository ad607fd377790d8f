#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "mflab/concentration.hpp"
#include "mflab/config.hpp"
#include "mflab/constants.hpp"
#include "mflab/csv.hpp"
#include "mflab/dynamics.hpp"
#include "mflab/energy.hpp"
#include "mflab/errors.hpp"
#include "mflab/estimators.hpp"
#include "mflab/gaussian.hpp"
#include "mflab/positivity.hpp"
#include "mflab/test_functions.hpp"
#include "mflab/version.hpp"

namespace mflab {

enum class ExitStatus : int {
  ok = 0,
  verdict_failed = 1,
  config_error = 2,
  regime_error = 3,
  divergence = 4,
  inconclusive = 5,
};

namespace detail {

inline std::unique_ptr<EnergyModel> make_model(const ExperimentConfig& cfg) {
  if (cfg.model == "gaussian")
    return std::make_unique<GaussianMeanField>(cfg.model_a, cfg.model_lambda);
  return std::make_unique<RbfInteraction>(cfg.model_a, cfg.model_kappa, cfg.model_sigma,
                                          cfg.model_rho_hat);
}

inline ConstantsInput constants_input(const ExperimentConfig& cfg, const EnergyModel& model,
                                      int d, long n, double eps) {
  ConstantsInput in;
  in.dim = d;
  in.n_particles = n;
  in.epsilon = eps;
  const auto b = model.bounds();
  in.m_mm = cfg.constants_m_mm.value_or(b.m_mm);
  in.rho = cfg.constants_rho.value_or(b.rho_hat);
  return in;
}

inline CsvWriter open_writer(const ExperimentConfig& cfg, const std::string& path) {
  CsvWriter w(path, cfg.format == "csv.gz");
  w.comment(std::string("artifact version ") + kVersion);
  for (const auto& line : cfg.resolved_lines()) w.comment(line);
  return w;
}

inline InitialCondition initial_condition(const ExperimentConfig& cfg) {
  const int d = cfg.sim_dim;
  auto vec_of = [d](const std::vector<double>& v) {
    Vec x(d);
    for (int k = 0; k < d; ++k) x[k] = k < static_cast<int>(v.size()) ? v[k] : v.back();
    return x;
  };
  if (cfg.init_mode == "point") return InitialCondition::point(vec_of(cfg.init_x0));
  if (cfg.init_mode == "gaussian")
    return InitialCondition::gaussian(vec_of(cfg.init_mean),
                                      cfg.init_var * Mat::Identity(d, d));
  return InitialCondition::gibbs();
}

inline KernelPtr make_kernel(const ExperimentConfig& cfg) {
  if (cfg.kernel == "rbf") return std::make_shared<RbfKernel>(cfg.kernel_sigma);
  if (cfg.kernel == "cosine") return std::make_shared<CosineKernel>(cfg.kernel_dim);
  if (cfg.kernel == "bilinear") return std::make_shared<BilinearKernel>();
  return std::make_shared<NegatedKernel>(std::make_shared<RbfKernel>(cfg.kernel_sigma));
}

/// Sample source for the Gibbs measure of the configured model: exact for
/// the Gaussian model, a MALA chain otherwise.
inline SampleSource make_gibbs_source(const ExperimentConfig& cfg, const EnergyModel& model) {
  if (const auto* g = dynamic_cast<const GaussianMeanField*>(&model))
    return gibbs_source(*g, cfg.sim_n_particles, cfg.sim_dim, cfg.est_n_samples, cfg.seed);
  auto res = sample_gibbs_mala(model, cfg.sim_n_particles, cfg.sim_dim, cfg.est_n_samples,
                               cfg.seed);
  auto stored = std::make_shared<std::vector<ParticleConfiguration>>(std::move(res.samples));
  return vector_source(stored);
}

}  // namespace detail

inline ExitStatus run_constants(const ExperimentConfig& cfg, const std::string& out_path) {
  const auto model = detail::make_model(cfg);
  auto w = detail::open_writer(cfg, out_path);
  w.header({"n", "d", "epsilon", "m_mm", "rho", "alpha", "valid", "rho_prime", "delta",
            "rho_poincare", "rho_lsi_pipeline", "rho_lsi_theorem", "rho_lsi_standard",
            "rho_limit_remark", "epsilon_star", "rho_lsi_optimized"});
  int rows = 0;
  for (int d : cfg.constants_d) {
    for (long n : cfg.constants_n) {
      for (double eps : cfg.constants_epsilon) {
        const auto in = detail::constants_input(cfg, *model, d, n, eps);
        const auto rep = constants_report(in);
        w.row({static_cast<long long>(n), d, eps, in.m_mm, in.rho, rep.alpha, rep.valid,
               rep.rho_prime, rep.delta, rep.rho_poincare, rep.rho_lsi_pipeline,
               rep.rho_lsi_theorem, rep.rho_lsi_standard, rep.rho_limit_remark,
               rep.epsilon_star, rep.rho_lsi_optimized});
        std::printf("N=%-8ld d=%-2d eps=%-8.4g  alpha=%-8.4g %s\n", n, d, eps, rep.alpha,
                    rep.valid ? "valid" : "INVALID REGIME");
        std::printf("  rho'          = %-12.6g  delta        = %-12.6g\n", rep.rho_prime,
                    rep.delta);
        std::printf("  rho_poincare  = %-12.6g  rho_standard = %-12.6g\n", rep.rho_poincare,
                    rep.rho_lsi_standard);
        std::printf("  rho_pipeline  = %-12.6g  rho_theorem  = %-12.6g\n", rep.rho_lsi_pipeline,
                    rep.rho_lsi_theorem);
        std::printf("  rho_limit     = %-12.6g  eps*=%-8.4g rho*=%-10.6g\n",
                    rep.rho_limit_remark, rep.epsilon_star, rep.rho_lsi_optimized);
        ++rows;
      }
    }
  }
  w.close();
  std::printf("constants: %d rows -> %s\n", rows, out_path.c_str());
  return ExitStatus::ok;
}

inline ExitStatus run_simulate(const ExperimentConfig& cfg, const std::string& out_path) {
  const auto model = detail::make_model(cfg);
  SimConfig sim;
  sim.dt = cfg.sim_dt;
  sim.n_steps = cfg.sim_n_steps;
  sim.seed = cfg.seed;
  sim.n_replicas = cfg.sim_n_replicas;
  sim.scheme = cfg.sim_scheme == "exact_gaussian" ? Scheme::exact_gaussian
                                                  : Scheme::euler_maruyama;
  sim.snapshot_every = cfg.sim_snapshot_every;
  sim.threads = cfg.threads;
  const auto init = detail::initial_condition(cfg);
  const auto observable = make_coordinate(0);

  const auto result = simulate(*model, init, cfg.sim_n_particles, cfg.sim_dim, sim, nullptr,
                               observable);

  auto w = detail::open_writer(cfg, out_path);
  w.header({"time", "replica", "observable", "value"});
  const int d = cfg.sim_dim;
  const int n = cfg.sim_n_particles;
  std::size_t cursor = 0;
  for (double t : result.snapshot_times) {
    Vec ens_sum = Vec::Zero(d), ens_sum_sq = Vec::Zero(d);
    long long alive = 0;
    while (cursor < result.snapshots.size() && result.snapshots[cursor].time == t) {
      const auto& snap = result.snapshots[cursor];
      for (int k = 0; k < d; ++k)
        w.row({t, snap.replica, "mean_c" + std::to_string(k), snap.coord_sum[k] / n});
      w.row({t, snap.replica, "sqnorm", snap.coord_sum_sq.sum() / (n * d)});
      if (!std::isnan(snap.observable)) w.row({t, snap.replica, "obs_mean", snap.observable});
      ens_sum += snap.coord_sum;
      ens_sum_sq += snap.coord_sum_sq;
      alive += n;
      ++cursor;
    }
    if (alive > 0) {
      for (int k = 0; k < d; ++k) {
        const double m = ens_sum[k] / alive;
        w.row({t, -1, "ens_mean_c" + std::to_string(k), m});
        w.row({t, -1, "ens_var_c" + std::to_string(k), ens_sum_sq[k] / alive - m * m});
      }
    }
  }
  w.close();
  std::printf("simulate: %zu snapshots x %d replicas -> %s\n", result.snapshot_times.size(),
              cfg.sim_n_replicas, out_path.c_str());
  if (!result.divergences.empty()) {
    std::printf("simulate: %zu replicas diverged (first: replica %d at t=%g)\n",
                result.divergences.size(), result.divergences.front().replica,
                result.divergences.front().time);
    return ExitStatus::divergence;
  }
  return ExitStatus::ok;
}

inline ExitStatus run_inequality_check(const ExperimentConfig& cfg, const std::string& which,
                                       const std::string& out_path) {
  const auto model = detail::make_model(cfg);
  const auto src = detail::make_gibbs_source(cfg, *model);
  const auto in = detail::constants_input(cfg, *model, cfg.sim_dim, cfg.sim_n_particles,
                                          cfg.constants_epsilon.front());
  const auto def = defective_constants(in);
  const auto poi = poincare_constant(in.rho, in.m_mm, in.n_particles);
  if (!def.valid) throw RegimeError("check: defective constant rho' <= 0", def.rho_prime);
  if (!poi.valid) throw RegimeError("check: Poincare constant <= 0", poi.value);
  const auto dictionary =
      default_dictionary(cfg.sim_n_particles, cfg.sim_dim, cfg.est_dictionary_size);

  const auto suite =
      inequality_suite(*model, src, dictionary, poi.value, def.rho_prime, def.delta);
  const std::vector<InequalityVerdict>* verdicts = &suite.gamma2;
  if (which == "check-poincare") verdicts = &suite.poincare;
  if (which == "check-dlsi") verdicts = &suite.dlsi;

  auto w = detail::open_writer(cfg, out_path);
  w.header({"check", "function", "lhs", "rhs", "lhs_stderr", "rhs_stderr", "margin_sigmas",
            "holds"});
  int held = 0;
  for (const auto& v : *verdicts) {
    w.row({which, v.function, v.lhs, v.rhs, v.lhs_stderr, v.rhs_stderr, v.margin_sigmas,
           v.holds});
    held += v.holds ? 1 : 0;
  }
  w.close();
  std::printf("%s: %d/%zu hold -> %s\n", which.c_str(), held, verdicts->size(),
              out_path.c_str());
  return held == static_cast<int>(verdicts->size()) ? ExitStatus::ok
                                                    : ExitStatus::verdict_failed;
}

inline ExitStatus run_estimate_gap(const ExperimentConfig& cfg, const std::string& out_path) {
  const auto model = detail::make_model(cfg);
  const auto src = detail::make_gibbs_source(cfg, *model);
  const int total = cfg.sim_n_particles * cfg.sim_dim;
  std::vector<TestFunctionPtr> dictionary;
  for (int k = 0; k < std::min(total, 8); ++k) dictionary.push_back(make_coordinate(k));
  if (dictionary.size() < 2) dictionary.push_back(make_monomial("x0^2", 1.0, {{0, 2}}));

  const auto gap = rayleigh_gap(src, dictionary);
  const auto in = detail::constants_input(cfg, *model, cfg.sim_dim, cfg.sim_n_particles,
                                          cfg.constants_epsilon.front());
  const auto poi = poincare_constant(in.rho, in.m_mm, in.n_particles);
  double exact = std::numeric_limits<double>::quiet_NaN();
  if (const auto* g = dynamic_cast<const GaussianMeanField*>(model.get()))
    exact = spectral_gap(gibbs_gaussian(g->a(), g->lambda(), cfg.sim_n_particles, cfg.sim_dim));
  const bool holds = gap.value >= poi.value - 3.0 * gap.std_err;

  auto w = detail::open_writer(cfg, out_path);
  w.header({"estimate", "stderr", "condition", "n_samples", "dictionary_size", "exact_gap",
            "poincare_lower", "holds"});
  w.row({gap.value, gap.std_err, gap.condition, static_cast<long long>(cfg.est_n_samples),
         static_cast<long long>(dictionary.size()), exact, poi.value, holds});
  w.close();
  std::printf("estimate-gap: %.6g (stderr %.2g, exact %.6g, lower bound %.6g) -> %s\n",
              gap.value, gap.std_err, exact, poi.value, out_path.c_str());
  return holds ? ExitStatus::ok : ExitStatus::verdict_failed;
}

inline ExitStatus run_fit_decay(const ExperimentConfig& cfg, const std::string& out_path) {
  const auto base_model = detail::make_model(cfg);
  const auto* g = dynamic_cast<const GaussianMeanField*>(base_model.get());
  if (g == nullptr)
    throw ConfigError("fit-decay requires the gaussian model (exact entropy only)");
  const GaussianMeanField& model = *g;
  const int n = cfg.sim_n_particles;
  const int d = cfg.sim_dim;
  const Mat precision = gibbs_precision(model.a(), model.lambda(), n, d);
  const GaussianMeasure stationary = gibbs_gaussian(model.a(), model.lambda(), n, d);

  // mean displaced along a minimal eigenmode: a mean-zero mode when N >= 2
  Vec mean = Vec::Zero(n * d);
  if (n >= 2) {
    mean[0] = cfg.decay_displacement / std::sqrt(2.0);
    mean[d] = -cfg.decay_displacement / std::sqrt(2.0);
  } else {
    mean[0] = cfg.decay_displacement;
  }
  const GaussianMeasure m0(mean, stationary.cov());
  const auto fit = entropy_decay_rate(precision, m0, cfg.decay_times);

  const double exact_rate = 2.0 * (n >= 2 ? model.a() : model.a() + model.lambda());
  const auto in = detail::constants_input(cfg, model, d, n, cfg.constants_epsilon.front());
  const double rho_n = lsi_constant_pipeline(in);
  const bool holds = fit.rate >= 2.0 * rho_n - 1e-9 &&
                     std::abs(fit.rate - exact_rate) <= 0.01 * exact_rate;

  auto w = detail::open_writer(cfg, out_path);
  w.header({"fitted_rate", "points_used", "exact_rate", "lsi_lower_bound", "holds"});
  w.row({fit.rate, fit.points_used, exact_rate, 2.0 * rho_n, holds});
  w.close();
  std::printf("fit-decay: rate %.6g (exact %.6g, lower bound %.6g) -> %s\n", fit.rate,
              exact_rate, 2.0 * rho_n, out_path.c_str());
  return holds ? ExitStatus::ok : ExitStatus::verdict_failed;
}

inline ExitStatus run_check_kernel(const ExperimentConfig& cfg, const std::string& out_path) {
  const auto kernel = detail::make_kernel(cfg);
  const int d = cfg.kernel_dim;
  const auto report =
      positive_type_check(*kernel, cfg.kernel_trials, cfg.kernel_atoms, d, cfg.seed);

  // random quadratic-form trials and the mu_h convergence record
  double min_quad = std::numeric_limits<double>::infinity();
  const int n_atoms = 5;
  Mat xs(d, n_atoms), vs(d, n_atoms);
  for (int trial = 0; trial < cfg.kernel_trials; ++trial) {
    const rng::Key key =
        rng::Key(cfg.seed, rng::Stream::general).with(static_cast<std::uint64_t>(trial));
    for (int a = 0; a < n_atoms; ++a)
      for (int k = 0; k < d; ++k) {
        xs(k, a) = rng::standard_normal(key.with(static_cast<std::uint64_t>(a),
                                                 static_cast<std::uint64_t>(k), 0));
        vs(k, a) = rng::standard_normal(key.with(static_cast<std::uint64_t>(a),
                                                 static_cast<std::uint64_t>(k), 1));
      }
    min_quad = std::min(min_quad, quadratic_form(*kernel, xs, vs));
  }
  const double q_ref = quadratic_form(*kernel, xs, vs);
  const double e1 = std::abs(mu_h_form(*kernel, xs, vs, 0.1) - q_ref);
  const double e3 = std::abs(mu_h_form(*kernel, xs, vs, 0.025) - q_ref);
  const double order = e3 > 0.0 ? std::log2(e1 / e3) / 2.0 : 2.0;

  auto w = detail::open_writer(cfg, out_path);
  w.header({"kernel", "dim", "trials", "atoms", "min_pair_form", "min_quadratic_form",
            "mu_h_order", "threshold", "positive_type"});
  w.row({kernel->name(), d, cfg.kernel_trials, cfg.kernel_atoms, report.min_value, min_quad,
         order, report.threshold, report.positive_type});
  w.close();
  std::printf("check-kernel: %s min form %.3g, quadratic min %.3g, mu_h order %.2f, %s -> %s\n",
              kernel->name().c_str(), report.min_value, min_quad, order,
              report.positive_type ? "positive type" : "NOT positive type", out_path.c_str());
  return ExitStatus::ok;
}

inline ExitStatus run_concentration(const ExperimentConfig& cfg, const std::string& out_path) {
  const auto base_model = detail::make_model(cfg);
  const auto* g = dynamic_cast<const GaussianMeanField*>(base_model.get());
  if (g == nullptr)
    throw ConfigError("concentration requires the gaussian model (exact stationary law)");
  const int n = cfg.sim_n_particles;
  const int d = cfg.sim_dim;
  const GaussianMeasure m_star_n = gibbs_gaussian(g->a(), g->lambda(), n, d);

  const auto in = detail::constants_input(cfg, *g, d, n, cfg.constants_epsilon.front());
  const double rho_n = cfg.conc_envelope == "theorem" ? lsi_constant_theorem(in)
                                                      : lsi_constant_pipeline(in);
  const auto bounds = g->bounds();

  InitialCondition init = InitialCondition::point(Vec::Zero(d));
  InitialLaw law = InitialLaw::at(Vec::Zero(static_cast<Eigen::Index>(n) * d));
  if (cfg.conc_m0 == "gibbs") {
    init = InitialCondition::gibbs();
    law = InitialLaw::from(m_star_n);
  }

  const auto observable = make_coordinate(0);
  const auto tails = empirical_tail(*g, init, n, d, observable, 0.0, cfg.conc_t_grid,
                                    cfg.conc_r_grid, cfg.conc_n_replicas, cfg.seed,
                                    Scheme::exact_gaussian, cfg.sim_dt, cfg.threads);

  auto w = detail::open_writer(cfg, out_path);
  w.header({"t", "r", "empirical", "ci_low", "ci_high", "bound", "dominated", "vacuous"});
  int dominated = 0;
  for (const auto& tail : tails) {
    double bound;
    try {
      if (n == 1) {
        ConcentrationQuery q;
        q.t = tail.t;
        q.r = tail.r;
        q.m_hess = bounds.m_mm + bounds.m_mx;
        q.rho = rho_n;
        bound = bound_single(q, law, m_star_n).value;
      } else {
        ConcentrationQuery q;
        q.t = tail.t;
        q.r = tail.r;
        q.m_hess = bounds.m_mm + bounds.m_mx;
        q.rho = rho_n;
        bound = bound_particle(q, rho_n, bounds, n, law, m_star_n).value;
      }
    } catch (const PrefactorDivergence&) {
      bound = std::numeric_limits<double>::infinity();
    }
    const auto cmp = compare_tail(tail, bound);
    w.row({cmp.t, cmp.r, cmp.empirical, cmp.ci_low, cmp.ci_high, cmp.bound, cmp.dominated,
           cmp.vacuous});
    dominated += cmp.dominated ? 1 : 0;
  }
  w.close();
  std::printf("concentration: %d/%zu dominated -> %s\n", dominated, tails.size(),
              out_path.c_str());
  return dominated == static_cast<int>(tails.size()) ? ExitStatus::ok
                                                     : ExitStatus::verdict_failed;
}

inline ExitStatus run_experiment(const ExperimentConfig& cfg);

inline ExitStatus run_full_suite(const ExperimentConfig& cfg) {
  std::string prefix = cfg.out;
  const std::string suffix = cfg.format == "csv.gz" ? ".csv.gz" : ".csv";
  if (prefix.size() > suffix.size() &&
      prefix.compare(prefix.size() - suffix.size(), suffix.size(), suffix) == 0)
    prefix = prefix.substr(0, prefix.size() - suffix.size());

  static const std::vector<std::string> parts = {
      "constants",    "check-gamma2", "check-poincare", "check-dlsi",
      "estimate-gap", "fit-decay",    "check-kernel",   "concentration"};
  ExitStatus worst = ExitStatus::ok;
  for (const auto& part : parts) {
    ExperimentConfig sub = cfg;
    sub.experiment = part;
    sub.out = prefix + "_" + part + suffix;
    const ExitStatus status = run_experiment(sub);
    if (static_cast<int>(status) > static_cast<int>(worst)) worst = status;
  }
  return worst;
}

inline ExitStatus run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.experiment == "constants") return run_constants(cfg, cfg.out);
  if (cfg.experiment == "simulate") return run_simulate(cfg, cfg.out);
  if (cfg.experiment == "check-gamma2" || cfg.experiment == "check-poincare" ||
      cfg.experiment == "check-dlsi")
    return run_inequality_check(cfg, cfg.experiment, cfg.out);
  if (cfg.experiment == "estimate-gap") return run_estimate_gap(cfg, cfg.out);
  if (cfg.experiment == "fit-decay") return run_fit_decay(cfg, cfg.out);
  if (cfg.experiment == "check-kernel") return run_check_kernel(cfg, cfg.out);
  if (cfg.experiment == "concentration") return run_concentration(cfg, cfg.out);
  return run_full_suite(cfg);
}

}  // namespace mflab
