#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mflab/energy.hpp"
#include "mflab/errors.hpp"
#include "mflab/particle.hpp"
#include "mflab/rng.hpp"
#include "mflab/test_functions.hpp"

namespace mflab {

enum class Scheme { euler_maruyama, exact_gaussian };

struct SimConfig {
  double dt = 0.01;
  long n_steps = 100;
  std::uint64_t seed = 0;
  int n_replicas = 1;
  Scheme scheme = Scheme::euler_maruyama;
  long snapshot_every = 0;  // 0: record only the initial and final states
  int threads = 1;
  bool disable_noise = false;  // test hook: suppresses the diffusion term

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("sim: dt > 0 required");
    if (n_steps < 0) throw ConfigError("sim: n_steps >= 0 required");
    if (n_replicas < 1) throw ConfigError("sim: n_replicas >= 1 required");
    if (snapshot_every < 0) throw ConfigError("sim: snapshot_every >= 0 required");
    if (threads < 1) throw ConfigError("sim: threads >= 1 required");
  }
};

struct EnsembleState {
  std::vector<ParticleConfiguration> replicas;
  double time = 0.0;
};

/// Control term alpha(t, x^i, mu_x) added to the drift of each particle.
using ControlFn =
    std::function<Vec(double t, const Eigen::Ref<const Vec>& x, const ParticleConfiguration& mu)>;

/// Initial law of the ensemble.
struct InitialCondition {
  enum class Kind { point, gaussian_product, gibbs, configuration };
  Kind kind = Kind::point;
  Vec x0;        // point: every particle starts here (length d)
  Vec mean;      // gaussian_product: per-particle mean (length d)
  Mat cov_chol;  // gaussian_product: Cholesky factor of the d x d covariance
  Mat points;    // configuration: explicit d x N start shared by all replicas

  static InitialCondition point(Vec x) {
    InitialCondition ic;
    ic.kind = Kind::point;
    ic.x0 = std::move(x);
    return ic;
  }
  static InitialCondition gaussian(Vec mean, const Mat& cov) {
    InitialCondition ic;
    ic.kind = Kind::gaussian_product;
    ic.mean = std::move(mean);
    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success)
      throw ConfigError("initial condition: covariance must be positive definite");
    ic.cov_chol = llt.matrixL();
    return ic;
  }
  /// Exact Gibbs start; valid for GaussianMeanField models only.
  static InitialCondition gibbs() {
    InitialCondition ic;
    ic.kind = Kind::gibbs;
    return ic;
  }
  static InitialCondition configuration(Mat points) {
    InitialCondition ic;
    ic.kind = Kind::configuration;
    ic.points = std::move(points);
    return ic;
  }
};

namespace detail {

inline void fill_standard_normal(Mat& out, rng::Key key) {
  for (int i = 0; i < out.cols(); ++i)
    for (int k = 0; k < out.rows(); ++k)
      out(k, i) = rng::standard_normal(key.with(static_cast<std::uint64_t>(i),
                                                static_cast<std::uint64_t>(k)));
}

/// Draw from the exact Gaussian Gibbs measure of GaussianMeanField using the
/// two-eigenspace structure of the precision a(I-J) + (a+lambda)J.
inline Mat exact_gibbs_points(double a, double lambda, int n, int d, rng::Key key) {
  Mat xi(d, n);
  fill_standard_normal(xi, key);
  const Vec mean = xi.rowwise().mean();
  const double s_perp = 1.0 / std::sqrt(a);
  const double s_mean = 1.0 / std::sqrt(a + lambda);
  Mat pts = s_perp * xi;
  pts.colwise() += (s_mean - s_perp) * mean;
  return pts;
}

/// One Euler-Maruyama step for a single replica. Returns false when the
/// updated state has a non-finite coordinate.
inline bool em_step_replica(const EnergyModel& model, ParticleConfiguration& cfg, int replica,
                            long step_index, const SimConfig& sim, double time,
                            const ControlFn& control, Mat& drift_buf) {
  model.drift_into(cfg, drift_buf);
  const int n = cfg.n_particles();
  const int d = cfg.dim();
  if (control) {
    for (int i = 0; i < n; ++i) drift_buf.col(i) += control(time, cfg.point(i), cfg);
  }
  Mat& pts = cfg.points();
  pts += sim.dt * drift_buf;
  if (!sim.disable_noise) {
    const double amp = std::sqrt(2.0 * sim.dt);
    const rng::Key base = rng::Key(sim.seed, rng::Stream::simulation)
                              .with(static_cast<std::uint64_t>(replica),
                                    static_cast<std::uint64_t>(step_index));
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < d; ++k)
        pts(k, i) += amp * rng::standard_normal(base.with(static_cast<std::uint64_t>(i),
                                                          static_cast<std::uint64_t>(k)));
  }
  return pts.allFinite();
}

/// One exact Ornstein-Uhlenbeck transition for GaussianMeanField over dt.
inline bool exact_step_replica(const GaussianMeanField& model, ParticleConfiguration& cfg,
                               int replica, long step_index, const SimConfig& sim) {
  const double a = model.a();
  const double lam = model.lambda();
  const double e1 = std::exp(-a * sim.dt);
  const double e2 = std::exp(-(a + lam) * sim.dt);
  Mat& pts = cfg.points();
  const Vec mean = pts.rowwise().mean();
  pts = e1 * pts;
  pts.colwise() += (e2 - e1) * mean;
  if (!sim.disable_noise) {
    const double v1 = std::sqrt((1.0 - e1 * e1) / a);
    const double v2 = std::sqrt((1.0 - e2 * e2) / (a + lam));
    Mat xi(pts.rows(), pts.cols());
    fill_standard_normal(xi, rng::Key(sim.seed, rng::Stream::simulation)
                                 .with(static_cast<std::uint64_t>(replica),
                                       static_cast<std::uint64_t>(step_index)));
    const Vec xi_mean = xi.rowwise().mean();
    pts += v1 * xi;
    pts.colwise() += (v2 - v1) * xi_mean;
  }
  return pts.allFinite();
}

inline bool step_replica(const EnergyModel& model, ParticleConfiguration& cfg, int replica,
                         long step_index, const SimConfig& sim, double time,
                         const ControlFn& control, Mat& drift_buf) {
  if (sim.scheme == Scheme::exact_gaussian) {
    const auto* g = dynamic_cast<const GaussianMeanField*>(&model);
    if (g == nullptr || !(g->a() > 0.0))
      throw ConfigError("exact_gaussian scheme requires a GaussianMeanField model with a > 0");
    if (control)
      throw ConfigError("exact_gaussian scheme does not support a control term");
    return exact_step_replica(*g, cfg, replica, step_index, sim);
  }
  return em_step_replica(model, cfg, replica, step_index, sim, time, control, drift_buf);
}

/// Materializes one replica's start according to the initial law.
inline Mat initial_points(const EnergyModel& model, const InitialCondition& init, int n, int d,
                          rng::Key key) {
  switch (init.kind) {
    case InitialCondition::Kind::point: {
      if (init.x0.size() != d) throw ConfigError("initial point has wrong dimension");
      Mat pts(d, n);
      pts.colwise() = init.x0;
      return pts;
    }
    case InitialCondition::Kind::gaussian_product: {
      if (init.mean.size() != d) throw ConfigError("initial mean has wrong dimension");
      Mat xi(d, n);
      fill_standard_normal(xi, key);
      Mat pts = init.cov_chol * xi;
      pts.colwise() += init.mean;
      return pts;
    }
    case InitialCondition::Kind::gibbs: {
      const auto* g = dynamic_cast<const GaussianMeanField*>(&model);
      if (g == nullptr || !(g->a() > 0.0))
        throw ConfigError("gibbs initial condition requires a GaussianMeanField model with "
                          "a > 0; sample other models with sample_gibbs_mala");
      return exact_gibbs_points(g->a(), g->lambda(), n, d, key);
    }
    case InitialCondition::Kind::configuration: {
      if (init.points.rows() != d || init.points.cols() != n)
        throw ConfigError("initial configuration has wrong shape");
      return init.points;
    }
  }
  throw ConfigError("unknown initial condition");
}

}  // namespace detail

/// One step of the (optionally controlled) particle SDE for every replica:
///   x^i <- x^i + (-D_m F(mu_x, x^i) + alpha(t, x^i, mu_x)) dt + sqrt(2 dt) xi.
/// Noise streams are indexed by (replica, step, particle, coordinate) so the
/// output is a pure function of (seed, cfg, model). Throws DivergenceError on
/// the first replica that leaves the finite range.
inline EnsembleState step(const EnergyModel& model, EnsembleState state, const SimConfig& sim,
                          long step_index, const ControlFn& control = nullptr) {
  sim.validate();
  Mat drift_buf;
  for (int r = 0; r < static_cast<int>(state.replicas.size()); ++r) {
    if (!detail::step_replica(model, state.replicas[r], r, step_index, sim, state.time, control,
                              drift_buf))
      throw DivergenceError("replica " + std::to_string(r) + " diverged at t=" +
                                std::to_string(state.time + sim.dt),
                            state.time + sim.dt, r);
  }
  state.time += sim.dt;
  return state;
}

struct ReplicaSnapshot {
  double time;
  int replica;
  Vec coord_sum;     // per-coordinate sum over particles
  Vec coord_sum_sq;  // per-coordinate sum of squares over particles
  double observable; // (1/N) sum_i f(x^i), NaN when no observable was given
};

struct DivergenceEvent {
  double time;
  int replica;
};

struct SimulationResult {
  std::vector<double> snapshot_times;
  std::vector<ReplicaSnapshot> snapshots;  // ordered by (time, replica)
  EnsembleState final_state;
  std::vector<DivergenceEvent> divergences;
};

/// Simulates the ensemble and records snapshots. Replicas run independently
/// (parallelized up to sim.threads workers) and a diverged replica is dropped
/// from later snapshots while the others continue; results are identical for
/// every worker count.
inline SimulationResult simulate(const EnergyModel& model, const InitialCondition& init, int n,
                                 int d, const SimConfig& sim, const ControlFn& control = nullptr,
                                 const TestFunctionPtr& observable = nullptr) {
  sim.validate();
  if (n < 1 || d < 1) throw ConfigError("simulate: N >= 1 and d >= 1 required");

  // materialize initial replicas
  std::vector<ParticleConfiguration> replicas;
  replicas.reserve(sim.n_replicas);
  for (int r = 0; r < sim.n_replicas; ++r) {
    ParticleConfiguration cfg(n, d);
    cfg.points() = detail::initial_points(
        model, init, n, d,
        rng::Key(sim.seed, rng::Stream::initial).with(static_cast<std::uint64_t>(r)));
    replicas.push_back(std::move(cfg));
  }

  std::vector<double> snapshot_times;
  std::vector<long> snapshot_steps;
  snapshot_times.push_back(0.0);
  snapshot_steps.push_back(0);
  if (sim.snapshot_every > 0) {
    for (long s = sim.snapshot_every; s < sim.n_steps; s += sim.snapshot_every) {
      snapshot_times.push_back(s * sim.dt);
      snapshot_steps.push_back(s);
    }
  }
  if (sim.n_steps > 0) {
    snapshot_times.push_back(sim.n_steps * sim.dt);
    snapshot_steps.push_back(sim.n_steps);
  }

  const std::size_t n_snaps = snapshot_times.size();
  std::vector<ReplicaSnapshot> snapshots(n_snaps * replicas.size());
  std::vector<signed char> diverged(replicas.size(), 0);
  std::vector<double> divergence_time(replicas.size(), 0.0);

  auto record = [&](int r, std::size_t snap_idx) {
    const auto& pts = replicas[static_cast<std::size_t>(r)].points();
    ReplicaSnapshot& snap = snapshots[snap_idx * replicas.size() + r];
    snap.time = snapshot_times[snap_idx];
    snap.replica = r;
    snap.coord_sum = pts.rowwise().sum();
    snap.coord_sum_sq = pts.array().square().matrix().rowwise().sum();
    if (observable) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += observable->value(pts.col(i));
      snap.observable = acc / n;
    } else {
      snap.observable = std::numeric_limits<double>::quiet_NaN();
    }
  };

  auto run_replica = [&](int r) {
    Mat drift_buf;
    std::size_t next_snap = 0;
    if (snapshot_steps[0] == 0) record(r, next_snap++);
    for (long s = 0; s < sim.n_steps; ++s) {
      const double t = s * sim.dt;
      if (!detail::step_replica(model, replicas[static_cast<std::size_t>(r)], r, s, sim, t,
                                control, drift_buf)) {
        diverged[static_cast<std::size_t>(r)] = 1;
        divergence_time[static_cast<std::size_t>(r)] = (s + 1) * sim.dt;
        return;
      }
      while (next_snap < n_snaps && snapshot_steps[next_snap] == s + 1) record(r, next_snap++);
    }
  };

  const int workers = std::min<int>(sim.threads, static_cast<int>(replicas.size()));
  if (workers <= 1) {
    for (int r = 0; r < static_cast<int>(replicas.size()); ++r) run_replica(r);
  } else {
    std::atomic<int> cursor{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int r = cursor.fetch_add(1); r < static_cast<int>(replicas.size());
             r = cursor.fetch_add(1))
          run_replica(r);
      });
    }
    for (auto& th : pool) th.join();
  }

  SimulationResult result;
  result.snapshot_times = std::move(snapshot_times);
  for (std::size_t r = 0; r < replicas.size(); ++r)
    if (diverged[r]) result.divergences.push_back({divergence_time[r], static_cast<int>(r)});
  // keep only snapshots of replicas that were alive at that time
  for (std::size_t s = 0; s < n_snaps; ++s)
    for (std::size_t r = 0; r < replicas.size(); ++r) {
      const auto& snap = snapshots[s * replicas.size() + r];
      if (snap.coord_sum.size() > 0) result.snapshots.push_back(snap);
    }
  result.final_state.replicas = std::move(replicas);
  result.final_state.time = sim.n_steps * sim.dt;
  return result;
}

/// Random-access exact sampler for the Gibbs measure of GaussianMeanField:
/// sample(i) is a pure function of (seed, i).
struct ExactGibbsSampler {
  double a;
  double lambda;
  int n;
  int d;
  std::uint64_t seed;

  ParticleConfiguration sample(std::int64_t index) const {
    const rng::Key key =
        rng::Key(seed, rng::Stream::gibbs).with(static_cast<std::uint64_t>(index));
    return ParticleConfiguration::from_points(detail::exact_gibbs_points(a, lambda, n, d, key));
  }
};

inline std::vector<ParticleConfiguration> sample_gibbs_exact(const GaussianMeanField& model,
                                                             int n, int d, std::int64_t n_samples,
                                                             std::uint64_t seed) {
  ExactGibbsSampler sampler{model.a(), model.lambda(), n, d, seed};
  std::vector<ParticleConfiguration> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  for (std::int64_t i = 0; i < n_samples; ++i) out.push_back(sampler.sample(i));
  return out;
}

struct MalaOptions {
  double initial_step = 0.1;
  long burn_in = 4000;
  long thin = 5;
  double target_low = 0.5;   // adaptation window
  double target_high = 0.6;
  long adapt_window = 100;
};

struct MalaResult {
  std::vector<ParticleConfiguration> samples;
  double acceptance;  // measured after adaptation froze
  double step_size;
};

/// Metropolis-adjusted Langevin chain targeting exp(-U^N). The step size is
/// adapted multiplicatively toward 0.5-0.6 acceptance during burn-in, then
/// frozen; acceptance outside [0.1, 0.9] after tuning is a tuning failure.
inline MalaResult sample_gibbs_mala(const EnergyModel& model, int n, int d,
                                    std::int64_t n_samples, std::uint64_t seed,
                                    const MalaOptions& opts = {}) {
  if (n < 1 || d < 1 || n_samples < 1) throw ConfigError("sample_gibbs_mala: bad sizes");
  double tau = opts.initial_step;
  ParticleConfiguration x(n, d);
  {
    Mat init(d, n);
    detail::fill_standard_normal(init, rng::Key(seed, rng::Stream::mala_proposal).with(0));
    x.points() = init;
  }
  double ux = potential_un(model, x);
  Mat bx = drift(model, x);  // b = -grad U

  long accepted_window = 0;
  long accepted_meas = 0;
  long steps_meas = 0;
  MalaResult result;
  result.samples.reserve(static_cast<std::size_t>(n_samples));

  const long total_steps = opts.burn_in + n_samples * opts.thin;
  for (long s = 0; s < total_steps; ++s) {
    const rng::Key prop_key =
        rng::Key(seed, rng::Stream::mala_proposal).with(static_cast<std::uint64_t>(s + 1));
    Mat xi(d, n);
    detail::fill_standard_normal(xi, prop_key);
    ParticleConfiguration y(n, d);
    y.points() = x.points() + tau * bx + std::sqrt(2.0 * tau) * xi;

    bool accept = false;
    if (y.points().allFinite()) {
      const double uy = potential_un(model, y);
      const Mat by = drift(model, y);
      const double fwd = (y.points() - x.points() - tau * bx).squaredNorm();
      const double bwd = (x.points() - y.points() - tau * by).squaredNorm();
      const double log_alpha = ux - uy + (fwd - bwd) / (4.0 * tau);
      const double u = rng::uniform01(
          rng::Key(seed, rng::Stream::mala_accept).with(static_cast<std::uint64_t>(s + 1)));
      if (std::log(u) < log_alpha) {
        x = std::move(y);
        ux = uy;
        bx = by;
        accept = true;
      }
    }

    if (s < opts.burn_in) {
      accepted_window += accept ? 1 : 0;
      if ((s + 1) % opts.adapt_window == 0) {
        const double rate = static_cast<double>(accepted_window) / opts.adapt_window;
        if (rate > opts.target_high) tau *= 1.25;
        if (rate < opts.target_low) tau *= 0.8;
        accepted_window = 0;
      }
    } else {
      accepted_meas += accept ? 1 : 0;
      ++steps_meas;
      if ((s - opts.burn_in + 1) % opts.thin == 0) result.samples.push_back(x);
    }
  }

  result.acceptance = steps_meas > 0 ? static_cast<double>(accepted_meas) / steps_meas : 0.0;
  result.step_size = tau;
  if (result.acceptance < 0.1 || result.acceptance > 0.9)
    throw TuningError("MALA acceptance " + std::to_string(result.acceptance) +
                          " outside [0.1, 0.9] after tuning",
                      result.acceptance);
  return result;
}

}  // namespace mflab
