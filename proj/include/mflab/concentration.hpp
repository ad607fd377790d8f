#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mflab/dynamics.hpp"
#include "mflab/energy.hpp"
#include "mflab/errors.hpp"
#include "mflab/gaussian.hpp"
#include "mflab/math_util.hpp"
#include "mflab/rng.hpp"
#include "mflab/test_functions.hpp"

namespace mflab {

/// Initial law of the diffusion for the concentration bounds: either a point
/// mass or a Gaussian (the two cases with closed-form prefactor integrals).
struct InitialLaw {
  std::optional<Vec> point;
  std::optional<GaussianMeasure> gaussian;

  static InitialLaw at(Vec x) {
    InitialLaw law;
    law.point = std::move(x);
    return law;
  }
  static InitialLaw from(GaussianMeasure g) {
    InitialLaw law;
    law.gaussian = std::move(g);
    return law;
  }
  Eigen::Index dim() const { return point ? point->size() : gaussian->dim(); }
};

/// Deviation query for the long-time tail bounds. Both theorems require
/// t >= 1 and a 1-Lipschitz observable.
struct ConcentrationQuery {
  double t = 1.0;
  double r = 0.0;
  double m_hess = 0.0;  // bound M on the Hessian operator norm
  double rho = 1.0;     // LSI constant entering the bound
  TestFunctionPtr observable;

  void validate() const {
    if (!(t >= 1.0)) throw ConfigError("concentration: t >= 1 required");
    if (!(r >= 0.0)) throw ConfigError("concentration: r >= 0 required");
    if (m_hess < 0.0) throw ConfigError("concentration: m_hess >= 0 required");
    if (!(rho > 0.0)) throw ConfigError("concentration: rho > 0 required");
  }
};

/// Sampled 1-Lipschitz verification: max |grad f| over probe points must not
/// exceed 1 + 1e-9.
inline void check_lipschitz_observable(const TestFunction& f, int dim, std::uint64_t seed = 99) {
  Vec x(dim), g;
  for (int trial = 0; trial < 100; ++trial) {
    const rng::Key key =
        rng::Key(seed, rng::Stream::trials).with(static_cast<std::uint64_t>(trial));
    for (int k = 0; k < dim; ++k)
      x[k] = 2.0 * rng::standard_normal(key.with(static_cast<std::uint64_t>(k)));
    f.gradient_into(x, g);
    if (g.norm() > 1.0 + 1e-9)
      throw ConfigError("observable is not 1-Lipschitz: |grad f| = " + std::to_string(g.norm()));
  }
}

namespace detail {

/// int exp(c W_2^2(delta_x, m_star)) m0(dx) in closed form. For Gaussian m0
/// this is a Gaussian moment-generating function of a quadratic and diverges
/// unless 2 c lambda_max(cov0) < 1.
inline double prefactor_integral(double c, const InitialLaw& m0, const GaussianMeasure& m_star) {
  const double tr_star = m_star.cov().trace();
  if (m0.point) {
    if (m0.point->size() != m_star.dim())
      throw ConfigError("concentration: initial point dimension mismatch");
    const double w2sq = (*m0.point - m_star.mean()).squaredNorm() + tr_star;
    return std::exp(c * w2sq);
  }
  const GaussianMeasure& g = *m0.gaussian;
  if (g.dim() != m_star.dim()) throw ConfigError("concentration: initial law dimension mismatch");
  Eigen::SelfAdjointEigenSolver<Mat> es(g.cov());
  const Vec lam = es.eigenvalues();
  const Vec m_shift = es.eigenvectors().transpose() * (g.mean() - m_star.mean());
  double log_pf = c * tr_star;
  for (Eigen::Index k = 0; k < lam.size(); ++k) {
    const double denom = 1.0 - 2.0 * c * lam[k];
    if (denom <= 0.0)
      throw PrefactorDivergence(
          "prefactor integral diverges: initial law lacks the required Gaussian moment "
          "(2 c lambda_max = " +
          std::to_string(2.0 * c * lam.maxCoeff()) + " >= 1)");
    log_pf += c * m_shift[k] * m_shift[k] / denom - 0.5 * std::log(denom);
  }
  return std::exp(log_pf);
}

}  // namespace detail

struct BoundResult {
  double value = 0.0;      // prefactor * exp(-rho r^2 / 4)
  double prefactor = 0.0;  // int exp(c W_2^2(delta_x, m_star)) dm0
  bool vacuous = false;    // value > 1 bounds no probability informatively
};

/// Single-diffusion deviation envelope:
///   P[f(X_t) - m_star[f] >= r]
///     <= int exp(((M^2+3)/6) e^{-rho(t-1)} W_2^2(delta_x, m_star)) m0(dx)
///          * exp(-rho r^2 / 4).
inline BoundResult bound_single(const ConcentrationQuery& q, const InitialLaw& m0,
                                const GaussianMeasure& m_star) {
  q.validate();
  const double c = (q.m_hess * q.m_hess + 3.0) / 6.0 * std::exp(-q.rho * (q.t - 1.0));
  BoundResult res;
  res.prefactor = detail::prefactor_integral(c, m0, m_star);
  res.value = res.prefactor * std::exp(-q.rho * q.r * q.r / 4.0);
  res.vacuous = !(res.value <= 1.0);
  return res;
}

/// N-particle corollary envelope for the aggregated observable
/// (f(X^1_t)+...+f(X^N_t))/N, with M -> M^F_mm + M^F_mx, rho -> rho^N and the
/// 1/sqrt(N)-Lipschitz aggregation absorbed into exp(-N rho^N r^2 / 4).
inline BoundResult bound_particle(const ConcentrationQuery& q, double rho_n,
                                  const EnergyBounds& bounds, int n_particles,
                                  const InitialLaw& m0n, const GaussianMeasure& m_star_n) {
  if (!(q.t >= 1.0)) throw ConfigError("concentration: t >= 1 required");
  if (!(rho_n > 0.0)) throw RegimeError("bound_particle: rho^N > 0 required", rho_n);
  if (n_particles < 1) throw ConfigError("bound_particle: N >= 1 required");
  const double m = bounds.m_mm + bounds.m_mx;
  const double c = (m * m + 3.0) / 6.0 * std::exp(-rho_n * (q.t - 1.0));
  BoundResult res;
  res.prefactor = detail::prefactor_integral(c, m0n, m_star_n);
  res.value = res.prefactor * std::exp(-n_particles * rho_n * q.r * q.r / 4.0);
  res.vacuous = !(res.value <= 1.0);
  return res;
}

/// Controlled entropy decay envelope:
///   H(mu_t | m_star) <= ((M^2+3)/3) e^{-rho(t-1)} W_2^2(mu_0, m_star)
///                        + (1/2) int_0^t int |alpha|^2 dmu_s ds,
/// where the control energy is supplied by the caller (0 for the free flow).
inline double entropy_decay_bound(const InitialLaw& mu0, const GaussianMeasure& m_star, double t,
                                  double m_hess, double rho, double control_energy = 0.0) {
  if (!(t >= 1.0)) throw ConfigError("entropy_decay_bound: t >= 1 required");
  if (control_energy < 0.0) throw ConfigError("entropy_decay_bound: control energy >= 0");
  double w2sq = 0.0;
  if (mu0.point) {
    const double w = w2_point(*mu0.point, m_star);
    w2sq = w * w;
  } else {
    const double w = w2_gaussian(*mu0.gaussian, m_star);
    w2sq = w * w;
  }
  return (m_hess * m_hess + 3.0) / 3.0 * std::exp(-rho * (t - 1.0)) * w2sq + control_energy;
}

struct TailPoint {
  double t;
  double r;
  double empirical;  // fraction of replicas with deviation >= r
  double ci_low;     // Wilson 99% interval
  double ci_high;
  std::int64_t n_replicas;
};

/// Empirical deviation tails of the aggregated observable
///   S_t = (1/N) sum_i f(X^i_t) - observable_mean
/// estimated over independent replicas at every (t, r) grid point. The time
/// grid must be increasing; each segment is integrated with the requested
/// scheme (exact transitions take one step per segment). A negative-infinity
/// r acts as a sentinel with empirical tail 1.
inline std::vector<TailPoint> empirical_tail(const EnergyModel& model,
                                             const InitialCondition& init, int n, int d,
                                             const TestFunctionPtr& f, double observable_mean,
                                             std::vector<double> t_grid,
                                             const std::vector<double>& r_grid, int n_replicas,
                                             std::uint64_t seed, Scheme scheme = Scheme::exact_gaussian,
                                             double dt = 0.01, int threads = 1) {
  if (n_replicas < 1000) throw ConfigError("empirical_tail: n_replicas >= 10^3 required");
  if (t_grid.empty() || r_grid.empty()) throw ConfigError("empirical_tail: empty grid");
  std::sort(t_grid.begin(), t_grid.end());
  if (t_grid.front() < 0.0) throw ConfigError("empirical_tail: t >= 0 required");
  check_lipschitz_observable(*f, d, seed);

  // segment the time axis; exact transitions take one step per segment
  struct Segment {
    long n_sub;
    double dt;
  };
  std::vector<Segment> segments;
  double prev = 0.0;
  for (double t : t_grid) {
    const double len = t - prev;
    if (len <= 0.0 && !segments.empty())
      throw ConfigError("empirical_tail: time grid must be strictly increasing");
    if (len > 0.0) {
      long n_sub = scheme == Scheme::exact_gaussian
                       ? 1
                       : std::max<long>(1, std::lround(len / dt));
      segments.push_back({n_sub, len / static_cast<double>(n_sub)});
    } else {
      segments.push_back({0, 0.0});
    }
    prev = t;
  }

  Mat deviations(static_cast<Eigen::Index>(t_grid.size()), n_replicas);
  std::atomic<int> fail_replica{-1};
  std::atomic<int> cursor{0};

  auto run_replica = [&](int rep) {
    ParticleConfiguration cfg(n, d);
    cfg.points() = detail::initial_points(
        model, init, n, d,
        rng::Key(seed, rng::Stream::initial).with(static_cast<std::uint64_t>(rep)));
    Mat drift_buf;
    long step_counter = 0;
    double time = 0.0;
    for (std::size_t s = 0; s < segments.size(); ++s) {
      SimConfig sub;
      sub.seed = seed;
      sub.scheme = scheme;
      sub.dt = segments[s].dt > 0.0 ? segments[s].dt : 1.0;
      for (long k = 0; k < segments[s].n_sub; ++k) {
        if (!detail::step_replica(model, cfg, rep, step_counter++, sub, time, nullptr,
                                  drift_buf)) {
          fail_replica.store(rep);
          return;
        }
        time += sub.dt;
      }
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += f->value(cfg.point(i));
      deviations(static_cast<Eigen::Index>(s), rep) = acc / n - observable_mean;
    }
  };

  const int workers = std::max(1, std::min(threads, n_replicas));
  if (workers == 1) {
    for (int rep = 0; rep < n_replicas; ++rep) run_replica(rep);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int rep = cursor.fetch_add(1); rep < n_replicas; rep = cursor.fetch_add(1))
          run_replica(rep);
      });
    for (auto& th : pool) th.join();
  }
  if (fail_replica.load() >= 0)
    throw DivergenceError("replica " + std::to_string(fail_replica.load()) +
                              " diverged during tail estimation",
                          t_grid.back(), fail_replica.load());

  std::vector<TailPoint> out;
  out.reserve(t_grid.size() * r_grid.size());
  for (std::size_t s = 0; s < t_grid.size(); ++s) {
    for (double r : r_grid) {
      std::int64_t hits = 0;
      for (int rep = 0; rep < n_replicas; ++rep)
        if (deviations(static_cast<Eigen::Index>(s), rep) >= r) ++hits;
      const auto ci = wilson99(hits, n_replicas);
      out.push_back({t_grid[s], r, static_cast<double>(hits) / n_replicas, ci.low, ci.high,
                     n_replicas});
    }
  }
  return out;
}

/// Comparison of one theoretical envelope against one empirical tail.
struct TailComparison {
  double t = 0.0;
  double r = 0.0;
  double empirical = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double bound = 0.0;
  bool dominated = false;  // bound >= ci_high, or bound >= 1
  bool vacuous = false;
};

inline TailComparison compare_tail(const TailPoint& tail, double bound) {
  TailComparison cmp;
  cmp.t = tail.t;
  cmp.r = tail.r;
  cmp.empirical = tail.empirical;
  cmp.ci_low = tail.ci_low;
  cmp.ci_high = tail.ci_high;
  cmp.bound = bound;
  cmp.vacuous = !(bound <= 1.0);
  cmp.dominated = bound >= tail.ci_high || bound >= 1.0;
  return cmp;
}

}  // namespace mflab
