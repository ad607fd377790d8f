#include <catch2/catch.hpp>

#include <cmath>

#include "mflab/dynamics.hpp"
#include "mflab/gaussian.hpp"
#include "mflab/math_util.hpp"

using namespace mflab;

TEST_CASE("step with suppressed noise is a gradient-descent update") {
  GaussianMeanField model(1.0, 0.5);
  SimConfig sim;
  sim.dt = 0.05;
  sim.seed = 7;
  sim.disable_noise = true;
  Mat pts(1, 3);
  pts << 1.0, -0.5, 2.0;
  EnsembleState state;
  state.replicas.push_back(ParticleConfiguration::from_points(pts));

  const auto next = step(model, state, sim, 0);
  const auto cfg0 = ParticleConfiguration::from_points(pts);
  const Mat expected = pts + sim.dt * drift(model, cfg0);
  REQUIRE((next.replicas[0].points() - expected).cwiseAbs().maxCoeff() < 1e-14);
  REQUIRE(next.time == Approx(0.05));
}

TEST_CASE("OU variance after unit time matches the closed-form flow") {
  // 2e5 independent 1d particles from a point mass; EM at dt = 0.005
  GaussianMeanField model(1.0, 0.0);
  SimConfig sim;
  sim.dt = 0.005;
  sim.n_steps = 200;
  sim.seed = 11;
  sim.n_replicas = 20;
  const int n = 10000;
  const auto res = simulate(model, InitialCondition::point(Vec::Zero(1)), n, 1, sim);

  MomentAccumulator acc;
  for (const auto& rep : res.final_state.replicas)
    for (int i = 0; i < n; ++i) acc.add(rep.points()(0, i) * rep.points()(0, i));
  // oracle: ou_flow from an exact point mass
  const auto target =
      ou_flow(GaussianMeasure::point(Vec::Zero(1)), Mat::Identity(1, 1), 1.0);
  const double expected = target.cov()(0, 0);
  REQUIRE(expected == Approx(1.0 - std::exp(-2.0)).epsilon(1e-12));
  REQUIRE(std::abs(acc.mean() - expected) < 3.0 * acc.stderr_of_mean() + 0.01 * expected);
}

TEST_CASE("drift-free increments have pure Brownian scaling") {
  GaussianMeanField model(0.0, 0.0);
  SimConfig sim;
  sim.dt = 0.02;
  sim.n_steps = 1;
  sim.seed = 13;
  sim.n_replicas = 50;
  const int n = 2000;
  const auto res = simulate(model, InitialCondition::point(Vec::Zero(2)), n, 2, sim);
  MomentAccumulator mean_acc, var_acc;
  for (const auto& rep : res.final_state.replicas)
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < 2; ++k) {
        mean_acc.add(rep.points()(k, i));
        var_acc.add(rep.points()(k, i) * rep.points()(k, i));
      }
  REQUIRE(std::abs(mean_acc.mean()) < 3.0 * mean_acc.stderr_of_mean());
  REQUIRE(std::abs(var_acc.mean() - 2.0 * sim.dt) < 3.0 * var_acc.stderr_of_mean());
}

TEST_CASE("simulate trajectory bookkeeping") {
  GaussianMeanField model(1.0, 0.0);
  SECTION("zero steps leaves only the initial snapshot") {
    SimConfig sim;
    sim.n_steps = 0;
    sim.seed = 1;
    sim.n_replicas = 3;
    const auto res = simulate(model, InitialCondition::point(Vec::Zero(1)), 4, 1, sim);
    REQUIRE(res.snapshot_times.size() == 1);
    REQUIRE(res.snapshot_times[0] == 0.0);
    REQUIRE(res.snapshots.size() == 3);
  }
  SECTION("snapshot_every produces the expected grid") {
    SimConfig sim;
    sim.dt = 0.1;
    sim.n_steps = 10;
    sim.snapshot_every = 4;
    sim.seed = 1;
    const auto res = simulate(model, InitialCondition::point(Vec::Zero(1)), 2, 1, sim);
    REQUIRE(res.snapshot_times == std::vector<double>{0.0, 0.4, 0.8, 1.0});
  }
}

TEST_CASE("gaussian start matches the closed-form flow moments") {
  GaussianMeanField model(1.0, 0.5);
  const int n = 64;
  SimConfig sim;
  sim.dt = 0.01;
  sim.n_steps = 100;
  sim.seed = 17;
  sim.n_replicas = 300;
  Vec mean0 = (Vec(1) << 1.5).finished();
  const auto res =
      simulate(model, InitialCondition::gaussian(mean0, 0.5 * Mat::Identity(1, 1)), n, 1, sim);

  // oracle: Nd-dimensional OU flow of the product initial law
  const Mat precision = gibbs_precision(1.0, 0.5, n, 1);
  const GaussianMeasure m0(Vec::Constant(n, 1.5), 0.5 * Mat::Identity(n, n));
  const auto target = ou_flow(m0, precision, 1.0);
  const double mean_target = target.mean().mean();

  MomentAccumulator coord_mean;
  for (const auto& rep : res.final_state.replicas)
    for (int i = 0; i < n; ++i) coord_mean.add(rep.points()(0, i));
  REQUIRE(std::abs(coord_mean.mean() - mean_target) <
          3.0 * coord_mean.stderr_of_mean() + 2e-3);
}

TEST_CASE("deterministic permutation equivariance without noise") {
  RbfInteraction model(1.0, 1.0, 1.0, 1.0);
  SimConfig sim;
  sim.dt = 0.05;
  sim.n_steps = 20;
  sim.seed = 19;
  sim.disable_noise = true;
  Mat pts(2, 4);
  pts << 0.3, -1.0, 0.8, 2.0, -0.2, 0.5, 1.1, -0.7;
  const std::vector<int> perm = {2, 0, 3, 1};
  Mat permuted(2, 4);
  for (int i = 0; i < 4; ++i) permuted.col(i) = pts.col(perm[i]);

  const auto r1 = simulate(model, InitialCondition::configuration(pts), 4, 2, sim);
  const auto r2 = simulate(model, InitialCondition::configuration(permuted), 4, 2, sim);
  for (int i = 0; i < 4; ++i)
    REQUIRE((r2.final_state.replicas[0].points().col(i) -
             r1.final_state.replicas[0].points().col(perm[i])).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("determinism across runs and worker counts") {
  GaussianMeanField model(1.0, 0.5);
  SimConfig sim;
  sim.dt = 0.02;
  sim.n_steps = 25;
  sim.seed = 23;
  sim.n_replicas = 8;
  const auto init = InitialCondition::gibbs();

  auto run = [&](int threads) {
    SimConfig s = sim;
    s.threads = threads;
    return simulate(model, init, 16, 2, s);
  };
  const auto a = run(1);
  const auto b = run(1);
  const auto c = run(4);
  for (int r = 0; r < sim.n_replicas; ++r) {
    REQUIRE(a.final_state.replicas[r].points() == b.final_state.replicas[r].points());
    REQUIRE(a.final_state.replicas[r].points() == c.final_state.replicas[r].points());
  }
}

TEST_CASE("exact gibbs sampler moments") {
  SECTION("product case: iid standard gaussian") {
    GaussianMeanField model(1.0, 0.0);
    const auto samples = sample_gibbs_exact(model, 4, 2, 20000, 31);
    MomentAccumulator var0, cross;
    for (const auto& s : samples) {
      var0.add(s.points()(0, 0) * s.points()(0, 0));
      cross.add(s.points()(0, 0) * s.points()(1, 1));
    }
    REQUIRE(std::abs(var0.mean() - 1.0) < 3.0 * var0.stderr_of_mean());
    REQUIRE(std::abs(cross.mean()) < 3.0 * cross.stderr_of_mean());
  }
  SECTION("two-particle sum and difference modes") {
    GaussianMeanField model(1.0, 1.0);
    const auto samples = sample_gibbs_exact(model, 2, 1, 40000, 37);
    MomentAccumulator sum_var, diff_var;
    for (const auto& s : samples) {
      const double x0 = s.points()(0, 0), x1 = s.points()(0, 1);
      sum_var.add(0.5 * (x0 + x1) * (x0 + x1));
      diff_var.add(0.5 * (x0 - x1) * (x0 - x1));
    }
    // oracle: eigen-decomposition of the precision a I + (lambda/N) ones
    REQUIRE(std::abs(sum_var.mean() - 0.5) < 3.0 * sum_var.stderr_of_mean());
    REQUIRE(std::abs(diff_var.mean() - 1.0) < 3.0 * diff_var.stderr_of_mean());
  }
}

TEST_CASE("MALA matches the exact sampler moments") {
  GaussianMeanField model(1.0, 1.0);
  MalaOptions opts;
  opts.burn_in = 3000;
  opts.thin = 3;
  const auto res = sample_gibbs_mala(model, 2, 1, 20000, 41, opts);
  REQUIRE(res.acceptance >= 0.1);
  REQUIRE(res.acceptance <= 0.9);

  MomentAccumulator sum_var, diff_var;
  for (const auto& s : res.samples) {
    const double x0 = s.points()(0, 0), x1 = s.points()(0, 1);
    sum_var.add(0.5 * (x0 + x1) * (x0 + x1));
    diff_var.add(0.5 * (x0 - x1) * (x0 - x1));
  }
  // MALA samples are autocorrelated; allow an effective-sample-size factor
  // of 10 on top of the iid standard errors.
  REQUIRE(std::abs(sum_var.mean() - 0.5) < 10.0 * sum_var.stderr_of_mean());
  REQUIRE(std::abs(diff_var.mean() - 1.0) < 10.0 * diff_var.stderr_of_mean());
}

TEST_CASE("constant control shifts the stationary mean") {
  // dX = (-aX + c) dt + sqrt(2) dB has stationary mean c/a
  GaussianMeanField model(2.0, 0.0);
  const double c = 1.5;
  SimConfig sim;
  sim.dt = 0.01;
  sim.n_steps = 400;
  sim.seed = 53;
  sim.n_replicas = 40;
  const ControlFn control = [c](double, const Eigen::Ref<const Vec>& x,
                                const ParticleConfiguration&) {
    return Vec::Constant(x.size(), c);
  };
  const int n = 2000;
  const auto res = simulate(model, InitialCondition::point(Vec::Zero(1)), n, 1, sim, control);
  MomentAccumulator mean_acc;
  for (const auto& rep : res.final_state.replicas)
    for (int i = 0; i < n; ++i) mean_acc.add(rep.points()(0, i));
  REQUIRE(std::abs(mean_acc.mean() - c / 2.0) < 3.0 * mean_acc.stderr_of_mean() + 5e-3);
}

TEST_CASE("gibbs measure is invariant along the dynamics") {
  GaussianMeanField model(1.0, 0.5);
  const int n = 32;
  SimConfig sim;
  sim.dt = 0.01;
  sim.n_steps = 100;
  sim.seed = 43;
  sim.n_replicas = 400;
  const auto res = simulate(model, InitialCondition::gibbs(), n, 1, sim);

  MomentAccumulator mean_acc, var_acc;
  for (const auto& rep : res.final_state.replicas)
    for (int i = 0; i < n; ++i) {
      mean_acc.add(rep.points()(0, i));
      var_acc.add(rep.points()(0, i) * rep.points()(0, i));
    }
  const auto m_star = gibbs_gaussian(1.0, 0.5, n, 1);
  const double var_target = m_star.cov()(0, 0);
  // EM bias at dt = 0.01 is below one percent here
  REQUIRE(std::abs(mean_acc.mean()) < 3.0 * mean_acc.stderr_of_mean() + 5e-3);
  REQUIRE(std::abs(var_acc.mean() - var_target) <
          3.0 * var_acc.stderr_of_mean() + 0.01 * var_target);
}

namespace {

// cubic repulsion makes the explicit scheme blow up at large steps
class ExplodingModel final : public EnergyModel {
 public:
  std::string name() const override { return "exploding"; }
  double energy(const ParticleConfiguration& mu) const override {
    return -0.25 * mu.points().array().pow(4).sum() / mu.n_particles();
  }
  double flat_derivative(const ParticleConfiguration&,
                         const Eigen::Ref<const Vec>& x) const override {
    return -0.25 * x.array().pow(4).sum();
  }
  Vec intrinsic_derivative(const ParticleConfiguration&,
                           const Eigen::Ref<const Vec>& x) const override {
    return -x.array().pow(3).matrix();
  }
  Mat second_intrinsic(const ParticleConfiguration&, const Eigen::Ref<const Vec>& x,
                       const Eigen::Ref<const Vec>&) const override {
    return Mat::Zero(x.size(), x.size());
  }
  Mat grad_intrinsic(const ParticleConfiguration&,
                     const Eigen::Ref<const Vec>& x) const override {
    return (-3.0 * x.array().square()).matrix().asDiagonal();
  }
  EnergyBounds bounds() const override { return {0.0, 1.0, 1.0}; }
};

}  // namespace

TEST_CASE("divergence is detected and reported per replica") {
  ExplodingModel model;
  SimConfig sim;
  sim.dt = 10.0;
  sim.n_steps = 50;
  sim.seed = 47;
  sim.n_replicas = 3;
  const auto res =
      simulate(model, InitialCondition::point((Vec(1) << 2.0).finished()), 2, 1, sim);
  REQUIRE_FALSE(res.divergences.empty());

  EnsembleState state;
  state.replicas.push_back(
      ParticleConfiguration::from_points((Mat(1, 2) << 2.0, 2.0).finished()));
  SimConfig one = sim;
  one.disable_noise = true;
  bool threw = false;
  EnsembleState cur = state;
  try {
    for (long s = 0; s < 50; ++s) cur = step(model, std::move(cur), one, s);
  } catch (const DivergenceError& e) {
    threw = true;
    REQUIRE(e.replica() == 0);
    REQUIRE(e.time() > 0.0);
  }
  REQUIRE(threw);
}

TEST_CASE("scheme guards") {
  RbfInteraction rbf(1.0, 1.0, 1.0, 1.0);
  SimConfig sim;
  sim.scheme = Scheme::exact_gaussian;
  sim.n_steps = 1;
  REQUIRE_THROWS_AS(simulate(rbf, InitialCondition::point(Vec::Zero(1)), 2, 1, sim),
                    ConfigError);
  GaussianMeanField ok(1.0, 0.5);
  REQUIRE_NOTHROW(simulate(ok, InitialCondition::point(Vec::Zero(1)), 2, 1, sim));
}
