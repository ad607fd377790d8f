#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <string>

#include "mflab/errors.hpp"
#include "mflab/particle.hpp"

namespace mflab {

/// Regularity bounds of a mean field energy: operator-norm bounds on the
/// mixed second derivative and the space gradient of the intrinsic
/// derivative, plus the uniform log-Sobolev constant of the associated
/// one-body measures (equally the uniform Poincare constant of the
/// conditionals).
struct EnergyBounds {
  double m_mm = 0.0;    // sup ||D_m^2 F(m,x,x')||_op
  double m_mx = 0.0;    // sup ||grad_x D_m F(m,x)||_op
  double rho_hat = 0.0; // uniform one-body LSI constant

  void validate() const {
    if (m_mm < 0.0 || m_mx < 0.0 || !(rho_hat > 0.0))
      throw ConfigError("energy bounds require m_mm >= 0, m_mx >= 0, rho_hat > 0");
  }
};

/// A mean field energy functional F on probability measures over R^d,
/// evaluated on empirical measures, together with its analytic derivatives.
/// Evaluation is pure; instances are safe for concurrent read-only use.
class EnergyModel {
 public:
  virtual ~EnergyModel() = default;

  virtual std::string name() const = 0;

  /// F(mu_x).
  virtual double energy(const ParticleConfiguration& mu) const = 0;

  /// Flat derivative dF/dm(mu_x, x).
  virtual double flat_derivative(const ParticleConfiguration& mu,
                                 const Eigen::Ref<const Vec>& x) const = 0;

  /// Intrinsic derivative D_m F(mu_x, x) = grad_x dF/dm(mu_x, x).
  virtual Vec intrinsic_derivative(const ParticleConfiguration& mu,
                                   const Eigen::Ref<const Vec>& x) const = 0;

  /// Mixed second derivative D_m^2 F(mu_x, x, y), a d x d matrix.
  virtual Mat second_intrinsic(const ParticleConfiguration& mu, const Eigen::Ref<const Vec>& x,
                               const Eigen::Ref<const Vec>& y) const = 0;

  /// grad_x D_m F(mu_x, x), a d x d matrix.
  virtual Mat grad_intrinsic(const ParticleConfiguration& mu,
                             const Eigen::Ref<const Vec>& x) const = 0;

  virtual EnergyBounds bounds() const = 0;

  /// Drift of the particle SDE: out.col(i) = -D_m F(mu_x, x^i). Models with
  /// structure override this to avoid the per-particle virtual dispatch.
  virtual void drift_into(const ParticleConfiguration& cfg, Mat& out) const {
    const int n = cfg.n_particles();
    out.resize(cfg.dim(), n);
    for (int i = 0; i < n; ++i) out.col(i) = -intrinsic_derivative(cfg, cfg.point(i));
  }

  /// Quadratic form g^T grad^2 U^N(x) g with g in particle-major layout.
  /// The generic path loops over the d x d blocks without materializing the
  /// (Nd)^2 matrix; structured models override with closed forms.
  virtual double hessian_quadratic(const ParticleConfiguration& cfg, const Vec& g) const {
    const int n = cfg.n_particles();
    const int d = cfg.dim();
    const double inv_n = 1.0 / static_cast<double>(n);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto gi = g.segment(i * d, d);
      acc += gi.dot(grad_intrinsic(cfg, cfg.point(i)) * gi);
      for (int j = 0; j < n; ++j) {
        const auto gj = g.segment(j * d, d);
        acc += inv_n * gi.dot(second_intrinsic(cfg, cfg.point(i), cfg.point(j)) * gj);
      }
    }
    return acc;
  }
};

/// Quadratic confinement plus a mean-square interaction:
///   F(m) = (a/2) int |x|^2 dm + (lambda/2) |int x dm|^2.
/// Everything about this model is analytically solvable, which makes it the
/// ground-truth model for the whole test suite.
class GaussianMeanField final : public EnergyModel {
 public:
  GaussianMeanField(double a, double lambda) : a_(a), lambda_(lambda) {
    // a = 0 (pure Brownian motion when lambda = 0 too) is allowed for the
    // dynamics; the Gibbs measure and constants require a > 0 and check it.
    if (a < 0.0 || lambda < 0.0)
      throw ConfigError("GaussianMeanField requires a >= 0 and lambda >= 0");
  }

  double a() const { return a_; }
  double lambda() const { return lambda_; }

  std::string name() const override { return "gaussian"; }

  double energy(const ParticleConfiguration& mu) const override {
    const double second_moment = mu.points().squaredNorm() / mu.n_particles();
    return 0.5 * a_ * second_moment + 0.5 * lambda_ * mu.mean().squaredNorm();
  }

  double flat_derivative(const ParticleConfiguration& mu,
                         const Eigen::Ref<const Vec>& x) const override {
    return 0.5 * a_ * x.squaredNorm() + lambda_ * mu.mean().dot(x);
  }

  Vec intrinsic_derivative(const ParticleConfiguration& mu,
                           const Eigen::Ref<const Vec>& x) const override {
    return a_ * x + lambda_ * mu.mean();
  }

  Mat second_intrinsic(const ParticleConfiguration&, const Eigen::Ref<const Vec>& x,
                       const Eigen::Ref<const Vec>&) const override {
    return lambda_ * Mat::Identity(x.size(), x.size());
  }

  Mat grad_intrinsic(const ParticleConfiguration&,
                     const Eigen::Ref<const Vec>& x) const override {
    return a_ * Mat::Identity(x.size(), x.size());
  }

  EnergyBounds bounds() const override { return {lambda_, a_, a_}; }

  void drift_into(const ParticleConfiguration& cfg, Mat& out) const override {
    out = -a_ * cfg.points();
    if (lambda_ != 0.0) out.colwise() -= lambda_ * cfg.mean();
  }

  double hessian_quadratic(const ParticleConfiguration& cfg, const Vec& g) const override {
    // grad^2 U^N = a I + (lambda/N)(ones x I_d)
    const int n = cfg.n_particles();
    const int d = cfg.dim();
    double block_sum_sq = 0.0;
    for (int k = 0; k < d; ++k) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += g[i * d + k];
      block_sum_sq += s * s;
    }
    return a_ * g.squaredNorm() + (lambda_ / n) * block_sum_sq;
  }

 private:
  double a_;
  double lambda_;
};

/// Quadratic confinement plus a Gaussian-kernel interaction:
///   F(m) = (a/2) int |x|^2 dm + (kappa/2) int int exp(-|x-y|^2/(2 sigma^2)) dm dm.
/// The Gaussian kernel is of positive type, so the interaction term is flat
/// convex. Derivative bounds below come from the closed-form suprema of the
/// kernel derivatives:
///   D_m^2 F(m,x,y) = (kappa/sigma^2) e^{-s/2} (I - u u^T / sigma^2),
///     u = x - y, s = |u|^2/sigma^2, with spectrum
///     (kappa/sigma^2) e^{-s/2} {1, 1-s}; over s >= 0 the operator norm is
///     maximized at s = 0, giving m_mm = kappa/sigma^2.
///   grad_x D_m F(m,x) = a I - avg_y D_m^2 F(m,x,y), so
///     ||grad_x D_m F|| <= a + kappa/sigma^2 = m_mx.
/// rho_hat has no constructive recipe here and must be supplied by the user.
class RbfInteraction final : public EnergyModel {
 public:
  RbfInteraction(double a, double kappa, double sigma, double rho_hat)
      : a_(a), kappa_(kappa), sigma_(sigma), rho_hat_(rho_hat) {
    if (!(a > 0.0) || kappa < 0.0 || !(sigma > 0.0))
      throw ConfigError("RbfInteraction requires a > 0, kappa >= 0, sigma > 0");
    if (!(rho_hat > 0.0)) throw ConfigError("RbfInteraction requires user-supplied rho_hat > 0");
  }

  std::string name() const override { return "rbf"; }

  double kernel(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& y) const {
    return kappa_ * std::exp(-(x - y).squaredNorm() / (2.0 * sigma_ * sigma_));
  }

  double energy(const ParticleConfiguration& mu) const override {
    const int n = mu.n_particles();
    const double second_moment = mu.points().squaredNorm() / n;
    double inter = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) inter += kernel(mu.point(i), mu.point(j));
    return 0.5 * a_ * second_moment + 0.5 * inter / (static_cast<double>(n) * n);
  }

  double flat_derivative(const ParticleConfiguration& mu,
                         const Eigen::Ref<const Vec>& x) const override {
    const int n = mu.n_particles();
    double avg = 0.0;
    for (int j = 0; j < n; ++j) avg += kernel(x, mu.point(j));
    return 0.5 * a_ * x.squaredNorm() + avg / n;
  }

  Vec intrinsic_derivative(const ParticleConfiguration& mu,
                           const Eigen::Ref<const Vec>& x) const override {
    const int n = mu.n_particles();
    const double s2 = sigma_ * sigma_;
    Vec out = a_ * x;
    for (int j = 0; j < n; ++j) {
      const Vec u = x - mu.point(j);
      out -= (kappa_ / (s2 * n)) * std::exp(-u.squaredNorm() / (2.0 * s2)) * u;
    }
    return out;
  }

  Mat second_intrinsic(const ParticleConfiguration&, const Eigen::Ref<const Vec>& x,
                       const Eigen::Ref<const Vec>& y) const override {
    const double s2 = sigma_ * sigma_;
    const Vec u = x - y;
    const double w = (kappa_ / s2) * std::exp(-u.squaredNorm() / (2.0 * s2));
    return w * (Mat::Identity(x.size(), x.size()) - u * u.transpose() / s2);
  }

  Mat grad_intrinsic(const ParticleConfiguration& mu,
                     const Eigen::Ref<const Vec>& x) const override {
    const int n = mu.n_particles();
    Mat out = a_ * Mat::Identity(x.size(), x.size());
    for (int j = 0; j < n; ++j) out -= second_intrinsic(mu, x, mu.point(j)) / n;
    return out;
  }

  EnergyBounds bounds() const override {
    const double s2 = sigma_ * sigma_;
    return {kappa_ / s2, a_ + kappa_ / s2, rho_hat_};
  }

 private:
  double a_;
  double kappa_;
  double sigma_;
  double rho_hat_;
};

/// Langevin potential U^N(x) = N F(mu_x).
inline double potential_un(const EnergyModel& model, const ParticleConfiguration& cfg) {
  const double value = cfg.n_particles() * model.energy(cfg);
  if (!std::isfinite(value)) {
    const int bad = cfg.first_non_finite();
    throw EvaluationError("non-finite energy value at particle " +
                              std::to_string(bad >= 0 ? bad : 0),
                          bad >= 0 ? bad : 0);
  }
  return value;
}

/// Drift of the particle SDE; column i equals -D_m F(mu_x, x^i), which is
/// exactly -grad_i U^N(x) for the built-in models.
inline Mat drift(const EnergyModel& model, const ParticleConfiguration& cfg) {
  Mat out;
  model.drift_into(cfg, out);
  return out;
}

struct HessianResult {
  Mat matrix;               // (Nd) x (Nd), symmetrized
  double asymmetry_defect;  // max-norm of the antisymmetric part before averaging
};

/// Hessian of U^N in d x d blocks:
///   grad^2_{i,j} U^N = grad_x D_m F(mu_x, x^i) 1_{i=j} + (1/N) D_m^2 F(mu_x, x^i, x^j).
/// The result is symmetrized by averaging with its transpose; a defect above
/// tolerance signals an inconsistent model implementation.
inline HessianResult hessian_un(const EnergyModel& model, const ParticleConfiguration& cfg,
                                double asymmetry_tolerance = 1e-8) {
  const int n = cfg.n_particles();
  const int d = cfg.dim();
  Mat h(n * d, n * d);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      Mat block = inv_n * model.second_intrinsic(cfg, cfg.point(i), cfg.point(j));
      if (i == j) block += model.grad_intrinsic(cfg, cfg.point(i));
      h.block(i * d, j * d, d, d) = block;
    }
  }
  const double scale = 1.0 + h.cwiseAbs().maxCoeff();
  const double defect = (h - h.transpose()).cwiseAbs().maxCoeff();
  if (defect > asymmetry_tolerance * scale)
    throw ModelConsistencyError("Hessian asymmetry defect " + std::to_string(defect) +
                                " exceeds tolerance; model derivatives are inconsistent");
  HessianResult res{(h + h.transpose()) / 2.0, defect};
  return res;
}

}  // namespace mflab
