#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mflab/errors.hpp"
#include "mflab/particle.hpp"
#include "mflab/rng.hpp"

namespace mflab {

/// Symmetric two-body kernel W with its analytic cross Hessian
/// grad^2_{1,2} W(x, x') (derivative in the first then the second argument).
class Kernel {
 public:
  virtual ~Kernel() = default;
  virtual std::string name() const = 0;
  virtual double value(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& y) const = 0;
  virtual Mat cross_hessian(const Eigen::Ref<const Vec>& x,
                            const Eigen::Ref<const Vec>& y) const = 0;
};

using KernelPtr = std::shared_ptr<const Kernel>;

/// W(x,y) = kappa exp(-|x-y|^2 / (2 sigma^2)), positive type by Bochner.
/// Cross Hessian: (kappa/sigma^2) e^{-|u|^2/2sigma^2} (I - u u^T / sigma^2), u = x-y.
class RbfKernel final : public Kernel {
 public:
  explicit RbfKernel(double sigma = 1.0, double kappa = 1.0) : sigma_(sigma), kappa_(kappa) {
    if (!(sigma > 0.0)) throw ConfigError("RbfKernel: sigma > 0 required");
  }
  std::string name() const override { return "rbf"; }
  double value(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& y) const override {
    return kappa_ * std::exp(-(x - y).squaredNorm() / (2.0 * sigma_ * sigma_));
  }
  Mat cross_hessian(const Eigen::Ref<const Vec>& x,
                    const Eigen::Ref<const Vec>& y) const override {
    const double s2 = sigma_ * sigma_;
    const Vec u = x - y;
    const double w = (kappa_ / s2) * std::exp(-u.squaredNorm() / (2.0 * s2));
    return w * (Mat::Identity(x.size(), x.size()) - u * u.transpose() / s2);
  }

 private:
  double sigma_;
  double kappa_;
};

/// W(x,y) = cos(w . (x-y)), positive type by Bochner.
/// Cross Hessian: cos(w . (x-y)) w w^T.
class CosineKernel final : public Kernel {
 public:
  explicit CosineKernel(Vec frequency) : w_(std::move(frequency)) {}
  explicit CosineKernel(int dim) : w_(Vec::Ones(dim)) {}
  std::string name() const override { return "cosine"; }
  double value(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& y) const override {
    return std::cos(w_.dot(x - y));
  }
  Mat cross_hessian(const Eigen::Ref<const Vec>& x,
                    const Eigen::Ref<const Vec>& y) const override {
    return std::cos(w_.dot(x - y)) * (w_ * w_.transpose());
  }

 private:
  Vec w_;
};

/// W(x,y) = x . y; cross Hessian is the identity so the quadratic form
/// collapses to |sum_i v^i|^2.
class BilinearKernel final : public Kernel {
 public:
  std::string name() const override { return "bilinear"; }
  double value(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& y) const override {
    return x.dot(y);
  }
  Mat cross_hessian(const Eigen::Ref<const Vec>& x,
                    const Eigen::Ref<const Vec>&) const override {
    return Mat::Identity(x.size(), x.size());
  }
};

class NegatedKernel final : public Kernel {
 public:
  explicit NegatedKernel(KernelPtr inner) : inner_(std::move(inner)) {}
  std::string name() const override { return "neg_" + inner_->name(); }
  double value(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& y) const override {
    return -inner_->value(x, y);
  }
  Mat cross_hessian(const Eigen::Ref<const Vec>& x,
                    const Eigen::Ref<const Vec>& y) const override {
    return -inner_->cross_hessian(x, y);
  }

 private:
  KernelPtr inner_;
};

/// Discrete quadratic form sum_{i,j} v^i . grad^2_{1,2} W(x^i, x^j) v^j,
/// nonnegative for positive-type W.
inline double quadratic_form(const Kernel& kernel, const Mat& xs, const Mat& vs) {
  if (xs.rows() != vs.rows() || xs.cols() != vs.cols())
    throw ConfigError("quadratic_form: xs and vs must have the same shape");
  const int n = static_cast<int>(xs.cols());
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      acc += vs.col(i).dot(kernel.cross_hessian(xs.col(i), xs.col(j)) * vs.col(j));
  return acc;
}

/// Finite-difference oracle for quadratic_form: expands
///   (1/h^2) int int W d(mu_h x mu_h),  mu_h = sum_i (delta_{x^i + h v^i} - delta_{x^i}),
/// over the 2N signed atoms. Converges to quadratic_form as h -> 0.
inline double mu_h_form(const Kernel& kernel, const Mat& xs, const Mat& vs, double h) {
  if (!(h > 0.0)) throw ConfigError("mu_h_form: h > 0 required");
  if (xs.rows() != vs.rows() || xs.cols() != vs.cols())
    throw ConfigError("mu_h_form: xs and vs must have the same shape");
  const int n = static_cast<int>(xs.cols());
  const Mat shifted = xs + h * vs;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      acc += kernel.value(shifted.col(i), shifted.col(j));
      acc -= kernel.value(shifted.col(i), xs.col(j));
      acc -= kernel.value(xs.col(i), shifted.col(j));
      acc += kernel.value(xs.col(i), xs.col(j));
    }
  }
  return acc / (h * h);
}

struct PositiveTypeReport {
  double min_value = 0.0;
  Mat argmin_atoms;     // d x k atoms of the minimizing signed measure
  Vec argmin_weights;   // weights summing to zero
  double threshold = -1e-9;
  int trials = 0;
  bool positive_type = true;  // min_value >= threshold
};

/// Randomized positive-type check: samples zero-total-mass signed discrete
/// measures and reports the minimum of int int W d(mu x mu). A minimum below
/// the threshold certifies that W is NOT of positive type; staying above is
/// statistical evidence only.
inline PositiveTypeReport positive_type_check(const Kernel& kernel, int n_trials,
                                              int atoms_per_trial, int dim, std::uint64_t seed,
                                              double threshold = -1e-9) {
  if (n_trials < 1 || atoms_per_trial < 2 || dim < 1)
    throw ConfigError("positive_type_check: need n_trials >= 1, atoms >= 2, dim >= 1");
  PositiveTypeReport report;
  report.threshold = threshold;
  report.trials = n_trials;
  report.min_value = std::numeric_limits<double>::infinity();

  Mat atoms(dim, atoms_per_trial);
  Vec weights(atoms_per_trial);
  Mat gram(atoms_per_trial, atoms_per_trial);
  for (int trial = 0; trial < n_trials; ++trial) {
    const rng::Key key =
        rng::Key(seed, rng::Stream::trials).with(static_cast<std::uint64_t>(trial));
    for (int a = 0; a < atoms_per_trial; ++a) {
      for (int k = 0; k < dim; ++k)
        atoms(k, a) = rng::standard_normal(key.with(static_cast<std::uint64_t>(a),
                                                    static_cast<std::uint64_t>(k), 0));
      weights[a] = rng::standard_normal(key.with(static_cast<std::uint64_t>(a), 0, 1));
    }
    weights.array() -= weights.mean();  // total mass zero
    for (int a = 0; a < atoms_per_trial; ++a)
      for (int b = 0; b < atoms_per_trial; ++b) gram(a, b) = kernel.value(atoms.col(a), atoms.col(b));
    const double form = weights.dot(gram * weights);
    if (form < report.min_value) {
      report.min_value = form;
      report.argmin_atoms = atoms;
      report.argmin_weights = weights;
    }
  }
  report.positive_type = report.min_value >= threshold;
  return report;
}

}  // namespace mflab
