#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "mflab/errors.hpp"
#include "mflab/particle.hpp"

namespace mflab {

/// Gaussian law N(mean, cov) on R^k. cov must be symmetric positive definite,
/// except for the exact point-mass case cov = 0, which is accepted only by
/// ou_flow and w2_point (entropy from a point mass is undefined).
class GaussianMeasure {
 public:
  GaussianMeasure(Vec mean, Mat cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
    if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size())
      throw ConfigError("GaussianMeasure: dimension mismatch");
    const double scale = 1.0 + cov_.cwiseAbs().maxCoeff();
    if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw ConfigError("GaussianMeasure: covariance not symmetric within 1e-12");
    cov_ = (cov_ + cov_.transpose()) / 2.0;
    point_mass_ = cov_.cwiseAbs().maxCoeff() == 0.0;
    if (!point_mass_) {
      Eigen::SelfAdjointEigenSolver<Mat> es(cov_);
      if (es.eigenvalues().minCoeff() <= 0.0)
        throw ConfigError("GaussianMeasure: covariance must be positive definite");
    }
  }

  static GaussianMeasure point(Vec x) {
    const auto k = x.size();
    return GaussianMeasure(std::move(x), Mat::Zero(k, k));
  }

  const Vec& mean() const { return mean_; }
  const Mat& cov() const { return cov_; }
  Eigen::Index dim() const { return mean_.size(); }
  bool is_point_mass() const { return point_mass_; }

 private:
  Vec mean_;
  Mat cov_;
  bool point_mass_ = false;
};

namespace detail {

// Symmetric eigendecomposition with a floor that rejects near-singular input.
struct SymEig {
  Mat vectors;
  Vec values;
};

inline SymEig sym_eig(const Mat& m, const std::string& what, double floor = 1e-14) {
  Eigen::SelfAdjointEigenSolver<Mat> es((m + m.transpose()) / 2.0);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() <= floor * scale)
    throw ConfigError(what + ": matrix is singular to working precision");
  return {es.eigenvectors(), es.eigenvalues()};
}

}  // namespace detail

/// Precision matrix of the N-particle Gibbs measure of GaussianMeanField:
///   P = a I_{Nd} + (lambda/N)(ones_N ones_N^T (x) I_d).
inline Mat gibbs_precision(double a, double lambda, int n, int d) {
  Mat p = a * Mat::Identity(n * d, n * d);
  const double w = lambda / n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < d; ++k) p(i * d + k, j * d + k) += w;
  return p;
}

/// Exact Gibbs measure of GaussianMeanField(a, lambda) with N particles in
/// dimension d. The precision has the two-eigenspace structure
/// P = a (I - J) + (a + lambda) J with J the block-uniform projector, so the
/// covariance is assembled from the rank structure rather than inverted.
inline GaussianMeasure gibbs_gaussian(double a, double lambda, int n, int d) {
  if (!(a > 0.0) || !(a + lambda > 0.0))
    throw ConfigError("gibbs_gaussian: non-normalizable, requires a > 0 and a + lambda > 0");
  if (n < 1 || d < 1) throw ConfigError("gibbs_gaussian: N >= 1 and d >= 1 required");
  Mat cov = (1.0 / a) * Mat::Identity(n * d, n * d);
  const double w = (1.0 / (a + lambda) - 1.0 / a) / n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < d; ++k) cov(i * d + k, j * d + k) += w;
  return GaussianMeasure(Vec::Zero(n * d), std::move(cov));
}

/// Exact LSI and Poincare constant of a Gaussian measure: lambda_min of the
/// precision, i.e. 1 / lambda_max of the covariance.
inline double spectral_gap(const GaussianMeasure& g) {
  Eigen::SelfAdjointEigenSolver<Mat> es(g.cov());
  return 1.0 / es.eigenvalues().maxCoeff();
}

/// Law at time t of the linear Langevin diffusion dX = -P X dt + sqrt(2) dB
/// started from m0:
///   mean_t = e^{-Pt} mean_0,
///   cov_t  = e^{-Pt} cov_0 e^{-Pt} + P^{-1}(I - e^{-2Pt}),
/// evaluated through the eigendecomposition of P. Point-mass m0 is accepted.
inline GaussianMeasure ou_flow(const GaussianMeasure& m0, const Mat& precision, double t) {
  if (t < 0.0) throw ConfigError("ou_flow: t >= 0 required");
  if (precision.rows() != m0.dim()) throw ConfigError("ou_flow: dimension mismatch");
  const auto eig = detail::sym_eig(precision, "ou_flow precision");
  const Vec decay = (-t * eig.values.array()).exp().matrix();
  const Mat e_pt = eig.vectors * decay.asDiagonal() * eig.vectors.transpose();
  const Vec stat = ((1.0 - (-2.0 * t * eig.values.array()).exp()) / eig.values.array()).matrix();
  Mat cov = e_pt * m0.cov() * e_pt + eig.vectors * stat.asDiagonal() * eig.vectors.transpose();
  cov = (cov + cov.transpose()) / 2.0;
  return GaussianMeasure(e_pt * m0.mean(), std::move(cov));
}

/// KL divergence H(p|q) between Gaussians,
///   1/2 [ tr(Sq^{-1} Sp) - k + (mq-mp)^T Sq^{-1} (mq-mp) + ln det Sq / det Sp ].
inline double kl_gaussian(const GaussianMeasure& p, const GaussianMeasure& q) {
  if (p.dim() != q.dim()) throw ConfigError("kl_gaussian: dimension mismatch");
  if (p.is_point_mass() || q.is_point_mass())
    throw ConfigError("kl_gaussian: undefined for point masses");
  const auto k = static_cast<double>(p.dim());
  const auto eq = detail::sym_eig(q.cov(), "kl_gaussian q");
  const auto ep = detail::sym_eig(p.cov(), "kl_gaussian p");
  const Mat q_inv =
      eq.vectors * eq.values.cwiseInverse().asDiagonal() * eq.vectors.transpose();
  const Vec dm = q.mean() - p.mean();
  const double logdet_q = eq.values.array().log().sum();
  const double logdet_p = ep.values.array().log().sum();
  return 0.5 * ((q_inv * p.cov()).trace() - k + dm.dot(q_inv * dm) + logdet_q - logdet_p);
}

/// Relative Fisher information I(p|q) between Gaussians,
///   tr[(Sq^{-1}-Sp^{-1}) Sp (Sq^{-1}-Sp^{-1})] + |Sq^{-1}(mp-mq)|^2.
inline double fisher_gaussian(const GaussianMeasure& p, const GaussianMeasure& q) {
  if (p.dim() != q.dim()) throw ConfigError("fisher_gaussian: dimension mismatch");
  if (p.is_point_mass() || q.is_point_mass())
    throw ConfigError("fisher_gaussian: undefined for point masses");
  const auto eq = detail::sym_eig(q.cov(), "fisher_gaussian q");
  const auto ep = detail::sym_eig(p.cov(), "fisher_gaussian p");
  const Mat q_inv =
      eq.vectors * eq.values.cwiseInverse().asDiagonal() * eq.vectors.transpose();
  const Mat p_inv =
      ep.vectors * ep.values.cwiseInverse().asDiagonal() * ep.vectors.transpose();
  const Mat diff = q_inv - p_inv;
  const Vec dm = p.mean() - q.mean();
  return (diff * p.cov() * diff).trace() + (q_inv * dm).squaredNorm();
}

/// Quadratic Wasserstein distance between Gaussians (Bures formula).
inline double w2_gaussian(const GaussianMeasure& p, const GaussianMeasure& q) {
  if (p.dim() != q.dim()) throw ConfigError("w2_gaussian: dimension mismatch");
  const Mat& sp = p.cov();
  const Mat& sq = q.cov();
  Eigen::SelfAdjointEigenSolver<Mat> esq(sq);
  if (esq.eigenvalues().minCoeff() < 0.0) throw ConfigError("w2_gaussian: invalid covariance");
  const Mat sq_half = esq.operatorSqrt();
  Eigen::SelfAdjointEigenSolver<Mat> cross(sq_half * sp * sq_half);
  const double tr_cross = cross.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  double w2sq = (p.mean() - q.mean()).squaredNorm() + sp.trace() + sq.trace() - 2.0 * tr_cross;
  if (w2sq < 0.0) w2sq = 0.0;
  return std::sqrt(w2sq);
}

/// W2 distance from a point mass: W2^2(delta_x, q) = |x - mq|^2 + tr(Sq),
/// which is the expanded second-moment identity int |x-y|^2 dq(y).
inline double w2_point(const Vec& x, const GaussianMeasure& q) {
  if (x.size() != q.dim()) throw ConfigError("w2_point: dimension mismatch");
  return std::sqrt((x - q.mean()).squaredNorm() + q.cov().trace());
}

}  // namespace mflab
