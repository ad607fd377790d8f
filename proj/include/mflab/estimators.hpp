#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mflab/dynamics.hpp"
#include "mflab/energy.hpp"
#include "mflab/errors.hpp"
#include "mflab/gaussian.hpp"
#include "mflab/math_util.hpp"
#include "mflab/particle.hpp"
#include "mflab/test_functions.hpp"

namespace mflab {

/// Stream of configurations distributed as the sampled Gibbs measure.
/// fill(i, pts) writes sample i into a d x N matrix; it must be a pure
/// function of i so that estimation is independent of evaluation order.
struct SampleSource {
  std::function<void(std::int64_t, Mat&)> fill;
  std::int64_t count = 0;
  int n = 0;
  int d = 0;
};

inline SampleSource gibbs_source(const GaussianMeanField& model, int n, int d,
                                 std::int64_t count, std::uint64_t seed) {
  ExactGibbsSampler sampler{model.a(), model.lambda(), n, d, seed};
  SampleSource src;
  src.fill = [sampler](std::int64_t i, Mat& pts) {
    const rng::Key key =
        rng::Key(sampler.seed, rng::Stream::gibbs).with(static_cast<std::uint64_t>(i));
    pts = detail::exact_gibbs_points(sampler.a, sampler.lambda, sampler.n, sampler.d, key);
  };
  src.count = count;
  src.n = n;
  src.d = d;
  return src;
}

inline SampleSource vector_source(std::shared_ptr<const std::vector<ParticleConfiguration>> v) {
  if (!v || v->empty()) throw ConfigError("vector_source: empty sample set");
  SampleSource src;
  src.count = static_cast<std::int64_t>(v->size());
  src.n = v->front().n_particles();
  src.d = v->front().dim();
  src.fill = [v](std::int64_t i, Mat& pts) { pts = (*v)[static_cast<std::size_t>(i)].points(); };
  return src;
}

/// Monte Carlo verdict on one inequality lhs <= rhs. The margin is measured
/// in combined standard errors of the paired difference; the verdict holds
/// when lhs <= rhs + 3 combined stderr.
struct InequalityVerdict {
  std::string function;
  double lhs = 0.0;
  double rhs = 0.0;
  double lhs_stderr = 0.0;
  double rhs_stderr = 0.0;
  double margin_sigmas = 0.0;
  bool holds = false;
};

namespace detail {

inline double phi(double t) { return t > 0.0 ? t * std::log(t) : 0.0; }

inline void check_conclusive(const InequalityVerdict& v, double combined, const std::string& op) {
  const double magnitude = std::max(std::abs(v.lhs), std::abs(v.rhs));
  if (combined > 0.5 * magnitude && combined > 1e-14)
    throw InconclusiveError(op + " on " + v.function + ": stderr " + std::to_string(combined) +
                            " exceeds half the magnitude " + std::to_string(magnitude));
}

inline InequalityVerdict one_sided_verdict(std::string fn, double lhs, double rhs,
                                           double lhs_se, double rhs_se, double combined) {
  InequalityVerdict v;
  v.function = std::move(fn);
  v.lhs = lhs;
  v.rhs = rhs;
  v.lhs_stderr = lhs_se;
  v.rhs_stderr = rhs_se;
  if (combined > 1e-300) {
    v.margin_sigmas = (rhs - lhs) / combined;
    v.holds = lhs <= rhs + 3.0 * combined;
  } else {
    v.margin_sigmas = 0.0;
    v.holds = lhs <= rhs + 1e-14;
  }
  return v;
}

inline InequalityVerdict equality_verdict(std::string fn, double lhs, double rhs,
                                          double lhs_se, double rhs_se, double combined) {
  InequalityVerdict v;
  v.function = std::move(fn);
  v.lhs = lhs;
  v.rhs = rhs;
  v.lhs_stderr = lhs_se;
  v.rhs_stderr = rhs_se;
  if (combined > 1e-300) {
    v.margin_sigmas = std::abs(lhs - rhs) / combined;
    v.holds = v.margin_sigmas <= 3.0;
  } else {
    v.margin_sigmas = 0.0;
    v.holds = std::abs(lhs - rhs) <= 1e-14;
  }
  return v;
}

// Accumulators for the three checks on one function over a shared sample set.
struct FunctionAccumulator {
  // Gamma_2 identity / second-order Poincare
  MomentAccumulator lf_sq;        // (L^N f)^2
  MomentAccumulator gamma2;       // |f''|_HS^2 + grad f . U'' grad f
  MomentAccumulator gamma2_diff;  // gamma2 - (Lf)^2
  MomentAccumulator grad_sq;      // |grad f|^2
  MomentAccumulator poincare_diff;

  // phi-form defective LSI on the positive clip v = sqrt(f^2 + eps^2)
  KahanSum s_phi, s_m2, s_rhs;
  KahanSum s_phi2, s_m22, s_rhs2;
  KahanSum s_phi_m2, s_phi_rhs, s_m2_rhs;
  std::int64_t count = 0;
};

}  // namespace detail

/// Result of one pass of the full inequality suite over a shared sample set.
struct InequalitySuite {
  std::vector<InequalityVerdict> gamma2;
  std::vector<InequalityVerdict> poincare;
  std::vector<InequalityVerdict> dlsi;
};

/// One streaming pass over the sample set evaluating, for every dictionary
/// function, the Gamma_2 identity, the second-order Poincare inequality with
/// constant rho2, and the phi-form defective log-Sobolev inequality with
/// constants (rho_prime, delta). All three verdicts for one function share
/// the same samples, which tightens the paired standard errors.
inline InequalitySuite inequality_suite(const EnergyModel& model, const SampleSource& src,
                                        const std::vector<TestFunctionPtr>& dictionary,
                                        double rho2, double rho_prime, double delta,
                                        double positive_clip = 1e-8) {
  if (dictionary.empty()) throw ConfigError("inequality_suite: empty dictionary");
  if (!(rho_prime > 0.0)) throw RegimeError("inequality_suite: rho_prime > 0 required", rho_prime);
  if (!(rho2 > 0.0)) throw RegimeError("inequality_suite: rho2 > 0 required", rho2);

  const std::size_t nf = dictionary.size();
  std::vector<detail::FunctionAccumulator> acc(nf);

  ParticleConfiguration cfg(src.n, src.d);
  Mat drift_buf;
  Vec grad;
  const double eps2 = positive_clip * positive_clip;

  for (std::int64_t i = 0; i < src.count; ++i) {
    src.fill(i, cfg.points());
    model.drift_into(cfg, drift_buf);
    const Eigen::Map<const Vec> drift_flat(drift_buf.data(), drift_buf.size());
    const auto x = cfg.flat();

    for (std::size_t k = 0; k < nf; ++k) {
      const TestFunction& f = *dictionary[k];
      auto& a = acc[k];
      f.gradient_into(x, grad);
      const double gsq = grad.squaredNorm();
      const double lf = f.laplacian(x) + drift_flat.dot(grad);
      const double lf2 = lf * lf;
      const double g2 = f.hessian_frob_sq(x) + model.hessian_quadratic(cfg, grad);
      a.lf_sq.add(lf2);
      a.gamma2.add(g2);
      a.gamma2_diff.add(g2 - lf2);
      a.grad_sq.add(gsq);
      a.poincare_diff.add(lf2 - rho2 * gsq);

      const double fv = f.value(x);
      const double v2 = fv * fv + eps2;
      const double phi_s = detail::phi(v2);
      const double gclip_sq = (fv * fv / v2) * gsq;
      const double rhs_s = (2.0 / rho_prime) * gclip_sq + (delta / (2.0 * rho_prime)) * v2;
      a.s_phi.add(phi_s);
      a.s_m2.add(v2);
      a.s_rhs.add(rhs_s);
      a.s_phi2.add(phi_s * phi_s);
      a.s_m22.add(v2 * v2);
      a.s_rhs2.add(rhs_s * rhs_s);
      a.s_phi_m2.add(phi_s * v2);
      a.s_phi_rhs.add(phi_s * rhs_s);
      a.s_m2_rhs.add(v2 * rhs_s);
      ++a.count;
    }
  }

  InequalitySuite out;
  for (std::size_t k = 0; k < nf; ++k) {
    const auto& a = acc[k];
    const std::string name = dictionary[k]->name();

    out.gamma2.push_back(detail::equality_verdict(
        name, a.lf_sq.mean(), a.gamma2.mean(), a.lf_sq.stderr_of_mean(),
        a.gamma2.stderr_of_mean(), a.gamma2_diff.stderr_of_mean()));
    detail::check_conclusive(out.gamma2.back(), a.gamma2_diff.stderr_of_mean(), "gamma2");

    out.poincare.push_back(detail::one_sided_verdict(
        name, rho2 * a.grad_sq.mean(), a.lf_sq.mean(), rho2 * a.grad_sq.stderr_of_mean(),
        a.lf_sq.stderr_of_mean(), a.poincare_diff.stderr_of_mean()));
    detail::check_conclusive(out.poincare.back(), a.poincare_diff.stderr_of_mean(), "poincare");

    // phi-form: lhs = E phi(v^2) - phi(E v^2); the nonlinear part is
    // linearized (delta method) for the standard errors.
    const double n = static_cast<double>(a.count);
    const double m_phi = a.s_phi.value() / n;
    const double m_m2 = a.s_m2.value() / n;
    const double m_rhs = a.s_rhs.value() / n;
    const double lhs = m_phi - detail::phi(m_m2);
    const double dphi = std::log(m_m2) + 1.0;  // phi'(E v^2)
    const double var_phi = std::max(0.0, a.s_phi2.value() / n - m_phi * m_phi);
    const double var_m2 = std::max(0.0, a.s_m22.value() / n - m_m2 * m_m2);
    const double var_rhs = std::max(0.0, a.s_rhs2.value() / n - m_rhs * m_rhs);
    const double cov_phi_m2 = a.s_phi_m2.value() / n - m_phi * m_m2;
    const double cov_phi_rhs = a.s_phi_rhs.value() / n - m_phi * m_rhs;
    const double cov_m2_rhs = a.s_m2_rhs.value() / n - m_m2 * m_rhs;
    const double var_lhs = std::max(
        0.0, var_phi + dphi * dphi * var_m2 - 2.0 * dphi * cov_phi_m2);
    const double var_diff =
        std::max(0.0, var_phi + dphi * dphi * var_m2 + var_rhs - 2.0 * dphi * cov_phi_m2 -
                          2.0 * cov_phi_rhs + 2.0 * dphi * cov_m2_rhs);
    out.dlsi.push_back(detail::one_sided_verdict(name, lhs, m_rhs, std::sqrt(var_lhs / n),
                                                 std::sqrt(var_rhs / n),
                                                 std::sqrt(var_diff / n)));
    detail::check_conclusive(out.dlsi.back(), std::sqrt(var_diff / n), "dlsi");
  }
  return out;
}

/// Equality check of the integrated Gamma_2 identity
///   int (L^N f)^2 dm = int Gamma_2(f) dm,  L^N = Laplacian - sum_i D_mF . grad_i,
///   Gamma_2(f) = |grad^2 f|_HS^2 + grad f . grad^2 U^N grad f.
inline InequalityVerdict gamma2_identity_check(const EnergyModel& model, const SampleSource& src,
                                               const TestFunctionPtr& f) {
  ParticleConfiguration cfg(src.n, src.d);
  Mat drift_buf;
  Vec grad;
  MomentAccumulator lf_sq, gamma2, diff;
  for (std::int64_t i = 0; i < src.count; ++i) {
    src.fill(i, cfg.points());
    model.drift_into(cfg, drift_buf);
    const Eigen::Map<const Vec> drift_flat(drift_buf.data(), drift_buf.size());
    const auto x = cfg.flat();
    f->gradient_into(x, grad);
    const double lf = f->laplacian(x) + drift_flat.dot(grad);
    const double g2 = f->hessian_frob_sq(x) + model.hessian_quadratic(cfg, grad);
    lf_sq.add(lf * lf);
    gamma2.add(g2);
    diff.add(g2 - lf * lf);
  }
  auto v = detail::equality_verdict(f->name(), lf_sq.mean(), gamma2.mean(),
                                    lf_sq.stderr_of_mean(), gamma2.stderr_of_mean(),
                                    diff.stderr_of_mean());
  detail::check_conclusive(v, diff.stderr_of_mean(), "gamma2");
  return v;
}

/// Second-order Poincare inequality rho2 int |grad f|^2 <= int (L^N f)^2.
inline InequalityVerdict second_order_poincare_check(const EnergyModel& model,
                                                     const SampleSource& src,
                                                     const TestFunctionPtr& f, double rho2) {
  ParticleConfiguration cfg(src.n, src.d);
  Mat drift_buf;
  Vec grad;
  MomentAccumulator grad_sq, lf_sq, diff;
  for (std::int64_t i = 0; i < src.count; ++i) {
    src.fill(i, cfg.points());
    model.drift_into(cfg, drift_buf);
    const Eigen::Map<const Vec> drift_flat(drift_buf.data(), drift_buf.size());
    const auto x = cfg.flat();
    f->gradient_into(x, grad);
    const double gsq = grad.squaredNorm();
    const double lf = f->laplacian(x) + drift_flat.dot(grad);
    grad_sq.add(gsq);
    lf_sq.add(lf * lf);
    diff.add(lf * lf - rho2 * gsq);
  }
  auto v = detail::one_sided_verdict(f->name(), rho2 * grad_sq.mean(), lf_sq.mean(),
                                     rho2 * grad_sq.stderr_of_mean(), lf_sq.stderr_of_mean(),
                                     diff.stderr_of_mean());
  detail::check_conclusive(v, diff.stderr_of_mean(), "poincare");
  return v;
}

/// phi-form defective log-Sobolev check,
///   int phi(f^2) - phi(int f^2) <= (2/rho') int |grad f|^2 + (delta/2rho') int f^2,
/// with f clipped strictly positive at 1e-8 to keep phi's derivative finite.
inline InequalityVerdict defective_lsi_check(const EnergyModel& model, const SampleSource& src,
                                             const TestFunctionPtr& f, double rho_prime,
                                             double delta) {
  InequalitySuite suite = inequality_suite(model, src, {f}, 1.0, rho_prime, delta);
  return suite.dlsi.front();
}

struct GapEstimate {
  double value = 0.0;
  double std_err = 0.0;    // combined uncertainty, jackknife over 32 blocks
  double condition = 0.0;  // condition number of the covariance Gram matrix
};

/// Minimal Rayleigh quotient min_{f in span(dictionary)} int |grad f|^2 / Var f,
/// an upper-bound estimate of the exact Poincare constant; monotone
/// non-increasing in the dictionary.
///
/// The plug-in minimum is kept as the reported value so that enlarging the
/// dictionary can never increase it, but it carries a downward selection bias
/// when the minimizing direction is degenerate. std_err therefore combines
/// the jackknife variance with a jackknife bias allowance; the factor 2 on
/// the bias term accounts for the square-root decay rate of that bias, of
/// which leave-one-block-out differencing recovers only half.
inline GapEstimate rayleigh_gap(const SampleSource& src,
                                const std::vector<TestFunctionPtr>& dictionary) {
  const int k = static_cast<int>(dictionary.size());
  if (k < 2) throw ConfigError("rayleigh_gap: at least 2 dictionary functions required");
  if (src.count < 10000)
    throw ConfigError("rayleigh_gap: Gram matrices require at least 10^4 samples");

  constexpr int n_blocks = 32;
  const std::int64_t block_len = (src.count + n_blocks - 1) / n_blocks;

  std::vector<Vec> val_sum(n_blocks, Vec::Zero(k));
  std::vector<Mat> vv_sum(n_blocks, Mat::Zero(k, k));
  std::vector<Mat> gg_sum(n_blocks, Mat::Zero(k, k));
  std::vector<std::int64_t> counts(n_blocks, 0);

  ParticleConfiguration cfg(src.n, src.d);
  Vec vals(k);
  Mat grads(static_cast<Eigen::Index>(src.n) * src.d, k);
  Vec gbuf;
  for (std::int64_t i = 0; i < src.count; ++i) {
    src.fill(i, cfg.points());
    const auto x = cfg.flat();
    for (int j = 0; j < k; ++j) {
      vals[j] = dictionary[static_cast<std::size_t>(j)]->value(x);
      dictionary[static_cast<std::size_t>(j)]->gradient_into(x, gbuf);
      grads.col(j) = gbuf;
    }
    const int b = static_cast<int>(i / block_len);
    val_sum[b] += vals;
    vv_sum[b] += vals * vals.transpose();
    gg_sum[b] += grads.transpose() * grads;
    ++counts[b];
  }

  auto solve = [&](const Vec& sv, const Mat& svv, const Mat& sgg, std::int64_t n,
                   double* condition) -> double {
    const double nn = static_cast<double>(n);
    const Vec mean = sv / nn;
    const Mat cov = svv / nn - mean * mean.transpose();
    const Mat dirichlet = sgg / nn;
    Eigen::SelfAdjointEigenSolver<Mat> es_cov(cov);
    const double lo = es_cov.eigenvalues().minCoeff();
    const double hi = es_cov.eigenvalues().maxCoeff();
    const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (condition != nullptr) *condition = cond;
    if (!(cond < 1e10))
      throw DictionaryError("rayleigh_gap: covariance Gram condition " + std::to_string(cond) +
                            " exceeds 1e10; dictionary is degenerate");
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(dirichlet, cov);
    return ges.eigenvalues().minCoeff();
  };

  Vec total_v = Vec::Zero(k);
  Mat total_vv = Mat::Zero(k, k);
  Mat total_gg = Mat::Zero(k, k);
  for (int b = 0; b < n_blocks; ++b) {
    total_v += val_sum[b];
    total_vv += vv_sum[b];
    total_gg += gg_sum[b];
  }

  GapEstimate est;
  est.value = solve(total_v, total_vv, total_gg, src.count, &est.condition);

  // leave-one-block-out jackknife
  std::vector<double> jack;
  jack.reserve(n_blocks);
  for (int b = 0; b < n_blocks; ++b) {
    if (counts[b] == 0) continue;
    jack.push_back(solve(total_v - val_sum[b], total_vv - vv_sum[b], total_gg - gg_sum[b],
                         src.count - counts[b], nullptr));
  }
  const double m = static_cast<double>(jack.size());
  double jmean = 0.0;
  for (double j : jack) jmean += j;
  jmean /= m;
  double jvar = 0.0;
  for (double j : jack) jvar += (j - jmean) * (j - jmean);
  const double sigma = std::sqrt((m - 1.0) / m * jvar);
  const double bias = 2.0 * (m - 1.0) * (jmean - est.value);
  est.std_err = std::hypot(sigma, bias);
  return est;
}

struct DecayFit {
  double rate = 0.0;  // positive decay rate of H along the flow
  int points_used = 0;
};

/// Least-squares slope of log H(m_t | m_inf) over the time grid for the exact
/// Gaussian flow with the given precision. Grid points where H < 1e-14 are
/// truncated.
inline DecayFit entropy_decay_rate(const Mat& precision, const GaussianMeasure& m0,
                                   const std::vector<double>& times) {
  if (times.size() < 2) throw ConfigError("entropy_decay_rate: need at least 2 time points");
  const auto eig = detail::sym_eig(precision, "entropy_decay_rate");
  const Mat cov_inf =
      eig.vectors * eig.values.cwiseInverse().asDiagonal() * eig.vectors.transpose();
  const GaussianMeasure stationary(Vec::Zero(precision.rows()), cov_inf);

  std::vector<double> ts, logs;
  for (double t : times) {
    const GaussianMeasure mt = ou_flow(m0, precision, t);
    const double h = kl_gaussian(mt, stationary);
    if (h >= 1e-14) {
      ts.push_back(t);
      logs.push_back(std::log(h));
    }
  }
  if (ts.size() < 2)
    throw ConfigError("entropy_decay_rate: entropy below 1e-14 on all but one grid point");

  const double n = static_cast<double>(ts.size());
  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    st += ts[i];
    sy += logs[i];
    stt += ts[i] * ts[i];
    sty += ts[i] * logs[i];
  }
  const double slope = (n * sty - st * sy) / (n * stt - st * st);
  return {-slope, static_cast<int>(ts.size())};
}

}  // namespace mflab
