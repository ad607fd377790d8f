#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "mflab/errors.hpp"

namespace mflab {

/// Inputs of the log-Sobolev constant pipeline. The pipeline is meaningful
/// only for N > alpha := m_mm / rho.
struct ConstantsInput {
  int dim = 1;          // d
  long n_particles = 1; // N
  double epsilon = 0.5; // in (0,1)
  double m_mm = 0.0;    // M^F_mm
  double rho = 1.0;     // uniform one-body constant

  void validate() const {
    if (dim < 1) throw ConfigError("constants: d >= 1 required");
    if (n_particles < 1) throw ConfigError("constants: N >= 1 required");
    if (!(epsilon > 0.0) || !(epsilon < 1.0))
      throw ConfigError("constants: epsilon must lie in the open interval (0,1)");
    if (!(rho > 0.0)) throw ConfigError("constants: rho > 0 required");
    if (m_mm < 0.0) throw ConfigError("constants: m_mm >= 0 required");
  }

  double alpha() const { return m_mm / rho; }
};

struct DefectiveConstants {
  double rho_prime;  // defective LSI constant
  double delta;      // defect, >= 0 always
  bool valid;        // rho_prime > 0
};

/// Defective log-Sobolev constants:
///   rho' = (1-eps) rho - (M_mm/N)(8 + 6(1/eps - 1) M_mm/rho),
///   delta = 2 d M_mm (5 + 3(1/eps - 1) M_mm/rho).
inline DefectiveConstants defective_constants(const ConstantsInput& in) {
  in.validate();
  const double inv = 1.0 / in.epsilon - 1.0;
  const double alpha = in.alpha();
  const double rho_prime =
      (1.0 - in.epsilon) * in.rho - (in.m_mm / in.n_particles) * (8.0 + 6.0 * inv * alpha);
  const double delta = 2.0 * in.dim * in.m_mm * (5.0 + 3.0 * inv * alpha);
  return {rho_prime, delta, rho_prime > 0.0};
}

struct PoincareConstant {
  double value;  // rho - m_mm/N
  bool valid;    // value > 0
};

/// Uniform Poincare constant of the N-particle Gibbs measure.
inline PoincareConstant poincare_constant(double rho, double m_mm, long n) {
  if (n < 1) throw ConfigError("poincare_constant: N >= 1 required");
  const double value = rho - m_mm / n;
  return {value, value > 0.0};
}

/// Hypercontractive tightening of a (rho1, delta)-defective LSI by a
/// rho2-Poincare inequality: rho1 rho2 / (rho2 + delta/4).
inline double tighten(double rho1, double rho2, double delta) {
  if (!(rho1 > 0.0) || !(rho2 > 0.0))
    throw ConfigError("tighten: rho1 > 0 and rho2 > 0 required");
  if (delta < 0.0) throw ConfigError("tighten: delta >= 0 required");
  return rho1 * rho2 / (rho2 + delta / 4.0);
}

/// Classical Rothaus-based tightening, kept for comparison tables:
///   (1/rho1 + (delta/(4 rho1) + 1)/rho2)^{-1}.
/// Strictly smaller than tighten() for all admissible inputs.
inline double standard_tightening(double rho1, double rho2, double delta) {
  if (!(rho1 > 0.0) || !(rho2 > 0.0))
    throw ConfigError("standard_tightening: rho1 > 0 and rho2 > 0 required");
  if (delta < 0.0) throw ConfigError("standard_tightening: delta >= 0 required");
  return 1.0 / (1.0 / rho1 + (delta / (4.0 * rho1) + 1.0) / rho2);
}

/// Canonical N-particle log-Sobolev constant: the three-step composition
/// (defective constants, uniform Poincare, hypercontractive tightening).
inline double lsi_constant_pipeline(const ConstantsInput& in) {
  in.validate();
  if (!(in.n_particles > in.alpha()))
    throw RegimeError("lsi_constant_pipeline: requires N > alpha", in.alpha());
  const auto def = defective_constants(in);
  if (!def.valid)
    throw RegimeError("lsi_constant_pipeline: defective constant rho' is nonpositive",
                      def.rho_prime);
  const auto poi = poincare_constant(in.rho, in.m_mm, in.n_particles);
  if (!poi.valid)
    throw RegimeError("lsi_constant_pipeline: Poincare constant is nonpositive", poi.value);
  return tighten(def.rho_prime, poi.value, def.delta);
}

/// Verbatim closed form of the published N-particle constant:
///   rho^N = rho [1 - eps - (8a + 6(1/eps-1)) a^2/N]
///             / [1 + 2d (5 + 3(1/eps-1) a) a/(1 - a/N)],  a = alpha.
/// Reported alongside the pipeline value; the two disagree numerically.
inline double lsi_constant_theorem(const ConstantsInput& in) {
  in.validate();
  const double alpha = in.alpha();
  const double n = static_cast<double>(in.n_particles);
  if (!(n > alpha)) throw RegimeError("lsi_constant_theorem: requires N > alpha", alpha);
  const double inv = 1.0 / in.epsilon - 1.0;
  const double num = 1.0 - in.epsilon - (8.0 * alpha + 6.0 * inv) * (alpha * alpha / n);
  const double den = 1.0 + 2.0 * in.dim * (5.0 + 3.0 * inv * alpha) * (alpha / (1.0 - alpha / n));
  const double value = in.rho * num / den;
  if (!(num > 0.0))
    throw RegimeError("lsi_constant_theorem: numerator is nonpositive", value);
  return value;
}

/// Published N -> infinity limit: (1-eps) rho / (1 + 2 d alpha (5 + 3(1/eps-1) alpha)).
inline double lsi_limit_remark(int dim, double rho, double alpha, double epsilon) {
  if (!(epsilon > 0.0) || !(epsilon < 1.0))
    throw ConfigError("lsi_limit_remark: epsilon must lie in (0,1)");
  const double inv = 1.0 / epsilon - 1.0;
  return (1.0 - epsilon) * rho / (1.0 + 2.0 * dim * alpha * (5.0 + 3.0 * inv * alpha));
}

/// N -> infinity limit of the pipeline composition: (1-eps) rho / (1 + delta/(4 rho))
/// with delta at its N-free value.
inline double lsi_limit_pipeline(int dim, double rho, double alpha, double epsilon) {
  if (!(epsilon > 0.0) || !(epsilon < 1.0))
    throw ConfigError("lsi_limit_pipeline: epsilon must lie in (0,1)");
  const double inv = 1.0 / epsilon - 1.0;
  const double delta = 2.0 * dim * (alpha * rho) * (5.0 + 3.0 * inv * alpha);
  return (1.0 - epsilon) * rho / (1.0 + delta / (4.0 * rho));
}

enum class LsiFormula { pipeline, theorem };

struct EpsilonOptimum {
  double epsilon_star;
  double rho_star;
};

/// Maximizes the chosen rho^N formula over epsilon, clamped to
/// [1e-8, 1 - 1e-8] (the formulas blow up at the endpoints), by a coarse grid
/// scan followed by golden-section refinement to 1e-10 interval width. The
/// returned maximum always dominates the value at epsilon = 1/2.
inline EpsilonOptimum optimize_epsilon(ConstantsInput in, LsiFormula formula) {
  constexpr double lo = 1e-8;
  constexpr double hi = 1.0 - 1e-8;
  constexpr double tol = 1e-10;
  const auto eval = [&](double eps) -> double {
    in.epsilon = eps;
    try {
      return formula == LsiFormula::pipeline ? lsi_constant_pipeline(in)
                                             : lsi_constant_theorem(in);
    } catch (const RegimeError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  // Coarse scan (always including 1/2), then bracket the best point.
  constexpr int grid = 256;
  double best_eps = 0.5;
  double best_val = eval(0.5);
  for (int i = 0; i <= grid; ++i) {
    const double eps = lo + (hi - lo) * i / grid;
    const double v = eval(eps);
    if (v > best_val) {
      best_val = v;
      best_eps = eps;
    }
  }
  if (std::isinf(best_val))
    throw RegimeError("optimize_epsilon: entire epsilon interval is in the invalid regime",
                      in.alpha());

  double a = std::max(lo, best_eps - (hi - lo) / grid);
  double b = std::min(hi, best_eps + (hi - lo) / grid);
  constexpr double gr = 0.6180339887498949;  // 1/phi
  double x1 = b - gr * (b - a);
  double x2 = a + gr * (b - a);
  double f1 = eval(x1);
  double f2 = eval(x2);
  while (b - a > tol) {
    if (f1 >= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = eval(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = eval(x2);
    }
  }
  const double mid = (a + b) / 2.0;
  const double fmid = eval(mid);
  if (fmid > best_val) {
    best_val = fmid;
    best_eps = mid;
  }
  return {best_eps, best_val};
}

/// All derived constants for one input, with explicit validity flags instead
/// of clamping: downstream consumers must distinguish "no bound" from "zero
/// bound". The epsilon optimum refers to the pipeline formula.
struct ConstantsReport {
  double alpha = 0.0;
  bool valid = false;  // N > alpha, rho' > 0 and rho - m_mm/N > 0
  double rho_prime = std::numeric_limits<double>::quiet_NaN();
  double delta = std::numeric_limits<double>::quiet_NaN();
  double rho_poincare = std::numeric_limits<double>::quiet_NaN();
  double rho_lsi_pipeline = std::numeric_limits<double>::quiet_NaN();
  double rho_lsi_theorem = std::numeric_limits<double>::quiet_NaN();
  double rho_lsi_standard = std::numeric_limits<double>::quiet_NaN();
  double rho_limit_remark = std::numeric_limits<double>::quiet_NaN();
  double epsilon_star = std::numeric_limits<double>::quiet_NaN();
  double rho_lsi_optimized = std::numeric_limits<double>::quiet_NaN();
};

inline ConstantsReport constants_report(const ConstantsInput& in) {
  in.validate();
  ConstantsReport rep;
  rep.alpha = in.alpha();
  const auto def = defective_constants(in);
  rep.rho_prime = def.rho_prime;
  rep.delta = def.delta;
  const auto poi = poincare_constant(in.rho, in.m_mm, in.n_particles);
  rep.rho_poincare = poi.value;
  rep.rho_limit_remark = lsi_limit_remark(in.dim, in.rho, rep.alpha, in.epsilon);
  rep.valid = in.n_particles > rep.alpha && def.valid && poi.valid;
  if (rep.valid) {
    rep.rho_lsi_pipeline = tighten(def.rho_prime, poi.value, def.delta);
    rep.rho_lsi_standard = standard_tightening(def.rho_prime, poi.value, def.delta);
    try {
      rep.rho_lsi_theorem = lsi_constant_theorem(in);
    } catch (const RegimeError&) {
      // The closed form has its own validity region; leave NaN when it fails
      // while the pipeline regime is still valid.
    }
    const auto opt = optimize_epsilon(in, LsiFormula::pipeline);
    rep.epsilon_star = opt.epsilon_star;
    rep.rho_lsi_optimized = opt.rho_star;
  }
  return rep;
}

}  // namespace mflab
