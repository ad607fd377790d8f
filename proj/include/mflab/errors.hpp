#pragma once

#include <stdexcept>
#include <string>

namespace mflab {

/// Invalid configuration or malformed input (CLI exit status 2).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A derived constant left its valid regime, e.g. a nonpositive defective
/// log-Sobolev constant (CLI exit status 3). Carries the failing value.
class RegimeError : public std::runtime_error {
 public:
  RegimeError(const std::string& what, double failing_value)
      : std::runtime_error(what), failing_value_(failing_value) {}
  double failing_value() const { return failing_value_; }

 private:
  double failing_value_;
};

/// A replica produced a non-finite coordinate (CLI exit status 4).
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, double time, int replica)
      : std::runtime_error(what), time_(time), replica_(replica) {}
  double time() const { return time_; }
  int replica() const { return replica_; }

 private:
  double time_;
  int replica_;
};

/// A Monte Carlo verdict whose standard error exceeds half the magnitude of
/// the quantities compared (CLI exit status 5).
class InconclusiveError : public std::runtime_error {
 public:
  explicit InconclusiveError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite energy/derivative evaluation; identifies the offending point.
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(const std::string& what, int point_index)
      : std::runtime_error(what), point_index_(point_index) {}
  int point_index() const { return point_index_; }

 private:
  int point_index_;
};

/// An assembled Hessian whose asymmetry defect exceeds round-off tolerance;
/// signals an inconsistent model implementation.
class ModelConsistencyError : public std::runtime_error {
 public:
  explicit ModelConsistencyError(const std::string& what) : std::runtime_error(what) {}
};

/// The prefactor integral of a concentration bound diverges (the initial law
/// lacks the required Gaussian moment).
class PrefactorDivergence : public std::runtime_error {
 public:
  explicit PrefactorDivergence(const std::string& what) : std::runtime_error(what) {}
};

/// MALA step-size adaptation failed to land in the acceptable window.
class TuningError : public std::runtime_error {
 public:
  TuningError(const std::string& what, double acceptance)
      : std::runtime_error(what), acceptance_(acceptance) {}
  double acceptance() const { return acceptance_; }

 private:
  double acceptance_;
};

/// Ill-conditioned Gram matrix in the Rayleigh-quotient gap estimator.
class DictionaryError : public std::runtime_error {
 public:
  explicit DictionaryError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mflab
