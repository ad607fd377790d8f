#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>

#include "mflab/errors.hpp"

namespace mflab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// A point x = (x^1, ..., x^N) in R^{Nd} together with its empirical measure,
/// which puts weight exactly 1/N on each particle. Particles are stored as
/// columns of a d x N matrix so that the flattened view groups coordinates by
/// particle: flat()[i*d + k] = coordinate k of particle i.
class ParticleConfiguration {
 public:
  ParticleConfiguration(int n_particles, int dim)
      : points_(Mat::Zero(check_dims(n_particles, dim).second, n_particles)) {}

  /// Takes a d x N matrix of particle columns. Rejects non-finite entries.
  static ParticleConfiguration from_points(Mat points) {
    ParticleConfiguration cfg(static_cast<int>(points.cols()), static_cast<int>(points.rows()));
    if (!points.allFinite()) {
      for (int i = 0; i < points.cols(); ++i) {
        if (!points.col(i).allFinite()) {
          throw EvaluationError("non-finite coordinate in particle " + std::to_string(i), i);
        }
      }
    }
    cfg.points_ = std::move(points);
    return cfg;
  }

  int n_particles() const { return static_cast<int>(points_.cols()); }
  int dim() const { return static_cast<int>(points_.rows()); }

  const Mat& points() const { return points_; }
  Mat& points() { return points_; }

  auto point(int i) const { return points_.col(i); }
  auto point(int i) { return points_.col(i); }

  /// Mean of the empirical measure.
  Vec mean() const { return points_.rowwise().mean(); }

  /// Flattened view in particle-major order (length N*d).
  Eigen::Map<const Vec> flat() const {
    return Eigen::Map<const Vec>(points_.data(), points_.size());
  }

  bool all_finite() const { return points_.allFinite(); }

  /// Index of the first particle with a non-finite coordinate, or -1.
  int first_non_finite() const {
    for (int i = 0; i < points_.cols(); ++i)
      if (!points_.col(i).allFinite()) return i;
    return -1;
  }

 private:
  static std::pair<int, int> check_dims(int n, int d) {
    if (n < 1 || d < 1)
      throw ConfigError("particle configuration requires N >= 1 and d >= 1, got N=" +
                        std::to_string(n) + " d=" + std::to_string(d));
    return {n, d};
  }

  Mat points_;  // d x N
};

}  // namespace mflab
