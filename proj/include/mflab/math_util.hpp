#pragma once

#include <cmath>
#include <cstdint>

namespace mflab {

/// Neumaier-compensated accumulator. Keeps long reductions independent of
/// evaluation order to well below 1e-12 relative.
class KahanSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Streaming mean/stderr over one scalar quantity.
class MomentAccumulator {
 public:
  void add(double x) noexcept {
    sum_.add(x);
    sumsq_.add(x * x);
    ++n_;
  }
  std::int64_t count() const noexcept { return n_; }
  double mean() const noexcept { return n_ > 0 ? sum_.value() / static_cast<double>(n_) : 0.0; }
  double variance() const noexcept {
    if (n_ < 2) return 0.0;
    const double m = mean();
    const double v = sumsq_.value() / static_cast<double>(n_) - m * m;
    return v > 0.0 ? v : 0.0;
  }
  double stderr_of_mean() const noexcept {
    return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }

 private:
  KahanSum sum_;
  KahanSum sumsq_;
  std::int64_t n_ = 0;
};

struct WilsonInterval {
  double low;
  double high;
};

/// Two-sided 99% Wilson score interval for a binomial proportion.
inline WilsonInterval wilson99(std::int64_t successes, std::int64_t n) {
  constexpr double z = 2.5758293035489004;  // Phi^{-1}(0.995)
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  double lo = center - half;
  double hi = center + half;
  if (lo < 0.0) lo = 0.0;
  if (hi > 1.0) hi = 1.0;
  return {lo, hi};
}

/// Upper-tail probability of the standard normal.
inline double normal_upper_tail(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

}  // namespace mflab
