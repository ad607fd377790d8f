#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace mflab::rng {

// Counter-based generation: every draw is a pure function of (seed, stream,
// indices...). Parallel workers therefore produce identical streams no matter
// how work is partitioned.

enum class Stream : std::uint64_t {
  simulation = 1,
  initial = 2,
  gibbs = 3,
  mala_proposal = 4,
  mala_accept = 5,
  trials = 6,
  general = 7,
};

inline constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  // splitmix64 finalizer
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t chain(std::uint64_t h, std::uint64_t k) noexcept {
  return mix64(h ^ (k + 0x632BE59BD9B4E019ull));
}

struct Key {
  std::uint64_t state;

  constexpr Key(std::uint64_t seed, Stream stream) noexcept
      : state(chain(mix64(seed), static_cast<std::uint64_t>(stream))) {}

  constexpr Key with(std::uint64_t k) const noexcept {
    Key out = *this;
    out.state = chain(out.state, k);
    return out;
  }
  constexpr Key with(std::uint64_t a, std::uint64_t b) const noexcept { return with(a).with(b); }
  constexpr Key with(std::uint64_t a, std::uint64_t b, std::uint64_t c) const noexcept {
    return with(a).with(b).with(c);
  }
};

/// Uniform draw in the open interval (0,1).
inline double uniform01(Key key) noexcept {
  const std::uint64_t bits = mix64(key.state ^ 0xA5A5A5A5A5A5A5A5ull);
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on two derived uniforms.
inline double standard_normal(Key key) noexcept {
  const std::uint64_t h1 = mix64(key.state ^ 0x0DDB1A5E5BAD5EEDull);
  const std::uint64_t h2 = mix64(key.state ^ 0x2545F4914F6CDD1Dull);
  const double u1 = (static_cast<double>(h1 >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = (static_cast<double>(h2 >> 11) + 0.5) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace mflab::rng
