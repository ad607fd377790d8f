#include <catch2/catch.hpp>

#include <cmath>

#include "mflab/rng.hpp"
#include "mflab/test_functions.hpp"

using namespace mflab;

namespace {

Vec random_point(int k, std::uint64_t seed) {
  Vec x(k);
  const rng::Key key(seed, rng::Stream::general);
  for (int i = 0; i < k; ++i) x[i] = rng::standard_normal(key.with(static_cast<std::uint64_t>(i)));
  return x;
}

double fd_partial(const TestFunction& f, Vec x, int k, double h = 1e-5) {
  const double orig = x[k];
  x[k] = orig + h;
  const double up = f.value(x);
  x[k] = orig - h;
  const double dn = f.value(x);
  return (up - dn) / (2.0 * h);
}

double fd_second(const TestFunction& f, Vec x, int k, int l, double h = 1e-4) {
  if (k == l) {
    const double mid = f.value(x);
    const double orig = x[k];
    x[k] = orig + h;
    const double up = f.value(x);
    x[k] = orig - h;
    const double dn = f.value(x);
    return (up - 2.0 * mid + dn) / (h * h);
  }
  Vec y = x;
  y[k] += h;
  y[l] += h;
  const double pp = f.value(y);
  y = x;
  y[k] += h;
  y[l] -= h;
  const double pm = f.value(y);
  y = x;
  y[k] -= h;
  y[l] += h;
  const double mp = f.value(y);
  y = x;
  y[k] -= h;
  y[l] -= h;
  const double mm = f.value(y);
  return (pp - pm - mp + mm) / (4.0 * h * h);
}

void check_derivatives(const TestFunction& f, const Vec& x) {
  const int k = static_cast<int>(x.size());
  Vec g;
  f.gradient_into(x, g);
  double scale = std::max(1.0, g.norm());
  for (int i = 0; i < k; ++i)
    REQUIRE(std::abs(g[i] - fd_partial(f, x, i)) / scale < 1e-6);

  const Mat h = f.hessian(x);
  REQUIRE((h - h.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  double lap_fd = 0.0;
  for (int i = 0; i < k; ++i) lap_fd += fd_second(f, x, i, i);
  REQUIRE(std::abs(f.laplacian(x) - lap_fd) < 1e-5 * std::max(1.0, std::abs(lap_fd)));
  REQUIRE(f.laplacian(x) == Approx(h.trace()).margin(1e-10));
  REQUIRE(f.hessian_frob_sq(x) == Approx(h.squaredNorm()).margin(1e-10));

  const Vec v = random_point(k, 777);
  REQUIRE(f.hessian_quad(x, v) == Approx(v.dot(h * v)).margin(1e-10));

  // spot-check two Hessian entries against finite differences
  REQUIRE(std::abs(h(0, k - 1) - fd_second(f, x, 0, k - 1)) <
          1e-4 * std::max(1.0, std::abs(h(0, k - 1))));
  REQUIRE(std::abs(h(0, 0) - fd_second(f, x, 0, 0)) <
          1e-4 * std::max(1.0, std::abs(h(0, 0))));
}

}  // namespace

TEST_CASE("analytic derivatives of every dictionary entry match finite differences") {
  const auto dict = default_dictionary(3, 2);  // R^6
  REQUIRE(dict.size() >= 15);
  for (const auto& f : dict) {
    for (int trial = 0; trial < 5; ++trial) {
      check_derivatives(*f, random_point(6, 1000 + 10 * trial));
    }
  }
}

TEST_CASE("positive clip wrapper") {
  const auto inner = make_coordinate(0);
  const PositiveClipFunction f(inner, 1e-8);
  SECTION("strictly positive everywhere") {
    Vec x = Vec::Zero(3);
    REQUIRE(f.value(x) >= 1e-8);
    x[0] = -5.0;
    REQUIRE(f.value(x) == Approx(5.0).epsilon(1e-10));
  }
  SECTION("derivatives consistent") {
    for (int trial = 0; trial < 5; ++trial) check_derivatives(f, random_point(3, 50 + trial));
  }
}

TEST_CASE("clipped wrapper keeps values and Lipschitz constants bounded") {
  const auto inner = make_monomial("x0^2", 1.0, {{0, 2}});
  const ClippedFunction f(inner, 5.0);
  Vec x = Vec::Zero(2);
  x[0] = 100.0;
  REQUIRE(std::abs(f.value(x)) <= 5.0);
  REQUIRE(f.lipschitz_bound() == inner->lipschitz_bound());

  const auto coord = make_clipped(make_coordinate(0), 30.0);
  Vec g;
  for (int trial = 0; trial < 20; ++trial) {
    const Vec y = 3.0 * random_point(2, 90 + trial);
    coord->gradient_into(y, g);
    REQUIRE(g.norm() <= 1.0 + 1e-12);
  }
}

TEST_CASE("radial gaussian lipschitz bound is attained at radius s") {
  const RadialGaussianFunction f(2, 2.0);
  double max_grad = 0.0;
  Vec g;
  for (int trial = 0; trial < 200; ++trial) {
    const Vec x = 3.0 * random_point(2, 300 + trial);
    f.gradient_into(x, g);
    max_grad = std::max(max_grad, g.norm());
  }
  REQUIRE(max_grad <= *f.lipschitz_bound() + 1e-12);
  Vec at_s = Vec::Zero(2);
  at_s[0] = 2.0;
  f.gradient_into(at_s, g);
  REQUIRE(g.norm() == Approx(*f.lipschitz_bound()).epsilon(1e-12));
}

TEST_CASE("polynomial validation") {
  REQUIRE_THROWS_AS(
      PolynomialFunction("bad", {{1.0, {{0, 1}, {0, 1}}}}),
      ConfigError);
  REQUIRE_THROWS_AS(PolynomialFunction("bad", {{1.0, {{-1, 1}}}}), ConfigError);
  // constant polynomial: empty factor list
  const PolynomialFunction c("const", {{2.5, {}}});
  const Vec x = random_point(3, 400);
  REQUIRE(c.value(x) == 2.5);
  Vec g;
  c.gradient_into(x, g);
  REQUIRE(g.norm() == 0.0);
  REQUIRE(c.laplacian(x) == 0.0);
}

TEST_CASE("dictionary adapts to small configuration spaces") {
  const auto small = default_dictionary(2, 1);
  REQUIRE(small.size() >= 5);
  for (const auto& f : small) {
    const Vec x = random_point(2, 500);
    REQUIRE(std::isfinite(f->value(x)));
  }
  const auto capped = default_dictionary(64, 1, 20);
  REQUIRE(capped.size() == 20);
}
