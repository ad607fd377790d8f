#include <catch2/catch.hpp>

#include <cmath>
#include <memory>

#include "mflab/constants.hpp"
#include "mflab/estimators.hpp"

using namespace mflab;

namespace {

// Test-only exponential of a linear function, exp(theta * x0); all Gaussian
// moments of it have closed MGF forms.
class ExpLinear final : public TestFunction {
 public:
  explicit ExpLinear(double theta) : theta_(theta) {}
  std::string name() const override { return "exp_linear"; }
  double value(const Vec& x) const override { return std::exp(theta_ * x[0]); }
  void gradient_into(const Vec& x, Vec& out) const override {
    out.setZero(x.size());
    out[0] = theta_ * value(x);
  }
  double laplacian(const Vec& x) const override { return theta_ * theta_ * value(x); }
  double hessian_frob_sq(const Vec& x) const override {
    const double h = theta_ * theta_ * value(x);
    return h * h;
  }
  double hessian_quad(const Vec& x, const Vec& g) const override {
    return theta_ * theta_ * value(x) * g[0] * g[0];
  }
  Mat hessian(const Vec& x) const override {
    Mat h = Mat::Zero(x.size(), x.size());
    h(0, 0) = theta_ * theta_ * value(x);
    return h;
  }

 private:
  double theta_;
};

// 8-point Gauss-Hermite expectation E[g(X)], X ~ N(0,1); exact for
// polynomials of degree <= 15. Oracle independent of the estimators.
template <typename G>
double gauss_hermite(G g) {
  static const double nodes[8] = {-2.930637420257244,  -1.981656756695843,
                                  -1.1571937124467802, -0.3811869902073221,
                                  0.3811869902073221,  1.1571937124467802,
                                  1.981656756695843,   2.930637420257244};
  static const double weights[8] = {1.9960407221136783e-04, 1.7077983007413467e-02,
                                    2.0780232581489183e-01, 6.6114701255824149e-01,
                                    6.6114701255824149e-01, 2.0780232581489183e-01,
                                    1.7077983007413467e-02, 1.9960407221136783e-04};
  double acc = 0.0;
  for (int i = 0; i < 8; ++i) acc += weights[i] * g(std::sqrt(2.0) * nodes[i]);
  return acc / std::sqrt(std::numbers::pi);
}

}  // namespace

TEST_CASE("gamma2 identity") {
  SECTION("constant function gives zero on both sides") {
    GaussianMeanField model(1.0, 0.5);
    const auto src = gibbs_source(model, 4, 1, 2000, 3);
    const auto f = std::make_shared<PolynomialFunction>(
        "const", std::vector<PolynomialFunction::Term>{{3.0, {}}});
    const auto v = gamma2_identity_check(model, src, f);
    REQUIRE(v.lhs == 0.0);
    REQUIRE(v.rhs == 0.0);
    REQUIRE(v.holds);
  }
  SECTION("linear function: both sides equal the constant v^T U'' v") {
    GaussianMeanField model(1.0, 1.0);
    const auto src = gibbs_source(model, 2, 1, 100000, 5);
    const auto f = make_coordinate(0);
    const auto v = gamma2_identity_check(model, src, f);
    // closed form: Gamma_2 = P_00 = a + lambda/N = 1.5, and E[(Lf)^2] = (P Sigma P)_00 = P_00
    REQUIRE(v.rhs == Approx(1.5).margin(1e-12));
    REQUIRE(v.holds);
    REQUIRE(std::abs(v.lhs - 1.5) < 4.0 * std::max(v.lhs_stderr, 1e-6));
  }
  SECTION("quadratic function on the product measure") {
    GaussianMeanField model(1.0, 0.0);
    const auto src = gibbs_source(model, 2, 1, 200000, 7);
    const auto f = make_monomial("x0^2", 1.0, {{0, 2}});
    // oracle: Gauss-Hermite moment algebra, L f = 2 - 2 x0^2 for a = 1
    const double lhs_exact = gauss_hermite([](double x) {
      const double lf = 2.0 - 2.0 * x * x;
      return lf * lf;
    });
    const double rhs_exact =
        gauss_hermite([](double x) { return 4.0 + 4.0 * x * x; });
    REQUIRE(lhs_exact == Approx(8.0).epsilon(1e-12));
    REQUIRE(rhs_exact == Approx(8.0).epsilon(1e-12));
    const auto v = gamma2_identity_check(model, src, f);
    REQUIRE(v.holds);
    REQUIRE(std::abs(v.lhs - lhs_exact) < 4.0 * v.lhs_stderr);
    REQUIRE(std::abs(v.rhs - rhs_exact) < 4.0 * v.rhs_stderr);
  }
}

TEST_CASE("second-order poincare check") {
  GaussianMeanField model(1.0, 0.5);
  const int n = 64;
  const auto src = gibbs_source(model, n, 1, 100000, 11);
  SECTION("coordinate function has closed-form sides") {
    const double rho2 = 1.0 - 0.5 / n;
    const auto v = second_order_poincare_check(model, src, make_coordinate(0), rho2);
    // closed forms through the precision matrix: E|grad f|^2 = 1,
    // E[(Lf)^2] = P_00 = a + lambda/N
    REQUIRE(v.lhs == Approx(rho2).margin(1e-12));
    REQUIRE(std::abs(v.rhs - (1.0 + 0.5 / n)) < 4.0 * v.rhs_stderr);
    REQUIRE(v.holds);
  }
  SECTION("small dictionary sweep holds") {
    const auto small_src = gibbs_source(model, 8, 1, 50000, 13);
    const double rho2 = 1.0 - 0.5 / 8;
    for (const auto& f : default_dictionary(8, 1, 12)) {
      const auto v = second_order_poincare_check(model, small_src, f, rho2);
      INFO(f->name());
      REQUIRE(v.holds);
    }
  }
}

TEST_CASE("defective lsi phi-form check") {
  GaussianMeanField model(1.0, 0.5);
  SECTION("constant one: lhs zero, rhs the defect term") {
    const auto src = gibbs_source(model, 4, 1, 5000, 17);
    const auto f = std::make_shared<PolynomialFunction>(
        "one", std::vector<PolynomialFunction::Term>{{1.0, {}}});
    const double rho_prime = 0.4, delta = 6.5;
    const auto v = defective_lsi_check(model, src, f, rho_prime, delta);
    REQUIRE(v.lhs == Approx(0.0).margin(1e-12));
    REQUIRE(v.rhs == Approx(delta / (2.0 * rho_prime)).epsilon(1e-8));
    REQUIRE(v.holds);
  }
  SECTION("exponential of a small linear function matches the MGF oracle") {
    const int n = 2;
    const auto src = gibbs_source(model, n, 1, 400000, 19);
    const double theta = 0.2;
    const auto f = std::make_shared<ExpLinear>(theta);
    // oracle: Gaussian MGF identities with Sigma_00 of the Gibbs covariance
    const double s00 = gibbs_gaussian(1.0, 0.5, n, 1).cov()(0, 0);
    const double m2 = std::exp(2.0 * theta * theta * s00);
    const double lhs_exact = 2.0 * theta * theta * s00 * m2;
    const double grad2_exact = theta * theta * m2;
    const double rho_prime = 0.3, delta = 5.0;
    const double rhs_exact = (2.0 / rho_prime) * grad2_exact + (delta / (2.0 * rho_prime)) * m2;
    const auto v = defective_lsi_check(model, src, f, rho_prime, delta);
    REQUIRE(std::abs(v.lhs - lhs_exact) < 5.0 * std::max(v.lhs_stderr, 1e-9));
    REQUIRE(std::abs(v.rhs - rhs_exact) < 5.0 * std::max(v.rhs_stderr, 1e-9));
    REQUIRE(v.holds);
  }
  SECTION("dictionary sweep holds") {
    // N = 16 keeps rho' positive for alpha = 1/2
    const auto src = gibbs_source(model, 16, 1, 50000, 23);
    ConstantsInput in{1, 16, 0.5, 0.5, 1.0};
    const auto def = defective_constants(in);
    REQUIRE(def.valid);
    for (const auto& f : default_dictionary(16, 1, 12)) {
      const auto v = defective_lsi_check(model, src, f, def.rho_prime, def.delta);
      INFO(f->name());
      REQUIRE(v.holds);
    }
  }
}

TEST_CASE("inequality suite shares one sample pass") {
  GaussianMeanField model(1.0, 0.5);
  const auto src = gibbs_source(model, 8, 1, 20000, 29);
  const auto dict = default_dictionary(8, 1, 6);
  const auto suite = inequality_suite(model, src, dict, 1.0 - 0.5 / 8, 0.25, 6.5);
  REQUIRE(suite.gamma2.size() == dict.size());
  REQUIRE(suite.poincare.size() == dict.size());
  REQUIRE(suite.dlsi.size() == dict.size());
  const auto single = gamma2_identity_check(model, src, dict[0]);
  REQUIRE(suite.gamma2[0].lhs == Approx(single.lhs).epsilon(1e-12));
  REQUIRE(suite.gamma2[0].rhs == Approx(single.rhs).epsilon(1e-12));
}

TEST_CASE("verdict stderr shrinks like the square root of the sample count") {
  GaussianMeanField model(1.0, 0.5);
  const auto f = make_monomial("x0^2", 1.0, {{0, 2}});
  const auto small = gibbs_source(model, 8, 1, 20000, 31);
  const auto large = gibbs_source(model, 8, 1, 80000, 31);
  const auto vs = gamma2_identity_check(model, small, f);
  const auto vl = gamma2_identity_check(model, large, f);
  const double ratio = vs.lhs_stderr / vl.lhs_stderr;
  REQUIRE(ratio > 1.0);
  REQUIRE(ratio < 4.0);
}

TEST_CASE("rayleigh gap estimation") {
  SECTION("product standard gaussian with coordinate dictionary") {
    GaussianMeanField model(1.0, 0.0);
    const auto src = gibbs_source(model, 4, 1, 100000, 37);
    std::vector<TestFunctionPtr> dict;
    for (int k = 0; k < 4; ++k) dict.push_back(make_coordinate(k));
    const auto gap = rayleigh_gap(src, dict);
    REQUIRE(gap.value == Approx(1.0).epsilon(0.03));
    REQUIRE(gap.value >= 1.0 - 3.0 * gap.std_err - 0.03);
  }
  SECTION("interacting pair attains the gap on the difference mode") {
    GaussianMeanField model(1.0, 1.0);
    const auto src = gibbs_source(model, 2, 1, 100000, 41);
    const auto gap = rayleigh_gap(src, {make_coordinate(0), make_coordinate(1)});
    REQUIRE(gap.value == Approx(1.0).epsilon(0.03));
  }
  SECTION("larger dictionaries never increase the estimate") {
    GaussianMeanField model(1.0, 0.5);
    const auto src = gibbs_source(model, 4, 1, 50000, 43);
    std::vector<TestFunctionPtr> base = {make_coordinate(0), make_coordinate(1)};
    std::vector<TestFunctionPtr> super = base;
    super.push_back(make_coordinate(2));
    super.push_back(make_monomial("x0^2", 1.0, {{0, 2}}));
    super.push_back(make_monomial("x0*x1", 1.0, {{0, 1}, {1, 1}}));
    const auto g1 = rayleigh_gap(src, base);
    const auto g2 = rayleigh_gap(src, super);
    REQUIRE(g2.value <= g1.value + 1e-10);
  }
  SECTION("degenerate dictionary raises a dictionary error") {
    GaussianMeanField model(1.0, 0.0);
    const auto src = gibbs_source(model, 2, 1, 20000, 47);
    REQUIRE_THROWS_AS(rayleigh_gap(src, {make_coordinate(0), make_coordinate(0)}),
                      DictionaryError);
  }
  SECTION("too few samples rejected") {
    GaussianMeanField model(1.0, 0.0);
    const auto src = gibbs_source(model, 2, 1, 500, 53);
    REQUIRE_THROWS_AS(rayleigh_gap(src, {make_coordinate(0), make_coordinate(1)}),
                      ConfigError);
  }
}

TEST_CASE("entropy decay rate fitting") {
  const double a = 1.0, lambda = 0.5;
  const int n = 2;
  const Mat p = gibbs_precision(a, lambda, n, 1);
  const Mat stat_cov = gibbs_gaussian(a, lambda, n, 1).cov();
  const std::vector<double> times = {0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};

  SECTION("mean displaced along the minimal mode decays at 2a") {
    Vec mean(2);
    mean << 1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0);
    const auto fit = entropy_decay_rate(p, GaussianMeasure(mean, stat_cov), times);
    REQUIRE(fit.rate == Approx(2.0 * a).epsilon(0.01));
  }
  SECTION("mean displaced along the uniform mode decays at 2(a+lambda)") {
    Vec mean(2);
    mean << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    const auto fit = entropy_decay_rate(p, GaussianMeasure(mean, stat_cov), times);
    REQUIRE(fit.rate == Approx(2.0 * (a + lambda)).epsilon(0.01));
  }
  SECTION("fitted rate dominates twice the pipeline constant") {
    const int big_n = 8;
    ConstantsInput in{1, big_n, 0.5, 0.25, 1.0};
    const double rho_n = lsi_constant_pipeline(in);
    const Mat pp = gibbs_precision(1.0, 0.25, big_n, 1);
    const Mat sc = gibbs_gaussian(1.0, 0.25, big_n, 1).cov();
    for (int trial = 0; trial < 20; ++trial) {
      Vec mean(big_n);
      const rng::Key key(600 + trial, rng::Stream::general);
      for (int i = 0; i < big_n; ++i)
        mean[i] = rng::standard_normal(key.with(static_cast<std::uint64_t>(i)));
      Mat cov = sc;
      cov *= 0.5 + rng::uniform01(key.with(99));
      const auto fit = entropy_decay_rate(pp, GaussianMeasure(mean, cov), times);
      REQUIRE(fit.rate >= 2.0 * rho_n - 1e-9);
    }
  }
  SECTION("entropy below threshold truncates the grid") {
    Vec mean(2);
    mean << 1e-9, -1e-9;
    REQUIRE_THROWS_AS(
        entropy_decay_rate(p, GaussianMeasure(mean, stat_cov), {50.0, 60.0, 70.0}),
        ConfigError);
  }
}

TEST_CASE("inconclusive verdicts are flagged") {
  GaussianMeanField model(1.0, 0.5);
  const auto src = gibbs_source(model, 8, 1, 3, 59);  // absurdly few samples
  REQUIRE_THROWS_AS(gamma2_identity_check(model, src, make_coordinate(0)),
                    InconclusiveError);
}
