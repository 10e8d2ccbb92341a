#include <doctest.h>

#include <cmath>
#include <sstream>

#include "retcap/errors.hpp"
#include "retcap/model.hpp"

using namespace retcap;

TEST_CASE("derived constants at the base parameters") {
  const ModelParams p;
  const auto d = derive_constants(p);
  CHECK(d.kappa == doctest::Approx(0.1 * 0.1 / (2 * 0.09)).epsilon(1e-14));
  CHECK(d.rho == doctest::Approx(d.kappa).epsilon(1e-14));
  CHECK(d.merton_fraction == doctest::Approx(0.1 / (0.5 * 0.09)).epsilon(1e-14));
  CHECK(d.w_L == doctest::Approx(315000.0).epsilon(1e-14));
  CHECK(d.beta1 == doctest::Approx(7.98936e-7).epsilon(1e-5));
  CHECK(d.beta2 == doctest::Approx(-3.97354e-6).epsilon(1e-5));
  CHECK(1.0 / d.assumption_a_slack == doctest::Approx(69.2308).epsilon(1e-5));
}

TEST_CASE("beta roots satisfy the quadratic and Vieta") {
  for (double delta : {0.0, 0.01, 0.03}) {
    for (double L : {1e5, 7e5, 5e6}) {
      ModelParams p;
      p.delta = delta;
      p.L = L;
      const auto d = derive_constants(p);
      const double s2 = p.sigma * p.sigma;
      const double rate = p.lambda + p.delta;
      const double prod = -2.0 * rate / (s2 * L * L);
      const double sum = -2.0 * p.mu / (s2 * L);
      CHECK(std::abs(d.beta1 * d.beta2 - prod) <= 1e-12 * std::abs(prod));
      CHECK(std::abs(d.beta1 + d.beta2 - sum) <= 1e-12 * std::abs(sum));
      for (double b : {d.beta1, d.beta2}) {
        const double q = 0.5 * s2 * L * L * b * b + L * p.mu * b - rate;
        CHECK(std::abs(q) <= 1e-12 * rate);
      }
      CHECK(d.beta1 > 0.0);
      CHECK(d.beta2 < 0.0);
    }
  }
}

TEST_CASE("derive_constants is pure") {
  const ModelParams p = reference_params();
  const auto a = derive_constants(p);
  const auto b = derive_constants(p);
  CHECK(a.beta1 == b.beta1);
  CHECK(a.beta2 == b.beta2);
  CHECK(a.assumption_a_slack == b.assumption_a_slack);
}

TEST_CASE("assumption A") {
  ModelParams p;
  CHECK(check_assumption_a(p).holds);
  p.mu = 0.3;  // rho = 0.5 > lambda
  CHECK_FALSE(check_assumption_a(p).holds);
  p.c = 1.0;   // withdrawals restore finiteness
  CHECK(check_assumption_a(p).holds);
}

TEST_CASE("validation rejects out-of-domain fields") {
  const auto bad = [](auto mutate) {
    ModelParams p;
    mutate(p);
    return p;
  };
  CHECK_THROWS_AS(bad([](ModelParams& p) { p.R = 1.0; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](ModelParams& p) { p.R = 0.0; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](ModelParams& p) { p.sigma = 0.0; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](ModelParams& p) { p.lambda = -0.1; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](ModelParams& p) { p.L = 0.0; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](ModelParams& p) { p.alpha = 1.0; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](ModelParams& p) { p.mu = NAN; }).validate(), ValidationError);
  CHECK_THROWS_AS(derive_constants(bad([](ModelParams& p) { p.W0 = 0.0; })), ValidationError);
  CHECK_NOTHROW(ModelParams{}.validate());
}

TEST_CASE("crra utility is increasing and concave") {
  const double R = 0.5;
  CHECK(crra_utility(0.0, R) == 0.0);
  CHECK(crra_utility(4.0, R) == doctest::Approx(4.0));
  double prev = crra_utility(1.0, R);
  for (double W = 2.0; W < 1e7; W *= 1.7) {
    const double u = crra_utility(W, R);
    const double h = 1e-3 * W;
    const double second = crra_utility(W + h, R) - 2 * u + crra_utility(W - h, R);
    CHECK(u > prev);
    CHECK(second < 0.0);
    prev = u;
  }
  CHECK_THROWS_AS(crra_utility(-1.0, R), ValidationError);
  CHECK_THROWS_AS(crra_utility(1.0, 1.0), ValidationError);
}

TEST_CASE("J multiplier") {
  ModelParams p;
  p.K = 2.0;
  p.alpha = 0.75;
  p.c = 0.04;
  const double expected = 0.07 * 2.0 * std::sqrt(0.25) + std::sqrt(0.04);
  CHECK(j_multiplier(p) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(j_from_v(3.0, p) == doctest::Approx(3.0 * expected).epsilon(1e-14));
}

TEST_CASE("parameter files") {
  std::istringstream in("# comment\n mu = 0.12 \n\nL=350000 # inline\nR=0.4\n");
  const auto p = parse_params(in);
  CHECK(p.mu == 0.12);
  CHECK(p.L == 350000.0);
  CHECK(p.R == 0.4);
  CHECK(p.sigma == 0.3);

  std::istringstream unknown("mu=0.1\ngamma=2\n");
  CHECK_THROWS_AS(parse_params(unknown), ValidationError);
  std::istringstream malformed("mu 0.1\n");
  CHECK_THROWS_AS(parse_params(malformed), ValidationError);
  std::istringstream badnum("mu=0.1x\n");
  CHECK_THROWS_AS(parse_params(badnum), ValidationError);
  CHECK_THROWS_AS(load_params("/nonexistent/file.params"), ValidationError);

  ModelParams q;
  CHECK(set_param(q, "delta", 0.02));
  CHECK(q.delta == 0.02);
  CHECK_FALSE(set_param(q, "beta", 1.0));
}

TEST_CASE("reference parameters") {
  const auto p = reference_params();
  CHECK(p.delta == kReferenceDelta);
  CHECK(p.L == 700000.0);
  CHECK(p.W0 == 1e6);
}
