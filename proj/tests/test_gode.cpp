#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "retcap/closedform.hpp"
#include "retcap/errors.hpp"
#include "retcap/gode.hpp"

using namespace retcap;
using fixtures::rel;

TEST_CASE("equation forms coincide at c = 0") {
  const ModelParams p;
  for (double g : {1e-4, 3e-3, 0.2}) {
    for (double G : {1e3, 5e5}) {
      for (double Gp : {1e5, 3e8}) {
        const double a = g_ode_rhs(g, G, Gp, p, GForm::reduced);
        CHECK(rel(g_ode_rhs(g, G, Gp, p, GForm::general), a) <= 1e-14);
        CHECK(rel(g_ode_rhs(g, G, Gp, p, GForm::general_proof), a) <= 1e-14);
      }
    }
  }
  ModelParams q;
  q.c = 0.04;
  const double gen = g_ode_rhs(0.01, 4e5, 2e7, q, GForm::general);
  CHECK(gen != g_ode_rhs(0.01, 4e5, 2e7, q, GForm::reduced));
  CHECK(rel(g_ode_rhs(0.01, 4e5, 2e7, q, GForm::general_proof), gen) <= 1e-13);
  CHECK_THROWS_AS(g_ode_rhs(0.0, 1.0, 1.0, p), ValidationError);
  CHECK_THROWS_AS(g_ode_rhs(1.0, -1.0, 1.0, p), ValidationError);
}

TEST_CASE("the Merton line solves the equation") {
  const ModelParams p;
  const double slope = std::pow(merton_value(p).coefficient_a, 1.0 / p.R);
  for (double g : {1e-6, 1e-3, 1.0})
    CHECK(std::abs(g_ode_rhs(g, slope * g, slope, p)) <= 1e-12 * slope / g);
  // below the line G bends down, above it G bends up
  CHECK(g_ode_rhs(1e-3, 0.9 * slope * 1e-3, slope, p) < 0.0);
  CHECK(g_ode_rhs(1e-3, 1.1 * slope * 1e-3, slope, p) > 0.0);
}

TEST_CASE("log-variable right-hand side matches the G equation") {
  const ModelParams p;
  for (double g : {2e-4, 5e-3}) {
    for (double G : {2e5, 6e5}) {
      const double Gp = 0.6 * G / g;
      const double Gpp = g_ode_rhs(g, G, Gp, p);
      const double e = g * Gp / G;
      const double expected = e + g * g * Gpp / G - e * e;
      const auto r = g_ode_log_rhs(std::log(G / g), e - 1.0, p);
      CHECK(r[0] == doctest::Approx(e - 1.0).epsilon(1e-15));
      CHECK(rel(r[1], expected) <= 1e-10);
    }
  }
}

TEST_CASE("manifold leaves the saddle monotonically") {
  const ModelParams p;
  const GManifold m(p);
  const double a = merton_value(p).coefficient_a;
  CHECK(rel(m.y_saddle(), std::log(a) / p.R) <= 1e-13);
  CHECK(m.unstable_rate() > 0.0);
  const auto& pts = m.points();
  REQUIRE(pts.size() > 100);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    CHECK(pts[i].y < pts[i - 1].y);
    CHECK(pts[i].v > -1.0);
    CHECK(pts[i].v < 0.0);
    CHECK(pts[i].phi > pts[i - 1].phi);
  }
  CHECK(pts.back().v <= m.options().stop_slope);
  const double y = 0.5 * (m.y_saddle() + m.y_min());
  CHECK(m.at(m.t_for_y(y)).y == doctest::Approx(y).epsilon(1e-12));
  CHECK_THROWS_AS(m.t_for_y(m.y_saddle() + 1.0), SolverError);
  CHECK_THROWS_AS(m.at(m.t_max() + 1.0), SolverError);
}

TEST_CASE("manifold rejects unsupported parameters") {
  ModelParams p;
  p.c = 0.02;
  CHECK_THROWS_AS(GManifold{p}, ValidationError);
  ModelParams q;
  q.mu = 0.3;
  CHECK_THROWS_AS(GManifold{q}, ValidationError);
}

TEST_CASE("anchored G at the free boundary") {
  const auto& fb = fixtures::base_solution();
  const auto& p = fb.params;
  const auto& sol = *fb.gsol;
  const double w_L = derive_constants(p).w_L;
  CHECK(rel(sol.G(fb.g_star), fb.w_star) <= 1e-12);
  CHECK(rel(sol.Gp(fb.g_star), w_L / fb.g_star) <= 1e-8);
  CHECK(sol.grid_g.back() == fb.g_star);
  CHECK(sol.interpolation_order == 3);
  // Merton asymptote at the origin
  const double slope = std::pow(merton_value(p).coefficient_a, 1.0 / p.R);
  const double g0 = sol.grid_g.front();
  CHECK(rel(sol.G(g0) / g0, slope) <= 1e-6);
  CHECK(sol.G(g0) / g0 < slope);
  // strictly increasing, demand below L inside
  for (std::size_t i = 1; i < sol.grid_g.size(); ++i) {
    CHECK(sol.grid_G[i] > sol.grid_G[i - 1]);
    CHECK(sol.grid_Gp[i] > 0.0);
  }
  for (std::size_t i = 0; i + 1 < sol.grid_g.size(); i += 7)
    CHECK(derive_constants(p).merton_fraction * sol.grid_g[i] * sol.grid_Gp[i] < p.L);
}

TEST_CASE("interpolated slopes agree with the equation") {
  const auto& fb = fixtures::base_solution();
  const auto& sol = *fb.gsol;
  for (double r : {1e-5, 1e-3, 0.05, 0.5, 0.97}) {
    const double g = fb.g_star * r;
    const double h = 1e-5 * g;
    CHECK(rel(sol.Gp(g), (sol.G(g + h) - sol.G(g - h)) / (2 * h)) <= 1e-7);
    CHECK(rel(sol.Gpp(g), g_ode_rhs(g, sol.G(g), sol.Gp(g), fb.params)) <= 1e-6);
    CHECK(rel(sol.elasticity(g), g * sol.Gp(g) / sol.G(g)) <= 1e-13);
  }
}

TEST_CASE("inverse of G") {
  const auto& sol = *fixtures::base_solution().gsol;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(std::log(sol.grid_G.front()), std::log(sol.grid_G.back()));
  for (int i = 0; i < 500; ++i) {
    const double W = std::exp(u(rng));
    CHECK(std::abs(sol.G(sol.invert(W)) - W) <= 1e-9 * W);
  }
  for (std::size_t i = 0; i < sol.grid_g.size(); i += 97)
    CHECK(sol.invert(sol.grid_G[i]) == sol.grid_g[i]);
  CHECK(sol.invert(sol.grid_G.back()) == sol.grid_g.back());
  CHECK_THROWS_AS(sol.invert(2 * sol.grid_G.back()), SolverError);
  CHECK_THROWS_AS(sol.invert(0.5 * sol.grid_G.front()), SolverError);
}

TEST_CASE("backward shooting from the free boundary") {
  const auto& fb = fixtures::base_solution();
  const auto shot = integrate_G(fb.w_star, fb.params);
  CHECK(shot.admissible);
  CHECK(std::abs(shot.shoot_residual) <= 1e-4 * fb.w_star);
  CHECK(shot.steps > 0);
  const double w_L = derive_constants(fb.params).w_L;
  CHECK(rel(shot.sol.G(fb.g_star), fb.w_star) <= 1e-12);
  CHECK(rel(shot.sol.Gp(fb.g_star), w_L / fb.g_star) <= 1e-12);
  CHECK(rel(shot.sol.g_star * 1e-6, shot.sol.grid_g.front()) <= 1e-12);
  CHECK(rel(shot.sol.eps_start, shot.sol.grid_g.front()) <= 1e-12);
  // the shot and the anchored solution agree on the overlap
  for (double r : {1e-4, 1e-2, 0.3})
    CHECK(rel(shot.sol.G(fb.g_star * r), fb.gsol->G(fb.g_star * r)) <= 1e-5);
}

TEST_CASE("shooting requires zero withdrawals") {
  ModelParams p;
  p.c = 0.01;
  CHECK_THROWS_AS(integrate_G(5e5, p), ValidationError);
}

TEST_CASE("unconstrained value solves the reduced HJB") {
  const auto& fb = fixtures::base_solution();
  const auto& p = fb.params;
  const double s2 = p.sigma * p.sigma;
  for (int i = 0; i < 20; ++i) {
    const double W = fb.w_star * std::pow(10.0, -3.0 + 3.0 * (i + 0.5) / 20.0);
    const auto v = v_unconstrained(W, *fb.gsol, p);
    const double lhs = (p.lambda + p.delta) * v.value;
    const double rhs = crra_utility(W, p.R) - p.mu * p.mu / (2 * s2) * v.d1 * v.d1 / v.d2;
    CHECK(std::abs(lhs - rhs) <= 1e-6 * std::abs(lhs));
  }
}

TEST_CASE("marginal value diverges at zero and demand reaches L at W*") {
  const auto& fb = fixtures::base_solution();
  const auto& p = fb.params;
  double prev = 0.0;
  for (double r = 1.0; r > 1e-4; r *= 0.1) {
    const double d1 = v_unconstrained(fb.w_star * r * 0.999, *fb.gsol, p).d1;
    CHECK(d1 > prev);
    prev = d1;
  }
  CHECK(value_function(1e-3, fb).d1 > 1e3 * value_function(fb.w_star, fb).d1);
  const double s2 = p.sigma * p.sigma;
  double prev_gap = INFINITY;
  for (double r : {0.9, 0.99, 0.999, 0.99999}) {
    const auto v = v_unconstrained(fb.w_star * r, *fb.gsol, p);
    const double gap = p.L - (-(p.mu / s2) * v.d1 / v.d2);
    CHECK(gap > 0.0);
    CHECK(gap < prev_gap);
    prev_gap = gap;
  }
  CHECK(prev_gap <= 1e-4 * p.L);
}

TEST_CASE("growing capacity pulls G towards the Merton line") {
  // At fixed wealth ln(G/g) approaches the line like (W/W*)^{n+}; n+ is about
  // 0.06 here, so even L = 1e12 leaves a large gap at W = 1e5.
  const double W = 1e5;
  double prev = INFINITY;
  for (double L : {7e5, 7e8, 1e12}) {
    ModelParams p;
    p.L = L;
    const auto fb = solve_free_boundary(p);
    const double slope = std::pow(merton_value(p).coefficient_a, 1.0 / p.R);
    const double g = fb.gsol->invert(W);
    const double gap = 1.0 - W / (slope * g);
    MESSAGE("L = ", L, ": relative gap to the Merton line at W = 1e5 is ", gap);
    CHECK(gap > 0.0);
    CHECK(gap < prev);
    prev = gap;
    // far below W* the line is reached to the manifold start tolerance
    const double g0 = fb.gsol->grid_g.front();
    CHECK(rel(fb.gsol->G(g0), slope * g0) <= 1e-6);
  }
}

TEST_CASE("table export") {
  const auto& sol = *fixtures::base_solution().gsol;
  std::ostringstream os;
  sol.write_csv(os);
  const std::string s = os.str();
  CHECK(s.rfind("g,G,Gp\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == static_cast<long>(sol.grid_g.size()) + 1);
}
