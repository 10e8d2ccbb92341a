#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "retcap/closedform.hpp"
#include "retcap/errors.hpp"
#include "retcap/sim.hpp"

using namespace retcap;
using fixtures::rel;

namespace {

SimConfig small_config(long n_paths) {
  SimConfig cfg;
  cfg.n_paths = n_paths;
  cfg.dt = 1.0 / 250.0;
  cfg.horizon_cap = 5.0 / 0.07;
  return cfg;
}

}  // namespace

TEST_CASE("all-safety paths are exact") {
  const ModelParams p;
  const auto cfg = small_config(20);
  const auto res = simulate_paths(PolicyFunction::constant_fraction(0.0), p, cfg);
  const auto safe = all_safety_solution(p);
  const double T = std::ceil(cfg.horizon_cap / cfg.dt - 1e-9) * cfg.dt;
  CHECK(rel(res.mc_value, safe.truncated_value(p.W0, p.R, T)) <= 1e-6);
  CHECK(res.std_error <= 1e-12 * res.mc_value);
  CHECK(res.mean_terminal_wealth == p.W0);
  CHECK(res.ruin_fraction == 0.0);
  CHECK(res.n_samples == 10);
  CHECK(res.samples.size() == 10);
  CHECK(res.tail_bound > 0.0);
}

TEST_CASE("Merton policy matches its truncated closed form") {
  const ModelParams p;
  const auto m = merton_value(p);
  const auto cfg = small_config(4000);
  const auto res = simulate_paths(PolicyFunction::constant_fraction(m.policy_slope), p, cfg);
  const double T = std::ceil(cfg.horizon_cap / cfg.dt - 1e-9) * cfg.dt;
  CHECK(res.std_error > 0.0);
  CHECK(std::abs(res.mc_value - m.truncated_value(p.W0, p.R, T)) <= 3.0 * res.std_error);
}

TEST_CASE("leverage policy matches its truncated closed form") {
  const ModelParams p;
  const auto lev = leverage_value(p, 0.7);
  const auto cfg = small_config(4000);
  const auto res = simulate_paths(PolicyFunction::constant_fraction(0.7), p, cfg);
  const double T = std::ceil(cfg.horizon_cap / cfg.dt - 1e-9) * cfg.dt;
  CHECK(std::abs(res.mc_value - lev.truncated_value(p.W0, p.R, T)) <= 3.0 * res.std_error);
}

TEST_CASE("results do not depend on the thread count") {
  const auto& fb = fixtures::base_solution();
  ModelParams p = fb.params;
  p.W0 = fb.w_star;
  auto cfg = small_config(64);
  cfg.threads = 1;
  const auto a = simulate_paths(PolicyFunction::optimal(fb), p, cfg);
  cfg.threads = 3;
  const auto b = simulate_paths(PolicyFunction::optimal(fb), p, cfg);
  CHECK(a.mc_value == b.mc_value);
  CHECK(a.std_error == b.std_error);
  CHECK(a.samples == b.samples);
  CHECK(a.mean_terminal_wealth == b.mean_terminal_wealth);
  cfg.seed += 1;
  const auto c = simulate_paths(PolicyFunction::optimal(fb), p, cfg);
  CHECK(c.mc_value != a.mc_value);
}

TEST_CASE("optimal policy tournament") {
  const auto& fb = fixtures::base_solution();
  ModelParams p = fb.params;
  p.W0 = fb.w_star;
  const auto cfg = small_config(2000);
  const auto self = policy_dominance_check(fb, PolicyFunction::optimal(fb), p, cfg);
  CHECK(self.difference == 0.0);
  CHECK(self.paired_se == 0.0);
  CHECK(self.dominates);
  CHECK_FALSE(self.strict);

  const double m = derive_constants(p).merton_fraction;
  const auto myopic = policy_dominance_check(fb, PolicyFunction::capped_fraction(m, p.L), p, cfg);
  CHECK(myopic.dominates);
  CHECK(myopic.pooled_se > 0.0);

  ModelParams q = fb.params;  // W0 = 1e6
  const auto safe = policy_dominance_check(fb, PolicyFunction::constant_fraction(0.0), q, cfg);
  CHECK(safe.strict);
  const auto dollar = policy_dominance_check(fb, PolicyFunction::constant_dollar(p.L), q, cfg);
  CHECK(dollar.dominates);
}

TEST_CASE("sampled lifetimes agree with deterministic discounting") {
  const auto& fb = fixtures::base_solution();
  ModelParams p = fb.params;
  p.W0 = fb.w_star;
  auto cfg = small_config(20000);
  const auto pol = PolicyFunction::optimal(fb);
  const auto a = simulate_paths(pol, p, cfg);
  cfg.lifetime = LifetimeMode::sampled;
  const auto b = simulate_paths(pol, p, cfg);
  const double pooled = std::hypot(a.std_error, b.std_error);
  CHECK(std::abs(a.mc_value - b.mc_value) <= 3.0 * pooled);
  CHECK(b.std_error > a.std_error);
}

TEST_CASE("halving dt moves the estimate by less than one standard error") {
  const auto& fb = fixtures::base_solution();
  ModelParams p = fb.params;
  p.W0 = fb.w_star;
  const auto pol = PolicyFunction::optimal(fb);
  const TerminalValue cont = [&fb](double w) { return value_function(w, fb).value; };
  auto cfg = small_config(100000);
  cfg.coupling_substeps = 2;
  const auto coarse = simulate_paths(pol, p, cfg, cont);
  cfg.dt /= 2.0;
  cfg.coupling_substeps = 1;
  const auto fine = simulate_paths(pol, p, cfg, cont);
  MESSAGE("coarse ", coarse.mc_value, " fine ", fine.mc_value, " se ", fine.std_error);
  CHECK(std::abs(coarse.mc_value - fine.mc_value) < fine.std_error);
}

TEST_CASE("wealth stays non-negative") {
  const ModelParams p;
  auto cfg = small_config(400);
  const auto res = simulate_paths(PolicyFunction::constant_dollar(4e6), p, cfg);
  CHECK(res.ruin_fraction > 0.0);
  CHECK(res.ruin_fraction <= 1.0);
  CHECK(res.mean_terminal_wealth >= 0.0);
  const auto& fb = fixtures::base_solution();
  const auto opt = simulate_paths(PolicyFunction::optimal(fb), p, cfg);
  CHECK(opt.ruin_fraction == 0.0);
}

TEST_CASE("configuration checks") {
  const ModelParams p;
  const auto pol = PolicyFunction::constant_fraction(0.5);
  auto bad = small_config(100);
  bad.dt = 1.0 / 100.0;
  CHECK_THROWS_AS(simulate_paths(pol, p, bad), ValidationError);
  bad = small_config(100);
  bad.horizon_cap = 50.0;
  CHECK_THROWS_AS(simulate_paths(pol, p, bad), ValidationError);
  bad = small_config(101);
  CHECK_THROWS_AS(simulate_paths(pol, p, bad), ValidationError);
  bad = small_config(101);
  bad.antithetic = false;
  CHECK_NOTHROW(bad.validate(p));
  bad = small_config(100);
  bad.coupling_substeps = 0;
  CHECK_THROWS_AS(bad.validate(p), ValidationError);
  CHECK_NOTHROW(SimConfig{}.validate(p));
}

TEST_CASE("return moments by policy") {
  const auto& fb = fixtures::base_solution();
  const auto& p = fb.params;
  const double s2 = p.sigma * p.sigma;
  const auto grid = geometric_grid(1e-2 * fb.w_star, 1e2 * fb.w_star, 40);
  const auto lev = instantaneous_stats(PolicyFunction::constant_fraction(0.7), p, grid);
  CHECK(lev.columns == std::vector<std::string>{"W", "X_over_W", "variance", "covariance"});
  for (const auto& r : lev.rows) {
    CHECK(r[3] == doctest::Approx(0.7 * s2).epsilon(1e-14));
    CHECK(r[2] == doctest::Approx(0.49 * s2).epsilon(1e-14));
  }
  const auto opt = instantaneous_stats(PolicyFunction::optimal(fb), p, grid);
  for (std::size_t i = 1; i < opt.rows.size(); ++i) CHECK(opt.rows[i][3] <= opt.rows[i - 1][3] * (1 + 1e-12));
  CHECK(opt.rows.back()[3] < 0.01 * opt.rows.front()[3]);

  ModelParams q = p;
  auto cfg = small_config(400);
  cfg.collect_stats = true;
  const auto res = simulate_paths(PolicyFunction::constant_fraction(0.7), q, cfg);
  REQUIRE_FALSE(res.instantaneous_stats.empty());
  double total = 0.0;
  for (const auto& r : res.instantaneous_stats) {
    total += r.weight;
    if (r.weight > 0.05) CHECK(rel(r.covariance, 0.7 * s2) <= 0.05);
  }
  CHECK(total == doctest::Approx(1.0));
}
