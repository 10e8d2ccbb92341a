#include "retcap/freeboundary.hpp"

#include <algorithm>
#include <boost/math/tools/toms748_solve.hpp>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>

#include "retcap/closedform.hpp"
#include "retcap/errors.hpp"

namespace retcap {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Refined {
  double root;
  std::array<double, 2> bracket;
  int iterations;
};

Refined refine(const GManifold& m, double a, double b, double fa, double fb, double rtol,
               int max_iter) {
  auto f = [&](double w) { return value_matching_residual(w, m); };
  auto tol = [rtol](double x, double y) { return std::fabs(y - x) <= rtol * std::min(x, y); };
  std::uintmax_t iters = static_cast<std::uintmax_t>(max_iter);
  const auto r = boost::math::tools::toms748_solve(f, a, b, fa, fb, tol, iters);
  if (!tol(r.first, r.second))
    throw ConvergenceError("solve_free_boundary: W* tolerance not reached within " +
                           std::to_string(max_iter) + " iterations");
  return {0.5 * (r.first + r.second), {r.first, r.second}, static_cast<int>(iters)};
}

// Root of the residual near `guess`, used for the error estimate.
double local_root(const GManifold& m, double guess, double rtol, int max_iter) {
  for (double span = 1e-5; span < 0.5; span *= 4.0) {
    const double a = guess * (1.0 - span), b = guess * (1.0 + span);
    try {
      const double fa = value_matching_residual(a, m), fb = value_matching_residual(b, m);
      if (fa == 0.0) return a;
      if (fb == 0.0) return b;
      if ((fa < 0) != (fb < 0)) return refine(m, a, b, fa, fb, rtol, max_iter).root;
    } catch (const SolverError&) {
      break;
    }
  }
  throw SolverError("solve_free_boundary: error estimate found no root near W*");
}

std::string scan_report(const std::vector<ScanRow>& scan) {
  std::ostringstream os;
  os << "scan (W*, residual):";
  for (const auto& r : scan) {
    os << "\n  " << format_double(r.w_star) << ", " << format_double(r.residual);
    if (!r.note.empty()) os << "  [" << r.note << "]";
  }
  return os.str();
}

void require_solvable(const ModelParams& p) {
  p.validate();
  if (p.c != 0.0) throw ValidationError("free-boundary solve requires c = 0");
  if (!check_assumption_a(p).holds)
    throw ValidationError("Assumption A fails: lambda + delta must exceed rho - c(1-R)");
}

}  // namespace

double value_matching_residual(double w_star, const GManifold& m) {
  const ModelParams& p = m.params();
  const auto coef = coefficients_for(w_star, p);
  const double t1 = m.t_for_y(std::log(w_star / coef.g_star));
  const double e = 1.0 - p.R;
  const double left = crra_utility(0.0, p.R) / (p.lambda + p.delta) +
                      std::exp(e * (std::log(coef.g_star) - t1)) * m.at(t1).phi;
  return left - v_constrained(w_star, coef, p).value;
}

double value_matching_residual(double w_star, const ModelParams& p, const GodeOptions& opt) {
  require_solvable(p);
  return value_matching_residual(w_star, GManifold(p, opt));
}

FreeBoundarySolution solve_free_boundary(const ModelParams& p, const FreeBoundaryOptions& opt) {
  require_solvable(p);
  const auto d = derive_constants(p);
  const auto m = std::make_shared<const GManifold>(p, opt.gode);

  std::vector<ScanRow> scan;
  std::vector<std::array<double, 4>> brackets;  // a, b, f(a), f(b)
  double lo = d.w_L * (1.0 + 1e-6);
  double hi = 10.0 * d.w_L;
  for (int expansion = 0; expansion <= opt.max_expansions && brackets.empty(); ++expansion) {
    const auto grid = geometric_grid(lo, hi, opt.scan_points);
    double prev_w = kNaN, prev_f = kNaN;
    for (double w : grid) {
      ScanRow row{w, kNaN, ""};
      try {
        row.residual = value_matching_residual(w, *m);
      } catch (const SolverError& e) {
        row.note = e.what();
      }
      scan.push_back(row);
      if (std::isfinite(row.residual) && std::isfinite(prev_f)) {
        if (row.residual == 0.0 || (prev_f < 0) != (row.residual < 0))
          brackets.push_back({prev_w, w, prev_f, row.residual});
      }
      prev_w = w;
      prev_f = row.residual;
    }
    lo = hi;
    hi *= 10.0;
  }
  if (brackets.empty())
    throw SolverError("solve_free_boundary: no sign change of the value-matching residual\n" +
                      scan_report(scan));

  std::vector<Refined> found;
  for (const auto& b : brackets) {
    if (b[3] == 0.0) {
      found.push_back({b[1], {b[1], b[1]}, 0});
      continue;
    }
    found.push_back(refine(*m, b[0], b[1], b[2], b[3], opt.root_rtol, opt.max_iterations));
  }

  // First root passing the backward-shooting gate.
  const Refined* chosen = nullptr;
  ShootResult* shot = nullptr;
  std::vector<ShootResult> shots;
  shots.reserve(found.size());
  for (const auto& r : found) {
    try {
      shots.push_back(integrate_G(r.root, *m));
    } catch (const SolverError&) {
      continue;
    }
    if (shots.back().admissible) {
      chosen = &r;
      shot = &shots.back();
      break;
    }
  }
  if (!chosen)
    throw SolverError("solve_free_boundary: no root passed the admissibility gate\n" +
                      scan_report(scan));

  FreeBoundarySolution fb;
  fb.params = p;
  fb.options = opt;
  fb.w_star = chosen->root;
  fb.coef = coefficients_for(fb.w_star, p);
  fb.g_star = fb.coef.g_star;
  fb.gsol = std::make_shared<const GSolution>(anchored_G(*m, fb.w_star, fb.g_star));
  fb.shoot_residual = shot->shoot_residual;
  fb.merton_residual = shot->merton_residual;
  fb.admissible = shot->admissible;
  fb.bracket_used = chosen->bracket;
  fb.solver_iterations = chosen->iterations;
  for (const auto& r : found) fb.roots.push_back(r.root);
  fb.scan = std::move(scan);
  fb.manifold_steps = m->steps();

  const auto left = v_unconstrained(fb.w_star, *fb.gsol, p);
  const auto right = v_constrained(fb.w_star, fb.coef, p);
  fb.value_matching_residual = left.value - right.value;
  fb.value_matching_relative = std::fabs(fb.value_matching_residual) / std::fabs(right.value);
  fb.smooth_fit_residual = std::fabs(left.d1 - right.d1) / right.d1;
  fb.second_derivative_gap = std::fabs(left.d2 - right.d2) / std::fabs(right.d2);

  // Bracket half-width, plus two refinement probes (looser tolerances, and a
  // halved step cap since most steps are capped), plus accumulated round-off
  // over the manifold trace.
  const double half_width = 0.5 * (fb.bracket_used[1] - fb.bracket_used[0]);
  fb.error_estimate = half_width + static_cast<double>(fb.manifold_steps) *
                                       std::numeric_limits<double>::epsilon() * fb.w_star;
  if (opt.estimate_error) {
    GodeOptions loose = opt.gode;
    loose.rtol *= 10.0;
    loose.atol *= 10.0;
    const GManifold ml(p, loose);
    const double w_loose = local_root(ml, fb.w_star, 10.0 * opt.root_rtol, opt.max_iterations);
    GodeOptions finer = opt.gode;
    finer.h_max *= 0.5;
    const GManifold mf(p, finer);
    const double w_fine = local_root(mf, fb.w_star, opt.root_rtol, opt.max_iterations);
    fb.error_estimate += std::max(std::fabs(w_loose - fb.w_star), std::fabs(w_fine - fb.w_star));
  }
  return fb;
}

ValueDerivs value_function(double W, const FreeBoundarySolution& fb) {
  const ModelParams& p = fb.params;
  if (!(W >= 0.0)) throw ValidationError("value_function: W must be >= 0");
  if (W == 0.0) {
    return {crra_utility(0.0, p.R) / (p.lambda + p.delta), std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity()};
  }
  if (W > fb.w_star) return v_constrained(W, fb.coef, p);
  if (W < fb.gsol->grid_G.front()) {
    const auto mv = merton_value(p);
    return {mv.value(W, p.R), mv.d1(W, p.R), mv.d2(W, p.R)};
  }
  return v_unconstrained(W, *fb.gsol, p);
}

PolicyFunction PolicyFunction::optimal(const FreeBoundarySolution& fb) {
  PolicyFunction f;
  f.kind_ = Kind::optimal;
  f.b_ = derive_constants(fb.params).merton_fraction;
  f.cap_ = fb.params.L;
  f.w_star_ = fb.w_star;
  f.w_min_ = fb.gsol->grid_G.front();
  f.gsol_ = fb.gsol;
  return f;
}

PolicyFunction PolicyFunction::constant_fraction(double b) {
  if (!(b >= 0.0) || !std::isfinite(b)) throw ValidationError("constant_fraction: b must be >= 0");
  PolicyFunction f;
  f.kind_ = Kind::constant_fraction;
  f.b_ = b;
  f.cap_ = std::numeric_limits<double>::infinity();
  return f;
}

PolicyFunction PolicyFunction::capped_fraction(double b, double cap) {
  PolicyFunction f = constant_fraction(b);
  if (!(cap >= 0.0)) throw ValidationError("capped_fraction: cap must be >= 0");
  f.kind_ = Kind::capped_fraction;
  f.cap_ = cap;
  return f;
}

PolicyFunction PolicyFunction::constant_dollar(double cap) {
  if (!(cap >= 0.0) || !std::isfinite(cap))
    throw ValidationError("constant_dollar: cap must be finite and >= 0");
  PolicyFunction f;
  f.kind_ = Kind::constant_dollar;
  f.cap_ = cap;
  return f;
}

double PolicyFunction::operator()(double W) const {
  if (!(W > 0.0)) return 0.0;
  switch (kind_) {
    case Kind::constant_fraction:
      return b_ * W;
    case Kind::capped_fraction:
      return std::min(b_ * W, cap_);
    case Kind::constant_dollar:
      return cap_;
    case Kind::optimal:
      break;
  }
  if (W >= w_star_) return cap_;
  if (W < w_min_) return b_ * W;
  const double g = gsol_->invert(W);
  return std::min(b_ * g * gsol_->Gp(g), cap_);
}

std::string PolicyFunction::name() const {
  switch (kind_) {
    case Kind::optimal: return "optimal";
    case Kind::constant_fraction: return "fraction(" + format_double(b_) + ")";
    case Kind::capped_fraction:
      return "capped_fraction(" + format_double(b_) + "," + format_double(cap_) + ")";
    case Kind::constant_dollar: return "constant_dollar(" + format_double(cap_) + ")";
  }
  return "?";
}

double policy(double W, const FreeBoundarySolution& fb) {
  return PolicyFunction::optimal(fb)(W);
}

double policy_left_derivative(const FreeBoundarySolution& fb) {
  const double g = fb.g_star;
  const auto& s = *fb.gsol;
  return derive_constants(fb.params).merton_fraction * (1.0 + g * s.Gpp(g) / s.Gp(g));
}

HjbCheck hjb_check(double W, const FreeBoundarySolution& fb) {
  const ModelParams& p = fb.params;
  if (!(W > 0.0)) throw ValidationError("hjb_check: W must be > 0");
  const auto v = value_function(W, fb);
  const double s2 = p.sigma * p.sigma;
  // mu X V' + 1/2 sigma^2 X^2 V'' is concave in X; clamp the vertex to [0, L].
  const double vertex = -p.mu * v.d1 / (s2 * v.d2);
  const double x = std::clamp(vertex, 0.0, p.L);
  const double rhs = crra_utility(W, p.R) + p.mu * x * v.d1 + 0.5 * s2 * x * x * v.d2 -
                     p.c * W * v.d1;
  const double lhs = (p.lambda + p.delta) * v.value;
  return {std::fabs(lhs - rhs) / std::fabs(lhs), x};
}

double hjb_residual(double W, const FreeBoundarySolution& fb) { return hjb_check(W, fb).residual; }

double unconstrained_demand(double W, const FreeBoundarySolution& fb) {
  const auto v = value_function(W, fb);
  const ModelParams& p = fb.params;
  return -p.mu / (p.sigma * p.sigma) * v.d1 / v.d2;
}

Table value_table(const FreeBoundarySolution& fb, const std::vector<double>& wealth) {
  Table t{{"W", "V", "Vp", "Vpp"}, {}};
  for (double w : wealth) {
    const auto v = value_function(w, fb);
    t.rows.push_back({w, v.value, v.d1, v.d2});
  }
  return t;
}

Table policy_table(const FreeBoundarySolution& fb, const std::vector<double>& wealth) {
  Table t{{"W", "X", "X_over_W"}, {}};
  const auto pol = PolicyFunction::optimal(fb);
  for (double w : wealth) {
    const double x = pol(w);
    t.rows.push_back({w, x, w > 0.0 ? x / w : kNaN});
  }
  return t;
}

nlohmann::json solution_summary(const FreeBoundarySolution& fb) {
  const auto d = derive_constants(fb.params);
  nlohmann::json j;
  j["w_star"] = fb.w_star;
  j["g_star"] = fb.g_star;
  j["error_estimate"] = fb.error_estimate;
  j["coefficients"] = {{"c1", fb.coef.c1}, {"c_star", fb.coef.c_star}};
  j["residuals"] = {{"value_matching", fb.value_matching_residual},
                    {"value_matching_relative", fb.value_matching_relative},
                    {"smooth_fit", fb.smooth_fit_residual},
                    {"second_derivative_gap", fb.second_derivative_gap},
                    {"shoot", fb.shoot_residual},
                    {"shoot_vs_linear_asymptote", fb.merton_residual}};
  j["admissible"] = fb.admissible;
  j["bracket"] = {fb.bracket_used[0], fb.bracket_used[1]};
  j["iterations"] = fb.solver_iterations;
  j["roots"] = fb.roots;
  j["derived"] = {{"kappa", d.kappa},
                  {"rho", d.rho},
                  {"beta1", d.beta1},
                  {"beta2", d.beta2},
                  {"merton_fraction", d.merton_fraction},
                  {"w_L", d.w_L},
                  {"assumption_a_slack", d.assumption_a_slack}};
  j["params"] = params_json(fb.params);
  j["solver"] = {{"rtol", fb.options.gode.rtol},
                 {"atol", fb.options.gode.atol},
                 {"h_max", fb.options.gode.h_max},
                 {"start_deviation", fb.options.gode.start_deviation},
                 {"eps_ratio", fb.options.gode.eps_ratio},
                 {"gate_tol", fb.options.gode.gate_tol},
                 {"root_rtol", fb.options.root_rtol},
                 {"manifold_steps", fb.manifold_steps}};
  return j;
}

std::vector<double> geometric_grid(double lo, double hi, int n) {
  if (!(lo > 0.0 && hi > lo) || n < 2) throw ValidationError("geometric_grid: need 0 < lo < hi, n >= 2");
  std::vector<double> g(static_cast<std::size_t>(n));
  const double r = std::log(hi / lo);
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = lo * std::exp(r * i / (n - 1));
  g.back() = hi;
  return g;
}

}  // namespace retcap
