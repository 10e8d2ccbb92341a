#include "retcap/gode.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "retcap/closedform.hpp"
#include "retcap/constrained.hpp"
#include "retcap/errors.hpp"
#include "retcap/ode.hpp"
#include "retcap/report.hpp"

namespace retcap {

namespace {

struct LogCoeffs {
  double r_over_kappa;
  double A;       // lambda + delta + c - rho
  double c_term;  // c R^2 / kappa
  double R;
};

LogCoeffs log_coeffs(const ModelParams& p) {
  const auto d = derive_constants(p);
  return {p.R / d.kappa, p.lambda + p.delta + p.c - d.rho, p.c * p.R * p.R / d.kappa, p.R};
}

double dv_of(const LogCoeffs& k, double y, double v) {
  return (1.0 + v) * (k.r_over_kappa * (k.A - std::exp(-k.R * y)) - v) - k.c_term;
}

struct Cubic {
  double value;
  double slope;
};

// Cubic Hermite on [x0, x0 + h] at x0 + u h.
Cubic hermite(double u, double h, double f0, double f1, double d0, double d1) {
  const double u2 = u * u, u3 = u2 * u;
  const double value = (2 * u3 - 3 * u2 + 1) * f0 + (u3 - 2 * u2 + u) * h * d0 +
                       (-2 * u3 + 3 * u2) * f1 + (u3 - u2) * h * d1;
  const double slope = ((6 * u2 - 6 * u) * f0 + (-6 * u2 + 6 * u) * f1) / h +
                       (3 * u2 - 4 * u + 1) * d0 + (3 * u2 - 2 * u) * d1;
  return {value, slope};
}

void require_zero_c(const ModelParams& p, const char* who) {
  if (p.c != 0.0) throw ValidationError(std::string(who) + " requires c = 0");
}

}  // namespace

double g_ode_rhs(double g, double G, double Gp, const ModelParams& p, GForm form) {
  if (!(g > 0.0)) throw ValidationError("g_ode_rhs: g must be > 0");
  if (!(G > 0.0)) throw ValidationError("g_ode_rhs: G must be > 0");
  const auto d = derive_constants(p);
  const double r_k = p.R / d.kappa;
  const double pull = std::pow(g, p.R) * std::pow(G, -p.R);
  switch (form) {
    case GForm::reduced:
      return r_k * Gp / g * (p.lambda + p.delta - d.rho - pull);
    case GForm::general:
      return r_k / g * ((p.lambda + p.delta + p.c - d.rho) * Gp - p.c * p.R * G / g - pull * Gp);
    case GForm::general_proof:
      return r_k * ((p.lambda + p.delta + p.c - d.rho) / g - std::pow(g, p.R - 1.0) *
                                                              std::pow(G, -p.R)) * Gp -
             p.c * p.R * r_k / (g * g) * G;
  }
  throw ValidationError("g_ode_rhs: unknown form");
}

std::array<double, 2> g_ode_log_rhs(double y, double v, const ModelParams& p) {
  return {v, dv_of(log_coeffs(p), y, v)};
}

// ---------------------------------------------------------------------------

GManifold::GManifold(const ModelParams& p, const GodeOptions& opt) : p_(p), opt_(opt) {
  p.validate();
  require_zero_c(p, "GManifold");
  const auto ck = check_assumption_a(p);
  if (!ck.holds) throw ValidationError("GManifold: Assumption A fails, no saddle");
  const LogCoeffs k = log_coeffs(p);
  y0_ = -std::log(k.A) / p.R;
  const double D = p.R * p.R * k.A / derive_constants(p).kappa;
  n_plus_ = 0.5 * (-1.0 + std::sqrt(1.0 + 4.0 * D));

  const double h = opt.start_deviation;
  const double e = 1.0 - p.R;
  const double m = std::exp(y0_);
  // State: deviation z = y - y0, v, phi. Tracking z keeps the tiny initial
  // offset resolved by the relative tolerance.
  ode::State<3> s0{-h, -h * n_plus_, m * (1.0 / e - h * (1.0 + n_plus_) / (e + n_plus_))};
  const double y0 = y0_;
  auto rhs = [&](double t, const ode::State<3>& s) -> ode::State<3> {
    const double y = y0 + s[0];
    return {s[1], dv_of(k, y, s[1]), std::exp(e * t + y) * (1.0 + s[1])};
  };
  ode::Options o;
  o.rtol = opt.rtol;
  o.atol = std::min(opt.atol, 1e-4 * h);
  o.h_max = opt.h_max;
  const double stop = opt.stop_slope;
  auto obs = [&](double t, const ode::State<3>& s, const ode::State<3>&) {
    pts_.push_back({t, y0 + s[0], s[1], s[2]});
    return s[1] > stop;
  };
  // The deviation grows like e^{n_plus t}; this leaves ample room.
  const double t_cap = 50.0 + 40.0 * std::log(1.0 / h) / n_plus_;
  const auto rep = ode::integrate<3>(rhs, 0.0, s0, t_cap, o, obs);
  if (!rep.stopped)
    throw SolverError("GManifold: trace did not reach slope " + std::to_string(stop));
}

GManifold::Point GManifold::at(double t) const {
  if (!(t >= pts_.front().t && t <= pts_.back().t))
    throw SolverError("GManifold::at: t outside traced range");
  auto it = std::upper_bound(pts_.begin(), pts_.end(), t,
                             [](double x, const Point& q) { return x < q.t; });
  if (it == pts_.end()) return pts_.back();
  const Point& b = *it;
  const Point& a = *(it - 1);
  const LogCoeffs k = log_coeffs(p_);
  const double e = 1.0 - p_.R;
  const double h = b.t - a.t;
  const double u = (t - a.t) / h;
  const auto y = hermite(u, h, a.y, b.y, a.v, b.v);
  const auto v = hermite(u, h, a.v, b.v, dv_of(k, a.y, a.v), dv_of(k, b.y, b.v));
  const auto ph = hermite(u, h, a.phi, b.phi, std::exp(e * a.t + a.y) * (1.0 + a.v),
                          std::exp(e * b.t + b.y) * (1.0 + b.v));
  return {t, y.value, v.value, ph.value};
}

double GManifold::t_for_y(double y) const {
  if (!(y < pts_.front().y && y >= pts_.back().y))
    throw SolverError("GManifold::t_for_y: ln(G/g) = " + std::to_string(y) +
                      " is off the traced manifold [" + std::to_string(pts_.back().y) + ", " +
                      std::to_string(pts_.front().y) + ")");
  auto it = std::lower_bound(pts_.begin(), pts_.end(), y,
                             [](const Point& q, double x) { return q.y > x; });
  if (it->y == y) return it->t;
  const Point& b = *it;
  const Point& a = *(it - 1);
  const double h = b.t - a.t;
  double lo = 0.0, hi = 1.0;
  double u = (a.y - y) / (a.y - b.y);
  for (int i = 0; i < 100; ++i) {
    const auto c = hermite(u, h, a.y, b.y, a.v, b.v);
    const double f = c.value - y;  // decreasing in u
    if (f > 0.0) lo = u; else hi = u;
    double next = u - f / (c.slope * h);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::fabs(next - u) <= 1e-16) {
      u = next;
      break;
    }
    u = next;
  }
  return a.t + u * h;
}

// ---------------------------------------------------------------------------

GSolution::GSolution(std::vector<Knot> knots, double gs, const ModelParams& p)
    : g_star(gs), knots_(std::move(knots)), p_(p) {
  if (knots_.size() < 2) throw SolverError("GSolution: need at least two knots");
  const LogCoeffs k = log_coeffs(p);
  const double e = 1.0 - p.R;
  const std::size_t n = knots_.size();
  grid_g.resize(n);
  grid_G.resize(n);
  grid_Gp.resize(n);
  dv_.resize(n);
  dphi_.resize(n);
  q_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Knot& kn = knots_[i];
    if (i > 0 && !(kn.tau > knots_[i - 1].tau)) throw SolverError("GSolution: knots not ascending");
    if (!(kn.v > -1.0)) throw SolverError("GSolution: G not strictly increasing");
    const double g = i + 1 == n && kn.tau == 0.0 ? gs : gs * std::exp(kn.tau);
    grid_g[i] = g;
    grid_G[i] = g * std::exp(kn.y);
    grid_Gp[i] = std::exp(kn.y) * (1.0 + kn.v);
    dv_[i] = dv_of(k, kn.y, kn.v);
    dphi_[i] = std::pow(g, e) * grid_Gp[i];
    q_[i] = kn.tau + kn.y;
  }
  eps_start = grid_g.front();
}

std::size_t GSolution::segment(double tau) const {
  auto it = std::upper_bound(knots_.begin(), knots_.end(), tau,
                             [](double x, const Knot& q) { return x < q.tau; });
  std::size_t i = static_cast<std::size_t>(it - knots_.begin());
  if (i == 0) i = 1;
  if (i >= knots_.size()) i = knots_.size() - 1;
  return i - 1;
}

GSolution::Local GSolution::eval_tau(double tau) const {
  if (!(tau >= knots_.front().tau - 1e-12 && tau <= knots_.back().tau + 1e-12))
    throw SolverError("GSolution: g outside tabulated range");
  const std::size_t i = segment(tau);
  const Knot& a = knots_[i];
  const Knot& b = knots_[i + 1];
  const double h = b.tau - a.tau;
  const double u = (tau - a.tau) / h;
  const double y = hermite(u, h, a.y, b.y, a.v, b.v).value;
  const double v = hermite(u, h, a.v, b.v, dv_[i], dv_[i + 1]).value;
  const double phi = hermite(u, h, a.phi, b.phi, dphi_[i], dphi_[i + 1]).value;
  return {y, v, dv_of(log_coeffs(p_), y, v), phi};
}

double GSolution::G(double g) const { return g * std::exp(eval_tau(std::log(g / g_star)).y); }

double GSolution::Gp(double g) const {
  const auto l = eval_tau(std::log(g / g_star));
  return std::exp(l.y) * (1.0 + l.v);
}

double GSolution::Gpp(double g) const {
  const auto l = eval_tau(std::log(g / g_star));
  return std::exp(l.y) / g * (l.v * (1.0 + l.v) + l.dv);
}

double GSolution::elasticity(double g) const {
  return 1.0 + eval_tau(std::log(g / g_star)).v;
}

double GSolution::integral(double g) const { return eval_tau(std::log(g / g_star)).phi; }

double GSolution::invert(double W) const {
  // The end knots are recomputed from logs; allow for their last-bit rounding.
  constexpr double slack = 1e-13;
  if (!(W >= grid_G.front() * (1.0 - slack) && W <= grid_G.back() * (1.0 + slack)))
    throw SolverError("invert_G: W = " + std::to_string(W) + " outside tabulated range");
  if (W >= grid_G.back()) return grid_g.back();
  if (W <= grid_G.front()) return grid_g.front();
  if (auto k = std::lower_bound(grid_G.begin(), grid_G.end(), W);
      k != grid_G.end() && *k == W)
    return grid_g[static_cast<std::size_t>(k - grid_G.begin())];
  const double q = std::log(W / g_star);
  auto it = std::lower_bound(q_.begin(), q_.end(), q);
  std::size_t j = static_cast<std::size_t>(it - q_.begin());
  if (j == 0) return grid_g.front();
  if (j == q_.size()) return grid_g.back();
  const Knot& a = knots_[j - 1];
  const Knot& b = knots_[j];
  const double h = b.tau - a.tau;
  double lo = 0.0, hi = 1.0;
  double u = (q - q_[j - 1]) / (q_[j] - q_[j - 1]);
  for (int i = 0; i < 100; ++i) {
    const auto c = hermite(u, h, a.y, b.y, a.v, b.v);
    const double f = a.tau + u * h + c.value - q;  // increasing in u
    if (f < 0.0) lo = u; else hi = u;
    double next = u - f / (h * (1.0 + c.slope));
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::fabs(next - u) <= 1e-16) {
      u = next;
      break;
    }
    u = next;
  }
  return g_star * std::exp(a.tau + u * h);
}

void GSolution::write_csv(std::ostream& os) const {
  os << "g,G,Gp\n";
  for (std::size_t i = 0; i < grid_g.size(); ++i)
    os << format_double(grid_g[i]) << ',' << format_double(grid_G[i]) << ','
       << format_double(grid_Gp[i]) << '\n';
}

// ---------------------------------------------------------------------------

GSolution anchored_G(const GManifold& m, double w_star, double g_star) {
  const double y1 = std::log(w_star / g_star);
  const double t1 = m.t_for_y(y1);
  const double e = 1.0 - m.params().R;
  const double scale = std::exp(e * (std::log(g_star) - t1));  // theta^{1-R}
  std::vector<GSolution::Knot> knots;
  knots.reserve(m.points().size() + 1);
  for (const auto& q : m.points()) {
    if (q.t >= t1) break;
    knots.push_back({q.t - t1, q.y, q.v, scale * q.phi});
  }
  const auto end = m.at(t1);
  knots.push_back({0.0, y1, end.v, scale * end.phi});
  return GSolution(std::move(knots), g_star, m.params());
}

ShootResult integrate_G(double w_star, const GManifold& m) {
  const ModelParams& p = m.params();
  require_zero_c(p, "integrate_G");
  const GodeOptions& opt = m.options();
  const auto coef = coefficients_for(w_star, p);
  const double gs = coef.g_star;
  const auto d = derive_constants(p);
  const LogCoeffs k = log_coeffs(p);
  const double e = 1.0 - p.R;

  const GSolution anchor = anchored_G(m, w_star, gs);
  const double tau_end = std::log(opt.eps_ratio);
  const double eps = gs * opt.eps_ratio;

  // Backward from the exact terminal data. phi is carried as the integral
  // from g down to g*, then re-based on the anchored value at eps.
  ode::State<3> s0{std::log(w_star / gs), d.w_L / w_star - 1.0, 0.0};
  auto rhs = [&](double tau, const ode::State<3>& s) -> ode::State<3> {
    return {s[1], dv_of(k, s[0], s[1]), std::pow(gs, e) * std::exp(e * tau + s[0]) * (1.0 + s[1])};
  };
  ode::Options o;
  o.rtol = opt.rtol;
  o.atol = opt.atol;
  o.h_max = opt.h_max;
  std::vector<GSolution::Knot> rev;
  auto obs = [&](double tau, const ode::State<3>& s, const ode::State<3>&) {
    if (!std::isfinite(s[0]) || !std::isfinite(s[1]) || !(s[1] > -1.0))
      throw SolverError("integrate_G: G turns non-monotone at g = " +
                        std::to_string(gs * std::exp(tau)) + " for W* = " +
                        std::to_string(w_star));
    rev.push_back({tau, s[0], s[1], s[2]});
    return true;
  };
  const auto rep = ode::integrate<3>(rhs, 0.0, s0, tau_end, o, obs);

  const double phi_eps = anchor.integral(eps);
  const double phi_gs = phi_eps - rev.back().phi;
  std::vector<GSolution::Knot> knots(rev.rbegin(), rev.rend());
  for (auto& kn : knots) kn.phi += phi_gs;
  GSolution sol(std::move(knots), gs, p);

  const double g_eps = sol.grid_G.front();
  const double shoot = g_eps - anchor.G(eps);
  const double merton = g_eps - std::pow(merton_value(p).coefficient_a, 1.0 / p.R) * eps;
  return {std::move(sol), shoot, merton, std::fabs(shoot) <= opt.gate_tol * w_star,
          rep.accepted};
}

ShootResult integrate_G(double w_star, const ModelParams& p, const GodeOptions& opt) {
  return integrate_G(w_star, GManifold(p, opt));
}

ValueDerivs v_unconstrained(double W, const GSolution& sol, const ModelParams& p) {
  require_zero_c(p, "v_unconstrained");
  const double g = sol.invert(W);
  const double base = crra_utility(0.0, p.R) / (p.lambda + p.delta);
  const double gr = std::pow(g, -p.R);
  return {base + sol.integral(g), gr, -p.R * gr / (g * sol.Gp(g))};
}

}  // namespace retcap
