#pragma once

// Auxiliary function G on the unconstrained region: W = G(g) with V'(W) = g^{-R}.
//
// In log variables tau = ln g, y = ln(G/g), v = dy/dtau the equation is
// autonomous,
//   y' = v,   v' = (1+v) [ (R/kappa)(A - e^{-R y}) - v ] - c R^2/kappa,
// with A = lambda + delta + c - rho. For c = 0 it has a saddle at
// y0 = -ln(A)/R (the Merton line G = a^{1/R} g) and the solution with
// G(0) = 0 is its unstable manifold on the side G < a^{1/R} g. Every other
// solution through the same terminal point leaves the Merton line as g -> 0.
//
// The manifold is traced once from the saddle; a boundary W* then selects
// the point tau on it where ln(G/g) = ln(W*/g*), and the scaling symmetry
// G(g) -> theta G(g/theta) maps it onto g*.

#include <array>
#include <iosfwd>
#include <vector>

#include "retcap/constrained.hpp"
#include "retcap/model.hpp"

namespace retcap {

enum class GForm {
  reduced,        // zero withdrawal rate
  general,        // (kappa/R) g G'' = (lambda+delta+c-rho) G' - c R G/g - g^R G^{-R} G'
  general_proof,  // the same equation with the c term written as -c R^2/kappa g^{-2} G
};

/// G''(g) for the chosen form. Throws ValidationError unless g > 0 and G > 0.
double g_ode_rhs(double g, double G, double Gp, const ModelParams& p, GForm form = GForm::reduced);

/// (y', v') in log variables.
std::array<double, 2> g_ode_log_rhs(double y, double v, const ModelParams& p);

struct GodeOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double h_max = 0.02;            // largest step in ln g; keeps the cubic tables accurate
  double start_deviation = 1e-8;  // distance from the saddle where the manifold trace starts
  double stop_slope = -0.999;     // trace ends once d ln(G/g) / d ln g drops below this
  double eps_ratio = 1e-6;        // backward shooting stops at g* eps_ratio
  double gate_tol = 1e-4;         // admissible when |shoot_residual| <= gate_tol W*
};

/// Unstable manifold of the saddle, parametrized by t = ln g for the member
/// of the scaling family that sits at distance `start_deviation` at t = 0.
class GManifold {
 public:
  struct Point {
    double t;
    double y;    // ln(G/g)
    double v;    // dy/dt
    double phi;  // int_0^{e^t} x^{-R} G'(x) dx
  };

  explicit GManifold(const ModelParams& p, const GodeOptions& opt = {});

  double y_saddle() const { return y0_; }
  double unstable_rate() const { return n_plus_; }
  double t_max() const { return pts_.back().t; }
  double y_min() const { return pts_.back().y; }
  long steps() const { return static_cast<long>(pts_.size()) - 1; }
  const std::vector<Point>& points() const { return pts_; }
  const ModelParams& params() const { return p_; }
  const GodeOptions& options() const { return opt_; }

  Point at(double t) const;
  /// The unique t with y(t) = y; y decreases strictly along the manifold.
  /// Throws SolverError when y is outside (y_min, y_saddle).
  double t_for_y(double y) const;

 private:
  ModelParams p_;
  GodeOptions opt_;
  double y0_;
  double n_plus_;
  std::vector<Point> pts_;
};

/// Tabulated G on (0, g*]. Between knots every quantity is a cubic Hermite
/// interpolant in ln g using the exact ODE slopes.
class GSolution {
 public:
  struct Knot {
    double tau;  // ln(g/g*)
    double y;
    double v;
    double phi;  // int_0^g x^{-R} G'(x) dx
  };

  GSolution(std::vector<Knot> knots, double g_star, const ModelParams& p);

  std::vector<double> grid_g;
  std::vector<double> grid_G;
  std::vector<double> grid_Gp;
  double g_star;
  double eps_start;
  int interpolation_order = 3;

  double G(double g) const;
  double Gp(double g) const;
  double Gpp(double g) const;
  /// g G'(g) / G(g), the elasticity 1 + v.
  double elasticity(double g) const;
  /// int_0^g x^{-R} G'(x) dx.
  double integral(double g) const;
  /// G^{-1}(W) for grid_G.front() <= W <= grid_G.back().
  double invert(double W) const;

  const std::vector<Knot>& knots() const { return knots_; }
  /// CSV with header g,G,Gp.
  void write_csv(std::ostream& os) const;

 private:
  struct Local {
    double y, v, dv, phi;
  };
  Local eval_tau(double tau) const;
  std::size_t segment(double tau) const;

  std::vector<Knot> knots_;
  std::vector<double> dv_;
  std::vector<double> dphi_;
  std::vector<double> q_;  // ln(G/g*) at each knot, strictly increasing
  ModelParams p_;
};

/// G for boundary W*, cut out of the manifold and rescaled so that
/// G(g*) = W*. Throws SolverError when W*/g* lies off the traced manifold.
GSolution anchored_G(const GManifold& m, double w_star, double g_star);

struct ShootResult {
  GSolution sol;               // backward-shooting table on [g* eps_ratio, g*]
  double shoot_residual;       // G(eps) - anchored G(eps), dollars
  double merton_residual;      // G(eps) - a^{1/R} eps, dollars
  bool admissible;             // |shoot_residual| <= gate_tol W*
  long steps;
};

/// Integrates the G equation backward from g* with G(g*) = W* and
/// G'(g*) = L R sigma^2 / (mu g*) down to g* eps_ratio, and compares the end
/// point with the origin-anchored solution. Requires c = 0 and a W* for which
/// `coefficients_for` succeeds. Throws SolverError when G turns non-monotone.
ShootResult integrate_G(double w_star, const GManifold& m);
ShootResult integrate_G(double w_star, const ModelParams& p, const GodeOptions& opt = {});

/// Value on the unconstrained region: u(0)/(lambda+delta) + int_0^{G^{-1}(W)} g^{-R} G' dg,
/// with V' = g^{-R} and V'' = -R g^{-R-1} / G'(g).
ValueDerivs v_unconstrained(double W, const GSolution& sol, const ModelParams& p);

}  // namespace retcap
