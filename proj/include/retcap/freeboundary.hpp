#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "retcap/constrained.hpp"
#include "retcap/gode.hpp"
#include "retcap/model.hpp"
#include "retcap/report.hpp"

namespace retcap {

struct FreeBoundaryOptions {
  GodeOptions gode;
  double root_rtol = 1e-9;   // relative width of the final bracket on W*
  int max_iterations = 200;
  int scan_points = 24;      // geometric scan of the initial bracket
  int max_expansions = 4;    // each expansion multiplies the upper end by 10
  bool estimate_error = true;
};

struct ScanRow {
  double w_star;
  double residual;  // NaN when the candidate was rejected
  std::string note;
};

struct FreeBoundarySolution {
  ModelParams params;
  FreeBoundaryOptions options;
  double w_star;
  double g_star;
  ConstrainedCoefficients coef;
  std::shared_ptr<const GSolution> gsol;
  double value_matching_residual;  // V(W*-) - V(W*+) in utils
  double value_matching_relative;  // |V(W*-) - V(W*+)| / |V(W*+)|
  double smooth_fit_residual;      // |V'(W*-) - V'(W*+)| / V'(W*+)
  double second_derivative_gap;    // |V''(W*-) - V''(W*+)| / |V''(W*+)|
  double shoot_residual;           // backward-shooting gate, dollars
  double merton_residual;          // backward shot vs the linear asymptote, dollars
  bool admissible;
  std::array<double, 2> bracket_used;
  int solver_iterations;
  double error_estimate;           // dollars; see solve_free_boundary
  std::vector<double> roots;       // every sign change found by the scan, refined
  std::vector<ScanRow> scan;
  long manifold_steps;
};

/// Origin-anchored value minus the binding-region value at a candidate W*.
/// Throws SolverError for candidates with no admissible G or V'(W*+) <= 0.
double value_matching_residual(double w_star, const GManifold& m);
double value_matching_residual(double w_star, const ModelParams& p, const GodeOptions& opt = {});

/// Brackets a sign change of the value-matching residual from
/// [w_L (1 + 1e-6), 10 w_L] and refines it with TOMS 748. Requires c = 0
/// and Assumption A. The error estimate adds the final bracket half-width,
/// the larger shift of W* under 10x looser tolerances or a halved step cap,
/// and a round-off allowance of steps * eps * W*.
FreeBoundarySolution solve_free_boundary(const ModelParams& p, const FreeBoundaryOptions& opt = {});

/// V, V', V'' for W >= 0. W = W* takes the left branch. Below the table's
/// smallest wealth the local Merton form a u(W) is used.
ValueDerivs value_function(double W, const FreeBoundarySolution& fb);

/// Dollar amount in the risky asset as a function of wealth.
class PolicyFunction {
 public:
  enum class Kind { optimal, constant_fraction, capped_fraction, constant_dollar };

  static PolicyFunction optimal(const FreeBoundarySolution& fb);
  /// X = b W.
  static PolicyFunction constant_fraction(double b);
  /// X = min(b W, cap).
  static PolicyFunction capped_fraction(double b, double cap);
  /// X = cap whenever W > 0.
  static PolicyFunction constant_dollar(double cap);

  double operator()(double W) const;
  Kind kind() const { return kind_; }
  double w_star() const { return w_star_; }
  double capacity() const { return cap_; }
  double fraction() const { return b_; }
  std::string name() const;

 private:
  Kind kind_ = Kind::constant_fraction;
  double b_ = 0.0;
  double cap_ = 0.0;
  double w_star_ = 0.0;
  double w_min_ = 0.0;  // below this the optimal policy uses the Merton fraction
  std::shared_ptr<const GSolution> gsol_;
};

double policy(double W, const FreeBoundarySolution& fb);
/// dX/dW at W*- : (mu/(R sigma^2)) (1 + g G''/G') at g*.
double policy_left_derivative(const FreeBoundarySolution& fb);

struct HjbCheck {
  double residual;  // |LHS - RHS| / |LHS|
  double argmax;    // maximizer over [0, L]
};
/// Max-form HJB re-substitution at W > 0.
HjbCheck hjb_check(double W, const FreeBoundarySolution& fb);
double hjb_residual(double W, const FreeBoundarySolution& fb);

/// Unconstrained risky demand -(mu/sigma^2) V'/V''.
double unconstrained_demand(double W, const FreeBoundarySolution& fb);

Table value_table(const FreeBoundarySolution& fb, const std::vector<double>& wealth);
Table policy_table(const FreeBoundarySolution& fb, const std::vector<double>& wealth);
nlohmann::json solution_summary(const FreeBoundarySolution& fb);

/// n points geometrically spaced on [lo, hi].
std::vector<double> geometric_grid(double lo, double hi, int n);

}  // namespace retcap
