#pragma once

// Euler-Maruyama Monte Carlo for dW = X(W)(mu dt + sigma dZ) - c W dt.

#include <cstdint>
#include <functional>
#include <vector>

#include "retcap/freeboundary.hpp"
#include "retcap/model.hpp"
#include "retcap/report.hpp"

namespace retcap {

enum class LifetimeMode {
  discounted,  // weight utility by e^{-(lambda+delta) t}
  sampled,     // draw tau ~ Exp(lambda), weight by e^{-delta t} up to tau
};

struct SimConfig {
  long n_paths = 200000;
  double dt = 1.0 / 500.0;
  double horizon_cap = 120.0;
  std::uint64_t seed = 0x5EED;
  bool antithetic = true;
  LifetimeMode lifetime = LifetimeMode::discounted;
  int threads = 0;                 // 0: one per hardware thread
  double zero_cutoff_ratio = 1e-6; // X = 0 below this multiple of W0
  bool collect_stats = false;      // empirical return moments by wealth bucket
  int stat_buckets = 24;
  // Normals drawn per step; the increment uses their normalized sum, so a run
  // at dt with k substeps follows the same Brownian path as one at dt/k.
  int coupling_substeps = 1;

  /// Throws ValidationError on dt > 1/250, horizon_cap < 5/lambda and similar.
  void validate(const ModelParams& p) const;
};

struct StatsRow {
  double w_lo;
  double w_hi;
  double variance;    // of dW/W, per year
  double covariance;  // of dW/W with dS/S, per year
  double weight;      // share of path-steps in the bucket
};

struct SimResult {
  double mc_value;             // utils, V-normalization
  double std_error;
  double mean_terminal_wealth;
  double ruin_fraction;
  double tail_bound;           // e^{-(lambda+delta) T} V_inf(E W_T): bounds the truncated remainder
  long n_samples;              // independent samples (antithetic pairs count once)
  double runtime_seconds;
  std::vector<StatsRow> instantaneous_stats;
  std::vector<double> samples;  // per-sample values in path order
};

/// Continuation value added at the horizon, discounted by e^{-(lambda+delta) T}.
using TerminalValue = std::function<double(double)>;

/// Simulates from W0 = p.W0. Paths are deterministic functions of
/// (seed, path index), so results do not depend on the thread count and two
/// policies run with the same config see common random numbers.
SimResult simulate_paths(const PolicyFunction& policy, const ModelParams& p, const SimConfig& cfg,
                         const TerminalValue& terminal = {});

/// Analytic per-year variance (X/W)^2 sigma^2 and covariance (X/W) sigma^2 of
/// the portfolio return; columns W, X_over_W, variance, covariance.
Table instantaneous_stats(const PolicyFunction& policy, const ModelParams& p,
                          const std::vector<double>& wealth);

struct DominanceResult {
  double optimal_value;
  double alternative_value;
  double optimal_se;
  double alternative_se;
  double pooled_se;     // sqrt(se_opt^2 + se_alt^2)
  double paired_se;     // s.e. of the per-path difference under common random numbers
  double difference;    // optimal - alternative
  bool dominates;       // difference >= -3 pooled_se
  bool strict;          // difference > 3 pooled_se
};

/// Tournament of the optimal policy against `alt` with common random
/// numbers. Both runs continue with the optimal value function after the
/// horizon, so the comparison is between admissible strategies.
/// Dynamics and W0 come from `p`; `fb` supplies the policy and the
/// continuation value.
DominanceResult policy_dominance_check(const FreeBoundarySolution& fb, const PolicyFunction& alt,
                                       const ModelParams& p, const SimConfig& cfg);

}  // namespace retcap
