#include "retcap/sim.hpp"

#include <algorithm>
#include <array>
#include <boost/random/exponential_distribution.hpp>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <chrono>
#include <cmath>
#include <exception>
#include <random>
#include <string>
#include <thread>
#include <type_traits>

#include "retcap/closedform.hpp"
#include "retcap/errors.hpp"

namespace retcap {

namespace {

// Compensated running sum; adding in a fixed order keeps results reproducible.
struct Neumaier {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    const double t = sum + x;
    if (std::fabs(sum) >= std::fabs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

// Table-driven evaluation of a policy for the inner loop.
class FastPolicy {
 public:
  FastPolicy(const PolicyFunction& f, double cutoff) : kind_(f.kind()), cutoff_(cutoff) {
    b_ = f.fraction();
    cap_ = f.capacity();
    if (kind_ == PolicyFunction::Kind::optimal) {
      w_star_ = f.w_star();
      constexpr int n = 1 << 16;
      const double h = w_star_ / n;
      inv_h_ = 1.0 / h;
      table_.resize(n + 1);
      table_[0] = 0.0;
      for (int i = 1; i < n; ++i) table_[static_cast<std::size_t>(i)] = f(i * h);
      table_[n] = cap_;
    }
  }

  /// Calls f with a kind-specific callable so the inner loop has no dispatch.
  template <class F>
  void visit(F&& f) const {
    const double cut = cutoff_, b = b_, cap = cap_;
    switch (kind_) {
      case PolicyFunction::Kind::constant_fraction:
        return f([=](double w) { return w < cut ? 0.0 : b * w; });
      case PolicyFunction::Kind::capped_fraction:
        return f([=](double w) { return w < cut ? 0.0 : std::min(b * w, cap); });
      case PolicyFunction::Kind::constant_dollar:
        return f([=](double w) { return w < cut ? 0.0 : cap; });
      case PolicyFunction::Kind::optimal:
        return f([this](double w) { return (*this)(w); });
    }
  }

  double operator()(double w) const {
    if (w < cutoff_) return 0.0;
    switch (kind_) {
      case PolicyFunction::Kind::constant_fraction:
        return b_ * w;
      case PolicyFunction::Kind::capped_fraction:
        return std::min(b_ * w, cap_);
      case PolicyFunction::Kind::constant_dollar:
        return cap_;
      case PolicyFunction::Kind::optimal:
        break;
    }
    if (w >= w_star_) return cap_;
    const double s = w * inv_h_;
    const auto i = static_cast<std::size_t>(s);
    const double f = s - static_cast<double>(i);
    return table_[i] + f * (table_[i + 1] - table_[i]);
  }

 private:
  PolicyFunction::Kind kind_;
  double cutoff_;
  double b_ = 0.0;
  double cap_ = 0.0;
  double w_star_ = 0.0;
  double inv_h_ = 0.0;
  std::vector<double> table_;
};

struct Bucket {
  double n = 0.0;
  double r = 0.0;
  double r2 = 0.0;
  double rs = 0.0;
  double s = 0.0;
};

struct SampleOut {
  double value;
  double terminal_wealth;  // summed over the members of the sample
  int ruined;
};

// Same sequence as std::mt19937_64; the Boost implementation is faster here.
boost::random::mt19937_64 path_engine(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return boost::random::mt19937_64(seq);
}

}  // namespace

void SimConfig::validate(const ModelParams& p) const {
  if (n_paths < 1) throw ValidationError("SimConfig: n_paths must be > 0");
  if (antithetic && n_paths % 2 != 0)
    throw ValidationError("SimConfig: antithetic sampling needs an even n_paths");
  if (!(dt > 0.0) || dt > 1.0 / 250.0 * (1.0 + 1e-12))
    throw ValidationError("SimConfig: dt must be in (0, 1/250]");
  if (!(horizon_cap >= 5.0 / p.lambda * (1.0 - 1e-12)))
    throw ValidationError("SimConfig: horizon_cap must be >= 5/lambda");
  if (threads < 0) throw ValidationError("SimConfig: threads must be >= 0");
  if (!(zero_cutoff_ratio >= 0.0)) throw ValidationError("SimConfig: zero_cutoff_ratio must be >= 0");
  if (collect_stats && stat_buckets < 1) throw ValidationError("SimConfig: stat_buckets must be > 0");
  if (coupling_substeps < 1) throw ValidationError("SimConfig: coupling_substeps must be > 0");
}

SimResult simulate_paths(const PolicyFunction& policy, const ModelParams& p, const SimConfig& cfg,
                         const TerminalValue& terminal) {
  p.validate();
  cfg.validate(p);
  if (!(p.W0 > 0.0)) throw ValidationError("simulate_paths: W0 must be > 0");
  const auto start = std::chrono::steady_clock::now();

  const FastPolicy X(policy, cfg.zero_cutoff_ratio * p.W0);
  const long steps = static_cast<long>(std::ceil(cfg.horizon_cap / cfg.dt - 1e-9));
  const double dt = cfg.dt;
  const double T = steps * dt;
  const bool sampled = cfg.lifetime == LifetimeMode::sampled;
  const double rate = sampled ? p.delta : p.lambda + p.delta;
  std::vector<double> weight(static_cast<std::size_t>(steps));
  for (long n = 0; n < steps; ++n)
    weight[static_cast<std::size_t>(n)] = 0.5 * dt * std::exp(-rate * (n + 0.5) * dt);
  const double terminal_discount = std::exp(-rate * T);

  const double e = 1.0 - p.R;
  const bool half = p.R == 0.5;
  auto u = [e, half](double w) { return half ? 2.0 * std::sqrt(w) : std::pow(w, e) / e; };
  const double mu_dt = p.mu * dt;
  const double sig_sqdt = p.sigma * std::sqrt(dt);
  const double c_dt = p.c * dt;
  const int substeps = cfg.coupling_substeps;
  const double z_scale = 1.0 / std::sqrt(static_cast<double>(substeps));
  const int members = cfg.antithetic ? 2 : 1;
  const long n_samples = cfg.n_paths / members;

  const int n_buckets = cfg.collect_stats ? cfg.stat_buckets : 0;
  const double b_lo = std::log(p.W0 * 1e-2), b_hi = std::log(p.W0 * 1e2);
  const double b_scale = n_buckets / (b_hi - b_lo);

  int threads = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = static_cast<int>(std::clamp<long>(threads, 1, std::max(1L, n_samples)));

  std::vector<SampleOut> out(static_cast<std::size_t>(n_samples));
  std::vector<std::vector<Bucket>> buckets(static_cast<std::size_t>(threads),
                                           std::vector<Bucket>(static_cast<std::size_t>(n_buckets)));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));

  // One instantiation per (policy kind, member count, stats) keeps the step loop branch-free.
  // Samples advance in blocks of kBlock so independent paths overlap in the pipeline.
  auto run_range = [&](const auto& X, auto members_c, auto stats_c, int tid, long begin, long end) {
    constexpr int members = decltype(members_c)::value;
    constexpr bool stats = decltype(stats_c)::value;
    constexpr int kBlock = 4;
    auto& bk = buckets[static_cast<std::size_t>(tid)];
    boost::random::normal_distribution<double> normal;
    boost::random::exponential_distribution<double> expo(p.lambda);
    const double u0 = u(p.W0);
    for (long i0 = begin; i0 < end; i0 += kBlock) {
      const int lanes = static_cast<int>(std::min<long>(kBlock, end - i0));
      std::array<boost::random::mt19937_64, kBlock> eng;
      std::array<long, kBlock> n_end{};
      std::array<double, kBlock> tail{};  // partial final interval when death comes first
      double w[kBlock][members], uw[kBlock][members], acc[kBlock][members];
      long n_max = 0;
      for (int k = 0; k < lanes; ++k) {
        eng[k] = path_engine(cfg.seed, static_cast<std::uint64_t>(i0 + k));
        n_end[k] = steps;
        if (sampled) {
          const double tau = expo(eng[k]);
          if (tau < T) {
            n_end[k] = static_cast<long>(std::floor(tau / dt));
            tail[k] = tau - n_end[k] * dt;
          }
        }
        n_max = std::max(n_max, n_end[k]);
        for (int m = 0; m < members; ++m) {
          w[k][m] = p.W0;
          uw[k][m] = u0;
          acc[k][m] = 0.0;
        }
      }
      for (long n = 0; n < n_max; ++n) {
        const double wt = weight[static_cast<std::size_t>(n)];
        for (int k = 0; k < lanes; ++k) {
          if (n >= n_end[k]) continue;
          double z = normal(eng[k]);
          for (int j = 1; j < substeps; ++j) z += normal(eng[k]);
          const double dz = sig_sqdt * z * z_scale;
          for (int m = 0; m < members; ++m) {
            const double shock = m == 0 ? dz : -dz;
            const double wc = w[k][m];
            double wn = wc + X(wc) * (mu_dt + shock) - c_dt * wc;
            if constexpr (stats) {
              if (wc > 0.0) {
                const double q = (std::log(wc) - b_lo) * b_scale;
                if (q >= 0.0 && q < n_buckets) {
                  auto& bu = bk[static_cast<std::size_t>(q)];
                  const double r = (wn - wc) / wc;
                  const double sr = mu_dt + shock;
                  bu.n += 1.0;
                  bu.r += r;
                  bu.r2 += r * r;
                  bu.rs += r * sr;
                  bu.s += sr;
                }
              }
            }
            if (!std::isfinite(wn))
              throw SimulationError("simulate_paths: non-finite wealth on path " +
                                    std::to_string(i0 + k) + " at t = " + std::to_string(n * dt));
            if (wn <= 0.0) wn = 0.0;
            const double un = u(wn);
            acc[k][m] += wt * (uw[k][m] + un);
            w[k][m] = wn;
            uw[k][m] = un;
          }
        }
      }
      for (int k = 0; k < lanes; ++k) {
        const bool alive_at_T = n_end[k] == steps;
        double value = 0.0, wsum = 0.0;
        int ruined = 0;
        for (int m = 0; m < members; ++m) {
          double v = acc[k][m];
          if (!alive_at_T) v += tail[k] * std::exp(-rate * n_end[k] * dt) * uw[k][m];
          if (alive_at_T && terminal) v += terminal_discount * terminal(w[k][m]);
          value += v;
          wsum += w[k][m];
          if (w[k][m] == 0.0) ++ruined;
        }
        out[static_cast<std::size_t>(i0 + k)] = {value / members, wsum, ruined};
      }
    }
  };
  auto run = [&](int tid, long begin, long end) {
    try {
      X.visit([&](const auto& pol) {
        if (members == 2) {
          if (n_buckets > 0)
            run_range(pol, std::integral_constant<int, 2>{}, std::true_type{}, tid, begin, end);
          else
            run_range(pol, std::integral_constant<int, 2>{}, std::false_type{}, tid, begin, end);
        } else {
          if (n_buckets > 0)
            run_range(pol, std::integral_constant<int, 1>{}, std::true_type{}, tid, begin, end);
          else
            run_range(pol, std::integral_constant<int, 1>{}, std::false_type{}, tid, begin, end);
        }
      });
    } catch (...) {
      errors[static_cast<std::size_t>(tid)] = std::current_exception();
    }
  };

  const long chunk = (n_samples + threads - 1) / threads;
  if (threads == 1) {
    run(0, 0, n_samples);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      const long b = t * chunk, en = std::min(n_samples, b + chunk);
      if (b < en) pool.emplace_back(run, t, b, en);
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);

  SimResult res;
  Neumaier sum, wsum;
  long ruined = 0;
  for (const auto& o : out) {
    sum.add(o.value);
    wsum.add(o.terminal_wealth);
    ruined += o.ruined;
  }
  const double mean = sum.value() / n_samples;
  Neumaier ss;
  for (const auto& o : out) ss.add((o.value - mean) * (o.value - mean));
  res.mc_value = mean;
  res.std_error = n_samples > 1 ? std::sqrt(ss.value() / (n_samples - 1) / n_samples) : 0.0;
  res.mean_terminal_wealth = wsum.value() / (n_samples * members);
  res.ruin_fraction = static_cast<double>(ruined) / static_cast<double>(n_samples * members);
  res.n_samples = n_samples;
  res.samples.reserve(out.size());
  for (const auto& o : out) res.samples.push_back(o.value);

  // V_inf is concave, so E V_inf(W_T) <= V_inf(E W_T).
  const double a_inf = merton_value(p).coefficient_a;
  res.tail_bound = std::exp(-(p.lambda + p.delta) * T) * a_inf *
                   crra_utility(res.mean_terminal_wealth, p.R);

  for (int k = 0; k < n_buckets; ++k) {
    Bucket b;
    for (const auto& bt : buckets) {
      const auto& x = bt[static_cast<std::size_t>(k)];
      b.n += x.n;
      b.r += x.r;
      b.r2 += x.r2;
      b.rs += x.rs;
      b.s += x.s;
    }
    if (b.n < 2.0) continue;
    const double mr = b.r / b.n, ms = b.s / b.n;
    res.instantaneous_stats.push_back({std::exp(b_lo + k / b_scale), std::exp(b_lo + (k + 1) / b_scale),
                                       (b.r2 / b.n - mr * mr) / dt, (b.rs / b.n - mr * ms) / dt,
                                       b.n});
  }
  double total = 0.0;
  for (const auto& r : res.instantaneous_stats) total += r.weight;
  for (auto& r : res.instantaneous_stats) r.weight /= total;

  res.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

Table instantaneous_stats(const PolicyFunction& policy, const ModelParams& p,
                          const std::vector<double>& wealth) {
  Table t{{"W", "X_over_W", "variance", "covariance"}, {}};
  const double s2 = p.sigma * p.sigma;
  for (double w : wealth) {
    if (!(w > 0.0)) throw ValidationError("instantaneous_stats: W must be > 0");
    const double f = policy(w) / w;
    t.rows.push_back({w, f, f * f * s2, f * s2});
  }
  return t;
}

DominanceResult policy_dominance_check(const FreeBoundarySolution& fb, const PolicyFunction& alt,
                                       const ModelParams& p, const SimConfig& cfg) {
  const auto opt = PolicyFunction::optimal(fb);
  const TerminalValue cont = [&fb](double w) { return value_function(w, fb).value; };
  const auto a = simulate_paths(opt, p, cfg, cont);
  const auto b = simulate_paths(alt, p, cfg, cont);
  DominanceResult r;
  r.optimal_value = a.mc_value;
  r.alternative_value = b.mc_value;
  r.optimal_se = a.std_error;
  r.alternative_se = b.std_error;
  r.pooled_se = std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
  Neumaier d;
  for (std::size_t i = 0; i < a.samples.size(); ++i) d.add(a.samples[i] - b.samples[i]);
  const double n = static_cast<double>(a.samples.size());
  r.difference = d.value() / n;
  Neumaier ss;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const double x = a.samples[i] - b.samples[i] - r.difference;
    ss.add(x * x);
  }
  r.paired_se = n > 1 ? std::sqrt(ss.value() / (n - 1) / n) : 0.0;
  r.dominates = r.difference >= -3.0 * r.pooled_se;
  r.strict = r.difference > 3.0 * r.pooled_se;
  return r;
}

}  // namespace retcap
