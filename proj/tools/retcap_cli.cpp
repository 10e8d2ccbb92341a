// retcap: solve, tabulate and simulate the retirement portfolio problem under
// a dollar cap on the risky position.

#include <CLI11.hpp>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <memory>
#include <tuple>
#include <string>
#include <vector>

#include "retcap/closedform.hpp"
#include "retcap/errors.hpp"
#include "retcap/freeboundary.hpp"
#include "retcap/model.hpp"
#include "retcap/report.hpp"
#include "retcap/sim.hpp"

namespace fs = std::filesystem;
using namespace retcap;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kValidation = 2, kSolver = 3, kSimulation = 4 };

struct RunConfig {
  std::string params_file;
  std::string output_dir = ".";
  std::string format = "csv";
  std::vector<std::string> overrides;
  std::uint64_t seed = 0x5EED;
  bool seed_given = false;

  // Resolved from the overrides.
  ModelParams params;
  FreeBoundaryOptions solver;
  SimConfig sim;
  std::string policy = "optimal";
  double leverage_b = -1.0;  // < 0: half the Merton fraction
  int points = 200;
  double w_lo = 0.0, w_hi = 0.0;  // 0: defaults relative to W*
  std::map<std::string, std::string> effective;
};

double parse_number(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size())
    throw ValidationError("--set " + key + ": bad number '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true" || text == "on") return true;
  if (text == "0" || text == "false" || text == "off") return false;
  throw ValidationError("--set " + key + ": expected true/false, got '" + text + "'");
}

void apply_override(RunConfig& rc, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("--set expects key=value, got '" + kv + "'");
  const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
  rc.effective[key] = val;
  if (key == "policy") {
    rc.policy = val;
    return;
  }
  if (key == "lifetime") {
    if (val == "discounted") rc.sim.lifetime = LifetimeMode::discounted;
    else if (val == "sampled") rc.sim.lifetime = LifetimeMode::sampled;
    else throw ValidationError("--set lifetime: expected discounted or sampled");
    return;
  }
  if (key == "antithetic") {
    rc.sim.antithetic = parse_bool(key, val);
    return;
  }
  if (key == "collect_stats") {
    rc.sim.collect_stats = parse_bool(key, val);
    return;
  }
  const double x = parse_number(key, val);
  if (set_param(rc.params, key, x)) return;
  auto& g = rc.solver.gode;
  const std::map<std::string, double*> doubles = {
      {"rtol", &g.rtol},           {"atol", &g.atol},
      {"h_max", &g.h_max},         {"start_deviation", &g.start_deviation},
      {"stop_slope", &g.stop_slope}, {"eps_ratio", &g.eps_ratio},
      {"gate_tol", &g.gate_tol},   {"root_rtol", &rc.solver.root_rtol},
      {"dt", &rc.sim.dt},          {"horizon_cap", &rc.sim.horizon_cap},
      {"zero_cutoff_ratio", &rc.sim.zero_cutoff_ratio}, {"b", &rc.leverage_b},
      {"w_min", &rc.w_lo},         {"w_max", &rc.w_hi}};
  if (auto it = doubles.find(key); it != doubles.end()) {
    *it->second = x;
    return;
  }
  if (key == "n_paths") rc.sim.n_paths = static_cast<long>(x);
  else if (key == "threads") rc.sim.threads = static_cast<int>(x);
  else if (key == "coupling_substeps") rc.sim.coupling_substeps = static_cast<int>(x);
  else if (key == "stat_buckets") rc.sim.stat_buckets = static_cast<int>(x);
  else if (key == "points") rc.points = static_cast<int>(x);
  else if (key == "max_iterations") rc.solver.max_iterations = static_cast<int>(x);
  else if (key == "scan_points") rc.solver.scan_points = static_cast<int>(x);
  else throw ValidationError("--set: unknown key '" + key + "'");
}

void resolve(RunConfig& rc) {
  if (!rc.params_file.empty()) rc.params = load_params(rc.params_file);
  for (const auto& kv : rc.overrides) apply_override(rc, kv);
  if (rc.seed_given) rc.sim.seed = rc.seed;
  rc.params.validate();
  if (rc.format != "csv" && rc.format != "json") throw ValidationError("--format must be csv or json");
  if (rc.points < 2) throw ValidationError("points must be >= 2");
}

Metadata metadata(const RunConfig& rc, const std::string& command) {
  Metadata m{{"command", command}};
  for (auto& kv : params_metadata(rc.params)) m.push_back(kv);
  m.emplace_back("seed", std::to_string(rc.sim.seed));
  for (const auto& [k, v] : rc.effective) m.emplace_back("set." + k, v);
  return m;
}

json config_json(const RunConfig& rc, const std::string& command) {
  json j;
  j["command"] = command;
  j["params"] = params_json(rc.params);
  j["seed"] = rc.sim.seed;
  j["overrides"] = rc.effective;
  return j;
}

fs::path out_path(const RunConfig& rc, const std::string& name) {
  fs::create_directories(rc.output_dir);
  return fs::path(rc.output_dir) / name;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write " + path.string());
  return os;
}

void emit_table(const RunConfig& rc, const std::string& stem, const Table& t,
                const std::string& command) {
  if (rc.format == "csv") {
    auto os = open_out(out_path(rc, stem + ".csv"));
    write_csv(os, t, metadata(rc, command));
    return;
  }
  json j = config_json(rc, command);
  j["columns"] = t.columns;
  j["rows"] = t.rows;
  auto os = open_out(out_path(rc, stem + ".json"));
  os << j.dump(2) << '\n';
}

void emit_json(const RunConfig& rc, const std::string& stem, json body, const std::string& command) {
  body["config"] = config_json(rc, command);
  auto os = open_out(out_path(rc, stem + ".json"));
  os << body.dump(2) << '\n';
}

std::vector<double> wealth_grid(const RunConfig& rc, const FreeBoundarySolution& fb) {
  const double lo = rc.w_lo > 0.0 ? rc.w_lo : 1e-3 * fb.w_star;
  const double hi = rc.w_hi > 0.0 ? rc.w_hi : 1e2 * fb.w_star;
  return geometric_grid(lo, hi, rc.points);
}

PolicyFunction named_policy(const RunConfig& rc, const std::string& name,
                            const FreeBoundarySolution* fb) {
  const auto d = derive_constants(rc.params);
  const double b = rc.leverage_b >= 0.0 ? rc.leverage_b : 0.5 * d.merton_fraction;
  if (name == "optimal") {
    if (!fb) throw ValidationError("optimal policy needs a solved free boundary");
    return PolicyFunction::optimal(*fb);
  }
  if (name == "merton") return PolicyFunction::constant_fraction(d.merton_fraction);
  if (name == "leverage") return PolicyFunction::constant_fraction(std::min(b, d.merton_fraction));
  if (name == "all-safety") return PolicyFunction::constant_fraction(0.0);
  if (name == "myopic") return PolicyFunction::capped_fraction(d.merton_fraction, rc.params.L);
  if (name == "constant-dollar") return PolicyFunction::constant_dollar(rc.params.L);
  throw ValidationError("unknown policy '" + name + "'");
}

json sim_json(const SimResult& r) {
  json stats = json::array();
  for (const auto& s : r.instantaneous_stats)
    stats.push_back({{"w_lo", s.w_lo}, {"w_hi", s.w_hi}, {"variance", s.variance},
                     {"covariance", s.covariance}, {"weight", s.weight}});
  return {{"mc_value", r.mc_value},
          {"std_error", r.std_error},
          {"mean_terminal_wealth", r.mean_terminal_wealth},
          {"ruin_fraction", r.ruin_fraction},
          {"tail_bound", r.tail_bound},
          {"n_samples", r.n_samples},
          {"runtime_seconds", r.runtime_seconds},
          {"instantaneous_stats", stats}};
}

json sim_config_json(const SimConfig& c) {
  return {{"n_paths", c.n_paths},
          {"dt", c.dt},
          {"horizon_cap", c.horizon_cap},
          {"seed", c.seed},
          {"antithetic", c.antithetic},
          {"lifetime", c.lifetime == LifetimeMode::sampled ? "sampled" : "discounted"},
          {"threads", c.threads},
          {"coupling_substeps", c.coupling_substeps}};
}

// ---------------------------------------------------------------------------

int cmd_solve(const RunConfig& rc) {
  const auto fb = solve_free_boundary(rc.params, rc.solver);
  const json summary = solution_summary(fb);
  if (rc.format == "json") {
    emit_json(rc, "solution", summary, "solve");
  } else {
    Table t{{"w_star", "g_star", "error_estimate", "value_matching_relative", "smooth_fit",
             "second_derivative_gap", "shoot_residual"},
            {{fb.w_star, fb.g_star, fb.error_estimate, fb.value_matching_relative,
              fb.smooth_fit_residual, fb.second_derivative_gap, fb.shoot_residual}}};
    emit_table(rc, "solution", t, "solve");
    emit_json(rc, "solution", summary, "solve");
  }
  std::cout << "W* = " << format_double(fb.w_star) << " (error estimate "
            << format_double(fb.error_estimate) << ")\n";
  return kOk;
}

int cmd_policy_table(const RunConfig& rc) {
  const auto fb = solve_free_boundary(rc.params, rc.solver);
  emit_table(rc, "policy", policy_table(fb, wealth_grid(rc, fb)), "policy-table");
  return kOk;
}

int cmd_value_table(const RunConfig& rc) {
  const auto fb = solve_free_boundary(rc.params, rc.solver);
  emit_table(rc, "value", value_table(fb, wealth_grid(rc, fb)), "value-table");
  return kOk;
}

int cmd_simulate(const RunConfig& rc) {
  std::unique_ptr<FreeBoundarySolution> fb;
  if (rc.policy == "optimal") fb = std::make_unique<FreeBoundarySolution>(
                                  solve_free_boundary(rc.params, rc.solver));
  const auto pol = named_policy(rc, rc.policy, fb.get());
  rc.sim.validate(rc.params);
  TerminalValue cont;
  if (fb) cont = [&](double w) { return value_function(w, *fb).value; };
  const auto r = simulate_paths(pol, rc.params, rc.sim, cont);

  json body = sim_json(r);
  body["policy"] = pol.name();
  body["sim_config"] = sim_config_json(rc.sim);
  if (fb) body["analytic_value"] = value_function(rc.params.W0, *fb).value;
  emit_json(rc, "simulate", body, "simulate");

  Table paths{{"sample", "discounted_utility"}, {}};
  for (std::size_t i = 0; i < r.samples.size(); ++i)
    paths.rows.push_back({static_cast<double>(i), r.samples[i]});
  auto os = open_out(out_path(rc, "paths.csv"));
  write_csv(os, paths, metadata(rc, "simulate"));
  std::cout << "MC value " << format_double(r.mc_value) << " +/- " << format_double(r.std_error)
            << " (" << r.n_samples << " samples, " << format_double(r.runtime_seconds) << " s)\n";
  return kOk;
}

int cmd_compare(const RunConfig& rc) {
  const ModelParams& p = rc.params;
  const auto fb = solve_free_boundary(p, rc.solver);
  rc.sim.validate(p);
  const auto d = derive_constants(p);
  const double b = rc.leverage_b >= 0.0 ? rc.leverage_b : 0.5 * d.merton_fraction;
  const auto lev = leverage_value(p, b);
  const auto safe = all_safety_solution(p);
  const auto mer = merton_value(p);
  const double T = std::ceil(rc.sim.horizon_cap / rc.sim.dt - 1e-9) * rc.sim.dt;

  struct Entry {
    std::string name;
    PolicyFunction pol;
    double analytic;   // value the MC estimate targets
    bool continuation; // add the optimal value at the horizon
  };
  std::vector<Entry> entries = {
      {"optimal", PolicyFunction::optimal(fb), value_function(p.W0, fb).value, true},
      {"leverage", PolicyFunction::constant_fraction(lev.policy_slope),
       lev.truncated_value(p.W0, p.R, T), false},
      {"all_safety", PolicyFunction::constant_fraction(0.0), safe.truncated_value(p.W0, p.R, T),
       false}};

  json rows = json::array();
  std::vector<std::string> lines;
  auto line = [&](const std::string& name, bool ok, const std::string& detail) {
    lines.push_back((ok ? "PASS " : "FAIL ") + name + "  " + detail);
  };
  const TerminalValue cont = [&](double w) { return value_function(w, fb).value; };
  for (const auto& e : entries) {
    const auto r = simulate_paths(e.pol, p, rc.sim, e.continuation ? cont : TerminalValue{});
    // Deterministic paths (X = 0) have no sampling error, only the O(dt^2)
    // bias of the trapezoid rule in time.
    const double diff = r.mc_value - e.analytic;
    const double floor = 1e-6 * std::fabs(e.analytic);
    const double z = std::fabs(diff) <= floor ? 0.0 : diff / std::max(r.std_error, floor);
    rows.push_back({{"strategy", e.name}, {"analytic", e.analytic}, {"mc_value", r.mc_value},
                    {"std_error", r.std_error}, {"z", z}, {"runtime_seconds", r.runtime_seconds}});
    line("mc_vs_analytic[" + e.name + "]", std::fabs(z) <= 3.0, "z = " + format_double(z));
  }
  const double w0 = p.W0;
  const bool order = safe.value(w0, p.R) <= lev.value(w0, p.R) &&
                     lev.value(w0, p.R) <= mer.value(w0, p.R);
  line("ordering all_safety <= leverage <= merton", order,
       format_double(safe.value(w0, p.R)) + " <= " + format_double(lev.value(w0, p.R)) + " <= " +
           format_double(mer.value(w0, p.R)));
  const double v_opt = value_function(w0, fb).value;
  line("ordering all_safety <= optimal <= merton",
       safe.value(w0, p.R) <= v_opt && v_opt <= mer.value(w0, p.R), format_double(v_opt));

  const auto grid = geometric_grid(1e-2 * fb.w_star, 1e2 * fb.w_star, rc.points);
  const auto cov_opt = instantaneous_stats(PolicyFunction::optimal(fb), p, grid);
  const auto cov_lev = instantaneous_stats(PolicyFunction::constant_fraction(lev.policy_slope), p, grid);
  Table cov{{"W", "covariance_optimal", "covariance_leverage", "covariance_all_safety"}, {}};
  bool flat = true;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    cov.rows.push_back({grid[i], cov_opt.rows[i][3], cov_lev.rows[i][3], 0.0});
    flat = flat && std::fabs(cov_lev.rows[i][3] - lev.policy_slope * p.sigma * p.sigma) <= 1e-12;
  }
  line("covariance leverage flat at b sigma^2", flat, format_double(lev.policy_slope * p.sigma * p.sigma));
  const double first = cov_opt.rows.front()[3], last = cov_opt.rows.back()[3];
  line("covariance optimal decays", last < 0.05 * first,
       format_double(first) + " -> " + format_double(last));

  auto os = open_out(out_path(rc, "covariance.csv"));
  write_csv(os, cov, metadata(rc, "compare"));
  json body;
  body["strategies"] = rows;
  body["checks"] = lines;
  body["leverage_b"] = lev.policy_slope;
  body["closed_form"] = {{"all_safety", safe.value(w0, p.R)},
                         {"leverage", lev.value(w0, p.R)},
                         {"merton", mer.value(w0, p.R)},
                         {"optimal", v_opt}};
  body["sim_config"] = sim_config_json(rc.sim);
  emit_json(rc, "compare", body, "compare");
  for (const auto& l : lines) std::cout << l << '\n';
  return kOk;
}

int cmd_figures(const RunConfig& rc) {
  const ModelParams& p = rc.params;
  const auto fb = solve_free_boundary(p, rc.solver);
  const auto d = derive_constants(p);
  const double m = d.merton_fraction;
  const auto meta = metadata(rc, "figures");

  Table f1{{"g", "G"}, {}};
  const auto& s = *fb.gsol;
  for (std::size_t i = 0; i < s.grid_g.size(); ++i)
    if (s.grid_g[i] >= 1e-4 * fb.g_star) f1.rows.push_back({s.grid_g[i], s.grid_G[i]});

  const double w_top = std::max(2.0 * p.W0, 3.0 * fb.w_star);
  std::vector<double> grid;
  for (int i = 1; i <= rc.points; ++i) grid.push_back(w_top * i / rc.points);

  const auto opt = PolicyFunction::optimal(fb);
  Table f2{{"W", "X_model", "X_merton_capped_benchmark", "X_bpc", "X_merton_unconstrained"}, {}};
  Table f3{{"W", "pct_model", "pct_merton_capped_benchmark", "pct_bpc", "pct_merton_unconstrained"}, {}};
  for (double w : grid) {
    const double x = opt(w), xc = std::min(m * w, p.L), xb = 0.5 * m * w, xm = m * w;
    f2.rows.push_back({w, x, xc, xb, xm});
    f3.rows.push_back({w, x / w, xc / w, xb / w, xm / w});
  }

  const std::vector<double> caps = {0.5 * p.L, p.L, 1.5 * p.L};
  Table f4{{"W"}, {}};
  std::vector<PolicyFunction> pols;
  std::vector<FreeBoundarySolution> sols;
  for (double L : caps) {
    ModelParams q = p;
    q.L = L;
    sols.push_back(solve_free_boundary(q, rc.solver));
    f4.columns.push_back("X_L" + format_double(L));
  }
  for (const auto& sol : sols) pols.push_back(PolicyFunction::optimal(sol));
  for (double w : grid) {
    std::vector<double> row{w};
    for (const auto& pol : pols) row.push_back(pol(w));
    f4.rows.push_back(row);
  }

  const std::vector<std::pair<std::string, const Table*>> figs = {
      {"fig1", &f1}, {"fig2", &f2}, {"fig3", &f3}, {"fig4", &f4}};
  for (const auto& [name, t] : figs) {
    auto os = open_out(out_path(rc, name + ".csv"));
    Metadata mm = meta;
    if (name == "fig4")
      for (std::size_t i = 0; i < sols.size(); ++i)
        mm.emplace_back("w_star_L" + format_double(caps[i]), format_double(sols[i].w_star));
    else
      mm.emplace_back("w_star", format_double(fb.w_star));
    write_csv(os, *t, mm);
  }
  std::cout << "wrote fig1.csv .. fig4.csv to " << rc.output_dir << " (W* = "
            << format_double(fb.w_star) << ")\n";
  return kOk;
}

int report_error(const char* kind, const std::exception& e, int code) {
  json err{{"error", kind}, {"message", e.what()}, {"exit_code", code}};
  std::cerr << err.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retirement portfolio under a risk capacity constraint"};
  app.require_subcommand(1);
  RunConfig rc;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--params", rc.params_file, "flat key=value parameter file");
    sub->add_option("--out", rc.output_dir, "output directory");
    sub->add_option("--format", rc.format, "csv or json");
    sub->add_option("--set", rc.overrides, "key=value override (repeatable)");
    sub->add_option("--seed", rc.seed, "simulation seed")->each([&](const std::string&) {
      rc.seed_given = true;
    });
  };
  using Cmd = int (*)(const RunConfig&);
  const std::vector<std::tuple<std::string, std::string, Cmd>> commands = {
      {"solve", "solve for the free boundary W*", cmd_solve},
      {"policy-table", "tabulate X(W) and X(W)/W", cmd_policy_table},
      {"value-table", "tabulate V, V', V''", cmd_value_table},
      {"simulate", "Monte Carlo value of a policy", cmd_simulate},
      {"compare", "optimal vs leverage vs all-safety", cmd_compare},
      {"figures", "write fig1.csv .. fig4.csv", cmd_figures}};
  std::map<CLI::App*, Cmd> handlers;
  for (const auto& [name, help, fn] : commands) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub);
    handlers[sub] = fn;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc_parse = app.exit(e);
    return rc_parse == 0 ? 0 : kValidation;
  }

  try {
    resolve(rc);
    for (auto& [sub, fn] : handlers)
      if (sub->parsed()) return fn(rc);
  } catch (const ValidationError& e) {
    return report_error("validation", e, kValidation);
  } catch (const SimulationError& e) {
    return report_error("simulation", e, kSimulation);
  } catch (const SolverError& e) {
    return report_error("solver", e, kSolver);
  }
  return kOk;
}
