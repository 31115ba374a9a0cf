#include "impulse/run.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "impulse/adjoint.hpp"
#include "impulse/maxprin.hpp"
#include "impulse/presets.hpp"
#include "impulse/simulate.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace ic {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IcError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) {
  write_file(path, j.dump(2) + "\n");
}

json control_to_json(const ImpulseControl& c) {
  json arr = json::array();
  for (const auto& im : c.impulses)
    arr.push_back({{"time", im.time}, {"size", im.size[0]}});
  return arr;
}

ImpulseControl control_from_json(const json& arr, double start,
                                 const ProblemSpec& spec) {
  std::vector<Impulse> raw;
  for (const auto& e : arr) {
    Impulse im;
    im.time = e.at("time").get<double>();
    im.size[0] = e.at("size").get<double>();
    raw.push_back(im);
  }
  return normalize_control(raw, start, spec.horizon, spec.cone);
}

struct Ctx {
  RunConfig cfg;
  ProblemSpec spec;
  fs::path out;
  std::size_t paths_default(std::size_t d) const {
    return cfg.paths > 0 ? cfg.paths : d;
  }
  int steps_default(int d) const { return cfg.steps > 0 ? cfg.steps : d; }
};

void write_manifest(const Ctx& ctx, const std::string& command) {
  json j;
  j["command"] = command;
  j["preset"] = ctx.cfg.preset;
  j["seed"] = ctx.cfg.seed;
  j["threads"] = ctx.cfg.threads;
  j["paths"] = ctx.cfg.paths;
  j["steps"] = ctx.cfg.steps;
  json entries = json::object();
  for (const auto& [k, v] : ctx.cfg.tree.entries()) entries[k] = v;
  j["config"] = entries;
  std::time_t now = std::time(nullptr);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  j["generated"] = buf;  // the only timestamp in any artifact
  write_json(ctx.out / "manifest.json", j);
}

SolveGrid grid_from_config(const Ctx& ctx) {
  SolveGrid g;
  g.tau_values = ctx.cfg.tree.get_list("qvi.tau_values");
  if (g.tau_values.empty()) {
    double span = ctx.spec.horizon - ctx.spec.tau0;
    for (int i = 0; i < 5; ++i)
      g.tau_values.push_back(ctx.spec.tau0 + 0.2 * i * span);
  }
  g.t_count = ctx.cfg.tree.get_int("qvi.t_count", 200);
  g.x_count = ctx.cfg.tree.get_int("qvi.x_count", 200);
  // the heat-kernel reference solution needs a domain whose ends have zero
  // slope, so the reflecting boundary is exact there
  double dflt = ctx.cfg.preset == "heat-kernel" ? M_PI : 3.2;
  g.x_min = ctx.cfg.tree.get_double("qvi.x_min", -dflt);
  g.x_max = ctx.cfg.tree.get_double("qvi.x_max", dflt);
  g.boundary_margin = ctx.cfg.tree.get_double("qvi.boundary_margin", 0.5);
  return g;
}

SolverConfig solver_from_config(const Ctx& ctx) {
  SolverConfig c;
  c.tol = ctx.cfg.tree.get_double("qvi.tol", 1e-8);
  c.per_ray = ctx.cfg.tree.get_int("qvi.per_ray", 41);
  c.cfl_safety = ctx.cfg.tree.get_double("qvi.cfl_safety", 0.9);
  return c;
}

ImpulseControl control_from_config(const Ctx& ctx, const std::string& key,
                                   const std::string& fallback) {
  KeyTree tree = ctx.cfg.tree;
  if (!tree.has(key) && !fallback.empty()) tree.set(key, fallback);
  return control_from_tree(tree, key, 0.0, ctx.spec);
}

int cmd_validate(const Ctx& ctx) {
  int samples = ctx.cfg.tree.get_int("validate.samples", 400);
  AssumptionReport rep = validate_problem(ctx.spec, samples, ctx.cfg.seed);
  json j;
  j["finite_ok"] = rep.finite_ok;
  j["nonneg_ok"] = rep.nonneg_ok;
  j["ell_lower_ok"] = rep.ell_lower_ok;
  j["ell_monotone_ok"] = rep.ell_monotone_ok;
  j["subadditive_ok"] = rep.subadditive_ok;
  j["lipschitz_ok"] = rep.lipschitz_ok;
  j["twice_diff_ok"] = rep.twice_diff_ok;
  j["lipschitz_K"] = rep.lipschitz_K;
  j["subadditivity_margin"] = rep.subadditivity_margin;
  j["sup_g"] = rep.sup_g;
  j["sup_h"] = rep.sup_h;
  j["tau_modulus_gaps"] = rep.tau_modulus_gaps;
  j["tau_modulus_values"] = rep.tau_modulus_values;
  j["failure_detail"] = rep.failure_detail;
  j["all_ok"] = rep.all_ok();
  write_json(ctx.out / "assumption_report.json", j);
  return rep.all_ok() ? kExitOk : kExitCheckFailed;
}

int cmd_simulate(const Ctx& ctx) {
  std::size_t paths = ctx.paths_default(10000);
  int steps = ctx.steps_default(200);
  double x0 = ctx.cfg.tree.get_double("simulate.x0", 0.0);
  ImpulseControl control = control_from_config(ctx, "simulate.impulses", "");
  Vec x0v = vzero();
  x0v[0] = x0;
  CostEstimate est = estimate_cost(ctx.spec, control, x0v, paths, steps,
                                   ctx.cfg.seed, ctx.cfg.threads);
  json j;
  j["mean"] = est.mean;
  j["stderr"] = est.stderr_;
  j["paths"] = est.path_count;
  j["running"] = est.running;
  j["impulse"] = est.impulse;
  j["terminal"] = est.terminal;
  j["seed"] = ctx.cfg.seed;
  j["control"] = control_to_json(control);
  write_json(ctx.out / "cost.json", j);

  // one sample trajectory for plotting
  TimeGrid grid = make_time_grid(0.0, ctx.spec.horizon, control, steps);
  BrownianGrid noise = make_brownian(grid, ctx.cfg.seed, 0);
  Trajectory traj = simulate_state(ctx.spec, control, x0v, grid, noise);
  std::string csv = "path_id,node,time,pre,post,active_count\n";
  for (std::size_t k = 0; k < grid.nodes.size(); ++k)
    csv += "0," + std::to_string(k) + "," + fmt(grid.nodes[k]) + "," +
           fmt(traj.pre[k][0]) + "," + fmt(traj.post[k][0]) + "," +
           std::to_string(traj.active_count[k]) + "\n";
  write_file(ctx.out / "trajectory.csv", csv);
  return kExitOk;
}

int cmd_solve_qvi(const Ctx& ctx) {
  SolveGrid grid = grid_from_config(ctx);
  SolverConfig scfg = solver_from_config(ctx);
  QviSolution sol = solve_qvi(ctx.spec, grid, scfg, ctx.cfg.threads);
  ResidualReport res = qvi_residual(sol.value, ctx.spec, scfg);
  RegularityReport reg = check_regularity(sol.value, ctx.spec);

  std::string vcsv = "tau,t,x,V,intervene,xi\n";
  std::size_t intervention_nodes = 0;
  for (std::size_t s = 0; s < grid.tau_values.size(); ++s)
    for (std::size_t k = 0; k < sol.value.t_nodes[s].size(); ++k)
      for (std::size_t i = 0; i < sol.value.x_nodes.size(); ++i) {
        bool iv = sol.policy.intervene[s][k][i] != 0;
        if (iv) ++intervention_nodes;
        vcsv += fmt(grid.tau_values[s]) + "," + fmt(sol.value.t_nodes[s][k]) +
                "," + fmt(sol.value.x_nodes[i]) + "," +
                fmt(sol.value.values[s][k][i]) + "," + (iv ? "1" : "0") + "," +
                fmt(iv ? sol.policy.impulse_size[s][k][i] : 0.0) + "\n";
      }
  write_file(ctx.out / "value.csv", vcsv);

  // region plot data: (t, x, 0/1) per tau slice
  std::string rcsv = "tau,t,x,intervene\n";
  for (std::size_t s = 0; s < grid.tau_values.size(); ++s)
    for (std::size_t k = 0; k < sol.value.t_nodes[s].size(); ++k)
      for (std::size_t i = 0; i < sol.value.x_nodes.size(); ++i)
        rcsv += fmt(grid.tau_values[s]) + "," + fmt(sol.value.t_nodes[s][k]) +
                "," + fmt(sol.value.x_nodes[i]) + "," +
                (sol.policy.intervene[s][k][i] ? "1" : "0") + "\n";
  write_file(ctx.out / "region.csv", rcsv);

  // value profile at the first time node of the first slice
  std::string pcsv = "x,V\n";
  for (std::size_t i = 0; i < sol.value.x_nodes.size(); ++i)
    pcsv += fmt(sol.value.x_nodes[i]) + "," +
            fmt(sol.value.values[0][0][i]) + "\n";
  write_file(ctx.out / "profile.csv", pcsv);

  json j;
  j["residual_max"] = res.max_abs;
  j["residual_p99"] = res.pct99;
  j["residual_nodes"] = res.node_count;
  j["v_min"] = reg.v_min;
  j["v_max"] = reg.v_max;
  j["bound"] = reg.bound;
  j["bounds_ok"] = reg.bounds_ok;
  j["t_holder"] = reg.t_holder;
  j["x_lipschitz"] = reg.x_lipschitz;
  j["tau_variation"] = reg.tau_variation;
  j["intervention_nodes"] = intervention_nodes;
  bool ok = reg.bounds_ok && res.pct99 <= 5e-2;
  if (ctx.cfg.preset == "heat-kernel") {
    double max_err = 0.0;
    for (std::size_t s = 0; s < grid.tau_values.size(); ++s)
      for (std::size_t k = 0; k < sol.value.t_nodes[s].size(); ++k)
        for (std::size_t i = 0; i < sol.value.x_nodes.size(); ++i) {
          double ref = heat_kernel_value(sol.value.t_nodes[s][k],
                                         sol.value.x_nodes[i],
                                         ctx.spec.horizon);
          max_err = std::max(max_err,
                             std::abs(sol.value.values[s][k][i] - ref));
        }
    j["max_error_vs_closed_form"] = max_err;
    ok = ok && max_err <= 2e-2 && intervention_nodes == 0;
  }
  j["ok"] = ok;
  write_json(ctx.out / "qvi_summary.json", j);
  return ok ? kExitOk : kExitCheckFailed;
}

int cmd_check_dpp(const Ctx& ctx) {
  Ctx c2 = ctx;
  // a lighter default grid than solve-qvi: the DPP probe needs V, not a
  // publication-grade residual
  if (!ctx.cfg.tree.has("qvi.t_count")) c2.cfg.tree.set("qvi.t_count", "128");
  if (!ctx.cfg.tree.has("qvi.x_count")) c2.cfg.tree.set("qvi.x_count", "128");
  SolveGrid grid = grid_from_config(c2);
  SolverConfig scfg = solver_from_config(c2);
  QviSolution sol = solve_qvi(ctx.spec, grid, scfg, ctx.cfg.threads);
  int points = ctx.cfg.tree.get_int("dpp.points", 20);
  double delta = ctx.cfg.tree.get_double("dpp.delta", 0.05);
  std::size_t paths = ctx.paths_default(10000);
  DppReport rep = check_dpp(ctx.spec, sol, points, delta, paths, ctx.cfg.seed,
                            ctx.cfg.threads);
  json rows = json::array();
  for (const auto& p : rep.points)
    rows.push_back({{"tau_idx", p.tau_idx},
                    {"t", p.t},
                    {"x", p.x},
                    {"value", p.value},
                    {"mc_value", p.mc_value},
                    {"stderr", p.stderr_},
                    {"continuation", p.continuation},
                    {"inequality_ok", p.inequality_ok},
                    {"equality_ok", p.equality_ok}});
  json j;
  j["points"] = rows;
  j["all_ok"] = rep.all_ok;
  write_json(ctx.out / "dpp.json", j);
  return rep.all_ok ? kExitOk : kExitCheckFailed;
}

int cmd_adjoint(const Ctx& ctx) {
  std::size_t paths = ctx.paths_default(10000);
  int steps = ctx.steps_default(200);
  int degree = ctx.cfg.tree.get_int("adjoint.degree", 3);
  double x0 = ctx.cfg.tree.get_double("adjoint.x0", 0.0);
  ImpulseControl control =
      control_from_config(ctx, "adjoint.impulses", "0.5:1.0");
  PathBundle bundle = make_bundle(ctx.spec, control, x0, paths, steps,
                                  ctx.cfg.seed, ctx.cfg.threads);
  FrozenCoefficients frozen = compute_frozen(ctx.spec, bundle, true);
  FirstAdjoint first = solve_first_adjoint(frozen, degree, ctx.cfg.threads);
  SecondAdjoint second =
      solve_second_adjoint(frozen, first, degree, ctx.cfg.threads);

  const std::size_t N = bundle.grid.nodes.size();
  std::string csv =
      "node,time,Y_mean,Y_std,Z_mean,Z_std,P_mean,P_std,Q_mean,Q_std\n";
  for (std::size_t k = 0; k < N; ++k) {
    auto stats = [&](const std::vector<std::vector<double>>& a) {
      std::vector<double> col(bundle.X.size());
      for (std::size_t p = 0; p < col.size(); ++p) col[p] = a[p][k];
      MeanStderr m = mean_stderr(col);
      return std::pair<double, double>(
          m.mean, m.stderr_ * std::sqrt(static_cast<double>(col.size())));
    };
    auto [ym, ys] = stats(first.Y);
    auto [zm, zs] = stats(first.Z);
    auto [pm, ps] = stats(second.P);
    auto [qm, qs] = stats(second.Q);
    csv += std::to_string(k) + "," + fmt(bundle.grid.nodes[k]) + "," +
           fmt(ym) + "," + fmt(ys) + "," + fmt(zm) + "," + fmt(zs) + "," +
           fmt(pm) + "," + fmt(ps) + "," + fmt(qm) + "," + fmt(qs) + "\n";
  }
  write_file(ctx.out / "adjoint.csv", csv);

  json j;
  j["control"] = control_to_json(control);
  j["x0"] = x0;
  j["paths"] = paths;
  j["steps"] = steps;
  j["degree"] = degree;
  j["seed"] = ctx.cfg.seed;
  j["degree_reduced"] = first.degree_reduced || second.degree_reduced;
  j["fd_check_ok"] = frozen.fd_check_ok;
  write_json(ctx.out / "adjoint.json", j);
  return kExitOk;
}

int cmd_check_mp(const Ctx& ctx) {
  fs::path art = ctx.out / "adjoint.json";
  if (!fs::exists(art)) {
    std::fprintf(stderr,
                 "check-mp: missing upstream artifact %s (run adjoint first)\n",
                 art.string().c_str());
    return kExitMissingArtifact;
  }
  std::ifstream in(art);
  json aj = json::parse(in);
  ImpulseControl control =
      control_from_json(aj.at("control"), 0.0, ctx.spec);
  if (control.impulses.empty())
    throw IcError("check-mp: the adjoint artifact has no impulses");
  double x0 = aj.at("x0").get<double>();
  std::size_t paths = aj.at("paths").get<std::size_t>();
  int steps = aj.at("steps").get<int>();
  int degree = aj.at("degree").get<int>();
  std::uint64_t seed = aj.at("seed").get<std::uint64_t>();

  double eps = ctx.cfg.tree.get_double("mp.eps", 0.05);
  double eps_bar = ctx.cfg.tree.get_double("mp.eps_bar", 0.05);
  double eta = ctx.cfg.tree.get_double("mp.eta", 0.0);
  int eta_count = ctx.cfg.tree.get_int("mp.eta_count", 9);

  std::vector<double> extra;
  for (const auto& im : control.impulses)
    if (im.time + eps_bar <= ctx.spec.horizon)
      extra.push_back(im.time + eps_bar);
  PathBundle bundle = make_bundle(ctx.spec, control, x0, paths, steps, seed,
                                  ctx.cfg.threads, extra);
  FrozenCoefficients frozen = compute_frozen(ctx.spec, bundle, true);
  FirstAdjoint first = solve_first_adjoint(frozen, degree, ctx.cfg.threads);
  SecondAdjoint second =
      solve_second_adjoint(frozen, first, degree, ctx.cfg.threads);
  HamiltonianPath ham = hamiltonian_bundle(frozen, first, ctx.cfg.threads);

  std::vector<double> eta_grid;
  for (int i = 0; i < eta_count; ++i)
    eta_grid.push_back(ctx.spec.cone.size_cap * i / (eta_count - 1));
  MPReport rep = check_mp_conditions(ctx.spec, frozen, first, second, ham,
                                     eta_grid, eps_bar, ctx.cfg.threads);

  json impulses = json::array();
  bool vi_ok = true;
  for (std::size_t i = 0; i < rep.impulses.size(); ++i) {
    const auto& per = rep.impulses[i];
    json e;
    e["index"] = per.index;
    e["mp1"] = {{"tag", per.mp1.tag},
                {"value", per.mp1.value},
                {"stderr", per.mp1.stderr_},
                {"pass", per.mp1.pass},
                {"skipped", per.mp1_skipped}};
    json mp2 = json::array();
    for (const auto& c : per.mp2)
      mp2.push_back({{"eta", c.eta},
                     {"value", c.value},
                     {"stderr", c.stderr_},
                     {"pass", c.pass}});
    e["mp2"] = mp2;
    e["stationarity"] = {{"tag", per.stationarity.tag},
                         {"value", per.stationarity.value},
                         {"stderr", per.stationarity.stderr_},
                         {"pass", per.stationarity.pass}};
    // variational inequality for the forward spike at this impulse
    try {
      Perturbation p;
      p.index = per.index;
      p.eps = eps;
      p.eps_bar = eps_bar;
      p.forward = true;
      p.eta = eta;
      VariationalProcesses var =
          simulate_variational(ctx.spec, frozen, p, ctx.cfg.threads);
      VariationalInequalityResult vi = variational_inequality(
          ctx.spec, frozen, first, second, ham, var, p, ctx.cfg.threads);
      DualityResult d1 = duality_first(frozen, first, var, ctx.cfg.threads);
      DualityResult d2 =
          duality_second(frozen, first, second, var, ctx.cfg.threads);
      bool direct_ok = vi.direct >= -3.0 * vi.direct_stderr;
      vi_ok = vi_ok && direct_ok;
      e["variational"] = {{"formula", vi.formula},
                         {"formula_stderr", vi.formula_stderr},
                         {"direct", vi.direct},
                         {"direct_stderr", vi.direct_stderr},
                         {"direct_ok", direct_ok}};
      e["duality1"] = {{"lhs", d1.lhs},
                       {"rhs", d1.rhs},
                       {"gap", d1.gap},
                       {"stderr", d1.stderr_}};
      e["duality2"] = {{"lhs", d2.lhs},
                       {"rhs", d2.rhs},
                       {"gap", d2.gap},
                       {"stderr", d2.stderr_}};
    } catch (const IcError& err) {
      e["variational"] = {{"skipped", err.what()}};
    }
    impulses.push_back(e);
  }
  json j;
  j["impulses"] = impulses;
  j["mp_all_pass"] = rep.all_pass;
  j["variational_ok"] = vi_ok;
  write_json(ctx.out / "mp.json", j);
  return (rep.all_pass && vi_ok) ? kExitOk : kExitCheckFailed;
}

int cmd_expansion(const Ctx& ctx) {
  std::size_t paths = ctx.paths_default(4000);
  int steps = ctx.steps_default(100);
  double x0 = ctx.cfg.tree.get_double("expansion.x0", 0.0);
  double eta = ctx.cfg.tree.get_double("expansion.eta", 0.0);
  double coupling = ctx.cfg.tree.get_double("expansion.coupling", 1.0);
  int index = ctx.cfg.tree.get_int("expansion.index", 0);
  int m = ctx.cfg.tree.get_int("expansion.m", 1);
  std::vector<double> eps = ctx.cfg.tree.get_list("expansion.eps");
  if (eps.empty()) eps = {0.2, 0.1, 0.05, 0.025};
  ImpulseControl control =
      control_from_config(ctx, "expansion.impulses", "0.5:1.0");
  ExpansionReport rep =
      check_expansion_orders(ctx.spec, control, x0, index, eta, eps, coupling,
                             m, paths, steps, ctx.cfg.seed, ctx.cfg.threads);

  std::string csv = "epsilon,claim,estimate\n";
  std::string loglog = "claim,log_eps,log_estimate\n";
  const char* names[3] = {"X1", "remainder1", "remainder2"};
  const std::vector<double>* est[3] = {&rep.est_X1, &rep.est_rem1,
                                       &rep.est_rem2};
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < eps.size(); ++i) {
      csv += fmt(eps[i]) + std::string(",") + names[c] + "," +
             fmt((*est[c])[i]) + "\n";
      if ((*est[c])[i] > 0.0)
        loglog += std::string(names[c]) + "," + fmt(std::log(eps[i])) + "," +
                  fmt(std::log((*est[c])[i])) + "\n";
    }
  write_file(ctx.out / "expansion.csv", csv);
  write_file(ctx.out / "expansion_loglog.csv", loglog);

  json j;
  j["eps"] = rep.eps;
  j["est_dX"] = rep.est_dX;
  j["est_X1"] = rep.est_X1;
  j["est_rem1"] = rep.est_rem1;
  j["est_rem2"] = rep.est_rem2;
  j["slope_X1"] = rep.slope_X1;
  j["slope_rem1"] = rep.slope_rem1;
  j["slope_rem2"] = rep.slope_rem2;
  j["pass_X1"] = rep.pass_X1;
  j["pass_rem1"] = rep.pass_rem1;
  j["pass_rem2"] = rep.pass_rem2;
  j["inconclusive"] = rep.inconclusive;
  write_json(ctx.out / "expansion.json", j);
  bool ok = rep.pass_X1 && rep.pass_rem1 && rep.pass_rem2 &&
            !rep.inconclusive;
  return ok ? kExitOk : kExitCheckFailed;
}

int cmd_report(const Ctx& ctx) {
  const char* files[] = {"assumption_report.json", "cost.json",
                         "qvi_summary.json",       "dpp.json",
                         "adjoint.json",           "mp.json",
                         "expansion.json"};
  json agg = json::object();
  std::string table;
  int found = 0;
  for (const char* f : files) {
    fs::path p = ctx.out / f;
    if (!fs::exists(p)) continue;
    std::ifstream in(p);
    json j = json::parse(in);
    agg[f] = j;
    ++found;
    std::string status = "-";
    for (const char* key : {"all_ok", "ok", "mp_all_pass", "pass_X1"})
      if (j.contains(key)) {
        status = j[key].get<bool>() ? "pass" : "FAIL";
        break;
      }
    table += std::string(f) + "  " + status + "\n";
  }
  if (found == 0) {
    std::fprintf(stderr, "report: no artifacts found in %s\n",
                 ctx.out.string().c_str());
    return kExitMissingArtifact;
  }
  write_json(ctx.out / "report.json", agg);
  write_file(ctx.out / "report.txt", table);
  return kExitOk;
}

}  // namespace

int run_command(const std::string& command, const RunConfig& cfg) {
  try {
    Ctx ctx;
    ctx.cfg = cfg;
    if (!cfg.preset.empty())
      ctx.cfg.tree.set("problem.preset", cfg.preset);
    else
      ctx.cfg.preset = ctx.cfg.tree.get("problem.preset", "");
    // report only aggregates files already on disk; no problem needed
    if (command != "report") ctx.spec = problem_from_tree(ctx.cfg.tree);
    ctx.out = cfg.out_dir;
    fs::create_directories(ctx.out);
    write_manifest(ctx, command);

    if (command == "validate") return cmd_validate(ctx);
    if (command == "simulate") return cmd_simulate(ctx);
    if (command == "solve-qvi") return cmd_solve_qvi(ctx);
    if (command == "check-dpp") return cmd_check_dpp(ctx);
    if (command == "adjoint") return cmd_adjoint(ctx);
    if (command == "check-mp") return cmd_check_mp(ctx);
    if (command == "expansion-order") return cmd_expansion(ctx);
    if (command == "report") return cmd_report(ctx);
    std::fprintf(stderr, "unknown command: %s\n", command.c_str());
    return kExitBadConfig;
  } catch (const std::exception& e) {
    std::string what = e.what();
    std::fprintf(stderr, "error: %s\n", what.c_str());
    if (what.rfind("unknown preset", 0) == 0) return kExitUnknownPreset;
    if (what.rfind("malformed config", 0) == 0) return kExitBadConfig;
    if (what.find("missing upstream artifact") != std::string::npos)
      return kExitMissingArtifact;
    return kExitCheckFailed;
  }
}

ImpulseControl extract_qvi_control(const ProblemSpec& spec,
                                   const QviSolution& sol, double x0,
                                   std::size_t paths, int base_steps,
                                   std::uint64_t seed, std::size_t impulse_cap,
                                   int threads) {
  GridPolicy policy(sol.policy, 0);
  Vec x0v = vzero();
  x0v[0] = x0;
  PolicyEvaluation ev = evaluate_policy(spec, policy, x0v, paths, base_steps,
                                        seed, impulse_cap, threads);
  // modal impulse count over paths
  std::size_t kappa = 0, best = 0;
  for (std::size_t k = 0; k < ev.kappa_histogram.size(); ++k)
    if (ev.kappa_histogram[k] > best) {
      best = ev.kappa_histogram[k];
      kappa = k;
    }
  ImpulseControl control;
  if (kappa == 0) return control;

  // most frequent intervention times, mean size per chosen time
  std::map<double, std::pair<std::size_t, double>> by_time;
  for (std::size_t e = 0; e < ev.impulse_times.size(); ++e) {
    auto& slot = by_time[ev.impulse_times[e]];
    slot.first += 1;
    slot.second += ev.impulse_sizes[e];
  }
  std::vector<std::pair<std::size_t, double>> ranked;  // (count, time)
  for (const auto& [time, slot] : by_time) ranked.push_back({slot.first, time});
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<Impulse> raw;
  for (std::size_t k = 0; k < kappa && k < ranked.size(); ++k) {
    const auto& slot = by_time[ranked[k].second];
    Impulse im;
    im.time = ranked[k].second;
    im.size[0] = slot.second / static_cast<double>(slot.first);
    raw.push_back(im);
  }
  control = normalize_control(raw, 0.0, spec.horizon, spec.cone);

  // The grid policy is stationary for the relaxed dynamic program, not for
  // the pathwise cost of a fixed schedule, so the raw times and sizes carry
  // a first-order mismatch. Descend on both coordinates under common noise
  // until the schedule stops improving.
  std::size_t eval_paths = paths;
  int eval_steps = base_steps;
  auto cost_of = [&](const ImpulseControl& c) {
    return estimate_cost(spec, c, x0v, eval_paths, eval_steps, seed, threads)
        .mean;
  };
  const double cap = spec.cone.size_cap;
  const double gap = 1e-3;  // keeps neighbouring times distinct
  double best_cost = 0.0;

  auto try_candidate = [&](std::size_t i, double t, double s) {
    ImpulseControl cand = control;
    cand.impulses[i].time = t;
    cand.impulses[i].size[0] = s;
    double c = cost_of(cand);
    if (c < best_cost - 1e-12) {
      best_cost = c;
      control = cand;
    }
  };
  auto refine_size = [&](std::size_t i, double span) {
    while (true) {
      double center = control.impulses[i].size[0];
      double a = std::max(0.0, center - span);
      double b = std::min(cap, center + span);
      for (int k = 0; k <= 6; ++k)
        try_candidate(i, control.impulses[i].time, a + k * (b - a) / 6.0);
      if (span < 0.02 * cap) break;
      span /= 5.0;
    }
  };
  auto refine_time = [&](std::size_t i, double frac) {
    double lo = control.start_time + gap;
    double hi = spec.horizon - gap;
    if (i > 0) lo = std::max(lo, control.impulses[i - 1].time + gap);
    if (i + 1 < control.impulses.size())
      hi = std::min(hi, control.impulses[i + 1].time - gap);
    if (hi <= lo) return;
    double span = frac * (hi - lo);
    while (true) {
      double center = control.impulses[i].time;
      double a = std::max(lo, center - span);
      double b = std::min(hi, center + span);
      for (int k = 0; k <= 6; ++k)
        try_candidate(i, a + k * (b - a) / 6.0, control.impulses[i].size[0]);
      if (span < 0.01 * (hi - lo)) break;
      span /= 5.0;
    }
  };
  // interventions the descent has driven to uselessness still pay the fixed
  // part of the intervention cost; drop them outright
  auto drop_pass = [&]() {
    bool dropped = false;
    for (std::size_t i = control.impulses.size(); i-- > 0;) {
      ImpulseControl cand = control;
      cand.impulses.erase(cand.impulses.begin() + i);
      double c = cost_of(cand);
      if (c < best_cost - 1e-12) {
        best_cost = c;
        control = cand;
        dropped = true;
      }
    }
    return dropped;
  };
  auto descend = [&](int max_sweeps, double size_span, double time_frac) {
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      double at_entry = best_cost;
      for (std::size_t i = 0; i < control.impulses.size(); ++i) {
        refine_size(i, size_span);
        refine_time(i, time_frac);
      }
      if (at_entry - best_cost < 1e-7) break;
    }
  };

  // screening at reduced fidelity prunes the schedule cheaply
  eval_paths = std::min<std::size_t>(paths, 1000);
  eval_steps = std::min(base_steps, 100);
  best_cost = cost_of(control);
  for (int round = 0; round < 3; ++round) {
    descend(3, cap, 0.5);
    if (!drop_pass()) break;
  }
  // final polish of the survivors at the requested fidelity
  eval_paths = paths;
  eval_steps = base_steps;
  best_cost = cost_of(control);
  descend(3, 0.2 * cap, 0.1);
  drop_pass();
  return control;
}

}  // namespace ic
