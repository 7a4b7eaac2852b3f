// kkt-sens: solve parametric nonlinear programs and differentiate their
// solutions with respect to the parameters.
//
// Exit codes: 0 success; 2 solver/numerical failure (no convergence,
// infeasible, domain violation, singular linearization, rejected external
// point, failed derivative check); 3 malformed input (files, expressions,
// schemas, unknown names, usage); 4 conflicting sensitivity seeds.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "kktsens/model.hpp"
#include "kktsens/parser.hpp"
#include "kktsens/problem_file.hpp"
#include "kktsens/sensitivity.hpp"
#include "kktsens/solver.hpp"

using nlohmann::json;
using namespace kktsens;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Infinities are legal in reports (e.g. regularity margins of unconstrained
// problems) but not in JSON; encode them as strings.
json json_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return v;
}

int exit_code_for(const Error& e) {
  const std::string& c = e.code();
  if (c == "MaxIterations" || c == "Infeasible" || c == "DomainError" ||
      c == "SingularKkt" || c == "NotStationary") {
    return 2;
  }
  if (c == "ConflictingSeeds") return 4;
  return 3;
}

[[noreturn]] void usage_error(const std::string& message) {
  throw Error("Usage", message);
}

double parse_double(const std::string& text, const std::string& context) {
  try {
    size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) usage_error(context + ": bad number '" + text + "'");
    return v;
  } catch (const std::logic_error&) {
    usage_error(context + ": bad number '" + text + "'");
  }
}

// "name" or "name=value"; the default applies when '=' is absent.
std::pair<std::string, double> split_seed(const std::string& s,
                                          double default_value,
                                          const std::string& context) {
  const size_t eq = s.find('=');
  if (eq == std::string::npos) return {s, default_value};
  if (eq == 0) usage_error(context + ": missing name in '" + s + "'");
  return {s.substr(0, eq), parse_double(s.substr(eq + 1), context)};
}

ParameterRef find_parameter_or_throw(ParametricProgram& prog,
                                     const std::string& name) {
  if (auto p = prog.find_parameter(name)) return *p;
  throw UnknownSymbol(name, 0);
}

VariableRef find_variable_or_throw(ParametricProgram& prog,
                                   const std::string& name) {
  if (auto v = prog.find_variable(name)) return *v;
  throw UnknownSymbol(name, 0);
}

void apply_sets(ParametricProgram& prog, const std::vector<std::string>& sets) {
  for (const std::string& s : sets) {
    auto [name, value] = split_seed(s, 0.0, "--set");
    if (s.find('=') == std::string::npos) {
      usage_error("--set expects name=value, got '" + s + "'");
    }
    prog.set_parameter_value(find_parameter_or_throw(prog, name), value);
  }
}

// Human-readable tag for a canonical variable slot: user variables by name,
// inequality slacks by constraint row, upper-bound slacks by variable.
std::string slot_label(const ParametricProgram& prog, const CanonicalForm& cf,
                       int canonical) {
  if (canonical < cf.num_user_vars()) return prog.variable_name(canonical);
  for (const CanonicalForm::SlackInfo& s : cf.slacks()) {
    if (s.canonical_index != canonical) continue;
    if (s.source == CanonicalForm::SlackSource::Inequality) {
      return "slack:constraint" + std::to_string(s.user_source);
    }
    return "slack:upper:" + prog.variable_name(s.user_source);
  }
  return "slot" + std::to_string(canonical);
}

json regularity_report(const ParametricProgram& prog, const CanonicalForm& cf,
                       const PrimalDualPoint& pt) {
  const RegularityReport reg = check_regularity(cf, pt);
  json near = json::array();
  for (int idx : reg.near_degenerate) near.push_back(slot_label(prog, cf, idx));
  return json{{"strict_complementarity_margin",
               json_double(reg.strict_complementarity_margin)},
              {"strict_complementarity_ok", reg.scs_ok},
              {"near_degenerate", near},
              {"constraint_rank_sigma_min", json_double(reg.licq_sigma_min)},
              {"constraint_rank_ok", reg.licq_ok}};
}

// Reported duals are uniform derivative-style shadow prices: the change of
// the objective, in the problem's own sense, per unit change of the
// constraint right-hand side or bound. That folds in the minimization sign
// and the internal row orientation (lhs-rhs+s for "<=", rhs-lhs otherwise).
double user_dual_factor(const ParametricProgram& prog, const CanonicalForm& cf,
                        int user_constraint) {
  const double orient =
      prog.constraint_relation(user_constraint) == Relation::Le ? -1.0 : 1.0;
  return cf.objective_sign() * orient;
}

json solution_report(ParametricProgram& prog, const CanonicalForm& cf,
                     const SolveResult& r) {
  const Eigen::VectorXd user = cf.user_variables(r.point.x);
  json vars = json::object();
  for (int i = 0; i < prog.num_variables(); ++i) {
    vars[prog.variable_name(i)] = user[i];
  }
  const double sign = cf.objective_sign();
  json duals = json::array();
  for (int j = 0; j < cf.num_user_constraints(); ++j) {
    duals.push_back(user_dual_factor(prog, cf, j) * r.point.lambda[j]);
  }
  json bounds = json::object();
  for (int i = 0; i < prog.num_variables(); ++i) {
    json entry = json::object();
    // d objective / d lower: by stationarity the translated gradient equals
    // the bound multiplier on that slot
    if (prog.lower_bound(i)) entry["lower"] = sign * r.point.nu[i];
    if (prog.upper_bound(i)) {
      for (const CanonicalForm::SlackInfo& s : cf.slacks()) {
        if (s.source == CanonicalForm::SlackSource::UpperBound &&
            s.user_source == i) {
          // the cap enters its row as -(upper - shift): derivative flips
          entry["upper"] = -sign * r.point.lambda[s.constraint_row];
        }
      }
    }
    if (!entry.empty()) bounds[prog.variable_name(i)] = entry;
  }
  return json{{"objective", r.point.objective},
              {"optimum", vars},
              {"duals", duals},
              {"bound_duals", bounds},
              {"iterations", r.iterations},
              {"kkt_residual", r.kkt_residual},
              {"regularity", regularity_report(prog, cf, r.point)}};
}

struct CommonArgs {
  std::string path;
  std::vector<std::string> sets;
  double tolerance = 1e-8;
  int max_iterations = 200;

  void attach(CLI::App* cmd, bool short_tol = true) {
    cmd->add_option("problem", path, "problem JSON file")->required();
    cmd->add_option("--set", sets, "override a parameter, name=value");
    // fdcheck reserves --tol for its own comparison tolerance
    cmd->add_option(short_tol ? "--tol" : "--solver-tol", tolerance,
                    "solver KKT tolerance");
    cmd->add_option("--max-iter", max_iterations, "solver iteration cap");
  }

  SolverConfig config() const {
    SolverConfig cfg;
    cfg.kkt_tolerance = tolerance;
    cfg.max_iterations = max_iterations;
    return cfg;
  }
};

int run_solve(const CommonArgs& args) {
  LoadedProblem lp = load_problem_file(args.path);
  apply_sets(*lp.program, args.sets);
  CanonicalForm cf = lp.program->canonicalize();
  SolveResult r = solve(cf, lp.program->parameter_values(), args.config());
  std::cout << solution_report(*lp.program, cf, r).dump(2) << "\n";
  return 0;
}

int run_sense(const CommonArgs& args, const std::vector<std::string>& forward,
              const std::vector<std::string>& reverse, bool objective,
              double damping) {
  const bool has_fwd = !forward.empty();
  const bool has_rev = !reverse.empty();
  if (has_fwd && (has_rev || objective)) {
    throw ConflictingSeeds(
        "--forward cannot be combined with --reverse or --objective");
  }
  if (has_rev && objective) {
    throw ConflictingSeeds("--reverse cannot be combined with --objective");
  }
  if (!has_fwd && !has_rev && !objective) {
    usage_error("sense needs one of --forward, --reverse, --objective");
  }

  LoadedProblem lp = load_problem_file(args.path);
  ParametricProgram& prog = *lp.program;
  apply_sets(prog, args.sets);
  CanonicalForm cf = prog.canonicalize();
  SolveResult r = solve(cf, prog.parameter_values(), args.config());

  RegularizationPolicy policy;
  policy.initial_delta = damping;
  SensitivitySession session(cf, r.point, policy);

  json out;
  out["objective"] = r.point.objective;
  out["delta"] = session.damping();

  if (has_fwd) {
    json seeds = json::object();
    for (const std::string& s : forward) {
      auto [name, value] = split_seed(s, 1.0, "--forward");
      session.set_forward_parameter(find_parameter_or_throw(prog, name), value);
      seeds[name] = value;
    }
    session.forward_differentiate();
    out["mode"] = "forward";
    out["seed"] = seeds;
    json vt = json::object();
    for (int i = 0; i < prog.num_variables(); ++i) {
      vt[prog.variable_name(i)] = session.get_forward_variable(prog.variable(i));
    }
    out["variable_tangents"] = vt;
    json dt = json::array();
    for (int j = 0; j < cf.num_user_constraints(); ++j) {
      // same sense convention as the solve report's duals
      dt.push_back(user_dual_factor(prog, cf, j) *
                   session.get_forward_dual(prog.constraint(j)));
    }
    out["dual_tangents"] = dt;
    out["objective_tangent"] = session.get_forward_objective();
  } else {
    if (objective) {
      session.set_reverse_objective(1.0);
      out["mode"] = "objective";
    } else {
      json seeds = json::object();
      for (const std::string& s : reverse) {
        auto [name, weight] = split_seed(s, 1.0, "--reverse");
        session.set_reverse_variable(find_variable_or_throw(prog, name), weight);
        seeds[name] = weight;
      }
      out["mode"] = "reverse";
      out["seed"] = seeds;
    }
    session.reverse_differentiate();
    json grad = json::object();
    for (int j = 0; j < prog.num_parameters(); ++j) {
      grad[prog.parameter_name(j)] =
          session.get_reverse_parameter(prog.parameter(j));
    }
    out["parameter_gradient"] = grad;
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

struct SweepArgs {
  std::string param;
  double from = 0.0, to = 0.0;
  int steps = 0;
  std::vector<std::string> tangents;
  bool warm = false;
};

int run_sweep(const CommonArgs& args, const SweepArgs& sw) {
  if (sw.steps < 1) usage_error("--steps must be at least 1");
  LoadedProblem lp = load_problem_file(args.path);
  ParametricProgram& prog = *lp.program;
  apply_sets(prog, args.sets);
  ParameterRef swept = find_parameter_or_throw(prog, sw.param);
  std::vector<VariableRef> tangent_vars;
  for (const std::string& name : sw.tangents) {
    tangent_vars.push_back(find_variable_or_throw(prog, name));
  }
  CanonicalForm cf = prog.canonicalize();
  const bool with_loss = lp.loss.has_value();

  // header
  std::string header = "param,status,iterations,delta,objective";
  for (int i = 0; i < prog.num_variables(); ++i) {
    header += "," + prog.variable_name(i);
  }
  for (int j = 0; j < cf.num_user_constraints(); ++j) {
    header += ",lambda_" + std::to_string(j);
  }
  for (const std::string& name : sw.tangents) header += ",d_" + name;
  header += ",dobjective";
  if (with_loss) header += ",loss,dloss";
  std::cout << header << "\n";

  const int columns = 5 + prog.num_variables() + cf.num_user_constraints() +
                      static_cast<int>(sw.tangents.size()) + 1 +
                      (with_loss ? 2 : 0);

  std::optional<Eigen::VectorXd> warm_start;
  for (int k = 0; k < sw.steps; ++k) {
    const double value =
        sw.steps == 1
            ? sw.from
            : sw.from + (sw.to - sw.from) * (static_cast<double>(k) / (sw.steps - 1));
    prog.set_parameter_value(swept, value);
    const Eigen::VectorXd p = prog.parameter_values();

    std::vector<std::string> cells;
    cells.push_back(fmt(value));
    auto emit_row = [&](const std::string& status) {
      cells.insert(cells.begin() + 1, status);
      std::string line = cells[0];
      for (size_t i = 1; i < cells.size(); ++i) line += "," + cells[i];
      for (int i = static_cast<int>(cells.size()); i < columns; ++i) line += ",";
      std::cout << line << "\n";
    };

    SolverConfig cfg = args.config();
    if (sw.warm && warm_start) cfg.initial_point = *warm_start;
    SolveResult r;
    try {
      r = solve(cf, p, cfg);
    } catch (const Error& e) {
      if (exit_code_for(e) != 2) throw;
      emit_row(e.code());
      warm_start.reset();
      continue;
    }
    if (sw.warm) warm_start = r.point.x;

    const Eigen::VectorXd user = cf.user_variables(r.point.x);
    try {
      SensitivitySession session(cf, r.point);
      session.set_forward_parameter(swept, 1.0);
      session.forward_differentiate();

      cells.push_back(std::to_string(r.iterations));
      cells.push_back(fmt(session.damping()));
      cells.push_back(fmt(r.point.objective));
      for (int i = 0; i < prog.num_variables(); ++i) cells.push_back(fmt(user[i]));
      for (int j = 0; j < cf.num_user_constraints(); ++j) {
        cells.push_back(fmt(user_dual_factor(prog, cf, j) * r.point.lambda[j]));
      }
      for (VariableRef v : tangent_vars) {
        cells.push_back(fmt(session.get_forward_variable(v)));
      }
      cells.push_back(fmt(session.get_forward_objective()));

      if (with_loss) {
        EvalWorkspace ws;
        const double loss =
            prog.graph().evaluate(ws, lp.loss->id(), user, p);
        // Chain rule through the optimal point, pulled back in one reverse
        // sweep: seed the variable cotangent with the loss gradient, then add
        // the loss's direct parameter dependence.
        const Eigen::VectorXd lgx =
            prog.graph().gradient_x(ws, lp.loss->id(), user, p);
        const Eigen::VectorXd lgp =
            prog.graph().gradient_p(ws, lp.loss->id(), user, p);
        for (int i = 0; i < prog.num_variables(); ++i) {
          session.set_reverse_variable(prog.variable(i), lgx[i]);
        }
        session.reverse_differentiate();
        const double dloss =
            session.get_reverse_parameter(swept) + lgp[swept.index];
        cells.push_back(fmt(loss));
        cells.push_back(fmt(dloss));
      }
      emit_row("ok");
    } catch (const Error& e) {
      if (exit_code_for(e) != 2) throw;
      // keep what was already computed for this row; blanks fill the rest
      emit_row(e.code());
    }
  }
  return 0;
}

int run_fdcheck(const CommonArgs& args, double step, double tol,
                double damping) {
  LoadedProblem lp = load_problem_file(args.path);
  ParametricProgram& prog = *lp.program;
  apply_sets(prog, args.sets);
  CanonicalForm cf = prog.canonicalize();
  const Eigen::VectorXd p0 = prog.parameter_values();
  SolveResult center = solve(cf, p0, args.config());

  RegularizationPolicy policy;
  policy.initial_delta = damping;
  SensitivitySession session(cf, center.point, policy);
  const bool singular = session.damping() > 0.0;

  json rows = json::array();
  bool all_ok = true;

  for (int j = 0; j < prog.num_parameters(); ++j) {
    session.empty_input_sensitivities();
    session.set_forward_parameter(prog.parameter(j), 1.0);
    session.forward_differentiate();

    Eigen::VectorXd fwd(prog.num_variables() + 1);
    for (int i = 0; i < prog.num_variables(); ++i) {
      fwd[i] = session.get_forward_variable(prog.variable(i));
    }
    fwd[prog.num_variables()] = session.get_forward_objective();

    auto output_name = [&](int i) {
      return i < prog.num_variables() ? prog.variable_name(i)
                                      : std::string("objective");
    };

    if (singular) {
      for (int i = 0; i < fwd.size(); ++i) {
        rows.push_back(json{{"parameter", prog.parameter_name(j)},
                            {"output", output_name(i)},
                            {"forward", json_double(fwd[i])},
                            {"fd", nullptr},
                            {"rel_err", nullptr},
                            {"status", "singular"}});
      }
      continue;
    }

    const double h = step * std::max(1.0, std::abs(p0[j]));
    auto solve_at = [&](double delta_p) {
      Eigen::VectorXd p = p0;
      p[j] += delta_p;
      SolveResult r = solve(cf, p, args.config());
      Eigen::VectorXd out(prog.num_variables() + 1);
      out.head(prog.num_variables()) = cf.user_variables(r.point.x);
      out[prog.num_variables()] = r.point.objective;
      return out;
    };

    bool fd_failed = false;
    Eigen::VectorXd fd;
    try {
      fd = (solve_at(h) - solve_at(-h)) / (2.0 * h);
    } catch (const Error& e) {
      if (exit_code_for(e) != 2) throw;
      fd_failed = true;
    }

    for (int i = 0; i < fwd.size(); ++i) {
      json row{{"parameter", prog.parameter_name(j)},
               {"output", output_name(i)}};
      row["forward"] = json_double(fwd[i]);
      if (fd_failed) {
        row["fd"] = nullptr;
        row["rel_err"] = nullptr;
        row["status"] = "solve_failed";
        all_ok = false;
      } else {
        const double err = std::abs(fd[i] - fwd[i]) /
                           std::max({1.0, std::abs(fd[i]), std::abs(fwd[i])});
        row["fd"] = json_double(fd[i]);
        row["rel_err"] = json_double(err);
        const bool ok = err <= tol;
        row["status"] = ok ? "ok" : "fail";
        all_ok = all_ok && ok;
      }
      rows.push_back(row);
    }
  }

  json out{{"step", step}, {"tolerance", tol}, {"rows", rows},
           {"passed", all_ok}};
  std::cout << out.dump(2) << "\n";
  return all_ok ? 0 : 2;
}

int run(int argc, char** argv) {
  CLI::App app{"Solve parametric nonlinear programs and differentiate the "
               "optimum with respect to the parameters"};
  app.require_subcommand(1);

  CommonArgs solve_args;
  CLI::App* cmd_solve = app.add_subcommand("solve", "solve and report the optimum");
  solve_args.attach(cmd_solve);

  CommonArgs sense_args;
  std::vector<std::string> fwd_seeds, rev_seeds;
  bool objective_seed = false;
  double sense_damping = 0.0;
  CLI::App* cmd_sense =
      app.add_subcommand("sense", "differentiate the solution at the optimum");
  sense_args.attach(cmd_sense);
  cmd_sense->add_option("--forward", fwd_seeds,
                        "forward seed, parameter name[=value]");
  cmd_sense->add_option("--reverse", rev_seeds,
                        "reverse seed, variable name[=weight]");
  cmd_sense->add_flag("--objective", objective_seed,
                      "reverse seed on the objective");
  cmd_sense->add_option("--damping", sense_damping,
                        "initial diagonal damping for the linear system");

  CommonArgs sweep_args;
  SweepArgs sweep;
  CLI::App* cmd_sweep =
      app.add_subcommand("sweep", "solve along a parameter range, CSV output");
  sweep_args.attach(cmd_sweep);
  cmd_sweep->add_option("--param", sweep.param, "parameter to sweep")->required();
  cmd_sweep->add_option("--from", sweep.from, "first value")->required();
  cmd_sweep->add_option("--to", sweep.to, "last value")->required();
  cmd_sweep->add_option("--steps", sweep.steps, "number of points")->required();
  cmd_sweep->add_option("--tangent", sweep.tangents,
                        "emit d(variable)/d(param) for this variable");
  cmd_sweep->add_flag("--warm", sweep.warm,
                      "start each solve from the previous solution");

  CommonArgs fd_args;
  double fd_step = 1e-6, fd_tol = 1e-4, fd_damping = 0.0;
  CLI::App* cmd_fd = app.add_subcommand(
      "fdcheck", "compare forward sensitivities against central differences");
  fd_args.attach(cmd_fd, /*short_tol=*/false);
  cmd_fd->add_option("--step", fd_step, "relative finite-difference step");
  cmd_fd->add_option("--tol", fd_tol, "relative error tolerance");
  cmd_fd->add_option("--damping", fd_damping,
                     "initial diagonal damping for the linear system");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", {{"type", "Usage"}, {"message", e.what()}}}}.dump()
              << "\n";
    return 3;
  }

  if (cmd_solve->parsed()) return run_solve(solve_args);
  if (cmd_sense->parsed()) {
    return run_sense(sense_args, fwd_seeds, rev_seeds, objective_seed,
                     sense_damping);
  }
  if (cmd_sweep->parsed()) return run_sweep(sweep_args, sweep);
  return run_fdcheck(fd_args, fd_step, fd_tol, fd_damping);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << json{{"error", {{"type", e.code()}, {"message", e.what()}}}}.dump()
              << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"type", "Internal"}, {"message", e.what()}}}}.dump()
              << "\n";
    return 1;
  }
}
