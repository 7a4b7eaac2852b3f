#include "kktsens/problem_file.hpp"

#include <doctest.h>

#include <cmath>
#include <string>

#include "kktsens/solver.hpp"
#include "support/oracles.hpp"

using namespace kktsens;

namespace {

std::string problem_path(const char* name) {
  return std::string(KKTSENS_PROBLEM_DIR) + "/" + name;
}

// Minimal valid document, used as the base for the malformed-input cases.
const char* kTinyProblem = R"({
  "schema": 1,
  "variables": [{"name": "x", "lower": 0.0}],
  "parameters": [{"name": "p", "value": 2.0}],
  "constraints": [{"expr": "x", "rel": ">=", "rhs": "p"}],
  "objective": {"sense": "min", "expr": "x^2"}
})";

}  // namespace

TEST_CASE("the shipped generator dispatch file loads and solves") {
  LoadedProblem lp = load_problem_file(problem_path("dispatch.json"));
  ParametricProgram& prog = *lp.program;
  CHECK(!lp.loss.has_value());

  REQUIRE(prog.num_variables() == 3);
  REQUIRE(prog.num_parameters() == 1);
  REQUIRE(prog.num_constraints() == 1);
  CHECK(prog.variable_name(0) == "g1");
  CHECK(prog.lower_bound(0) == 0.0);
  CHECK(prog.upper_bound(0) == 150.0);
  CHECK(prog.upper_bound(2) == std::nullopt);
  CHECK(prog.parameter_name(0) == "d");
  CHECK(prog.parameter_value(0) == 100.0);

  CanonicalForm cf = prog.canonicalize();
  CHECK(cf.num_vars() == 5);
  CHECK(cf.num_constraints() == 3);
  SolveResult r = solve(cf, prog.parameter_values());
  const auto want = testsup::dispatch_closed_form(100.0);
  const Eigen::VectorXd user = cf.user_variables(r.point.x);
  CHECK(std::abs(user[0] - want.g1) < 1e-6);
  CHECK(std::abs(user[1] - want.g2) < 1e-6);
  CHECK(std::abs(r.point.objective - testsup::dispatch_objective(want)) < 1e-6);
}

TEST_CASE("the shipped reach file solves to the bent-arm pose") {
  LoadedProblem lp = load_problem_file(problem_path("ik.json"));
  CanonicalForm cf = lp.program->canonicalize();
  SolveResult r = solve(cf, lp.program->parameter_values());
  CHECK(std::abs(r.point.x[0] - 0.0) < 1e-7);
  CHECK(std::abs(r.point.x[1] - M_PI / 2.0) < 1e-7);
}

TEST_CASE("the shipped allocation file carries a tracking loss") {
  LoadedProblem lp = load_problem_file(problem_path("portfolio.json"));
  ParametricProgram& prog = *lp.program;
  REQUIRE(lp.loss.has_value());
  CHECK(prog.objective_sense() == Sense::Maximize);

  // the loss is zero exactly at its reference weights
  Eigen::VectorXd at_ref(3), pv(1);
  at_ref << 0.2, 0.3, 0.5;
  pv << 0.04;
  CHECK(prog.graph().evaluate(lp.loss->id(), at_ref, pv) == 0.0);

  CanonicalForm cf = prog.canonicalize();
  SolveResult r = solve(cf, prog.parameter_values());
  const Eigen::VectorXd user = cf.user_variables(r.point.x);
  const double loss = prog.graph().evaluate(lp.loss->id(), user, pv);
  const double direct = std::pow(user[0] - 0.2, 2) + std::pow(user[1] - 0.3, 2) +
                        std::pow(user[2] - 0.5, 2);
  CHECK(loss == doctest::Approx(direct).epsilon(1e-12));
  CHECK(r.point.objective > 0.05);
}

TEST_CASE("numeric and expression right-hand sides both work") {
  LoadedProblem lp = load_problem(R"({
    "schema": 1,
    "variables": [{"name": "x"}, {"name": "y"}],
    "parameters": [{"name": "p", "value": 4.0}],
    "constraints": [
      {"expr": "x + y", "rel": "==", "rhs": 3},
      {"expr": "x - y", "rel": "<=", "rhs": "p / 2"}
    ],
    "objective": {"sense": "min", "expr": "x^2 + y^2"}
  })");
  CHECK(lp.program->num_constraints() == 2);
  CanonicalForm cf = lp.program->canonicalize();
  SolveResult r = solve(cf, lp.program->parameter_values());
  // symmetric optimum; the inequality is slack there
  CHECK(std::abs(r.point.x[0] - 1.5) < 1e-6);
  CHECK(std::abs(r.point.x[1] - 1.5) < 1e-6);
}

TEST_CASE("malformed documents are rejected with SchemaError") {
  // not an object
  CHECK_THROWS_AS(load_problem("[1, 2]"), SchemaError);
  // unknown top-level field
  CHECK_THROWS_AS(load_problem(R"({"schema": 1, "objective": {"sense": "min",
    "expr": "1"}, "extra": 3})"),
                  SchemaError);
  // missing or unsupported schema version
  CHECK_THROWS_AS(load_problem(R"({"objective": {"sense": "min", "expr": "1"}})"),
                  SchemaError);
  CHECK_THROWS_AS(load_problem(R"({"schema": 2, "objective": {"sense": "min",
    "expr": "1"}})"),
                  SchemaError);
  // wrong container types
  CHECK_THROWS_AS(load_problem(R"({"schema": 1, "variables": {"name": "x"},
    "objective": {"sense": "min", "expr": "1"}})"),
                  SchemaError);
  // missing objective
  CHECK_THROWS_AS(load_problem(R"({"schema": 1})"), SchemaError);
  // bad sense
  CHECK_THROWS_AS(load_problem(R"({"schema": 1, "objective":
    {"sense": "minimise", "expr": "1"}})"),
                  SchemaError);
  // unknown field inside a variable entry
  CHECK_THROWS_AS(load_problem(R"({"schema": 1, "variables":
    [{"name": "x", "start": 0}], "objective": {"sense": "min", "expr": "x"}})"),
                  SchemaError);
  // non-numeric bound
  CHECK_THROWS_AS(load_problem(R"({"schema": 1, "variables":
    [{"name": "x", "lower": "0"}], "objective": {"sense": "min", "expr": "x"}})"),
                  SchemaError);
  // parameter without value
  CHECK_THROWS_AS(load_problem(R"({"schema": 1, "parameters": [{"name": "p"}],
    "objective": {"sense": "min", "expr": "1"}})"),
                  SchemaError);
  // reserved function name used as a variable
  CHECK_THROWS_AS(load_problem(R"({"schema": 1, "variables": [{"name": "sin"}],
    "objective": {"sense": "min", "expr": "1"}})"),
                  SchemaError);
  // unsupported relation
  CHECK_THROWS_AS(load_problem(R"({"schema": 1, "variables": [{"name": "x"}],
    "constraints": [{"expr": "x", "rel": "<", "rhs": 0}],
    "objective": {"sense": "min", "expr": "x"}})"),
                  SchemaError);
  // rhs of a bad type
  CHECK_THROWS_AS(load_problem(R"({"schema": 1, "variables": [{"name": "x"}],
    "constraints": [{"expr": "x", "rel": ">=", "rhs": true}],
    "objective": {"sense": "min", "expr": "x"}})"),
                  SchemaError);
  // loss with stray fields
  CHECK_THROWS_AS(load_problem(R"({"schema": 1, "variables": [{"name": "x"}],
    "objective": {"sense": "min", "expr": "x"},
    "loss": {"expr": "x", "weight": 2}})"),
                  SchemaError);
}

TEST_CASE("non-JSON input and unreadable files raise ParseError") {
  CHECK_THROWS_AS(load_problem("this is not json {{{"), ParseError);
  CHECK_THROWS_AS(load_problem(""), ParseError);
  CHECK_THROWS_AS(load_problem_file("/nonexistent/nowhere.json"), ParseError);
}

TEST_CASE("expression and naming errors keep their precise types") {
  std::string broken_expr(kTinyProblem);
  const size_t at = broken_expr.find("\"x^2\"");
  REQUIRE(at != std::string::npos);
  broken_expr.replace(at, 5, "\"x +\"");
  CHECK_THROWS_AS(load_problem(broken_expr), SyntaxError);

  std::string unknown(kTinyProblem);
  const size_t at2 = unknown.find("\"x^2\"");
  unknown.replace(at2, 5, "\"x + q\"");
  CHECK_THROWS_AS(load_problem(unknown), UnknownSymbol);

  CHECK_THROWS_AS(load_problem(R"({"schema": 1,
    "variables": [{"name": "x"}, {"name": "x"}],
    "objective": {"sense": "min", "expr": "x"}})"),
                  DuplicateName);
}
