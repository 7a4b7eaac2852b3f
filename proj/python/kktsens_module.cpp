// Python bindings for the solver and sensitivity library.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kktsens/model.hpp"
#include "kktsens/parser.hpp"
#include "kktsens/problem_file.hpp"
#include "kktsens/sensitivity.hpp"
#include "kktsens/solver.hpp"

namespace py = pybind11;
using namespace kktsens;

namespace {

// Result objects keep whichever argument owns the expression graph alive.
constexpr auto keep_result = py::keep_alive<0, 1>();

}  // namespace

PYBIND11_MODULE(kktsens, m) {
  m.doc() =
      "Parametric nonlinear programs with derivatives of the optimal "
      "solution with respect to the parameters";

  // -- exceptions -----------------------------------------------------------
  // Registration order matters: translators run newest-first, so the base
  // goes in first and each concrete type afterwards.
  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<DomainError>(m, "DomainError", base);
  py::register_exception<DimensionMismatch>(m, "DimensionMismatch", base);
  py::register_exception<DuplicateName>(m, "DuplicateName", base);
  py::register_exception<InvalidBounds>(m, "InvalidBounds", base);
  py::register_exception<NoObjective>(m, "NoObjective", base);
  py::register_exception<StaleHandle>(m, "StaleHandle", base);
  py::register_exception<UnknownSymbol>(m, "UnknownSymbol", base);
  py::register_exception<SyntaxError>(m, "SyntaxError", base);
  py::register_exception<SchemaError>(m, "SchemaError", base);
  py::register_exception<ParseError>(m, "ParseError", base);
  py::register_exception<MaxIterations>(m, "MaxIterations", base);
  py::register_exception<Infeasible>(m, "Infeasible", base);
  py::register_exception<NotStationary>(m, "NotStationary", base);
  py::register_exception<SingularKkt>(m, "SingularKkt", base);
  py::register_exception<ConflictingSeeds>(m, "ConflictingSeeds", base);
  py::register_exception<NoSeed>(m, "NoSeed", base);
  py::register_exception<QueryBeforeDifferentiate>(
      m, "QueryBeforeDifferentiate", base);

  // -- enums and handles ----------------------------------------------------
  py::enum_<Relation>(m, "Relation")
      .value("EQ", Relation::Eq)
      .value("LE", Relation::Le)
      .value("GE", Relation::Ge);
  py::enum_<Sense>(m, "Sense")
      .value("MINIMIZE", Sense::Minimize)
      .value("MAXIMIZE", Sense::Maximize);

  py::class_<VariableRef>(m, "VariableRef")
      .def_readonly("index", &VariableRef::index);
  py::class_<ParameterRef>(m, "ParameterRef")
      .def_readonly("index", &ParameterRef::index);
  py::class_<ConstraintRef>(m, "ConstraintRef")
      .def_readonly("index", &ConstraintRef::index);

  // -- expressions ----------------------------------------------------------
  py::class_<Expr>(m, "Expr")
      .def(py::init<VariableRef>(), py::keep_alive<1, 2>())
      .def(py::init<ParameterRef>(), py::keep_alive<1, 2>())
      .def("__add__", [](Expr a, Expr b) { return a + b; }, keep_result)
      .def("__add__", [](Expr a, double b) { return a + b; }, keep_result)
      .def("__radd__", [](Expr a, double b) { return b + a; }, keep_result)
      .def("__sub__", [](Expr a, Expr b) { return a - b; }, keep_result)
      .def("__sub__", [](Expr a, double b) { return a - b; }, keep_result)
      .def("__rsub__", [](Expr a, double b) { return b - a; }, keep_result)
      .def("__mul__", [](Expr a, Expr b) { return a * b; }, keep_result)
      .def("__mul__", [](Expr a, double b) { return a * b; }, keep_result)
      .def("__rmul__", [](Expr a, double b) { return b * a; }, keep_result)
      .def("__truediv__", [](Expr a, Expr b) { return a / b; }, keep_result)
      .def("__truediv__", [](Expr a, double b) { return a / b; }, keep_result)
      .def("__rtruediv__", [](Expr a, double b) { return b / a; }, keep_result)
      .def("__neg__", [](Expr a) { return -a; }, keep_result)
      .def("__pow__", [](Expr a, double e) { return pow(a, e); }, keep_result);
  py::implicitly_convertible<VariableRef, Expr>();
  py::implicitly_convertible<ParameterRef, Expr>();

  m.def("sin", [](Expr a) { return sin(a); }, keep_result);
  m.def("cos", [](Expr a) { return cos(a); }, keep_result);
  m.def("tan", [](Expr a) { return tan(a); }, keep_result);
  m.def("exp", [](Expr a) { return exp(a); }, keep_result);
  m.def("log", [](Expr a) { return log(a); }, keep_result);
  m.def("sqrt", [](Expr a) { return sqrt(a); }, keep_result);
  m.def("pow", [](Expr a, double e) { return pow(a, e); }, keep_result);

  // -- program --------------------------------------------------------------
  py::class_<CanonicalForm>(m, "CanonicalForm")
      .def_property_readonly("num_vars", &CanonicalForm::num_vars)
      .def_property_readonly("num_constraints", &CanonicalForm::num_constraints)
      .def_property_readonly("num_parameters", &CanonicalForm::num_parameters)
      .def_property_readonly("num_bounded", &CanonicalForm::num_bounded)
      .def_property_readonly("num_user_vars", &CanonicalForm::num_user_vars)
      .def_property_readonly("num_user_constraints",
                             &CanonicalForm::num_user_constraints)
      .def_property_readonly("objective_sign", &CanonicalForm::objective_sign)
      .def("bounded_indices", &CanonicalForm::bounded_indices)
      .def("shift", &CanonicalForm::shift, py::arg("canonical_index"))
      .def("user_variables", &CanonicalForm::user_variables,
           py::arg("canonical_x"));

  py::class_<ParametricProgram>(m, "Program")
      .def(py::init<>())
      .def("add_variable", &ParametricProgram::add_variable, py::arg("name"),
           py::arg("lower") = std::nullopt, py::arg("upper") = std::nullopt,
           keep_result)
      .def("add_parameter", &ParametricProgram::add_parameter, py::arg("name"),
           py::arg("value"), keep_result)
      .def("add_constraint", &ParametricProgram::add_constraint,
           py::arg("lhs"), py::arg("rel"), py::arg("rhs"), keep_result)
      .def("set_objective", &ParametricProgram::set_objective,
           py::arg("sense"), py::arg("expr"))
      .def("set_parameter_value", &ParametricProgram::set_parameter_value,
           py::arg("parameter"), py::arg("value"))
      .def_property_readonly("num_variables",
                             &ParametricProgram::num_variables)
      .def_property_readonly("num_parameters",
                             &ParametricProgram::num_parameters)
      .def_property_readonly("num_constraints",
                             &ParametricProgram::num_constraints)
      .def("variable_name", &ParametricProgram::variable_name, py::arg("i"))
      .def("parameter_name", &ParametricProgram::parameter_name, py::arg("i"))
      .def("parameter_value", &ParametricProgram::parameter_value, py::arg("i"))
      .def("parameter_values", &ParametricProgram::parameter_values)
      .def("find_variable", &ParametricProgram::find_variable, py::arg("name"),
           keep_result)
      .def("find_parameter", &ParametricProgram::find_parameter,
           py::arg("name"), keep_result)
      .def("variable", &ParametricProgram::variable, py::arg("i"), keep_result)
      .def("parameter", &ParametricProgram::parameter, py::arg("i"),
           keep_result)
      .def("constraint", &ParametricProgram::constraint, py::arg("i"),
           keep_result)
      .def("constant",
           [](ParametricProgram& prog, double value) {
             return Expr(&prog.graph(), prog.graph().constant(value));
           },
           py::arg("value"), keep_result)
      .def("parse",
           [](ParametricProgram& prog, const std::string& text) {
             return parse_expression(prog, text);
           },
           py::arg("text"), keep_result)
      .def("to_string",
           [](const ParametricProgram& prog, Expr e) {
             return to_string(prog, e);
           },
           py::arg("expr"))
      .def("canonicalize", &ParametricProgram::canonicalize, keep_result);

  // -- solver ---------------------------------------------------------------
  py::class_<SolverConfig>(m, "SolverConfig")
      .def(py::init<>())
      .def_readwrite("kkt_tolerance", &SolverConfig::kkt_tolerance)
      .def_readwrite("max_iterations", &SolverConfig::max_iterations)
      .def_readwrite("mu_init", &SolverConfig::mu_init)
      .def_readwrite("mu_reduction", &SolverConfig::mu_reduction)
      .def_readwrite("fraction_to_boundary", &SolverConfig::fraction_to_boundary)
      .def_readwrite("newton_regularization",
                     &SolverConfig::newton_regularization)
      .def_readwrite("initial_point", &SolverConfig::initial_point);

  py::class_<PrimalDualPoint>(m, "PrimalDualPoint")
      .def(py::init<>())
      .def_readwrite("x", &PrimalDualPoint::x)
      .def_readwrite("lam", &PrimalDualPoint::lambda)
      .def_readwrite("nu", &PrimalDualPoint::nu)
      .def_readwrite("p", &PrimalDualPoint::p)
      .def_readwrite("objective", &PrimalDualPoint::objective);

  py::class_<KktResidual>(m, "KktResidual")
      .def_readonly("stationarity", &KktResidual::stationarity)
      .def_readonly("primal", &KktResidual::primal)
      .def_readonly("complementarity", &KktResidual::complementarity)
      .def("inf_norm", &KktResidual::inf_norm);

  py::class_<SolveResult>(m, "SolveResult")
      .def_readonly("point", &SolveResult::point)
      .def_readonly("iterations", &SolveResult::iterations)
      .def_readonly("kkt_residual", &SolveResult::kkt_residual)
      .def_readonly("mu_trace", &SolveResult::mu_trace)
      .def_readonly("max_regularization", &SolveResult::max_regularization);

  py::class_<RegularityReport>(m, "RegularityReport")
      .def_readonly("strict_complementarity_margin",
                    &RegularityReport::strict_complementarity_margin)
      .def_readonly("scs_ok", &RegularityReport::scs_ok)
      .def_readonly("near_degenerate", &RegularityReport::near_degenerate)
      .def_readonly("licq_sigma_min", &RegularityReport::licq_sigma_min)
      .def_readonly("licq_ok", &RegularityReport::licq_ok);

  m.def("solve", &solve, py::arg("canonical"), py::arg("p"),
        py::arg("config") = SolverConfig());
  m.def("kkt_residual", &kkt_residual, py::arg("canonical"), py::arg("point"));
  m.def("check_regularity", &check_regularity, py::arg("canonical"),
        py::arg("point"), py::arg("eps_degenerate") = 1e-4);
  m.def("adopt_external_point", &adopt_external_point, py::arg("canonical"),
        py::arg("user_x"), py::arg("lam"), py::arg("user_nu"), py::arg("p"),
        py::arg("tolerance") = 1e-6);

  // -- sensitivity ----------------------------------------------------------
  py::class_<RegularizationPolicy>(m, "RegularizationPolicy")
      .def(py::init<>())
      .def_readwrite("initial_delta", &RegularizationPolicy::initial_delta);

  py::class_<KktSystem>(m, "KktSystem")
      .def(py::init<const CanonicalForm&, const PrimalDualPoint&,
                    RegularizationPolicy>(),
           py::arg("canonical"), py::arg("point"),
           py::arg("policy") = RegularizationPolicy(), py::keep_alive<1, 2>())
      .def_property_readonly("dimension", &KktSystem::dimension)
      .def_property_readonly("n", &KktSystem::n)
      .def_property_readonly("m", &KktSystem::m)
      .def_property_readonly("nb", &KktSystem::nb)
      .def_property_readonly("damping", &KktSystem::damping)
      .def_property_readonly("factorization_count",
                             &KktSystem::factorization_count)
      .def_property_readonly("solve_count", &KktSystem::solve_count)
      .def("matrix", &KktSystem::matrix,
           py::return_value_policy::reference_internal)
      .def("parameter_jacobian", &KktSystem::parameter_jacobian,
           py::return_value_policy::reference_internal)
      .def("solve", &KktSystem::solve, py::arg("rhs"))
      .def("solve_transpose", &KktSystem::solve_transpose, py::arg("rhs"));

  py::class_<SensitivitySession>(m, "SensitivitySession")
      .def(py::init<const CanonicalForm&, PrimalDualPoint,
                    RegularizationPolicy>(),
           py::arg("canonical"), py::arg("point"),
           py::arg("policy") = RegularizationPolicy(), py::keep_alive<1, 2>())
      .def_property_readonly("damping", &SensitivitySession::damping)
      .def_property_readonly("kkt", &SensitivitySession::kkt,
                             py::return_value_policy::reference_internal)
      .def_property_readonly("point", &SensitivitySession::point,
                             py::return_value_policy::reference_internal)
      .def("set_forward_parameter", &SensitivitySession::set_forward_parameter,
           py::arg("parameter"), py::arg("value"))
      .def("set_reverse_variable", &SensitivitySession::set_reverse_variable,
           py::arg("variable"), py::arg("weight"))
      .def("set_reverse_objective", &SensitivitySession::set_reverse_objective,
           py::arg("weight"))
      .def("empty_input_sensitivities",
           &SensitivitySession::empty_input_sensitivities)
      .def("forward_differentiate", &SensitivitySession::forward_differentiate)
      .def("reverse_differentiate", &SensitivitySession::reverse_differentiate)
      .def("get_forward_variable", &SensitivitySession::get_forward_variable,
           py::arg("variable"))
      .def("get_forward_dual", &SensitivitySession::get_forward_dual,
           py::arg("constraint"))
      .def("get_forward_objective", &SensitivitySession::get_forward_objective)
      .def("get_reverse_parameter", &SensitivitySession::get_reverse_parameter,
           py::arg("parameter"))
      .def("forward_tangent", &SensitivitySession::forward_tangent,
           py::return_value_policy::copy)
      .def("full_jacobian", &SensitivitySession::full_jacobian);

  // -- files ----------------------------------------------------------------
  py::class_<LoadedProblem>(m, "LoadedProblem")
      .def_property_readonly(
          "program",
          [](LoadedProblem& lp) -> ParametricProgram& { return *lp.program; },
          py::return_value_policy::reference_internal)
      .def_property_readonly(
          "loss",
          py::cpp_function([](const LoadedProblem& lp) { return lp.loss; },
                           py::keep_alive<0, 1>()));

  m.def("load_problem", &load_problem, py::arg("json_text"));
  m.def("load_problem_file", &load_problem_file, py::arg("path"));
}
