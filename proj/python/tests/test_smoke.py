"""End-to-end smoke tests for the kktsens Python module."""

import math
import os

import numpy as np
import pytest

import kktsens as ks


def build_dispatch():
    """Two-generator economic dispatch with a shortfall slack and demand parameter."""
    prog = ks.Program()
    g1 = prog.add_variable("g1", lower=0.0, upper=150.0)
    g2 = prog.add_variable("g2", lower=0.0, upper=80.0)
    phi = prog.add_variable("phi", lower=0.0)
    d = prog.add_parameter("d", 100.0)
    balance = prog.add_constraint(
        ks.Expr(g1) + ks.Expr(g2) + ks.Expr(phi), ks.Relation.EQ, ks.Expr(d)
    )
    cost = (
        20.0 * ks.Expr(g1)
        + 30.0 * ks.Expr(g2)
        + 0.2 * ks.Expr(g1) ** 2.0
        + 0.1 * ks.Expr(g2) ** 2.0
        + 1000.0 * ks.Expr(phi)
    )
    prog.set_objective(ks.Sense.MINIMIZE, cost)
    return prog, g1, g2, d, balance


class TestModeling:
    def test_operator_expressions_round_trip(self):
        prog = ks.Program()
        x = prog.add_variable("x")
        p = prog.add_parameter("p", 3.0)
        e = (ks.Expr(x) + 1.0) * ks.Expr(p) - 2.0 / ks.Expr(x)
        text = prog.to_string(e)
        reparsed = prog.parse(text)
        assert prog.to_string(reparsed) == text

    def test_parse_rejects_unknown_names(self):
        prog = ks.Program()
        prog.add_variable("x")
        with pytest.raises(ks.UnknownSymbol):
            prog.parse("x + q")

    def test_math_functions(self):
        prog = ks.Program()
        t = prog.add_variable("t")
        e = ks.sin(ks.Expr(t)) + ks.cos(ks.Expr(t)) * ks.sqrt(prog.constant(4.0))
        # Function calls on constants fold at build time.
        assert prog.to_string(e) == "sin(t) + cos(t) * 2"

    def test_duplicate_names_rejected(self):
        prog = ks.Program()
        prog.add_variable("x")
        with pytest.raises(ks.DuplicateName):
            prog.add_parameter("x", 1.0)


class TestSolve:
    def test_dispatch_solution(self):
        prog, x1, x2, d, _ = build_dispatch()
        cf = prog.canonicalize()
        res = ks.solve(cf, prog.parameter_values())
        xs = cf.user_variables(res.point.x)
        # Symmetric marginal costs at d=100: 0.4 g1 + 20 = 0.2 g2 + 30
        assert xs[0] == pytest.approx(50.0, abs=1e-6)
        assert xs[1] == pytest.approx(50.0, abs=1e-6)
        assert res.point.objective == pytest.approx(3250.0, abs=1e-4)
        assert res.kkt_residual <= 1e-8
        assert res.iterations <= 200

    def test_regularity_report(self):
        prog, *_ = build_dispatch()
        cf = prog.canonicalize()
        res = ks.solve(cf, prog.parameter_values())
        rep = ks.check_regularity(cf, res.point)
        assert rep.scs_ok
        assert rep.licq_ok
        assert rep.near_degenerate == []

    def test_infeasible_raises(self):
        prog = ks.Program()
        x = prog.add_variable("x", lower=0.0)
        prog.add_constraint(ks.Expr(x), ks.Relation.LE, prog.constant(-1.0))
        prog.set_objective(ks.Sense.MINIMIZE, ks.Expr(x) ** 2.0)
        cf = prog.canonicalize()
        with pytest.raises(ks.Error):
            ks.solve(cf, prog.parameter_values())


class TestSensitivity:
    def test_forward_mode_matches_closed_form(self):
        prog, x1, x2, d, balance = build_dispatch()
        cf = prog.canonicalize()
        res = ks.solve(cf, prog.parameter_values())
        sess = ks.SensitivitySession(cf, res.point)
        sess.set_forward_parameter(d, 1.0)
        sess.forward_differentiate()
        # Interior regime: dg1/dd = 1/3, dg2/dd = 2/3, dJ/dd = marginal price 40
        assert sess.get_forward_variable(x1) == pytest.approx(1.0 / 3.0, abs=1e-5)
        assert sess.get_forward_variable(x2) == pytest.approx(2.0 / 3.0, abs=1e-5)
        assert sess.get_forward_objective() == pytest.approx(40.0, abs=1e-3)
        assert sess.get_forward_dual(balance) == pytest.approx(2.0 / 15.0, abs=1e-5)

    def test_reverse_mode_agrees_with_forward(self):
        prog, x1, x2, d, _ = build_dispatch()
        cf = prog.canonicalize()
        res = ks.solve(cf, prog.parameter_values())
        sess = ks.SensitivitySession(cf, res.point)
        sess.set_reverse_variable(x1, 1.0)
        sess.reverse_differentiate()
        assert sess.get_reverse_parameter(d) == pytest.approx(1.0 / 3.0, abs=1e-5)

    def test_objective_seed(self):
        prog, _, _, d, _ = build_dispatch()
        cf = prog.canonicalize()
        res = ks.solve(cf, prog.parameter_values())
        sess = ks.SensitivitySession(cf, res.point)
        sess.set_reverse_objective(1.0)
        sess.reverse_differentiate()
        assert sess.get_reverse_parameter(d) == pytest.approx(40.0, abs=1e-3)

    def test_conflicting_seeds(self):
        prog, x1, _, d, _ = build_dispatch()
        cf = prog.canonicalize()
        res = ks.solve(cf, prog.parameter_values())
        sess = ks.SensitivitySession(cf, res.point)
        sess.set_reverse_variable(x1, 1.0)
        with pytest.raises(ks.ConflictingSeeds):
            sess.set_reverse_objective(1.0)

    def test_query_before_differentiate(self):
        prog, x1, *_ = build_dispatch()
        cf = prog.canonicalize()
        res = ks.solve(cf, prog.parameter_values())
        sess = ks.SensitivitySession(cf, res.point)
        with pytest.raises(ks.QueryBeforeDifferentiate):
            sess.get_forward_variable(x1)

    def test_full_jacobian_shape_and_counters(self):
        prog, *_ = build_dispatch()
        cf = prog.canonicalize()
        res = ks.solve(cf, prog.parameter_values())
        sess = ks.SensitivitySession(cf, res.point)
        jac = sess.full_jacobian()
        assert isinstance(jac, np.ndarray)
        assert jac.shape == (sess.kkt.dimension, cf.num_parameters)
        assert sess.kkt.factorization_count == 1
        assert sess.kkt.solve_count == cf.num_parameters

    def test_forward_tangent_is_numpy(self):
        prog, _, _, d, _ = build_dispatch()
        cf = prog.canonicalize()
        res = ks.solve(cf, prog.parameter_values())
        sess = ks.SensitivitySession(cf, res.point)
        sess.set_forward_parameter(d, 1.0)
        sess.forward_differentiate()
        t = sess.forward_tangent()
        assert isinstance(t, np.ndarray)
        assert t.shape == (sess.kkt.dimension,)

    def test_session_outlives_local_program(self):
        # The session must keep the canonical form (and through it the
        # program's graph data) alive after the locals go out of scope.
        def make():
            prog, _, _, d, _ = build_dispatch()
            cf = prog.canonicalize()
            res = ks.solve(cf, prog.parameter_values())
            sess = ks.SensitivitySession(cf, res.point)
            sess.set_forward_parameter(d, 1.0)
            return sess

        sess = make()
        import gc

        gc.collect()
        sess.forward_differentiate()
        assert sess.get_forward_objective() == pytest.approx(40.0, abs=1e-3)


class TestProblemFiles:
    def test_load_problem_file(self):
        root = os.environ.get("KKTSENS_PROBLEM_DIR")
        assert root, "KKTSENS_PROBLEM_DIR must point at the problems directory"
        lp = ks.load_problem_file(os.path.join(root, "dispatch.json"))
        prog = lp.program
        cf = prog.canonicalize()
        res = ks.solve(cf, prog.parameter_values())
        assert res.point.objective == pytest.approx(3250.0, abs=1e-4)

    def test_load_problem_text_with_loss(self):
        text = """
        {
          "schema": 1,
          "variables": [{"name": "x", "lower": 0.0}],
          "parameters": [{"name": "p", "value": 2.0}],
          "constraints": [{"expr": "x", "rel": ">=", "rhs": "p"}],
          "objective": {"sense": "min", "expr": "x^2"},
          "loss": {"expr": "(x - 1)^2"}
        }
        """
        lp = ks.load_problem(text)
        assert lp.loss is not None
        cf = lp.program.canonicalize()
        res = ks.solve(cf, lp.program.parameter_values())
        xs = cf.user_variables(res.point.x)
        assert xs[0] == pytest.approx(2.0, abs=1e-6)

    def test_schema_error(self):
        with pytest.raises(ks.SchemaError):
            ks.load_problem('{"schema": 2}')

    def test_parse_error(self):
        with pytest.raises(ks.ParseError):
            ks.load_problem("not json at all")


class TestParameterUpdates:
    def test_resolve_after_set_parameter(self):
        prog, x1, x2, d, _ = build_dispatch()
        cf = prog.canonicalize()
        prog.set_parameter_value(d, 290.0)
        res = ks.solve(cf, prog.parameter_values())
        xs = cf.user_variables(res.point.x)
        # Both capacity limits bind; the shortfall variable covers the rest.
        assert xs[0] == pytest.approx(150.0, abs=1e-4)
        assert xs[1] == pytest.approx(80.0, abs=1e-4)
        assert xs[2] == pytest.approx(60.0, abs=1e-4)
