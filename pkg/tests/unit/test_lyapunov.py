"""
Unit tests for the Lyapunov template test
"""
from fractions import Fraction

import pytest

from src.core.errors import ParameterError
from src.core.results import LyapunovOutcome, SolverOutcome
from src.logic.formula import classify
from src.logic.terms import Const, Var, add, mul, power
from src.numerics.evaluate import eval_point
from src.numerics.interval import Box
from src.solver.engine import SolverConfig, decide
from src.stability.lyapunov import encode_lyapunov_candidate, lie_derivative, lyapunov_test

x, p = Var("x"), Var("p")
TWO = Const(Fraction(2))
V = mul(p, power(x, 2))
D = Box.from_bounds({"p": (0.5, 1)})
X = Box.from_bounds({"x": (-1, 1)})


class TestEncoding:
    """Template sentence construction"""

    def test_sentence_is_sigma2(self, cubic):
        """exists p in D. forall x in X"""
        report = classify(encode_lyapunov_candidate(cubic, V, D, X, 0.1))
        assert report.label == "Sigma2"
        assert report.block_sizes == [1, 1]

    def test_lie_derivative(self, decay):
        """<grad V, f> of p x^2 under x' = -x is -2 p x^2"""
        lie = lie_derivative(decay, [mul(mul(TWO, p), x)])
        assert float(eval_point(lie, {"p": 1.0, "x": 3.0})) == -18.0

    def test_template_must_vanish_at_origin(self, cubic):
        """V(p, 0) = 0 is checked symbolically"""
        with pytest.raises(ParameterError):
            encode_lyapunov_candidate(cubic, add(V, p), D, X, 0.1)

    def test_supplied_gradient_is_checked(self, cubic):
        """A gradient that disagrees with the template is rejected"""
        encode_lyapunov_candidate(cubic, V, D, X, 0.1, grad=[mul(mul(TWO, p), x)])
        with pytest.raises(ParameterError):
            encode_lyapunov_candidate(cubic, V, D, X, 0.1, grad=[mul(p, x)])

    def test_gradient_arity(self, cubic):
        """One gradient component per state variable"""
        with pytest.raises(ParameterError):
            encode_lyapunov_candidate(cubic, V, D, X, 0.1, grad=[x, x])

    def test_unbound_template_names(self, cubic):
        """Template names must be parameters or state variables"""
        with pytest.raises(ParameterError):
            encode_lyapunov_candidate(cubic, mul(Var("q"), power(x, 2)), D, X, 0.1)

    def test_exclusion_radius(self, cubic):
        """The radius must be positive and leave an annulus inside X"""
        with pytest.raises(ParameterError):
            encode_lyapunov_candidate(cubic, V, D, X, 0.0)
        with pytest.raises(ParameterError):
            encode_lyapunov_candidate(cubic, V, D, X, 1.5)

    def test_state_box_variables(self, cubic):
        """X ranges over exactly the system's variables"""
        with pytest.raises(ParameterError):
            encode_lyapunov_candidate(cubic, V, D, Box.from_bounds({"y": (-1, 1)}), 0.1)


class TestLyapunovTest:
    """Decided template tests"""

    def test_cubic_decay_succeeds(self, cubic):
        """p x^2 certifies x' = -x^3 with a parameter witness inside D"""
        verdict = lyapunov_test(cubic, V, D, X, 0.1, delta=0.01)
        assert verdict.outcome == LyapunovOutcome.SUCCESS
        lo, hi = verdict.witness["p"]
        assert 0.5 <= lo <= hi <= 1.0
        assert verdict.complexity.label == "Sigma2"

    def test_growth_fails(self, growth):
        """No positive p makes p x^2 decrease under x' = x"""
        verdict = lyapunov_test(growth, V, D, X, 0.1, delta=0.01)
        assert verdict.outcome == LyapunovOutcome.DELTA_FAIL
        assert verdict.witness == {}

    def test_strict_cubic_decay_succeeds(self, cubic):
        """-2 p x^4 is strictly negative away from the origin"""
        verdict = lyapunov_test(cubic, V, Box.from_bounds({"p": (0.5, 2)}), X, 0.1, strict=True, delta=0.01)
        assert verdict.outcome == LyapunovOutcome.SUCCESS

    def test_zero_dynamics_succeed(self, still):
        """A vanishing decrease term passes the non-strict test"""
        verdict = lyapunov_test(still, V, D, X, 0.1, delta=0.01)
        assert verdict.outcome == LyapunovOutcome.SUCCESS

    def test_witness_names_only_parameters(self, cubic):
        """The witness of a success binds the parameters and no state variable"""
        verdict = lyapunov_test(cubic, V, D, X, 0.1, delta=0.01)
        assert set(verdict.witness) == {"p"}

    def test_witness_recheck(self, cubic):
        """The witness box, used as D, still decides the sentence delta-true at delta/2"""
        verdict = lyapunov_test(cubic, V, D, X, 0.1, delta=0.01)
        narrowed = Box.from_bounds({"p": verdict.witness["p"]})
        again = decide(encode_lyapunov_candidate(cubic, V, narrowed, X, 0.1), SolverConfig(delta=0.005))
        assert again.outcome == SolverOutcome.DELTA_TRUE
