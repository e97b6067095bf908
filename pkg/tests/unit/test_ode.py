"""
Unit tests for ODE systems, the registry and flow enclosures
"""
import logging
import math
import random
from fractions import Fraction

import numpy as np
import pytest

from src.core.errors import BoundsEscapeError, ParameterError, UnregisteredSystemError
from src.logic.terms import Const, Var, add, mul, neg, power
from src.numerics.interval import Box, Interval, point_box
from src.numerics.ode import (
    OdeSystem,
    check_lipschitz,
    derive_lipschitz,
    flow_component,
    flow_deviation,
    flow_enclosure,
    get_system,
    horizon_for,
    register_system,
)

x, y = Var("x"), Var("y")
UNIT = Box.from_bounds({"x": (-1, 1)})


def rk4(field, state: np.ndarray, t: float, steps: int) -> np.ndarray:
    """Classic fourth-order Runge-Kutta reference solution"""
    h = t / steps
    for _ in range(steps):
        k1 = field(state)
        k2 = field(state + h / 2 * k1)
        k3 = field(state + h / 2 * k2)
        k4 = field(state + h * k3)
        state = state + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return state


class TestOdeSystem:
    """Construction and validation"""

    def test_rhs_count_must_match(self):
        """One right-hand side per state variable"""
        with pytest.raises(ParameterError):
            OdeSystem("s", ("x", "y"), (x,), Box.from_bounds({"x": (-1, 1), "y": (-1, 1)}))

    def test_missing_bounds(self):
        """Every state variable needs bounds"""
        with pytest.raises(ParameterError):
            OdeSystem("s", ("x", "y"), (y, x), UNIT)

    def test_foreign_variables(self):
        """Right-hand sides may only use state variables"""
        with pytest.raises(ParameterError):
            OdeSystem("s", ("x",), (y,), UNIT)

    def test_lipschitz_must_be_positive(self):
        """A user Lipschitz constant must be positive"""
        with pytest.raises(ParameterError):
            OdeSystem("s", ("x",), (neg(x),), UNIT, lipschitz=0.0)

    def test_bounds_follow_variable_order(self):
        """Bounds are reordered to match the declared variables"""
        s = OdeSystem("s", ("y", "x"), (x, y), Box.from_bounds({"x": (0, 1), "y": (-1, 1)}))
        assert s.bounds.names == ("y", "x")
        assert s.dimension == 2

    def test_derived_lipschitz(self, decay, cubic):
        """The bound is the infinity norm of the interval Jacobian"""
        assert derive_lipschitz(decay) == 1.0
        assert derive_lipschitz(cubic) == 3.0

    def test_low_user_constant_is_reported(self, caplog):
        """A user constant below the derived bound logs a warning"""
        s = OdeSystem("fast", ("x",), (mul(Const(Fraction(-2)), x),), UNIT, lipschitz=1.0)
        with caplog.at_level(logging.WARNING):
            assert check_lipschitz(s) == 2.0
        assert "below the interval Jacobian bound" in caplog.text


class TestRegistry:
    """Named system lookup"""

    def test_lookup(self, decay):
        """Registered systems are found by name"""
        assert get_system("decay") is decay

    def test_unregistered(self):
        """Unknown names raise"""
        with pytest.raises(UnregisteredSystemError):
            get_system("nowhere")

    def test_replacement_warns(self, decay, caplog):
        """Registering a different system under a taken name warns"""
        other = OdeSystem("decay", ("x",), (x,), Box.from_bounds({"x": (-2, 2)}), 1.0)
        with caplog.at_level(logging.WARNING):
            register_system(other)
        assert get_system("decay") is other
        assert "Replacing registered system decay" in caplog.text


class TestFlowEnclosure:
    """Validated integration"""

    def test_decay_encloses_exact_solution(self, decay):
        """x(1) = e^-1 x0 for every x0 in [0.5, 1]"""
        image = flow_enclosure(decay, Box.from_bounds({"x": (0.5, 1)}), Interval(1.0, 1.0))
        assert image["x"].lo <= 0.5 * math.exp(-1)
        assert image["x"].hi >= math.exp(-1)
        assert image["x"].hi < 0.5

    def test_time_range_covers_every_time(self, decay):
        """An interval of times gives the hull over that range"""
        image = flow_enclosure(decay, point_box({"x": 1}), Interval(0.0, 1.0))
        assert image["x"].lo <= math.exp(-1)
        assert image["x"].hi >= 1.0

    def test_still_system_stays_put(self, still):
        """Zero dynamics keep the initial state"""
        image = flow_enclosure(still, point_box({"x": 0.5}), Interval(0.0, 3.0))
        assert image["x"].lo <= 0.5 <= image["x"].hi
        assert image["x"].width < 1e-6

    def test_growth_escapes_bounds(self, growth):
        """e^1 leaves [-2, 2], so a strict query past the escape raises"""
        with pytest.raises(BoundsEscapeError):
            flow_enclosure(growth, point_box({"x": 1}), Interval(1.0, 1.0))

    def test_initial_box_outside_bounds(self, decay):
        """Initial states must lie in the state bounds"""
        with pytest.raises(BoundsEscapeError):
            flow_enclosure(decay, point_box({"x": 3}), Interval(1.0, 1.0))

    def test_initial_box_must_bind_every_variable(self, decay):
        """The initial box names every state variable"""
        with pytest.raises(ParameterError):
            flow_enclosure(decay, point_box({"y": 0}), Interval(1.0, 1.0))

    def test_component_index(self, decay):
        """Components are zero-based and range-checked"""
        value = flow_component("decay", [Interval(1.0, 1.0)], Interval(1.0, 1.0), 0, 1e-3)
        assert value.lo <= math.exp(-1) <= value.hi
        with pytest.raises(ParameterError):
            flow_component("decay", [Interval(1.0, 1.0)], Interval(1.0, 1.0), 1, 1e-3)

    def test_deviation_from_true_endpoint(self, decay):
        """The distance to the true endpoint encloses zero"""
        d = flow_deviation(decay, point_box({"x": 1}), point_box({"x": math.exp(-1)}), Interval(1.0, 1.0))
        assert d.lo == 0.0
        assert d.hi < 0.01

    def test_random_polynomial_systems_contain_reference(self):
        """Enclosures at t = 1 contain a fine RK4 solution of random quadratic systems"""
        rng = random.Random(21)
        bounds = Box.from_bounds({"x": (-3, 3), "y": (-3, 3)})
        for i in range(20):
            # diagonal damping dominates the coupling, so solutions stay near the origin
            a, d = (Fraction(rng.randint(4, 12), 8) for _ in range(2))
            b, c = (Fraction(rng.randint(-4, 4), 8) for _ in range(2))
            p, q = (Fraction(rng.randint(-2, 2), 16) for _ in range(2))
            rhs = (
                add(add(mul(Const(-a), x), mul(Const(b), y)), mul(Const(p), power(x, 2))),
                add(add(mul(Const(c), x), mul(Const(-d), y)), mul(Const(q), mul(x, y))),
            )
            system = OdeSystem(f"poly{i}", ("x", "y"), rhs, bounds)
            coeffs = [float(v) for v in (a, b, c, d, p, q)]

            def field(s: np.ndarray, k=coeffs) -> np.ndarray:
                return np.array(
                    [-k[0] * s[0] + k[1] * s[1] + k[4] * s[0] ** 2, k[2] * s[0] - k[3] * s[1] + k[5] * s[0] * s[1]]
                )

            start = [Fraction(rng.randint(-4, 4), 8) for _ in range(2)]
            reference = rk4(field, np.array([float(v) for v in start]), 1.0, 2000)
            image = flow_enclosure(system, point_box({"x": start[0], "y": start[1]}), Interval(1.0, 1.0), tol=1e-3)
            for name, value in zip(("x", "y"), reference):
                assert image[name].lo - 1e-9 <= value <= image[name].hi + 1e-9


class TestHorizon:
    """Power-of-two integration horizons"""

    def test_horizons(self):
        """Horizons round up to a power of two, at least one"""
        assert horizon_for(0.5) == 1.0
        assert horizon_for(3.0) == 4.0
        assert horizon_for(4.0) == 4.0

    def test_time_cap(self):
        """Flow times beyond the configured maximum are rejected"""
        with pytest.raises(ParameterError):
            horizon_for(100.0)
