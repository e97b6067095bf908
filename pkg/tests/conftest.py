"""
Shared fixtures
"""
from pathlib import Path

import pytest

from src.logic.terms import ZERO, Var, neg, power
from src.numerics.interval import Box
from src.numerics.ode import OdeSystem, clear_registry, register_system

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def clean_registry():
    """Every test starts with an empty ODE registry"""
    clear_registry()
    yield
    clear_registry()


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def decay() -> OdeSystem:
    """x' = -x on [-2, 2]"""
    return register_system(OdeSystem("decay", ("x",), (neg(Var("x")),), Box.from_bounds({"x": (-2, 2)}), 1.0))


@pytest.fixture
def growth() -> OdeSystem:
    """x' = x on [-2, 2]"""
    return register_system(OdeSystem("growth", ("x",), (Var("x"),), Box.from_bounds({"x": (-2, 2)}), 1.0))


@pytest.fixture
def still() -> OdeSystem:
    """x' = 0 on [-2, 2]"""
    return register_system(OdeSystem("still", ("x",), (ZERO,), Box.from_bounds({"x": (-2, 2)}), 1.0))


@pytest.fixture
def cubic() -> OdeSystem:
    """x' = -x^3 on [-1, 1]"""
    return register_system(OdeSystem("cubic", ("x",), (neg(power(Var("x"), 3)),), Box.from_bounds({"x": (-1, 1)})))
