"""
Built-in automata
"""
from fractions import Fraction
from typing import Tuple, Union

from src.hybrid.automaton import HybridAutomaton, build_automaton, primed
from src.logic.formula import FALSE, conj, eq, ge, le
from src.logic.terms import Const, Var, add, mul, power, sub
from src.numerics.interval import Box
from src.numerics.ode import OdeSystem
from src.stability.encoders import number

Number = Union[int, float, Fraction]


def bouncing_ball(
    g: Number = -9.8,
    beta: Number = 0.01,
    alpha: Number = 0.9,
    height: Number = 10,
    x_range: Tuple[float, float] = (-1.0, 15.0),
    v_range: Tuple[float, float] = (-20.0, 20.0),
    name: str = "bouncingball",
) -> HybridAutomaton:
    """Bouncing ball with air drag.

    q_u is the bounce-back mode with v' = g(1 - beta v^2), q_d the falling mode
    with v' = g(1 + beta v^2); both have x' = v. Invariants and resets are
    the textbook formulas: with g < 0 the velocity in q_d turns negative at
    once, so q_u ends up as the downward-velocity mode for these constants.
    """
    x, v = Var("x"), Var("v")
    gc, bc = number(g), number(beta)
    drag = mul(bc, power(v, 2))
    one = Const(Fraction(1))
    bounds = Box.from_bounds({"x": x_range, "v": v_range})
    flows = {
        "q_u": OdeSystem(f"{name}.q_u", ("x", "v"), (v, mul(gc, sub(one, drag))), bounds),
        "q_d": OdeSystem(f"{name}.q_d", ("x", "v"), (v, mul(gc, add(one, drag))), bounds),
    }
    xp, vp = Var(primed("x")), Var(primed("v"))
    return build_automaton(
        name,
        bounds,
        flows,
        invariants={
            "q_d": conj(ge(x, 0), ge(v, 0)),
            "q_u": conj(ge(x, 0), le(v, 0)),
        },
        jumps={
            ("q_u", "q_d"): conj(eq(v, 0), eq(xp, x), eq(vp, v)),
            ("q_d", "q_u"): conj(eq(x, 0), eq(vp, mul(number(alpha), v)), eq(xp, x)),
        },
        inits={
            "q_d": conj(eq(x, number(height)), eq(v, 0)),
            "q_u": FALSE,
        },
    )
