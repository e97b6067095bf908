"""
Enclosure evaluation of terms over boxes, and high-precision point evaluation.

``compile_term`` turns a term into a closure over interval environments so hot
loops (ODE right-hand sides, solver atoms) pay the tree walk once.
"""
from fractions import Fraction
from typing import Callable, List, Mapping, Optional, Union

from mpmath import mp, mpf

from src.core.config import settings
from src.core.errors import DomainViolation, ParameterError
from src.logic.formula import And, Atom, Formula, Or, Quantified, Relation
from src.logic.terms import Apply, Const, FlowValue, Term, Var
from src.numerics.interval import Interval, current_precision, interval_sum

Env = Mapping[str, Interval]
Evaluator = Callable[[Env], Interval]
PointValue = Union[float, int, Fraction]


def default_tolerance() -> float:
    return settings.tol_factor * settings.delta


def _guarded_div(a: Interval, b: Interval, guard: float) -> Interval:
    if guard > 0 and b.lo <= guard and b.hi >= -guard:
        raise DomainViolation(f"divisor [{b.lo}, {b.hi}] meets the guard band [-{guard}, {guard}]")
    return a / b


def _guarded_sqrt(a: Interval, guard: float) -> Interval:
    if a.lo < -guard:
        raise DomainViolation(f"negative radicand [{a.lo}, {a.hi}]")
    if a.hi <= 0:
        return Interval(0.0, 0.0)
    return Interval(max(0.0, a.lo), a.hi).sqrt()


def _norm(values: List[Interval]) -> Interval:
    return interval_sum(v**2 for v in values).sqrt()


_UNARY = {
    "neg": lambda a: -a,
    "abs": abs,
    "exp": Interval.exp,
    "sin": Interval.sin,
    "cos": Interval.cos,
}

_BINARY = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "min": Interval.minimum,
    "max": Interval.maximum,
}


def compile_term(t: Term, tol: Optional[float] = None, strict: bool = True) -> Evaluator:
    """Build an evaluator returning an interval enclosing ``t`` over an environment.

    Args:
        t: Term to compile
        tol: Tolerance handed to ODE enclosures of flow terms
        strict: When False, flow enclosures may continue past the state bounds
            of their system (inside its extended integration domain)

    Returns:
        Callable mapping a variable environment to an enclosure
    """
    if isinstance(t, Var):
        name = t.name

        def lookup(env: Env) -> Interval:
            try:
                return env[name]
            except KeyError:
                raise ParameterError(f"variable {name} is not bound by the box") from None

        return lookup

    if isinstance(t, Const):
        value = Interval.point(t.value)
        return lambda env: value

    if isinstance(t, Apply):
        args = [compile_term(a, tol, strict) for a in t.args]
        op, guard = t.op, t.guard
        if op in _UNARY:
            fn, (inner,) = _UNARY[op], args
            return lambda env: fn(inner(env))
        if op in _BINARY:
            fn2, (left, right) = _BINARY[op], args
            return lambda env: fn2(left(env), right(env))
        if op == "div":
            num, den = args
            return lambda env: _guarded_div(num(env), den(env), guard)
        if op == "sqrt":
            (radicand,) = args
            return lambda env: _guarded_sqrt(radicand(env), guard)
        if op == "pow":
            (base, _) = args
            exponent = int(t.args[1].value)  # type: ignore[attr-defined]
            return lambda env: base(env) ** exponent
        if op == "norm":
            return lambda env: _norm([a(env) for a in args])
        raise ParameterError(f"no interval rule for {op}")

    if isinstance(t, FlowValue):
        from src.numerics.ode import flow_component

        initial = [compile_term(a, tol, strict) for a in t.initial]
        time = compile_term(t.time, tol, strict)
        system, component = t.system, t.component
        tolerance = default_tolerance() if tol is None else tol

        def flow(env: Env) -> Interval:
            return flow_component(
                system, [x(env) for x in initial], time(env), component, tolerance, strict=strict
            )

        return flow

    raise ParameterError(f"unsupported term {t!r}")


def eval_term(t: Term, box: Env, tol: Optional[float] = None, strict: bool = True) -> Interval:
    """Interval enclosure of ``t`` over every point of ``box``"""
    return compile_term(t, tol, strict)(box)


# ----------------------------------------------------------------------
# Point evaluation
# ----------------------------------------------------------------------
def _point_flow(t: FlowValue, env: Mapping[str, PointValue]) -> mpf:
    from src.numerics.ode import flow_component

    initial = [Interval.point(float(eval_point(a, env))) for a in t.initial]
    time = Interval.point(float(eval_point(t.time, env)))
    enclosure = flow_component(t.system, initial, time, t.component, default_tolerance() / 64)
    return mpf(enclosure.mid)


def eval_point(t: Term, env: Mapping[str, PointValue]) -> mpf:
    """Value of ``t`` at a point, in mpmath at twice the working precision.

    Flow terms use the midpoint of a tight enclosure.
    """
    with mp.workprec(2 * current_precision()):
        return _eval_point(t, env)


def _eval_point(t: Term, env: Mapping[str, PointValue]) -> mpf:
    if isinstance(t, Var):
        value = env[t.name]
        if isinstance(value, Fraction):
            return mpf(value.numerator) / value.denominator
        return mpf(value)
    if isinstance(t, Const):
        return mpf(t.value.numerator) / t.value.denominator
    if isinstance(t, FlowValue):
        return _point_flow(t, env)
    if not isinstance(t, Apply):
        raise ParameterError(f"unsupported term {t!r}")
    args = [_eval_point(a, env) for a in t.args]
    op = t.op
    if op == "add":
        return args[0] + args[1]
    if op == "sub":
        return args[0] - args[1]
    if op == "mul":
        return args[0] * args[1]
    if op == "div":
        if abs(args[1]) <= t.guard:
            raise DomainViolation("division inside the guard band")
        return args[0] / args[1]
    if op == "neg":
        return -args[0]
    if op == "pow":
        return args[0] ** int(t.args[1].value)  # type: ignore[attr-defined]
    if op == "abs":
        return abs(args[0])
    if op == "min":
        return min(args)
    if op == "max":
        return max(args)
    if op == "exp":
        return mp.exp(args[0])
    if op == "sin":
        return mp.sin(args[0])
    if op == "cos":
        return mp.cos(args[0])
    if op == "sqrt":
        if args[0] < -t.guard:
            raise DomainViolation("negative radicand")
        return mp.sqrt(max(args[0], mpf(0)))
    if op == "norm":
        return mp.sqrt(sum(a * a for a in args))
    raise ParameterError(f"no point rule for {op}")


def holds(phi: Formula, env: Mapping[str, PointValue]) -> bool:
    """Truth of a quantifier-free formula at a point"""
    if isinstance(phi, Atom):
        value = eval_point(phi.term, env)
        return bool(value > 0) if phi.relation == Relation.GT else bool(value >= 0)
    if isinstance(phi, And):
        return all(holds(p, env) for p in phi.parts)
    if isinstance(phi, Or):
        return any(holds(p, env) for p in phi.parts)
    if isinstance(phi, Quantified):
        raise ParameterError("point evaluation needs a quantifier-free formula")
    raise TypeError(f"not a formula: {phi!r}")
