"""
Delta-complete Lyapunov template test.

For a template V(p, x) with parameters p ranging over a box D, the test
decides

    exists p in D. forall x in X.
        (||x|| >= r -> V(p, x) > 0)
        /\\ (||x|| >= r -> <grad V, f(x)> <= 0)     (< 0 when strict)

The conditions are imposed on the annulus ||x|| >= r only; at the origin both
margins vanish and no delta-relaxed check could refute them. V(p, 0) = 0
must hold symbolically: its relaxed negation is satisfiable for every p.
"""
import logging
import math
from typing import Optional, Sequence, Tuple

from src.core.errors import ParameterError, UnknownSymbolError
from src.core.results import LyapunovOutcome, LyapunovVerdict
from src.logic.calculus import equivalent, expand, gradient
from src.logic.formula import Formula, classify, conj, disj, exists, forall, ge, gt, negate
from src.logic.terms import ZERO, Term, Var, add, as_term, mul, neg, norm, sub, substitute_term, term_variables
from src.numerics.interval import Box
from src.numerics.ode import OdeSystem
from src.solver.engine import SolverConfig, decide
from src.solver.trace import TraceWriter
from src.stability.checks import solver_config
from src.stability.encoders import number

logger = logging.getLogger(__name__)


def _check_gradient(system: OdeSystem, V: Term, supplied: Optional[Sequence[Term]]) -> Tuple[Term, ...]:
    variables = system.variables
    try:
        derived: Optional[Tuple[Term, ...]] = gradient(V, variables)
    except UnknownSymbolError as e:
        derived = None
        if supplied is None:
            raise ParameterError(f"no gradient supplied and the template cannot be differentiated: {e}") from e
    if supplied is None:
        return derived  # type: ignore[return-value]
    supplied = tuple(as_term(g) for g in supplied)
    if len(supplied) != len(variables):
        raise ParameterError(f"gradient needs {len(variables)} components, got {len(supplied)}")
    if derived is not None:
        for v, given, expected in zip(variables, supplied, derived):
            if not equivalent(given, expected):
                raise ParameterError(f"supplied dV/d{v} = {given} does not match the template")
    return supplied


def _outer_radius(X: Box, variables: Sequence[str]) -> float:
    """Norm of the corner of X farthest from the origin"""
    return math.sqrt(sum(max(X[v].lo ** 2, X[v].hi ** 2) for v in variables))


def lie_derivative(system: OdeSystem, grad: Sequence[Term]) -> Term:
    total: Optional[Term] = None
    for g, f in zip(grad, system.rhs):
        term = mul(g, f)
        total = term if total is None else add(total, term)
    return expand(total) if total is not None else as_term(0)


def encode_lyapunov_candidate(
    system: OdeSystem,
    V: Term,
    D: Box,
    X: Box,
    r: float,
    strict: bool = False,
    grad: Optional[Sequence[Term]] = None,
) -> Formula:
    """Sentence stating that some p in D makes V a Lyapunov function on X; classifies as Sigma2

    Args:
        system: Dynamics f
        V: Template over the parameters named in ``D`` and the state variables
        D: Parameter box
        X: State box, over the system's variables
        r: Exclusion radius around the origin
        strict: Require strict decrease (asymptotic claims)
        grad: dV/dx per state variable; derived symbolically when omitted

    Raises:
        ParameterError: on a missing or inconsistent gradient, a template not
            vanishing at the origin, or an exclusion radius that leaves no
            annulus inside X
    """
    variables = system.variables
    if set(X) != set(variables):
        raise ParameterError(f"state box must bind exactly {list(variables)}")
    unknown = set(term_variables(V)) - set(D) - set(variables)
    if unknown:
        raise ParameterError(f"template uses unbound names {sorted(unknown)}")
    if not r > 0:
        raise ParameterError(f"exclusion radius must be positive, got {r}")
    outer = _outer_radius(X, variables)
    if r >= outer:
        raise ParameterError(f"exclusion radius {r} leaves no annulus inside X (outer radius {outer:.6g})")

    grad = _check_gradient(system, V, grad)
    at_origin = expand(substitute_term(V, {v: as_term(0) for v in variables}))
    if at_origin != ZERO:
        raise ParameterError(f"template must vanish at the origin for every p, got V(p, 0) = {at_origin}")
    decrease = lie_derivative(system, grad)
    inside = gt(sub(number(r), norm(*(Var(v) for v in variables))))

    decrease_atom = gt(neg(decrease)) if strict else ge(neg(decrease))
    body = conj(disj(inside, gt(V)), disj(inside, decrease_atom))
    for v in reversed(variables):
        body = forall(v, number(X[v].lo), number(X[v].hi), body)
    for p in reversed(D.names):
        body = exists(p, number(D[p].lo), number(D[p].hi), body)
    return body


def lyapunov_test(
    system: OdeSystem,
    V: Term,
    D: Box,
    X: Box,
    r: float,
    strict: bool = False,
    delta: float = 0.01,
    grad: Optional[Sequence[Term]] = None,
    config: Optional[SolverConfig] = None,
    trace: Optional[TraceWriter] = None,
) -> LyapunovVerdict:
    """SUCCESS when the exact conditions hold for some p in D, DELTA_FAIL when
    they fail under delta-perturbation for every p.

    The parameter witness of a SUCCESS comes from re-deciding the positive
    sentence at delta/2.
    """
    phi = encode_lyapunov_candidate(system, V, D, X, r, strict, grad)
    complexity = classify(phi)
    logger.info(f"Lyapunov test of V = {V} on {system.name} (strict={strict}, r={r}, delta={delta})")

    verdict = decide(negate(phi), solver_config(delta, config), trace)
    if verdict.is_delta_true:
        logger.info(f"Lyapunov test failed under delta={delta}")
        return LyapunovVerdict(outcome=LyapunovOutcome.DELTA_FAIL, complexity=complexity, stats=verdict.stats)

    positive = decide(phi, solver_config(delta / 2, config))
    verdict.stats.absorb(positive.stats)
    logger.info(f"Lyapunov test succeeded with parameters {positive.witness}")
    return LyapunovVerdict(
        outcome=LyapunovOutcome.SUCCESS,
        witness=positive.witness,
        complexity=complexity,
        stats=verdict.stats,
    )
