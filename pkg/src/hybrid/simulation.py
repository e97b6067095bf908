"""
Event-driven numeric simulation of hybrid automata.

Flows are integrated with fixed-step RK4. A jump fires when one of its guard
atoms changes sign within a step and the whole guard holds, up to a small
tolerance, at the bisected crossing time. Resets are read from jump atoms of
the form v' - g(x).
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np
import sympy as sp

from src.core.errors import ParameterError
from src.hybrid.automaton import HybridAutomaton, primed
from src.logic.calculus import symbol, to_sympy
from src.logic.formula import And, Atom, Formula, delta_weaken
from src.logic.terms import ZERO, Apply, Term, Var, term_variables
from src.numerics.evaluate import holds

logger = logging.getLogger(__name__)

_BISECTIONS = 60


@dataclass
class FlowPiece:
    """Samples of one continuous phase; ``times`` restart at 0 on entry"""

    mode: str
    times: np.ndarray
    states: np.ndarray


@dataclass
class JumpEvent:
    source: str
    target: str
    time: float
    before: np.ndarray
    after: np.ndarray


@dataclass
class SimulationRun:
    variables: Tuple[str, ...]
    pieces: List[FlowPiece] = field(default_factory=list)
    jumps: List[JumpEvent] = field(default_factory=list)
    stop_reason: str = ""


@dataclass
class _Edge:
    target: str
    conditions: List[Atom]
    resets: Dict[str, Term]
    events: List[Callable[[np.ndarray], float]]


def _lambdify(t: Term, variables: Tuple[str, ...]) -> Callable[[np.ndarray], float]:
    fn = sp.lambdify([symbol(v) for v in variables], to_sympy(t), "numpy")
    return lambda x: float(fn(*x))


def _reset_of(t: Term, targets: Mapping[str, str]) -> Optional[Tuple[str, Term]]:
    """Read v' - g or v' as a reset of v"""
    if isinstance(t, Var) and t.name in targets:
        return targets[t.name], ZERO
    if isinstance(t, Apply) and t.op == "sub" and isinstance(t.args[0], Var) and t.args[0].name in targets:
        return targets[t.args[0].name], t.args[1]
    return None


def _edges(h: HybridAutomaton, source: str) -> List[_Edge]:
    targets = {primed(v): v for v in h.variables}
    edges = []
    for target in h.successors(source):
        phi: Formula = h.jump(source, target)  # type: ignore[assignment]
        parts = phi.parts if isinstance(phi, And) else (phi,)
        conditions: List[Atom] = []
        resets: Dict[str, Term] = {}
        for part in parts:
            if not isinstance(part, Atom):
                raise ParameterError(f"jump {source} -> {target} must be a conjunction of atoms to simulate")
            if term_variables(part.term) & set(targets):
                read = _reset_of(part.term, targets)
                if read is not None and read[0] not in resets:
                    resets[read[0]] = read[1]
                continue
            conditions.append(part)
        events = [_lambdify(a.term, h.variables) for a in conditions]
        edges.append(_Edge(target, conditions, resets, events))
    return edges


class _Flow:
    def __init__(self, h: HybridAutomaton, mode: str):
        system = h.flow(mode)
        self.rhs = [_lambdify(f, system.variables) for f in system.rhs]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.array([f(x) for f in self.rhs])

    def step(self, x: np.ndarray, h: float) -> np.ndarray:
        k1 = self(x)
        k2 = self(x + 0.5 * h * k1)
        k3 = self(x + 0.5 * h * k2)
        k4 = self(x + h * k3)
        return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _env(variables: Tuple[str, ...], x: np.ndarray) -> Dict[str, float]:
    return {v: float(value) for v, value in zip(variables, x)}


def _guard_holds(edge: _Edge, variables: Tuple[str, ...], x: np.ndarray, tol: float) -> bool:
    env = _env(variables, x)
    return all(holds(delta_weaken(a, tol), env) for a in edge.conditions)


def _apply_reset(edge: _Edge, variables: Tuple[str, ...], x: np.ndarray) -> np.ndarray:
    env = _env(variables, x)
    after = x.copy()
    for i, v in enumerate(variables):
        g = edge.resets.get(v)
        if g is not None:
            after[i] = _lambdify(g, variables)(x)
    logger.debug(f"Reset {env} to {_env(variables, after)}")
    return after


def _crossing(flow: _Flow, event: Callable[[np.ndarray], float], x: np.ndarray, dt: float) -> float:
    """Step length in (0, dt] at which ``event`` changes sign, by bisection"""
    lo, hi = 0.0, dt
    start = np.sign(event(x))
    for _ in range(_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if np.sign(event(flow.step(x, mid))) == start:
            lo = mid
        else:
            hi = mid
    return hi


def simulate(
    h: HybridAutomaton,
    state: Mapping[str, float],
    mode: str,
    horizon: float,
    dt: float = 1e-3,
    max_jumps: int = 10,
    guard_tol: float = 1e-6,
) -> SimulationRun:
    """Simulate one run of ``h`` from ``state`` in ``mode``.

    The run stops at the time horizon, after ``max_jumps`` jumps, or when the
    state leaves the automaton's bounds.
    """
    if dt <= 0 or horizon < 0:
        raise ParameterError("simulation needs a positive step and a nonnegative horizon")
    variables = h.variables
    missing = set(variables) - set(state)
    if missing:
        raise ParameterError(f"initial state misses {sorted(missing)}")
    lo = np.array([h.bounds[v].lo for v in variables])
    hi = np.array([h.bounds[v].hi for v in variables])

    run = SimulationRun(variables=variables)
    x = np.array([float(state[v]) for v in variables])
    elapsed = 0.0
    while True:
        flow, edges = _Flow(h, mode), _edges(h, mode)
        times, states = [0.0], [x.copy()]
        local = 0.0
        fired: Optional[Tuple[_Edge, float, np.ndarray]] = None
        while elapsed + local < horizon and fired is None:
            step = min(dt, horizon - elapsed - local)
            nxt = flow.step(x, step)
            best: Optional[Tuple[_Edge, float, np.ndarray]] = None
            for edge in edges:
                for event in edge.events:
                    before, after = event(x), event(nxt)
                    if before == 0 or np.sign(before) == np.sign(after):
                        continue
                    s = _crossing(flow, event, x, step)
                    at = flow.step(x, s)
                    if _guard_holds(edge, variables, at, guard_tol) and (best is None or s < best[1]):
                        best = (edge, s, at)
            if best is not None:
                fired = best
                local += best[1]
                x = best[2]
            else:
                local += step
                x = nxt
            times.append(local)
            states.append(x.copy())
            if np.any(x < lo) or np.any(x > hi):
                break
        run.pieces.append(FlowPiece(mode, np.array(times), np.array(states)))
        elapsed += local

        if np.any(x < lo) or np.any(x > hi):
            run.stop_reason = "left bounds"
            break
        if fired is None:
            run.stop_reason = "horizon"
            break
        if len(run.jumps) >= max_jumps:
            run.stop_reason = "jump limit"
            break
        edge = fired[0]
        after = _apply_reset(edge, variables, x)
        run.jumps.append(JumpEvent(mode, edge.target, elapsed, x.copy(), after))
        mode, x = edge.target, after

    logger.info(f"Simulated {h.name} for {elapsed:.3f}s with {len(run.jumps)} jumps ({run.stop_reason})")
    return run
