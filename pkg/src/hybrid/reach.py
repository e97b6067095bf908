"""
Bounded reachability of hybrid automata.

The k-step encoding chooses one active mode per step. Boolean selectors
b_q^i with ``enforce`` conjuncts describe that choice; enumerating mode paths
fixes each satisfying selector assignment in turn, so every path contributes
a plain real-arithmetic conjunction:

    init_q0(x_0) /\\ flow_q0(x_0, x_0^t, t_0) /\\ inv-conjunct(q0)
    /\\ jump_{q0 -> q1}(x_0^t, x_1) /\\ flow_q1(x_1, x_1^t, t_1) /\\ ...

where the invariant conjunct is forall tau in [0, t_i]. forall y in X.
flow_q(x_i, y, tau) -> inv_q(y).
"""
import logging
from dataclasses import dataclass
from typing import Collection, List, Optional, Sequence, Tuple

from src.core.config import settings
from src.core.errors import ParameterError, PathExplosionError, UnknownModeError
from src.core.results import SolverVerdict, StabilityKind, StabilityVerdict
from src.hybrid.automaton import HybridAutomaton
from src.logic.formula import (
    FALSE,
    TRUE,
    Formula,
    conj,
    disj,
    exists,
    forall,
    ge,
    gt,
    negate,
)
from src.logic.terms import Term, TermLike, Var, add, as_term
from src.numerics.interval import Box
from src.solver.engine import SolverConfig, decide
from src.solver.trace import TraceWriter
from src.stability.checks import check_stability, solver_config
from src.stability.encoders import StabilityParams, number
from src.stability.trajectories import Binder, Segment, restrict_bounds, state_binders

logger = logging.getLogger(__name__)

Edge = Tuple[str, str]


@dataclass(frozen=True)
class ModePath:
    """Modes q_0 ... q_k visited by a run with k jumps"""

    modes: Tuple[str, ...]

    @property
    def jumps(self) -> int:
        return len(self.modes) - 1

    def edges(self) -> List[Edge]:
        return list(zip(self.modes, self.modes[1:]))

    def __str__(self) -> str:
        return " -> ".join(self.modes)


def mode_paths(
    modes: Sequence[str],
    edges: Collection[Edge],
    k: int,
    starts: Optional[Sequence[str]] = None,
    cap: Optional[int] = None,
) -> List[ModePath]:
    """Every path of exactly k jumps along ``edges``, in mode order.

    Raises:
        UnknownModeError: when an edge or start names an undeclared mode
        PathExplosionError: when more than ``cap`` paths exist
    """
    if k < 0:
        raise ParameterError(f"step bound must be nonnegative, got {k}")
    known = set(modes)
    for source, target in edges:
        if source not in known or target not in known:
            raise UnknownModeError(f"edge {source} -> {target} names an undeclared mode")
    starts = list(modes) if starts is None else list(starts)
    for q in starts:
        if q not in known:
            raise UnknownModeError(f"undeclared mode {q}")
    cap = settings.path_cap if cap is None else cap
    edge_set = set(edges)
    successors = {q: [p for p in modes if (q, p) in edge_set] for q in modes}

    paths: List[ModePath] = []

    def extend(prefix: List[str]) -> None:
        if len(prefix) == k + 1:
            paths.append(ModePath(tuple(prefix)))
            if len(paths) > cap:
                raise PathExplosionError(f"more than {cap} mode paths with {k} jumps")
            return
        for nxt in successors[prefix[-1]]:
            extend(prefix + [nxt])

    for q in starts:
        extend([q])
    return paths


def automaton_paths(h: HybridAutomaton, k: int, cap: Optional[int] = None, live_only: bool = True) -> List[ModePath]:
    """Paths of h with k jumps; ``live_only`` skips paths whose first mode has init FALSE"""
    starts = [q for q in h.modes if not (live_only and h.init(q) == FALSE)]
    return mode_paths(h.modes, list(h.jumps), k, starts=starts, cap=cap)


# ----------------------------------------------------------------------
# Boolean selectors
# ----------------------------------------------------------------------
def selector(q: str, i: int) -> str:
    return f"b_{q}_{i}"


def literal(q: str, i: int, positive: bool = True) -> Formula:
    """b_q^i as the atom b - 1/2 > 0 over a 0/1-valued variable"""
    atom = gt(Var(selector(q, i)), number(0.5))
    return atom if positive else negate(atom)


def enforce(modes: Sequence[str], q: str, i: int, q_next: Optional[str] = None) -> Formula:
    """b_q^i /\\ not b_p^i for every other mode p; with ``q_next``, also the same at step i + 1"""
    for m in (q, q_next):
        if m is not None and m not in modes:
            raise UnknownModeError(f"undeclared mode {m}")
    parts = [literal(q, i)] + [literal(p, i, positive=False) for p in modes if p != q]
    if q_next is None:
        return conj(*parts)
    return conj(*parts, enforce(modes, q_next, i + 1))


def selector_formula(modes: Sequence[str], edges: Collection[Edge], k: int) -> Formula:
    """Selector skeleton of the k-step encoding: some mode at step 0, and an edge per step"""
    if k < 0:
        raise ParameterError(f"step bound must be nonnegative, got {k}")
    first = disj(*(enforce(modes, q, 0) for q in modes)) if modes else FALSE
    steps = [disj(*(enforce(modes, q, i, p) for q, p in edges)) if edges else FALSE for i in range(k)]
    return conj(first, *steps)


# ----------------------------------------------------------------------
# Unrolling
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class _Names:
    starts: Tuple[Tuple[str, ...], ...]
    ends: Tuple[Tuple[str, ...], ...]
    times: Tuple[str, ...]


def _names(h: HybridAutomaton, jumps: int, tag: str) -> _Names:
    steps = range(jumps + 1)
    return _Names(
        starts=tuple(tuple(f"{v}_{i}{tag}" for v in h.variables) for i in steps),
        ends=tuple(tuple(f"{v}_{i}t{tag}" for v in h.variables) for i in steps),
        times=tuple(f"t_{i}{tag}" for i in steps),
    )


def _invariant_conjunct(h: HybridAutomaton, q: str, start: Sequence[str], time: str, step: str) -> Formula:
    """forall tau in [0, time]. forall y in X. flow_q(start, y, tau) -> inv_q(y)"""
    inv = h.invariant(q)
    if inv == TRUE:
        return TRUE
    tau = f"tau_{step}"
    ys = [f"{v}_{step}s" for v in h.variables]
    body = disj(
        negate(h.flow_relation(q, [Var(x) for x in start], Var(tau), ys)),
        h.state_formula(inv, [Var(y) for y in ys]),
    )
    for name, lower, upper in reversed(state_binders(ys, h.variables, h.bounds)):
        body = forall(name, lower, upper, body)
    return forall(tau, as_term(0), Var(time), body)


def path_relation(h: HybridAutomaton, path: ModePath, tag: str = "") -> Tuple[Formula, _Names]:
    """Conjunction tying the states of one path; the selector literals are implied by the path"""
    names = _names(h, path.jumps, tag)
    parts: List[Formula] = []
    for i, q in enumerate(path.modes):
        start = names.starts[i]
        if i == 0:
            parts.append(h.state_formula(h.init(q), [Var(x) for x in start]))
        else:
            prev = path.modes[i - 1]
            parts.append(h.jump_relation(prev, q, [Var(x) for x in names.ends[i - 1]], [Var(x) for x in start]))
        parts.append(h.flow_relation(q, [Var(x) for x in start], Var(names.times[i]), names.ends[i]))
        parts.append(_invariant_conjunct(h, q, start, names.times[i], f"{i}{tag}"))
    return conj(*parts), names


def reach_encoding(h: HybridAutomaton, k: int, path: Optional[ModePath] = None) -> Formula:
    """k-step reachability with free states x_i, x_i^t and dwell times t_i.

    With a path the encoding is that path's conjunction; without one it is
    the disjunction over every path with k jumps, FALSE when there is none.
    """
    if k < 0:
        raise ParameterError(f"step bound must be nonnegative, got {k}")
    if path is not None:
        if path.jumps != k:
            raise ParameterError(f"path {path} has {path.jumps} jumps, expected {k}")
        for source, target in path.edges():
            if h.jump(source, target) is None:
                raise ParameterError(f"path {path} uses the undeclared jump {source} -> {target}")
        return path_relation(h, path)[0]
    paths = automaton_paths(h, k, live_only=False)
    return disj(*(path_relation(h, p)[0] for p in paths)) if paths else FALSE


class HybridTrajectories:
    """Runs of an automaton with at most k jumps, one segment per mode path.

    Dwell times of a single-mode path range over the time window directly;
    longer paths bound each dwell time by the window's end and their sum by
    the window.
    """

    def __init__(self, h: HybridAutomaton, k: int, bounds: Optional[Box] = None, cap: Optional[int] = None):
        if k < 0:
            raise ParameterError(f"step bound must be nonnegative, got {k}")
        self.automaton = h
        self.k = k
        self.name = h.name
        self.variables = h.variables
        self.bounds = restrict_bounds(h.bounds, bounds)
        self.paths = [p for j in range(k + 1) for p in automaton_paths(h, j, cap=cap)]
        if not self.paths:
            logger.warning(f"Automaton {h.name} has no live mode path within {k} jumps")

    def segments(self, start: TermLike, end: TermLike, tag: str = "") -> List[Segment]:
        lo, hi = as_term(start), as_term(end)
        return [self._segment(p, lo, hi, tag) for p in self.paths]

    def _segment(self, path: ModePath, lo: Term, hi: Term, tag: str) -> Segment:
        relation, names = path_relation(self.automaton, path, tag)
        binders: List[Binder] = []
        if path.jumps == 0:
            binders.append((names.times[0], lo, hi))
        else:
            binders.extend((t, as_term(0), hi) for t in names.times)
            total = Var(names.times[0])
            for t in names.times[1:]:
                total = add(total, Var(t))
            relation = conj(relation, ge(total, lo), ge(hi, total))
        for i in range(path.jumps + 1):
            binders += state_binders(names.starts[i], self.variables, self.bounds)
            binders += state_binders(names.ends[i], self.variables, self.bounds)
        # the initial state keeps the same names on every path
        return Segment(tuple(binders), relation, names.starts[0], names.ends[-1])


def _exists_binders(binders: Sequence[Binder], body: Formula) -> Formula:
    for name, lower, upper in reversed(binders):
        body = exists(name, lower, upper, body)
    return body


def query_reach(
    h: HybridAutomaton,
    k: int,
    goal: Formula,
    time_bound: Optional[float] = None,
    config: Optional[SolverConfig] = None,
    trace: Optional[TraceWriter] = None,
) -> SolverVerdict:
    """Decide whether a state satisfying ``goal`` is reachable within k jumps and total time T.

    ``goal`` is written over the automaton's state variables.
    """
    horizon = number(settings.time_bound if time_bound is None else time_bound)
    family = HybridTrajectories(h, k)
    parts = []
    for s in family.segments(0, horizon, tag="r"):
        target = h.state_formula(goal, [Var(x) for x in s.final])
        parts.append(_exists_binders(s.binders, conj(s.relation, target)))
    phi = disj(*parts) if parts else FALSE
    if phi == FALSE:
        logger.info(f"No live path of {h.name}; goal unreachable")
    logger.info(f"Reachability query on {h.name} with k={k}: {goal}")
    return decide(phi, config or SolverConfig(), trace)


def check_hybrid_stability(
    h: HybridAutomaton,
    kind: StabilityKind = StabilityKind.LYAPUNOV,
    k: Optional[int] = None,
    params: Optional[StabilityParams] = None,
    config: Optional[SolverConfig] = None,
    trace: Optional[TraceWriter] = None,
) -> StabilityVerdict:
    """Delta-stability of the runs of h with at most k jumps"""
    params = params or StabilityParams()
    k = settings.k_steps if k is None else k
    family = HybridTrajectories(h, k, params.state_box())
    logger.info(f"Hybrid {StabilityKind(kind).value} check of {h.name}: {len(family.paths)} paths, k={k}")
    return check_stability(family, kind, params, solver_config(params.delta, config), trace)

