"""
Trajectory families the stability encoders quantify over.

A family hands out segments: the binders of one trajectory shape, the
relation between its start and end states, and the names of those states.
Continuous systems have a single segment; hybrid automata contribute one per
mode path (see ``src.hybrid.reach``).
"""
from dataclasses import dataclass
from typing import List, Optional, Protocol, Sequence, Set, Tuple

from src.core.errors import ParameterError
from src.logic.formula import Formula, flow_relation, fresh_name
from src.logic.terms import Term, TermLike, Var, as_term
from src.numerics.interval import Box
from src.numerics.ode import OdeSystem, register_system

Binder = Tuple[str, Term, Term]


@dataclass(frozen=True)
class Segment:
    """Trajectories from ``initial`` to ``final`` over ``binders``, tied together by ``relation``"""

    binders: Tuple[Binder, ...]
    relation: Formula
    initial: Tuple[str, ...]
    final: Tuple[str, ...]

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(name for name, _, _ in self.binders)


class Trajectories(Protocol):
    name: str
    variables: Tuple[str, ...]
    bounds: Box

    def segments(self, start: TermLike, end: TermLike, tag: str = "") -> List[Segment]:
        ...


def state_binders(names: Sequence[str], variables: Sequence[str], bounds: Box) -> List[Binder]:
    """Binders ranging each of ``names`` over the bounds of the matching state variable"""
    binders = []
    for name, v in zip(names, variables):
        iv = bounds[v]
        binders.append((name, as_term(iv.lo), as_term(iv.hi)))
    return binders


def restrict_bounds(system_bounds: Box, bounds: Optional[Box]) -> Box:
    """The state box X of an encoding; it must lie inside the system's bounds"""
    if bounds is None:
        return system_bounds
    if set(bounds) != set(system_bounds):
        raise ParameterError(f"state box must bind exactly {list(system_bounds)}")
    if not bounds.is_subset(system_bounds):
        raise ParameterError("state box must lie inside the system bounds")
    return Box((v, bounds[v]) for v in system_bounds.names)


class ContinuousTrajectories:
    """Solutions of one autonomous ODE: x_t is the flow from x_0 after time t"""

    def __init__(self, system: OdeSystem, bounds: Optional[Box] = None):
        self.system = register_system(system)
        self.name = system.name
        self.variables = system.variables
        self.bounds = restrict_bounds(system.bounds, bounds)

    def segments(self, start: TermLike, end: TermLike, tag: str = "") -> List[Segment]:
        taken: Set[str] = set(self.variables)
        time = fresh_name(f"t{tag}", taken)
        taken.add(time)
        initial = tuple(fresh_name(f"{v}_0{tag}", taken) for v in self.variables)
        taken.update(initial)
        final = tuple(fresh_name(f"{v}_t{tag}", taken) for v in self.variables)

        binders = [(time, as_term(start), as_term(end))]
        binders += state_binders(initial, self.variables, self.bounds)
        binders += state_binders(final, self.variables, self.bounds)
        relation = flow_relation(self.name, [Var(x) for x in initial], Var(time), final)
        return [Segment(tuple(binders), relation, initial, final)]
