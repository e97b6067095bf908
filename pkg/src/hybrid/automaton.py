"""
Hybrid automata given as formulas: per-mode flows, invariants and initial
conditions, and per-edge jump relations between unprimed and primed states.
"""
import logging
from dataclasses import dataclass, replace
from types import MappingProxyType
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from src.core.errors import ParameterError, UnknownModeError
from src.logic.formula import (
    FALSE,
    TRUE,
    Formula,
    delta_weaken,
    exists,
    flow_relation,
    free_variables,
    substitute,
)
from src.logic.terms import TermLike
from src.numerics.interval import Box
from src.numerics.ode import OdeSystem, register_system

logger = logging.getLogger(__name__)


def primed(name: str) -> str:
    return name + "'"


@dataclass(frozen=True, eq=False)
class HybridAutomaton:
    """H = <X, Q, flow, jump, inv, init> over the state variables of X"""

    name: str
    variables: Tuple[str, ...]
    bounds: Box
    modes: Tuple[str, ...]
    flows: Mapping[str, OdeSystem]
    invariants: Mapping[str, Formula]
    jumps: Mapping[Tuple[str, str], Formula]
    inits: Mapping[str, Formula]
    flow_slack: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "modes", tuple(self.modes))
        if not self.modes:
            raise ParameterError(f"automaton {self.name} has no modes")
        if len(set(self.modes)) != len(self.modes):
            raise ParameterError(f"automaton {self.name} declares a mode twice")
        if self.flow_slack < 0:
            raise ParameterError("flow slack must be nonnegative")
        missing = [v for v in self.variables if v not in self.bounds]
        if missing:
            raise ParameterError(f"automaton {self.name} has no bounds for {missing}")

        for q in self.modes:
            system = self.flows.get(q)
            if system is None:
                raise ParameterError(f"mode {q} of {self.name} has no flow")
            if system.variables != self.variables:
                raise ParameterError(f"flow of mode {q} must range over {self.variables}")
        known = set(self.modes)
        for table in (self.flows, self.invariants, self.inits):
            for q in table:
                if q not in known:
                    raise UnknownModeError(f"automaton {self.name} has no mode {q}")
        for source, target in self.jumps:
            if source not in known or target not in known:
                raise UnknownModeError(f"jump {source} -> {target} names an unknown mode")

        state = set(self.variables)
        for q, phi in list(self.invariants.items()) + list(self.inits.items()):
            extra = free_variables(phi) - state
            if extra:
                raise ParameterError(f"formula of mode {q} uses undeclared variables {sorted(extra)}")
        both = state | {primed(v) for v in self.variables}
        for edge, phi in self.jumps.items():
            extra = free_variables(phi) - both
            if extra:
                raise ParameterError(f"jump {edge[0]} -> {edge[1]} uses undeclared variables {sorted(extra)}")

        object.__setattr__(self, "flows", MappingProxyType(dict(self.flows)))
        object.__setattr__(self, "invariants", MappingProxyType(dict(self.invariants)))
        object.__setattr__(self, "jumps", MappingProxyType(dict(self.jumps)))
        object.__setattr__(self, "inits", MappingProxyType(dict(self.inits)))

    def _mode(self, q: str) -> str:
        if q not in self.flows:
            raise UnknownModeError(f"automaton {self.name} has no mode {q}")
        return q

    def flow(self, q: str) -> OdeSystem:
        return self.flows[self._mode(q)]

    def invariant(self, q: str) -> Formula:
        return self.invariants.get(self._mode(q), TRUE)

    def init(self, q: str) -> Formula:
        return self.inits.get(self._mode(q), FALSE)

    def jump(self, source: str, target: str) -> Optional[Formula]:
        self._mode(source)
        self._mode(target)
        return self.jumps.get((source, target))

    def successors(self, q: str) -> List[str]:
        self._mode(q)
        return [target for target in self.modes if (q, target) in self.jumps]

    def flow_relation(self, q: str, initial: Sequence[TermLike], time: TermLike, state: Sequence[str]) -> Formula:
        """flow_q(initial, state, time), weakened by the automaton's flow slack"""
        relation = flow_relation(self.flow(q).name, initial, time, state)
        return delta_weaken(relation, self.flow_slack) if self.flow_slack else relation

    def jump_relation(
        self, source: str, target: str, before: Sequence[TermLike], after: Sequence[TermLike]
    ) -> Formula:
        phi = self.jump(source, target)
        if phi is None:
            raise ParameterError(f"automaton {self.name} has no jump {source} -> {target}")
        mapping: Dict[str, TermLike] = dict(zip(self.variables, before))
        mapping.update({primed(v): a for v, a in zip(self.variables, after)})
        return substitute(phi, mapping)

    def state_formula(self, phi: Formula, state: Sequence[TermLike]) -> Formula:
        return substitute(phi, dict(zip(self.variables, state)))


def build_automaton(
    name: str,
    bounds: Box,
    flows: Mapping[str, OdeSystem],
    invariants: Optional[Mapping[str, Formula]] = None,
    jumps: Optional[Mapping[Tuple[str, str], Formula]] = None,
    inits: Optional[Mapping[str, Formula]] = None,
) -> HybridAutomaton:
    """Assemble an automaton and register its mode flows.

    Modes follow the order of ``flows``. Missing invariants are TRUE; missing
    initial conditions are FALSE.
    """
    modes = tuple(flows)
    for table in (invariants or {}, inits or {}):
        for q in table:
            if q not in flows:
                raise UnknownModeError(f"automaton {name} has no mode {q}")
    for system in flows.values():
        register_system(system)
    automaton = HybridAutomaton(
        name=name,
        variables=bounds.names,
        bounds=bounds,
        modes=modes,
        flows=flows,
        invariants={q: (invariants or {}).get(q, TRUE) for q in modes},
        jumps=dict(jumps or {}),
        inits={q: (inits or {}).get(q, FALSE) for q in modes},
    )
    logger.debug(f"Built automaton {name} with modes {modes} and {len(automaton.jumps)} jumps")
    return automaton


def weaken_automaton(h: HybridAutomaton, delta: float) -> HybridAutomaton:
    """Delta-weakening of every formula of the automaton; flows allow deviation up to delta"""
    if delta < 0:
        raise ParameterError(f"delta must be nonnegative, got {delta}")
    if delta == 0:
        return h
    return replace(
        h,
        invariants={q: delta_weaken(phi, delta) for q, phi in h.invariants.items()},
        jumps={edge: delta_weaken(phi, delta) for edge, phi in h.jumps.items()},
        inits={q: delta_weaken(phi, delta) for q, phi in h.inits.items()},
        flow_slack=h.flow_slack + float(delta),
    )


def init_sentence(h: HybridAutomaton, q: str) -> Formula:
    """exists x in X. init_q(x)"""
    phi = h.init(q)
    for v in reversed(h.variables):
        iv = h.bounds[v]
        phi = exists(v, iv.lo, iv.hi, phi)
    return phi


def check_inits(h: HybridAutomaton, delta: float) -> List[str]:
    """Modes whose initial condition is satisfiable up to delta; warns when there is none"""
    from src.solver.engine import SolverConfig, decide

    live = []
    for q in h.modes:
        if h.init(q) == FALSE:
            continue
        if decide(init_sentence(h, q), SolverConfig(delta=delta, workers=1)).is_delta_true:
            live.append(q)
    if not live:
        logger.warning(f"No initial condition of automaton {h.name} is satisfiable at delta={delta}")
    return live
