"""
Branch-and-prune delta-decision procedure for bounded sentences.

A sentence is compiled into a tree of atom, junction and quantifier-block
nodes. Each block is decided by a depth-first search over pieces of its
variables' domain, and every piece is three-valued: delta-true, false or
unknown. Unknown pieces are bisected along their widest splittable variable
until the depth's resolution floor is reached.

Variables that an atom forces to equal a function of other variables (the
state after a flow, a reset value) are not split. Their piece is contracted
to the enclosure of that function, and the solver reasons about the exact
pinned value, which always lies inside the enclosure.
"""
import logging
import time
from concurrent.futures import Future, ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

from pydantic import BaseModel, Field

from src.core.config import settings
from src.core.errors import (
    BoundsEscapeError,
    DomainViolation,
    NonConvergenceError,
    ParameterError,
    ResolutionFloorError,
    UnboundedQuantifierError,
)
from src.core.results import SolverOutcome, SolverStats, SolverVerdict, WitnessBox
from src.logic.formula import And, Atom, Formula, Or, Quantified, Relation, free_variables
from src.logic.terms import Apply, FlowValue, Term, Var, ZERO, contains_flow, term_variables
from src.numerics.evaluate import Evaluator, compile_term
from src.numerics.interval import Box, Interval, working_precision
from src.numerics.ode import flow_tube, get_system, horizon_for
from src.solver.trace import AtomEnclosure, TraceRecord, TraceWriter

logger = logging.getLogger(__name__)

_NUMERIC_ERRORS = (DomainViolation, BoundsEscapeError, NonConvergenceError)
_TRACE_ATOMS = 32
_SAMPLED_LEAVES = 16


class Truth(str, Enum):
    """Three-valued answer on a box"""

    TRUE = "delta-true"
    FALSE = "false"
    UNKNOWN = "unknown"


class SolverConfig(BaseModel):
    """Parameters of one decide call"""

    delta: float = Field(default_factory=lambda: settings.delta, gt=0)
    schedule_base: float = Field(default=2.0, gt=1.0, description="Resolution floor shrink factor per block depth")
    max_depth: int = Field(default_factory=lambda: settings.max_split_depth, ge=1)
    workers: int = Field(default_factory=lambda: settings.workers, ge=1)
    deterministic: bool = Field(default_factory=lambda: settings.deterministic)
    tolerance: Optional[float] = Field(default=None, gt=0, description="ODE enclosure tolerance")
    precision: int = Field(
        default_factory=lambda: settings.precision_bits, ge=24, description="Working precision of transcendental kernels in bits"
    )

    def floor(self, level: int) -> float:
        """Width under which variables of a block at this depth are no longer split"""
        return self.delta / self.schedule_base ** (level + 2)

    @property
    def ode_tolerance(self) -> float:
        return self.tolerance if self.tolerance is not None else settings.tol_factor * self.delta


# ----------------------------------------------------------------------
# Compiled tree
# ----------------------------------------------------------------------
@dataclass(eq=False)
class _AtomNode:
    atom: Atom
    evaluate: Evaluator
    variables: FrozenSet[str]
    costly: bool


@dataclass(eq=False)
class _Junction:
    conjunctive: bool
    children: List["_Node"]


@dataclass(eq=False)
class _Pin:
    """Block variables fixed to the value of a term by a pair of atoms or a flow atom"""

    names: Tuple[str, ...]
    atoms: FrozenSet[int]
    depends: FrozenSet[str]
    value: Optional[Evaluator] = None
    system: Optional[str] = None
    components: Tuple[int, ...] = ()
    initial: Tuple[Evaluator, ...] = ()
    time: Optional[Evaluator] = None
    time_var: Optional[str] = None


@dataclass(eq=False)
class _Block:
    kind: str
    names: Tuple[str, ...]
    lowers: Tuple[Evaluator, ...]
    uppers: Tuple[Evaluator, ...]
    body: "_Node"
    level: int
    quantifier_free: bool
    pins: List[_Pin] = field(default_factory=list)
    tubes: List[_Pin] = field(default_factory=list)
    sealed: FrozenSet[str] = frozenset()
    free_parts: List["_Node"] = field(default_factory=list)
    cheap_parts: List["_Node"] = field(default_factory=list)
    stages: List[List["_Node"]] = field(default_factory=list)

    @property
    def exists(self) -> bool:
        return self.kind == "exists"

    @property
    def pinned(self) -> FrozenSet[str]:
        return frozenset(n for p in self.pins for n in p.names)

    @property
    def tube_times(self) -> FrozenSet[str]:
        return frozenset(p.time_var for p in self.tubes if p.time_var)

    @property
    def splittable(self) -> Tuple[str, ...]:
        """Unpinned names; tube times only when some other part mentions them"""
        fixed = self.pinned | self.sealed
        return tuple(n for n in self.names if n not in fixed)


_Node = Union[_AtomNode, _Junction, _Block]


def _cost(node: _Node) -> int:
    if isinstance(node, _AtomNode):
        return 1 if node.costly else 0
    if isinstance(node, _Junction):
        return max((_cost(c) for c in node.children), default=0)
    return 2


def _node_variables(node: _Node) -> FrozenSet[str]:
    if isinstance(node, _AtomNode):
        return node.variables
    if isinstance(node, _Junction):
        found: Set[str] = set()
        for c in node.children:
            found |= _node_variables(c)
        return frozenset(found)
    inner = _node_variables(node.body) - set(node.names)
    return inner | frozenset(node.names)


def _node_atoms(node: _Node) -> Iterable[_AtomNode]:
    if isinstance(node, _AtomNode):
        yield node
    elif isinstance(node, _Junction):
        for c in node.children:
            yield from _node_atoms(c)


# ----------------------------------------------------------------------
# Pin recognition
# ----------------------------------------------------------------------
def _flow_shape(t: Term) -> Optional[List[Tuple[str, FlowValue]]]:
    """Match norm(y1 - flow(..., 0), y2 - flow(..., 1), ...)"""
    if not isinstance(t, Apply) or t.op != "norm":
        return None
    pairs = []
    for arg in t.args:
        if not (isinstance(arg, Apply) and arg.op == "sub"):
            return None
        y, f = arg.args
        if not (isinstance(y, Var) and isinstance(f, FlowValue)):
            return None
        pairs.append((y.name, f))
    return pairs


def _difference(t: Term) -> Optional[Tuple[str, Term]]:
    """Read t as v - g"""
    if isinstance(t, Var):
        return t.name, ZERO
    if isinstance(t, Apply) and t.op == "sub" and isinstance(t.args[0], Var):
        return t.args[0].name, t.args[1]
    return None


def _is_mirror(t: Term, name: str, g: Term) -> bool:
    """t reads g - v"""
    if g == ZERO:
        return t == Apply("neg", (Var(name),))
    return t == Apply("sub", (g, Var(name)))


def _strip_neg(t: Term) -> Optional[Term]:
    if isinstance(t, Apply) and t.op == "neg":
        return t.args[0]
    if isinstance(t, Var):
        # neg(neg(v)) folds to v
        return Apply("neg", (t,))
    return None


class _Compiler:
    def __init__(self, tolerance: float):
        self.tolerance = tolerance

    def compile(self, phi: Formula, level: int = 0) -> _Node:
        if isinstance(phi, Atom):
            return _AtomNode(
                atom=phi,
                evaluate=compile_term(phi.term, self.tolerance, strict=False),
                variables=term_variables(phi.term),
                costly=contains_flow(phi.term),
            )
        if isinstance(phi, (And, Or)):
            children = [self.compile(p, level) for p in phi.parts]
            children.sort(key=_cost)
            return _Junction(conjunctive=isinstance(phi, And), children=children)
        if isinstance(phi, Quantified):
            return self._block(phi, level)
        raise TypeError(f"not a formula: {phi!r}")

    def _block(self, phi: Quantified, level: int) -> _Block:
        kind = phi.kind
        names: List[str] = []
        lowers: List[Evaluator] = []
        uppers: List[Evaluator] = []
        body: Formula = phi
        while isinstance(body, Quantified) and body.kind == kind and body.var not in names:
            names.append(body.var)
            lowers.append(compile_term(body.lower, self.tolerance, strict=False))
            uppers.append(compile_term(body.upper, self.tolerance, strict=False))
            body = body.body
        inner = self.compile(body, level + 1)
        block = _Block(
            kind=kind,
            names=tuple(names),
            lowers=tuple(lowers),
            uppers=tuple(uppers),
            body=inner,
            level=level,
            quantifier_free=not any(isinstance(c, _Block) for c in _walk(inner)),
        )
        self._attach_pins(block)
        return block

    def _attach_pins(self, block: _Block) -> None:
        body = block.body
        polarity = isinstance(body, _Junction) and body.conjunctive == block.exists
        parts: List[_Node] = list(body.children) if polarity else [body]  # type: ignore[union-attr]
        atoms = [p for p in parts if isinstance(p, _AtomNode)]
        flows = self._flow_pins(block, atoms)
        flowing = {n for p in flows for n in p.names}
        candidates = flows + self._equality_pins(block, atoms, flowing)

        pins: List[_Pin] = []
        taken: Set[str] = set()
        for pin in candidates:
            if taken.isdisjoint(pin.names):
                pins.append(pin)
                taken.update(pin.names)
        block.pins = _order_pins(pins)

        used = set().union(*(p.atoms for p in block.pins)) if block.pins else set()
        block.free_parts = [p for p in parts if id(p) not in used]
        pinned = block.pinned
        block.cheap_parts = [
            p for p in block.free_parts if _cost(p) == 0 and _node_variables(p).isdisjoint(pinned)
        ]
        block.tubes = self._tubes(block)
        mentioned: Set[str] = set()
        for part in block.free_parts:
            mentioned |= _node_variables(part)
        block.sealed = frozenset(t for t in block.tube_times if t not in mentioned)
        block.stages = _stages(block)

    def _flow_pins(self, block: _Block, atoms: List[_AtomNode]) -> List[_Pin]:
        found = []
        for node in atoms:
            a = node.atom
            if block.exists:
                if a.relation != Relation.GE or not (isinstance(a.term, Apply) and a.term.op == "neg"):
                    continue
                shape = _flow_shape(a.term.args[0])
            else:
                shape = _flow_shape(a.term) if a.relation == Relation.GT else None
            if not shape:
                continue
            first = shape[0][1]
            ys = [y for y, _ in shape]
            components = [f.component for _, f in shape]
            same = all(
                f.system == first.system and f.initial == first.initial and f.time == first.time
                for _, f in shape
            )
            if not same or len(set(ys)) != len(ys) or len(set(components)) != len(components):
                continue
            if not set(ys) <= set(block.names):
                continue
            depends: Set[str] = set(term_variables(first.time))
            for x in first.initial:
                depends |= term_variables(x)
            if depends & set(ys):
                continue
            found.append(
                _Pin(
                    names=tuple(ys),
                    atoms=frozenset({id(node)}),
                    depends=frozenset(depends),
                    system=first.system,
                    components=tuple(components),
                    initial=tuple(compile_term(x, self.tolerance, strict=False) for x in first.initial),
                    time=compile_term(first.time, self.tolerance, strict=False),
                    time_var=first.time.name if isinstance(first.time, Var) else None,
                )
            )
        return found

    def _equality_pins(self, block: _Block, atoms: List[_AtomNode], flowing: Set[str]) -> List[_Pin]:
        """Pairs v - g >= 0, g - v >= 0 over a block name v not already fixed by a flow"""
        relation = Relation.GE if block.exists else Relation.GT
        usable = [n for n in atoms if n.atom.relation == relation]
        found = []
        claimed: Set[int] = set()
        for node in usable:
            if id(node) in claimed:
                continue
            term = node.atom.term if block.exists else _strip_neg(node.atom.term)
            read = _difference(term) if term is not None else None
            if read is None:
                continue
            name, g = read
            if name not in block.names or name in flowing or name in term_variables(g):
                continue
            for other in usable:
                if other is node or id(other) in claimed:
                    continue
                mirror = other.atom.term if block.exists else _strip_neg(other.atom.term)
                if mirror is not None and _is_mirror(mirror, name, g):
                    claimed.update({id(node), id(other)})
                    found.append(
                        _Pin(
                            names=(name,),
                            atoms=frozenset({id(node), id(other)}),
                            depends=term_variables(g),
                            value=compile_term(g, self.tolerance, strict=False),
                        )
                    )
                    break
        return found

    def _tubes(self, block: _Block) -> List[_Pin]:
        """Flow pins whose time is a block name of their own; their time is covered by tube segments"""
        tubes: List[_Pin] = []
        times: Set[str] = set()
        for pin in block.pins:
            t = pin.time_var
            if pin.system is None or t is None or t not in block.names or t in block.pinned or t in times:
                continue
            if any(t in p.depends for p in block.pins if p is not pin):
                continue
            tubes.append(pin)
            times.add(t)
        return tubes


def _stages(block: _Block) -> List[List[_Node]]:
    """Cheap free parts grouped by the pin after which all their variables are narrowed.

    The last pin gets no stage; the full body is evaluated there anyway.
    """
    tubes = set(map(id, block.tubes))
    unresolved: List[Set[str]] = []
    for j in range(len(block.pins) + 1):
        later = block.pins[j:]
        names = {n for p in later for n in p.names}
        names |= {p.time_var for p in later if id(p) in tubes and p.time_var}
        unresolved.append(names)

    stages: List[List[_Node]] = [[] for _ in block.pins]
    for part in block.free_parts:
        variables = _node_variables(part)
        if _cost(part) != 0 or variables.isdisjoint(unresolved[0]):
            continue
        for i in range(len(block.pins) - 1):
            if variables.isdisjoint(unresolved[i + 1]):
                stages[i].append(part)
                break
    return stages


def _walk(node: _Node) -> Iterable[_Node]:
    yield node
    if isinstance(node, _Junction):
        for c in node.children:
            yield from _walk(c)


def _order_pins(pins: List[_Pin]) -> List[_Pin]:
    """Dependency order; pins caught in a cycle are dropped"""
    ordered: List[_Pin] = []
    pending = list(pins)
    while pending:
        unresolved = {n for p in pending for n in p.names}
        ready = [p for p in pending if p.depends.isdisjoint(unresolved - set(p.names))]
        if not ready:
            logger.debug(f"Dropping {len(pending)} cyclic pins")
            break
        ordered.extend(ready)
        pending = [p for p in pending if p not in ready]
    return ordered


# ----------------------------------------------------------------------
# Search state
# ----------------------------------------------------------------------
@dataclass
class _Outcome:
    truth: Truth
    witness: Dict[str, Interval] = field(default_factory=dict)
    split_ok: bool = True


@dataclass
class _Leaves:
    """Undecided pin assignments of one piece, by the tube times they fix"""

    open: List[Dict[str, Interval]] = field(default_factory=list)
    incomplete: bool = False


def _pinned(
    names: Sequence[str], values: Sequence[Interval], box: Box, enclosures: Dict[str, Interval]
) -> Optional[Box]:
    changes = {}
    for name, value in zip(names, values):
        meet = box[name].intersect(value)
        if meet is None:
            return None
        changes[name] = meet
        enclosures[name] = value
    return box.updated(changes)


@dataclass
class _Run:
    """Statistics and trace records of one evaluation thread"""

    tracing: bool = False
    stats: SolverStats = field(default_factory=SolverStats)
    records: List[TraceRecord] = field(default_factory=list)
    atoms: List[AtomEnclosure] = field(default_factory=list)

    def absorb(self, other: "_Run") -> None:
        self.stats.absorb(other.stats)
        self.records.extend(other.records)


class _Solver:
    def __init__(self, config: SolverConfig, tracing: bool = False):
        self.config = config
        self.delta = config.delta
        self.tolerance = config.ode_tolerance
        self.tracing = tracing
        self.pool: Optional[ThreadPoolExecutor] = None

    # -- atoms and junctions ---------------------------------------------
    def atom_truth(self, node: _AtomNode, env: Box, run: _Run) -> Tuple[Truth, Optional[Interval]]:
        try:
            value = node.evaluate(env)
        except _NUMERIC_ERRORS as e:
            logger.debug(f"Atom {node.atom} undecided: {e}")
            return Truth.UNKNOWN, None
        if run.tracing and len(run.atoms) < _TRACE_ATOMS:
            run.atoms.append(AtomEnclosure(atom=str(node.atom), lo=value.lo, hi=value.hi))
        # exact falsity wins over delta-truth when the enclosure allows both
        if node.atom.relation == Relation.GT:
            if value.hi <= 0:
                return Truth.FALSE, value
            if value.lo > -self.delta:
                return Truth.TRUE, value
        else:
            if value.hi < 0:
                return Truth.FALSE, value
            if value.lo >= -self.delta:
                return Truth.TRUE, value
        return Truth.UNKNOWN, value

    def evaluate(self, node: _Node, env: Box, run: _Run) -> _Outcome:
        if isinstance(node, _AtomNode):
            return _Outcome(self.atom_truth(node, env, run)[0])
        if isinstance(node, _Junction):
            return self._junction(node.conjunctive, node.children, env, run)
        return self.search(node, env, run)

    def _junction(self, conjunctive: bool, children: Sequence[_Node], env: Box, run: _Run) -> _Outcome:
        stop = Truth.FALSE if conjunctive else Truth.TRUE
        undecided = False
        witness: Dict[str, Interval] = {}
        for child in children:
            out = self.evaluate(child, env, run)
            if out.truth is stop:
                return _Outcome(stop, out.witness)
            if out.truth is Truth.UNKNOWN:
                undecided = True
            else:
                witness.update(out.witness)
        if undecided:
            return _Outcome(Truth.UNKNOWN)
        return _Outcome(Truth.TRUE if conjunctive else Truth.FALSE, witness)

    def _parts(self, block: _Block, env: Box, run: _Run) -> _Outcome:
        """Truth of the block body with the pin atoms taken as exactly satisfied"""
        return self._junction(block.exists, block.free_parts, env, run)

    # -- bounds ------------------------------------------------------------
    def _bounds(self, block: _Block, i: int, env: Box) -> Tuple[Interval, Interval]:
        return block.lowers[i](env), block.uppers[i](env)

    def _initial_piece(self, block: _Block, env: Box) -> Optional[Box]:
        piece = env
        for i, name in enumerate(block.names):
            try:
                lower, upper = self._bounds(block, i, piece)
            except _NUMERIC_ERRORS as e:
                raise ParameterError(f"bounds of {name} have no finite enclosure: {e}") from e
            if lower.lo > upper.hi:
                return None
            piece = piece.updated({name: Interval(lower.lo, upper.hi)})
        return piece.restricted(block.names)

    def _clip(self, block: _Block, env: Box, piece: Box) -> Optional[Box]:
        """Intersect a piece with the hull of its domain; None when the domain is empty on it"""
        box = env.merged(piece)
        for i, name in enumerate(block.names):
            try:
                lower, upper = self._bounds(block, i, box)
            except _NUMERIC_ERRORS:
                continue
            if lower.lo > upper.hi:
                return None
            meet = box[name].intersect(Interval(lower.lo, upper.hi))
            if meet is None:
                return None
            box = box.updated({name: meet})
        return box.restricted(block.names)

    def _certain(self, block: _Block, box: Box, enclosures: Dict[str, Interval]) -> bool:
        """Whether the piece lies in the domain of every outer point.

        Pinned variables are judged by the enclosure of their pinned value.
        """
        pinned = block.pinned
        for i, name in enumerate(block.names):
            try:
                lower, upper = self._bounds(block, i, box)
            except _NUMERIC_ERRORS:
                return False
            if lower.hi > upper.lo:
                return False
            region = Interval(lower.hi, upper.lo)
            if name in pinned:
                value = enclosures.get(name)
                if value is None or not value.is_subset(region):
                    return False
            elif not box[name].is_subset(region):
                return False
        return True

    # -- pins --------------------------------------------------------------
    def _pin_values(self, pin: _Pin, env: Box) -> List[Interval]:
        if pin.value is not None:
            return [pin.value(env)]
        system = get_system(pin.system)  # type: ignore[arg-type]
        x0 = [x(env) for x in pin.initial]
        t = pin.time(env)  # type: ignore[misc]
        tube = flow_tube(system, x0, self.tolerance, horizon_for(t.hi))
        state = tube.range_over(t, strict=False)
        return [state[c] for c in pin.components]

    def _narrow(self, pin: _Pin, box: Box, enclosures: Dict[str, Interval]) -> Optional[Box]:
        """Meet the pinned names with the enclosure of their value; None when the meet is empty"""
        try:
            values = self._pin_values(pin, box)
        except _NUMERIC_ERRORS as e:
            logger.debug(f"Pin of {pin.names} not contracted: {e}")
            return box
        return _pinned(pin.names, values, box, enclosures)

    def _contract(self, block: _Block, box: Box, enclosures: Dict[str, Interval]) -> Optional[Box]:
        for pin in block.pins:
            narrowed = self._narrow(pin, box, enclosures)
            if narrowed is None:
                return None
            box = narrowed
        return box

    # -- pieces ------------------------------------------------------------
    def _decided(self, block: _Block, out: _Outcome, box: Box, enclosures: Dict[str, Interval]) -> Optional[_Outcome]:
        """Turn a body verdict on a (contracted) piece into a block verdict.

        Only answers carry a witness: the block's own names plus whatever
        nested blocks answered with.
        """
        settles = Truth.FALSE if block.exists else Truth.TRUE
        answers = Truth.TRUE if block.exists else Truth.FALSE
        if out.truth is settles:
            return _Outcome(settles)
        if out.truth is answers and self._certain(block, box, enclosures):
            return _Outcome(answers, dict(box.restricted(block.names)) | out.witness)
        return None

    def piece(self, block: _Block, env: Box, piece: Box, run: _Run) -> _Outcome:
        run.stats.boxes_explored += 1
        merged = env.merged(piece)
        settles = Truth.FALSE if block.exists else Truth.TRUE

        if block.pins:
            for part in block.cheap_parts:
                if self.evaluate(part, merged, run).truth is settles:
                    return _Outcome(settles)

        if block.tubes:
            return self._segments(block, env, piece, merged, run)

        enclosures: Dict[str, Interval] = {}
        box = self._contract(block, merged, enclosures)
        if box is None:
            return _Outcome(settles)
        decided = self._decided(block, self._parts(block, box, run), box, enclosures)
        if decided is not None:
            return decided
        if block.quantifier_free:
            sampled = self._sample(block, env, piece, run)
            if sampled is not None:
                return sampled
        return _Outcome(Truth.UNKNOWN, split_ok=self._worth_splitting(block, env, piece, box, run))

    def _segments(self, block: _Block, env: Box, piece: Box, merged: Box, run: _Run) -> _Outcome:
        """Decide a piece whose tube times are covered by the segments of their flow tubes"""
        settles = Truth.FALSE if block.exists else Truth.TRUE
        leaves = _Leaves()
        found = self._enumerate(block, merged, {}, 0, {}, run, leaves)
        if found is not None:
            return found
        if not leaves.open and not leaves.incomplete:
            return _Outcome(settles)
        if block.quantifier_free and leaves.open:
            stride = max(1, len(leaves.open) // _SAMPLED_LEAVES)
            for fixed in leaves.open[::stride][:_SAMPLED_LEAVES]:
                sampled = self._sample(block, env, piece, run, fixed=fixed)
                if sampled is not None:
                    return sampled
        box = self._contract(block, merged, {}) or merged
        return _Outcome(Truth.UNKNOWN, split_ok=self._worth_splitting(block, env, piece, box, run))

    def _enumerate(
        self,
        block: _Block,
        box: Box,
        enclosures: Dict[str, Interval],
        index: int,
        times: Dict[str, Interval],
        run: _Run,
        leaves: _Leaves,
    ) -> Optional[_Outcome]:
        """Narrow the pins from ``index`` on, in dependency order.

        A tube is tried first over the hull of its segments and then segment
        by segment, so a start box is always narrowed by the pins before it.
        Returns an answer as soon as one assignment gives one; undecided
        assignments are collected in ``leaves``.
        """
        settles = Truth.FALSE if block.exists else Truth.TRUE
        pins = block.pins
        tubes = set(map(id, block.tubes))
        while index < len(pins) and id(pins[index]) not in tubes:
            narrowed = self._narrow(pins[index], box, enclosures)
            if narrowed is None or self._pruned(block, index, narrowed, run):
                return None
            box = narrowed
            index += 1

        if index == len(pins):
            decided = self._decided(block, self._parts(block, box, run), box, enclosures)
            if decided is None:
                leaves.open.append(times)
            elif decided.truth is not settles:
                return decided
            return None

        pin = pins[index]
        t_name = pin.time_var
        assert t_name is not None
        try:
            x0 = [x(box) for x in pin.initial]
            span = box[t_name]
            tube = flow_tube(get_system(pin.system), x0, self.tolerance, horizon_for(span.hi))  # type: ignore[arg-type]
            pieces, covered = tube.segments(span, strict=False)
        except _NUMERIC_ERRORS as e:
            logger.debug(f"No tube for {pin.names}: {e}")
            leaves.incomplete = True
            return None
        if covered < span.hi:
            leaves.incomplete = True

        if len(pieces) > 1:
            hull_time = pieces[0][0].hull(pieces[-1][0])
            hull_state = pieces[0][1]
            for _, state in pieces[1:]:
                hull_state = [a.hull(b) for a, b in zip(hull_state, state)]
            trial = _Leaves()
            found = self._descend(block, box, enclosures, index, times, run, trial, hull_time, hull_state)
            if found is not None:
                return found
            if not trial.open and not trial.incomplete:
                return None

        for t_seg, state in pieces:
            found = self._descend(block, box, enclosures, index, times, run, leaves, t_seg, state)
            if found is not None:
                return found
        return None

    def _descend(
        self,
        block: _Block,
        box: Box,
        enclosures: Dict[str, Interval],
        index: int,
        times: Dict[str, Interval],
        run: _Run,
        leaves: _Leaves,
        t_seg: Interval,
        state: List[Interval],
    ) -> Optional[_Outcome]:
        pin = block.pins[index]
        t_name = pin.time_var
        assert t_name is not None
        scoped = dict(enclosures)
        narrowed = _pinned(pin.names, [state[c] for c in pin.components], box.updated({t_name: t_seg}), scoped)
        if narrowed is None or self._pruned(block, index, narrowed, run):
            return None
        return self._enumerate(block, narrowed, scoped, index + 1, times | {t_name: t_seg}, run, leaves)

    def _pruned(self, block: _Block, index: int, box: Box, run: _Run) -> bool:
        """Whether a cheap part that became evaluable after pin ``index`` settles the assignment"""
        settles = Truth.FALSE if block.exists else Truth.TRUE
        return any(self.evaluate(part, box, run).truth is settles for part in block.stages[index])

    def _sample(
        self, block: _Block, env: Box, piece: Box, run: _Run, fixed: Optional[Dict[str, Interval]] = None
    ) -> Optional[_Outcome]:
        """Try the midpoint of the piece, restricted to the certain region, as a witness"""
        answers = Truth.TRUE if block.exists else Truth.FALSE
        pinned = block.pinned
        point = env
        for i, name in enumerate(block.names):
            if name in pinned:
                continue
            region = fixed[name] if fixed and name in fixed else piece[name]
            try:
                lower, upper = self._bounds(block, i, point)
            except (ParameterError, *_NUMERIC_ERRORS):
                return None
            if lower.hi > upper.lo:
                return None
            meet = region.intersect(Interval(lower.hi, upper.lo))
            if meet is None:
                return None
            m = meet.mid
            point = point.updated({name: Interval(m, m)})
        point = point.updated({n: piece[n] for n in pinned})
        # every part has to answer, and cheap parts need no flow
        for part in block.cheap_parts:
            if self.evaluate(part, point, run).truth is not answers:
                return None
        enclosures: Dict[str, Interval] = {}
        box = self._contract(block, point, enclosures)
        if box is None:
            return None
        out = self._parts(block, box, run)
        if out.truth is answers and self._certain(block, box, enclosures):
            witness = {n: enclosures.get(n, box[n]) for n in block.names}
            return _Outcome(answers, witness | out.witness)
        return None

    def _worth_splitting(self, block: _Block, env: Box, piece: Box, box: Box, run: _Run) -> bool:
        """Whether bisecting this block's variables can help, or the outer box must shrink first"""
        outer = env.width()
        if outer == 0:
            return True
        splittable = block.splittable
        if not block.quantifier_free:
            return piece.width(splittable) > outer or self._straddles_domain(block, env, piece)
        middle = env.updated({n: Interval(piece[n].mid, piece[n].mid) for n in splittable})
        middle = middle.updated({n: piece[n] for n in block.names if n not in splittable})
        middle = self._contract(block, middle, {}) or middle
        quiet = _Run()
        undecided = False
        for part in block.free_parts:
            for node in _node_atoms(part):
                full, full_value = self.atom_truth(node, box, quiet)
                if full is not Truth.UNKNOWN:
                    continue
                undecided = True
                mid, mid_value = self.atom_truth(node, middle, quiet)
                if mid is not Truth.UNKNOWN:
                    return True
                if full_value is None or mid_value is None or mid_value.width <= full_value.width / 2:
                    return True
        return not undecided

    def _straddles_domain(self, block: _Block, env: Box, piece: Box) -> bool:
        """Whether the piece sticks out of the region every outer point admits while overlapping it.

        An answer is only given on pieces inside that region, so bisecting
        such a piece can help however wide the outer box is.
        """
        box = env.merged(piece)
        for i, name in enumerate(block.names):
            if name not in block.splittable:
                continue
            try:
                lower, upper = self._bounds(block, i, box)
            except (ParameterError, *_NUMERIC_ERRORS):
                continue
            if lower.hi >= upper.lo:
                continue
            region = Interval(lower.hi, upper.lo)
            meet = piece[name].intersect(region)
            if meet is not None and meet.width > 0 and not piece[name].is_subset(region):
                return True
        return False

    def _axis(self, block: _Block, piece: Box, depth: int, outcome: _Outcome) -> Optional[str]:
        if depth >= self.config.max_depth or not outcome.split_ok:
            return None
        floor = self.config.floor(block.level)
        eligible = [n for n in block.splittable if piece[n].width > floor]
        # tube segments already refine a tube's time, so its state goes first
        preferred = [n for n in eligible if n not in block.tube_times]
        eligible = preferred or eligible
        return piece.widest_axis(eligible) if eligible else None

    # -- block search ------------------------------------------------------
    def _visit(self, block: _Block, env: Box, piece: Box, depth: int, run: _Run) -> Tuple[Optional[Box], _Outcome]:
        clipped = self._clip(block, env, piece)
        if clipped is None:
            vacuous = Truth.FALSE if block.exists else Truth.TRUE
            return None, _Outcome(vacuous)
        saved, run.atoms = run.atoms, []
        outcome = self.piece(block, env, clipped, run)
        atoms, run.atoms = run.atoms, saved
        run.stats.max_depth = max(run.stats.max_depth, depth)
        if run.tracing:
            run.records.append(
                TraceRecord(
                    level=block.level,
                    split_depth=depth,
                    quantifier=block.kind,
                    box=clipped.to_dict(),
                    verdict=outcome.truth.value,
                    atoms=atoms,
                )
            )
        return clipped, outcome

    def _isolated(self, block: _Block, env: Box, piece: Box, depth: int) -> Tuple[Optional[Box], _Outcome, _Run]:
        run = _Run(tracing=self.tracing)
        clipped, outcome = self._visit(block, env, piece, depth, run)
        return clipped, outcome, run

    def search(self, block: _Block, env: Box, run: _Run) -> _Outcome:
        settles = Truth.FALSE if block.exists else Truth.TRUE
        answers = Truth.TRUE if block.exists else Truth.FALSE
        initial = self._initial_piece(block, env)
        if initial is None:
            return _Outcome(settles)

        speculate = self.pool is not None and len(env) == 0
        pending: Dict[Tuple[Box, int], Future] = {}
        stack: List[Tuple[Box, int]] = [(initial, 0)]
        complete = True
        try:
            while stack:
                if speculate:
                    piece, depth, clipped, outcome = self._next_speculative(block, env, stack, pending, run)
                else:
                    piece, depth = stack.pop()
                    clipped, outcome = self._visit(block, env, piece, depth, run)
                if clipped is None:
                    continue
                if outcome.truth is answers:
                    return outcome
                if outcome.truth is settles:
                    continue
                axis = self._axis(block, clipped, depth, outcome)
                if axis is None:
                    complete = False
                    continue
                left, right = clipped.split(axis)
                stack.append((right, depth + 1))
                stack.append((left, depth + 1))
        finally:
            for future in pending.values():
                future.cancel()
        if complete:
            return _Outcome(settles)
        return _Outcome(Truth.UNKNOWN)

    def _next_speculative(
        self,
        block: _Block,
        env: Box,
        stack: List[Tuple[Box, int]],
        pending: Dict[Tuple[Box, int], Future],
        run: _Run,
    ) -> Tuple[Box, int, Optional[Box], _Outcome]:
        assert self.pool is not None
        for key in stack[-self.config.workers :]:
            if key not in pending:
                pending[key] = self.pool.submit(self._isolated, block, env, key[0], key[1])
        index = len(stack) - 1
        if not self.config.deterministic:
            for i in range(len(stack) - 1, -1, -1):
                future = pending.get(stack[i])
                if future is not None and future.done():
                    index = i
                    break
        key = stack.pop(index)
        clipped, outcome, sub = pending.pop(key).result()
        run.absorb(sub)
        return key[0], key[1], clipped, outcome


# ----------------------------------------------------------------------
# Public entry points
# ----------------------------------------------------------------------
def _witness(values: Dict[str, Interval]) -> WitnessBox:
    return {name: (iv.lo, iv.hi) for name, iv in values.items()}


def decide(phi: Formula, config: Optional[SolverConfig] = None, trace: Optional[TraceWriter] = None) -> SolverVerdict:
    """Decide a bounded sentence up to delta.

    Args:
        phi: Sentence in normal form
        config: Solver parameters; defaults come from settings
        trace: Optional sink for per-piece records

    Returns:
        DELTA_TRUE when the delta-weakening of phi holds, EXACT_FALSE when phi is false

    Raises:
        UnboundedQuantifierError: when phi has free variables
        ResolutionFloorError: when enclosures never get narrow enough to decide
    """
    config = config or SolverConfig()
    free = free_variables(phi)
    if free:
        raise UnboundedQuantifierError(f"free variables {sorted(free)}: decide needs a sentence")

    solver = _Solver(config, tracing=trace is not None)
    run = _Run(tracing=trace is not None)
    start = time.perf_counter()
    pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else nullcontext()
    with pool as executor, working_precision(config.precision):
        solver.pool = executor if config.workers > 1 else None
        root = _Compiler(config.ode_tolerance).compile(phi)
        outcome = solver.evaluate(root, Box(), run)
    run.stats.wall_time = time.perf_counter() - start

    if trace is not None:
        trace.write(run.records)
    logger.info(
        f"Decided in {run.stats.wall_time:.3f}s: {outcome.truth.value} after "
        f"{run.stats.boxes_explored} boxes (delta={config.delta})"
    )
    if outcome.truth is Truth.UNKNOWN:
        raise ResolutionFloorError(
            f"undecided at the resolution floor after {run.stats.boxes_explored} boxes; "
            "enclosures did not narrow below delta"
        )
    result = SolverOutcome.DELTA_TRUE if outcome.truth is Truth.TRUE else SolverOutcome.EXACT_FALSE
    return SolverVerdict(outcome=result, witness=_witness(outcome.witness), stats=run.stats)


def decide_atoms_on_box(psi: Formula, box: Box, delta: float, resolution: float) -> Truth:
    """Three-valued truth of a quantifier-free formula on a box.

    Unknown is returned only while some atom's enclosure is at least
    ``resolution`` wide.
    """
    if not 0 < resolution <= delta / 2:
        raise ParameterError(f"resolution must lie in (0, delta/2], got {resolution}")
    missing = free_variables(psi) - set(box)
    if missing:
        raise ParameterError(f"box does not bind {sorted(missing)}")
    solver = _Solver(SolverConfig(delta=delta))
    node = _Compiler(solver.tolerance).compile(psi)
    if any(isinstance(n, _Block) for n in _walk(node)):
        raise ParameterError("decide_atoms_on_box needs a quantifier-free formula")
    return solver.evaluate(node, box, _Run()).truth
