"""
Negation-free formulas with bounded quantifiers, and the syntactic
operations on them: negation, delta-weakening, substitution, prenexing and
quantifier-prefix classification.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import FrozenSet, Iterator, List, Mapping, Sequence, Set, Tuple, Union

from src.core.errors import ParameterError
from src.core.results import ComplexityReport
from src.logic.terms import (
    Const,
    FlowValue,
    Term,
    TermLike,
    Var,
    add,
    as_term,
    neg,
    norm,
    sub,
    substitute_term,
    term_signature_rank,
    term_symbols,
    term_variables,
)


class Relation(str, Enum):
    """Atom relations against zero"""

    GT = ">"
    GE = ">="


class Formula:
    """Base class of the formula AST"""

    __slots__ = ()


@dataclass(frozen=True)
class Atom(Formula):
    term: Term
    relation: Relation

    def __str__(self) -> str:
        return f"{self.term} {self.relation.value} 0"


@dataclass(frozen=True)
class And(Formula):
    parts: Tuple[Formula, ...]

    def __str__(self) -> str:
        if not self.parts:
            return "true"
        return "(" + " /\\ ".join(str(p) for p in self.parts) + ")"


@dataclass(frozen=True)
class Or(Formula):
    parts: Tuple[Formula, ...]

    def __str__(self) -> str:
        if not self.parts:
            return "false"
        return "(" + " \\/ ".join(str(p) for p in self.parts) + ")"


@dataclass(frozen=True)
class Quantified(Formula):
    var: str
    lower: Term
    upper: Term
    body: Formula

    kind = ""

    def __str__(self) -> str:
        return f"{self.kind} {self.var} in [{self.lower}, {self.upper}]. {self.body}"


@dataclass(frozen=True)
class Exists(Quantified):
    kind = "exists"


@dataclass(frozen=True)
class Forall(Quantified):
    kind = "forall"


TRUE: Formula = And(())
FALSE: Formula = Or(())

DeltaLike = Union[int, float, Fraction, str]


# ----------------------------------------------------------------------
# Construction helpers
# ----------------------------------------------------------------------
def conj(*parts: Formula) -> Formula:
    """Flattening conjunction; a single part is returned as is"""
    flat: List[Formula] = []
    for p in parts:
        if isinstance(p, And):
            flat.extend(p.parts)
        else:
            flat.append(p)
    return flat[0] if len(flat) == 1 else And(tuple(flat))


def disj(*parts: Formula) -> Formula:
    """Flattening disjunction; a single part is returned as is"""
    flat: List[Formula] = []
    for p in parts:
        if isinstance(p, Or):
            flat.extend(p.parts)
        else:
            flat.append(p)
    return flat[0] if len(flat) == 1 else Or(tuple(flat))


def gt(a: TermLike, b: TermLike = 0) -> Atom:
    return Atom(sub(as_term(a), as_term(b)), Relation.GT)


def ge(a: TermLike, b: TermLike = 0) -> Atom:
    return Atom(sub(as_term(a), as_term(b)), Relation.GE)


def lt(a: TermLike, b: TermLike = 0) -> Atom:
    return Atom(sub(as_term(b), as_term(a)), Relation.GT)


def le(a: TermLike, b: TermLike = 0) -> Atom:
    return Atom(sub(as_term(b), as_term(a)), Relation.GE)


def eq(a: TermLike, b: TermLike = 0) -> Formula:
    """Equality as the conjunction a - b >= 0 /\\ b - a >= 0"""
    return And((ge(a, b), ge(b, a)))


def implies(a: Formula, b: Formula) -> Formula:
    return disj(negate(a), b)


def flow_relation(system: str, initial: Sequence[TermLike], time: TermLike, state: Sequence[str]) -> Atom:
    """``state`` is the flow of ``system`` from ``initial`` after ``time``.

    Written as -||state - flow(initial, time)|| >= 0, whose delta-weakening
    bounds the deviation from the flow by delta.
    """
    start = tuple(as_term(x) for x in initial)
    t = as_term(time)
    gaps = [sub(Var(name), FlowValue(system, start, t, i)) for i, name in enumerate(state)]
    return Atom(neg(norm(*gaps)), Relation.GE)


def exists(name: str, lower: TermLike, upper: TermLike, body: Formula) -> Exists:
    return Exists(name, as_term(lower), as_term(upper), body)


def forall(name: str, lower: TermLike, upper: TermLike, body: Formula) -> Forall:
    return Forall(name, as_term(lower), as_term(upper), body)


def dual_kind(kind: str) -> str:
    return "forall" if kind == "exists" else "exists"


def quantify(kind: str, name: str, lower: Term, upper: Term, body: Formula) -> Quantified:
    cls = Exists if kind == "exists" else Forall
    return cls(name, lower, upper, body)


# ----------------------------------------------------------------------
# Negation and weakening
# ----------------------------------------------------------------------
def negate(phi: Formula) -> Formula:
    """Push a negation through the normal form.

    Atoms flip between strict and non-strict, connectives and bounded
    quantifiers switch to their duals with the bounds unchanged.
    """
    if isinstance(phi, Atom):
        if phi.relation == Relation.GT:
            return Atom(neg(phi.term), Relation.GE)
        return Atom(neg(phi.term), Relation.GT)
    if isinstance(phi, And):
        return Or(tuple(negate(p) for p in phi.parts))
    if isinstance(phi, Or):
        return And(tuple(negate(p) for p in phi.parts))
    if isinstance(phi, Exists):
        return Forall(phi.var, phi.lower, phi.upper, negate(phi.body))
    if isinstance(phi, Forall):
        return Exists(phi.var, phi.lower, phi.upper, negate(phi.body))
    raise TypeError(f"not a formula: {phi!r}")


def _as_fraction(delta: DeltaLike) -> Fraction:
    value = Fraction(delta)
    if value < 0:
        raise ParameterError(f"delta must be nonnegative, got {delta}")
    return value


def delta_weaken(phi: Formula, delta: DeltaLike) -> Formula:
    """Replace every atom t > 0 by t + delta > 0 and t >= 0 by t + delta >= 0"""
    amount = _as_fraction(delta)
    if amount == 0:
        return phi
    return _weaken(phi, Const(amount))


def _weaken(phi: Formula, amount: Const) -> Formula:
    if isinstance(phi, Atom):
        return Atom(add(phi.term, amount), phi.relation)
    if isinstance(phi, And):
        return And(tuple(_weaken(p, amount) for p in phi.parts))
    if isinstance(phi, Or):
        return Or(tuple(_weaken(p, amount) for p in phi.parts))
    if isinstance(phi, Quantified):
        return type(phi)(phi.var, phi.lower, phi.upper, _weaken(phi.body, amount))
    raise TypeError(f"not a formula: {phi!r}")


# ----------------------------------------------------------------------
# Traversals
# ----------------------------------------------------------------------
def atoms(phi: Formula) -> Iterator[Atom]:
    if isinstance(phi, Atom):
        yield phi
    elif isinstance(phi, (And, Or)):
        for p in phi.parts:
            yield from atoms(p)
    elif isinstance(phi, Quantified):
        yield from atoms(phi.body)


def formula_terms(phi: Formula) -> Iterator[Term]:
    """Atom terms and quantifier bound terms"""
    if isinstance(phi, Atom):
        yield phi.term
    elif isinstance(phi, (And, Or)):
        for p in phi.parts:
            yield from formula_terms(p)
    elif isinstance(phi, Quantified):
        yield phi.lower
        yield phi.upper
        yield from formula_terms(phi.body)


def free_variables(phi: Formula) -> FrozenSet[str]:
    if isinstance(phi, Atom):
        return term_variables(phi.term)
    if isinstance(phi, (And, Or)):
        found: Set[str] = set()
        for p in phi.parts:
            found |= free_variables(p)
        return frozenset(found)
    if isinstance(phi, Quantified):
        inner = free_variables(phi.body) - {phi.var}
        return inner | term_variables(phi.lower) | term_variables(phi.upper)
    raise TypeError(f"not a formula: {phi!r}")


def bound_variables(phi: Formula) -> List[str]:
    if isinstance(phi, Quantified):
        return [phi.var] + bound_variables(phi.body)
    if isinstance(phi, (And, Or)):
        return [v for p in phi.parts for v in bound_variables(p)]
    return []


def is_sentence(phi: Formula) -> bool:
    return not free_variables(phi)


def is_quantifier_free(phi: Formula) -> bool:
    return not bound_variables(phi)


def function_symbols(phi: Formula) -> Set[str]:
    found: Set[str] = set()
    for t in formula_terms(phi):
        found |= term_symbols(t)
    return found


_SIGNATURES = ("linear", "polynomial", "nonlinear", "ode")


def signature_class(phi: Formula) -> str:
    """Smallest function class the formula is written in"""
    rank = max((term_signature_rank(t) for t in formula_terms(phi)), default=0)
    return _SIGNATURES[rank]


def fresh_name(base: str, taken: Set[str]) -> str:
    if base not in taken:
        return base
    for i in itertools.count(1):
        candidate = f"{base}_{i}"
        if candidate not in taken:
            return candidate
    raise AssertionError("unreachable")


def substitute(phi: Formula, mapping: Mapping[str, TermLike]) -> Formula:
    """Capture-avoiding replacement of free variables by terms"""
    terms = {name: as_term(t) for name, t in mapping.items()}
    return _substitute(phi, terms)


def _substitute(phi: Formula, mapping: Mapping[str, Term]) -> Formula:
    if not mapping:
        return phi
    if isinstance(phi, Atom):
        return Atom(substitute_term(phi.term, mapping), phi.relation)
    if isinstance(phi, And):
        return And(tuple(_substitute(p, mapping) for p in phi.parts))
    if isinstance(phi, Or):
        return Or(tuple(_substitute(p, mapping) for p in phi.parts))
    if isinstance(phi, Quantified):
        lower = substitute_term(phi.lower, mapping)
        upper = substitute_term(phi.upper, mapping)
        inner = {k: v for k, v in mapping.items() if k != phi.var}
        incoming: Set[str] = set()
        for v in inner.values():
            incoming |= term_variables(v)
        name, body = phi.var, phi.body
        if name in incoming:
            taken = incoming | set(free_variables(body)) | set(inner)
            name = fresh_name(phi.var, taken)
            body = _substitute(body, {phi.var: as_term(name)})
        return type(phi)(name, lower, upper, _substitute(body, inner))
    raise TypeError(f"not a formula: {phi!r}")


# ----------------------------------------------------------------------
# Prenex form and classification
# ----------------------------------------------------------------------
Binder = Tuple[str, Term, Term]
Block = Tuple[str, List[Binder]]


def _standardize_apart(phi: Formula, taken: Set[str]) -> Formula:
    """Rename bound variables that clash with names already in use"""
    if isinstance(phi, Atom):
        return phi
    if isinstance(phi, And):
        return And(tuple(_standardize_apart(p, taken) for p in phi.parts))
    if isinstance(phi, Or):
        return Or(tuple(_standardize_apart(p, taken) for p in phi.parts))
    if isinstance(phi, Quantified):
        name, body = phi.var, phi.body
        if name in taken:
            name = fresh_name(phi.var, taken | set(free_variables(body)))
            body = _substitute(body, {phi.var: as_term(name)})
        taken.add(name)
        return type(phi)(name, phi.lower, phi.upper, _standardize_apart(body, taken))
    raise TypeError(f"not a formula: {phi!r}")


def _pull(phi: Formula) -> Tuple[List[Block], Formula]:
    if isinstance(phi, Quantified):
        blocks, matrix = _pull(phi.body)
        binder = (phi.var, phi.lower, phi.upper)
        if blocks and blocks[0][0] == phi.kind:
            blocks[0] = (phi.kind, [binder] + blocks[0][1])
        else:
            blocks.insert(0, (phi.kind, [binder]))
        return blocks, matrix
    if isinstance(phi, (And, Or)):
        pulled = [_pull(p) for p in phi.parts]
        prefix = _merge_prefixes([b for b, _ in pulled])
        if not prefix:
            return [], phi
        join = conj if isinstance(phi, And) else disj
        return prefix, join(*(m for _, m in pulled))
    return [], phi


def _interleave(prefixes: List[List[Block]], start: str) -> List[Block]:
    queues = [list(p) for p in prefixes]
    kind = start
    merged: List[Block] = []
    while any(queues):
        binders: List[Binder] = []
        for queue in queues:
            if queue and queue[0][0] == kind:
                binders.extend(queue.pop(0)[1])
        if binders:
            merged.append((kind, binders))
        kind = dual_kind(kind)
    return merged


def _merge_prefixes(prefixes: List[List[Block]]) -> List[Block]:
    live = [p for p in prefixes if p]
    if not live:
        return []
    first = live[0][0][0]
    best = _interleave(live, first)
    other = _interleave(live, dual_kind(first))
    # ties keep the leading kind of the first quantified child
    return other if len(other) < len(best) else best


def prenex_blocks(phi: Formula) -> Tuple[List[Block], Formula]:
    """Quantifier blocks and matrix of the prenex form"""
    renamed = _standardize_apart(phi, set(free_variables(phi)))
    return _pull(renamed)


def prenex(phi: Formula) -> Formula:
    """Equivalent prenex formula with as few quantifier blocks as the merge finds.

    Pulling a quantifier over a sibling assumes its domain is nonempty, which
    holds for every sentence the encoders produce.
    """
    blocks, matrix = prenex_blocks(phi)
    result = matrix
    for kind, binders in reversed(blocks):
        for name, lower, upper in reversed(binders):
            result = quantify(kind, name, lower, upper, result)
    return result


def classify(phi: Formula) -> ComplexityReport:
    """Sigma_n / Pi_n class of the prenex prefix"""
    blocks, _ = prenex_blocks(phi)
    level = len(blocks)
    if level == 0:
        label = "Sigma0"
    else:
        label = ("Sigma" if blocks[0][0] == "exists" else "Pi") + str(level)
    signature = signature_class(phi)
    return ComplexityReport(
        label=label,
        level=level,
        alternations=max(0, level - 1),
        block_sizes=[len(binders) for _, binders in blocks],
        oracle_class="PSPACE" if signature == "ode" else "P",
        signature=signature,
    )


def quantifier_prefix(phi: Formula) -> Tuple[str, ...]:
    """Kinds of the leading quantifier chain, outermost first"""
    kinds: List[str] = []
    while isinstance(phi, Quantified):
        kinds.append(phi.kind)
        phi = phi.body
    return tuple(kinds)
