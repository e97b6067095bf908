"""
Terms of the formula language: variables, exact rational constants,
applications of library functions, and ODE solution values.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, FrozenSet, Iterator, Mapping, Optional, Set, Tuple, Union

from src.core.errors import UnknownSymbolError

# Function library: symbol -> arity (None means variadic, at least one argument)
LIBRARY: Dict[str, Optional[int]] = {
    "add": 2,
    "sub": 2,
    "mul": 2,
    "div": 2,
    "neg": 1,
    "pow": 2,
    "abs": 1,
    "min": 2,
    "max": 2,
    "exp": 1,
    "sin": 1,
    "cos": 1,
    "sqrt": 1,
    "norm": None,
}

_INFIX = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


class Term:
    """Base class of the term AST; instances are immutable and hashable"""

    __slots__ = ()

    def __add__(self, other: TermLike) -> "Term":
        return add(self, as_term(other))

    def __radd__(self, other: TermLike) -> "Term":
        return add(as_term(other), self)

    def __sub__(self, other: TermLike) -> "Term":
        return sub(self, as_term(other))

    def __rsub__(self, other: TermLike) -> "Term":
        return sub(as_term(other), self)

    def __mul__(self, other: TermLike) -> "Term":
        return mul(self, as_term(other))

    def __rmul__(self, other: TermLike) -> "Term":
        return mul(as_term(other), self)

    def __truediv__(self, other: TermLike) -> "Term":
        return div(self, as_term(other))

    def __neg__(self) -> "Term":
        return neg(self)

    def __pow__(self, n: int) -> "Term":
        return power(self, n)


TermLike = Union[Term, int, float, Fraction, str]


@dataclass(frozen=True)
class Var(Term):
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Const(Term):
    value: Fraction

    def __post_init__(self) -> None:
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class Apply(Term):
    """Library function application.

    ``guard`` is the domain guard of ``div`` (the divisor must avoid
    [-guard, guard]) and of ``sqrt`` (the radicand may dip to -guard and is
    clipped at zero); it is ignored by the other symbols.
    """

    op: str
    args: Tuple[Term, ...]
    guard: float = 0.0

    def __post_init__(self) -> None:
        if self.op not in LIBRARY:
            raise UnknownSymbolError(f"Unknown function symbol: {self.op}")
        arity = LIBRARY[self.op]
        if arity is None and not self.args:
            raise UnknownSymbolError(f"{self.op} needs at least one argument")
        if arity is not None and len(self.args) != arity:
            raise UnknownSymbolError(f"{self.op} takes {arity} argument(s), got {len(self.args)}")
        if self.op == "pow":
            exponent = self.args[1]
            if not (isinstance(exponent, Const) and exponent.value.denominator == 1):
                raise UnknownSymbolError("pow needs an integer constant exponent")
        if self.guard < 0:
            raise UnknownSymbolError("domain guards are nonnegative")

    def __str__(self) -> str:
        if self.op in _INFIX:
            return f"({self.args[0]} {_INFIX[self.op]} {self.args[1]})"
        if self.op == "neg":
            return f"-({self.args[0]})"
        if self.op == "pow":
            return f"({self.args[0]})^{self.args[1]}"
        return f"{self.op}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class FlowValue(Term):
    """Component ``component`` of the solution of ``system`` started at ``initial`` after ``time``"""

    system: str
    initial: Tuple[Term, ...]
    time: Term
    component: int

    def __str__(self) -> str:
        init = ", ".join(str(a) for a in self.initial)
        return f"flow({self.system}, {self.component}, {self.time}, {init})"


# ----------------------------------------------------------------------
# Construction helpers
# ----------------------------------------------------------------------
def as_term(value: TermLike) -> Term:
    if isinstance(value, Term):
        return value
    if isinstance(value, str):
        return Var(value)
    if isinstance(value, float):
        return Const(Fraction(value))
    return Const(Fraction(value))


def const(value: Union[int, float, Fraction, str]) -> Const:
    return Const(Fraction(value))


def var(name: str) -> Var:
    return Var(name)


ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))


def _is_const(t: Term, value: Optional[int] = None) -> bool:
    return isinstance(t, Const) and (value is None or t.value == value)


def add(a: Term, b: Term) -> Term:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is_const(b, 0):
        return a
    if _is_const(a, 0):
        return b
    return Apply("add", (a, b))


def sub(a: Term, b: Term) -> Term:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is_const(b, 0):
        return a
    if _is_const(a, 0):
        return neg(b)
    return Apply("sub", (a, b))


def mul(a: Term, b: Term) -> Term:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is_const(a, 1):
        return b
    if _is_const(b, 1):
        return a
    return Apply("mul", (a, b))


def div(a: Term, b: Term, guard: float = 0.0) -> Term:
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0:
        return Const(a.value / b.value)
    return Apply("div", (a, b), guard)


def neg(a: Term) -> Term:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Apply) and a.op == "neg":
        return a.args[0]
    return Apply("neg", (a,))


def power(a: Term, n: int) -> Term:
    if n == 1:
        return a
    if isinstance(a, Const) and (n >= 0 or a.value != 0):
        return Const(a.value**n)
    return Apply("pow", (a, Const(Fraction(n))))


def absolute(a: Term) -> Term:
    return Apply("abs", (a,))


def minimum(a: Term, b: Term) -> Term:
    return Apply("min", (a, b))


def maximum(a: Term, b: Term) -> Term:
    return Apply("max", (a, b))


def exp(a: Term) -> Term:
    return Apply("exp", (a,))


def sin(a: Term) -> Term:
    return Apply("sin", (a,))


def cos(a: Term) -> Term:
    return Apply("cos", (a,))


def sqrt(a: Term, guard: float = 0.0) -> Term:
    return Apply("sqrt", (a,), guard)


def norm(*args: Term) -> Term:
    return Apply("norm", tuple(args))


def flow_value(system: str, initial: Tuple[Term, ...], time: Term, component: int) -> FlowValue:
    return FlowValue(system, tuple(initial), time, component)


def apply(op: str, args: Tuple[Term, ...], guard: float = 0.0) -> Term:
    """Build an application through the simplifying constructors where one exists"""
    simple = {"add": add, "sub": sub, "mul": mul, "neg": neg}
    if op in simple:
        return simple[op](*args)  # type: ignore[operator]
    return Apply(op, tuple(args), guard)


# ----------------------------------------------------------------------
# Traversals
# ----------------------------------------------------------------------
def subterms(t: Term) -> Iterator[Term]:
    yield t
    if isinstance(t, Apply):
        for a in t.args:
            yield from subterms(a)
    elif isinstance(t, FlowValue):
        for a in t.initial:
            yield from subterms(a)
        yield from subterms(t.time)


def term_variables(t: Term) -> FrozenSet[str]:
    return frozenset(s.name for s in subterms(t) if isinstance(s, Var))


def term_symbols(t: Term) -> Set[str]:
    found: Set[str] = set()
    for s in subterms(t):
        if isinstance(s, Apply):
            found.add(s.op)
        elif isinstance(s, FlowValue):
            found.add("flow")
    return found


def contains_flow(t: Term) -> bool:
    return any(isinstance(s, FlowValue) for s in subterms(t))


def flow_values(t: Term) -> Iterator[FlowValue]:
    return (s for s in subterms(t) if isinstance(s, FlowValue))


def substitute_term(t: Term, mapping: Mapping[str, Term]) -> Term:
    if not mapping:
        return t
    if isinstance(t, Var):
        return mapping.get(t.name, t)
    if isinstance(t, Apply):
        return apply(t.op, tuple(substitute_term(a, mapping) for a in t.args), t.guard)
    if isinstance(t, FlowValue):
        return FlowValue(
            t.system,
            tuple(substitute_term(a, mapping) for a in t.initial),
            substitute_term(t.time, mapping),
            t.component,
        )
    return t


def term_signature_rank(t: Term) -> int:
    """0 linear, 1 polynomial, 2 nonlinear, 3 contains an ODE solution"""
    if isinstance(t, FlowValue):
        return 3
    if not isinstance(t, Apply):
        return 0
    inner = max((term_signature_rank(a) for a in t.args), default=0)
    if t.op in ("add", "sub", "neg"):
        own = 0
    elif t.op == "mul":
        own = 0 if any(isinstance(a, Const) for a in t.args) else 1
    elif t.op == "pow":
        own = 1
    else:
        own = 2
    return max(own, inner)
