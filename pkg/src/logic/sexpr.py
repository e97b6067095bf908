"""
Canonical s-expression form of terms and formulas
"""
from fractions import Fraction
from typing import List, Union

from lark import Lark, Token, Transformer
from lark.exceptions import UnexpectedInput

from src.core.errors import FormulaSyntaxError
from src.logic.formula import And, Atom, Exists, Forall, Formula, Or, Quantified, Relation
from src.logic.terms import Apply, Const, FlowValue, Term, Var

_GRAMMAR = r"""
    start: sexp
    ?sexp: list | leaf
    list: "(" sexp* ")"
    leaf: FLOAT | RATIONAL | KEYWORD | SYMBOL

    FLOAT.2: /-?\d+(\.\d*)?[eE][-+]?\d+|-?\d+\.\d*/
    RATIONAL: /-?\d+(\/\d+)?/
    KEYWORD: /:[a-z]+/
    SYMBOL: />=|>|[A-Za-z_][A-Za-z0-9_.']*/

    COMMENT: /;[^\n]*/
    %import common.WS
    %ignore WS
    %ignore COMMENT
"""

SExp = Union[str, List["SExp"]]


class _Tree(Transformer):
    def start(self, items: List[SExp]) -> SExp:
        return items[0]

    def list(self, items: List[SExp]) -> SExp:
        return list(items)

    def leaf(self, items: List[Token]) -> SExp:
        return str(items[0])


_PARSER = Lark(_GRAMMAR, parser="lalr", transformer=_Tree())


# ----------------------------------------------------------------------
# Encoding
# ----------------------------------------------------------------------
def _number(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def term_to_sexpr(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Const):
        return _number(t.value)
    if isinstance(t, Apply):
        args = " ".join(term_to_sexpr(a) for a in t.args)
        guard = f" :guard {float(t.guard)!r}" if t.guard else ""
        return f"({t.op} {args}{guard})"
    if isinstance(t, FlowValue):
        initial = " ".join(term_to_sexpr(a) for a in t.initial)
        return f"(flow {t.system} ({initial}) {term_to_sexpr(t.time)} {t.component})"
    raise TypeError(f"not a term: {t!r}")


def to_sexpr(phi: Formula) -> str:
    """Canonical single-line serialization"""
    if isinstance(phi, Atom):
        return f"({phi.relation.value} {term_to_sexpr(phi.term)})"
    if isinstance(phi, (And, Or)):
        head = "and" if isinstance(phi, And) else "or"
        if not phi.parts:
            return f"({head})"
        return f"({head} " + " ".join(to_sexpr(p) for p in phi.parts) + ")"
    if isinstance(phi, Quantified):
        return (
            f"({phi.kind} {phi.var} {term_to_sexpr(phi.lower)} "
            f"{term_to_sexpr(phi.upper)} {to_sexpr(phi.body)})"
        )
    raise TypeError(f"not a formula: {phi!r}")


# ----------------------------------------------------------------------
# Decoding
# ----------------------------------------------------------------------
def _read(text: str) -> SExp:
    try:
        return _PARSER.parse(text)
    except UnexpectedInput as e:
        raise FormulaSyntaxError("malformed s-expression", e.line, e.column) from e


def _decode_term(node: SExp) -> Term:
    if isinstance(node, str):
        if node[0].isdigit() or node[0] == "-":
            return Const(Fraction(node))
        return Var(node)
    if not node or not isinstance(node[0], str):
        raise FormulaSyntaxError(f"expected a term, got {node!r}")
    head, rest = node[0], node[1:]
    if head == "flow":
        if len(rest) != 4 or not isinstance(rest[1], list):
            raise FormulaSyntaxError("flow takes a system, an initial list, a time and a component")
        return FlowValue(
            str(rest[0]),
            tuple(_decode_term(a) for a in rest[1]),
            _decode_term(rest[2]),
            int(str(rest[3])),
        )
    guard = 0.0
    if len(rest) >= 2 and rest[-2] == ":guard":
        guard = float(str(rest[-1]))
        rest = rest[:-2]
    return Apply(head, tuple(_decode_term(a) for a in rest), guard)


def _decode_formula(node: SExp) -> Formula:
    if not isinstance(node, list) or not node or not isinstance(node[0], str):
        raise FormulaSyntaxError(f"expected a formula, got {node!r}")
    head, rest = node[0], node[1:]
    if head in (">", ">="):
        if len(rest) != 1:
            raise FormulaSyntaxError(f"atom {head} takes one term")
        return Atom(_decode_term(rest[0]), Relation(head))
    if head == "and":
        return And(tuple(_decode_formula(p) for p in rest))
    if head == "or":
        return Or(tuple(_decode_formula(p) for p in rest))
    if head in ("exists", "forall"):
        if len(rest) != 4 or not isinstance(rest[0], str):
            raise FormulaSyntaxError(f"{head} takes a variable, two bounds and a body")
        cls = Exists if head == "exists" else Forall
        return cls(rest[0], _decode_term(rest[1]), _decode_term(rest[2]), _decode_formula(rest[3]))
    raise FormulaSyntaxError(f"unknown formula head {head!r}")


def from_sexpr(text: str) -> Formula:
    return _decode_formula(_read(text))


def term_from_sexpr(text: str) -> Term:
    return _decode_term(_read(text))
