"""
Parser for the analyzer's input language.

A document holds ``system`` blocks (one ODE each), ``automaton`` blocks and
sentences, either inside ``sentence { ... }`` or written bare. Formulas are
brought into normal form while parsing: ``not`` is pushed through with
``negate``, ``a = b`` becomes two atoms and ``a -> b`` becomes ``not a \\/ b``.

    system decay { vars x in [-2, 2]; dyn x' = -x; lipschitz 1; }
    automaton ball {
        vars x in [-1, 15], v in [-20, 20];
        mode fall { dyn x' = v, v' = -9.8; inv x >= 0; init x = 10 /\\ v = 0; }
        jump fall -> fall { guard x = 0; reset v' := -0.9 * v; }
    }
    sentence { forall x in [0, 1]. 1 - x^2 >= 0 }
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from lark import Lark, Token, Transformer, v_args
from lark.exceptions import UnexpectedInput, VisitError

from src.core.errors import FormulaSyntaxError, StabilityError, UnboundedQuantifierError, UnknownSymbolError
from src.hybrid.automaton import HybridAutomaton, build_automaton, primed
from src.logic.formula import (
    FALSE,
    TRUE,
    Formula,
    conj,
    disj,
    eq,
    exists,
    forall,
    free_variables,
    ge,
    gt,
    implies,
    le,
    lt,
    negate,
)
from src.logic.terms import Const, FlowValue, Term, Var, add, div, mul, neg, power, sub, apply
from src.numerics.interval import Box, Interval
from src.numerics.ode import OdeSystem, register_system

logger = logging.getLogger(__name__)

_KEYWORDS = (
    "forall|exists|in|not|true|false|system|automaton|mode|jump|vars|dyn|inv|init|"
    "guard|reset|lipschitz|sentence|flow"
)

_GRAMMAR = r"""
    document: item*
    ?item: system | automaton | sentence
    sentence: "sentence" "{" formula "}" | formula ";"?

    system: "system" NAME "{" system_stmt* "}"
    ?system_stmt: vars | dyn | lipschitz
    vars: "vars" var_decl ("," var_decl)* ";"
    var_decl: NAME "in" "[" expr "," expr "]"
    dyn: "dyn" derivative ("," derivative)* ";"
    derivative: NAME "=" expr
    lipschitz: "lipschitz" expr ";"

    automaton: "automaton" NAME "{" automaton_stmt* "}"
    ?automaton_stmt: vars | mode | jump
    mode: "mode" NAME "{" mode_stmt* "}"
    ?mode_stmt: dyn | invariant | init
    invariant: "inv" formula ";"
    init: "init" formula ";"
    jump: "jump" NAME "->" NAME "{" jump_stmt* "}"
    ?jump_stmt: guard | reset
    guard: "guard" formula ";"
    reset: "reset" assignment ("," assignment)* ";"
    assignment: NAME ":=" expr

    ?formula: quantified | implication
    quantified: QUANT NAME "in" "[" expr "," expr "]" "." formula
              | QUANT NAME "." formula -> unbounded
    ?implication: disjunction | disjunction "->" formula -> implies
    ?disjunction: conjunction | disjunction "\\/" conjunction -> or_
    ?conjunction: literal | conjunction "/\\" literal -> and_
    ?literal: comparison
            | "not" literal -> not_
            | "!" literal -> not_
            | "not" quantified -> not_
            | "true" -> true
            | "false" -> false
            | "(" formula ")"
    comparison: expr REL expr

    ?expr: sum
    ?sum: product | sum "+" product -> add | sum "-" product -> sub
    ?product: signed | product "*" signed -> mul | product "/" signed -> div
    ?signed: power | "-" signed -> neg
    ?power: primary | primary "^" INTEGER -> pow
    ?primary: NUMBER -> number
            | NAME -> var
            | "flow" "(" NAME "," INTEGER "," expr ("," expr)* ")" -> flow
            | NAME "(" expr ("," expr)* ")" -> call
            | "(" expr ")"

    QUANT: "forall" | "exists"
    REL: ">=" | "<=" | ">" | "<" | "="
    INTEGER: /-?\d+/
    NUMBER: /\d+(\.\d*)?([eE][-+]?\d+)?|\.\d+([eE][-+]?\d+)?/
    NAME: /(?!(?:KEYWORDS)\b)[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*'?/

    COMMENT: /#[^\n]*/
    %import common.WS
    %ignore WS
    %ignore COMMENT
""".replace("KEYWORDS", _KEYWORDS)

_LIBRARY = {
    "abs": 1,
    "exp": 1,
    "sin": 1,
    "cos": 1,
    "sqrt": 1,
    "min": 2,
    "max": 2,
}

_RELATIONS = {">": gt, ">=": ge, "<": lt, "<=": le, "=": eq}


@dataclass
class ParsedDocument:
    """Systems, automata and sentences of one input file, in order of appearance"""

    systems: Dict[str, OdeSystem] = field(default_factory=dict)
    automata: Dict[str, HybridAutomaton] = field(default_factory=dict)
    sentences: List[Formula] = field(default_factory=list)


# ----------------------------------------------------------------------
# Tree transformation
# ----------------------------------------------------------------------
@dataclass
class _Vars:
    bounds: List[Tuple[str, Interval]]


@dataclass
class _Dyn:
    rhs: List[Tuple[str, Term]]


@dataclass
class _Tagged:
    tag: str
    value: object


def _constant(t: Term, what: str) -> float:
    if not isinstance(t, Const):
        raise FormulaSyntaxError(f"{what} must be a constant, got {t}")
    return float(t.value)


def _collect(name: str, variables: List[Tuple[str, Interval]], dyn: List[Tuple[str, Term]]) -> Tuple[Box, Tuple[Term, ...]]:
    if not variables:
        raise FormulaSyntaxError(f"{name} declares no variables")
    box = Box(variables)
    rhs: Dict[str, Term] = {}
    for lhs, term in dyn:
        if not lhs.endswith("'") or lhs[:-1] not in box:
            raise FormulaSyntaxError(f"{name}: {lhs} is not the derivative of a declared variable")
        if lhs[:-1] in rhs:
            raise FormulaSyntaxError(f"{name}: {lhs} defined twice")
        rhs[lhs[:-1]] = term
    missing = [v for v in box.names if v not in rhs]
    if missing:
        raise FormulaSyntaxError(f"{name}: no dynamics for {missing}")
    return box, tuple(rhs[v] for v in box.names)


class _Document(Transformer):
    # -- expressions -------------------------------------------------------
    def number(self, items: List[Token]) -> Term:
        return Const(Fraction(str(items[0])))

    def var(self, items: List[Token]) -> Term:
        return Var(str(items[0]))

    def add(self, items: List[Term]) -> Term:
        return add(items[0], items[1])

    def sub(self, items: List[Term]) -> Term:
        return sub(items[0], items[1])

    def mul(self, items: List[Term]) -> Term:
        return mul(items[0], items[1])

    def div(self, items: List[Term]) -> Term:
        return div(items[0], items[1])

    def neg(self, items: List[Term]) -> Term:
        return neg(items[0])

    def pow(self, items: list) -> Term:
        return power(items[0], int(str(items[1])))

    def call(self, items: list) -> Term:
        name, args = str(items[0]), tuple(items[1:])
        if name == "norm":
            return apply("norm", args)
        arity = _LIBRARY.get(name)
        if arity is None:
            raise UnknownSymbolError(f"unknown function {name!r}")
        if arity != len(args):
            raise UnknownSymbolError(f"{name} takes {arity} arguments, got {len(args)}")
        return apply(name, args)

    def flow(self, items: list) -> Term:
        system, component, time = str(items[0]), int(str(items[1])), items[2]
        initial = tuple(items[3:])
        if not 0 <= component < len(initial):
            raise FormulaSyntaxError(f"flow component {component} out of range for {len(initial)} states")
        return FlowValue(system, initial, time, component)

    # -- formulas ----------------------------------------------------------
    def comparison(self, items: list) -> Formula:
        left, relation, right = items
        return _RELATIONS[str(relation)](left, right)

    def and_(self, items: List[Formula]) -> Formula:
        return conj(items[0], items[1])

    def or_(self, items: List[Formula]) -> Formula:
        return disj(items[0], items[1])

    def implies(self, items: List[Formula]) -> Formula:
        return implies(items[0], items[1])

    def not_(self, items: List[Formula]) -> Formula:
        return negate(items[0])

    def true(self, items: list) -> Formula:
        return TRUE

    def false(self, items: list) -> Formula:
        return FALSE

    def quantified(self, items: list) -> Formula:
        kind, name, lower, upper, body = items
        build = forall if str(kind) == "forall" else exists
        return build(str(name), lower, upper, body)

    @v_args(meta=True)
    def unbounded(self, meta, items: list) -> Formula:
        raise UnboundedQuantifierError(
            f"quantifier over {items[1]} at line {meta.line}, column {meta.column} has no bounds"
        )

    # -- blocks ------------------------------------------------------------
    def var_decl(self, items: list) -> Tuple[str, Interval]:
        name, lower, upper = str(items[0]), items[1], items[2]
        lo, hi = _constant(lower, f"lower bound of {name}"), _constant(upper, f"upper bound of {name}")
        if lo > hi:
            raise FormulaSyntaxError(f"empty range [{lo}, {hi}] for {name}")
        return name, Interval(lo, hi)

    def vars(self, items: list) -> _Vars:
        return _Vars(list(items))

    def derivative(self, items: list) -> Tuple[str, Term]:
        return str(items[0]), items[1]

    def dyn(self, items: list) -> _Dyn:
        return _Dyn(list(items))

    def lipschitz(self, items: list) -> _Tagged:
        return _Tagged("lipschitz", _constant(items[0], "lipschitz constant"))

    def invariant(self, items: list) -> _Tagged:
        return _Tagged("inv", items[0])

    def init(self, items: list) -> _Tagged:
        return _Tagged("init", items[0])

    def guard(self, items: list) -> _Tagged:
        return _Tagged("guard", items[0])

    def assignment(self, items: list) -> Tuple[str, Term]:
        return str(items[0]), items[1]

    def reset(self, items: list) -> _Tagged:
        return _Tagged("reset", list(items))

    def system(self, items: list) -> OdeSystem:
        name = str(items[0])
        variables: List[Tuple[str, Interval]] = []
        dyn: List[Tuple[str, Term]] = []
        lipschitz: Optional[float] = None
        for stmt in items[1:]:
            if isinstance(stmt, _Vars):
                variables += stmt.bounds
            elif isinstance(stmt, _Dyn):
                dyn += stmt.rhs
            else:
                lipschitz = stmt.value
        box, rhs = _collect(name, variables, dyn)
        return OdeSystem(name, box.names, rhs, box, lipschitz)

    def mode(self, items: list) -> _Tagged:
        name = str(items[0])
        dyn: List[Tuple[str, Term]] = []
        parts: Dict[str, List[Formula]] = {"inv": [], "init": []}
        for stmt in items[1:]:
            if isinstance(stmt, _Dyn):
                dyn += stmt.rhs
            else:
                parts[stmt.tag].append(stmt.value)
        return _Tagged("mode", (name, dyn, parts))

    def jump(self, items: list) -> _Tagged:
        source, target = str(items[0]), str(items[1])
        guards: List[Formula] = []
        resets: List[Tuple[str, Term]] = []
        for stmt in items[2:]:
            if stmt.tag == "guard":
                guards.append(stmt.value)
            else:
                resets += stmt.value
        return _Tagged("jump", (source, target, guards, resets))

    def automaton(self, items: list) -> HybridAutomaton:
        name = str(items[0])
        variables: List[Tuple[str, Interval]] = []
        modes, jumps = [], []
        for stmt in items[1:]:
            if isinstance(stmt, _Vars):
                variables += stmt.bounds
            elif stmt.tag == "mode":
                modes.append(stmt.value)
            else:
                jumps.append(stmt.value)
        if not variables:
            raise FormulaSyntaxError(f"automaton {name} declares no variables")
        box = Box(variables)

        flows, invariants, inits = {}, {}, {}
        for mode_name, dyn, parts in modes:
            _, rhs = _collect(f"{name}.{mode_name}", variables, dyn)
            flows[mode_name] = OdeSystem(f"{name}.{mode_name}", box.names, rhs, box)
            invariants[mode_name] = conj(*parts["inv"]) if parts["inv"] else TRUE
            if parts["init"]:
                inits[mode_name] = conj(*parts["init"])
        if not inits:
            # no mode declares an initial condition: every state may start a run
            inits = {q: TRUE for q in flows}

        relations = {}
        for source, target, guards, resets in jumps:
            assigned = dict(resets)
            unknown = [lhs for lhs in assigned if not lhs.endswith("'") or lhs[:-1] not in box]
            if unknown:
                raise FormulaSyntaxError(f"jump {source} -> {target} resets undeclared {unknown}")
            updates = [
                eq(Var(primed(v)), assigned.get(primed(v), Var(v))) for v in box.names
            ]
            relations[(source, target)] = conj(*guards, *updates)
        return build_automaton(name, box, flows, invariants, relations, inits)

    def sentence(self, items: list) -> Formula:
        return items[0]

    def document(self, items: list) -> ParsedDocument:
        doc = ParsedDocument()
        for item in items:
            if isinstance(item, OdeSystem):
                doc.systems[item.name] = item
            elif isinstance(item, HybridAutomaton):
                doc.automata[item.name] = item
            else:
                doc.sentences.append(item)
        return doc


_PARSER = Lark(
    _GRAMMAR,
    start=["document", "formula", "expr"],
    parser="earley",
    ambiguity="resolve",
    propagate_positions=True,
)


def _parse(text: str, start: str):
    try:
        tree = _PARSER.parse(text, start=start)
    except UnexpectedInput as e:
        raise FormulaSyntaxError("unexpected input", e.line, e.column) from e
    try:
        return _Document().transform(tree)
    except VisitError as e:
        if isinstance(e.orig_exc, (StabilityError, ValueError)):
            raise e.orig_exc from None
        raise


def parse_term(text: str) -> Term:
    return _parse(text, "expr")


def parse_formula(text: str) -> Formula:
    """Formula in normal form; free variables are allowed"""
    return _parse(text, "formula")


def parse_document(text: str, register: bool = True) -> ParsedDocument:
    """Parse a whole input file; its systems and mode flows are registered by default"""
    doc: ParsedDocument = _parse(text, "document")
    if register:
        for system in doc.systems.values():
            register_system(system)
    logger.debug(
        f"Parsed {len(doc.systems)} systems, {len(doc.automata)} automata and {len(doc.sentences)} sentences"
    )
    return doc


def parse_sentence(text: str) -> Formula:
    """The single bounded sentence of a document.

    Raises:
        FormulaSyntaxError: when the document holds no sentence or several
        UnboundedQuantifierError: when the sentence has free variables
    """
    doc = parse_document(text)
    if len(doc.sentences) != 1:
        raise FormulaSyntaxError(f"expected exactly one sentence, found {len(doc.sentences)}")
    phi = doc.sentences[0]
    free = free_variables(phi)
    if free:
        raise UnboundedQuantifierError(f"sentence has free variables {sorted(free)}")
    return phi
