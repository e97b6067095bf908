"""
Symbolic differentiation of library terms through sympy
"""
from fractions import Fraction
from typing import Dict, Iterable, Tuple

import sympy as sp

from src.core.errors import UnknownSymbolError
from src.logic.terms import (
    Apply,
    Const,
    FlowValue,
    Term,
    Var,
    absolute,
    add,
    cos,
    div,
    exp,
    maximum,
    minimum,
    mul,
    neg,
    power,
    sin,
    sqrt,
    sub,
)

_SYMBOLS: Dict[str, sp.Symbol] = {}


def symbol(name: str) -> sp.Symbol:
    if name not in _SYMBOLS:
        _SYMBOLS[name] = sp.Symbol(name, real=True)
    return _SYMBOLS[name]


def to_sympy(t: Term) -> sp.Expr:
    if isinstance(t, Var):
        return symbol(t.name)
    if isinstance(t, Const):
        return sp.Rational(t.value.numerator, t.value.denominator)
    if isinstance(t, FlowValue):
        raise UnknownSymbolError("flow terms have no symbolic form")
    if not isinstance(t, Apply):
        raise UnknownSymbolError(f"unsupported term {t!r}")
    args = [to_sympy(a) for a in t.args]
    op = t.op
    if op == "add":
        return args[0] + args[1]
    if op == "sub":
        return args[0] - args[1]
    if op == "mul":
        return args[0] * args[1]
    if op == "div":
        return args[0] / args[1]
    if op == "neg":
        return -args[0]
    if op == "pow":
        return args[0] ** args[1]
    if op == "norm":
        return sp.sqrt(sp.Add(*(a**2 for a in args)))
    functions = {
        "abs": sp.Abs,
        "min": sp.Min,
        "max": sp.Max,
        "exp": sp.exp,
        "sin": sp.sin,
        "cos": sp.cos,
        "sqrt": sp.sqrt,
    }
    return functions[op](*args)


def _number(expr: sp.Expr) -> Const:
    if expr.is_Rational:
        return Const(Fraction(int(expr.p), int(expr.q)))
    return Const(Fraction(float(expr)))


def _is_negative_number(expr: sp.Expr) -> bool:
    return bool(expr.is_Number and expr < 0)


def from_sympy(expr: sp.Expr) -> Term:
    """Convert a sympy expression back into a library term.

    Raises UnknownSymbolError for anything outside the library, such as the
    ``sign`` and ``Heaviside`` functions produced by differentiating ``abs``,
    ``min`` or ``max``.
    """
    if expr.is_Symbol:
        return Var(str(expr))
    if expr.is_Number:
        return _number(expr)
    if expr is sp.E:
        return exp(Const(Fraction(1)))
    if expr.is_Add:
        terms = list(expr.as_ordered_terms())
        result = from_sympy(terms[0])
        for term in terms[1:]:
            coeff, _ = term.as_coeff_Mul()
            if _is_negative_number(coeff):
                result = sub(result, from_sympy(-term))
            else:
                result = add(result, from_sympy(term))
        return result
    if expr.is_Mul:
        coeff, rest = expr.as_coeff_Mul()
        if coeff == -1:
            return neg(from_sympy(rest))
        numerator, denominator = sp.fraction(expr)
        if denominator != 1:
            return div(from_sympy(numerator), from_sympy(denominator))
        factors = [from_sympy(f) for f in expr.as_ordered_factors()]
        result = factors[0]
        for factor in factors[1:]:
            result = mul(result, factor)
        return result
    if expr.is_Pow:
        base, exponent = expr.as_base_exp()
        if exponent.is_Integer:
            n = int(exponent)
            if n < 0:
                return div(Const(Fraction(1)), power(from_sympy(base), -n))
            return power(from_sympy(base), n)
        if exponent == sp.Rational(1, 2):
            return sqrt(from_sympy(base))
        if exponent == sp.Rational(-1, 2):
            return div(Const(Fraction(1)), sqrt(from_sympy(base)))
        raise UnknownSymbolError(f"exponent {exponent} is outside the library")
    if isinstance(expr, sp.exp):
        return exp(from_sympy(expr.args[0]))
    if isinstance(expr, sp.sin):
        return sin(from_sympy(expr.args[0]))
    if isinstance(expr, sp.cos):
        return cos(from_sympy(expr.args[0]))
    if isinstance(expr, sp.Abs):
        return absolute(from_sympy(expr.args[0]))
    if isinstance(expr, (sp.Min, sp.Max)):
        build = minimum if isinstance(expr, sp.Min) else maximum
        args = [from_sympy(a) for a in expr.args]
        result = args[0]
        for arg in args[1:]:
            result = build(result, arg)
        return result
    raise UnknownSymbolError(f"{expr.func} is outside the function library")


def differentiate(t: Term, variable: str) -> Term:
    """Partial derivative of ``t`` with respect to ``variable``"""
    return from_sympy(sp.diff(to_sympy(t), symbol(variable)))


def gradient(t: Term, variables: Iterable[str]) -> Tuple[Term, ...]:
    return tuple(differentiate(t, v) for v in variables)


def expand(t: Term) -> Term:
    """Algebraically expanded equivalent of ``t``"""
    return from_sympy(sp.expand(to_sympy(t)))


def equivalent(a: Term, b: Term) -> bool:
    """Symbolic equality check; False when sympy cannot prove it"""
    return bool(sp.simplify(to_sympy(a) - to_sympy(b)) == 0)
