"""
Unit tests for terms and formulas
"""
import random
from fractions import Fraction

import pytest

from src.core.errors import ParameterError, UnknownSymbolError
from src.logic.formula import (
    FALSE,
    TRUE,
    And,
    Atom,
    Exists,
    Forall,
    Formula,
    Or,
    Relation,
    atoms,
    classify,
    conj,
    delta_weaken,
    disj,
    eq,
    exists,
    flow_relation,
    forall,
    free_variables,
    function_symbols,
    ge,
    gt,
    implies,
    is_quantifier_free,
    is_sentence,
    le,
    lt,
    negate,
    prenex,
    quantifier_prefix,
    signature_class,
    substitute,
)
from src.logic.terms import (
    Apply,
    Const,
    FlowValue,
    Var,
    add,
    apply,
    as_term,
    mul,
    neg,
    norm,
    power,
    sin,
    sub,
    substitute_term,
    term_variables,
)

x, y, z = Var("x"), Var("y"), Var("z")


def random_formula(rng: random.Random, depth: int = 4) -> Formula:
    """Random formula over x, y, z with bounded quantifiers, junctions and both atom kinds"""
    if depth == 0 or rng.random() < 0.25:
        scaled = mul(Const(Fraction(rng.randint(-3, 3))), rng.choice((x, y, z)))
        term = add(scaled, sub(rng.choice((x, y, z)), Const(Fraction(rng.randint(-2, 2), 2))))
        return (gt if rng.random() < 0.5 else ge)(term)
    roll = rng.random()
    if roll < 0.4:
        return (exists if rng.random() < 0.5 else forall)(rng.choice("xyz"), 0, 1, random_formula(rng, depth - 1))
    parts = [random_formula(rng, depth - 1) for _ in range(rng.randint(2, 3))]
    return And(tuple(parts)) if roll < 0.7 else Or(tuple(parts))


class TestTerms:
    """Term construction and traversal"""

    def test_float_constants_are_exact(self):
        """Floats become the exact rational of their binary value"""
        assert as_term(0.5) == Const(Fraction(1, 2))
        assert as_term(3) == Const(Fraction(3))

    def test_constant_folding(self):
        """Constructors fold constants and drop neutral elements"""
        assert add(Const(Fraction(1)), Const(Fraction(2))) == Const(Fraction(3))
        assert add(x, Const(Fraction(0))) == x
        assert mul(Const(Fraction(1)), x) == x
        assert sub(Const(Fraction(0)), x) == neg(x)
        assert neg(neg(x)) == x

    def test_operators_build_terms(self):
        """Python operators build the same terms as the constructors"""
        assert x + 1 == add(x, Const(Fraction(1)))
        assert 2 * x == mul(Const(Fraction(2)), x)
        assert x**2 == power(x, 2)

    def test_unknown_symbol_is_rejected(self):
        """Only library symbols can be applied"""
        with pytest.raises(UnknownSymbolError):
            Apply("tan", (x,))

    def test_arity_is_checked(self):
        """Fixed-arity symbols reject the wrong argument count"""
        with pytest.raises(UnknownSymbolError):
            Apply("min", (x,))
        with pytest.raises(UnknownSymbolError):
            Apply("norm", ())

    def test_apply_simplifies(self):
        """apply routes arithmetic through the simplifying constructors"""
        assert apply("add", (x, Const(Fraction(0)))) == x
        assert apply("sin", (x,)) == sin(x)

    def test_substitute_term(self):
        """Variables are replaced everywhere, including inside flow values"""
        t = add(x, FlowValue("s", (x,), y, 0))
        out = substitute_term(t, {"x": Const(Fraction(1)), "y": z})
        assert term_variables(out) == frozenset({"z"})


class TestConnectives:
    """Normal-form construction"""

    def test_conj_flattens(self):
        """Nested conjunctions are flattened one level"""
        a, b, c = gt(x), gt(y), gt(z)
        assert conj(a, conj(b, c)) == And((a, b, c))
        assert conj(a) == a

    def test_disj_flattens(self):
        """Nested disjunctions are flattened one level"""
        a, b, c = gt(x), gt(y), gt(z)
        assert disj(disj(a, b), c) == Or((a, b, c))

    def test_relations_against_zero(self):
        """Every comparison is rewritten against zero"""
        assert gt(x, 1) == Atom(sub(x, Const(Fraction(1))), Relation.GT)
        assert lt(x, y) == Atom(sub(y, x), Relation.GT)
        assert le(x) == Atom(neg(x), Relation.GE)

    def test_equality_is_two_atoms(self):
        """a = b is a - b >= 0 /\\ b - a >= 0"""
        assert eq(x, y) == And((ge(x, y), ge(y, x)))

    def test_implies(self):
        """a -> b is not a \\/ b"""
        assert implies(gt(x), ge(y)) == Or((Atom(neg(x), Relation.GE), ge(y)))

    def test_true_and_false(self):
        """TRUE and FALSE are the empty junctions"""
        assert str(TRUE) == "true"
        assert str(FALSE) == "false"
        assert negate(TRUE) == FALSE


class TestNegation:
    """Negation pushed through the normal form"""

    def test_atoms_flip_strictness(self):
        """not (t > 0) is -t >= 0 and not (t >= 0) is -t > 0"""
        assert negate(gt(x)) == Atom(neg(x), Relation.GE)
        assert negate(ge(x)) == Atom(neg(x), Relation.GT)

    def test_quantifiers_switch(self):
        """Bounded quantifiers switch kind and keep their bounds"""
        phi = forall("x", 0, 1, exists("y", 0, 1, gt(x, y)))
        neg_phi = negate(phi)
        assert isinstance(neg_phi, Exists)
        assert isinstance(neg_phi.body, Forall)
        assert neg_phi.lower == as_term(0)

    def test_double_negation(self):
        """Negating twice gives back the formula"""
        phi = forall("x", 0, 1, disj(gt(x), conj(ge(y), gt(z))))
        assert negate(negate(phi)) == phi

    def test_random_double_negation(self):
        """Negation is an involution on random formulas"""
        rng = random.Random(5)
        for _ in range(1000):
            phi = random_formula(rng)
            assert negate(negate(phi)) == phi

    def test_negation_swaps_sigma_and_pi(self):
        """A negated formula keeps its block structure with the leading kind flipped"""
        rng = random.Random(9)
        seen = 0
        for _ in range(500):
            phi = random_formula(rng)
            report, dual = classify(phi), classify(negate(phi))
            assert dual.level == report.level
            assert dual.block_sizes == report.block_sizes
            if report.level == 0:
                assert dual.label == "Sigma0"
                continue
            seen += 1
            flipped = {"Sigma": "Pi", "Pi": "Sigma"}
            kind = report.label.rstrip("0123456789")
            assert dual.label == flipped[kind] + str(report.level)
        assert seen > 100


class TestWeakening:
    """Delta-weakening"""

    def test_atoms_are_relaxed(self):
        """t > 0 becomes t + delta > 0"""
        weak = delta_weaken(gt(x), "1/10")
        assert weak == Atom(add(x, Const(Fraction(1, 10))), Relation.GT)

    def test_zero_delta_is_identity(self):
        """Weakening by zero leaves the formula unchanged"""
        phi = forall("x", 0, 1, gt(x))
        assert delta_weaken(phi, 0) is phi

    def test_negative_delta_is_rejected(self):
        """Negative perturbation bounds are parameter errors"""
        with pytest.raises(ParameterError):
            delta_weaken(gt(x), -0.1)

    def test_quantifier_bounds_untouched(self):
        """Only atoms change; quantifier bounds keep their terms"""
        phi = delta_weaken(exists("x", 0, 1, gt(x)), 0.5)
        assert isinstance(phi, Exists)
        assert phi.upper == as_term(1)
        assert list(atoms(phi)) == [Atom(add(x, Const(Fraction(1, 2))), Relation.GT)]


class TestVariables:
    """Free variables and substitution"""

    def test_free_variables(self):
        """Quantified variables are bound; bounds contribute their variables"""
        phi = exists("x", 0, y, gt(x, z))
        assert free_variables(phi) == frozenset({"y", "z"})
        assert not is_sentence(phi)
        assert is_sentence(forall("y", 0, 1, forall("z", 0, 1, phi)))

    def test_is_quantifier_free(self):
        """Only atoms and junctions are quantifier free"""
        assert is_quantifier_free(conj(gt(x), gt(y)))
        assert not is_quantifier_free(exists("x", 0, 1, gt(x)))

    def test_substitution_avoids_capture(self):
        """A bound variable clashing with the incoming term is renamed"""
        phi = exists("y", 0, 1, gt(x, y))
        out = substitute(phi, {"x": y})
        assert isinstance(out, Exists)
        assert out.var != "y"
        assert free_variables(out) == frozenset({"y"})

    def test_substitution_respects_binding(self):
        """Bound occurrences are not replaced"""
        phi = exists("x", 0, 1, gt(x))
        assert substitute(phi, {"x": 5}) == phi

    def test_function_symbols(self):
        """Symbols of atoms and bounds are collected"""
        phi = exists("x", 0, 1, gt(sin(x), mul(y, y)))
        assert function_symbols(phi) == {"sin", "mul", "sub"}


class TestClassification:
    """Prenex form and Sigma/Pi labels"""

    def test_quantifier_free_is_sigma0(self):
        """Formulas without quantifiers sit at level zero"""
        report = classify(gt(Const(Fraction(1))))
        assert report.label == "Sigma0"
        assert report.level == 0

    def test_exists_forall(self):
        """exists-forall is Sigma2"""
        phi = exists("p", 0, 1, forall("x", 0, 1, gt(Var("p"), x)))
        report = classify(phi)
        assert report.label == "Sigma2"
        assert report.alternations == 1
        assert report.block_sizes == [1, 1]

    def test_adjacent_blocks_merge(self):
        """Same-kind quantifiers form one block"""
        phi = forall("x", 0, 1, forall("y", 0, 1, exists("z", 0, 1, gt(z, x))))
        report = classify(phi)
        assert report.label == "Pi2"
        assert report.block_sizes == [2, 1]

    def test_conjunction_of_prefixes_interleaves(self):
        """Sibling prefixes are merged into the fewest blocks"""
        left = forall("x", 0, 1, exists("y", 0, 1, gt(y, x)))
        right = forall("z", 0, 1, gt(z))
        assert classify(conj(left, right)).label == "Pi2"

    def test_prenex_standardizes_apart(self):
        """Clashing bound names are renamed when pulled together"""
        phi = conj(exists("x", 0, 1, gt(x)), exists("x", 0, 1, ge(x)))
        out = prenex(phi)
        assert quantifier_prefix(out) == ("exists", "exists")
        assert out.var != out.body.var

    def test_signature_classes(self):
        """Linear, polynomial, nonlinear and ODE signatures are told apart"""
        assert signature_class(gt(add(x, 2 * y))) == "linear"
        assert signature_class(gt(mul(x, y))) == "polynomial"
        assert signature_class(gt(sin(x))) == "nonlinear"
        flow = flow_relation("s", [x], y, ["z"])
        assert signature_class(flow) == "ode"
        assert classify(forall("z", 0, 1, flow)).oracle_class == "PSPACE"

    def test_flow_relation_shape(self):
        """The flow membership atom is -||state - flow|| >= 0"""
        atom = flow_relation("s", [x], y, ["z"])
        assert atom.relation == Relation.GE
        assert atom.term == neg(norm(sub(z, FlowValue("s", (x,), y, 0))))
