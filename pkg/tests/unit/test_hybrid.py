"""
Unit tests for hybrid automata, bounded reachability and simulation
"""
import math
import random
from itertools import product

import pytest

from src.core.errors import ParameterError, PathExplosionError, UnknownModeError
from src.core.results import SolverOutcome
from src.hybrid.automaton import build_automaton, check_inits, primed, weaken_automaton
from src.hybrid.library import bouncing_ball
from src.hybrid.reach import (
    HybridTrajectories,
    ModePath,
    automaton_paths,
    enforce,
    literal,
    mode_paths,
    query_reach,
    reach_encoding,
    selector,
    selector_formula,
)
from src.hybrid.simulation import simulate
from src.logic.formula import FALSE, TRUE, And, Or, conj, eq, ge, gt, lt
from src.logic.parser import parse_document
from src.logic.terms import Var, neg
from src.numerics.evaluate import holds
from src.numerics.interval import Box
from src.numerics.ode import OdeSystem, get_system
from src.solver.engine import SolverConfig

x = Var("x")
BOUNDS = Box.from_bounds({"x": (-1, 1)})


def flows(*modes):
    return {q: OdeSystem(f"h.{q}", ("x",), (x,), BOUNDS) for q in modes}


def selector_env(modes, steps):
    """0/1 values of b_q_i, one tuple of bits per step"""
    return {selector(q, i): float(bit) for i, bits in enumerate(steps) for q, bit in zip(modes, bits)}


@pytest.fixture
def ball(fixtures_dir):
    """The one-mode bouncing ball of the fixtures"""
    return parse_document((fixtures_dir / "ball.stab").read_text()).automata["ball"]


class TestAutomaton:
    """Construction and validation"""

    def test_defaults(self):
        """Missing invariants are true, missing inits false"""
        h = build_automaton("h", BOUNDS, flows("a", "b"))
        assert h.modes == ("a", "b")
        assert h.invariant("a") == TRUE
        assert h.init("b") == FALSE
        assert get_system("h.a") is h.flow("a")

    def test_unknown_mode_in_tables(self):
        """Inits and jumps may only name declared modes"""
        with pytest.raises(UnknownModeError):
            build_automaton("h", BOUNDS, flows("a"), inits={"z": TRUE})
        with pytest.raises(UnknownModeError):
            build_automaton("h", BOUNDS, flows("a"), jumps={("a", "z"): TRUE})

    def test_flow_variables_must_match(self):
        """Every mode flows over the automaton's variables"""
        other = OdeSystem("h.y", ("y",), (Var("y"),), Box.from_bounds({"y": (0, 1)}))
        with pytest.raises(ParameterError):
            build_automaton("h", BOUNDS, {"a": other})

    def test_jump_variables(self):
        """Jumps relate unprimed and primed state variables only"""
        with pytest.raises(ParameterError):
            build_automaton("h", BOUNDS, flows("a"), jumps={("a", "a"): gt(Var("y"))})
        h = build_automaton("h", BOUNDS, flows("a"), jumps={("a", "a"): eq(Var(primed("x")), x)})
        assert h.successors("a") == ["a"]

    def test_unknown_mode_lookup(self):
        """Accessors reject undeclared modes"""
        h = build_automaton("h", BOUNDS, flows("a"))
        with pytest.raises(UnknownModeError):
            h.flow("b")

    def test_jump_relation_substitutes_states(self, ball):
        """The jump formula is instantiated on given before and after states"""
        phi = ball.jump_relation("fall", "fall", [Var("x_0t"), Var("v_0t")], [Var("x_1"), Var("v_1")])
        assert "x_1" in str(phi)
        assert "x'" not in str(phi)

    def test_weakening(self, ball):
        """Weakening relaxes every formula and records the flow slack"""
        assert weaken_automaton(ball, 0) is ball
        weak = weaken_automaton(ball, 0.1)
        assert weak.flow_slack == 0.1
        assert weak.invariant("fall") != ball.invariant("fall")
        with pytest.raises(ParameterError):
            weaken_automaton(ball, -0.1)

    def test_live_inits(self, ball):
        """The ball can start in its only mode"""
        assert check_inits(ball, 0.01) == ["fall"]


class TestModePaths:
    """Enumeration of mode sequences"""

    def test_alternating_paths(self):
        """Two modes with edges both ways alternate"""
        paths = mode_paths(["a", "b"], [("a", "b"), ("b", "a")], 2)
        assert [p.modes for p in paths] == [("a", "b", "a"), ("b", "a", "b")]
        assert str(paths[0]) == "a -> b -> a"
        assert paths[0].edges() == [("a", "b"), ("b", "a")]

    def test_zero_jumps(self):
        """k = 0 gives one path per start mode"""
        assert [p.modes for p in mode_paths(["a", "b"], [], 0)] == [("a",), ("b",)]

    def test_cap(self):
        """More paths than the cap is an error"""
        with pytest.raises(PathExplosionError):
            mode_paths(["a", "b"], [("a", "b"), ("b", "a")], 1, cap=1)

    def test_unknown_edges(self):
        """Edges must name declared modes"""
        with pytest.raises(UnknownModeError):
            mode_paths(["a"], [("a", "b")], 1)

    def test_negative_bound(self):
        """The step bound is nonnegative"""
        with pytest.raises(ParameterError):
            mode_paths(["a"], [], -1)

    def test_live_paths_start_where_init_can_hold(self):
        """Modes whose init is FALSE do not start a path"""
        h = bouncing_ball()
        assert [p.modes for p in automaton_paths(h, 1)] == [("q_d", "q_u")]
        assert len(automaton_paths(h, 1, live_only=False)) == 2


class TestSelectors:
    """Boolean mode selectors over 0/1 reals"""

    def test_literal(self):
        """b_q^i is b - 1/2 > 0"""
        assert selector("q", 3) == "b_q_3"
        assert literal("q", 0) == gt(Var("b_q_0"), 0.5)

    def test_enforce(self):
        """One selector on, the others off"""
        phi = enforce(["a", "b"], "a", 0)
        assert phi == conj(literal("a", 0), literal("b", 0, positive=False))
        both = enforce(["a", "b"], "a", 0, "b")
        assert isinstance(both, And)
        assert len(both.parts) == 4

    def test_enforce_unknown_mode(self):
        """Selectors exist only for declared modes"""
        with pytest.raises(UnknownModeError):
            enforce(["a"], "b", 0)

    def test_selector_formula(self):
        """k = 0 is the choice of a first mode"""
        phi = selector_formula(["a", "b"], [("a", "b")], 0)
        assert isinstance(phi, Or)
        assert FALSE in selector_formula(["a"], [], 1).parts

    def test_enforce_admits_exactly_one_assignment(self):
        """Over 0/1 selectors, enforce(q) holds only where b_q is on and every other b is off"""
        for n in range(1, 5):
            modes = [f"m{i}" for i in range(n)]
            for q in modes:
                phi = enforce(modes, q, 0)
                satisfying = [bits for bits in product((0, 1), repeat=n) if holds(phi, selector_env(modes, [bits]))]
                assert satisfying == [tuple(int(m == q) for m in modes)]

    def test_selector_formula_matches_path_enumeration(self):
        """On random mode graphs the satisfying selector assignments are exactly the mode paths"""
        rng = random.Random(3)
        for _ in range(50):
            modes = [f"m{i}" for i in range(rng.randint(1, 3))]
            edges = [(q, p) for q in modes for p in modes if rng.random() < 0.5]
            k = rng.randint(0, 2)
            phi = selector_formula(modes, edges, k)
            found = set()
            for steps in product(product((0, 1), repeat=len(modes)), repeat=k + 1):
                if holds(phi, selector_env(modes, steps)):
                    found.add(tuple(modes[bits.index(1)] for bits in steps))
            assert found == {p.modes for p in mode_paths(modes, edges, k)}


class TestReachEncoding:
    """Unrolled path formulas"""

    def test_path_must_match_bound(self, ball):
        """A path's jump count must equal k"""
        with pytest.raises(ParameterError):
            reach_encoding(ball, 2, ModePath(("fall", "fall")))

    def test_path_edges_must_exist(self):
        """Paths can only use declared jumps"""
        h = build_automaton("h", BOUNDS, flows("a", "b"), inits={"a": TRUE})
        with pytest.raises(ParameterError):
            reach_encoding(h, 1, ModePath(("a", "b")))

    def test_no_paths_is_false(self):
        """Without jumps there is no path with one jump"""
        h = build_automaton("h", BOUNDS, flows("a"), inits={"a": TRUE})
        assert reach_encoding(h, 1) == FALSE

    def test_path_conjunction(self, ball):
        """One jump ties the end of the first flow to the start of the second"""
        phi = reach_encoding(ball, 1, ModePath(("fall", "fall")))
        text = str(phi)
        assert "x_0t" in text and "x_1" in text and "t_1" in text

    def test_trajectory_segments(self, ball):
        """Runs with at most one jump give one segment per path, sharing the start state"""
        family = HybridTrajectories(ball, 1)
        segments = family.segments(0, 5)
        assert len(segments) == 2
        assert {s.initial for s in segments} == {("x_0", "v_0")}
        single = segments[0]
        assert single.binders[0][0] == "t_0"
        assert single.final == ("x_0t", "v_0t")
        assert segments[1].final == ("x_1t", "v_1t")


class TestReachQueries:
    """Decided bounded reachability"""

    WIDE = Box.from_bounds({"x": (-2, 2)})

    def decaying(self, *modes, jumps=None):
        systems = {q: OdeSystem(f"dh.{q}", ("x",), (neg(x),), self.WIDE) for q in modes}
        return build_automaton("dh", self.WIDE, systems, jumps=jumps, inits={modes[0]: eq(x, 1)})

    def test_unreachable_goal_is_false(self):
        """Decay from x = 1 never climbs above 1.5"""
        verdict = query_reach(self.decaying("run"), 0, gt(x, 1.5), 1.0, SolverConfig(delta=0.05))
        assert verdict.outcome == SolverOutcome.EXACT_FALSE

    def test_reachable_goal_is_delta_true(self):
        """Decay from x = 1 drops below 1/2 after ln 2"""
        verdict = query_reach(self.decaying("run"), 0, lt(x, 0.5), 1.0, SolverConfig(delta=0.05))
        assert verdict.outcome == SolverOutcome.DELTA_TRUE
        assert verdict.witness

    def test_unreachable_after_a_jump(self):
        """Copying the state across a jump keeps it below its start"""
        h = self.decaying("a", "b", jumps={("a", "b"): eq(Var(primed("x")), x)})
        verdict = query_reach(h, 1, gt(x, 1.5), 1.0, SolverConfig(delta=0.05))
        assert verdict.outcome == SolverOutcome.EXACT_FALSE


class TestSimulation:
    """Numeric runs"""

    def test_bounce(self, ball):
        """The ball hits the ground after sqrt(20 / 9.8) seconds and bounces back"""
        run = simulate(ball, {"x": 10, "v": 0}, "fall", horizon=2.0)
        assert len(run.jumps) == 1
        jump = run.jumps[0]
        assert jump.source == jump.target == "fall"
        assert jump.time == pytest.approx(math.sqrt(20 / 9.8), abs=1e-3)
        assert jump.after[1] == pytest.approx(-0.9 * jump.before[1])
        assert jump.after[1] > 0
        assert run.stop_reason == "horizon"
        assert len(run.pieces) == 2

    def test_invalid_step(self, ball):
        """The step must be positive"""
        with pytest.raises(ParameterError):
            simulate(ball, {"x": 10, "v": 0}, "fall", horizon=1.0, dt=0)

    def test_missing_state(self, ball):
        """The initial state binds every variable"""
        with pytest.raises(ParameterError):
            simulate(ball, {"x": 10}, "fall", horizon=1.0)

    def test_library_ball(self):
        """The built-in ball starts falling in q_d"""
        h = bouncing_ball()
        assert h.modes == ("q_u", "q_d")
        assert h.init("q_u") == FALSE
        assert get_system("bouncingball.q_d") is h.flow("q_d")
        assert h.invariant("q_u") == conj(ge(x, 0), ge(0, Var("v")))
