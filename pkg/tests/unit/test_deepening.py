"""
Unit tests for the iterative-deepening loops
"""
import pytest

from src.core.errors import ParameterError
from src.core.results import (
    DeepeningOutcome,
    LyapunovOutcome,
    LyapunovVerdict,
    StabilityKind,
    StabilityOutcome,
    StabilityVerdict,
)
from src.logic.terms import Var, mul, power
from src.numerics.interval import Box
from src.stability.encoders import StabilityParams
from src.workflows.deepening import (
    DeepeningLoop,
    check_schedule,
    deepen_asymptotic,
    deepen_asymptotic_in_large,
    deepen_lyapunov,
    deepen_lyapunov_test,
)

STABLE = StabilityVerdict(outcome=StabilityOutcome.STABLE, kind=StabilityKind.LYAPUNOV)
UNSTABLE = StabilityVerdict(
    outcome=StabilityOutcome.DELTA_UNSTABLE, kind=StabilityKind.LYAPUNOV, witness={"eps": (0.5, 0.6)}
)


@pytest.fixture
def check(mocker):
    return mocker.patch("src.workflows.deepening.check_stability")


class TestSchedules:
    """Schedule validation"""

    def test_valid(self):
        """Positive strictly increasing entries are accepted"""
        assert check_schedule([1, 2, 4]) == [1.0, 2.0, 4.0]

    def test_not_increasing(self):
        """Repeated or shrinking entries are rejected"""
        with pytest.raises(ParameterError):
            check_schedule([1, 1])
        with pytest.raises(ParameterError):
            check_schedule([2, 1])

    def test_not_positive(self):
        """Entries must be positive"""
        with pytest.raises(ParameterError):
            check_schedule([0, 1])

    def test_negative_budget(self):
        """Budgets are nonnegative"""
        with pytest.raises(ParameterError):
            DeepeningLoop(budget=-1)


class TestStabilityLoops:
    """Deepening over time bounds and radii"""

    def test_first_unstable_entry_wins(self, decay, check):
        """The loop stops at the first delta-unstable check"""
        check.side_effect = [STABLE, UNSTABLE, STABLE]
        result = deepen_lyapunov(decay, [1, 2, 4])
        assert result.outcome == DeepeningOutcome.DELTA_UNSTABLE_AT
        assert result.parameters == {"time_bound": 2.0}
        assert result.witness == {"eps": (0.5, 0.6)}
        assert [s.verdict for s in result.steps] == ["stable", "delta-unstable"]
        assert check.call_count == 2

    def test_schedule_feeds_the_time_bound(self, decay, check):
        """Each check runs with the scheduled T"""
        check.return_value = STABLE
        deepen_lyapunov(decay, [1, 2], StabilityParams(eps_max=0.5))
        params = [c.args[2] for c in check.call_args_list]
        assert [p.time_bound for p in params] == [1.0, 2.0]
        assert all(p.eps_max == 0.5 for p in params)

    def test_stable_everywhere_is_exhausted(self, decay, check):
        """Running out of schedule never asserts stability"""
        check.return_value = STABLE
        result = deepen_lyapunov(decay, [1, 2, 4])
        assert result.outcome == DeepeningOutcome.EXHAUSTED
        assert len(result.steps) == 3

    def test_empty_schedule(self, decay, check):
        """An empty schedule runs nothing"""
        result = deepen_lyapunov(decay, [])
        assert result.outcome == DeepeningOutcome.EXHAUSTED
        check.assert_not_called()

    def test_zero_budget(self, decay, check):
        """A zero budget runs nothing"""
        result = deepen_asymptotic(decay, [0.5], [1, 2], budget=0)
        assert result.outcome == DeepeningOutcome.EXHAUSTED
        assert result.steps == []
        check.assert_not_called()

    def test_budget_caps_checks(self, decay, check):
        """The budget bounds the number of checks"""
        check.return_value = STABLE
        result = deepen_lyapunov(decay, [1, 2, 4, 8], budget=2)
        assert len(result.steps) == 2

    def test_asymptotic_grid(self, decay, check):
        """Every radius is tried with every horizon, radius-major"""
        check.return_value = STABLE
        deepen_asymptotic(decay, [0.25, 0.5], [1, 2])
        entries = [(c.args[2].conv_radius, c.args[2].conv_time) for c in check.call_args_list]
        assert entries == [(0.25, 1.0), (0.25, 2.0), (0.5, 1.0), (0.5, 2.0)]
        assert all(c.args[1] == StabilityKind.ASYMPTOTIC for c in check.call_args_list)

    def test_windows_shrink_to_short_horizons(self, decay, check):
        """Windows and floors never exceed the horizon or the radius"""
        check.return_value = STABLE
        deepen_asymptotic(decay, [0.01], [0.25])
        params = check.call_args.args[2]
        assert params.conv_window == 0.25
        assert params.conv_delta_floor == 0.01
        params.check(StabilityKind.ASYMPTOTIC)

    def test_in_large(self, decay, check):
        """In-the-large deepening grows the horizon only"""
        check.side_effect = [STABLE, UNSTABLE]
        result = deepen_asymptotic_in_large(decay, [1, 2])
        assert result.outcome == DeepeningOutcome.DELTA_UNSTABLE_AT
        assert result.parameters["conv_time"] == 2.0


class TestLyapunovDeepening:
    """Template tests over growing boxes"""

    V = mul(Var("p"), power(Var("x"), 2))

    def test_success_on_second_pair(self, cubic, mocker):
        """The first successful (D, X) pair is reported"""
        test = mocker.patch("src.workflows.deepening.lyapunov_test")
        test.side_effect = [
            LyapunovVerdict(outcome=LyapunovOutcome.DELTA_FAIL),
            LyapunovVerdict(outcome=LyapunovOutcome.SUCCESS, witness={"p": (1.0, 1.5)}),
        ]
        result = deepen_lyapunov_test(
            cubic,
            self.V,
            [Box.from_bounds({"p": (1, 1.5)}), Box.from_bounds({"p": (0.5, 2)})],
            [Box.from_bounds({"x": (-0.5, 0.5)}), Box.from_bounds({"x": (-1, 1)})],
            r=0.1,
        )
        assert result.outcome == DeepeningOutcome.SUCCESS_AT
        assert result.parameters["D.p.lo"] == 0.5
        assert result.parameters["X.x.hi"] == 1.0
        assert result.witness == {"p": (1.0, 1.5)}

    def test_boxes_must_grow(self, cubic):
        """Each box must be a proper sub-box of the next"""
        same = Box.from_bounds({"p": (0.5, 2)})
        with pytest.raises(ParameterError):
            deepen_lyapunov_test(cubic, self.V, [same, same], [Box.from_bounds({"x": (-1, 1)})] * 2, r=0.1)

    def test_schedules_pair_up(self, cubic):
        """Parameter and state schedules have equal lengths"""
        with pytest.raises(ParameterError):
            deepen_lyapunov_test(
                cubic,
                self.V,
                [Box.from_bounds({"p": (0.5, 2)})],
                [Box.from_bounds({"x": (-0.5, 0.5)}), Box.from_bounds({"x": (-1, 1)})],
                r=0.1,
            )
