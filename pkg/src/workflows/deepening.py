"""
Iterative-deepening semi-procedures for the unbounded stability problems.

Each loop runs bounded checks over a growing schedule and stops at the first
entry that settles the question in the direction the bounded check can
certify. Running out of schedule or budget yields EXHAUSTED, which never
asserts stability.
"""
import logging
import time
from typing import Dict, List, Optional, Sequence, Union

from src.core.errors import ParameterError
from src.core.results import (
    DeepeningOutcome,
    DeepeningResult,
    DeepeningStep,
    LyapunovOutcome,
    StabilityKind,
    StabilityOutcome,
)
from src.logic.terms import Term
from src.numerics.interval import Box
from src.numerics.ode import OdeSystem
from src.solver.engine import SolverConfig
from src.solver.trace import TraceWriter
from src.stability.checks import check_stability
from src.stability.encoders import StabilityParams
from src.stability.lyapunov import lyapunov_test
from src.stability.trajectories import Trajectories

logger = logging.getLogger(__name__)

Target = Union[OdeSystem, Trajectories]


def check_schedule(schedule: Sequence[float], name: str = "schedule") -> List[float]:
    """The schedule as a list of floats.

    Raises:
        ParameterError: when an entry is not positive or the entries do not strictly increase
    """
    values = [float(v) for v in schedule]
    for v in values:
        if not v > 0:
            raise ParameterError(f"{name} entries must be positive, got {v}")
    for a, b in zip(values, values[1:]):
        if not b > a:
            raise ParameterError(f"{name} must be strictly increasing, got {a} then {b}")
    return values


def _check_box_schedule(schedule: Sequence[Box], name: str) -> List[Box]:
    boxes = list(schedule)
    for a, b in zip(boxes, boxes[1:]):
        if a == b or not a.is_subset(b):
            raise ParameterError(f"{name} must grow strictly: {a} is not a proper sub-box of {b}")
    return boxes


def _box_parameters(prefix: str, box: Box) -> Dict[str, float]:
    out: Dict[str, float] = {}
    for name, iv in box.items():
        out[f"{prefix}.{name}.lo"] = iv.lo
        out[f"{prefix}.{name}.hi"] = iv.hi
    return out


class DeepeningLoop:
    """Budget bookkeeping shared by the loops.

    ``budget`` caps the number of bounded checks and ``time_limit`` the wall
    time in seconds; either may be omitted. A zero budget runs no check.
    """

    def __init__(self, budget: Optional[int] = None, time_limit: Optional[float] = None):
        if budget is not None and budget < 0:
            raise ParameterError(f"budget must be nonnegative, got {budget}")
        if time_limit is not None and time_limit < 0:
            raise ParameterError(f"time limit must be nonnegative, got {time_limit}")
        self.budget = budget
        self.time_limit = time_limit
        self.steps: List[DeepeningStep] = []
        self._started = time.perf_counter()

    def can_run(self) -> bool:
        if self.budget is not None and len(self.steps) >= self.budget:
            logger.info(f"Deepening budget of {self.budget} checks used up")
            return False
        if self.time_limit is not None and time.perf_counter() - self._started >= self.time_limit:
            logger.info(f"Deepening time limit of {self.time_limit}s reached")
            return False
        return True

    def record(self, parameters: Dict[str, float], verdict: str, started: float) -> None:
        step = DeepeningStep(parameters=parameters, verdict=verdict, wall_time=time.perf_counter() - started)
        self.steps.append(step)
        logger.info(f"Deepening step {len(self.steps)} {parameters}: {verdict} ({step.wall_time:.2f}s)")

    def exhausted(self) -> DeepeningResult:
        return DeepeningResult(outcome=DeepeningOutcome.EXHAUSTED, steps=self.steps)


def _stability_loop(
    target: Target,
    kind: StabilityKind,
    params: StabilityParams,
    entries: List[Dict[str, float]],
    loop: DeepeningLoop,
    config: Optional[SolverConfig],
    trace: Optional[TraceWriter],
) -> DeepeningResult:
    for entry in entries:
        if not loop.can_run():
            break
        started = time.perf_counter()
        verdict = check_stability(target, kind, params.model_copy(update=entry), config, trace)
        loop.record(entry, verdict.outcome.value, started)
        if verdict.outcome == StabilityOutcome.DELTA_UNSTABLE:
            return DeepeningResult(
                outcome=DeepeningOutcome.DELTA_UNSTABLE_AT,
                parameters=entry,
                witness=verdict.witness,
                steps=loop.steps,
            )
    return loop.exhausted()


def deepen_lyapunov(
    target: Target,
    schedule: Sequence[float],
    params: Optional[StabilityParams] = None,
    budget: Optional[int] = None,
    time_limit: Optional[float] = None,
    config: Optional[SolverConfig] = None,
    trace: Optional[TraceWriter] = None,
) -> DeepeningResult:
    """Lyapunov checks for growing time bounds T.

    Returns DELTA_UNSTABLE_AT with the first T whose check is delta-unstable,
    or EXHAUSTED.
    """
    params = params or StabilityParams()
    entries = [{"time_bound": t} for t in check_schedule(schedule, "time schedule")]
    loop = DeepeningLoop(budget, time_limit)
    return _stability_loop(target, StabilityKind.LYAPUNOV, params, entries, loop, config, trace)


def _convergence_entry(params: StabilityParams, radius: Optional[float], horizon: float) -> Dict[str, float]:
    entry = {"time_bound": horizon, "conv_time": horizon}
    window = min(params.conv_window, horizon)
    entry["conv_window"] = window
    entry["conv_window_floor"] = min(params.conv_window_floor, window)
    if radius is not None:
        entry["conv_radius"] = radius
        entry["conv_delta_floor"] = min(params.conv_delta_floor, radius)
    return entry


def deepen_asymptotic(
    target: Target,
    radius_schedule: Sequence[float],
    time_schedule: Sequence[float],
    params: Optional[StabilityParams] = None,
    budget: Optional[int] = None,
    time_limit: Optional[float] = None,
    config: Optional[SolverConfig] = None,
    trace: Optional[TraceWriter] = None,
) -> DeepeningResult:
    """Asymptotic checks over growing convergence radii d and, for each, growing horizons T.

    Both horizons of the encoding follow the time schedule. Windows and
    floors that would exceed the current horizon or radius are shrunk to it.
    """
    params = params or StabilityParams()
    radii = check_schedule(radius_schedule, "radius schedule")
    horizons = check_schedule(time_schedule, "time schedule")
    entries = [_convergence_entry(params, d, t) for d in radii for t in horizons]
    loop = DeepeningLoop(budget, time_limit)
    return _stability_loop(target, StabilityKind.ASYMPTOTIC, params, entries, loop, config, trace)


def deepen_asymptotic_in_large(
    target: Target,
    schedule: Sequence[float],
    params: Optional[StabilityParams] = None,
    budget: Optional[int] = None,
    time_limit: Optional[float] = None,
    config: Optional[SolverConfig] = None,
    trace: Optional[TraceWriter] = None,
) -> DeepeningResult:
    """In-the-large checks for growing horizons T"""
    params = params or StabilityParams()
    entries = [_convergence_entry(params, None, t) for t in check_schedule(schedule, "time schedule")]
    loop = DeepeningLoop(budget, time_limit)
    return _stability_loop(target, StabilityKind.ASYMPTOTIC_IN_LARGE, params, entries, loop, config, trace)


def deepen_lyapunov_test(
    system: OdeSystem,
    V: Term,
    param_schedule: Sequence[Box],
    state_schedule: Sequence[Box],
    r: float,
    strict: bool = False,
    delta: float = 0.01,
    budget: Optional[int] = None,
    time_limit: Optional[float] = None,
    config: Optional[SolverConfig] = None,
    trace: Optional[TraceWriter] = None,
) -> DeepeningResult:
    """Template tests on growing parameter boxes D and state boxes X, taken pairwise.

    Returns SUCCESS_AT with the first (D, X) pair and its parameter witness,
    or EXHAUSTED.
    """
    params = _check_box_schedule(param_schedule, "parameter schedule")
    states = _check_box_schedule(state_schedule, "state schedule")
    if len(params) != len(states):
        raise ParameterError(f"parameter and state schedules differ in length ({len(params)} vs {len(states)})")
    loop = DeepeningLoop(budget, time_limit)
    for D, X in zip(params, states):
        if not loop.can_run():
            break
        entry = {**_box_parameters("D", D), **_box_parameters("X", X)}
        started = time.perf_counter()
        verdict = lyapunov_test(system, V, D, X, r, strict=strict, delta=delta, config=config, trace=trace)
        loop.record(entry, verdict.outcome.value, started)
        if verdict.outcome == LyapunovOutcome.SUCCESS:
            return DeepeningResult(
                outcome=DeepeningOutcome.SUCCESS_AT,
                parameters=entry,
                witness=verdict.witness,
                steps=loop.steps,
            )
    return loop.exhausted()
