"""
Delta-stability verdicts.

The negation of the stability sentence is decided: a false negation means the
sentence itself holds (stable), a delta-true negation means the system fails
to be stable once every atom is relaxed by delta (delta-unstable).
"""
import logging
from typing import Optional, Union

from src.core.results import StabilityKind, StabilityOutcome, StabilityVerdict
from src.logic.formula import classify, negate
from src.numerics.ode import OdeSystem
from src.solver.engine import SolverConfig, decide
from src.solver.trace import TraceWriter
from src.stability.encoders import ENCODERS, StabilityParams, trajectories_of
from src.stability.trajectories import Trajectories

logger = logging.getLogger(__name__)


def solver_config(delta: float, config: Optional[SolverConfig] = None) -> SolverConfig:
    """``config`` with its delta replaced by the perturbation bound of the check"""
    if config is None:
        return SolverConfig(delta=delta)
    return config.model_copy(update={"delta": delta})


def check_stability(
    target: Union[OdeSystem, Trajectories],
    kind: StabilityKind = StabilityKind.LYAPUNOV,
    params: Optional[StabilityParams] = None,
    config: Optional[SolverConfig] = None,
    trace: Optional[TraceWriter] = None,
) -> StabilityVerdict:
    """Decide delta-stability of a system or trajectory family.

    Args:
        target: ODE system, or a trajectory family such as a hybrid unrolling
        kind: Stability notion to encode
        params: Bounds of the encoding; defaults come from settings
        config: Solver parameters; its delta is replaced by ``params.delta``
        trace: Optional sink for solver trace records

    Returns:
        STABLE when the encoded sentence is true, DELTA_UNSTABLE with the
        solver's witness when its delta-weakened negation is true
    """
    kind = StabilityKind(kind)
    params = (params or StabilityParams()).check(kind)
    trajectories = trajectories_of(target, params)
    phi = ENCODERS[kind](trajectories, params)
    complexity = classify(phi)
    logger.info(f"Checking {kind.value} stability of {trajectories.name} ({complexity.label}, delta={params.delta})")

    verdict = decide(negate(phi), solver_config(params.delta, config), trace)
    if verdict.is_delta_true:
        outcome, witness = StabilityOutcome.DELTA_UNSTABLE, verdict.witness
    else:
        outcome, witness = StabilityOutcome.STABLE, {}
    logger.info(f"{trajectories.name} is {outcome.value} ({kind.value})")
    return StabilityVerdict(
        outcome=outcome,
        kind=kind,
        witness=witness,
        complexity=complexity,
        stats=verdict.stats,
    )
