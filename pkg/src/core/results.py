"""
Verdicts, complexity reports and run reports
"""
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

WitnessBox = Dict[str, Tuple[float, float]]


class SolverOutcome(str, Enum):
    """Answers of the delta-decision procedure"""

    DELTA_TRUE = "delta-true"
    EXACT_FALSE = "false"


class StabilityOutcome(str, Enum):
    """Two-valued stability verdicts"""

    STABLE = "stable"
    DELTA_UNSTABLE = "delta-unstable"


class LyapunovOutcome(str, Enum):
    """Verdicts of the Lyapunov template test"""

    SUCCESS = "success"
    DELTA_FAIL = "delta-fail"


class DeepeningOutcome(str, Enum):
    """Results of the semi-decision loops"""

    DELTA_UNSTABLE_AT = "delta-unstable-at"
    SUCCESS_AT = "success-at"
    EXHAUSTED = "exhausted"


class StabilityKind(str, Enum):
    """Stability notions with a sentence encoding"""

    LYAPUNOV = "lyapunov"
    ASYMPTOTIC = "asymptotic"
    ASYMPTOTIC_IN_LARGE = "asymptotic_in_large"


class ComplexityReport(BaseModel):
    """Quantifier-prefix classification of a bounded sentence"""

    label: str = Field(description="Sigma<n> or Pi<n>")
    level: int = Field(description="Number of quantifier blocks of the prenex form")
    alternations: int
    block_sizes: List[int] = Field(default_factory=list)
    oracle_class: str = Field(default="P", description="Symbolic tag for the function oracle class")
    signature: str = Field(default="linear")


class SolverStats(BaseModel):
    """Search statistics of one decide call"""

    boxes_explored: int = 0
    max_depth: int = 0
    wall_time: float = 0.0

    def absorb(self, other: "SolverStats") -> None:
        self.boxes_explored += other.boxes_explored
        self.max_depth = max(self.max_depth, other.max_depth)


class SolverVerdict(BaseModel):
    """DeltaTrue means the delta-weakening holds; ExactFalse means the sentence is false"""

    outcome: SolverOutcome
    witness: WitnessBox = Field(default_factory=dict)
    stats: SolverStats = Field(default_factory=SolverStats)

    @property
    def is_delta_true(self) -> bool:
        return self.outcome == SolverOutcome.DELTA_TRUE


class StabilityVerdict(BaseModel):
    """Stable, or unstable under delta-bounded perturbation"""

    outcome: StabilityOutcome
    kind: StabilityKind
    witness: WitnessBox = Field(default_factory=dict)
    complexity: Optional[ComplexityReport] = None
    stats: SolverStats = Field(default_factory=SolverStats)


class LyapunovVerdict(BaseModel):
    """Result of the delta-complete Lyapunov template test"""

    outcome: LyapunovOutcome
    witness: WitnessBox = Field(default_factory=dict)
    complexity: Optional[ComplexityReport] = None
    stats: SolverStats = Field(default_factory=SolverStats)


class DeepeningStep(BaseModel):
    """One entry of a deepening schedule and the verdict it produced"""

    parameters: Dict[str, float]
    verdict: str
    wall_time: float = 0.0


class DeepeningResult(BaseModel):
    """Outcome of a semi-decision loop; EXHAUSTED never asserts stability"""

    outcome: DeepeningOutcome
    parameters: Dict[str, float] = Field(default_factory=dict)
    witness: WitnessBox = Field(default_factory=dict)
    steps: List[DeepeningStep] = Field(default_factory=list)


class RunReport(BaseModel):
    """Report printed by the command line: a verdict line plus a key-value block"""

    verdict: str
    delta: float
    parameters: Dict[str, Any] = Field(default_factory=dict)
    complexity: Optional[str] = None
    witness: WitnessBox = Field(default_factory=dict)
    statistics: Dict[str, Any] = Field(default_factory=dict)
    entries: List[str] = Field(default_factory=list)
    version: str = ""
