"""
Stability notions as bounded sentences.

Lyapunov stability:
    forall eps in [eps_min, e]. exists dL in [delta_floor, eps].
    forall t in [0, T], x_0 in X, x_t in X.
        ||x_0|| >= dL  \\/  x_t is not the flow of x_0 after t  \\/  ||x_t|| < eps

Asymptotic stability adds a convergence conjunct: some radius d' such that
every trajectory starting inside it has ||x_t|| -> 0 as t -> T', the limit
written in its bounded epsilon-delta form.
"""
import logging
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple, Union

from pydantic import BaseModel, Field

from src.core.config import settings
from src.core.errors import ParameterError
from src.core.results import StabilityKind
from src.logic.formula import (
    Formula,
    conj,
    disj,
    exists,
    forall,
    fresh_name,
    ge,
    gt,
    negate,
    quantify,
)
from src.logic.terms import Const, Term, TermLike, Var, absolute, add, as_term, norm, sub
from src.numerics.interval import Box
from src.numerics.ode import OdeSystem
from src.stability.trajectories import ContinuousTrajectories, Segment, Trajectories

logger = logging.getLogger(__name__)

Range = Tuple[float, float]


def number(value: Union[int, float, Fraction]) -> Const:
    """Exact constant of the decimal a parameter was written as"""
    if isinstance(value, float):
        return Const(Fraction(repr(value)))
    return Const(Fraction(value))


class StabilityParams(BaseModel):
    """Bounds that turn the unbounded stability definitions into bounded sentences"""

    delta: float = Field(default_factory=lambda: settings.delta, description="Perturbation bound")
    eps_min: float = Field(default_factory=lambda: settings.eps_min)
    eps_max: float = Field(default_factory=lambda: settings.eps_max, description="e")
    delta_floor: float = Field(default_factory=lambda: settings.delta_floor)
    time_bound: float = Field(default_factory=lambda: settings.time_bound, description="T")

    conv_time: float = Field(default_factory=lambda: settings.conv_time, description="T'")
    conv_radius: float = Field(default_factory=lambda: settings.conv_radius, description="d")
    conv_delta_floor: float = Field(default_factory=lambda: settings.conv_delta_floor)
    conv_eps_min: float = Field(default_factory=lambda: settings.conv_eps_min)
    conv_eps_max: float = Field(default_factory=lambda: settings.conv_eps_max)
    conv_window: float = Field(default_factory=lambda: settings.conv_window, description="d''")
    conv_window_floor: float = Field(default_factory=lambda: settings.conv_window_floor)

    exclusion_radius: float = Field(default_factory=lambda: settings.exclusion_radius, description="r")
    bounds: Optional[Dict[str, Range]] = Field(default=None, description="State box X; the system bounds when omitted")

    def check(self, kind: StabilityKind = StabilityKind.LYAPUNOV) -> "StabilityParams":
        """Validate the ranges an encoding of ``kind`` relies on.

        Raises:
            ParameterError: on the first violated constraint
        """
        if not self.delta > 0:
            raise ParameterError(f"delta must be positive, got {self.delta}")
        if not self.eps_min > self.delta:
            raise ParameterError(f"eps_min ({self.eps_min}) must exceed delta ({self.delta})")
        if not self.eps_min <= self.eps_max:
            raise ParameterError("eps_min must not exceed eps_max")
        if not 0 < self.delta_floor <= self.eps_min:
            raise ParameterError("delta_floor must lie in (0, eps_min]")
        if not self.time_bound > 0:
            raise ParameterError("time bound T must be positive")
        if kind != StabilityKind.LYAPUNOV:
            if not self.conv_time > 0:
                raise ParameterError("convergence time T' must be positive")
            if not 0 < self.conv_delta_floor <= self.conv_radius:
                raise ParameterError("conv_delta_floor must lie in (0, conv_radius]")
            if not self.delta < self.conv_eps_min <= self.conv_eps_max:
                raise ParameterError("convergence eps range must lie above delta")
            if not 0 < self.conv_window_floor <= self.conv_window <= self.conv_time:
                raise ParameterError("convergence window must satisfy 0 < floor <= window <= T'")
        if self.bounds is not None:
            for name, (lo, hi) in self.bounds.items():
                if not lo <= hi:
                    raise ParameterError(f"empty state range for {name}")
        return self

    def state_box(self) -> Optional[Box]:
        return Box.from_bounds(self.bounds) if self.bounds is not None else None

    def echo(self, kind: StabilityKind) -> Dict[str, float]:
        """Parameters an encoding of ``kind`` actually uses"""
        fields = ["delta", "eps_min", "eps_max", "delta_floor", "time_bound"]
        if kind != StabilityKind.LYAPUNOV:
            fields += [
                "conv_time",
                "conv_radius",
                "conv_delta_floor",
                "conv_eps_min",
                "conv_eps_max",
                "conv_window",
                "conv_window_floor",
            ]
        return {name: getattr(self, name) for name in fields}


def trajectories_of(target: Union[OdeSystem, Trajectories], params: StabilityParams) -> Trajectories:
    if isinstance(target, OdeSystem):
        return ContinuousTrajectories(target, params.state_box())
    return target


def _forall_binders(binders: Sequence[Tuple[str, Term, Term]], body: Formula) -> Formula:
    for name, lower, upper in reversed(binders):
        body = forall(name, lower, upper, body)
    return body


def _names(trajectories: Trajectories, *bases: str) -> List[str]:
    taken: Set[str] = set(trajectories.variables)
    picked = []
    for base in bases:
        name = fresh_name(base, taken)
        taken.add(name)
        picked.append(name)
    return picked


def _escape_clause(segment: Segment, radius: Term, eps: Term) -> Formula:
    """||x_0|| >= radius \\/ not relation \\/ ||x_t|| < eps"""
    start = norm(*(Var(x) for x in segment.initial))
    end = norm(*(Var(x) for x in segment.final))
    return disj(ge(sub(start, radius)), negate(segment.relation), gt(sub(eps, end)))


# ----------------------------------------------------------------------
# Lyapunov stability
# ----------------------------------------------------------------------
def encode_lyapunov(target: Union[OdeSystem, Trajectories], params: StabilityParams) -> Formula:
    """Bounded Lyapunov stability sentence; classifies as Pi3"""
    params.check(StabilityKind.LYAPUNOV)
    trajectories = trajectories_of(target, params)
    eps, radius = _names(trajectories, "eps", "delta_L")
    segments = trajectories.segments(0, number(params.time_bound))
    body = conj(*(_forall_binders(s.binders, _escape_clause(s, Var(radius), Var(eps))) for s in segments))
    phi = forall(
        eps,
        number(params.eps_min),
        number(params.eps_max),
        exists(radius, number(params.delta_floor), Var(eps), body),
    )
    logger.debug(f"Encoded Lyapunov stability of {trajectories.name} over {len(segments)} segments")
    return phi


# ----------------------------------------------------------------------
# Limits
# ----------------------------------------------------------------------
_SIDES = ("both", "left", "right", "infinity")


def _window(side: str, target: Term, width: Term) -> Tuple[Term, Term]:
    if side == "both":
        return sub(target, width), add(target, width)
    if side == "left":
        return sub(target, width), target
    return target, add(target, width)


def _limit_shape(
    eps: Tuple[str, Term, Term],
    width: Tuple[str, Term, Term],
    inner: Callable[[Term, Term], Formula],
) -> Formula:
    """forall eps. exists width. inner(eps, width)"""
    eps_name, eps_lo, eps_hi = eps
    width_name, width_lo, width_hi = width
    return forall(eps_name, eps_lo, eps_hi, exists(width_name, width_lo, width_hi, inner(Var(eps_name), Var(width_name))))


def encode_limit(
    f: TermLike,
    variable: str,
    target: TermLike,
    c: TermLike = 0,
    eps: Range = (0.01, 1.0),
    window: Range = (0.001, 1.0),
    side: str = "both",
    names: Tuple[str, str] = ("eps_l", "delta_l"),
) -> Formula:
    """Bounded form of lim f = c as ``variable`` approaches ``target``.

    ``side`` picks the window around the target: ``both`` is [a - w, a + w],
    ``left`` and ``right`` the one-sided halves. ``infinity`` reads the limit at
    infinity, cut at ``target``: some start s in ``window`` has |f - c| < eps
    on all of [s, target].
    """
    if side not in _SIDES:
        raise ParameterError(f"unknown limit side {side!r}; expected one of {_SIDES}")
    if not 0 < eps[0] <= eps[1] or not window[0] <= window[1]:
        raise ParameterError("limit ranges must be nonempty with a positive eps floor")
    f_term, a, limit = as_term(f), as_term(target), as_term(c)

    def inner(e: Term, w: Term) -> Formula:
        lower, upper = (w, a) if side == "infinity" else _window(side, a, w)
        return forall(variable, lower, upper, gt(sub(e, absolute(sub(f_term, limit)))))

    return _limit_shape(
        (names[0], number(eps[0]), number(eps[1])),
        (names[1], number(window[0]), number(window[1])),
        inner,
    )


# ----------------------------------------------------------------------
# Asymptotic stability
# ----------------------------------------------------------------------
def _convergence(trajectories: Trajectories, params: StabilityParams, radius_kind: str) -> Formula:
    """Q d' in [floor, d]. forall x_0 in X. ||x_0|| < d' -> lim_{t -> T'} ||x_t|| = 0"""
    radius, eps, width = _names(trajectories, "delta_c", "eps_c", "delta_w")
    horizon = number(params.conv_time)
    layout = trajectories.segments(0, horizon, tag="c")

    def inner(e: Term, w: Term) -> Formula:
        segments = trajectories.segments(sub(horizon, w), horizon, tag="c")
        parts = []
        for s in segments:
            starts = set(s.initial)
            # the start state is bound outside the limit
            binders = [b for b in s.binders if b[0] not in starts]
            parts.append(_forall_binders(binders, _escape_clause(s, Var(radius), e)))
        return conj(*parts)

    # every path of a hybrid family shares the start-state names
    initial = layout[0].initial if layout else ()
    start_binders = [b for b in (layout[0].binders if layout else ()) if b[0] in initial]
    limit = _limit_shape(
        (eps, number(params.conv_eps_min), number(params.conv_eps_max)),
        (width, number(params.conv_window_floor), number(params.conv_window)),
        inner,
    )
    body = _forall_binders(start_binders, limit)
    return quantify(radius_kind, radius, number(params.conv_delta_floor), number(params.conv_radius), body)


def encode_asymptotic(target: Union[OdeSystem, Trajectories], params: StabilityParams) -> Formula:
    """Lyapunov stability and convergence from some neighbourhood; classifies as Sigma4"""
    params.check(StabilityKind.ASYMPTOTIC)
    trajectories = trajectories_of(target, params)
    return conj(encode_lyapunov(trajectories, params), _convergence(trajectories, params, "exists"))


def encode_asymptotic_in_large(target: Union[OdeSystem, Trajectories], params: StabilityParams) -> Formula:
    """Lyapunov stability and convergence from every radius up to d; classifies as Pi3"""
    params.check(StabilityKind.ASYMPTOTIC_IN_LARGE)
    trajectories = trajectories_of(target, params)
    return conj(encode_lyapunov(trajectories, params), _convergence(trajectories, params, "forall"))


ENCODERS = {
    StabilityKind.LYAPUNOV: encode_lyapunov,
    StabilityKind.ASYMPTOTIC: encode_asymptotic,
    StabilityKind.ASYMPTOTIC_IN_LARGE: encode_asymptotic_in_large,
}
