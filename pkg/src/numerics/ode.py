"""
Validated enclosures of solutions of autonomous ODEs.

A ``FlowTube`` integrates a box of initial states forward in time. Each step
first proves an a-priori enclosure ``B`` of every solution over the step by
Picard iteration, then advances the set in Lohner form ``c + A r + e``: a float
center ``c``, a float basis ``A`` applied to the fixed initial radius box
``r``, and an interval error box ``e``. The step map is the second-order
expansion ``x + h f(x)`` with its remainder bounded by ``h^2/2 (J f)(B)``.
Systems whose Jacobian has no symbolic form fall back to interval Euler
steps ``X + h f(B)``.

Integration continues past the state bounds ``X`` into an extended domain,
so callers that can tolerate an escape (the solver) keep getting enclosures;
strict queries reject any time past the first step that leaves ``X``.
"""
import logging
import math
import threading
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.config import settings
from src.core.errors import (
    BoundsEscapeError,
    DomainViolation,
    NonConvergenceError,
    ParameterError,
    UnknownSymbolError,
    UnregisteredSystemError,
)
from src.logic.calculus import differentiate
from src.logic.terms import Term, contains_flow, term_variables
from src.numerics.evaluate import Evaluator, compile_term
from src.numerics.interval import Box, Interval, interval_sum

logger = logging.getLogger(__name__)

Vector = List[Interval]
IntervalMatrix = List[List[Interval]]

_INFLATION = 1.5
_PICARD_ATTEMPTS = 4
_GROWTH = 2.0
_MAX_STEP = 0.25


@dataclass(frozen=True)
class OdeSystem:
    """Autonomous system x' = f(x) with state bounds X and an optional Lipschitz bound"""

    name: str
    variables: Tuple[str, ...]
    rhs: Tuple[Term, ...]
    bounds: Box
    lipschitz: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "rhs", tuple(self.rhs))
        if len(self.variables) != len(self.rhs):
            raise ParameterError(f"system {self.name} needs one right-hand side per state variable")
        if len(set(self.variables)) != len(self.variables):
            raise ParameterError(f"system {self.name} declares a state variable twice")
        missing = [v for v in self.variables if v not in self.bounds]
        if missing:
            raise ParameterError(f"system {self.name} has no bounds for {missing}")
        object.__setattr__(self, "bounds", Box((v, self.bounds[v]) for v in self.variables))
        for iv in self.bounds.values():
            if not (math.isfinite(iv.lo) and math.isfinite(iv.hi)):
                raise ParameterError(f"state bounds of {self.name} must be finite")
        for f in self.rhs:
            extra = term_variables(f) - set(self.variables)
            if extra:
                raise ParameterError(f"right-hand side of {self.name} uses non-state variables {sorted(extra)}")
            if contains_flow(f):
                raise ParameterError(f"right-hand side of {self.name} contains a flow term")
        if self.lipschitz is not None and not self.lipschitz > 0:
            raise ParameterError("a Lipschitz constant must be positive")

    def __hash__(self) -> int:
        return self._fingerprint

    @cached_property
    def _fingerprint(self) -> int:
        return hash((self.name, self.variables, self.rhs, self.bounds, self.lipschitz))

    @property
    def dimension(self) -> int:
        return len(self.variables)

    @cached_property
    def rhs_evaluators(self) -> Tuple[Evaluator, ...]:
        return tuple(compile_term(f) for f in self.rhs)

    @cached_property
    def jacobian(self) -> Optional[Tuple[Tuple[Term, ...], ...]]:
        """Symbolic partials df_i/dx_j, or None when a partial leaves the library"""
        try:
            return tuple(tuple(differentiate(f, v) for v in self.variables) for f in self.rhs)
        except UnknownSymbolError as e:
            logger.debug(f"No symbolic Jacobian for {self.name}: {e}")
            return None

    @cached_property
    def jacobian_evaluators(self) -> Optional[Tuple[Tuple[Evaluator, ...], ...]]:
        if self.jacobian is None:
            return None
        return tuple(tuple(compile_term(d) for d in row) for row in self.jacobian)

    @cached_property
    def domain(self) -> Box:
        """State bounds scaled about their centers by the escape margin"""
        margin = settings.escape_margin
        pairs = []
        for name, iv in self.bounds.items():
            radius = max(iv.width / 2, 1.0)
            pairs.append((name, Interval(iv.lo - margin * radius, iv.hi + margin * radius)))
        return Box(pairs)

    @cached_property
    def step_lipschitz(self) -> float:
        if self.lipschitz is not None:
            return self.lipschitz
        try:
            return derive_lipschitz(self)
        except (ParameterError, DomainViolation) as e:
            logger.debug(f"Using unit Lipschitz bound for {self.name}: {e}")
            return 1.0

    def env(self, values: Sequence[Interval]) -> Dict[str, Interval]:
        return dict(zip(self.variables, values))

    def evaluate_rhs(self, values: Sequence[Interval]) -> Vector:
        env = self.env(values)
        return [f(env) for f in self.rhs_evaluators]

    def evaluate_jacobian(self, values: Sequence[Interval]) -> Optional[IntervalMatrix]:
        rows = self.jacobian_evaluators
        if rows is None:
            return None
        env = self.env(values)
        return [[d(env) for d in row] for row in rows]


def derive_lipschitz(s: OdeSystem) -> float:
    """Upper bound of the infinity norm of the Jacobian over the state bounds"""
    matrix = s.evaluate_jacobian(list(s.bounds.values()))
    if matrix is None:
        if s.lipschitz is not None:
            return s.lipschitz
        raise ParameterError(f"system {s.name} needs a user Lipschitz constant")
    return max((interval_sum(abs(d) for d in row).hi for row in matrix), default=0.0)


def check_lipschitz(s: OdeSystem) -> Optional[float]:
    """Compare a user constant with the derived bound; returns the derived bound when available"""
    if s.jacobian is None:
        return None
    derived = derive_lipschitz(s)
    if s.lipschitz is not None and derived > s.lipschitz:
        logger.warning(
            f"Lipschitz constant {s.lipschitz} of {s.name} is below the interval Jacobian bound {derived:.6g}"
        )
    return derived


# ----------------------------------------------------------------------
# Registry
# ----------------------------------------------------------------------
_REGISTRY: Dict[str, OdeSystem] = {}
_REGISTRY_LOCK = threading.Lock()


def register_system(s: OdeSystem) -> OdeSystem:
    with _REGISTRY_LOCK:
        existing = _REGISTRY.get(s.name)
        if existing is not None and existing != s:
            logger.warning(f"Replacing registered system {s.name}")
        _REGISTRY[s.name] = s
    return s


def get_system(name: str) -> OdeSystem:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnregisteredSystemError(f"ODE system {name!r} is not registered") from None


def clear_registry() -> None:
    with _REGISTRY_LOCK:
        _REGISTRY.clear()
    _cached_tube.cache_clear()


# ----------------------------------------------------------------------
# Flow tubes
# ----------------------------------------------------------------------
def _fits(box: Sequence[Interval], bounds: Sequence[Interval]) -> bool:
    return all(b.is_subset(x) for b, x in zip(box, bounds))


def _widen(iv: Interval, factor: float) -> Interval:
    radius = iv.width / 2 * factor + 1e-12 * (1.0 + iv.magnitude)
    return Interval(iv.mid - radius, iv.mid + radius).hull(iv)


def _meet(a: Sequence[Interval], b: Sequence[Interval]) -> Vector:
    out = []
    for x, y in zip(a, b):
        m = x.intersect(y)
        out.append(x if m is None else m)
    return out


@dataclass
class _Step:
    """Lohner state at t0 and the a-priori enclosure over [t0, t0 + h]"""

    t0: float
    h: float
    center: np.ndarray
    basis: Optional[np.ndarray]
    error: Vector
    state: Vector
    apriori: Vector


def _dyadic_floor(x: float) -> float:
    return float(2.0 ** math.floor(math.log2(x)))


class FlowTube:
    """Validated enclosure of every solution starting in an initial box.

    Step sizes are dyadic, so step boundaries are exact binary floats. Queries
    and integration share one reentrant lock.
    """

    def __init__(self, system: OdeSystem, x0: Sequence[Interval], tol: float, horizon: float):
        if not tol > 0:
            raise ParameterError("ODE tolerance must be positive")
        self.system = system
        self.tol = tol
        self.horizon = horizon
        self.n = system.dimension
        self.bounds = list(system.bounds.values())
        self.domain = list(system.domain.values())
        self.x0 = list(x0)
        self.escape: Optional[Tuple[float, float]] = None
        self.hard_end: Optional[float] = None
        self._lock = threading.RLock()
        self._steps: List[_Step] = []
        lipschitz = system.step_lipschitz
        self._h = _dyadic_floor(min(0.1, 1.0 / (4.0 * lipschitz)) if lipschitz > 0 else 0.1)
        self._h_min = _dyadic_floor(1e-7 * max(1.0, horizon))

        center = np.array([iv.mid for iv in self.x0])
        self._radius = [iv - float(c) for iv, c in zip(self.x0, center)]
        self._t = 0.0
        self._center = center
        self._basis: Optional[np.ndarray] = np.eye(self.n) if system.jacobian_evaluators is not None else None
        self._error: Vector = [Interval(0.0, 0.0)] * self.n
        self._state: Vector = list(self.x0)
        if not _fits(self.x0, self.domain):
            self.hard_end = 0.0
        if not _fits(self.x0, self.bounds):
            self.escape = (0.0, 0.0)

    # ------------------------------------------------------------------
    # Integration
    # ------------------------------------------------------------------
    def _apriori(self, state: Vector, h: float) -> Optional[Vector]:
        """Picard enclosure of all solutions from ``state`` over [0, h], or None"""
        span = Interval(0.0, h)
        try:
            guess = [s + span * f for s, f in zip(state, self.system.evaluate_rhs(state))]
            for _ in range(_PICARD_ATTEMPTS):
                candidate = []
                for g, d in zip(guess, self.domain):
                    clipped = _widen(g, _INFLATION).intersect(d)
                    if clipped is None:
                        return None
                    candidate.append(clipped)
                image = [s + span * f for s, f in zip(state, self.system.evaluate_rhs(candidate))]
                if _fits(image, candidate):
                    return image
                guess = image
        except DomainViolation:
            return None
        return None

    def _budget(self, h: float) -> float:
        spread = max((iv.width for iv in self._state), default=0.0)
        return h * (self.tol / self.horizon + self.system.step_lipschitz * spread / 8.0)

    def _taylor(self, center: np.ndarray, state: Vector, apriori: Vector, dt: Interval) -> Tuple[Vector, Vector, IntervalMatrix]:
        """Second-order image of the center, its remainder, and M = I + dt J(state)"""
        point = [Interval(float(c), float(c)) for c in center]
        f_center = self.system.evaluate_rhs(point)
        jac_b = self.system.evaluate_jacobian(apriori)
        jac_x = self.system.evaluate_jacobian(state)
        if jac_b is None or jac_x is None:
            raise ParameterError(f"system {self.system.name} has no Jacobian")
        f_b = self.system.evaluate_rhs(apriori)
        half_dt2 = dt * dt * 0.5
        moved, remainder = [], []
        for i in range(self.n):
            r = half_dt2 * interval_sum(jac_b[i][j] * f_b[j] for j in range(self.n))
            remainder.append(r)
            moved.append(point[i] + dt * f_center[i] + r)
        one, zero = Interval(1.0, 1.0), Interval(0.0, 0.0)
        m = [[(one if i == j else zero) + dt * jac_x[i][j] for j in range(self.n)] for i in range(self.n)]
        return moved, remainder, m

    def _linear_part(self, m: IntervalMatrix, basis: np.ndarray, i: int, j: int) -> Interval:
        return interval_sum(m[i][k] * float(basis[k][j]) for k in range(self.n))

    def _image(self, step: _Step, dt: Interval) -> Vector:
        """Enclosure of all solutions of a recorded step after dt"""
        if dt.hi <= 0.0:
            return step.state
        f_b = self.system.evaluate_rhs(step.apriori)
        if step.basis is None:
            return _meet([s + dt * f for s, f in zip(step.state, f_b)], step.apriori)
        moved, _, m = self._taylor(step.center, step.state, step.apriori, dt)
        out = []
        for i in range(self.n):
            acc = moved[i]
            for j in range(self.n):
                acc = acc + self._linear_part(m, step.basis, i, j) * self._radius[j] + m[i][j] * step.error[j]
            out.append(acc)
        return _meet(out, step.apriori)

    def _lohner_step(self, h: float, apriori: Vector) -> Optional[Tuple[np.ndarray, np.ndarray, Vector, Vector, bool]]:
        assert self._basis is not None
        dt = Interval(h, h)
        moved, remainder, m = self._taylor(self._center, self._state, apriori, dt)
        spread = max((r.width for r in remainder), default=0.0)
        budget = self._budget(h)
        if spread > budget and h / 2 >= self._h_min:
            return None
        jac_c = self.system.evaluate_jacobian([Interval(float(c), float(c)) for c in self._center])
        assert jac_c is not None
        jmid = np.array([[d.mid for d in row] for row in jac_c])
        new_basis = (np.eye(self.n) + h * jmid) @ self._basis
        new_center = np.array([iv.mid for iv in moved])
        new_error = []
        for i in range(self.n):
            total = moved[i] - float(new_center[i])
            for j in range(self.n):
                total = total + (self._linear_part(m, self._basis, i, j) - float(new_basis[i][j])) * self._radius[j]
                total = total + m[i][j] * self._error[j]
            new_error.append(total)
        enclosure = []
        for i in range(self.n):
            acc = Interval.point(float(new_center[i])) + new_error[i]
            for j in range(self.n):
                acc = acc + float(new_basis[i][j]) * self._radius[j]
            enclosure.append(acc)
        return new_center, new_basis, new_error, _meet(enclosure, apriori), spread <= budget / 4

    def _euler_step(self, h: float, apriori: Vector) -> Optional[Tuple[np.ndarray, None, Vector, Vector, bool]]:
        f_b = self.system.evaluate_rhs(apriori)
        f_x = self.system.evaluate_rhs(self._state)
        growth = h * max((fb.width - fx.width for fb, fx in zip(f_b, f_x)), default=0.0)
        budget = self._budget(h)
        if growth > budget and h / 2 >= self._h_min:
            return None
        state = _meet([s + Interval(h, h) * f for s, f in zip(self._state, f_b)], apriori)
        return np.array([iv.mid for iv in state]), None, self._error, state, growth <= budget / 4

    def _advance(self) -> None:
        h = min(self._h, _MAX_STEP, self.horizon - self._t)
        while True:
            apriori = self._apriori(self._state, h)
            result = None
            if apriori is not None:
                try:
                    if self._basis is not None:
                        result = self._lohner_step(h, apriori)
                    else:
                        result = self._euler_step(h, apriori)
                except DomainViolation:
                    result = None
            if result is not None and apriori is not None:
                break
            if h / 2 < self._h_min:
                if apriori is None and self._steps == [] and _fits(self._state, self.bounds):
                    raise NonConvergenceError(
                        f"Picard iteration for {self.system.name} does not contract at step {h:.3g}"
                    )
                self.hard_end = self._t
                logger.debug(f"Tube of {self.system.name} stops at t={self._t:.6g}")
                return
            h /= 2

        new_center, new_basis, new_error, new_state, easy = result
        self._steps.append(_Step(self._t, h, self._center, self._basis, self._error, self._state, apriori))
        if self.escape is None and not _fits(apriori, self.bounds):
            self.escape = (self._t, self._t + h)
            logger.debug(
                f"Tube of {self.system.name} leaves the state bounds in [{self.escape[0]:.6g}, {self.escape[1]:.6g}]"
            )
        self._t += h
        self._center, self._basis, self._error, self._state = new_center, new_basis, new_error, new_state
        self._h = min(h * _GROWTH, _MAX_STEP) if easy else h

    def ensure(self, t: float) -> None:
        """Integrate until time t is covered, the horizon is reached or the domain is left"""
        with self._lock:
            while self._t < t and self.hard_end is None:
                if self._t >= self.horizon:
                    self.hard_end = self._t
                    break
                self._advance()

    # ------------------------------------------------------------------
    # Queries
    # ------------------------------------------------------------------
    def _limit(self, strict: bool) -> float:
        limit = self._t if self.hard_end is None else self.hard_end
        if strict and self.escape is not None:
            limit = min(limit, self.escape[0])
        return limit

    def _check(self, t: Interval, strict: bool) -> None:
        if t.lo < 0:
            raise DomainViolation(f"negative flow time [{t.lo}, {t.hi}]")
        self.ensure(t.hi)
        if t.hi > self._limit(strict):
            if strict and self.escape is not None and t.hi > self.escape[0]:
                raise BoundsEscapeError(f"flow of {self.system.name} leaves its state bounds", self.escape)
            end = self._limit(False)
            raise BoundsEscapeError(f"flow of {self.system.name} leaves its integration domain", (end, end))

    def _step_at(self, t: float) -> int:
        lo, hi = 0, len(self._steps) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self._steps[mid].t0 <= t:
                lo = mid
            else:
                hi = mid - 1
        return lo

    def _state_unchecked(self, t: float) -> Vector:
        if not self._steps or t >= self._t:
            return list(self._state)
        step = self._steps[self._step_at(t)]
        return self._image(step, Interval(t, t) - step.t0)

    def state_at(self, t: float, strict: bool = True) -> Vector:
        """Enclosure of all solutions at the point time t"""
        with self._lock:
            self._check(Interval(t, t), strict)
            return self._state_unchecked(t)

    def _range_in_step(self, step: _Step, a: float, b: float) -> Vector:
        start = self._image(step, Interval(a, a) - step.t0)
        f_b = self.system.evaluate_rhs(step.apriori)
        span = Interval(0.0, (Interval(b, b) - a).hi)
        return _meet([s + span * f for s, f in zip(start, f_b)], step.apriori)

    def segments(self, t: Interval, strict: bool = False) -> Tuple[List[Tuple[Interval, Vector]], float]:
        """Per-step time pieces of t with the range of all solutions over each piece.

        Returns the pieces and the time up to which they cover t; the rest of
        t lies past the end of the tube.
        """
        with self._lock:
            return self._segments(t, strict)

    def _segments(self, t: Interval, strict: bool) -> Tuple[List[Tuple[Interval, Vector]], float]:
        if t.lo < 0:
            raise DomainViolation(f"negative flow time [{t.lo}, {t.hi}]")
        self.ensure(t.hi)
        limit = self._limit(strict)
        if t.lo > limit:
            return [], t.lo
        end = min(limit, t.hi)
        if end <= t.lo:
            return [(Interval(t.lo, t.lo), self._state_unchecked(t.lo))], t.lo
        pieces: List[Tuple[Interval, Vector]] = []
        k = self._step_at(t.lo)
        while k < len(self._steps) and self._steps[k].t0 < end:
            step = self._steps[k]
            a, b = max(t.lo, step.t0), min(end, step.t0 + step.h)
            if a <= b:
                pieces.append((Interval(a, b), self._range_in_step(step, a, b)))
            k += 1
        return pieces, end

    def range_over(self, t: Interval, strict: bool = True) -> Vector:
        """Enclosure of all solutions over the time interval t"""
        if t.is_point:
            return self.state_at(t.lo, strict)
        with self._lock:
            self._check(t, strict)
            pieces, _ = self._segments(t, strict)
        box = pieces[0][1]
        for _, piece in pieces[1:]:
            box = [a.hull(b) for a, b in zip(box, piece)]
        return box

    @property
    def steps(self) -> int:
        return len(self._steps)


def horizon_for(t_hi: float) -> float:
    """Power-of-two integration horizon covering t_hi"""
    if t_hi > settings.t_max:
        raise ParameterError(f"flow time {t_hi} exceeds the configured maximum {settings.t_max}")
    return float(2 ** max(0, math.ceil(math.log2(max(t_hi, 1.0)))))


@lru_cache(maxsize=settings.tube_cache_size)
def _cached_tube(system: OdeSystem, x0: Tuple[Tuple[float, float], ...], tol: float, horizon: float) -> FlowTube:
    return FlowTube(system, [Interval(lo, hi) for lo, hi in x0], tol, horizon)


def flow_tube(system: OdeSystem, x0: Sequence[Interval], tol: float, horizon: float) -> FlowTube:
    if len(x0) != system.dimension:
        raise ParameterError(f"system {system.name} has {system.dimension} state variables, got {len(x0)}")
    return _cached_tube(system, tuple((iv.lo, iv.hi) for iv in x0), float(tol), float(horizon))


def _initial_vector(s: OdeSystem, x0: Box) -> Vector:
    missing = [v for v in s.variables if v not in x0]
    if missing:
        raise ParameterError(f"initial box misses {missing}")
    return [x0[v] for v in s.variables]


def flow_enclosure(s: OdeSystem, x0: Box, t: Interval, tol: Optional[float] = None) -> Box:
    """Box containing every solution from x0 at every time in t.

    Raises:
        BoundsEscapeError: when the enclosure leaves the state bounds before t ends
        NonConvergenceError: when no a-priori enclosure exists at the minimum step
    """
    tolerance = settings.tol_factor * settings.delta if tol is None else tol
    initial = _initial_vector(s, x0)
    if not _fits(initial, list(s.bounds.values())):
        raise BoundsEscapeError(f"initial box is outside the state bounds of {s.name}", (0.0, 0.0))
    tube = flow_tube(s, initial, tolerance, horizon_for(t.hi))
    return Box(zip(s.variables, tube.range_over(t, strict=True)))


def flow_component(
    system: str, x0: Sequence[Interval], t: Interval, component: int, tol: float, strict: bool = True
) -> Interval:
    """One state component of the flow of a registered system"""
    s = get_system(system)
    if not 0 <= component < s.dimension:
        raise ParameterError(f"system {system} has no component {component}")
    tube = flow_tube(s, x0, tol, horizon_for(t.hi))
    return tube.range_over(t, strict=strict)[component]


def flow_deviation(s: OdeSystem, x0: Box, xt: Box, t: Interval, tol: Optional[float] = None) -> Interval:
    """Enclosure of the Euclidean distance between xt and the flow from x0 after t"""
    image = flow_enclosure(s, x0, t, tol)
    return interval_sum((xt[v] - image[v]) ** 2 for v in s.variables).sqrt()
