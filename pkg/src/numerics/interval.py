"""
Outward-rounded interval arithmetic over binary floats, and named-variable boxes.

Endpoints are IEEE doubles. Sums and products are computed with error-free
transformations so a result is only widened when the floating operation was
actually inexact; exactly representable results (in particular exact zeros)
stay points. Transcendental kernels come from ``mpmath``'s interval context
at the configured working precision and are widened by one ulp on each side.
"""
from __future__ import annotations

import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, Iterator, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from mpmath import iv as _IV

from src.core.config import settings
from src.core.errors import DomainViolation, ParameterError

Number = Union[int, float, Fraction]

_INF = float("inf")
_SPLITTER = 134217729.0  # 2**27 + 1
_SAFE_FACTOR = 2.0**500
_SAFE_PRODUCT = 2.0**-900

_IV.prec = settings.precision_bits
_PRECISION_LOCK = threading.Lock()


def current_precision() -> int:
    """Bits of the transcendental kernels"""
    return int(_IV.prec)


@contextmanager
def working_precision(bits: int) -> Iterator[None]:
    """Run the transcendental kernels at ``bits`` of precision, restoring the old value on exit"""
    if bits < 24:
        raise ParameterError(f"working precision must be at least 24 bits, got {bits}")
    with _PRECISION_LOCK:
        saved = _IV.prec
        _IV.prec = bits
    try:
        yield
    finally:
        with _PRECISION_LOCK:
            _IV.prec = saved


def next_down(x: float) -> float:
    return float(np.nextafter(x, -_INF))


def next_up(x: float) -> float:
    return float(np.nextafter(x, _INF))


def _two_sum(a: float, b: float) -> Tuple[float, float]:
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _split(a: float) -> Tuple[float, float]:
    c = _SPLITTER * a
    high = c - (c - a)
    return high, a - high


def _two_product(a: float, b: float) -> Tuple[float, float]:
    p = a * b
    a_hi, a_lo = _split(a)
    b_hi, b_lo = _split(b)
    err = a_lo * b_lo - (((p - a_hi * b_hi) - a_lo * b_hi) - a_hi * b_lo)
    return p, err


def _overflowed(result: float, *operands: float) -> bool:
    return math.isinf(result) and not any(math.isinf(v) for v in operands)


def _add_down(a: float, b: float) -> float:
    s, err = _two_sum(a, b)
    if math.isnan(s):
        return -_INF
    if math.isinf(s):
        return next_down(s) if _overflowed(s, a, b) else s
    return next_down(s) if err < 0 else s


def _add_up(a: float, b: float) -> float:
    s, err = _two_sum(a, b)
    if math.isnan(s):
        return _INF
    if math.isinf(s):
        return next_up(s) if _overflowed(s, a, b) else s
    return next_up(s) if err > 0 else s


def _product_is_checkable(a: float, b: float, p: float) -> bool:
    return abs(a) < _SAFE_FACTOR and abs(b) < _SAFE_FACTOR and abs(p) > _SAFE_PRODUCT


def _mul_down(a: float, b: float) -> float:
    if a == 0.0 or b == 0.0:
        return 0.0
    p = a * b
    if math.isinf(p):
        return next_down(p) if _overflowed(p, a, b) else p
    if _product_is_checkable(a, b, p):
        _, err = _two_product(a, b)
        return next_down(p) if err < 0 else p
    return next_down(p)


def _mul_up(a: float, b: float) -> float:
    if a == 0.0 or b == 0.0:
        return 0.0
    p = a * b
    if math.isinf(p):
        return next_up(p) if _overflowed(p, a, b) else p
    if _product_is_checkable(a, b, p):
        _, err = _two_product(a, b)
        return next_up(p) if err > 0 else p
    return next_up(p)


def _quotient_is_exact(a: float, b: float, q: float) -> bool:
    if not math.isfinite(q) or not _product_is_checkable(q, b, a if a != 0.0 else 1.0):
        return q == 0.0 and a == 0.0
    p, err = _two_product(q, b)
    return p == a and err == 0.0


def _div_down(a: float, b: float) -> float:
    if a == 0.0:
        return 0.0
    if math.isinf(b):
        return 0.0 if not math.isinf(a) else -_INF
    q = a / b
    if math.isinf(q):
        return next_down(q) if _overflowed(q, a, b) else q
    return q if _quotient_is_exact(a, b, q) else next_down(q)


def _div_up(a: float, b: float) -> float:
    if a == 0.0:
        return 0.0
    if math.isinf(b):
        return 0.0 if not math.isinf(a) else _INF
    q = a / b
    if math.isinf(q):
        return next_up(q) if _overflowed(q, a, b) else q
    return q if _quotient_is_exact(a, b, q) else next_up(q)


def _sqrt_bounds(x: float) -> Tuple[float, float]:
    if math.isinf(x):
        return _INF, _INF
    r = math.sqrt(x)
    if r == 0.0:
        return 0.0, 0.0
    p, err = _two_product(r, r)
    if p == x and err == 0.0:
        return r, r
    return max(0.0, next_down(r)), next_up(r)


def _pow_down(a: float, n: int) -> float:
    """Lower bound of a**n for a >= 0"""
    result = 1.0
    for _ in range(n):
        result = _mul_down(result, a)
    return result


def _pow_up(a: float, n: int) -> float:
    """Upper bound of a**n for a >= 0"""
    result = 1.0
    for _ in range(n):
        result = _mul_up(result, a)
    return result


@dataclass(frozen=True)
class Interval:
    """Closed real interval [lo, hi] with float endpoints rounded outward"""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        if math.isnan(self.lo) or math.isnan(self.hi) or self.lo > self.hi:
            raise ValueError(f"Invalid interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, value: Number) -> "Interval":
        """Tightest float interval containing an exact number"""
        if isinstance(value, Fraction):
            approx = float(value)
            exact = Fraction(approx)
            if exact == value:
                return cls(approx, approx)
            if exact < value:
                return cls(approx, next_up(approx))
            return cls(next_down(approx), approx)
        return cls(float(value), float(value))

    @classmethod
    def entire(cls) -> "Interval":
        return cls(-_INF, _INF)

    @classmethod
    def hull_of(cls, intervals: Iterable["Interval"]) -> "Interval":
        items = list(intervals)
        if not items:
            raise ValueError("hull of an empty collection")
        return cls(min(i.lo for i in items), max(i.hi for i in items))

    # ------------------------------------------------------------------
    # Geometry
    # ------------------------------------------------------------------
    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        if math.isinf(self.lo) or math.isinf(self.hi):
            if math.isinf(self.lo) and math.isinf(self.hi):
                return 0.0
            return self.hi if math.isinf(self.lo) else self.lo
        m = 0.5 * self.lo + 0.5 * self.hi
        return min(max(m, self.lo), self.hi)

    @property
    def magnitude(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def contains_zero(self) -> bool:
        return self.lo <= 0.0 <= self.hi

    def is_subset(self, other: "Interval") -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def intersect(self, other: "Interval") -> Optional["Interval"]:
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return Interval(lo, hi) if lo <= hi else None

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def inflate(self, amount: float) -> "Interval":
        return Interval(_add_down(self.lo, -amount), _add_up(self.hi, amount))

    def bisect(self) -> Tuple["Interval", "Interval"]:
        m = self.mid
        return Interval(self.lo, m), Interval(m, self.hi)

    # ------------------------------------------------------------------
    # Arithmetic
    # ------------------------------------------------------------------
    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __add__(self, other: Union["Interval", Number]) -> "Interval":
        o = _coerce(other)
        return Interval(_add_down(self.lo, o.lo), _add_up(self.hi, o.hi))

    __radd__ = __add__

    def __sub__(self, other: Union["Interval", Number]) -> "Interval":
        o = _coerce(other)
        return Interval(_add_down(self.lo, -o.hi), _add_up(self.hi, -o.lo))

    def __rsub__(self, other: Number) -> "Interval":
        return _coerce(other) - self

    def __mul__(self, other: Union["Interval", Number]) -> "Interval":
        o = _coerce(other)
        pairs = ((self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi))
        return Interval(min(_mul_down(a, b) for a, b in pairs), max(_mul_up(a, b) for a, b in pairs))

    __rmul__ = __mul__

    def __truediv__(self, other: Union["Interval", Number]) -> "Interval":
        o = _coerce(other)
        if o.contains_zero():
            raise DomainViolation(f"division by an interval containing zero: [{o.lo}, {o.hi}]")
        pairs = ((self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi))
        return Interval(min(_div_down(a, b) for a, b in pairs), max(_div_up(a, b) for a, b in pairs))

    def __rtruediv__(self, other: Number) -> "Interval":
        return _coerce(other) / self

    def __pow__(self, n: int) -> "Interval":
        if not isinstance(n, int):
            raise ParameterError("interval powers take integer exponents")
        if n == 0:
            return Interval(1.0, 1.0)
        if n < 0:
            return Interval(1.0, 1.0) / (self**-n)
        if n % 2 == 1:
            lo = _pow_down(self.lo, n) if self.lo >= 0 else -_pow_up(-self.lo, n)
            hi = _pow_up(self.hi, n) if self.hi >= 0 else -_pow_down(-self.hi, n)
            return Interval(lo, hi)
        if self.lo >= 0:
            return Interval(_pow_down(self.lo, n), _pow_up(self.hi, n))
        if self.hi <= 0:
            return Interval(_pow_down(-self.hi, n), _pow_up(-self.lo, n))
        return Interval(0.0, _pow_up(self.magnitude, n))

    def __abs__(self) -> "Interval":
        if self.lo >= 0:
            return self
        if self.hi <= 0:
            return -self
        return Interval(0.0, self.magnitude)

    def sqrt(self) -> "Interval":
        if self.lo < 0:
            raise DomainViolation(f"square root of an interval with negative part: [{self.lo}, {self.hi}]")
        return Interval(_sqrt_bounds(self.lo)[0], _sqrt_bounds(self.hi)[1])

    def exp(self) -> "Interval":
        lo = 0.0 if self.lo < -800.0 else _kernel_bounds(_IV.exp, self.lo)[0]
        hi = _INF if self.hi > 800.0 else _kernel_bounds(_IV.exp, self.hi)[1]
        return Interval(max(0.0, lo), hi)

    def sin(self) -> "Interval":
        return self._periodic(_IV.sin)

    def cos(self) -> "Interval":
        return self._periodic(_IV.cos)

    def _periodic(self, kernel: object) -> "Interval":
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.width > 7.0:
            return Interval(-1.0, 1.0)
        value = kernel(_IV.mpf([self.lo, self.hi]))  # type: ignore[operator]
        return Interval(max(-1.0, next_down(float(value.a))), min(1.0, next_up(float(value.b))))

    @staticmethod
    def minimum(a: "Interval", b: "Interval") -> "Interval":
        return Interval(min(a.lo, b.lo), min(a.hi, b.hi))

    @staticmethod
    def maximum(a: "Interval", b: "Interval") -> "Interval":
        return Interval(max(a.lo, b.lo), max(a.hi, b.hi))

    def __repr__(self) -> str:
        return f"[{self.lo!r}, {self.hi!r}]"


def _kernel_bounds(kernel: object, x: float) -> Tuple[float, float]:
    value = kernel(_IV.mpf([x, x]))  # type: ignore[operator]
    return next_down(float(value.a)), next_up(float(value.b))


def _coerce(value: Union[Interval, Number]) -> Interval:
    return value if isinstance(value, Interval) else Interval.point(value)


def interval_sum(items: Iterable[Interval]) -> Interval:
    total = Interval(0.0, 0.0)
    for item in items:
        total = total + item
    return total


class Box(Mapping[str, Interval]):
    """Ordered, immutable map from variable names to intervals"""

    __slots__ = ("_items", "_index", "_hash")

    def __init__(
        self, items: Union[Mapping[str, Interval], Iterable[Tuple[str, Interval]]] = ()
    ) -> None:
        pairs = tuple(items.items()) if isinstance(items, Mapping) else tuple(items)
        self._items: Tuple[Tuple[str, Interval], ...] = pairs
        self._index: Dict[str, Interval] = dict(pairs)
        if len(self._index) != len(pairs):
            raise ParameterError("duplicate variable in box")
        self._hash: Optional[int] = None

    @classmethod
    def from_bounds(cls, bounds: Mapping[str, Tuple[float, float]]) -> "Box":
        return cls((name, Interval(lo, hi)) for name, (lo, hi) in bounds.items())

    def __getitem__(self, name: str) -> Interval:
        return self._index[name]

    def __iter__(self) -> Iterator[str]:
        return (name for name, _ in self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self._items)
        return self._hash

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Box):
            return NotImplemented
        return self._items == other._items

    def __repr__(self) -> str:
        inner = ", ".join(f"{name}: {iv!r}" for name, iv in self._items)
        return f"Box({{{inner}}})"

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self._items)

    def width(self, names: Optional[Iterable[str]] = None) -> float:
        selected = self.names if names is None else tuple(names)
        return max((self._index[n].width for n in selected), default=0.0)

    def widest_axis(self, candidates: Optional[Iterable[str]] = None) -> Optional[str]:
        """Widest variable among candidates; ties go to the lexicographically first name"""
        names = sorted(self.names if candidates is None else candidates)
        best: Optional[str] = None
        for name in names:
            if best is None or self._index[name].width > self._index[best].width:
                best = name
        return best

    def split(self, axis: str) -> Tuple["Box", "Box"]:
        current = self._index[axis]
        if not current.width > 0:
            raise ParameterError(f"cannot split zero-width axis {axis}")
        left, right = current.bisect()
        return self.updated({axis: left}), self.updated({axis: right})

    def updated(self, changes: Mapping[str, Interval]) -> "Box":
        pairs = [(name, changes.get(name, iv)) for name, iv in self._items]
        pairs.extend((name, iv) for name, iv in changes.items() if name not in self._index)
        return Box(pairs)

    def merged(self, other: "Box") -> "Box":
        return self.updated(other)

    def restricted(self, names: Iterable[str]) -> "Box":
        keep = set(names)
        return Box((n, iv) for n, iv in self._items if n in keep)

    def without(self, names: Iterable[str]) -> "Box":
        drop = set(names)
        return Box((n, iv) for n, iv in self._items if n not in drop)

    def midpoint(self) -> Dict[str, float]:
        return {name: iv.mid for name, iv in self._items}

    def intersect(self, other: "Box") -> Optional["Box"]:
        pairs = []
        for name, iv in self._items:
            if name in other:
                meet = iv.intersect(other[name])
                if meet is None:
                    return None
                pairs.append((name, meet))
            else:
                pairs.append((name, iv))
        return Box(pairs)

    def is_subset(self, other: "Box") -> bool:
        return all(name in other and iv.is_subset(other[name]) for name, iv in self._items)

    def hull(self, other: "Box") -> "Box":
        return Box((name, iv.hull(other[name])) for name, iv in self._items)

    def to_dict(self) -> Dict[str, Tuple[float, float]]:
        return {name: (iv.lo, iv.hi) for name, iv in self._items}


def point_box(assignment: Mapping[str, Number]) -> Box:
    return Box((name, Interval.point(value)) for name, value in assignment.items())


def split(b: Box, axis: str) -> Tuple[Box, Box]:
    """Bisect a box at the midpoint of one axis"""
    if axis not in b:
        raise ParameterError(f"unknown axis {axis}")
    return b.split(axis)


def box_width(b: Box) -> float:
    return b.width()


def widest_axis(b: Box, candidates: Optional[Sequence[str]] = None) -> Optional[str]:
    return b.widest_axis(candidates)
