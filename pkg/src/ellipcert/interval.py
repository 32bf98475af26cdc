"""Interval arithmetic with outward rounding.

Every operation computes the correctly rounded binary64 result and steps one
float outward with ``nextafter`` unless that result is provably exact (an
error-free sum transformation for + and -, a rational check for * and /).  No rounding-mode switching is involved,
so values are safe to share between threads.

Two flavours live here:

* :class:`Interval`, a scalar closed interval ``[lo, hi]``.
* :class:`IntervalArray`, the same thing over numpy arrays, plus a
  midpoint-radius matrix product (:func:`imatmul`) with an a priori bound on
  the floating-point dot-product error.
"""

from __future__ import annotations

import math
import sys
from decimal import ROUND_CEILING, ROUND_FLOOR, Decimal, InvalidOperation
from fractions import Fraction
from typing import Iterable, Union

import numpy as np

from .errors import DivByZeroInterval, EmptyIntersection, NegativeSqrt

_INF = math.inf
_U = 2.0 ** -53          # unit roundoff
_ETA = 2.0 ** -1074      # smallest subnormal


def _down(x: float) -> float:
    return math.nextafter(x, -_INF)


def _up(x: float) -> float:
    return math.nextafter(x, _INF)


def _sum_err(a: float, b: float, s: float) -> float:
    """Sign-exact error of s = fl(a + b) (Knuth's TwoSum)."""
    bb = s - a
    return (a - (s - bb)) + (b - bb)


def _add_lo(a: float, b: float) -> float:
    s = a + b
    return s if not math.isfinite(s) or _sum_err(a, b, s) >= 0 else _down(s)


def _add_hi(a: float, b: float) -> float:
    s = a + b
    return s if not math.isfinite(s) or _sum_err(a, b, s) <= 0 else _up(s)


def _directed(cands, vals, exact, upper: bool) -> float:
    """Round the extreme of ``vals`` outward unless every tied candidate is exact."""
    m = max(vals) if upper else min(vals)
    if not math.isfinite(m):
        return m
    for c, v in zip(cands, vals):
        if v == m:
            e = exact(*c)
            if (e > m) if upper else (e < m):
                return _up(m) if upper else _down(m)
    return m


def _fmul(x, y):
    return Fraction(x) * Fraction(y)


def _fdiv(x, y):
    return Fraction(x) / Fraction(y)


def _fraction_enclosure(q: Fraction) -> tuple[float, float]:
    """Tightest float pair enclosing an exact rational."""
    f = float(q)  # correctly rounded
    fq = Fraction(f)
    if fq == q:
        return f, f
    if fq < q:
        return f, _up(f)
    return _down(f), f


Number = Union[int, float, Fraction]


class Interval:
    """Closed interval ``[lo, hi]`` with finite binary64 endpoints."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo: float, hi: float | None = None):
        lo = float(lo)
        hi = lo if hi is None else float(hi)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError(f"non-finite interval endpoint: [{lo}, {hi}]")
        if lo > hi:
            raise ValueError(f"inverted interval: [{lo}, {hi}]")
        self.lo = lo
        self.hi = hi

    # -- constructors -----------------------------------------------------
    @classmethod
    def coerce(cls, x) -> "Interval":
        if isinstance(x, Interval):
            return x
        if isinstance(x, Fraction):
            return cls(*_fraction_enclosure(x))
        if isinstance(x, int) and not isinstance(x, bool):
            return cls(*_fraction_enclosure(Fraction(x)))
        if isinstance(x, (float, np.floating)):
            return cls(float(x))
        raise TypeError(f"cannot convert {type(x).__name__} to Interval")

    @classmethod
    def from_fraction(cls, q: Fraction) -> "Interval":
        return cls(*_fraction_enclosure(Fraction(q)))

    @classmethod
    def entire(cls) -> "_EntireInterval":
        """Unbounded interval; diagnostics only, never enters arithmetic."""
        return _EntireInterval()

    # -- set operations ---------------------------------------------------
    @property
    def mid(self) -> float:
        m = 0.5 * self.lo + 0.5 * self.hi
        return min(max(m, self.lo), self.hi)

    @property
    def rad(self) -> float:
        m = self.mid
        d = max(self.hi - m, m - self.lo)
        return _up(d) if d > 0 else 0.0

    def width(self) -> float:
        return _up(self.hi - self.lo) if self.hi > self.lo else 0.0

    def mag(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    def mig(self) -> float:
        if self.lo <= 0.0 <= self.hi:
            return 0.0
        return min(abs(self.lo), abs(self.hi))

    def contains(self, x) -> bool:
        if isinstance(x, Interval):
            return self.lo <= x.lo and x.hi <= self.hi
        if isinstance(x, Fraction):
            return Fraction(self.lo) <= x <= Fraction(self.hi)
        return self.lo <= x <= self.hi

    __contains__ = contains

    def hull(self, other) -> "Interval":
        o = Interval.coerce(other)
        return Interval(min(self.lo, o.lo), max(self.hi, o.hi))

    def intersect(self, other) -> "Interval":
        o = Interval.coerce(other)
        lo, hi = max(self.lo, o.lo), min(self.hi, o.hi)
        if lo > hi:
            raise EmptyIntersection(f"{self} and {o} do not intersect")
        return Interval(lo, hi)

    def overlaps(self, other) -> bool:
        o = Interval.coerce(other)
        return max(self.lo, o.lo) <= min(self.hi, o.hi)

    def is_point(self) -> bool:
        return self.lo == self.hi

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, (IntervalArray, np.ndarray)):
            return NotImplemented
        o = Interval.coerce(other)
        return Interval(_add_lo(self.lo, o.lo), _add_hi(self.hi, o.hi))

    __radd__ = __add__

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __pos__(self):
        return self

    def __sub__(self, other):
        if isinstance(other, (IntervalArray, np.ndarray)):
            return NotImplemented
        o = Interval.coerce(other)
        return Interval(_add_lo(self.lo, -o.hi), _add_hi(self.hi, -o.lo))

    def __rsub__(self, other):
        return Interval.coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, (IntervalArray, np.ndarray)):
            return NotImplemented
        o = Interval.coerce(other)
        c = ((self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi))
        p = [x * y for x, y in c]
        lo, hi = _directed(c, p, _fmul, False), _directed(c, p, _fmul, True)
        # the sign of a product is exact even when its magnitude underflows
        if (self.lo >= 0 and o.lo >= 0) or (self.hi <= 0 and o.hi <= 0):
            lo = max(lo, 0.0)
        if (self.lo >= 0 and o.hi <= 0) or (self.hi <= 0 and o.lo >= 0):
            hi = min(hi, 0.0)
        return Interval(lo, hi)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (IntervalArray, np.ndarray)):
            return NotImplemented
        o = Interval.coerce(other)
        if o.lo <= 0.0 <= o.hi:
            raise DivByZeroInterval(f"division by {o}")
        c = ((self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi))
        p = [x / y for x, y in c]
        return Interval(_directed(c, p, _fdiv, False), _directed(c, p, _fdiv, True))

    def __rtruediv__(self, other):
        return Interval.coerce(other) / self

    def __pow__(self, k: int):
        return pow_int(self, k)

    def __abs__(self):
        if self.lo >= 0:
            return self
        if self.hi <= 0:
            return -self
        return Interval(0.0, max(-self.lo, self.hi))

    def sqr(self) -> "Interval":
        return pow_int(self, 2)

    def sqrt(self) -> "Interval":
        return sqrt(self)

    # -- comparisons that are certain ------------------------------------
    def certainly_lt(self, other) -> bool:
        return self.hi < Interval.coerce(other).lo

    def certainly_le(self, other) -> bool:
        return self.hi <= Interval.coerce(other).lo

    def certainly_gt(self, other) -> bool:
        return self.lo > Interval.coerce(other).hi

    def certainly_positive(self) -> bool:
        return self.lo > 0.0

    def __eq__(self, other):
        if not isinstance(other, Interval):
            return NotImplemented
        return self.lo == other.lo and self.hi == other.hi

    def __hash__(self):
        return hash((self.lo, self.hi))

    def __repr__(self):
        return f"Interval({self.lo!r}, {self.hi!r})"

    def __str__(self):
        return f"[{self.lo:.17g}, {self.hi:.17g}]"


class _EntireInterval:
    lo = -_INF
    hi = _INF

    def __repr__(self):
        return "Interval.entire()"

    def contains(self, x) -> bool:
        return True


def add(a, b) -> Interval:
    return Interval.coerce(a) + b


def sub(a, b) -> Interval:
    return Interval.coerce(a) - b


def mul(a, b) -> Interval:
    return Interval.coerce(a) * b


def div(a, b) -> Interval:
    return Interval.coerce(a) / b


def _pow_round(x: float, k: int, upper: bool) -> float:
    """x**k for x >= 0, rounded to the nearest float in the requested direction."""
    e = Fraction(x) ** k
    try:
        v = float(e)  # correctly rounded
    except OverflowError:
        return _INF if upper else sys.float_info.max
    if upper:
        return v if Fraction(v) >= e or not math.isfinite(v) else _up(v)
    if not math.isfinite(v):
        return sys.float_info.max
    return v if Fraction(v) <= e else _down(v)


def _pow_up(x: float, k: int) -> float:
    """Upper bound of x**k for x >= 0."""
    return _pow_round(x, k, True)


def _pow_down(x: float, k: int) -> float:
    """Lower bound of x**k for x >= 0."""
    return _pow_round(x, k, False)


def pow_int(a, k: int) -> Interval:
    """Enclosure of ``{x**k : x in a}`` evaluated case by case."""
    a = Interval.coerce(a)
    if k < 0:
        raise ValueError("negative exponent")
    if k == 0:
        return Interval(1.0)
    if k == 1:
        return a
    lo, hi = a.lo, a.hi
    if k % 2 == 0:
        if lo >= 0:
            return Interval(_pow_down(lo, k), _pow_up(hi, k))
        if hi <= 0:
            return Interval(_pow_down(-hi, k), _pow_up(-lo, k))
        return Interval(0.0, _pow_up(max(-lo, hi), k))
    # odd: monotone increasing
    new_lo = _pow_down(lo, k) if lo >= 0 else -_pow_up(-lo, k)
    new_hi = _pow_up(hi, k) if hi >= 0 else -_pow_down(-hi, k)
    return Interval(new_lo, new_hi)


def sqrt(a) -> Interval:
    a = Interval.coerce(a)
    if a.lo < 0:
        raise NegativeSqrt(f"sqrt of {a}")
    lo = math.sqrt(a.lo)
    hi = math.sqrt(a.hi)
    lo = lo if Fraction(lo) ** 2 == Fraction(a.lo) else max(_down(lo), 0.0)
    hi = hi if Fraction(hi) ** 2 == Fraction(a.hi) else _up(hi)
    return Interval(lo, hi)


def root(a, q: int) -> Interval:
    """Enclosure of the q-th root of a nonnegative interval."""
    a = Interval.coerce(a)
    if a.lo < 0:
        raise NegativeSqrt(f"root of {a}")
    if q == 1:
        return a
    # candidates are within a few ulps; confirm exactly with rationals
    lo = a.lo ** (1.0 / q)
    while lo > 0 and Fraction(lo) ** q > Fraction(a.lo):
        lo = _down(lo)
    hi = a.hi ** (1.0 / q)
    while Fraction(hi) ** q < Fraction(a.hi):
        hi = _up(hi)
    return Interval(max(lo, 0.0), hi)


# pi = 3.14159265358979323846264338327950288...; the two neighbouring doubles
_PI_LO = 3.141592653589793        # 884279719003555 / 2**48, just below pi
_PI_HI = math.nextafter(_PI_LO, 4.0)


def pi_enclosure() -> Interval:
    return Interval(_PI_LO, _PI_HI)


def hull(a, b) -> Interval:
    return Interval.coerce(a).hull(b)


def intersect(a, b) -> Interval:
    return Interval.coerce(a).intersect(b)


def contains(a, x) -> bool:
    return Interval.coerce(a).contains(x)


def mag(a) -> float:
    return Interval.coerce(a).mag()


def width(a) -> float:
    return Interval.coerce(a).width()


# -- decimal I/O --------------------------------------------------------------

def from_decimal(s: str) -> Interval:
    """Tightest interval containing the exact value of a decimal literal."""
    text = s.strip()
    try:
        d = Decimal(text)
    except InvalidOperation as exc:
        raise ValueError(f"malformed decimal: {s!r}") from exc
    if not d.is_finite():
        raise ValueError(f"non-finite decimal: {s!r}")
    return Interval.from_fraction(Fraction(d))


def _format_sig(value: float, digits: int, rounding: str) -> str:
    if value == 0.0:
        return f"{0:.{digits - 1}e}"
    d = Decimal(value)  # exact
    exp = d.adjusted()
    q = Decimal(1).scaleb(exp - digits + 1)
    r = d.quantize(q, rounding=rounding)
    if r.adjusted() != exp:  # carried into a new decade, e.g. 9.99 -> 10.0
        exp = r.adjusted()
        q = Decimal(1).scaleb(exp - digits + 1)
        r = d.quantize(q, rounding=rounding)
    mant = r.scaleb(-exp)
    return f"{mant:.{digits - 1}f}e{exp:+03d}"


def to_decimal_upper(a, digits: int = 9) -> str:
    """Decimal string with ``digits`` significant digits, >= ``a.hi``."""
    return _format_sig(Interval.coerce(a).hi, digits, ROUND_CEILING)


def to_decimal_lower(a, digits: int = 9) -> str:
    """Decimal string with ``digits`` significant digits, <= ``a.lo``."""
    return _format_sig(Interval.coerce(a).lo, digits, ROUND_FLOOR)


def to_json(a: Interval, digits: int = 17) -> dict:
    return {"lo": to_decimal_lower(a, digits), "hi": to_decimal_upper(a, digits)}


def from_json(obj: dict) -> Interval:
    return from_decimal(obj["lo"]).hull(from_decimal(obj["hi"]))


# -- vectorised intervals --------------------------------------------------------

def _vdown(x):
    return np.nextafter(x, -np.inf)


def _vup(x):
    return np.nextafter(x, np.inf)


def _vsum_err(a, b, s):
    with np.errstate(invalid="ignore", over="ignore"):
        bb = s - a
        return (a - (s - bb)) + (b - bb)


def _vadd_lo(a, b):
    with np.errstate(over="ignore"):
        s = a + b
    return np.where(_vsum_err(a, b, s) >= 0, s, _vdown(s))


def _vadd_hi(a, b):
    with np.errstate(over="ignore"):
        s = a + b
    return np.where(_vsum_err(a, b, s) <= 0, s, _vup(s))


def _gamma(k: int) -> float:
    """gamma_k = k u / (1 - k u), the classical dot-product error constant."""
    ku = k * _U
    if ku >= 0.5:
        raise ValueError("dot product too long for a priori error bound")
    return _up(ku / (1.0 - ku))


def _rad_up(x, k: int):
    """Upper bound of a sum of k nonnegative products computed in floats."""
    g = _gamma(k + 2)
    return _vup(x * (1.0 + 2.0 * g) + (k + 1) * _ETA)


def _vpow_up(x, k: int):
    r = np.ones_like(x)
    b = x.copy()
    while k:
        if k & 1:
            r = _vup(r * b)
        k >>= 1
        if k:
            b = _vup(b * b)
    return r


def _vpow_down(x, k: int):
    r = np.ones_like(x)
    b = x.copy()
    while k:
        if k & 1:
            r = np.maximum(_vdown(r * b), 0.0)
        k >>= 1
        if k:
            b = np.maximum(_vdown(b * b), 0.0)
    return r


class IntervalArray:
    """Array of intervals stored as two float64 arrays."""

    __array_priority__ = 100

    def __init__(self, lo, hi=None):
        lo = np.asarray(lo, dtype=np.float64)
        hi = lo if hi is None else np.asarray(hi, dtype=np.float64)
        if lo.shape != hi.shape:
            lo, hi = np.broadcast_arrays(lo, hi)
        self.lo = lo
        self.hi = hi

    @classmethod
    def from_mid_rad(cls, mid, rad) -> "IntervalArray":
        mid = np.asarray(mid, dtype=np.float64)
        rad = np.asarray(rad, dtype=np.float64)
        point = rad == 0
        return cls(np.where(point, mid, _vdown(mid - rad)), np.where(point, mid, _vup(mid + rad)))

    @classmethod
    def from_intervals(cls, items: Iterable[Interval], shape=None) -> "IntervalArray":
        items = list(items)
        lo = np.array([i.lo for i in items])
        hi = np.array([i.hi for i in items])
        if shape is not None:
            lo, hi = lo.reshape(shape), hi.reshape(shape)
        return cls(lo, hi)

    @classmethod
    def coerce(cls, x) -> "IntervalArray":
        if isinstance(x, IntervalArray):
            return x
        if isinstance(x, Interval):
            return cls(np.float64(x.lo), np.float64(x.hi))
        if isinstance(x, (Fraction, int)) and not isinstance(x, bool):
            iv = Interval.coerce(x)
            return cls(np.float64(iv.lo), np.float64(iv.hi))
        return cls(np.asarray(x, dtype=np.float64))

    @property
    def shape(self):
        return self.lo.shape

    def __len__(self):
        return len(self.lo)

    def __getitem__(self, idx):
        lo, hi = self.lo[idx], self.hi[idx]
        if np.ndim(lo) == 0:
            return Interval(float(lo), float(hi))
        return IntervalArray(lo, hi)

    def reshape(self, *shape):
        return IntervalArray(self.lo.reshape(*shape), self.hi.reshape(*shape))

    def transpose(self, *axes):
        return IntervalArray(self.lo.transpose(*axes), self.hi.transpose(*axes))

    @property
    def T(self):
        return IntervalArray(self.lo.T, self.hi.T)

    @property
    def mid(self):
        m = 0.5 * self.lo + 0.5 * self.hi
        return np.clip(m, self.lo, self.hi)

    @property
    def rad(self):
        m = self.mid
        d = np.maximum(self.hi - m, m - self.lo)
        return np.where(d > 0, _vup(d), 0.0)

    def mag(self):
        return np.maximum(np.abs(self.lo), np.abs(self.hi))

    def mig(self):
        return np.where((self.lo <= 0) & (self.hi >= 0), 0.0,
                        np.minimum(np.abs(self.lo), np.abs(self.hi)))

    def width(self):
        return _vup(self.hi - self.lo)

    def hull(self, other) -> "IntervalArray":
        o = IntervalArray.coerce(other)
        return IntervalArray(np.minimum(self.lo, o.lo), np.maximum(self.hi, o.hi))

    def intersect(self, other) -> "IntervalArray":
        o = IntervalArray.coerce(other)
        lo, hi = np.maximum(self.lo, o.lo), np.minimum(self.hi, o.hi)
        if np.any(lo > hi):
            raise EmptyIntersection("interval arrays do not intersect")
        return IntervalArray(lo, hi)

    def contains(self, x) -> np.ndarray:
        if isinstance(x, IntervalArray):
            return (self.lo <= x.lo) & (x.hi <= self.hi)
        x = np.asarray(x)
        return (self.lo <= x) & (x <= self.hi)

    def __add__(self, other):
        o = IntervalArray.coerce(other)
        return IntervalArray(_vadd_lo(self.lo, o.lo), _vadd_hi(self.hi, o.hi))

    __radd__ = __add__

    def __neg__(self):
        return IntervalArray(-self.hi, -self.lo)

    def __sub__(self, other):
        o = IntervalArray.coerce(other)
        return IntervalArray(_vadd_lo(self.lo, -o.hi), _vadd_hi(self.hi, -o.lo))

    def __rsub__(self, other):
        return IntervalArray.coerce(other) - self

    def __mul__(self, other):
        o = IntervalArray.coerce(other)
        p1, p2 = self.lo * o.lo, self.lo * o.hi
        p3, p4 = self.hi * o.lo, self.hi * o.hi
        lo = _vdown(np.minimum(np.minimum(p1, p2), np.minimum(p3, p4)))
        hi = _vup(np.maximum(np.maximum(p1, p2), np.maximum(p3, p4)))
        a_nn, a_np = self.lo >= 0, self.hi <= 0
        b_nn, b_np = o.lo >= 0, o.hi <= 0
        lo = np.where((a_nn & b_nn) | (a_np & b_np), np.maximum(lo, 0.0), lo)
        hi = np.where((a_nn & b_np) | (a_np & b_nn), np.minimum(hi, 0.0), hi)
        zero = (a_nn & a_np) | (b_nn & b_np)
        return IntervalArray(np.where(zero, 0.0, lo), np.where(zero, 0.0, hi))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = IntervalArray.coerce(other)
        if np.any((o.lo <= 0) & (o.hi >= 0)):
            raise DivByZeroInterval("division by interval containing zero")
        p1, p2 = self.lo / o.lo, self.lo / o.hi
        p3, p4 = self.hi / o.lo, self.hi / o.hi
        lo = _vdown(np.minimum(np.minimum(p1, p2), np.minimum(p3, p4)))
        hi = _vup(np.maximum(np.maximum(p1, p2), np.maximum(p3, p4)))
        a_nn, a_np = self.lo >= 0, self.hi <= 0
        b_nn, b_np = o.lo >= 0, o.hi <= 0
        lo = np.where((a_nn & b_nn) | (a_np & b_np), np.maximum(lo, 0.0), lo)
        hi = np.where((a_nn & b_np) | (a_np & b_nn), np.minimum(hi, 0.0), hi)
        return IntervalArray(lo, hi)

    def __rtruediv__(self, other):
        return IntervalArray.coerce(other) / self

    def __abs__(self):
        lo = np.where(self.lo >= 0, self.lo, np.where(self.hi <= 0, -self.hi, 0.0))
        hi = np.maximum(np.abs(self.lo), np.abs(self.hi))
        return IntervalArray(lo, hi)

    def sqr(self) -> "IntervalArray":
        return self.pow_int(2)

    def pow_int(self, k: int) -> "IntervalArray":
        if k < 0:
            raise ValueError("negative exponent")
        if k == 0:
            return IntervalArray(np.ones_like(self.lo))
        if k == 1:
            return self
        a = abs(self)
        lo, hi = a.lo.copy(), a.hi.copy()
        rlo, rhi = np.ones_like(lo), np.ones_like(hi)
        e = k
        while e:
            if e & 1:
                rlo = np.maximum(_vdown(rlo * lo), 0.0)
                rhi = _vup(rhi * hi)
            e >>= 1
            if e:
                lo = np.maximum(_vdown(lo * lo), 0.0)
                hi = _vup(hi * hi)
        if k % 2 == 0:
            return IntervalArray(rlo, rhi)
        # odd power is monotone: map each endpoint separately
        lo_abs, hi_abs = np.abs(self.lo), np.abs(self.hi)
        new_lo = np.where(self.lo >= 0, _vpow_down(lo_abs, k), -_vpow_up(lo_abs, k))
        new_hi = np.where(self.hi >= 0, _vpow_up(hi_abs, k), -_vpow_down(hi_abs, k))
        return IntervalArray(new_lo, new_hi)

    def sqrt(self) -> "IntervalArray":
        if np.any(self.lo < 0):
            raise NegativeSqrt("sqrt of interval array with negative part")
        lo, hi = np.sqrt(self.lo), np.sqrt(self.hi)
        return IntervalArray(np.maximum(_vdown(lo), 0.0), _vup(hi))

    def sum(self, axis=None) -> "IntervalArray | Interval":
        """Sum with an a priori bound on the accumulated rounding error."""
        n = self.lo.size if axis is None else self.lo.shape[axis]
        g = _gamma(max(n, 1) + 1)
        slo = np.sum(self.lo, axis=axis)
        shi = np.sum(self.hi, axis=axis)
        elo = _vup(g * np.sum(np.abs(self.lo), axis=axis) + n * _ETA)
        ehi = _vup(g * np.sum(np.abs(self.hi), axis=axis) + n * _ETA)
        out = IntervalArray(_vdown(slo - elo), _vup(shi + ehi))
        if axis is None:
            return Interval(float(out.lo), float(out.hi))
        return out

    def __repr__(self):
        return f"IntervalArray(shape={self.shape})"


def imatmul(a, b) -> IntervalArray:
    """Enclosure of the product of two interval (or float) matrices.

    Midpoint-radius form: the midpoint product is computed once in floating
    point, and the radius collects the input radii plus ``gamma_k |A||B|``
    for the rounding error of a length-``k`` dot product.
    """
    if isinstance(a, IntervalArray):
        am, ar = a.mid, a.rad
    else:
        am, ar = np.asarray(a, dtype=np.float64), None
    if isinstance(b, IntervalArray):
        bm, br = b.mid, b.rad
    else:
        bm, br = np.asarray(b, dtype=np.float64), None
    k = am.shape[-1]
    cm = am @ bm
    aam, abm = np.abs(am), np.abs(bm)
    g = _gamma(k + 2)
    rad = g * (aam @ abm)
    if br is not None:
        rad = rad + aam @ br
    if ar is not None:
        rad = rad + ar @ (abm + br if br is not None else abm)
    rad = _rad_up(rad, k)
    rad = _rad_up(rad + k * _ETA, 1)
    # entries without a single nonzero product term are exactly zero
    nza = (am != 0) if ar is None else (am != 0) | (ar > 0)
    nzb = (bm != 0) if br is None else (bm != 0) | (br > 0)
    rad = np.where(nza.astype(np.float64) @ nzb.astype(np.float64) > 0, rad, 0.0)
    return IntervalArray.from_mid_rad(cm, rad)
