"""Legendre-type basis on rectangles.

On the reference interval [0, 1] the shifted Legendre polynomials satisfy
``Q_0 = 1``, ``Q_1 = 2t - 1`` and ``(n+1) Q_{n+1} = (2n+1)(2t-1) Q_n - n Q_{n-1}``.
The basis functions are

    phi_n(t) = t (1 - t) Q_n'(t) / (n (n+1)) = (Q_{n-1}(t) - Q_{n+1}(t)) / (2 (2n+1)),

so ``phi_n' = -Q_n``, ``phi_n(0) = phi_n(1) = 0`` and the 1-D stiffness matrix
is ``diag(1 / (2n+1))``.

Rigorous point values are computed exactly: a binary64 point ``t = M / 2**e``
is rational, and the recurrence scaled by ``n! 2**(e n)`` stays in the
integers.  Interval recurrences are avoided on purpose: their widths grow like
``(1 + sqrt 2)**n`` near the ends of the interval.  Values on a nondegenerate
interval are obtained from the exact value at a float centre plus a remainder
built from the classical endpoint bounds ``|P_n^(k)| <= P_n^(k)(1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from collections import OrderedDict
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import DegreeError, QuadratureCertFail
from .interval import Interval, IntervalArray, _fraction_enclosure, imatmul

# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Rectangle:
    x0: float = 0.0
    x1: float = 1.0
    y0: float = 0.0
    y1: float = 1.0

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(f"degenerate rectangle {self}")

    @classmethod
    def unit(cls) -> "Rectangle":
        return cls()

    @property
    def a(self) -> Interval:
        """Side length along x."""
        return Interval(self.x1) - Interval(self.x0)

    @property
    def b(self) -> Interval:
        return Interval(self.y1) - Interval(self.y0)

    def is_unit(self) -> bool:
        return (self.x0, self.x1, self.y0, self.y1) == (0.0, 1.0, 0.0, 1.0)

    def contains_box(self, bx: Interval, by: Interval) -> bool:
        return (self.x0 <= bx.lo and bx.hi <= self.x1
                and self.y0 <= by.lo and by.hi <= self.y1)

    def to_ref(self, bx: Interval, by: Interval) -> tuple[Interval, Interval]:
        """Map a physical box to reference coordinates in [0, 1]^2."""
        tx = (bx - self.x0) / self.a
        ty = (by - self.y0) / self.b
        clip = Interval(0.0, 1.0)
        return tx.intersect(clip), ty.intersect(clip)

    def as_tuple(self):
        return (self.x0, self.x1, self.y0, self.y1)


# ---------------------------------------------------------------------------
# Exact evaluation at binary64 points
# ---------------------------------------------------------------------------

_FACT = [1]


def _fact(n: int) -> int:
    while len(_FACT) <= n:
        _FACT.append(_FACT[-1] * len(_FACT))
    return _FACT[n]


def _legendre_ints(t: float, nmax: int) -> tuple[list[int], int, int]:
    """Integers R_n with Q_n(t) = R_n / (n! D**n), n = 0..nmax."""
    num, den = Fraction(t).as_integer_ratio()
    # t = num / den with den a power of two; s = 2t - 1 = S / den
    S = 2 * num - den
    R = [1, S]
    D2 = den * den
    for n in range(1, nmax):
        R.append((2 * n + 1) * S * R[n] - n * n * D2 * R[n - 1])
    return R[: nmax + 1], den, S


def legendre_sign(n: int, t: float) -> int:
    """Exact sign of Q_n(t)."""
    R, _, _ = _legendre_ints(t, max(n, 1))
    r = R[n]
    return (r > 0) - (r < 0)


def exact_values(t: float, nmax: int, kinds: Sequence[str]) -> dict[str, list[Fraction]]:
    """Exact rational values at ``t`` for n = 1..nmax.

    kinds: ``Q``, ``phi``, ``dQ`` (Q_n'), ``d2Q`` (Q_n''), ``d3Q``.
    """
    R, D, S = _legendre_ints(t, nmax + 1)
    Q = [Fraction(R[n], _fact(n) * D ** n) for n in range(nmax + 2)]
    out: dict[str, list[Fraction]] = {}
    tq = Fraction(t)
    s = Fraction(S, D)
    w = tq * (1 - tq)
    need_dq = any(k in kinds for k in ("dQ", "d2Q", "d3Q"))
    dQ = None
    if "Q" in kinds:
        out["Q"] = Q[1: nmax + 1]
    if "phi" in kinds:
        out["phi"] = [(Q[n - 1] - Q[n + 1]) / (2 * (2 * n + 1)) for n in range(1, nmax + 1)]
    if need_dq:
        dQ = []
        for n in range(1, nmax + 1):
            if w == 0:
                v = Fraction(n * (n + 1)) * (1 if tq == 1 else (-1) ** (n + 1))
            else:
                v = n * (Q[n - 1] - s * Q[n]) / (2 * w)
            dQ.append(v)
        if "dQ" in kinds:
            out["dQ"] = dQ
    if "d2Q" in kinds or "d3Q" in kinds:
        d2 = []
        for n in range(1, nmax + 1):
            if w == 0:
                e = Fraction((n - 1) * n * (n + 1) * (n + 2), 2)
                v = e if tq == 1 else e * (-1) ** n
            else:
                v = (-n * (n + 1) * Q[n] - (1 - 2 * tq) * dQ[n - 1]) / w
            d2.append(v)
        if "d2Q" in kinds:
            out["d2Q"] = d2
    if "d3Q" in kinds:
        d3 = []
        for n in range(1, nmax + 1):
            if w == 0:
                e = Fraction(_dq_bound(n, 3))
                v = e if tq == 1 else e * (-1) ** (n + 1)
            else:
                # differentiate t(1-t) Q'' + (1-2t) Q' + n(n+1) Q = 0
                v = (-2 * (1 - 2 * tq) * d2[n - 1] + (2 - n * (n + 1)) * dQ[n - 1]) / w
            d3.append(v)
        out["d3Q"] = d3
    return out


def _dq_bound(n: int, k: int) -> int:
    """max over [0,1] of |d^k Q_n / dt^k| = 2**k P_n^(k)(1)."""
    if k > n:
        return 0
    return (2 ** k) * _fact(n + k) // ((2 ** k) * _fact(k) * _fact(n - k))


# family -> (exact value kind, exact derivative kind, sign, divide by n(n+1),
#            order k of the Q-derivative bounding the second derivative)
_FAMILIES = {
    "phi": ("phi", "Q", 1, False, 1),       # phi_n' = -Q_n
    "dphi": ("Q", "dQ", -1, False, 2),      # -Q_n
    "d2phi": ("dQ", "d2Q", -1, False, 3),   # -Q_n'
    "psi": ("dQ", "d2Q", 1, True, 3),       # Q_n' / (n(n+1)), phi_n = t(1-t) psi_n
    "dpsi": ("d2Q", "d3Q", 1, True, 4),
}


def _global_bound(family: str, n: int) -> float:
    if family == "phi":
        return 1.0 / (2 * n + 1)
    if family == "dphi":
        return 1.0
    if family == "d2phi":
        return float(n * (n + 1))
    if family == "psi":
        return 1.0
    if family == "dpsi":
        return float(_dq_bound(n, 2)) / (n * (n + 1))
    raise KeyError(family)


def _second_bound(family: str, n: int) -> float:
    """Upper bound of the second t-derivative of family_n on [0, 1]."""
    _, _, _, scaled, k = _FAMILIES[family]
    b = Fraction(_dq_bound(n, k))
    if family == "phi":
        b = Fraction(_dq_bound(n, 1))
    if scaled:
        b /= n * (n + 1)
    return _fraction_enclosure(b)[1]


def _signed(v: Fraction, n: int, sign: int, scaled: bool) -> Fraction:
    if scaled:
        v = v / (n * (n + 1))
    return -v if sign < 0 else v


@lru_cache(maxsize=1024)
def _center_table(points: tuple[float, ...], nmax: int, family: str):
    """Float enclosures of the value and first derivative at each point."""
    kind, dkind, sign, scaled, _ = _FAMILIES[family]
    shape = (len(points), nmax)
    lo, hi, dlo, dhi = (np.empty(shape) for _ in range(4))
    for i, t in enumerate(points):
        ex = exact_values(t, nmax, (kind, dkind))
        for j in range(nmax):
            n = j + 1
            lo[i, j], hi[i, j] = _fraction_enclosure(_signed(ex[kind][j], n, sign, scaled))
            dv = ex[dkind][j]
            if family == "phi":
                dv = -dv
            else:
                dv = _signed(dv, n, sign, scaled)
            dlo[i, j], dhi[i, j] = _fraction_enclosure(dv)
    for arr in (lo, hi, dlo, dhi):
        arr.flags.writeable = False
    return lo, hi, dlo, dhi


@lru_cache(maxsize=256)
def _bound_rows(family: str, nmax: int) -> tuple[np.ndarray, np.ndarray]:
    m2 = np.array([_second_bound(family, n) for n in range(1, nmax + 1)])
    gb = np.nextafter(np.array([_global_bound(family, n) for n in range(1, nmax + 1)]), np.inf)
    m2.flags.writeable = gb.flags.writeable = False
    return m2, gb


def family_table(centers: Sequence[float], radii, nmax: int, family: str) -> IntervalArray:
    """Enclosures of ``family_n(T_i)`` for T_i = [c_i - r_i, c_i + r_i] within [0, 1].

    Second-order Taylor form around the exact centre value, intersected with
    the global bound.  Shape ``(len(centers), nmax)``; column ``j`` is ``n = j + 1``.
    """
    centers = tuple(float(c) for c in centers)
    lo, hi, dlo, dhi = _center_table(centers, nmax, family)
    r = np.broadcast_to(np.asarray(radii, dtype=np.float64), (len(centers),))
    if not np.any(r > 0):
        return IntervalArray(lo.copy(), hi.copy())
    m2, gb = _bound_rows(family, nmax)
    dmag = np.maximum(np.abs(dlo), np.abs(dhi))
    rc = r[:, None]
    rem = np.nextafter(rc * dmag, np.inf)
    rem = np.nextafter(rem + np.nextafter(0.5 * np.nextafter(rc * rc, np.inf) * m2[None, :], np.inf), np.inf)
    lo2 = np.maximum(np.nextafter(lo - rem, -np.inf), -gb[None, :])
    hi2 = np.minimum(np.nextafter(hi + rem, np.inf), gb[None, :])
    return IntervalArray(lo2, hi2)


def _split_interval(x: Interval) -> tuple[float, float]:
    c = x.mid
    r = max(x.hi - c, c - x.lo)
    if r > 0:
        r = math.nextafter(r, math.inf)
    return c, r


def phi(n: int, x: Interval) -> Interval:
    """Enclosure of phi_n over x, a subinterval of [0, 1]."""
    if n < 1:
        raise ValueError("basis index starts at 1")
    x = Interval.coerce(x)
    c, r = _split_interval(x)
    return family_table([c], [r], n, "phi")[0, n - 1]


def dphi(n: int, x: Interval) -> Interval:
    """Enclosure of phi_n' = -Q_n over x."""
    if n < 1:
        raise ValueError("basis index starts at 1")
    x = Interval.coerce(x)
    c, r = _split_interval(x)
    return family_table([c], [r], n, "dphi")[0, n - 1]


def shifted_legendre(n: int, x: Interval) -> Interval:
    if n == 0:
        return Interval(1.0)
    return -dphi(n, x)


@dataclass(frozen=True)
class ShiftedLegendre:
    n: int

    def __call__(self, x) -> Interval:
        return shifted_legendre(self.n, Interval.coerce(x))

    def exact(self, t: float) -> Fraction:
        if self.n == 0:
            return Fraction(1)
        return exact_values(t, self.n, ("Q",))["Q"][self.n - 1]


# ---------------------------------------------------------------------------
# Floating-point tables (non-rigorous path)
# ---------------------------------------------------------------------------

def float_tables(t: np.ndarray, nmax: int) -> dict[str, np.ndarray]:
    """phi_n, phi_n' = -Q_n and phi_n'' = -Q_n' at points t, n = 1..nmax."""
    t = np.asarray(t, dtype=np.float64)
    s = 2.0 * t - 1.0
    Q = np.empty((nmax + 2, t.size))
    dQ = np.empty((nmax + 2, t.size))
    Q[0] = 1.0
    Q[1] = s
    dQ[0] = 0.0
    dQ[1] = 2.0
    for n in range(1, nmax + 1):
        Q[n + 1] = ((2 * n + 1) * s * Q[n] - n * Q[n - 1]) / (n + 1)
        dQ[n + 1] = dQ[n - 1] + 2.0 * (2 * n + 1) * Q[n]
    ns = np.arange(1, nmax + 1)
    ph = (Q[ns - 1] - Q[ns + 1]) / (2.0 * (2 * ns + 1))[:, None]
    return {"phi": ph.T, "dphi": -Q[1: nmax + 1].T, "d2phi": -dQ[1: nmax + 1].T}


# ---------------------------------------------------------------------------
# 1-D Gram matrices (exact)
# ---------------------------------------------------------------------------

def stiffness_1d_exact(N: int) -> list[list[Fraction]]:
    return [[Fraction(1, 2 * m + 1) if m == n else Fraction(0)
             for n in range(1, N + 1)] for m in range(1, N + 1)]


def mass_1d_exact(N: int) -> list[list[Fraction]]:
    """Entries of int_0^1 phi_m phi_n (pentadiagonal)."""
    M = [[Fraction(0)] * N for _ in range(N)]
    for m in range(1, N + 1):
        for n in range(max(1, m - 2), min(N, m + 2) + 1):
            acc = Fraction(0)
            if m == n:
                acc += Fraction(1, 2 * m - 1) + Fraction(1, 2 * m + 3)
            if m - 1 == n + 1:
                acc -= Fraction(1, 2 * m - 1)
            if m + 1 == n - 1:
                acc -= Fraction(1, 2 * m + 3)
            M[m - 1][n - 1] = acc / (4 * (2 * m + 1) * (2 * n + 1))
    return M


def _fraction_matrix(F) -> IntervalArray:
    n = len(F)
    lo = np.empty((n, n))
    hi = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            lo[i, j], hi[i, j] = _fraction_enclosure(F[i][j])
    return IntervalArray(lo, hi)


@lru_cache(maxsize=16)
def _gram_1d(N: int):
    S = _fraction_matrix(stiffness_1d_exact(N))
    M = _fraction_matrix(mass_1d_exact(N))
    return S, M


def stiffness_1d(N: int) -> IntervalArray:
    return _gram_1d(N)[0]


def mass_1d(N: int) -> IntervalArray:
    return _gram_1d(N)[1]


def stiffness_1d_float(N: int) -> np.ndarray:
    return 1.0 / (2.0 * np.arange(1, N + 1) + 1.0) * np.eye(N)


def mass_1d_float(N: int) -> np.ndarray:
    return np.array([[float(v) for v in row] for row in mass_1d_exact(N)])


# ---------------------------------------------------------------------------
# Certified Gauss-Legendre rules on (0, 1)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    order: int
    nodes: IntervalArray = field(repr=False)
    weights: IntervalArray = field(repr=False)
    nodes_float: np.ndarray = field(repr=False)
    weights_float: np.ndarray = field(repr=False)

    @property
    def exact_degree(self) -> int:
        return 2 * self.order - 1


def _float_newton(n: int, x: float) -> float:
    for _ in range(6):
        s = 2.0 * x - 1.0
        p0, p1 = 1.0, s
        for k in range(1, n):
            p0, p1 = p1, ((2 * k + 1) * s * p1 - k * p0) / (k + 1)
        dp = n * (s * p1 - p0) / (s * s - 1.0)  # dP_n/ds
        step = p1 / dp / 2.0
        x_new = x - step
        if x_new == x:
            break
        x = x_new
    return x


def _step_ulps(x: float, k: int) -> float:
    for _ in range(k):
        x = math.nextafter(x, math.inf)
    return x


def _bracket_root(n: int, x: float) -> tuple[float, float]:
    k = 1
    while k <= 1 << 22:
        a = x - k * math.ulp(x)
        b = x + k * math.ulp(x)
        a = max(a, 0.0)
        sa, sb = legendre_sign(n, a), legendre_sign(n, b)
        if sa * sb < 0:
            # shrink to adjacent floats by exact bisection
            while math.nextafter(a, math.inf) < b:
                m = 0.5 * (a + b)
                if m <= a or m >= b:
                    break
                sm = legendre_sign(n, m)
                if sm == 0:
                    return m, m
                if sm == sa:
                    a = m
                else:
                    b = m
            return a, b
        if legendre_sign(n, a) == 0:
            return a, a
        if legendre_sign(n, b) == 0:
            return b, b
        k *= 4
    raise QuadratureCertFail(f"no sign change of Q_{n} near {x!r}")


def _derivs_at(n: int, t: float) -> tuple[Fraction, Fraction]:
    """Exact Q_n'(t) and Q_n''(t) for 0 < t < 1."""
    R, D, S = _legendre_ints(t, n)
    q1 = Fraction(R[n - 1], _fact(n - 1) * D ** (n - 1))
    q0 = Fraction(R[n], _fact(n) * D ** n)
    tq = Fraction(t)
    w = tq * (1 - tq)
    dq = n * (q1 - Fraction(S, D) * q0) / (2 * w)
    d2q = (-n * (n + 1) * q0 - (1 - 2 * tq) * dq) / w
    return dq, d2q


def _weight_enclosure(n: int, a: float, b: float) -> Interval:
    """Enclose w(t) = 1 / (t (1-t) Q_n'(t)^2) over [a, b]."""
    dq, d2q = _derivs_at(n, a)
    T = Interval(a, b)
    h = Interval(b) - Interval(a)
    m3 = Interval.from_fraction(Fraction(_dq_bound(n, 3)))
    d2 = Interval.from_fraction(d2q)
    # |Q''| on [a, b] <= |Q''(a)| + M3 (b - a)
    d2_bound = d2.mag() + (m3 * h).hi
    dq_enc = Interval.from_fraction(dq) + Interval(-1.0, 1.0) * (Interval(d2_bound) * h)
    return 1 / (T * (1 - T) * dq_enc.sqr())


@lru_cache(maxsize=64)
def gauss_rule(order: int) -> QuadratureRule:
    """Verified Gauss-Legendre nodes and weights on (0, 1)."""
    if not 1 <= order <= 256:
        raise ValueError("order must lie in [1, 256]")
    n = order
    s_approx, _ = np.polynomial.legendre.leggauss(n)
    x_approx = 0.5 * (1.0 + s_approx)
    half = n // 2
    lo_nodes: list[Interval] = []
    lo_weights: list[Interval] = []
    prev_hi = 0.0
    for i in range(half):
        x = _float_newton(n, float(x_approx[i]))
        a, b = _bracket_root(n, x)
        if not a > prev_hi or b >= 0.5:
            raise QuadratureCertFail(f"overlapping node brackets at index {i}")
        prev_hi = b
        lo_nodes.append(Interval(a, b))
        lo_weights.append(_weight_enclosure(n, a, b))
    nodes = list(lo_nodes)
    weights = list(lo_weights)
    if n % 2 == 1:
        nodes.append(Interval(0.5))
        weights.append(_weight_enclosure(n, 0.5, 0.5))
    for X, W in zip(reversed(lo_nodes), reversed(lo_weights)):
        nodes.append(1 - X)
        weights.append(W)
    nodes_iv = IntervalArray.from_intervals(nodes)
    weights_iv = IntervalArray.from_intervals(weights)
    for arr in (nodes_iv.lo, nodes_iv.hi, weights_iv.lo, weights_iv.hi):
        arr.flags.writeable = False
    return QuadratureRule(n, nodes_iv, weights_iv, nodes_iv.mid, weights_iv.mid)


def required_order(degree: int) -> int:
    """Smallest Gauss order exact for polynomials of the given degree."""
    return max(1, (degree + 2) // 2)


def admissible_order(degree: int) -> int:
    """Order used for a term of total degree d: ceil((d + 2) / 2)."""
    return max(1, -(-(degree + 2) // 2))


def float_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    s, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (s + 1.0), 0.5 * w


# ---------------------------------------------------------------------------
# Functions in the tensor basis
# ---------------------------------------------------------------------------


@dataclass
class LegendreFunction:
    """u(x, y) = sum_{i,j} coeffs[i-1, j-1] phi_i(x) phi_j(y) on ``domain``."""

    coeffs: np.ndarray
    domain: Rectangle = field(default_factory=Rectangle.unit)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
            raise ValueError("coefficients must be an N x N array")
        self.coeffs = c

    @property
    def N(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def zeros(cls, N: int, domain: Rectangle | None = None) -> "LegendreFunction":
        return cls(np.zeros((N, N)), domain or Rectangle.unit())

    def _ref(self, x, y):
        d = self.domain
        return (np.asarray(x, float) - d.x0) / (d.x1 - d.x0), (np.asarray(y, float) - d.y0) / (d.y1 - d.y0)

    def __call__(self, x, y) -> np.ndarray:
        """Floating-point evaluation on the tensor grid x-by-y."""
        tx, ty = self._ref(np.atleast_1d(x), np.atleast_1d(y))
        Fx = float_tables(tx, self.N)["phi"]
        Fy = float_tables(ty, self.N)["phi"]
        return Fx @ self.coeffs @ Fy.T

    def sample(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        d = self.domain
        xs = np.linspace(d.x0, d.x1, n)
        ys = np.linspace(d.y0, d.y1, n)
        return xs, ys, self(xs, ys)

    def max_on_grid(self, n: int = 201) -> float:
        return float(np.max(self.sample(n)[2]))


# ---------------------------------------------------------------------------
# Rigorous evaluation on boxes and grids
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _scale(domain: Rectangle) -> tuple[Interval, Interval]:
    return 1 / domain.a, 1 / domain.b


def grid_tables(cx, rx, nmax, families) -> dict[str, IntervalArray]:
    return {f: family_table(cx, rx, nmax, f) for f in families}


def _tensor(U: np.ndarray, Fx: IntervalArray, Fy: IntervalArray) -> IntervalArray:
    """Enclosure of Fx U Fy^T, i.e. sum_ij U_ij Fx[:, i] Fy[:, j]."""
    return imatmul(imatmul(Fx, U), Fy.T)


def grid_values(u: LegendreFunction, cx, rx, cy, ry, what: str = "u") -> IntervalArray:
    """Direct-form enclosures over the product of 1-D reference intervals.

    ``what`` is one of ``u``, ``ux``, ``uy``, ``lap``, ``g`` (u / (x(1-x)y(1-y))
    in reference coordinates), ``gx``, ``gy``.
    """
    N = u.N
    U = u.coeffs
    sx, sy = _scale(u.domain)
    if what == "u":
        return _tensor(U, family_table(cx, rx, N, "phi"), family_table(cy, ry, N, "phi"))
    if what == "ux":
        return _tensor(U, family_table(cx, rx, N, "dphi"), family_table(cy, ry, N, "phi")) * sx
    if what == "uy":
        return _tensor(U, family_table(cx, rx, N, "phi"), family_table(cy, ry, N, "dphi")) * sy
    if what == "lap":
        uxx = _tensor(U, family_table(cx, rx, N, "d2phi"), family_table(cy, ry, N, "phi"))
        uyy = _tensor(U, family_table(cx, rx, N, "phi"), family_table(cy, ry, N, "d2phi"))
        return uxx * sx.sqr() + uyy * sy.sqr()
    if what == "g":
        return _tensor(U, family_table(cx, rx, N, "psi"), family_table(cy, ry, N, "psi"))
    if what == "gx":
        return _tensor(U, family_table(cx, rx, N, "dpsi"), family_table(cy, ry, N, "psi"))
    if what == "gy":
        return _tensor(U, family_table(cx, rx, N, "psi"), family_table(cy, ry, N, "dpsi"))
    raise ValueError(what)


def _mean_value(u, cx, rx, cy, ry, base: str, dx: str, dy: str, dscale=(None, None)) -> IntervalArray:
    zeros = np.zeros(len(cx)), np.zeros(len(cy))
    center = grid_values(u, cx, zeros[0], cy, zeros[1], base)
    gx = grid_values(u, cx, rx, cy, ry, dx)
    gy = grid_values(u, cx, rx, cy, ry, dy)
    Rx = IntervalArray(-np.asarray(rx, float)[:, None] * np.ones((1, len(cy))),
                       np.asarray(rx, float)[:, None] * np.ones((1, len(cy))))
    Ry = IntervalArray(-np.ones((len(cx), 1)) * np.asarray(ry, float)[None, :],
                       np.ones((len(cx), 1)) * np.asarray(ry, float)[None, :])
    # derivatives of u were scaled to physical units; undo for reference offsets
    if dscale[0] is not None:
        gx = gx * dscale[0]
        gy = gy * dscale[1]
    return center + gx * Rx + gy * Ry


def grid_range(u: LegendreFunction, cx, rx, cy, ry, mode: str = "auto") -> IntervalArray:
    """Range enclosures of u over every cell [cx_i +- rx_i] x [cy_j +- ry_j] (reference coords)."""
    rx = np.asarray(rx, float)
    ry = np.asarray(ry, float)
    direct = grid_values(u, cx, rx, cy, ry, "u")
    if mode == "direct":
        return direct
    small = max(rx.max(initial=0.0), ry.max(initial=0.0)) * 2 < 2.0 ** -4
    if mode == "auto" and not small:
        return direct
    mv = _mean_value(u, cx, rx, cy, ry, "u", "ux", "uy", dscale=(u.domain.a, u.domain.b))
    return IntervalArray(np.maximum(direct.lo, mv.lo), np.minimum(direct.hi, mv.hi))


def grid_range_factored(u: LegendreFunction, cx, rx, cy, ry) -> tuple[IntervalArray, IntervalArray]:
    """Range of the interior factor g = u / (t(1-t) s(1-s)) and of u = bubble * g."""
    rx = np.asarray(rx, float)
    ry = np.asarray(ry, float)
    direct = grid_values(u, cx, rx, cy, ry, "g")
    mv = _mean_value(u, cx, rx, cy, ry, "g", "gx", "gy")
    g = IntervalArray(np.maximum(direct.lo, mv.lo), np.minimum(direct.hi, mv.hi))
    Tx = IntervalArray(np.asarray(cx, float) - rx, np.asarray(cx, float) + rx)
    Ty = IntervalArray(np.asarray(cy, float) - ry, np.asarray(cy, float) + ry)
    bx = _bubble(Tx)
    by = _bubble(Ty)
    b = IntervalArray(bx.lo[:, None] * by.lo[None, :], np.nextafter(bx.hi[:, None] * by.hi[None, :], np.inf))
    b = IntervalArray(np.maximum(np.nextafter(b.lo, -np.inf), 0.0), b.hi)
    return g, b * g


def _bubble(T: IntervalArray) -> IntervalArray:
    """Range of t(1-t) over intervals within [0, 1]."""
    lo = np.clip(T.lo, 0.0, 1.0)
    hi = np.clip(T.hi, 0.0, 1.0)
    # t(1-t) is unimodal with peak at 1/2
    ends = IntervalArray(lo) * (1 - IntervalArray(lo))
    ends2 = IntervalArray(hi) * (1 - IntervalArray(hi))
    mn = np.maximum(np.minimum(ends.lo, ends2.lo), 0.0)
    mx = np.maximum(ends.hi, ends2.hi)
    mx = np.where((lo <= 0.5) & (hi >= 0.5), 0.25, mx)
    return IntervalArray(mn, mx)


def _box_to_ref(u: LegendreFunction, box) -> tuple[Interval, Interval]:
    bx, by = (Interval.coerce(box[0]), Interval.coerce(box[1]))
    if not u.domain.contains_box(bx, by):
        raise ValueError("box must lie inside the domain")
    return u.domain.to_ref(bx, by)


ISOTONE_MAX_LEVEL = 10
_FULL_LEVELS = 6  # levels evaluated on every cell, so their tables are cached


def _cells_meeting(lo: float, hi: float, level: int) -> np.ndarray:
    n = 1 << level
    i0 = max(math.ceil(lo * n) - 1, 0)
    i1 = min(math.floor(hi * n), n - 1)
    return np.arange(i0, i1 + 1)


def _dyadic(idx: np.ndarray, level: int) -> tuple[np.ndarray, float]:
    h = 2.0 ** -(level + 1)
    return (2 * idx + 1) * h, h


_FULL_CACHE: "OrderedDict[tuple, list]" = OrderedDict()
_FULL_CACHE_SIZE = 128


def _full_levels(key, cells) -> list[IntervalArray]:
    """Parent-intersected enclosures of every cell on the shallow levels (cached per key)."""
    hit = _FULL_CACHE.get(key)
    if hit is not None:
        _FULL_CACHE.move_to_end(key)
        return hit
    out: list[IntervalArray] = []
    for lev in range(_FULL_LEVELS + 1):
        c, h = _dyadic(np.arange(1 << lev), lev)
        cur = cells(c, np.full(c.size, h), c, np.full(c.size, h))
        if out:
            par = out[-1]
            j = np.arange(1 << lev) >> 1
            cur = IntervalArray(np.maximum(cur.lo, par.lo[np.ix_(j, j)]),
                                np.minimum(cur.hi, par.hi[np.ix_(j, j)]))
        out.append(cur)
    _FULL_CACHE[key] = out
    if len(_FULL_CACHE) > _FULL_CACHE_SIZE:
        _FULL_CACHE.popitem(last=False)
    return out


def _isotone(tx: Interval, ty: Interval, cells, key) -> Interval:
    """Inclusion-isotone enclosure built on canonical dyadic cells.

    Each cell enclosure is intersected with its parent's, so enclosures
    shrink under refinement, and the result is the hull over the cells of
    level L that meet the box, where L never decreases as the box shrinks.
    Any sub-box therefore gets a subset of the same (or descendant) cells.
    """
    w = max(tx.hi - tx.lo, ty.hi - ty.lo)
    L = ISOTONE_MAX_LEVEL if w == 0 else min(ISOTONE_MAX_LEVEL, max(0, math.floor(-math.log2(w)) + 1))
    fx, fy = _cells_meeting(tx.lo, tx.hi, L), _cells_meeting(ty.lo, ty.hi, L)
    top = min(L, _FULL_LEVELS)
    enc = _full_levels(key, cells)[top]
    prev = (np.arange(1 << top), np.arange(1 << top))
    if L > top:
        # all deeper levels share one batched call; they are all below the
        # auto threshold, so batching does not change the per-cell form
        levs = range(top + 1, L + 1)
        ax = [np.unique(fx >> (L - lev)) for lev in levs]
        ay = [np.unique(fy >> (L - lev)) for lev in levs]
        cx, rx = zip(*((c, np.full(a.size, h)) for a, lev in zip(ax, levs) for c, h in [_dyadic(a, lev)]))
        cy, ry = zip(*((c, np.full(a.size, h)) for a, lev in zip(ay, levs) for c, h in [_dyadic(a, lev)]))
        allc = cells(np.concatenate(cx), np.concatenate(rx), np.concatenate(cy), np.concatenate(ry))
        ox = np.cumsum([0] + [a.size for a in ax])
        oy = np.cumsum([0] + [a.size for a in ay])
        for i in range(len(ax)):
            bx, by = slice(ox[i], ox[i + 1]), slice(oy[i], oy[i + 1])
            px = np.searchsorted(prev[0], ax[i] >> 1)
            py = np.searchsorted(prev[1], ay[i] >> 1)
            enc = IntervalArray(np.maximum(allc.lo[bx, by], enc.lo[np.ix_(px, py)]),
                                np.minimum(allc.hi[bx, by], enc.hi[np.ix_(px, py)]))
            prev = (ax[i], ay[i])
    sx, sy = np.searchsorted(prev[0], fx), np.searchsorted(prev[1], fy)
    lo, hi = enc.lo[np.ix_(sx, sy)], enc.hi[np.ix_(sx, sy)]
    return Interval(float(lo.min()), float(hi.max()))


def _point_or_isotone(u, box, cells, point_values, kind: str) -> Interval:
    tx, ty = _box_to_ref(u, box)
    key = (u.coeffs.tobytes(), u.coeffs.shape, u.domain, kind)
    iso = _isotone(tx, ty, cells, key)
    if tx.is_point() and ty.is_point():
        return iso.intersect(point_values([tx.lo], [0.0], [ty.lo], [0.0])[0, 0])
    return iso


def eval(u: LegendreFunction, box, mode: str = "auto") -> Interval:  # noqa: A001
    """Enclosure of {u(x, y) : (x, y) in box}, inclusion-isotone in the box.

    ``mode`` picks the per-cell enclosure: ``direct``, ``mean-value`` or
    ``auto`` (mean-value form below cell width 2**-4).
    """
    if mode not in ("direct", "mean-value", "auto"):
        raise ValueError(f"unknown mode {mode!r}")

    def cells(cx, rx, cy, ry):
        if mode == "mean-value":
            mv = _mean_value(u, cx, rx, cy, ry, "u", "ux", "uy", dscale=(u.domain.a, u.domain.b))
            d = grid_values(u, cx, rx, cy, ry, "u")
            return IntervalArray(np.maximum(mv.lo, d.lo), np.minimum(mv.hi, d.hi))
        return grid_range(u, cx, rx, cy, ry, mode)

    return _point_or_isotone(u, box, cells, lambda *a: grid_values(u, *a, "u"), mode)


def grad(u: LegendreFunction, box) -> tuple[Interval, Interval]:
    """Enclosures of the two partial derivatives over box, inclusion-isotone."""
    return tuple(_point_or_isotone(u, box, lambda *a, k=k: grid_values(u, *a, k),
                                   lambda *a, k=k: grid_values(u, *a, k), k) for k in ("ux", "uy"))


def laplacian(u: LegendreFunction, box) -> Interval:
    tx, ty = _box_to_ref(u, box)
    cx, rx = _split_interval(tx)
    cy, ry = _split_interval(ty)
    return grid_values(u, [cx], [rx], [cy], [ry], "lap")[0, 0]


# ---------------------------------------------------------------------------
# Quadrature grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadGrid:
    """Tensor Gauss grid on a cell of the reference square."""

    rule: QuadratureRule
    cx: tuple[float, ...]
    rx: np.ndarray
    cy: tuple[float, ...]
    ry: np.ndarray
    wx: IntervalArray
    wy: IntervalArray


def _map_rule(rule: QuadratureRule, lo: float, hi: float):
    """Nodes of ``rule`` mapped to [lo, hi] (reference coordinates)."""
    L = Interval(hi) - Interval(lo)
    nodes = IntervalArray(np.float64(lo)) + rule.nodes * IntervalArray(np.float64(L.lo), np.float64(L.hi))
    nodes = IntervalArray(np.clip(nodes.lo, lo, hi), np.clip(nodes.hi, lo, hi))
    weights = rule.weights * IntervalArray(np.float64(L.lo), np.float64(L.hi))
    c = nodes.mid
    r = np.nextafter(np.maximum(nodes.hi - c, c - nodes.lo), np.inf)
    r = np.where(nodes.hi == nodes.lo, 0.0, r)
    return tuple(float(v) for v in c), r, weights


def quad_grid(rule: QuadratureRule, cell: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)) -> QuadGrid:
    cx, rx, wx = _map_rule(rule, cell[0], cell[1])
    cy, ry, wy = _map_rule(rule, cell[2], cell[3])
    return QuadGrid(rule, cx, rx, cy, ry, wx, wy)


def grid_integral(values: IntervalArray, grid: QuadGrid, jacobian: Interval | None = None) -> Interval:
    """sum_ab wx_a wy_b values_ab, times the physical area factor if given."""
    inner = imatmul(values, grid.wy.reshape(-1, 1)).reshape(-1)
    total = (inner * grid.wx).sum()
    if jacobian is not None:
        total = total * jacobian
    return total


def integrate(integrand: Callable, degree: int, cell: Rectangle | None = None,
              rule: QuadratureRule | None = None) -> Interval:
    """Enclosure of the integral of a polynomial integrand over a rectangle.

    ``integrand(X, Y)`` receives node enclosures in physical coordinates as
    IntervalArrays shaped (q, 1) and (1, q) and returns a (q, q) IntervalArray.
    ``degree`` is the per-variable polynomial degree of the integrand.
    """
    cell = cell or Rectangle.unit()
    need = required_order(degree)
    if rule is None:
        rule = gauss_rule(admissible_order(degree))
    elif rule.order < need:
        raise DegreeError(f"order {rule.order} too low for degree {degree} (need {need})")
    ax = IntervalArray(np.float64(cell.a.lo), np.float64(cell.a.hi))
    by = IntervalArray(np.float64(cell.b.lo), np.float64(cell.b.hi))
    X = (rule.nodes * ax + cell.x0).reshape(-1, 1)
    Y = (rule.nodes * by + cell.y0).reshape(1, -1)
    vals = integrand(X, Y)
    w2 = IntervalArray(rule.weights.lo[:, None] * np.ones((1, rule.order)),
                       rule.weights.hi[:, None] * np.ones((1, rule.order)))
    w2 = w2 * rule.weights.reshape(1, -1)
    return (vals * w2).sum() * (cell.a * cell.b)


def integrate_1d(integrand: Callable, degree: int, lo: float = 0.0, hi: float = 1.0,
                 rule: QuadratureRule | None = None) -> Interval:
    need = required_order(degree)
    if rule is None:
        rule = gauss_rule(admissible_order(degree))
    elif rule.order < need:
        raise DegreeError(f"order {rule.order} too low for degree {degree} (need {need})")
    L = Interval(hi) - Interval(lo)
    Li = IntervalArray(np.float64(L.lo), np.float64(L.hi))
    X = rule.nodes * Li + lo
    return (integrand(X) * rule.weights).sum() * L
