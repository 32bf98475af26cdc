"""Interval evaluation of the norms that enter the certificate.

Cell ranges of u combine three enclosures and keep their intersection:
the direct tensor form, the mean-value form around the cell centre, and
the factored form ``u = t(1-t) s(1-s) g(t, s)`` where ``g`` is again a
tensor polynomial (``phi_n = t(1-t) psi_n``).  The factored form is what
makes nonnegativity of u provable on cells touching the boundary, where
u itself vanishes.

Cells live in reference coordinates: at level k the square is split into
2**k x 2**k congruent cells with dyadic centres, so every evaluation point
is exactly representable.  Child ranges are intersected with the parent
range, which makes every cell-sum bound monotone under refinement.
"""

from __future__ import annotations

import csv
import io
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import NonPolynomialIntegrand
from .galerkin import ProblemSpec
from .interval import Interval, IntervalArray, imatmul, root
from .legendre_basis import (LegendreFunction, admissible_order, family_table, gauss_rule,
                             grid_integral, grid_values, quad_grid)

MAX_DEPTH = 12
LEAF_BUDGET = 1 << 18  # bisection stops before the leaf count passes this

# ---------------------------------------------------------------------------
# Quadrature-based norms
# ---------------------------------------------------------------------------


def _area(u: LegendreFunction) -> Interval:
    return u.domain.a * u.domain.b


def _f_interval(p: ProblemSpec, U: IntervalArray) -> IntervalArray:
    out = U * IntervalArray.coerce(p.lam)
    for a, i in p.terms:
        if i % 2 == 0:
            raise NonPolynomialIntegrand(f"t|t|^{i - 1} is not a polynomial")
        out = out + U.pow_int(i) * IntervalArray.coerce(a)
    return out


def _fprime_interval(p: ProblemSpec, U: IntervalArray) -> IntervalArray:
    out = IntervalArray.coerce(p.lam) + U * 0.0
    for a, i in p.terms:
        out = out + (abs(U).pow_int(i - 1)) * IntervalArray.coerce(a * i)
    return out


def residual_l2(u: LegendreFunction, p: ProblemSpec, order_margin: int = 0) -> Interval:
    """Enclosure of the L2 norm of Laplace(u) + f(u) by exact-degree quadrature."""
    if not p.polynomial:
        raise NonPolynomialIntegrand("residual integrand is polynomial only for odd exponents")
    deg = 2 * p.max_exponent * (u.N + 1)
    rule = gauss_rule(admissible_order(deg) + order_margin)
    g = quad_grid(rule)
    U = grid_values(u, g.cx, g.rx, g.cy, g.ry, "u")
    L = grid_values(u, g.cx, g.rx, g.cy, g.ry, "lap")
    r = L + _f_interval(p, U)
    sq = grid_integral(r.sqr(), g, _area(u))
    return root(Interval(max(sq.lo, 0.0), sq.hi), 2)


def _mag_power_sum(vals: IntervalArray, q: int) -> IntervalArray:
    return abs(vals).pow_int(q)


def lq_norm(u: LegendreFunction, q: int, depth: int = 7) -> Interval:
    """L^q norm of u: enclosure for even q, upper bound [0, U] for odd q."""
    if q < 2:
        raise ValueError("q must be at least 2")
    if not np.any(u.coeffs):
        return Interval(0.0)
    if q % 2 == 0:
        rule = gauss_rule(admissible_order(q * (u.N + 1)))
        g = quad_grid(rule)
        U = grid_values(u, g.cx, g.rx, g.cy, g.ry, "u")
        s = grid_integral(U.pow_int(q), g, _area(u))
        return root(Interval(max(s.lo, 0.0), s.hi), q)
    rng = level_ranges(u, depth)[-1]
    m = np.maximum(np.abs(rng.lo), np.abs(rng.hi))
    cell = _cell_area(u, depth)
    tot = (IntervalArray(m).pow_int(q) * IntervalArray.coerce(cell)).sum()
    return Interval(0.0, root(Interval(0.0, tot.hi), q).hi)


# ---------------------------------------------------------------------------
# Cell ranges
# ---------------------------------------------------------------------------


def _centers(level: int, idx) -> tuple[tuple[float, ...], float]:
    h = 2.0 ** -level
    return tuple(float((i + 0.5) * h) for i in idx), 0.5 * h


def _pair(U: np.ndarray, Fx: IntervalArray, Fy: IntervalArray) -> IntervalArray:
    """sum_ij U_ij Fx[c, i] Fy[c, j] for every row c."""
    return (imatmul(Fx, U) * Fy).sum(axis=1)


def _tables(N: int, level: int, idx, families, radius=True):
    cs, r = _centers(level, idx)
    rr = np.full(len(cs), r if radius else 0.0)
    return {f: family_table(cs, rr, N, f) for f in families}


def _sym(r: float, shape) -> IntervalArray:
    return IntervalArray(np.full(shape, -r), np.full(shape, r))


def _bubble_1d(level: int, idx) -> IntervalArray:
    """Range of t(1-t) over each cell (exact endpoints, outward products)."""
    h = 2.0 ** -level
    lo = np.array([i * h for i in idx])
    hi = np.array([(i + 1) * h for i in idx])
    e1 = IntervalArray(lo) * (1 - IntervalArray(lo))
    e2 = IntervalArray(hi) * (1 - IntervalArray(hi))
    mn = np.maximum(np.minimum(e1.lo, e2.lo), 0.0)
    mx = np.maximum(e1.hi, e2.hi)
    mx = np.where((lo <= 0.5) & (hi >= 0.5), 0.25, mx)
    return IntervalArray(mn, mx)


def cell_ranges(u: LegendreFunction, level: int, ix, iy) -> IntervalArray:
    """Range enclosures of u over the listed cells (pairs ix[c], iy[c])."""
    ix = np.asarray(ix, dtype=np.int64)
    iy = np.asarray(iy, dtype=np.int64)
    N, U = u.N, u.coeffs
    ux_, invx = np.unique(ix, return_inverse=True)
    uy_, invy = np.unique(iy, return_inverse=True)
    fam = ("phi", "dphi", "psi", "dpsi")
    Tx = _tables(N, level, ux_, fam)
    Ty = _tables(N, level, uy_, fam)
    Cx = _tables(N, level, ux_, ("phi", "psi"), radius=False)
    Cy = _tables(N, level, uy_, ("phi", "psi"), radius=False)

    def rows(T, inv):
        return IntervalArray(T.lo[inv], T.hi[inv])

    r = 2.0 ** -(level + 1)
    R = _sym(r, ix.shape)
    direct = _pair(U, rows(Tx["phi"], invx), rows(Ty["phi"], invy))
    mv = (_pair(U, rows(Cx["phi"], invx), rows(Cy["phi"], invy))
          + _pair(U, rows(Tx["dphi"], invx), rows(Ty["phi"], invy)) * R
          + _pair(U, rows(Tx["phi"], invx), rows(Ty["dphi"], invy)) * R)
    g_direct = _pair(U, rows(Tx["psi"], invx), rows(Ty["psi"], invy))
    g_mv = (_pair(U, rows(Cx["psi"], invx), rows(Cy["psi"], invy))
            + _pair(U, rows(Tx["dpsi"], invx), rows(Ty["psi"], invy)) * R
            + _pair(U, rows(Tx["psi"], invx), rows(Ty["dpsi"], invy)) * R)
    g = _meet(g_direct, g_mv)
    bx = _bubble_1d(level, ux_)
    by = _bubble_1d(level, uy_)
    b = IntervalArray(bx.lo[invx], bx.hi[invx]) * IntervalArray(by.lo[invy], by.hi[invy])
    fact = b * g
    return _meet(_meet(direct, mv), fact)


def _meet(a: IntervalArray, b: IntervalArray) -> IntervalArray:
    return IntervalArray(np.maximum(a.lo, b.lo), np.minimum(a.hi, b.hi))


def _full_level(u: LegendreFunction, level: int) -> IntervalArray:
    n = 2 ** level
    ix, iy = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return cell_ranges(u, level, ix.ravel(), iy.ravel()).reshape(n, n)


_LEVEL_CACHE: "OrderedDict[tuple, list[IntervalArray]]" = OrderedDict()


def level_ranges(u: LegendreFunction, depth: int) -> list[IntervalArray]:
    """Range grids for levels 0..depth, each intersected with its parent.

    Grids are cached per function and extended level by level.
    """
    if not 0 <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must lie in [0, {MAX_DEPTH}]")
    key = (u.coeffs.tobytes(), u.coeffs.shape, u.domain)
    out = _LEVEL_CACHE.pop(key, [])
    for lev in range(len(out), depth + 1):
        cur = _full_level(u, lev)
        if out:
            par = out[-1]
            plo = np.repeat(np.repeat(par.lo, 2, axis=0), 2, axis=1)
            phi = np.repeat(np.repeat(par.hi, 2, axis=0), 2, axis=1)
            cur = IntervalArray(np.maximum(cur.lo, plo), np.minimum(cur.hi, phi))
        cur.lo.flags.writeable = cur.hi.flags.writeable = False
        out.append(cur)
    _LEVEL_CACHE[key] = out
    if len(_LEVEL_CACHE) > 8:
        _LEVEL_CACHE.popitem(last=False)
    return out[:depth + 1]


def _cell_area(u: LegendreFunction, level: int) -> Interval:
    return _area(u) * Interval(4.0 ** -level)


@dataclass(frozen=True)
class Leaves:
    """Possibly-negative cells of an adaptive subdivision (all others are >= 0)."""

    levels: np.ndarray
    ix: np.ndarray
    iy: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


def negative_leaves(u: LegendreFunction, depth: int, max_depth: int | None = None) -> Leaves:
    """Uniform grid at ``depth``, then bisection of unresolved cells up to ``max_depth``.

    A cell is resolved when its range lower end is >= 0 (u_- vanishes there).
    Bisection also stops once another level would exceed LEAF_BUDGET cells;
    the current leaves still cover every unresolved cell.
    """
    grids = level_ranges(u, depth)
    rng = grids[-1]
    mask = rng.lo < 0
    ix, iy = np.nonzero(mask)
    lo, hi = rng.lo[mask], rng.hi[mask]
    lev = depth
    max_depth = depth if max_depth is None else min(max_depth, MAX_DEPTH)
    while lev < max_depth and 0 < 4 * ix.size <= LEAF_BUDGET:
        cx = np.concatenate([2 * ix, 2 * ix + 1, 2 * ix, 2 * ix + 1])
        cy = np.concatenate([2 * iy, 2 * iy, 2 * iy + 1, 2 * iy + 1])
        plo = np.tile(lo, 4)
        phi = np.tile(hi, 4)
        ch = cell_ranges(u, lev + 1, cx, cy)
        clo = np.maximum(ch.lo, plo)
        chi = np.minimum(ch.hi, phi)
        keep = clo < 0
        ix, iy, lo, hi = cx[keep], cy[keep], clo[keep], chi[keep]
        lev += 1
    return Leaves(np.full(ix.size, lev), ix, iy, lo, hi)


def negative_part_lq(u: LegendreFunction, q: int, depth: int = 7,
                     max_depth: int | None = None) -> Interval:
    """Upper bound [0, U] of the L^q norm of max(-u, 0) from cell ranges."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    lv = negative_leaves(u, depth, max_depth)
    if lv.ix.size == 0:
        return Interval(0.0)
    m = IntervalArray(np.maximum(-lv.lo, 0.0))
    area = _cell_area(u, int(lv.levels[0]))
    tot = (m.pow_int(q) * IntervalArray.coerce(area)).sum()
    return Interval(0.0, root(Interval(0.0, max(tot.hi, 0.0)), q).hi)


def negative_part_h10(u: LegendreFunction, depth: int = 7, max_depth: int | None = MAX_DEPTH) -> Interval:
    """Upper bound of the H^1_0 norm of max(-u, 0).

    u_- has zero gradient on every cell where u >= 0 is proven; on the
    remaining cells the gradient of u_- is bounded by that of u.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    lv = negative_leaves(u, depth, max_depth)
    if lv.ix.size == 0:
        return Interval(0.0)
    gx, gy = _grad_chain(u, int(lv.levels[0]), lv.ix, lv.iy)
    dens = IntervalArray(gx.mag()).sqr() + IntervalArray(gy.mag()).sqr()
    tot = (dens * IntervalArray.coerce(_cell_area(u, int(lv.levels[0])))).sum()
    return Interval(0.0, root(Interval(0.0, tot.hi), 2).hi)


def _cell_grads(u: LegendreFunction, level: int, ix, iy) -> tuple[IntervalArray, IntervalArray]:
    ux_, invx = np.unique(ix, return_inverse=True)
    uy_, invy = np.unique(iy, return_inverse=True)
    Tx = _tables(u.N, level, ux_, ("phi", "dphi"))
    Ty = _tables(u.N, level, uy_, ("phi", "dphi"))

    def rows(T, inv):
        return IntervalArray(T.lo[inv], T.hi[inv])

    U = u.coeffs
    gx = _pair(U, rows(Tx["dphi"], invx), rows(Ty["phi"], invy)) / IntervalArray.coerce(u.domain.a)
    gy = _pair(U, rows(Tx["phi"], invx), rows(Ty["dphi"], invy)) / IntervalArray.coerce(u.domain.b)
    return gx, gy


def _grad_chain(u: LegendreFunction, level: int, ix, iy) -> tuple[IntervalArray, IntervalArray]:
    """Gradient enclosures on the listed cells, intersected with every ancestor's.

    Keeps the H^1_0 bound monotone under refinement.
    """
    ix = np.asarray(ix, dtype=np.int64)
    iy = np.asarray(iy, dtype=np.int64)
    gx = gy = None
    keys = None
    for lev in range(level + 1):
        ax, ay = ix >> (level - lev), iy >> (level - lev)
        ck, inv = np.unique(ax * (1 << lev) + ay, return_inverse=True)
        cx, cy = ck >> lev, ck & ((1 << lev) - 1)
        nx, ny = _cell_grads(u, lev, cx, cy)
        if gx is not None:
            par = np.searchsorted(keys, (cx >> 1) * (1 << (lev - 1)) + (cy >> 1))
            nx = _meet(nx, IntervalArray(gx.lo[par], gx.hi[par]))
            ny = _meet(ny, IntervalArray(gy.lo[par], gy.hi[par]))
        gx, gy, keys = nx, ny, ck
    return IntervalArray(gx.lo[inv], gx.hi[inv]), IntervalArray(gy.lo[inv], gy.hi[inv])


def positive_somewhere(u: LegendreFunction, depth: int = 4) -> bool:
    """True when some cell has a strictly positive range lower end."""
    for g in level_ranges(u, depth):
        if np.any(g.lo > 0):
            return True
    return False


# ---------------------------------------------------------------------------
# Flag grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CellFlagGrid:
    """2**k x 2**k cells; ``positive[i, j]`` iff range lo of u exceeds the threshold."""

    depth: int
    threshold: Interval
    positive: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        for arr in (self.positive, self.lo, self.hi):
            arr.flags.writeable = False

    @property
    def n(self) -> int:
        return 2 ** self.depth

    @property
    def flagged(self) -> np.ndarray:
        """Possibly-negative (i.e. not provably above threshold) cells."""
        return ~self.positive

    def cell_box(self, i: int, j: int) -> tuple[float, float, float, float]:
        h = 1.0 / self.n
        return (i * h, (i + 1) * h, j * h, (j + 1) * h)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "flag", "lo", "hi"])
        for i in range(self.n):
            for j in range(self.n):
                flag = "provably-positive" if self.positive[i, j] else "possibly-negative"
                w.writerow([i, j, flag, repr(float(self.lo[i, j])), repr(float(self.hi[i, j]))])
        return buf.getvalue()


def build_flag_grid(u: LegendreFunction, threshold, depth: int = 7) -> CellFlagGrid:
    """Flag every cell whose range lower end does not exceed ``threshold``."""
    thr = Interval.coerce(threshold)
    if thr.lo < 0:
        raise ValueError("threshold must be nonnegative")
    rng = level_ranges(u, depth)[-1]
    return CellFlagGrid(depth, thr, rng.lo > thr.hi, rng.lo.copy(), rng.hi.copy())


def fprime_range(u: LegendreFunction, p: ProblemSpec, depth: int = 5) -> Interval:
    """Enclosure of {f'(u(x)) : x in the domain} from cell ranges."""
    rng = level_ranges(u, depth)[-1]
    U = IntervalArray(np.array([rng.lo.min()]), np.array([rng.hi.max()]))
    return _fprime_interval(p, U)[0]
