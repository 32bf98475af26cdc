"""Verified spectral bounds for the linearized operator -Laplace - f'(u).

Three ingredients:

* ``verified_sym_geig`` encloses all eigenvalues of a symmetric pencil
  ``B x = theta A x`` (A positive definite) from a floating-point
  diagonalization ``X``: with ``G = X^T A X`` and ``H = X^T B X`` in interval
  arithmetic, ``|G - I| <= delta < 1`` proves A definite and bounds the
  congruence error, and Weyl's inequality around the sorted diagonal of H
  handles the rest.
* The lower bound of Liu: for ``a(u, v) = lambda b(u, v)`` and a Galerkin
  space whose a-orthogonal projection satisfies
  ``|u - P u|_b <= C |u - P u|_a``, every exact eigenvalue obeys
  ``lambda_k >= lambda_k^h / (1 + C^2 lambda_k^h)``.
* The Lehmann-Maehly bound, which turns a rough lower bound of mu_{m+1}
  and m Ritz vectors into sharp lower bounds of mu_1, ..., mu_m.

The projection constant: for v in H^2 with zero trace on the rectangle and
P the H^1_0 projection onto the tensor space of degree N,
|grad(v - P v)| <= C_N |Laplace v| with C_N = max(a, b) / (2 sqrt((N+1)(N+2))).
With a constant shift sigma >= 0 the L2 error of the (-Laplace + sigma)
projection is at most C_N sqrt(1 + sigma C_N^2) times its energy error.
"""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import EnclosureFail, Mu1NotPositive, NotCoercive, NotSPD, PossiblySingular
from .galerkin import ProblemSpec
from .interval import Interval, IntervalArray, _up, imatmul, sqrt
from .legendre_basis import (LegendreFunction, admissible_order, family_table, gauss_rule,
                             grid_values, mass_1d, quad_grid, stiffness_1d)
from .rigor_norms import _fprime_interval, fprime_range

log = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Interval symmetric matrices
# ---------------------------------------------------------------------------


class IntervalSymMatrix:
    """Square interval matrix known to enclose a symmetric matrix.

    Entry (i, j) and (j, i) are replaced by their intersection, which must be
    nonempty.
    """

    def __init__(self, m: IntervalArray, symmetric: bool = True):
        m = IntervalArray.coerce(m)
        if m.lo.ndim != 2 or m.lo.shape[0] != m.lo.shape[1]:
            raise ValueError("matrix must be square")
        if symmetric:
            lo = np.maximum(m.lo, m.lo.T)
            hi = np.minimum(m.hi, m.hi.T)
            if np.any(lo > hi):
                raise ValueError("transposed entries do not overlap")
            m = IntervalArray(lo, hi)
        self.m = m
        self.symmetric = symmetric

    @classmethod
    def coerce(cls, x) -> "IntervalSymMatrix":
        return x if isinstance(x, cls) else cls(IntervalArray.coerce(x))

    @property
    def n(self) -> int:
        return self.m.lo.shape[0]

    @property
    def mid(self) -> np.ndarray:
        mm = self.m.mid
        return 0.5 * (mm + mm.T)

    def __add__(self, other):
        return IntervalSymMatrix(self.m + IntervalSymMatrix.coerce(other).m)

    def __sub__(self, other):
        return IntervalSymMatrix(self.m - IntervalSymMatrix.coerce(other).m)

    def scale(self, s) -> "IntervalSymMatrix":
        return IntervalSymMatrix(self.m * IntervalArray.coerce(Interval.coerce(s)))

    def congruence(self, X: np.ndarray) -> "IntervalSymMatrix":
        """Enclosure of X^T M X for a float matrix X."""
        return IntervalSymMatrix(imatmul(X.T, imatmul(self.m, X)))


def ikron(A: IntervalArray, B: IntervalArray) -> IntervalArray:
    """Interval Kronecker product."""
    n1, m1 = A.lo.shape
    n2, m2 = B.lo.shape
    a = IntervalArray(A.lo[:, None, :, None], A.hi[:, None, :, None])
    b = IntervalArray(B.lo[None, :, None, :], B.hi[None, :, None, :])
    p = a * b
    return IntervalArray(p.lo.reshape(n1 * n2, m1 * m2), p.hi.reshape(n1 * n2, m1 * m2))


# ---------------------------------------------------------------------------
# Verified generalized eigenvalues
# ---------------------------------------------------------------------------


@dataclass
class GeigResult:
    enclosures: list[Interval]
    vectors: np.ndarray = field(repr=False)
    delta: float = 0.0
    eta: float = 0.0

    def __iter__(self):
        return iter(self.enclosures)

    def __len__(self):
        return len(self.enclosures)

    def __getitem__(self, i):
        return self.enclosures[i]


def _row_sum_bound(M: IntervalArray) -> float:
    mags = IntervalArray(M.mag())
    return float(np.max(mags.sum(axis=1).hi)) if M.lo.size else 0.0


def _merge(los: np.ndarray, his: np.ndarray) -> list[Interval]:
    """Replace runs of overlapping enclosures by their hull."""
    out = [Interval(float(a), float(b)) for a, b in zip(los, his)]
    i = 0
    n = len(out)
    while i < n:
        j = i
        hi = out[i].hi
        while j + 1 < n and out[j + 1].lo <= hi:
            j += 1
            hi = max(hi, out[j].hi)
        if j > i:
            hull = Interval(min(o.lo for o in out[i:j + 1]), hi)
            for k in range(i, j + 1):
                out[k] = hull
        i = j + 1
    return out


def verified_sym_geig(A, B, merge: bool = True) -> GeigResult:
    """Enclosures of all eigenvalues of B x = theta A x, ascending."""
    A = IntervalSymMatrix.coerce(A)
    B = IntervalSymMatrix.coerce(B)
    n = A.n
    if B.n != n:
        raise ValueError("matrix sizes differ")
    d = np.diag(A.mid)
    if np.any(~(d > 0)):
        raise NotSPD("nonpositive diagonal entry")
    s = 1.0 / np.sqrt(d)
    # exact congruence with the float diagonal D = diag(s)
    sr = IntervalArray(s[:, None])
    sc = IntervalArray(s[None, :])
    As = IntervalSymMatrix(A.m * sr * sc)
    Bs = IntervalSymMatrix(B.m * sr * sc)
    try:
        _, X = scipy.linalg.eigh(Bs.mid, As.mid)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        raise NotSPD(str(exc)) from exc
    G = As.congruence(X).m
    H = Bs.congruence(X).m
    E = G - IntervalArray(np.eye(n))
    delta = _row_sum_bound(E)
    if not delta < 1.0:
        raise EnclosureFail(f"eigenvector basis not A-orthonormal enough (delta={delta:.3g})")
    h = H.mid.diagonal().copy()
    F = H - IntervalArray(np.diag(h))
    eta = _row_sum_bound(F)
    hs = np.sort(h)
    t_lo = np.nextafter(hs - eta, -np.inf)
    t_hi = np.nextafter(hs + eta, np.inf)
    one_p = Interval(1.0) + Interval(delta)
    one_m = Interval(1.0) - Interval(delta)
    lo = np.where(t_lo >= 0, t_lo / one_p.hi, t_lo / one_m.lo)
    hi = np.where(t_hi >= 0, t_hi / one_m.lo, t_hi / one_p.hi)
    lo = np.nextafter(lo, -np.inf)
    hi = np.nextafter(hi, np.inf)
    order = np.argsort(h, kind="stable")
    encl = _merge(lo, hi) if merge else [Interval(float(a), float(b)) for a, b in zip(lo, hi)]
    return GeigResult(encl, X[:, order] * s[:, None], delta, eta)


# ---------------------------------------------------------------------------
# Projection constant
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProjectionConstant:
    value: Interval
    N: int
    provenance: str = "closed-form"

    def __post_init__(self):
        if not self.value.lo > 0:
            raise ValueError("projection constant must be positive")

    @classmethod
    def for_space(cls, N: int, domain) -> "ProjectionConstant":
        """max(a, b) / (2 sqrt((N+1)(N+2)))."""
        if N < 1:
            raise ValueError("N must be positive")
        a, b = domain.a, domain.b
        side = a if a.hi >= b.hi else b
        side = Interval(max(a.lo, b.lo), max(a.hi, b.hi))
        c = side / (2 * sqrt(Interval((N + 1) * (N + 2))))
        return cls(c, N, "closed-form")

    @classmethod
    def supplied(cls, value: Interval, N: int) -> "ProjectionConstant":
        return cls(Interval.coerce(value), N, "supplied")

    def shifted(self, sigma: Interval) -> Interval:
        """L2-versus-energy constant for -Laplace + sigma, sigma >= 0."""
        sigma = Interval.coerce(sigma)
        if sigma.lo < 0:
            raise NotCoercive("negative shift")
        c = self.value
        return c * sqrt(1 + sigma * c.sqr())


# ---------------------------------------------------------------------------
# Matrices of the linearized operator
# ---------------------------------------------------------------------------


def _sub(M: IntervalArray, r: np.ndarray, c: np.ndarray) -> IntervalArray:
    return IntervalArray(M.lo[np.ix_(r, c)], M.hi[np.ix_(r, c)])


@dataclass(frozen=True)
class Block:
    """Tensor index set xs-by-ys of the coefficient array."""

    xs: np.ndarray
    ys: np.ndarray

    def flat(self, N: int) -> np.ndarray:
        return (self.xs[:, None] * N + self.ys[None, :]).ravel()

    @property
    def size(self) -> int:
        return len(self.xs) * len(self.ys)


def parity_blocks(u: LegendreFunction) -> list[Block]:
    """Exact invariant splitting of the coefficient space.

    phi_{k+1}(1 - t) = (-1)^k phi_{k+1}(t).  When every coefficient with odd k
    (resp. odd l) of u vanishes, u and f'(u) are even about the vertical
    (resp. horizontal) midline, and the Galerkin matrices do not couple the
    two parity classes of that direction.
    """
    c = u.coeffs
    N = u.N
    idx = np.arange(N)
    xsym = not np.any(c[1::2, :])
    ysym = not np.any(c[:, 1::2])
    xparts = [idx[0::2], idx[1::2]] if xsym and N > 1 else [idx]
    yparts = [idx[0::2], idx[1::2]] if ysym and N > 1 else [idx]
    return [Block(xs, ys) for xs in xparts for ys in yparts]


class LinearizedOperator:
    """Rigorous Galerkin matrices for -Laplace - q with q = f'(u), by parity block."""

    def __init__(self, u: LegendreFunction, p: ProblemSpec, range_depth: int = 6,
                 use_symmetry: bool = True):
        self.u = u
        self.p = p
        self.N = u.N
        self.range_depth = range_depth
        d = u.domain
        self.area = d.a * d.b
        self.blocks = parity_blocks(u) if use_symmetry else [Block(np.arange(self.N), np.arange(self.N))]

    @cached_property
    def q_range(self) -> Interval:
        return fprime_range(self.u, self.p, self.range_depth)

    @cached_property
    def stiffness(self) -> list[IntervalSymMatrix]:
        A, M = stiffness_1d(self.N), mass_1d(self.N)
        d = self.u.domain
        ba = IntervalArray.coerce(d.b / d.a)
        ab = IntervalArray.coerce(d.a / d.b)
        out = []
        for bl in self.blocks:
            x, y = bl.xs, bl.ys
            out.append(IntervalSymMatrix(ikron(_sub(A, x, x), _sub(M, y, y)) * ba
                                         + ikron(_sub(M, x, x), _sub(A, y, y)) * ab))
        return out

    @cached_property
    def mass(self) -> list[IntervalSymMatrix]:
        M = mass_1d(self.N)
        s = IntervalArray.coerce(self.area)
        return [IntervalSymMatrix(ikron(_sub(M, b.xs, b.xs), _sub(M, b.ys, b.ys)) * s) for b in self.blocks]

    @cached_property
    def quad(self):
        deg = (self.p.max_exponent + 1) * (self.N + 1)
        return quad_grid(gauss_rule(admissible_order(deg)))

    @cached_property
    def potential(self) -> list[IntervalSymMatrix]:
        """Blocks of the matrix with entries integral(q phi_kl phi_ij)."""
        g = self.quad
        N = self.N
        U = grid_values(self.u, g.cx, g.rx, g.cy, g.ry, "u")
        W = _fprime_interval(self.p, U)
        W = W * IntervalArray(g.wx.lo[:, None], g.wx.hi[:, None]) * IntervalArray(g.wy.lo[None, :], g.wy.hi[None, :])
        W = W * IntervalArray.coerce(self.area)
        Px = family_table(g.cx, g.rx, N, "phi")
        Py = family_table(g.cy, g.ry, N, "phi")

        def pairs(P, s):
            lo, hi = P.lo[:, s], P.hi[:, s]
            G = IntervalArray(lo[:, :, None], hi[:, :, None]) * IntervalArray(lo[:, None, :], hi[:, None, :])
            return G.reshape(lo.shape[0], len(s) ** 2)

        out = []
        for bl in self.blocks:
            nx, ny = len(bl.xs), len(bl.ys)
            T = imatmul(imatmul(pairs(Px, bl.xs).T, W), pairs(Py, bl.ys))  # ((k, i), (l, j))
            shape = (nx, nx, ny, ny)
            lo = T.lo.reshape(shape).transpose(0, 2, 1, 3).reshape(nx * ny, nx * ny)
            hi = T.hi.reshape(shape).transpose(0, 2, 1, 3).reshape(nx * ny, nx * ny)
            out.append(IntervalSymMatrix(IntervalArray(lo, hi)))
        return out

    def operator_block(self, b: int, scale: float = 1.0, shift: float = 0.0) -> IntervalSymMatrix:
        """Block b of the matrix of -Laplace - (scale q + shift)."""
        out = self.stiffness[b] - self.potential[b].scale(Interval(scale))
        if shift:
            out = out - self.mass[b].scale(Interval(shift))
        return out

    def apply_on_grid(self, coeffs: np.ndarray, scale: float = 1.0, shift: float = 0.0) -> IntervalArray:
        """Values of (-Laplace - scale q - shift) v on the residual quadrature grid."""
        g = self.residual_quad
        v = LegendreFunction(coeffs.reshape(self.N, self.N), self.u.domain)
        V = grid_values(v, g.cx, g.rx, g.cy, g.ry, "u")
        L = grid_values(v, g.cx, g.rx, g.cy, g.ry, "lap")
        qt = self._q_residual_grid * IntervalArray.coerce(Interval(scale))
        if shift:
            qt = qt + IntervalArray.coerce(Interval(shift))
        return -L - qt * V

    @cached_property
    def residual_quad(self):
        deg = 2 * self.p.max_exponent * (self.N + 1)
        return quad_grid(gauss_rule(admissible_order(deg)))

    @cached_property
    def _q_residual_grid(self) -> IntervalArray:
        g = self.residual_quad
        U = grid_values(self.u, g.cx, g.rx, g.cy, g.ry, "u")
        return _fprime_interval(self.p, U)

    def block_ritz(self, b: int, scale: float = 1.0, shift: float = 0.0):
        """Float eigenpairs on block b, ascending; vectors padded to length N^2."""
        key = (b, scale, shift)
        cache = self.__dict__.setdefault("_ritz_cache", {})
        if key not in cache:
            w, V = scipy.linalg.eigh(self.operator_block(b, scale, shift).mid, self.mass[b].mid)
            full = np.zeros((self.N ** 2, len(w)))
            full[self.blocks[b].flat(self.N)] = V
            cache[key] = (w, full)
        return cache[key]


def block_geig(As: list, Bs: list) -> list[Interval]:
    """Enclosures of the ascending eigenvalues of a block diagonal pencil."""
    los, his = [], []
    for A, B in zip(As, Bs):
        for e in verified_sym_geig(A, B, merge=False):
            los.append(e.lo)
            his.append(e.hi)
    return [Interval(float(a), float(b)) for a, b in zip(np.sort(los), np.sort(his))]


# ---------------------------------------------------------------------------
# Eigenvalue lower bounds on one parity block
# ---------------------------------------------------------------------------
#
# For the operator -Laplace - qt with qt = scale q + shift, restricted to one
# parity class.  Rough bounds: with s0 = max(0, -inf qt) and W = qt + s0 >= 0,
# Liu's estimate for (-Laplace + s0 - rho) u = lam W u shows that at most k-1
# eigenvalues lie below rho whenever rho <= s0 + nu_k, nu_k the k-th
# eigenvalue of (K - W / (1 - C^2), M) and C^2 = sup W C_{s0}^2.  Lehmann's
# bound then sharpens the lowest ones.


@dataclass
class BlockBound:
    block: int
    k: int
    lower: float
    method: str
    ritz: float
    rough: list[float]
    m: int = 0
    rho: float | None = None
    ch2: float = 0.0

    def as_dict(self) -> dict:
        return {"block": self.block, "k": self.k, "lower": self.lower, "method": self.method,
                "ritz": self.ritz, "m": self.m, "rho": self.rho, "ch2": self.ch2, "rough": self.rough[:6]}


def _potential_range(op: LinearizedOperator, scale: float, shift: float) -> Interval:
    return op.q_range * Interval(scale) + Interval(shift)


def rough_block_bounds(op: LinearizedOperator, C_N: ProjectionConstant, b: int, count: int,
                       scale: float = 1.0, shift: float = 0.0, s0: float = 0.0) -> tuple[list[float], float]:
    """Lower bounds of the first ``count`` eigenvalues on block b, and C^2.

    ``s0`` is raised to -inf qt when needed; each bound is capped at s0.
    """
    if scale < 0:
        raise ValueError("scale must be nonnegative")
    qr = _potential_range(op, scale, shift)
    s0 = Interval(max(0.0, -qr.lo, s0))
    ch2 = (qr + s0) * C_N.shifted(s0).sqr()
    if not ch2.hi < 1:
        raise NotCoercive(f"projection correction too large (C^2 sup W = {ch2.hi:.3g})")
    W = op.potential[b].scale(Interval(scale)) + op.mass[b].scale(Interval(shift) + s0)
    B = op.stiffness[b] - W.scale(1 / (1 - Interval(ch2.hi)))
    nus = verified_sym_geig(op.mass[b], B, merge=False).enclosures
    out = [min((Interval(e.lo) + s0).lo, s0.lo) for e in nus[:count]]
    return out, ch2.hi


def lehmann_block(op: LinearizedOperator, b: int, m: int, rho: float, k: int = 1,
                  scale: float = 1.0, shift: float = 0.0) -> float:
    """Lower bound of the k-th eigenvalue on block b from m >= k Ritz vectors, given rho <= mu_{m+1}.

    With A0 = (v_i, v_j), A1 = <L v_i, v_j> and A2 = (L v_i, L v_j), let
    tau_1 <= ... <= tau_m be the eigenvalues of
    (A1 - rho A0) x = tau (A2 - 2 rho A1 + rho^2 A0) x.  If tau_{m+1-k} < 0
    then mu_k >= rho + 1 / tau_{m+1-k}.
    """
    if not 1 <= k <= m:
        raise ValueError("need 1 <= k <= m")
    _, V = op.block_ritz(b, scale, shift)
    Vm = V[:, :m]
    idx = op.blocks[b].flat(op.N)
    A0 = op.mass[b].congruence(Vm[idx])
    A1 = op.operator_block(b, scale, shift).congruence(Vm[idx])
    g = op.residual_quad
    q2 = len(g.cx) * len(g.cy)
    rows = [op.apply_on_grid(Vm[:, j], scale, shift) for j in range(m)]
    Y = IntervalArray(np.stack([r.lo.reshape(q2) for r in rows]), np.stack([r.hi.reshape(q2) for r in rows]))
    w2 = IntervalArray(g.wx.lo[:, None], g.wx.hi[:, None]) * IntervalArray(g.wy.lo[None, :], g.wy.hi[None, :])
    w2 = w2 * IntervalArray.coerce(op.area)
    Z = Y * IntervalArray(w2.lo.reshape(1, q2), w2.hi.reshape(1, q2))
    A2 = IntervalSymMatrix(imatmul(Z, Y.T))
    r = Interval(rho)
    lhs = A1 - A0.scale(r)
    rhs = A2 - A1.scale(2 * r) + A0.scale(r.sqr())
    tau = verified_sym_geig(rhs, lhs, merge=False).enclosures[m - k]
    if not tau.hi < 0:
        raise EnclosureFail("Lehmann pencil eigenvalue is not negative")
    return (r + 1 / Interval(tau.hi)).lo


def block_eig_lower(op: LinearizedOperator, C_N: ProjectionConstant, b: int, k: int = 1,
                    scale: float = 1.0, shift: float = 0.0, m_max: int = 6, attempts: int = 3) -> BlockBound:
    """Best available lower bound of the k-th eigenvalue of -Laplace - (scale q + shift) on block b.

    The Liu bound uses the shift s0 at the k-th Ritz value.  Lehmann's bound
    is tried with m = k, k+1, ... Ritz vectors, skipping splits inside
    clusters, with rho from a rough bound whose shift sits at the (m+1)-th
    Ritz value.
    """
    mu_h, _ = op.block_ritz(b, scale, shift)
    n = len(mu_h)
    rough, ch2 = rough_block_bounds(op, C_N, b, k, scale, shift, float(mu_h[k - 1]))
    best = BlockBound(b, k, rough[k - 1], "liu", float(mu_h[k - 1]), rough, ch2=ch2)
    tried = 0
    for m in range(k, min(k + m_max, n)):
        gap = mu_h[m] - mu_h[m - 1]
        if not gap > 1e-6 * max(1.0, abs(mu_h[m])):
            continue
        tried += 1
        try:
            rough_m, ch2_m = rough_block_bounds(op, C_N, b, m + 1, scale, shift, float(mu_h[m]))
            rho = rough_m[m]
            if rho > mu_h[m - 1]:
                val = lehmann_block(op, b, m, rho, k, scale, shift)
                if val > best.lower:
                    best = BlockBound(b, k, val, "lehmann", float(mu_h[k - 1]), rough_m, m, rho, ch2_m)
                    break
        except (EnclosureFail, NotSPD, NotCoercive) as exc:
            log.debug("lehmann block %d m=%d: %s", b, m, exc)
        if tried >= attempts:
            break
    return best


# ---------------------------------------------------------------------------
# Lower bound of the first eigenvalue
# ---------------------------------------------------------------------------


@dataclass
class Mu1Bound:
    lower: float
    blocks: list[BlockBound]

    @property
    def method(self) -> str:
        return min(self.blocks, key=lambda x: x.lower).method

    def as_dict(self) -> dict:
        return {"lower": self.lower, "blocks": [b.as_dict() for b in self.blocks]}


def mu1_lower_bound(u: LegendreFunction, p: ProblemSpec, C_N: ProjectionConstant,
                    op: LinearizedOperator | None = None, m_max: int = 8,
                    require_positive: bool = False) -> Mu1Bound:
    """Rigorous lower bound of the smallest eigenvalue of -Laplace - f'(u)."""
    op = op or LinearizedOperator(u, p)
    parts = [block_eig_lower(op, C_N, b, 1, m_max=m_max) for b in range(len(op.blocks))]
    res = Mu1Bound(min(x.lower for x in parts), parts)
    if require_positive and not res.lower > 0:
        raise Mu1NotPositive(f"mu_1 lower bound {res.lower:.6g} is not positive")
    return res


# ---------------------------------------------------------------------------
# Inverse norm
# ---------------------------------------------------------------------------


@dataclass
class InverseNormBound:
    bound: Interval
    sigma: float
    ch2: float
    below: list[int]
    lam_below: float | None
    lam_above: float | None
    details: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"sigma": self.sigma, "ch2": self.ch2, "below": self.below, "lam_below": self.lam_below,
                "lam_above": self.lam_above, "blocks": self.details}


def _recip_lo(x: float) -> float:
    """Lower bound of 1/x for x > 0; +inf once 1/x overflows."""
    return math.inf if x < 1 / sys.float_info.max else (1 / Interval(x)).lo


def _recip_hi(x: float) -> float:
    return math.inf if x < 1 / sys.float_info.max else (1 / Interval(x)).hi


def _liu(lam_h: float, ch2: float) -> float:
    """Lower bound lam_h / (1 + C^2 lam_h), rounded down."""
    x = Interval(lam_h)
    return (x / (1 + Interval(ch2) * x)).lo


_FRACTIONS = (0.9999, 0.999, 0.99, 0.95, 0.8, 0.5)


def _lambda_above(op: LinearizedOperator, C_N: ProjectionConstant, b: int, k: int,
                  lam_h: float, sigma: float, liu: float) -> tuple[float, str]:
    """Lower bound of the k-th eigenvalue lam_k > 1 of S u = lam W u on block b.

    With W >= 0 the number of lam_j below Lam equals the number of negative
    eigenvalues of S - Lam W = -Laplace - (Lam q + (Lam - 1) sigma), so
    lam_k >= Lam as soon as the k-th eigenvalue of that operator is >= 0.
    """
    best, how = liu, "liu"
    for f in _FRACTIONS:
        lam = 1.0 + f * (lam_h - 1.0)
        if lam <= best:
            break
        shift = (Interval(lam) - 1) * Interval(sigma)
        # shift is used as an exact float: round it up, which only lowers the operator
        sh = shift.hi
        try:
            bb = block_eig_lower(op, C_N, b, k, lam, sh)
        except (NotCoercive, EnclosureFail, NotSPD) as exc:
            log.debug("lambda above, block %d: %s", b, exc)
            continue
        if bb.lower >= 0:
            return lam, f"count at {lam:.9g} ({bb.method})"
    return best, how


def inverse_norm_bound(u: LegendreFunction, p: ProblemSpec, C_N: ProjectionConstant,
                       op: LinearizedOperator | None = None) -> InverseNormBound:
    """Upper bound of the norm of the inverse linearization from H^-1 to H^1_0.

    With sigma = max(0, -inf q), S = -Laplace + sigma and W = q + sigma >= 0,
    the bound is max_k lam_k / |lam_k - 1| over the eigenvalues of S u = lam W u.
    It dominates the H^-1 to H^1_0 norm because the S-norm dominates the
    H^1_0 norm.  Eigenvalues below 1 are bounded above by their Galerkin
    values; the first one above 1 in each parity block is bounded below.
    """
    op = op or LinearizedOperator(u, p)
    qr = op.q_range
    sigma = max(0.0, -qr.lo)
    sig = Interval(sigma)
    ch2 = Interval(max((qr + sig).hi, 0.0)) * C_N.shifted(sig).sqr()
    lam_below_hi, lam_above_lo = None, None
    below, details, pending = [], [], []
    for b in range(len(op.blocks)):
        A = op.stiffness[b] + op.mass[b].scale(sig)
        B = op.potential[b] + op.mass[b].scale(sig)
        thetas = verified_sym_geig(A, B, merge=False).enclosures
        lams = []  # (lower, upper) of lam = 1/theta, ascending
        for th in reversed(thetas):
            if th.hi <= 0:
                lams.append((math.inf, math.inf))
            elif th.lo <= 0:
                lams.append((_recip_lo(th.hi), math.inf))
            else:
                lams.append((_recip_lo(th.hi), _recip_hi(th.lo)))
        nb = 0
        for lo, hi in lams:
            if hi < 1:
                nb += 1
                lam_below_hi = hi if lam_below_hi is None else max(lam_below_hi, hi)
            elif lo <= 1:
                raise PossiblySingular(f"Galerkin eigenvalue in [{lo}, {hi}] not separated from 1")
        below.append(nb)
        if nb < len(lams):
            pending.append((b, nb, lams[nb][0]))

    def factor(lam):
        return math.inf if lam <= 1 else (1.0 if math.isinf(lam) else lam / (lam - 1))

    # the final bound is at least the Galerkin value; Liu suffices for blocks below it
    target = max([factor(lam_h) for _, _, lam_h in pending] + [1.0])
    for b, nb, lam_h in pending:
        if math.isinf(lam_h):
            lo, how = _recip_lo(ch2.hi), "liu"
        else:
            lo, how = _liu(lam_h, ch2.hi), "liu"
            if factor(lo) > 1.001 * target:
                lo, how = _lambda_above(op, C_N, b, nb + 1, lam_h, sigma, lo)
        if not lo > 1:
            raise PossiblySingular(f"eigenvalue above 1 not separated from 1 in block {b}")
        lam_above_lo = lo if lam_above_lo is None else min(lam_above_lo, lo)
        details.append({"block": b, "below": nb, "galerkin": lam_h, "lower": lo, "method": how})
    K = 1.0
    if lam_below_hi is not None:
        x = Interval(lam_below_hi)
        K = max(K, (x / (1 - x)).hi)
    if lam_above_lo is not None and not math.isinf(lam_above_lo):
        x = Interval(lam_above_lo)
        K = max(K, (x / (x - 1)).hi)
    return InverseNormBound(Interval(1.0, K), sigma, ch2.hi, below, lam_below_hi, lam_above_lo, details)


def dprime_range(u: LegendreFunction, p: ProblemSpec, depth: int = 6) -> Interval:
    """Enclosure of the range of f'(u) over the domain."""
    return fprime_range(u, p, depth)
