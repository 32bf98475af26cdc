"""Certification engine.

Existence comes from a Newton-Kantorovich argument in H^1_0 with
alpha >= |F'(u)^-1 F(u)|, beta >= |F'(u)^-1| L and L a Lipschitz constant of
F' on the ball of radius r = next float above 2 alpha.  Nonnegativity of the
solution is then checked by one of three criteria picked from the signs of
lambda - lambda_1 and of the coefficients.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Sequence

import numpy as np

from . import __version__
from .eigen_bounds import (Block, InverseNormBound, LinearizedOperator, Mu1Bound, ProjectionConstant,
                           ikron, inverse_norm_bound, mu1_lower_bound, verified_sym_geig, _sub)
from .errors import (Assumption4Unverified, CertError, ConstantUnavailable, EnclosureFail, Indeterminate,
                     KantorovichFail, Mu1NotPositive, StrategyInapplicable, SupersetDoesNotCover)
from .galerkin import ProblemSpec, solve
from .interval import Interval, IntervalArray, from_decimal, imatmul, pi_enclosure, pow_int, root, sqrt, to_json
from .legendre_basis import (LegendreFunction, Rectangle, admissible_order, family_table, gauss_rule,
                             grid_values, mass_1d, quad_grid, stiffness_1d)
from .rigor_norms import (MAX_DEPTH, _f_interval, build_flag_grid, lq_norm, negative_part_h10,
                          negative_part_lq, positive_somewhere, residual_l2)

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
VERDICTS = ("existence-only", "nonnegative", "positive", "failed", "no-positive-solution")
PROVENANCE = ("pinned-from-paper", "closed-form", "supplied")

# Upper bounds of embedding constants of H^1_0((0,1)^2) into L^q.
_PINNED_UNIT = {4: "0.31830989", 6: "0.39585400"}

MAX_PRINCIPLE_NOTE = ("positivity via maximum principle: a nonnegative, nontrivial solution of "
                      "-Laplace u = c(x) u with bounded c is positive in the interior")


# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    value: Interval
    provenance: str
    note: str = ""

    def __post_init__(self):
        if self.provenance not in PROVENANCE:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def as_dict(self) -> dict:
        d = {"value": to_json(self.value), "provenance": self.provenance}
        if self.note:
            d["note"] = self.note
        return d


def lambda1_rect(rect: Rectangle) -> Interval:
    """pi^2 (1/a^2 + 1/b^2)."""
    return pi_enclosure().sqr() * (1 / rect.a.sqr() + 1 / rect.b.sqr())


class ConstantsRegistry:
    """Embedding, eigenvalue and projection constants for one rectangle."""

    def __init__(self, domain: Rectangle | None = None, supplied: dict[int, Any] | None = None):
        self.domain = domain or Rectangle.unit()
        self._supplied: dict[int, Interval] = {}
        self._cn: dict[int, ProjectionConstant] = {}
        for q, v in (supplied or {}).items():
            self.supply(q, v)

    def supply(self, q: int, value) -> None:
        """Register an externally certified C_q (used as given)."""
        v = from_decimal(value) if isinstance(value, str) else Interval.coerce(value)
        if not v.lo > 0:
            raise ValueError("embedding constants are positive")
        self._supplied[int(q)] = v

    def lambda1(self, rect: Rectangle | None = None) -> Constant:
        return Constant(lambda1_rect(rect or self.domain), "closed-form")

    @property
    def C2(self) -> Constant:
        return Constant(1 / sqrt(self.lambda1().value), "closed-form")

    def Cq(self, q: int) -> Constant:
        q = int(q)
        if q == 2:
            return self.C2
        if q in self._supplied:
            return Constant(self._supplied[q], "supplied")
        if q in _PINNED_UNIT:
            c = from_decimal(_PINNED_UNIT[q])
            c = Interval(0.0, c.hi)
            if self.domain.is_unit():
                return Constant(c, "pinned-from-paper")
            # zero extension into the square of side s, and C_q(s Q) = s^(2/q) C_q(Q)
            s = Interval(max(self.domain.a.hi, self.domain.b.hi))
            scale = root(pow_int(s, 2), q)
            return Constant(Interval(0.0, (c * scale).hi), "pinned-from-paper",
                            "unit-square value scaled to the enclosing square")
        raise ConstantUnavailable(f"no certified embedding constant C_{q} for {self.domain.as_tuple()}")

    def CN(self, N: int) -> ProjectionConstant:
        if N not in self._cn:
            self._cn[N] = ProjectionConstant.for_space(N, self.domain)
        return self._cn[N]

    def snapshot(self, exponents: Sequence[int] = (), N: int | None = None) -> dict:
        out = {"C2": self.C2.as_dict(), "lambda1": self.lambda1().as_dict()}
        for q in sorted({i + 1 for i in exponents} | set(self._supplied)):
            try:
                out[f"C{q}"] = self.Cq(q).as_dict()
            except ConstantUnavailable:
                pass
        if N is not None:
            cn = self.CN(N)
            out["CN"] = {"value": to_json(cn.value), "provenance": cn.provenance, "N": N}
        return out

    def report(self) -> list[tuple[str, Interval, str]]:
        rows = [("C2", self.C2.value, self.C2.provenance),
                ("lambda1", self.lambda1().value, "closed-form")]
        for q in sorted(set(_PINNED_UNIT) | set(self._supplied)):
            c = self.Cq(q)
            rows.append((f"C{q}", c.value, c.provenance))
        return rows


# ---------------------------------------------------------------------------
# Residual in the dual norm
# ---------------------------------------------------------------------------


@dataclass
class ResidualBound:
    l2: Interval
    via_c2: Interval
    via_galerkin: Interval
    algebraic: Interval

    @property
    def dual(self) -> Interval:
        return Interval(0.0, min(self.via_c2.hi, self.via_galerkin.hi))

    def as_dict(self) -> dict:
        return {k: to_json(getattr(self, k)) for k in ("l2", "via_c2", "via_galerkin", "algebraic", "dual")}


def _parity_blocks(N: int) -> list[Block]:
    idx = np.arange(N)
    parts = [idx[0::2], idx[1::2]] if N > 1 else [idx]
    return [Block(x, y) for x in parts for y in parts]


@lru_cache(maxsize=16)
def _stiffness_coercivity(N: int, dom: tuple) -> float:
    """c > 0 with K >= c diag(K) for the stiffness matrix."""
    rect = Rectangle(*dom)
    A, M = stiffness_1d(N), mass_1d(N)
    ba = IntervalArray.coerce(rect.b / rect.a)
    ab = IntervalArray.coerce(rect.a / rect.b)
    c = math.inf
    for bl in _parity_blocks(N):
        x, y = bl.xs, bl.ys
        K = ikron(_sub(A, x, x), _sub(M, y, y)) * ba + ikron(_sub(M, x, x), _sub(A, y, y)) * ab
        d = IntervalArray(np.diag(np.diag(K.lo)), np.diag(np.diag(K.hi)))
        c = min(c, verified_sym_geig(d, K).enclosures[0].lo)
    return c


def galerkin_residual(u: LegendreFunction, p: ProblemSpec) -> IntervalArray:
    """Enclosure of the vector (grad u, grad phi_kl) - (f(u), phi_kl)."""
    N = u.N
    d = u.domain
    A, M = stiffness_1d(N), mass_1d(N)
    C = IntervalArray(u.coeffs)
    lin = (imatmul(imatmul(A, C), M) * IntervalArray.coerce(d.b / d.a)
           + imatmul(imatmul(M, C), A) * IntervalArray.coerce(d.a / d.b))
    g = quad_grid(gauss_rule(admissible_order((p.max_exponent + 1) * (N + 1))))
    U = grid_values(u, g.cx, g.rx, g.cy, g.ry, "u")
    F = _f_interval(p, U)
    F = F * IntervalArray(g.wx.lo[:, None], g.wx.hi[:, None]) * IntervalArray(g.wy.lo[None, :], g.wy.hi[None, :])
    Px = family_table(g.cx, g.rx, N, "phi")
    Py = family_table(g.cy, g.ry, N, "phi")
    load = imatmul(imatmul(Px.T, F), Py) * IntervalArray.coerce(d.a * d.b)
    return lin - load


def energy_norm(u: LegendreFunction) -> Interval:
    """Enclosure of |grad u|_{L^2}."""
    d = u.domain
    A, M = stiffness_1d(u.N), mass_1d(u.N)
    C = IntervalArray(u.coeffs)
    KC = (imatmul(imatmul(A, C), M) * IntervalArray.coerce(d.b / d.a)
          + imatmul(imatmul(M, C), A) * IntervalArray.coerce(d.a / d.b))
    s = (C * KC).sum()
    return root(Interval(max(s.lo, 0.0), max(s.hi, 0.0)), 2)


def residual_dual_bound(u: LegendreFunction, p: ProblemSpec, registry: ConstantsRegistry,
                        order_margin: int = 0, l2: Interval | None = None) -> ResidualBound:
    """Upper bounds of |F(u)|_{H^-1}.

    Two routes: C_2 |r|_{L^2} with r = Laplace u + f(u), and, splitting a test
    function v = P v + (v - P v) with P the Galerkin projection,
    C_N |r|_{L^2} + |g|_{K^-1} with g the algebraic Galerkin residual.
    """
    l2 = l2 if l2 is not None else residual_l2(u, p, order_margin)
    via_c2 = registry.C2.value * l2
    g = galerkin_residual(u, p)
    N = u.N
    d = u.domain
    A, M = stiffness_1d(N), mass_1d(N)
    dA = IntervalArray(np.diag(A.lo), np.diag(A.hi))
    dM = IntervalArray(np.diag(M.lo), np.diag(M.hi))
    col = lambda v: IntervalArray(v.lo[:, None], v.hi[:, None])
    row = lambda v: IntervalArray(v.lo[None, :], v.hi[None, :])
    diagK = (col(dA) * row(dM) * IntervalArray.coerce(d.b / d.a)
             + col(dM) * row(dA) * IntervalArray.coerce(d.a / d.b))
    dlo = IntervalArray(diagK.lo)
    s = (g.sqr() / dlo).sum()
    c = _stiffness_coercivity(N, d.as_tuple())
    if not c > 0:
        raise EnclosureFail("stiffness coercivity not verified")
    alg = Interval(0.0, root(Interval(0.0, (s / Interval(c)).hi), 2).hi)
    via_gal = registry.CN(N).value * l2 + alg
    return ResidualBound(l2, Interval(0.0, via_c2.hi), Interval(0.0, via_gal.hi), alg)


# ---------------------------------------------------------------------------
# Kantorovich ingredients
# ---------------------------------------------------------------------------


def lq_norms(u: LegendreFunction, p: ProblemSpec, depth: int = 7) -> dict[int, Interval]:
    return {i + 1: lq_norm(u, i + 1, depth) for _, i in p.terms}


def lipschitz_bound(p: ProblemSpec, u: LegendreFunction, r, registry: ConstantsRegistry,
                    norms: dict[int, Interval] | None = None) -> Interval:
    """Sum over terms of |a_i| i (i-1) C^3 (|u|_{L^{i+1}} + C r)^(i-2), C = C_{i+1}."""
    r = Interval.coerce(r)
    if r.lo < 0:
        raise ValueError("radius must be nonnegative")
    norms = norms if norms is not None else lq_norms(u, p)
    total = Interval(0.0)
    for a, i in p.terms:
        if a.lo == 0.0 and a.hi == 0.0:
            continue
        C = registry.Cq(i + 1).value
        base = Interval(0.0, norms[i + 1].hi) + C * r
        total = total + abs(a) * (i * (i - 1)) * C.sqr() * C * pow_int(base, i - 2)
    return Interval(0.0, total.hi)


def newton_kantorovich(alpha, beta) -> tuple[Interval, Interval]:
    """rho = 2 alpha / (1 + sqrt(1 - 2 alpha beta)) and the uniqueness radius 2 alpha."""
    a = Interval(Interval.coerce(alpha).hi)
    b = Interval(Interval.coerce(beta).hi)
    if a.hi < 0 or b.hi < 0:
        raise ValueError("alpha and beta must be nonnegative")
    disc = 1 - 2 * a * b
    if not disc.lo >= 0:
        raise KantorovichFail(f"alpha beta = {(a * b).hi:.6g} exceeds 1/2 or is not provably below it")
    rho = 2 * a / (1 + sqrt(Interval(disc.lo)))
    return Interval(0.0, rho.hi), Interval(0.0, (2 * a).hi)


def compute_alpha(inverse: Interval, residual: Interval) -> Interval:
    """alpha >= |F'(u)^-1|_{H^-1 -> H^1_0} |F(u)|_{H^-1}."""
    return Interval(0.0, (Interval(Interval.coerce(inverse).hi) * Interval(Interval.coerce(residual).hi)).hi)


# ---------------------------------------------------------------------------
# Positivity checks
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    strategy: str
    verdict: str
    value: Interval | None = None
    bound: Interval | None = None
    details: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict in ("nonnegative", "positive")

    def as_dict(self) -> dict:
        d = {"strategy": self.strategy, "verdict": self.verdict, "details": _jsonable(self.details),
             "notes": list(self.notes)}
        if self.value is not None:
            d["value"] = to_json(self.value)
        if self.bound is not None:
            d["bound"] = to_json(self.bound)
        return d


def _jsonable(x):
    if isinstance(x, Interval):
        return to_json(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _lambda_vs(p: ProblemSpec, lam1: Interval) -> int:
    """-1 if lambda < lam1, +1 if lambda >= lam1, raise when undecided."""
    if p.lam.hi < lam1.lo:
        return -1
    if p.lam.lo >= lam1.hi:
        return 1
    raise Indeterminate(f"cannot order lambda={p.lam} and lambda_1={lam1}")


def theorem1_lhs(p: ProblemSpec, rho, neg: dict[int, Interval], registry: ConstantsRegistry) -> Interval:
    """Sum over a_i >= 0 of a_i C^2 (|u_-|_{L^{i+1}} + C rho)^(i-1), C = C_{i+1}."""
    rho = Interval(0.0, Interval.coerce(rho).hi)
    total = Interval(0.0)
    for a, i in p.positive_terms:
        C = registry.Cq(i + 1).value
        total = total + a * C.sqr() * pow_int(neg[i + 1] + C * rho, i - 1)
    return Interval(max(total.lo, 0.0), total.hi)


def _nontrivial(u: LegendreFunction, rho: Interval) -> bool:
    return energy_norm(u).lo > Interval.coerce(rho).hi


def _theorem1_core(name: str, p: ProblemSpec, u: LegendreFunction, rho, lam1: Interval,
                   registry: ConstantsRegistry, depth: int, max_depth: int | None) -> CheckResult:
    if _lambda_vs(p, lam1) >= 0:
        raise StrategyInapplicable(f"lambda={p.lam.hi:.6g} is not below lambda_1={lam1.lo:.6g}")
    neg = {i + 1: negative_part_lq(u, i + 1, depth, max_depth) for _, i in p.positive_terms}
    lhs = theorem1_lhs(p, rho, neg, registry)
    # lower bound of 1 - lambda/lambda_1 from a lower bound of lambda_1
    rhs = Interval((1 - Interval(max(p.lam.hi, 0.0)) / Interval(lam1.lo)).lo)
    res = CheckResult(name, "existence-only", lhs, rhs,
                      {"negative_parts": {f"L{q}": v for q, v in neg.items()}, "lambda1": lam1})
    if lhs.hi < rhs.lo:
        res.verdict = "nonnegative"
        if _nontrivial(u, rho) and p.polynomial:
            res.verdict = "positive"
            res.notes.append(MAX_PRINCIPLE_NOTE)
        elif not p.polynomial:
            res.notes.append("outside the polynomial class: positivity not claimed")
        else:
            res.notes.append("solution not separated from zero: positivity not claimed")
    return res


def check_theorem1(p: ProblemSpec, u: LegendreFunction, rho, registry: ConstantsRegistry,
                   depth: int = 7, max_depth: int | None = None) -> CheckResult:
    """Nonnegativity when lambda < lambda_1; terms with a_i < 0 are dropped."""
    return _theorem1_core("theorem1", p, u, rho, registry.lambda1().value, registry, depth, max_depth)


def is_allen_cahn(p: ProblemSpec) -> bool:
    if len(p.terms) != 1:
        return False
    a, i = p.terms[0]
    return i == 3 and p.lam.lo > 0 and a.lo == -p.lam.hi and a.hi == -p.lam.lo


def check_theorem2(p: ProblemSpec, u: LegendreFunction, rho, registry: ConstantsRegistry,
                   depth: int = 7, max_depth: int = MAX_DEPTH, mu1: Mu1Bound | None = None,
                   op: LinearizedOperator | None = None) -> CheckResult:
    """Nonnegativity for lambda >= lambda_1 with every a_i <= 0."""
    if any(a.hi > 0 for a, _ in p.terms):
        raise StrategyInapplicable("some nonlinear coefficient may be positive")
    if _lambda_vs(p, registry.lambda1().value) < 0:
        raise StrategyInapplicable("lambda is below lambda_1")
    rho = Interval(0.0, Interval.coerce(rho).hi)
    if mu1 is None:
        mu1 = mu1_lower_bound(u, p, registry.CN(u.N), op)
    if not mu1.lower > 0:
        raise Mu1NotPositive(f"mu_1 lower bound {mu1.lower:.6g} is not positive")
    neg = negative_part_h10(u, depth, max_depth)
    details = {"mu1_lower": mu1.lower, "mu1": mu1.as_dict(), "negative_part_h10": neg}
    # the solution lies in the ball of radius rho.hi, so max(u, 0) must be strictly inside it
    if not neg.hi < rho.hi:
        raise Assumption4Unverified(f"|u_-|_V <= {neg.hi:.6g} not below rho = {rho.hi:.6g}")
    if not positive_somewhere(u, min(depth, 6)):
        raise Assumption4Unverified("positive part of the approximation not shown to be nonzero")
    res = CheckResult("theorem2", "nonnegative", neg, rho, details)
    if is_allen_cahn(p):
        res.verdict = "positive"
        res.notes.append(MAX_PRINCIPLE_NOTE)
    return res


@dataclass(frozen=True)
class Frame:
    """Boundary frame {x in domain : dist(x, boundary) < width}."""

    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("frame width must be positive")


def _disjoint(rects: Sequence[Rectangle]) -> bool:
    for i, r in enumerate(rects):
        for s in rects[i + 1:]:
            if r.x0 <= s.x1 and s.x0 <= r.x1 and r.y0 <= s.y1 and s.y0 <= r.y1:
                return False
    return True


def superset_lambda1(superset, domain: Rectangle) -> Interval:
    """Lower bound (as a point interval) of the first Dirichlet eigenvalue of the superset.

    Disjoint rectangles: minimum of the closed forms.  A boundary frame of
    width w: each of its four side strips meets the outer boundary along
    segments of length w, and the one-sided Poincare inequality on those
    segments gives pi^2 / (4 w^2); a frame is also a subset of the domain.
    """
    lam_dom = lambda1_rect(domain)
    if isinstance(superset, Frame):
        w = Interval(superset.width)
        val = pi_enclosure().sqr() / (4 * w.sqr())
        return Interval(max(val.lo, lam_dom.lo), max(val.hi, lam_dom.hi))
    rects = list(superset)
    if not rects:
        raise ValueError("empty superset")
    if not _disjoint(rects):
        raise ValueError("superset rectangles must have disjoint closures")
    lo = min(lambda1_rect(r).lo for r in rects)
    return Interval(max(lo, lam_dom.lo))


def _cell_physical(grid, i: int, j: int, domain: Rectangle) -> tuple[Interval, Interval]:
    t0, t1, s0, s1 = grid.cell_box(i, j)
    bx = Interval(domain.x0) + domain.a * Interval(t0, t1)
    by = Interval(domain.y0) + domain.b * Interval(s0, s1)
    return bx, by


def _covered(bx: Interval, by: Interval, superset, domain: Rectangle) -> bool:
    if isinstance(superset, Frame):
        w = superset.width
        return (bx.hi <= (Interval(domain.x0) + Interval(w)).lo or bx.lo >= (Interval(domain.x1) - Interval(w)).hi
                or by.hi <= (Interval(domain.y0) + Interval(w)).lo or by.lo >= (Interval(domain.y1) - Interval(w)).hi)
    return any(r.contains_box(bx, by) for r in superset)


def check_corollary_a1(p: ProblemSpec, u: LegendreFunction, rho, r_inf, superset,
                       registry: ConstantsRegistry, depth: int = 7,
                       max_depth: int | None = None) -> CheckResult:
    """Theorem-1 inequality with lambda_1 of a region containing {u - r_inf <= 0}."""
    r_inf = Interval.coerce(r_inf)
    grid = build_flag_grid(u, Interval(0.0, r_inf.hi), depth)
    bad = []
    for i, j in zip(*np.nonzero(grid.flagged)):
        bx, by = _cell_physical(grid, int(i), int(j), u.domain)
        if not _covered(bx, by, superset, u.domain):
            bad.append((int(i), int(j)))
    if bad:
        raise SupersetDoesNotCover(f"{len(bad)} flagged cells outside the superset, first {bad[0]}")
    lam1 = superset_lambda1(superset, u.domain)
    res = _theorem1_core("corollaryA1", p, u, rho, lam1, registry, depth, max_depth)
    res.details["flagged_cells"] = int(np.count_nonzero(grid.flagged))
    return res


# ---------------------------------------------------------------------------
# Strategy selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoPositiveSolution:
    reason: str
    claim: str = ("documented classification: testing the equation against the positive first "
                  "eigenfunction excludes positive solutions in this cell; not re-proved here")


def select_strategy(p: ProblemSpec, registry: ConstantsRegistry | None = None):
    """Ordered list of applicable checkers, or NoPositiveSolution."""
    registry = registry or ConstantsRegistry(p.domain)
    side = _lambda_vs(p, registry.lambda1().value)
    nonneg = all(a.lo >= 0 for a, _ in p.terms)
    nonpos = all(a.hi <= 0 for a, _ in p.terms)
    if not (nonneg or nonpos) and any(a.lo < 0 < a.hi for a, _ in p.terms):
        raise Indeterminate("coefficient sign is not determined")
    if side < 0:
        if nonpos:
            return NoPositiveSolution("lambda < lambda_1 and every a_i <= 0")
        return ["theorem1"]
    if nonneg:
        return NoPositiveSolution("lambda >= lambda_1 and every a_i >= 0")
    if nonpos:
        return ["theorem2"]
    return ["corollaryA1"]


# ---------------------------------------------------------------------------
# Certificate
# ---------------------------------------------------------------------------


def coeff_digest(u: LegendreFunction) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(u.coeffs, dtype="<f8").tobytes())
    h.update(repr(u.domain.as_tuple()).encode())
    return h.hexdigest()


def problem_dict(p: ProblemSpec) -> dict:
    return {"lambda": to_json(p.lam), "terms": [{"a": to_json(a), "exponent": i} for a, i in p.terms],
            "domain": list(p.domain.as_tuple()), "description": p.describe(), "digest": p.digest()}


@dataclass
class Certificate:
    problem: dict
    N: int | None
    u_digest: str | None
    verdict: str
    strategy: str | None = None
    stage: str | None = None
    error: str | None = None
    alpha: Interval | None = None
    beta: Interval | None = None
    rho: Interval | None = None
    r: Interval | None = None
    L: Interval | None = None
    inverse_norm: Interval | None = None
    residual: dict | None = None
    mu1_lower: Interval | None = None
    negative_parts: dict = field(default_factory=dict)
    margins: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    _INTERVALS = ("alpha", "beta", "rho", "r", "L", "inverse_norm", "mu1_lower")

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")

    def to_dict(self) -> dict:
        d = {"schema_version": SCHEMA_VERSION, "generator": f"ellipcert {__version__}",
             "problem": self.problem, "N": self.N, "u_digest": self.u_digest,
             "verdict": self.verdict, "strategy": self.strategy, "stage": self.stage, "error": self.error}
        for k in self._INTERVALS:
            v = getattr(self, k)
            d[k] = None if v is None else to_json(v)
        d.update({"residual": self.residual, "negative_parts": _jsonable(self.negative_parts),
                  "margins": _jsonable(self.margins), "checks": self.checks, "notes": self.notes,
                  "constants": self.constants, "diagnostics": _jsonable(self.diagnostics)})
        return d

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=False)

    @property
    def succeeded(self) -> bool:
        return self.verdict in ("nonnegative", "positive")


def load_schema() -> dict:
    return json.loads(resources.files("ellipcert").joinpath("schema/certificate.schema.json").read_text())


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


@dataclass
class PipelineConfig:
    N: int = 40
    tol: float = 1e-12
    max_iter: int = 50
    amplitude: float | None = None
    depth: int = 7
    max_depth: int = MAX_DEPTH
    order_margin: int = 0
    strategy: str | None = None
    approx: LegendreFunction | None = None
    r_inf: Interval | None = None
    superset: Any = None
    mu1_m_max: int = 16

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if not 1 <= self.depth <= MAX_DEPTH:
            raise ValueError(f"depth must lie in [1, {MAX_DEPTH}]")


class _Stage:
    def __init__(self, cert: Certificate):
        self.cert = cert
        self.name = None

    def __call__(self, name: str):
        self.name = name
        log.info("stage %s", name)
        return self


def run_pipeline(p: ProblemSpec, config: PipelineConfig | None = None,
                 registry: ConstantsRegistry | None = None) -> Certificate:
    """Solve, bound, certify.  Failures are reported in the certificate."""
    cfg = config or PipelineConfig()
    reg = registry or ConstantsRegistry(p.domain)
    cert = Certificate(problem_dict(p), cfg.N, None, "failed")
    stage = _Stage(cert)
    try:
        stage("strategy")
        strat = select_strategy(p, reg)
        if isinstance(strat, NoPositiveSolution):
            cert.verdict = "no-positive-solution"
            cert.N = None
            cert.notes += [strat.reason, strat.claim]
            return cert
        if cfg.strategy:
            if cfg.strategy not in ("theorem1", "theorem2", "corollaryA1"):
                raise ValueError(f"unknown strategy {cfg.strategy!r}")
            strat = [cfg.strategy]
        stage("solve")
        if cfg.approx is not None:
            u = cfg.approx
            if u.domain != p.domain:
                raise ValueError("approximation domain differs from the problem domain")
        else:
            u, rep = solve(p, cfg.N, cfg.tol, cfg.max_iter, cfg.amplitude)
            cert.diagnostics["newton"] = {"iterations": rep.iterations, "residual": rep.residual}
        cert.N = u.N
        cert.u_digest = coeff_digest(u)
        cert.constants = reg.snapshot([i for _, i in p.terms], u.N)
        stage("residual")
        res = residual_dual_bound(u, p, reg, cfg.order_margin)
        cert.residual = res.as_dict()
        stage("inverse-norm")
        op = LinearizedOperator(u, p)
        inv: InverseNormBound = inverse_norm_bound(u, p, reg.CN(u.N), op)
        cert.inverse_norm = inv.bound
        cert.diagnostics["inverse_norm"] = inv.as_dict()
        stage("lipschitz")
        alpha = compute_alpha(inv.bound, res.dual)
        r = Interval(0.0, float(np.nextafter((2 * Interval(alpha.hi)).hi, np.inf)))
        norms = lq_norms(u, p, cfg.depth)
        L = lipschitz_bound(p, u, r, reg, norms)
        beta = Interval(0.0, (Interval(inv.bound.hi) * Interval(L.hi)).hi)
        cert.alpha, cert.r, cert.L, cert.beta = alpha, r, L, beta
        cert.diagnostics["lq_norms"] = {f"L{q}": v for q, v in norms.items()}
        stage("kantorovich")
        rho, _ = newton_kantorovich(alpha, beta)
        cert.rho = rho
        cert.margins["alpha_beta"] = Interval(0.0, (Interval(alpha.hi) * Interval(beta.hi)).hi)
        cert.verdict = "existence-only"
        _positivity(cert, stage, p, u, rho, strat, cfg, reg, op)
    except CertError as exc:
        cert.stage = stage.name
        cert.error = exc.code
        cert.notes.append(f"{exc.code}: {exc}")
        if stage.name not in ("positivity",):
            cert.verdict = "failed"
    except (ValueError, ArithmeticError) as exc:
        cert.stage = stage.name
        cert.error = type(exc).__name__
        cert.notes.append(f"{type(exc).__name__}: {exc}")
        cert.verdict = "failed"
    return cert


def _positivity(cert, stage, p, u, rho, strat, cfg, reg, op):
    stage("positivity")
    inapplicable = []
    for name in strat:
        try:
            if name == "theorem1":
                res = check_theorem1(p, u, rho, reg, cfg.depth, cfg.max_depth)
            elif name == "theorem2":
                mu1 = mu1_lower_bound(u, p, reg.CN(u.N), op, cfg.mu1_m_max)
                cert.mu1_lower = Interval(mu1.lower)
                cert.diagnostics["mu1"] = mu1.as_dict()
                res = check_theorem2(p, u, rho, reg, cfg.depth, cfg.max_depth, mu1=mu1)
            else:
                if cfg.r_inf is None or cfg.superset is None:
                    raise StrategyInapplicable("corollary A1 needs an L-infinity radius and a superset")
                res = check_corollary_a1(p, u, rho, cfg.r_inf, cfg.superset, reg, cfg.depth, cfg.max_depth)
        except StrategyInapplicable as exc:
            inapplicable.append(f"{name}: {exc}")
            continue
        cert.checks.append(res.as_dict())
        cert.strategy = name
        if res.value is not None:
            cert.margins["condition_value"] = res.value
        if res.bound is not None:
            cert.margins["condition_bound"] = res.bound
        for k in ("negative_parts",):
            if k in res.details:
                cert.negative_parts.update(res.details[k])
        if "negative_part_h10" in res.details:
            cert.negative_parts["H10"] = res.details["negative_part_h10"]
        cert.notes += res.notes
        if res.passed:
            cert.verdict = res.verdict
            return
    if inapplicable and not cert.checks:
        cert.error = "StrategyInapplicable"
        cert.stage = "positivity"
        cert.notes += inapplicable
