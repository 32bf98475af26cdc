"""Floating-point Galerkin solver for -Laplace(u) = f(u) with Dirichlet data.

Nothing here is rigorous.  The coefficients it returns are the *input* of the
verification modules, which recompute everything they need in interval
arithmetic.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import NewtonDiverged
from .interval import Interval, from_decimal, pi_enclosure
from .legendre_basis import (LegendreFunction, Rectangle, admissible_order, float_rule,
                             float_tables, mass_1d_float, stiffness_1d_float)

log = logging.getLogger(__name__)


def _as_interval(v) -> Interval:
    if isinstance(v, Interval):
        return v
    if isinstance(v, str):
        return from_decimal(v)
    return Interval.coerce(v)


@dataclass(frozen=True)
class ProblemSpec:
    """f(t) = lam t + sum_i a_i t |t|^(i-1) on a rectangle.

    Coefficients are kept as intervals (decimal input is read outward); the
    solver uses their midpoints.
    """

    lam: Interval
    terms: tuple[tuple[Interval, int], ...]
    domain: Rectangle = field(default_factory=Rectangle.unit)
    epsilon: Interval | None = None

    def __post_init__(self):
        exps = [i for _, i in self.terms]
        if len(set(exps)) != len(exps):
            raise ValueError("term exponents must be distinct")
        if any(int(i) != i or i < 2 for i in exps):
            raise ValueError("term exponents must be integers >= 2")
        if not any(not (a.lo == 0.0 and a.hi == 0.0) for a, _ in self.terms):
            raise ValueError("at least one nonlinear coefficient must be nonzero")

    @classmethod
    def make(cls, lam="0", terms=(("1", 3),), domain: Rectangle | None = None) -> "ProblemSpec":
        ts = tuple(sorted(((_as_interval(a), int(i)) for a, i in terms), key=lambda t: t[1]))
        return cls(_as_interval(lam), ts, domain or Rectangle.unit())

    @classmethod
    def emden(cls, p: int, domain: Rectangle | None = None) -> "ProblemSpec":
        return cls.make("0", (("1", p),), domain)

    @classmethod
    def allen_cahn(cls, eps, domain: Rectangle | None = None) -> "ProblemSpec":
        """f(t) = eps^-2 (t - t^3)."""
        e = _as_interval(eps)
        if not e.lo > 0:
            raise ValueError("epsilon must be positive")
        k = 1 / e.sqr()
        return cls(k, ((-k, 3),), domain or Rectangle.unit(), e)

    # float views -----------------------------------------------------------
    @property
    def lam_f(self) -> float:
        return self.lam.mid

    @property
    def terms_f(self) -> list[tuple[float, int]]:
        return [(a.mid, i) for a, i in self.terms]

    @property
    def max_exponent(self) -> int:
        return max(i for _, i in self.terms)

    def f(self, t: np.ndarray) -> np.ndarray:
        out = self.lam_f * t
        for a, i in self.terms_f:
            out = out + a * t * np.abs(t) ** (i - 1)
        return out

    def fprime(self, t: np.ndarray) -> np.ndarray:
        out = np.full_like(t, self.lam_f)
        for a, i in self.terms_f:
            out = out + a * i * np.abs(t) ** (i - 1)
        return out

    def lambda1(self) -> Interval:
        """pi^2 (1/a^2 + 1/b^2) for the domain rectangle."""
        d = self.domain
        return pi_enclosure().sqr() * (1 / d.a.sqr() + 1 / d.b.sqr())

    # growth-condition attributes of the polynomial class
    @property
    def positive_terms(self) -> list[tuple[Interval, int]]:
        return [(a, i) for a, i in self.terms if a.lo >= 0]

    @property
    def polynomial(self) -> bool:
        """True when f is a polynomial (every exponent odd)."""
        return all(i % 2 == 1 for _, i in self.terms)

    def describe(self) -> str:
        parts = [f"{self.lam_f:g} t"] + [f"{a:+g} t|t|^{i - 1}" for a, i in self.terms_f]
        return "f(t) = " + " ".join(parts)

    def digest(self) -> str:
        key = repr((self.lam.lo, self.lam.hi,
                    [(a.lo, a.hi, i) for a, i in self.terms], self.domain.as_tuple()))
        return hashlib.sha256(key.encode()).hexdigest()[:16]


@dataclass
class NewtonReport:
    iterations: int
    residual: float
    converged: bool
    history: list[float] = field(default_factory=list)


class _Assembler:
    """Cached quadrature tables for one (problem, N) pair."""

    def __init__(self, p: ProblemSpec, N: int, order: int | None = None):
        self.p = p
        self.N = N
        deg = (p.max_exponent + 1) * (N + 1)
        self.order = order or admissible_order(deg)
        t, w = float_rule(self.order)
        tab = float_tables(t, N)
        self.Phi = tab["phi"]
        self.w = w
        a = p.domain.x1 - p.domain.x0
        b = p.domain.y1 - p.domain.y0
        self.a, self.b = a, b
        self.A = stiffness_1d_float(N)
        self.M = mass_1d_float(N)
        self.K = np.kron(self.A, self.M) * (b / a) + np.kron(self.M, self.A) * (a / b)

    def values(self, c: np.ndarray) -> np.ndarray:
        return self.Phi @ c @ self.Phi.T

    def residual(self, c: np.ndarray) -> np.ndarray:
        U = self.values(c)
        F = self.p.f(U) * np.outer(self.w, self.w)
        load = self.Phi.T @ F @ self.Phi * (self.a * self.b)
        lin = (self.b / self.a) * self.A @ c @ self.M + (self.a / self.b) * self.M @ c @ self.A
        return lin - load

    def jacobian(self, c: np.ndarray) -> np.ndarray:
        N = self.N
        U = self.values(c)
        D = self.p.fprime(U) * np.outer(self.w, self.w) * (self.a * self.b)
        G = (self.Phi[:, :, None] * self.Phi[:, None, :]).reshape(-1, N * N)  # (q, N*N) over (k, i)
        T = G.T @ D @ G  # index ((k,i), (l,j))
        T = T.reshape(N, N, N, N).transpose(0, 2, 1, 3).reshape(N * N, N * N)
        J = self.K - T
        return 0.5 * (J + J.T)


def assemble_residual(p: ProblemSpec, c: np.ndarray) -> np.ndarray:
    """Galerkin residual (grad u, grad phi_kl) - (f(u), phi_kl), shaped like c."""
    c = np.asarray(c, dtype=np.float64)
    return _Assembler(p, c.shape[0]).residual(c)


def assemble_jacobian(p: ProblemSpec, c: np.ndarray) -> np.ndarray:
    """N^2 x N^2 Galerkin matrix of the linearization, row-major in (k, l)."""
    c = np.asarray(c, dtype=np.float64)
    return _Assembler(p, c.shape[0]).jacobian(c)


def project_sine(N: int, domain: Rectangle | None = None) -> np.ndarray:
    """Energy projection of sin(pi x) sin(pi y) (reference coordinates)."""
    t, w = float_rule(N + 20)
    ph = float_tables(t, N)["phi"]
    s = np.sin(np.pi * t)
    # (grad g, grad phi_kl) = lam1_ref-weighted loads; solve with the reference stiffness
    load1 = ph.T @ (w * s)
    A = stiffness_1d_float(N)
    M = mass_1d_float(N)
    rhs = np.outer(load1, load1) * (2 * np.pi ** 2)
    K = np.kron(A, M) + np.kron(M, A)
    return np.linalg.solve(K, rhs.reshape(-1)).reshape(N, N)


def initial_guess(p: ProblemSpec, N: int, amplitude: float | None = None) -> np.ndarray:
    """amplitude times the projected sine bump.

    Without an amplitude, pick s > 0 solving the scalar balance
    s lambda_1 |g|^2 = (f(s g), g) along the bump g; fall back to 1.
    """
    g = project_sine(N, p.domain)
    if amplitude is not None:
        return float(amplitude) * g
    t, w = float_rule(max(3 * N, 60))
    ph = float_tables(t, N)["phi"]
    G = ph @ g @ ph.T
    W = np.outer(w, w)
    area = (p.domain.x1 - p.domain.x0) * (p.domain.y1 - p.domain.y0)
    lam1 = p.lambda1().mid
    m2 = float(np.sum(W * G * G)) * area

    def balance(s):
        return s * lam1 * m2 - float(np.sum(W * p.f(s * G) * G)) * area

    grid = np.geomspace(1e-3, 1e3, 121)
    vals = [balance(s) for s in grid]
    for s0, s1, v0, v1 in zip(grid, grid[1:], vals, vals[1:]):
        if v0 * v1 < 0:
            return scipy.optimize.brentq(balance, s0, s1) * g
    return g


def newton_solve(p: ProblemSpec, init: np.ndarray, tol: float = 1e-12, max_iter: int = 50,
                 ) -> tuple[LegendreFunction, NewtonReport]:
    """Damped Newton iteration with a monotone residual line search."""
    c = np.array(init, dtype=np.float64)
    N = c.shape[0]
    asm = _Assembler(p, N)
    r = asm.residual(c)
    res = float(np.linalg.norm(r))
    hist = [res]
    for it in range(1, max_iter + 1):
        if res <= tol:
            return LegendreFunction(c, p.domain), NewtonReport(it - 1, res, True, hist)
        J = asm.jacobian(c)
        try:
            step = scipy.linalg.solve(J, -r.reshape(-1), assume_a="sym")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
            raise NewtonDiverged(f"singular Jacobian at iteration {it}") from exc
        step = step.reshape(N, N)
        t = 1.0
        while True:
            c_try = c + t * step
            r_try = asm.residual(c_try)
            res_try = float(np.linalg.norm(r_try))
            if res_try < res or t < 2.0 ** -20:
                break
            t *= 0.5
        if not res_try < res:
            # stagnation at rounding level counts as convergence only below tol
            hist.append(res_try)
            if res <= tol:
                break
            raise NewtonDiverged(f"line search stalled at residual {res:.3e} (iteration {it})")
        c, r, res = c_try, r_try, res_try
        hist.append(res)
        log.debug("newton %d: residual %.3e (damping %g)", it, res, t)
    if res <= tol:
        return LegendreFunction(c, p.domain), NewtonReport(len(hist) - 1, res, True, hist)
    raise NewtonDiverged(f"no convergence after {max_iter} iterations (residual {res:.3e})")


def symmetrize(u: LegendreFunction, rel_tol: float = 1e-10) -> LegendreFunction:
    """Zero the odd-parity coefficients of each direction when they are negligible.

    Exact zeros let the verification split its matrices by parity.  The
    result is just another approximation; nothing rigorous depends on the
    dropped values being small.
    """
    c = u.coeffs.copy()
    scale = float(np.abs(c).max()) or 1.0
    if np.abs(c[1::2, :]).max(initial=0.0) <= rel_tol * scale:
        c[1::2, :] = 0.0
    if np.abs(c[:, 1::2]).max(initial=0.0) <= rel_tol * scale:
        c[:, 1::2] = 0.0
    return LegendreFunction(c, u.domain)


def solve(p: ProblemSpec, N: int, tol: float = 1e-12, max_iter: int = 50,
          amplitude: float | None = None, symmetric: bool = True) -> tuple[LegendreFunction, NewtonReport]:
    u, rep = newton_solve(p, initial_guess(p, N, amplitude), tol, max_iter)
    return (symmetrize(u) if symmetric else u), rep


def residual_norm(p: ProblemSpec, u: LegendreFunction) -> float:
    return float(np.linalg.norm(assemble_residual(p, u.coeffs)))


def sample_max(u: LegendreFunction, n: int = 201) -> float:
    return u.max_on_grid(n)
