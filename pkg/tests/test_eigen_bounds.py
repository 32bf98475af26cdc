import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ellipcert.errors import NotSPD
from ellipcert.galerkin import ProblemSpec
from ellipcert.interval import Interval, IntervalArray
from ellipcert.legendre_basis import LegendreFunction, Rectangle, float_tables, mass_1d_float, stiffness_1d_float
from ellipcert.eigen_bounds import (IntervalSymMatrix, LinearizedOperator, ProjectionConstant, block_eig_lower,
                                    dprime_range, inverse_norm_bound, mu1_lower_bound, verified_sym_geig)

TWO_PI2 = 2 * math.pi ** 2


# --- exact oracle: roots of det(B - t A) by Sturm sequences ---------------

def _det(M):
    M = [row[:] for row in M]
    n, d = len(M), Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if M[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            M[c], M[piv] = M[piv], M[c]
            d = -d
        d *= M[c][c]
        for r in range(c + 1, n):
            f = M[r][c] / M[c][c]
            for k in range(c, n):
                M[r][k] -= f * M[c][k]
    return d


def charpoly(A, B):
    """Coefficients (low to high) of det(B - t A), by exact interpolation."""
    n = len(A)
    xs = list(range(n + 1))
    ys = [_det([[B[i][j] - x * A[i][j] for j in range(n)] for i in range(n)]) for x in xs]
    coeffs = [Fraction(0)] * (n + 1)
    for i, xi in enumerate(xs):
        basis, denom = [Fraction(1)], Fraction(1)
        for j, xj in enumerate(xs):
            if j != i:
                basis = [Fraction(0)] + basis
                for k in range(len(basis) - 1):
                    basis[k] -= xj * basis[k + 1]
                denom *= xi - xj
        for k in range(n + 1):
            coeffs[k] += ys[i] * basis[k] / denom
    return coeffs


def _trim(p):
    while len(p) > 1 and p[-1] == 0:
        p = p[:-1]
    return p


def _rem(a, b):
    a = a[:]
    while len(a) >= len(b):
        f = a[-1] / b[-1]
        s = len(a) - len(b)
        for k in range(len(b)):
            a[s + k] -= f * b[k]
        a.pop()
        if not a:
            return [Fraction(0)]
        a = _trim(a)
        if len(a) == 1 and a[0] == 0:
            break
    return a


def sturm(p):
    p = _trim(p)
    seq = [p, _trim([k * c for k, c in enumerate(p)][1:] or [Fraction(0)])]
    while len(seq[-1]) > 1 or seq[-1][0] != 0:
        r = _rem(seq[-2], seq[-1])
        if len(r) == 1 and r[0] == 0:
            break
        seq.append([-c for c in r])
    return seq


def _val(p, x):
    v = Fraction(0)
    for c in reversed(p):
        v = v * x + c
    return v


def _changes(seq, x):
    signs = [s for s in (_val(q, x) for q in seq) if s != 0]
    return sum(1 for a, b in zip(signs, signs[1:]) if (a > 0) != (b > 0))


def distinct_roots_in(seq, lo, hi):
    """Distinct real roots in [lo, hi]."""
    lo, hi = Fraction(lo), Fraction(hi)
    return _changes(seq, lo) - _changes(seq, hi) + (1 if _val(seq[0], lo) == 0 else 0)


def distinct_roots(seq):
    big = Fraction(10) ** 30
    return distinct_roots_in(seq, -big, big)


# --- verified_sym_geig -----------------------------------------------------

def test_geig_identity_diagonal():
    res = verified_sym_geig(np.eye(3), np.diag([1.0, 2.0, 3.0]))
    for e, t in zip(res, (1, 2, 3)):
        assert e.contains(t) and e.width() < 1e-13


def test_geig_double_eigenvalue_merges():
    B = np.array([[1.5, 0.5, 0.0], [0.5, 1.5, 0.0], [0.0, 0.0, 1.0]])  # spectrum 1, 1, 2
    res = verified_sym_geig(np.eye(3), B)
    assert res[0] == res[1]
    assert res[0].contains(1.0) and res[2].contains(2.0)
    assert not res[1].overlaps(res[2])


def test_geig_rejects_indefinite_a():
    with pytest.raises(NotSPD):
        verified_sym_geig(np.diag([1.0, -1.0]), np.eye(2))


def test_geig_interval_input_and_asymmetric_entries():
    A = IntervalArray(np.eye(2) - 1e-12, np.eye(2) + 1e-12)
    res = verified_sym_geig(A, np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert res[0].contains(1.0) and res[1].contains(3.0)
    with pytest.raises(ValueError):
        IntervalSymMatrix(IntervalArray(np.array([[1.0, 0.0], [1.0, 1.0]])))


@st.composite
def pencils(draw):
    n = draw(st.integers(1, 8))
    rng = np.random.default_rng(draw(st.integers(0, 2 ** 32 - 1)))
    B = rng.integers(-9, 10, (n, n))
    B = B + B.T
    if draw(st.booleans()):
        A = np.eye(n, dtype=np.int64)
    else:
        G = rng.integers(-3, 4, (n, n))
        A = G @ G.T + n * np.eye(n, dtype=np.int64)
    return A, B


@settings(settings.get_profile("property"))
@given(pencils())
def test_geig_oracle_property(case):
    A, B = case
    n = A.shape[0]
    res = verified_sym_geig(A.astype(float), B.astype(float))
    assert len(res) == n
    seq = sturm(charpoly([[Fraction(int(v)) for v in r] for r in A], [[Fraction(int(v)) for v in r] for r in B]))
    clusters = sorted({(e.lo, e.hi) for e in res})
    found = sum(distinct_roots_in(seq, lo, hi) for lo, hi in clusters)
    # clusters are disjoint, so this counts every real root exactly once
    assert found == distinct_roots(seq)
    for lo, hi in clusters:
        members = sum(1 for e in res if (e.lo, e.hi) == (lo, hi))
        assert 1 <= distinct_roots_in(seq, lo, hi) <= members


def test_geig_shift_invariance():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(2, 7))
        G = rng.standard_normal((n, n))
        A = G @ G.T + n * np.eye(n)
        B = rng.standard_normal((n, n))
        B = B + B.T
        sigma = float(rng.uniform(-5, 5))
        Bs = IntervalSymMatrix(IntervalArray(B) + IntervalArray(A) * Interval(sigma))
        plain = verified_sym_geig(A, B, merge=False)
        shifted = verified_sym_geig(A, Bs, merge=False)
        for e, f in zip(plain, shifted):
            assert (e + Interval(sigma)).overlaps(f)


# --- linearized operator ---------------------------------------------------

def _zero(N, domain=None):
    return LegendreFunction(np.zeros((N, N)), domain or Rectangle.unit())


def test_dprime_range_of_zero_is_lambda():
    p = ProblemSpec.make(lam="2.5", terms=(("1", 3),))
    assert dprime_range(_zero(3), p).contains(2.5)


def test_dprime_range_allen_cahn(solution):
    p, u, _ = solution("ac01")
    d = dprime_range(u, p)
    t = np.linspace(0, 1, 41)
    samples = p.fprime(u(t, t))
    assert d.lo <= samples.min() and samples.max() <= d.hi
    assert samples.min() < -190 and d.lo > -260
    finer = dprime_range(u, p, 7)
    assert d.contains(finer)


def test_projection_constant_contract():
    N = 12
    C = ProjectionConstant.for_space(N, Rectangle.unit())
    assert C.provenance == "closed-form" and C.value.lo > 0
    K, M = stiffness_1d_float(N), mass_1d_float(N)
    K2 = np.kron(K, M) + np.kron(M, K)
    x, w = np.polynomial.legendre.leggauss(200)
    t, w = (x + 1) / 2, w / 2
    ph = float_tables(t, N)["phi"]
    for m, n in [(1, 1), (3, 5), (7, 2), (11, 13), (20, 20)]:
        lam = math.pi ** 2 * (m * m + n * n)
        sx = ph.T @ (w * np.sin(m * math.pi * t))
        sy = ph.T @ (w * np.sin(n * math.pi * t))
        b = lam * np.kron(sx, sy)
        c = np.linalg.solve(K2, b)
        err2 = lam / 4 - c @ K2 @ c  # Galerkin orthogonality
        assert math.sqrt(max(err2, 0.0)) <= C.value.hi * lam / 2 * (1 + 1e-9)
    with pytest.raises(ValueError):
        ProjectionConstant.supplied(Interval(0.0), 3)


def test_mu1_laplacian():
    p = ProblemSpec.emden(3)
    u = _zero(40)
    res = mu1_lower_bound(u, p, ProjectionConstant.for_space(40, u.domain))
    assert TWO_PI2 * (1 - 1e-9) <= res.lower <= TWO_PI2


def test_laplacian_block_bounds_below_closed_form():
    N = 12
    u = _zero(N)
    op = LinearizedOperator(u, ProblemSpec.emden(3))
    C = ProjectionConstant.for_space(N, u.domain)
    # block order: x even/odd index class times y even/odd; even index = odd sine frequency
    classes = [(1, 1), (1, 0), (0, 1), (0, 0)]
    for b, (px, py) in enumerate(classes):
        exact = sorted(math.pi ** 2 * (m * m + n * n) for m in range(1, 12) for n in range(1, 12)
                       if m % 2 == px and n % 2 == py)
        for k in (1, 2, 3):
            lb = block_eig_lower(op, C, b, k).lower
            assert lb <= exact[k - 1]
        assert block_eig_lower(op, C, b, 1).lower >= exact[0] * (1 - 1e-6)


def test_inverse_norm_of_laplacian_is_one():
    p = ProblemSpec.emden(3)
    u = _zero(10)
    assert inverse_norm_bound(u, p, ProjectionConstant.for_space(10, u.domain)).bound.contains(1.0)


def test_rectangle_laplacian():
    dom = Rectangle(0.0, 2.0, 0.0, 1.0)
    u = _zero(16, dom)
    res = mu1_lower_bound(u, ProblemSpec.emden(3, dom), ProjectionConstant.for_space(16, dom))
    exact = math.pi ** 2 * (1 / 4 + 1)
    assert exact * (1 - 1e-6) <= res.lower <= exact


def test_mu1_allen_cahn(solution):
    p, u, _ = solution("ac01")
    res = mu1_lower_bound(u, p, ProjectionConstant.for_space(u.N, u.domain), m_max=16)
    assert res.lower >= 100
