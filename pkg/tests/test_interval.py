import math
import threading
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ellipcert.errors import DivByZeroInterval, EmptyIntersection, NegativeSqrt
from ellipcert.interval import (Interval, IntervalArray, from_decimal, from_json, hull, imatmul,
                                mag, pi_enclosure, pow_int, root, sqrt, to_decimal_lower,
                                to_decimal_upper, to_json, width)


def encloses(iv: Interval, q: Fraction) -> bool:
    return Fraction(iv.lo) <= q <= Fraction(iv.hi)


# -- frozen examples --------------------------------------------------------

def test_add_exact():
    r = Interval(1, 2) + Interval(3, 4)
    assert (r.lo, r.hi) == (4, 6)


def test_mul_sign_mixed():
    r = Interval(-1, 2) * Interval(-3, 1)
    assert r.contains(Interval(-6, 3))
    assert r.lo >= math.nextafter(-6, -7) and r.hi <= math.nextafter(3, 4)


def test_third():
    r = Interval(1) / Interval(3)
    assert encloses(r, Fraction(1, 3))
    assert r.hi - r.lo <= 2 * math.ulp(1 / 3)


@pytest.mark.parametrize("a, k, lo, hi", [((-2, 1), 2, 0, 4), ((2, 3), 3, 8, 27), ((-1, 2), 5, -1, 32)])
def test_pow_int(a, k, lo, hi):
    r = pow_int(Interval(*a), k)
    assert r.contains(Interval(lo, hi))
    assert r.lo >= math.nextafter(lo, -math.inf) and r.hi <= math.nextafter(hi, math.inf)


def test_pow_int_grid_oracle():
    a = Interval(-1, 2)
    r = pow_int(a, 5)
    for x in np.linspace(-1, 2, 2001):
        assert encloses(r, Fraction(float(x)) ** 5)


def test_sqrt():
    assert sqrt(Interval(4)) == Interval(2)
    r = sqrt(Interval(2))
    assert encloses(r * r, Fraction(2))
    assert r.hi - r.lo <= 2 * math.ulp(1.4142135623730951)
    with pytest.raises(NegativeSqrt):
        sqrt(Interval(-1, 1))


def _arctan_inv(n: int, terms: int) -> tuple[Fraction, Fraction]:
    """Bracket arctan(1/n) by consecutive partial sums of the alternating series."""
    s = Fraction(0)
    x = Fraction(1, n)
    sums = []
    for k in range(terms):
        s += (-1) ** k * x ** (2 * k + 1) / (2 * k + 1)
        sums.append(s)
    return min(sums[-2:]), max(sums[-2:])


def test_pi_against_machin():
    a_lo, a_hi = _arctan_inv(5, 30)
    b_lo, b_hi = _arctan_inv(239, 12)
    lo, hi = 16 * a_lo - 4 * b_hi, 16 * a_hi - 4 * b_lo
    pi = pi_enclosure()
    assert Fraction(pi.lo) <= lo and hi <= Fraction(pi.hi)
    assert pi.hi - pi.lo <= 1e-15


def test_decimal_io():
    tenth = from_decimal("0.1")
    assert encloses(tenth, Fraction(1, 10)) and not tenth.is_point()
    assert from_decimal("2") == Interval(2)
    assert to_decimal_upper(Interval(0, 4.63295215e-8), 9) >= "4.63295215e-08"
    assert float(to_decimal_upper(Interval(0, 4.63295215e-8), 9)) >= 4.63295215e-8
    with pytest.raises(ValueError):
        from_decimal("abc")


def test_json_roundtrip_is_outward():
    x = Interval(1) / Interval(7)
    y = from_json(to_json(x))
    assert y.contains(x)


def test_set_operations():
    assert hull(Interval(0, 1), Interval(2, 3)) == Interval(0, 3)
    assert Interval(0, 2).contains(1.5)
    assert mag(Interval(-3, 1)) == 3
    assert width(Interval(1, 1)) == 0
    with pytest.raises(EmptyIntersection):
        Interval(0, 1).intersect(Interval(2, 3))


def test_rejects_infinite_and_inverted():
    with pytest.raises(ValueError):
        Interval(0, math.inf)
    with pytest.raises(ValueError):
        Interval(2, 1)
    with pytest.raises(DivByZeroInterval):
        Interval(1) / Interval(-1, 1)


def test_root():
    r = root(Interval(27), 3)
    assert encloses(r, Fraction(3))
    r = root(Interval(2), 4)
    assert Fraction(r.lo) ** 4 <= 2 <= Fraction(r.hi) ** 4


def test_imatmul_contains_exact_product():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((7, 5))
    B = rng.standard_normal((5, 6))
    C = imatmul(IntervalArray(A), IntervalArray(B))
    exact = [[sum(Fraction(A[i, k]) * Fraction(B[k, j]) for k in range(5)) for j in range(6)] for i in range(7)]
    for i in range(7):
        for j in range(6):
            assert Fraction(C.lo[i, j]) <= exact[i][j] <= Fraction(C.hi[i, j])


def test_thread_determinism():
    rng = np.random.default_rng(0)
    A = IntervalArray.from_mid_rad(rng.standard_normal((40, 40)), 1e-12)
    ref = imatmul(A, A.T)
    out = []

    def work():
        out.append(imatmul(A, A.T))

    ts = [threading.Thread(target=work) for _ in range(4)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    for r in out:
        assert np.array_equal(r.lo, ref.lo) and np.array_equal(r.hi, ref.hi)


# -- properties ---------------------------------------------------------------

finite = st.floats(min_value=-1e30, max_value=1e30, allow_nan=False, allow_infinity=False)
unit = st.floats(min_value=0.0, max_value=1.0)


positive = st.floats(min_value=1e-30, max_value=1e30)


@st.composite
def intervals(draw, nonzero=False):
    if nonzero:
        a, b = sorted((draw(positive), draw(positive)))
        return Interval(a, b) if draw(st.booleans()) else Interval(-b, -a)
    a, b = sorted((draw(finite), draw(finite)))
    return Interval(a, b)


def _point(iv: Interval, t: float) -> float:
    x = iv.lo + t * (iv.hi - iv.lo)
    return min(max(x, iv.lo), iv.hi) if math.isfinite(x) else iv.lo


OPS = {
    "add": (lambda a, b: a + b, lambda x, y: x + y),
    "sub": (lambda a, b: a - b, lambda x, y: x - y),
    "mul": (lambda a, b: a * b, lambda x, y: x * y),
    "div": (lambda a, b: a / b, lambda x, y: x / y),
}


@settings(settings.get_profile("property"))
@given(a=intervals(), b=intervals(nonzero=True), op=st.sampled_from(sorted(OPS)),
       ts=st.lists(st.tuples(unit, unit), min_size=1, max_size=8), k=st.integers(0, 7))
def test_containment_property(a, b, op, ts, k):
    f_iv, f_ex = OPS[op]
    try:
        r = f_iv(a, b)
    except ValueError:  # overflow to a non-finite endpoint is refused, never wrong
        r = None
    try:
        pk = pow_int(a, k)
    except ValueError:
        pk = None
    s = sqrt(abs(a))
    for t, u in ts:
        x, y = Fraction(_point(a, t)), Fraction(_point(b, u))
        if r is not None:
            assert encloses(r, f_ex(x, y))
        if pk is not None:
            assert encloses(pk, x ** k)
        assert Fraction(s.lo) ** 2 <= abs(x) <= Fraction(s.hi) ** 2


@st.composite
def nested(draw, nonzero=False):
    outer = draw(intervals(nonzero=nonzero))
    t0, t1 = sorted((draw(unit), draw(unit)))
    inner = Interval(_point(outer, t0), _point(outer, t1))
    return inner, outer


@settings(settings.get_profile("property"))
@given(a=nested(), b=nested(nonzero=True), op=st.sampled_from(sorted(OPS)), k=st.integers(0, 7))
def test_inclusion_monotonicity_property(a, b, op, k):
    (a0, a1), (b0, b1) = a, b
    f_iv, _ = OPS[op]
    try:
        big = f_iv(a1, b1)
    except ValueError:
        big = None
    if big is not None:
        assert big.contains(f_iv(a0, b0))
    try:
        assert pow_int(a1, k).contains(pow_int(a0, k))
    except ValueError:
        pass
    assert sqrt(abs(a1)).contains(sqrt(abs(a0)))
