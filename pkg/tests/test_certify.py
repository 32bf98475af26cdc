import json
import math
from decimal import ROUND_CEILING, Decimal
from fractions import Fraction

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ellipcert.certify import (Certificate, ConstantsRegistry, Frame, NoPositiveSolution, PipelineConfig,
                               check_corollary_a1, check_theorem1, check_theorem2, compute_alpha, lipschitz_bound,
                               load_schema, lq_norms, newton_kantorovich, residual_dual_bound, run_pipeline,
                               select_strategy, superset_lambda1, theorem1_lhs)
from ellipcert.eigen_bounds import Mu1Bound
from ellipcert.errors import (Assumption4Unverified, ConstantUnavailable, Indeterminate, KantorovichFail,
                              StrategyInapplicable, SupersetDoesNotCover)
from ellipcert.galerkin import ProblemSpec
from ellipcert.interval import Interval
from ellipcert.legendre_basis import LegendreFunction, Rectangle

EMDEN3_RHO = 4.63295216e-8
EMDEN5_RHO = 5.47604979e-3


def is_tight_upper(x: float, dec: str) -> bool:
    """x is the smallest double at or above the decimal dec."""
    return Fraction(x) >= Fraction(dec) > Fraction(math.nextafter(x, 0.0))


def ceil9(x: float) -> Decimal:
    """Round up to nine significant digits, the way bounds are printed."""
    d = Decimal(x)
    return d.quantize(Decimal(1).scaleb(d.adjusted() - 8), rounding=ROUND_CEILING)


# --- constants ---------------------------------------------------------------

def test_registry_unit_square():
    reg = ConstantsRegistry()
    assert reg.C2.value.contains(1 / math.sqrt(2 * math.pi ** 2))
    assert reg.C2.value.width() < 1e-12
    assert reg.lambda1().value.contains(2 * math.pi ** 2)
    for q, dec in ((4, "0.31830989"), (6, "0.39585400")):
        c = reg.Cq(q)
        assert c.provenance == "pinned-from-paper"
        assert is_tight_upper(c.value.hi, dec)
    with pytest.raises(ConstantUnavailable):
        reg.Cq(8)
    reg.supply(8, "0.5")
    assert reg.Cq(8).provenance == "supplied"
    with pytest.raises(ValueError):
        reg.supply(10, "-1")


def test_registry_rectangle_scaling():
    reg = ConstantsRegistry(Rectangle(0.0, 2.0, 0.0, 1.0))
    assert reg.lambda1().value.contains(math.pi ** 2 * 1.25)
    assert reg.Cq(4).value.hi >= ConstantsRegistry().Cq(4).value.hi * math.sqrt(2) * (1 - 1e-12)


# --- Lipschitz and Kantorovich ------------------------------------------------

def test_lipschitz_emden(solution):
    for name, cap in (("emden3", 0.679), ("emden5", 6.48)):
        p, u, _ = solution(name)
        assert lipschitz_bound(p, u, Interval(0.0, 1e-7), ConstantsRegistry()).hi <= cap


def test_lipschitz_zero():
    p = ProblemSpec.emden(3)
    u = LegendreFunction(np.zeros((2, 2)))
    assert lipschitz_bound(p, u, 0.0, ConstantsRegistry()).hi == 0.0
    with pytest.raises(ValueError):
        lipschitz_bound(p, u, -1.0, ConstantsRegistry())


def test_newton_kantorovich_allen_cahn_pair():
    rho, uniq = newton_kantorovich(9.87317430e-6, 22.9920923)
    assert ceil9(rho.hi) == Decimal("9.87429519e-6")
    assert uniq.hi >= 2 * 9.87317430e-6


def test_newton_kantorovich_discriminant_zero():
    rho, _ = newton_kantorovich(0.25, 2.0)
    assert rho.hi == 0.5  # 1 / beta
    with pytest.raises(KantorovichFail):
        newton_kantorovich(0.25, 2.0000001)


@settings(max_examples=500, deadline=None)
@given(st.floats(1e-12, 1.0), st.floats(0.0, 1.0))
def test_rho_between_zero_and_two_alpha(alpha, frac):
    beta = frac / (2 * alpha)
    if alpha * beta * (1 + 1e-12) > 0.5:
        return
    rho, uniq = newton_kantorovich(alpha, beta)
    assert 0 < rho.hi <= uniq.hi


def test_compute_alpha():
    assert compute_alpha(Interval(1.0, 3.0), Interval(0.0)).hi == 0.0
    a = compute_alpha(Interval(1.0, 3.0), Interval(0.0, 2e-8))
    assert a.hi >= 6e-8 and a.hi <= 6e-8 * (1 + 1e-15)


def test_alpha_remultiplication(solution):
    p, u, _ = solution("emden3")
    res = residual_dual_bound(u, p, ConstantsRegistry())
    K = Interval(1.0, 4.6)
    assert compute_alpha(K, res.dual).hi <= (Interval(K.hi) * Interval(res.dual.hi)).hi


# --- theorem 1 ---------------------------------------------------------------

def test_theorem1_emden3(solution):
    p, u, _ = solution("emden3")
    res = check_theorem1(p, u, EMDEN3_RHO, ConstantsRegistry())
    assert res.value.hi <= 1.77973446e-4
    assert res.verdict == "positive"
    assert any("maximum principle" in n for n in res.notes)


def test_theorem1_emden5(solution):
    p, u, _ = solution("emden5")
    res = check_theorem1(p, u, EMDEN5_RHO, ConstantsRegistry())
    assert res.value.hi <= 1.00813027e-6
    assert res.passed


def test_theorem1_near_lambda1(solution):
    _, u, _ = solution("emden3")
    p = ProblemSpec.make(lam="19.7392088", terms=(("1", 3),))
    # margin 1 - lambda/lambda_1 is about 1.1e-10
    assert check_theorem1(p, u, EMDEN3_RHO, ConstantsRegistry()).passed
    res = check_theorem1(p, u, 1e-3, ConstantsRegistry())
    assert not res.passed and res.verdict == "existence-only"
    assert res.bound.lo < 1e-9 < res.value.hi


def test_theorem1_refuses_at_or_above_lambda1():
    u = LegendreFunction(np.array([[1.0]]))
    for lam in ("19.74", "60"):
        with pytest.raises(StrategyInapplicable):
            check_theorem1(ProblemSpec.make(lam=lam, terms=(("1", 3),)), u, 1e-8, ConstantsRegistry())


def test_theorem1_drops_negative_terms(solution):
    _, u, _ = solution("emden3")
    reg = ConstantsRegistry()
    neg = {4: Interval(0.0, 0.04), 6: Interval(0.0, 0.05)}
    one = ProblemSpec.make(lam="0", terms=(("1", 3),))
    two = ProblemSpec.make(lam="0", terms=(("1", 3), ("-7", 5)))
    assert theorem1_lhs(one, 1e-8, neg, reg) == theorem1_lhs(two, 1e-8, neg, reg)


def test_theorem1_margin_monotone():
    reg = ConstantsRegistry()
    p = ProblemSpec.make(lam="0", terms=(("1", 3), ("2", 5)))
    rng = np.random.default_rng(1)
    for _ in range(200):
        rho = float(rng.uniform(0, 0.1))
        n4, n6 = rng.uniform(0, 0.1, 2)
        base = theorem1_lhs(p, rho, {4: Interval(0.0, n4), 6: Interval(0.0, n6)}, reg).hi
        grow = theorem1_lhs(p, rho * 1.5, {4: Interval(0.0, n4 * 1.2), 6: Interval(0.0, n6)}, reg).hi
        assert grow >= base


# --- theorem 2 ---------------------------------------------------------------

def test_theorem2_gates():
    u = LegendreFunction(np.array([[1.0]]))
    with pytest.raises(StrategyInapplicable):
        check_theorem2(ProblemSpec.make(lam="30", terms=(("1", 3),)), u, 1e-3, ConstantsRegistry())
    with pytest.raises(StrategyInapplicable):
        check_theorem2(ProblemSpec.make(lam="1", terms=(("-1", 3),)), u, 1e-3, ConstantsRegistry())


def test_theorem2_zero_candidate_fails():
    p = ProblemSpec.allen_cahn("0.1")
    zero = LegendreFunction(np.zeros((4, 4)))
    with pytest.raises(Assumption4Unverified, match="positive part"):
        check_theorem2(p, zero, 1e-3, ConstantsRegistry(), mu1=Mu1Bound(1.0, []))


def test_theorem2_allen_cahn(solution):
    p, u, _ = solution("ac01")
    res = check_theorem2(p, u, 1e-7, ConstantsRegistry())
    assert res.verdict == "positive"
    assert res.details["mu1_lower"] >= 100


# --- corollary A1 ------------------------------------------------------------

def test_frame_lambda1_one_sided_bound():
    lam = superset_lambda1(Frame(0.05), Rectangle.unit())
    assert lam.lo >= math.pi ** 2 / (4 * 0.05 ** 2) * (1 - 1e-15)
    assert lam.lo >= 986


@pytest.mark.xfail(strict=True, reason="pi^2/w^2 is not a valid bound for a bent strip; the one-sided bound is used")
def test_frame_lambda1_slab_value():
    assert superset_lambda1(Frame(0.05), Rectangle.unit()).lo >= 3947


def test_disjoint_rectangles_lambda1():
    rects = [Rectangle(0.0, 0.1, 0.0, 1.0), Rectangle(0.5, 1.0, 0.0, 0.2)]
    lam = superset_lambda1(rects, Rectangle.unit())
    assert lam.lo <= math.pi ** 2 * (100 + 1) and lam.lo >= math.pi ** 2 * (4 + 25) * (1 - 1e-12)
    with pytest.raises(ValueError):
        superset_lambda1([Rectangle(0.0, 0.5, 0.0, 0.5), Rectangle(0.4, 1.0, 0.0, 1.0)], Rectangle.unit())


def test_corollary_a1(solution):
    p, u, _ = solution("emden3")
    reg = ConstantsRegistry()
    with pytest.raises(SupersetDoesNotCover):
        check_corollary_a1(p, u, EMDEN3_RHO, 0.1, [Rectangle(0.0, 0.01, 0.0, 0.01)], reg)
    res = check_corollary_a1(p, u, EMDEN3_RHO, 1e-6, Frame(0.05), reg)
    assert check_theorem1(p, u, EMDEN3_RHO, reg).passed and res.passed
    assert res.bound.lo >= check_theorem1(p, u, EMDEN3_RHO, reg).bound.lo


# --- strategy selection ------------------------------------------------------

def test_select_strategy_cells():
    assert select_strategy(ProblemSpec.emden(3)) == ["theorem1"]
    assert select_strategy(ProblemSpec.allen_cahn("0.1")) == ["theorem2"]
    assert select_strategy(ProblemSpec.make(lam="30", terms=(("1", 3), ("-1", 5)))) == ["corollaryA1"]
    assert select_strategy(ProblemSpec.make(lam="5", terms=(("1", 3), ("-1", 5)))) == ["theorem1"]
    assert isinstance(select_strategy(ProblemSpec.make(lam="59.2176264", terms=(("1", 3),))), NoPositiveSolution)
    assert isinstance(select_strategy(ProblemSpec.make(lam="1", terms=(("-1", 3),))), NoPositiveSolution)
    with pytest.raises(Indeterminate):
        select_strategy(ProblemSpec.make(lam=Interval(19.0, 20.0), terms=(("1", 3),)))


# --- pipeline ----------------------------------------------------------------

def test_pipeline_no_positive_solution():
    cert = run_pipeline(ProblemSpec.make(lam="59.2176264", terms=(("1", 3),)))
    assert cert.verdict == "no-positive-solution" and cert.N is None and cert.alpha is None


def test_pipeline_kantorovich_failure_at_small_n():
    cert = run_pipeline(ProblemSpec.emden(3), PipelineConfig(N=12))
    assert cert.verdict == "failed" and cert.stage == "kantorovich"
    assert cert.error == "KantorovichFail"


def test_pipeline_certificate_schema_and_determinism():
    cfg = PipelineConfig(N=16)
    a = run_pipeline(ProblemSpec.emden(3), cfg)
    b = run_pipeline(ProblemSpec.emden(3), cfg)
    assert a.verdict == "positive"
    doc = json.loads(a.to_json())
    jsonschema.validate(doc, load_schema())
    assert a.to_json() == b.to_json()
    assert a.rho.hi <= a.r.hi and a.r.hi > 2 * a.alpha.hi


def test_certificate_rejects_unknown_verdict():
    with pytest.raises(ValueError):
        Certificate({}, 3, None, "maybe")


def test_lq_norms_keys(solution):
    p, u, _ = solution("emden5")
    assert set(lq_norms(u, p, 5)) == {6}
