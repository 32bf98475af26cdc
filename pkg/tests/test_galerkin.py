import numpy as np
import pytest

from ellipcert.errors import NewtonDiverged
from ellipcert.galerkin import (ProblemSpec, assemble_jacobian, assemble_residual, initial_guess,
                                newton_solve, residual_norm, solve, symmetrize)
from ellipcert.interval import Interval
from ellipcert.legendre_basis import LegendreFunction, Rectangle, mass_1d_float, stiffness_1d_float


def _gram(N):
    A, M = stiffness_1d_float(N), mass_1d_float(N)
    return np.kron(A, M) + np.kron(M, A), np.kron(M, M)


def test_problem_validation():
    with pytest.raises(ValueError):
        ProblemSpec.make("0", (("1", 3), ("2", 3)))
    with pytest.raises(ValueError):
        ProblemSpec.make("0", (("0", 3),))
    with pytest.raises(ValueError):
        ProblemSpec.make("0", (("1", 1),))
    with pytest.raises(ValueError):
        ProblemSpec.allen_cahn("0")


def test_allen_cahn_coefficients_enclose_decimal():
    p = ProblemSpec.allen_cahn("0.1")
    assert p.lam.contains(100.0) and p.terms[0][0].contains(-100.0)
    assert p.terms[0][1] == 3


def test_zero_residual_at_zero():
    p = ProblemSpec.make("0", (("1", 3),))
    assert np.all(assemble_residual(p, np.zeros((5, 5))) == 0)


def test_linear_residual_and_jacobian():
    N, lam = 6, 3.5
    # tiny cubic coefficient: f(t) = lam t + 1e-300 t^3 is linear to rounding
    p = ProblemSpec.make(str(lam), (("1e-300", 3),))
    rng = np.random.default_rng(0)
    c = rng.standard_normal((N, N)) * 1e-3
    K, M = _gram(N)
    want = (K - lam * M) @ c.reshape(-1)
    got = assemble_residual(p, c).reshape(-1)
    assert np.allclose(got, want, atol=1e-13)
    J = assemble_jacobian(p, np.zeros((N, N)))
    assert np.allclose(J, K - lam * M, atol=1e-13)


def test_jacobian_symmetric_and_fd():
    p = ProblemSpec.emden(3)
    N = 8
    rng = np.random.default_rng(1)
    c = rng.standard_normal((N, N))
    J = assemble_jacobian(p, c)
    assert np.max(np.abs(J - J.T)) <= 1e-12
    h = rng.standard_normal((N, N))
    errs = []
    for t in (1e-2, 5e-3):
        fd = (assemble_residual(p, c + t * h) - assemble_residual(p, c)).reshape(-1)
        errs.append(np.linalg.norm(fd - t * J @ h.reshape(-1)))
    assert errs[1] < 0.3 * errs[0]  # second-order remainder


def test_stiffness_positive_definite():
    for N in (2, 10, 30):
        K, _ = _gram(N)
        assert np.linalg.eigvalsh(K).min() > 0


def test_zero_amplitude_guess():
    assert np.all(initial_guess(ProblemSpec.emden(3), 6, amplitude=0.0) == 0)


def test_emden3_n40(solution):
    p, u, rep = solution("emden3")
    assert rep.converged
    assert abs(u.max_on_grid(201) - 6.6232) < 5e-4
    assert residual_norm(p, u) <= 1e-10
    # the reported residual is that of the unsymmetrized iterate
    assert abs(residual_norm(p, u) - rep.residual) <= 1e-12


def test_emden5_n40(solution):
    _, u, rep = solution("emden5")
    assert rep.converged
    assert abs(u.max_on_grid(201) - 3.1721) < 5e-4


def test_allen_cahn_plateau(solution):
    p, u, _ = solution("ac01")
    xs, ys, U = u.sample(101)
    assert abs(U[50, 50] - 1.0) < 1e-2
    assert U.min() >= -1e-12
    # boundary layer: within a few epsilon of the wall the profile is well below the plateau
    assert U[5, 50] < 0.9


def test_symmetrize_only_drops_negligible():
    rng = np.random.default_rng(2)
    c = rng.standard_normal((6, 6))
    u = LegendreFunction(c)
    assert np.array_equal(symmetrize(u).coeffs, c)
    c2 = c.copy()
    c2[1::2, :] = 1e-14
    c2[:, 1::2] = 1e-14
    s = symmetrize(LegendreFunction(c2)).coeffs
    assert np.all(s[1::2, :] == 0) and np.all(s[:, 1::2] == 0)


def test_newton_diverges_on_bad_start():
    p = ProblemSpec.emden(3)
    with pytest.raises(NewtonDiverged):
        newton_solve(p, np.full((4, 4), 1e6), max_iter=2)


def test_physical_domain_scaling():
    # on (0,2)^2 solutions of -Laplace u = u^3 scale like u(x) = v(x/2) / 2
    p1 = ProblemSpec.emden(3)
    p2 = ProblemSpec.emden(3, Rectangle(0.0, 2.0, 0.0, 2.0))
    u1, _ = solve(p1, 12)
    u2, _ = solve(p2, 12)
    assert np.allclose(u2.coeffs, u1.coeffs / 2, atol=1e-10)


def test_digest_stable():
    a = ProblemSpec.allen_cahn("0.1").digest()
    assert a == ProblemSpec.allen_cahn("0.1").digest()
    assert a != ProblemSpec.allen_cahn("0.05").digest()
