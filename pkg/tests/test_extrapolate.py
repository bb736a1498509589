import json

import numpy as np
import pytest

from pc_extrap.errors import InconsistencyError, PreconditionError
from pc_extrap.extrapolate import (
    ExtrapolationProblem,
    check_orthogonality,
    error_value,
    mse,
    solve_c,
    solve_extrapolation,
    spectral_characteristic,
)
from pc_extrap.increments import CoefficientFunction, IncrementParams
from pc_extrap.simulate import oracle_mmse, scenario_density
from pc_extrap.spectral import BlockToeplitzOperator, IncrementKernel, QuadratureGrid, SpectralDensityModel

RATIONAL = ["ma1-0.3", "ma1-0.5", "ma1-0.9", "ar"]


def problem(name="white", d=1, tau=1, K=1, J=32, a_blocks=None, N=None, M=4096):
    p = IncrementParams(d=d, T=1.0, tau=tau, K=K, J=J)
    if a_blocks is None:
        a_blocks = np.zeros((1, K))
        a_blocks[0, 0] = 1.0
    return ExtrapolationProblem(p, scenario_density(name, p), a_blocks=np.asarray(a_blocks), N=N,
                                grid=QuadratureGrid(M))


# -- solve_c / mse ------------------------------------------------------------


def test_solve_c_identity():
    b = np.array([[1.0 + 1j, 2.0], [0.5, -1j]])
    assert np.allclose(solve_c(BlockToeplitzOperator.identity(2, 2), b), b)


def test_solve_c_two_by_two():
    G = np.zeros((2, 1, 1), dtype=complex)
    G[0], G[1] = 2.0, 1.0
    c = solve_c(BlockToeplitzOperator(G), np.array([[1.0], [0.0]]))
    assert np.allclose(c.ravel(), [2 / 3, -1 / 3], atol=1e-14)
    assert mse(np.array([[1.0], [0.0]]), c) == pytest.approx(2 / 3)


def test_solve_c_random_residual():
    rng = np.random.default_rng(0)
    J, K = 6, 3
    G = (rng.standard_normal((J, K, K)) + 1j * rng.standard_normal((J, K, K))) * 0.1
    G[0] = np.eye(K) * 3 + (G[0] + G[0].conj().T) / 2
    F = BlockToeplitzOperator(G)
    D = F.dense()
    assert np.linalg.eigvalsh(D).min() > 0
    b = rng.standard_normal((J, K)) + 1j * rng.standard_normal((J, K))
    c = solve_c(F, b)
    assert np.abs(D @ c.ravel() - b.ravel()).max() < 1e-10


def test_mse_zero_and_inconsistency():
    assert mse(np.zeros((3, 2)), np.zeros((3, 2))) == 0
    with pytest.raises(InconsistencyError):
        mse(np.array([[1.0]]), np.array([[-1.0]]))


# -- spectral characteristic ----------------------------------------------------


@pytest.mark.parametrize("d,tau", [(1, 1), (2, 1), (1, 2), (2, 2)])
def test_white_characteristic_vanishes(d, tau):
    pr = problem("white", d=d, tau=tau, a_blocks=[[0.7 - 0.2j]])
    rep = solve_extrapolation(pr)
    assert np.allclose(rep.c[0], rep.b[0])
    lam = QuadratureGrid(64).nodes
    assert np.abs(rep.h(lam)).max() < 1e-12
    # two-term form: the second factor is the weight f^{-1} = |1 - e^{i lam tau}|^{2d} / lam^{2d}
    b0 = rep.b[0, 0]
    x = lam * tau
    term1 = (1 - np.exp(-1j * x)) ** d / (1j * lam) ** d
    term2 = (-1j * lam) ** d / (1 - np.exp(1j * x)) ** d * np.abs(1 - np.exp(1j * x)) ** (2 * d) / lam ** (2 * d)
    assert np.abs(b0 * (term1 - term2)).max() < 1e-12


def test_zero_functional():
    pr = problem("ma1-0.5", a_blocks=[[0.0]])
    rep = solve_extrapolation(pr)
    assert rep.mse == 0
    assert np.abs(rep.h(QuadratureGrid(64).nodes)).max() == 0
    assert max(rep.orthogonality_residuals.values()) == 0


@pytest.mark.parametrize("name", RATIONAL)
@pytest.mark.parametrize("d", [1, 2])
def test_orthogonality_rational(name, d):
    pr = problem(name, d=d, a_blocks=[[1.0], [0.5], [-0.25]])
    rep = solve_extrapolation(pr)
    assert all(r < 1e-6 for r in rep.orthogonality_residuals.values())


def test_orthogonality_detects_past_perturbation():
    pr = problem("ma1-0.5", a_blocks=[[1.0]])
    rep = solve_extrapolation(pr)
    h = rep.h.perturbed({-1: np.array([1e-2])})
    res = check_orthogonality(pr, h)
    assert res[-1] >= 1e-3


def test_error_value_matches_mse():
    pr = problem("ar", K=2, a_blocks=[[1.0, 0.3j], [0.2, -0.5]])
    rep = solve_extrapolation(pr)
    assert error_value(rep.h, pr.density, pr.grid) == pytest.approx(rep.mse, rel=1e-10)


def test_ma1_one_step_error_is_innovation_variance():
    rep = solve_extrapolation(problem("ma1-0.5", a_blocks=[[1.0]]))
    assert rep.mse == pytest.approx(1.0, rel=1e-8)
    oracle = oracle_mmse(problem("ma1-0.5", a_blocks=[[1.0]]), 200, rep.mse)
    assert oracle.oracle_mse == pytest.approx(1.0, rel=0.02)


def test_white_finite_horizon_sum_of_squares():
    a = np.array([[1.0], [-0.5j], [0.25]])
    pr = problem("white", a_blocks=a, N=2)
    rep = solve_extrapolation(pr)
    assert rep.mse == pytest.approx(float(np.sum(np.abs(rep.b) ** 2)), rel=1e-12)


def test_adding_future_mass_never_lowers_white_error():
    # same-sign weights: every b_j only gains terms
    rng = np.random.default_rng(3)
    a = np.abs(rng.standard_normal((5, 1)))
    prev = 0.0
    for n in range(1, 6):
        rep = solve_extrapolation(problem("white", d=2, a_blocks=a[:n], N=n - 1))
        assert rep.mse >= prev - 1e-12
        prev = rep.mse


def test_adding_a_future_block_never_lowers_white_error():
    rng = np.random.default_rng(5)
    p = IncrementParams(d=1, T=1.0, K=2)
    f = SpectralDensityModel.white_increment_matched(2, IncrementKernel.of(p))
    b = rng.standard_normal((5, 2)) + 1j * rng.standard_normal((5, 2))
    # b-space weights: a_j = b_j - b_{j+1} for d = 1
    prev = 0.0
    for n in range(1, 6):
        bn = b[:n]
        a = bn - np.vstack([bn[1:], np.zeros((1, 2))])
        rep = solve_extrapolation(ExtrapolationProblem(p, f, a_blocks=a, N=n - 1))
        assert np.allclose(rep.b[:n], bn)
        assert rep.mse >= prev - 1e-12
        prev = rep.mse


def test_scale_equivariance():
    a = np.array([[1.0, 0.2], [0.3j, -0.4]])
    alpha = 1.5 - 2j
    r1 = solve_extrapolation(problem("ma1-0.3", K=2, a_blocks=a))
    r2 = solve_extrapolation(problem("ma1-0.3", K=2, a_blocks=alpha * a))
    assert r2.mse == pytest.approx(abs(alpha) ** 2 * r1.mse, rel=1e-10)
    lam = QuadratureGrid(64).nodes
    assert np.abs(r2.h(lam) - alpha * r1.h(lam)).max() < 1e-10 * max(1, np.abs(r2.h(lam)).max())


@pytest.mark.parametrize("name", RATIONAL)
def test_J_refinement_small(name):
    rep = solve_extrapolation(problem(name, a_blocks=[[1.0], [0.5]]))
    assert rep.mse_refinement_delta < 1e-4
    assert rep.mse > 0


def test_estimate_from_sampled_weight():
    p = IncrementParams(d=1, T=1.0, K=3, J=32)
    a = CoefficientFunction.from_callable(lambda t: np.exp(-2 * t), 6.0, 1 / 64)
    pr = ExtrapolationProblem(p, SpectralDensityModel.white_increment_matched(3, IncrementKernel.of(p)), a=a)
    rep = solve_extrapolation(pr)
    assert rep.mse == pytest.approx(float(np.sum(np.abs(rep.b) ** 2)), rel=1e-10)
    assert rep.v is not None and rep.v.shape == (64,)
    assert rep.diagnostics["kernel_exponent"] == "d"


def test_minimality_failure_raises():
    p = IncrementParams(d=1, T=1.0, tau=2)
    pr = ExtrapolationProblem(p, SpectralDensityModel.constant(np.eye(1)), a_blocks=np.array([[1.0]]))
    with pytest.raises(PreconditionError):
        solve_extrapolation(pr)


def test_report_json():
    rep = solve_extrapolation(problem("ar", a_blocks=[[1.0]]))
    out = json.loads(json.dumps(rep.to_json(QuadratureGrid(16))))
    for key in ("mse", "mse_refinement_delta", "b", "c", "orthogonality_residuals", "h_samples"):
        assert key in out


def test_characteristic_of_problem_helper():
    pr = problem("ma1-0.9", a_blocks=[[1.0]])
    rep = solve_extrapolation(pr)
    h = spectral_characteristic(pr, rep.b, rep.c)
    lam = QuadratureGrid(32).nodes
    assert np.allclose(h(lam), rep.h(lam))
