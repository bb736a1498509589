import numpy as np
import pytest

from pc_extrap.errors import DomainError
from pc_extrap.extrapolate import ExtrapolationProblem, solve_extrapolation
from pc_extrap.increments import IncrementParams
from pc_extrap.minimax import (
    DensityClassSpec,
    certify_saddle,
    corrupt,
    robust_value,
    solve_least_favorable_D0,
    solve_least_favorable_D1delta,
)
from pc_extrap.spectral import IncrementKernel, QuadratureGrid, SpectralDensityModel

P_MASS = 2.0


def problem(d=1, tau=1, K=1, a_blocks=((1.5,),), density=None, M=4096):
    p = IncrementParams(d=d, T=1.0, tau=tau, K=K, J=32)
    kern = IncrementKernel.of(p)
    f = density if density is not None else SpectralDensityModel.scalar_rational(ma=[1.0, 0.5], kernel=kern)
    return ExtrapolationProblem(p, f, a_blocks=np.asarray(a_blocks, dtype=complex), grid=QuadratureGrid(M))


def shape(g):
    return g / g.mean(axis=0)


# -- D0 classes ---------------------------------------------------------------


@pytest.mark.parametrize("d,tau", [(1, 1), (2, 1), (1, 2)])
def test_D0_single_block_is_scaled_white(d, tau):
    pr = problem(d=d, tau=tau)
    pr = ExtrapolationProblem(pr.params, pr.density, a_blocks=np.array([[1.5]]), N=0, grid=pr.grid)
    spec = DensityClassSpec("D0_2", p=P_MASS)
    res = solve_least_favorable_D0(spec, pr)
    assert res.converged
    # kernel * f0 = p at every node, i.e. f0 = p * lam^{2d} / |1 - e^{i lam tau}|^{2d}
    assert np.abs(res.g0 - P_MASS).max() < 1e-6 * P_MASS
    lam = pr.grid.nodes
    f0 = res.f0(lam)[:, 0, 0].real
    assert np.allclose(f0, P_MASS / IncrementKernel.of(pr.params)(lam), rtol=1e-6)
    assert res.value == pytest.approx(P_MASS * 1.5**2, rel=1e-8)
    assert res.equation_residual < 1e-6
    assert res.constraint_residual < 1e-8


def test_D0_mass_scaling():
    pr = problem(a_blocks=[[1.0], [0.5], [-0.3]])
    r1 = solve_least_favorable_D0(DensityClassSpec("D0_2", p=1.0), pr)
    r2 = solve_least_favorable_D0(DensityClassSpec("D0_2", p=2.0), pr)
    assert np.allclose(r2.g0, 2 * r1.g0, rtol=1e-6)
    assert r2.value == pytest.approx(2 * r1.value, rel=1e-6)


def test_D0_value_matches_pipeline_under_f0():
    pr = problem(a_blocks=[[1.0], [0.5], [-0.3]])
    res = solve_least_favorable_D0(DensityClassSpec("D0_2", p=P_MASS), pr)
    pr0 = ExtrapolationProblem(pr.params, res.f0, a_blocks=pr.a_blocks, grid=pr.grid)
    assert solve_extrapolation(pr0).mse == pytest.approx(res.value, rel=1e-6)


def test_robust_value_properties():
    pr = problem(a_blocks=[[1.0], [0.5], [-0.3]])
    res = solve_least_favorable_D0(DensityClassSpec("D0_2", p=P_MASS), pr)
    assert robust_value(res.f0, res.f0, pr) == pytest.approx(res.value, rel=1e-8)
    lam = pr.grid.nodes
    doubled = SpectralDensityModel.tabulated(lam, 2 * res.f0(lam))
    assert robust_value(res.f0, doubled, pr) == pytest.approx(2 * res.value, rel=1e-8)
    zero = ExtrapolationProblem(pr.params, pr.density, a_blocks=np.zeros((1, 1)), grid=pr.grid)
    assert robust_value(res.f0, res.f0, zero) == 0


def test_D0_per_coordinate_reduces_to_scalar():
    p2 = IncrementParams(d=1, T=1.0, K=2, J=32)
    kern = IncrementKernel.of(p2)
    f = SpectralDensityModel.white_increment_matched(2, kern)
    a = np.array([[1.0, 1.0], [0.5, 0.5]])
    pr2 = ExtrapolationProblem(p2, f, a_blocks=a)
    r2 = solve_least_favorable_D0(DensityClassSpec("D0_3", p_k=[P_MASS, P_MASS]), pr2)
    r1 = solve_least_favorable_D0(DensityClassSpec("D0_2", p=P_MASS), problem(a_blocks=a[:, :1]))
    for k in range(2):
        assert np.abs(r2.g0[:, k] - r1.g0[:, 0]).max() < 1e-6 * r1.g0.max()
    assert r2.value == pytest.approx(2 * r1.value, rel=1e-6)


def test_class_validation():
    with pytest.raises(DomainError):
        DensityClassSpec("D0_2")
    with pytest.raises(DomainError):
        DensityClassSpec("D0_2", p=-1.0)
    with pytest.raises(DomainError):
        DensityClassSpec("D9", p=1.0)


# -- certification ------------------------------------------------------------


@pytest.mark.parametrize("a", [[[1.5]], [[1.0], [0.5], [-0.3]]])
def test_certification_and_negative_control(a):
    pr = problem(a_blocks=a)
    spec = DensityClassSpec("D0_2", p=P_MASS)
    res = solve_least_favorable_D0(spec, pr)
    rep = certify_saddle(res, spec, pr, n_probes=100, seed=0)
    assert rep.passed, rep.violation
    bad = certify_saddle(corrupt(res, spec, pr), spec, pr, n_probes=100, seed=0)
    assert not bad.passed
    assert bad.violation is not None


def test_multi_start_agrees():
    pr = problem(a_blocks=[[1.0], [0.5], [-0.3]])
    spec = DensityClassSpec("D0_2", p=P_MASS)
    res = solve_least_favorable_D0(spec, pr, n_starts=4, seed=3)
    base = solve_least_favorable_D0(spec, pr)
    assert res.value == pytest.approx(base.value, rel=1e-6)
    # every start lands on the same fixed point, so only one distinct solution is kept
    assert len(res.alternatives) == 1


# -- D1delta classes -----------------------------------------------------------


def centre(pr, mass=P_MASS):
    return SpectralDensityModel.scalar_rational(ma=[1.0, 0.3], scale=mass / 1.09, kernel=IncrementKernel.of(pr.params))


def test_D1_zero_radius_returns_centre():
    pr = problem(a_blocks=[[1.0], [0.5]])
    f1 = centre(pr)
    res = solve_least_favorable_D1delta(DensityClassSpec("D1d_2", delta=0.0, f1=f1), pr)
    lam = pr.grid.nodes
    assert np.array_equal(res.f0(lam), f1(lam))


@pytest.mark.parametrize("d,tau", [(1, 1), (2, 1), (1, 2)])
@pytest.mark.parametrize("a", [[[1.5]], [[1.0], [0.5], [-0.3]]])
def test_D1_large_radius_matches_D0_shape(d, tau, a):
    pr = problem(d=d, tau=tau, a_blocks=a)
    r0 = solve_least_favorable_D0(DensityClassSpec("D0_2", p=P_MASS), pr)
    r1 = solve_least_favorable_D1delta(DensityClassSpec("D1d_2", delta=1e3 * P_MASS, f1=centre(pr)), pr)
    assert r1.converged
    assert np.abs(shape(r1.g0) - shape(r0.g0)).max() < 1e-3


def test_D1_certifies():
    pr = problem(a_blocks=[[1.0], [0.5], [-0.3]])
    spec = DensityClassSpec("D1d_2", delta=0.5, f1=centre(pr))
    res = solve_least_favorable_D1delta(spec, pr)
    assert res.converged
    assert res.constraint_residual < 1e-8
    assert certify_saddle(res, spec, pr, n_probes=50, seed=1).passed


def test_result_json():
    pr = problem()
    res = solve_least_favorable_D0(DensityClassSpec("D0_2", p=P_MASS), pr)
    out = res.to_json(QuadratureGrid(16))
    for key in ("value", "equation_residual", "constraint_residual", "f0_table", "converged"):
        assert key in out
