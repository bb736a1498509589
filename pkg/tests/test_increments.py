import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from pc_extrap.errors import DomainError, GridMismatchError, InsufficientHistoryError
from pc_extrap.increments import (
    BlockFunction,
    CoefficientFunction,
    IncrementParams,
    ProcessPath,
    apply_D_tau,
    b_coeff_finite,
    b_function,
    basis_frequency,
    basis_function,
    block_decompose,
    coefficient_blocks,
    dcoef,
    dtau_coef,
    fourier_block,
    frequency_to_index,
    increment_path,
    paired_fourier_block,
    partner_index,
    representation_terms,
    summability,
    tail_truncation,
    v_coeff,
)


def series_power(base, d, n):
    """Coefficients of ``base(x)**d`` up to ``x**(n-1)`` by repeated truncated convolution."""
    out = np.zeros(n, dtype=object)
    out[0] = 1
    for _ in range(d):
        out = np.convolve(out, base)[:n]
    return out


def test_params_validation():
    with pytest.raises(DomainError):
        IncrementParams(d=0, T=1.0)
    with pytest.raises(DomainError):
        IncrementParams(d=1, T=1.0, tau=0)
    with pytest.raises(DomainError):
        IncrementParams(d=1, T=-1.0)
    assert IncrementParams(d=2, T=1.5, tau=2).step == 3.0


# -- increment_path -----------------------------------------------------------


def test_increment_of_constant_is_zero():
    p = ProcessPath.from_callable(lambda t: 5 + 0 * t, -2.0, 3.0, 0.25)
    assert np.all(increment_path(p, 1, 0.5).values == 0)


def test_first_increment_of_identity_is_step():
    p = ProcessPath.from_callable(lambda t: t, 0.0, 4.0, 0.125)
    assert np.allclose(increment_path(p, 1, 0.75).values, 0.75, atol=1e-14)


def test_second_increment_of_square():
    s = 0.5
    p = ProcessPath.from_callable(lambda t: t**2, 0.0, 4.0, 0.125)
    inc = increment_path(p, 2, s)
    assert np.allclose(inc.values, 2 * s * s, atol=1e-12)
    assert inc.t_min == pytest.approx(2 * s)


def test_increment_needs_history():
    p = ProcessPath.from_callable(lambda t: t, 0.0, 1.0, 0.25)
    with pytest.raises(InsufficientHistoryError):
        increment_path(p, 3, 0.5)


# -- blocks and Fourier coefficients --------------------------------------------


def test_block_decompose_two_periods():
    T = 1.0
    p = ProcessPath.from_callable(lambda t: np.sin(3 * t), 0.0, 2 * T, T / 16)
    blocks = block_decompose(p, T)
    assert len(blocks) == 2
    assert np.array_equal(blocks[0].values, p.values[:16])


def test_block_decompose_shift():
    T = 2.0
    p = ProcessPath.from_callable(lambda t: t, 0.0, 3 * T, T / 8)
    u = np.arange(8) * T / 8
    assert np.allclose(block_decompose(p, T)[1].values, T + u)


def test_block_decompose_rejects_partial_period():
    p = ProcessPath.from_callable(lambda t: t, 0.0, 2.5, 0.25)
    with pytest.raises(GridMismatchError):
        block_decompose(p, 1.0)


def test_basis_index_maps():
    assert [basis_frequency(k) for k in range(1, 8)] == [0, 1, -1, 2, -2, 3, -3]
    for k in range(1, 30):
        assert frequency_to_index(basis_frequency(k)) == k
        assert basis_frequency(partner_index(k)) == -basis_frequency(k)


def _block(fn, T, m):
    v = np.arange(m) * T / m
    return BlockFunction(0, fn(v), T / m, fn(T))


def test_fourier_of_constant_block():
    T, c = 2.0, 1.7
    out = fourier_block(_block(lambda v: c + 0 * v, T, 256), 5)
    assert out[0] == pytest.approx(c * math.sqrt(T))
    assert np.abs(out[1:]).max() < 1e-12


def test_fourier_of_exponential_block():
    T = 1.5
    blk = _block(lambda v: np.exp(2j * np.pi * v / T), T, 512)
    paired = paired_fourier_block(blk, 5)
    # the index whose frequency is -1 pairs with e^{+2 pi i v / T}
    k = frequency_to_index(-1)
    assert paired[k - 1] == pytest.approx(math.sqrt(T))
    assert np.abs(np.delete(paired, k - 1)).max() < 1e-12
    natural = fourier_block(blk, 5)
    assert natural[frequency_to_index(1) - 1] == pytest.approx(math.sqrt(T))


def test_fourier_matches_refined_quadrature():
    T, K, m = 1.0, 3, 1024
    out = fourier_block(_block(lambda v: v, T, m), K)
    for k in range(1, K + 1):
        w = basis_function(k, T)
        re = quad(lambda v: (v * np.conj(w(v))).real, 0, T, limit=200)[0]
        im = quad(lambda v: (v * np.conj(w(v))).imag, 0, T, limit=200)[0]
        assert abs(out[k - 1] - (re + 1j * im)) < 1e-6


def test_fourier_of_basis_functions_is_unit():
    T, K = 1.0, 7
    for k in range(1, K + 1):
        out = fourier_block(_block(basis_function(k, T), T, 1024), K)
        expect = np.zeros(K)
        expect[k - 1] = 1
        assert np.abs(out - expect).max() < 1e-8


# -- coefficient transforms -------------------------------------------------------


@pytest.mark.parametrize("d,k,expected", [(1, 0, 1), (1, 17, 1), (2, 3, 4), (3, 2, 6)])
def test_dcoef_examples(d, k, expected):
    assert dcoef(d, k) == expected


def test_dcoef_against_series_product():
    for d in range(1, 7):
        oracle = series_power(np.ones(65, dtype=object), d, 65)
        assert [dcoef(d, k) for k in range(65)] == list(oracle)


def test_dtau_coef():
    for d in range(1, 5):
        for k in range(20):
            assert dtau_coef(d, 1, k) == dcoef(d, k)
    assert dtau_coef(2, 2, 3) == 0
    assert dtau_coef(2, 2, 4) == 3
    for d in (1, 2, 3):
        for tau in (2, 3):
            base = np.zeros(40, dtype=object)
            base[::tau] = 1
            oracle = series_power(base, d, 40)
            assert [dtau_coef(d, tau, k) for k in range(40)] == list(oracle)


def test_apply_D_tau_examples():
    p1 = IncrementParams(d=1, T=1.0)
    a = np.array([[1.0 + 2j, -0.5]])
    assert np.array_equal(apply_D_tau(a, p1), a)
    assert apply_D_tau(np.array([1, 1, 0, 0]), p1).ravel().tolist() == [2, 1, 0, 0]
    p2 = IncrementParams(d=2, T=1.0)
    assert apply_D_tau(np.array([1, 1, 1, 0]), p2).ravel().tolist() == [6, 3, 1, 0]


def test_apply_D_tau_matches_triangular_multiply():
    rng = np.random.default_rng(4)
    for d, tau in [(1, 1), (2, 1), (2, 2), (3, 2)]:
        p = IncrementParams(d=d, T=1.0, tau=tau, K=3)
        a = rng.standard_normal((9, 3)) + 1j * rng.standard_normal((9, 3))
        D = np.array([[dtau_coef(d, tau, m - j) if m >= j else 0 for m in range(9)] for j in range(9)])
        assert np.allclose(apply_D_tau(a, p), D @ a, atol=1e-12)


def test_apply_D_tau_finite_horizon_cuts_blocks():
    p = IncrementParams(d=1, T=1.0)
    assert apply_D_tau(np.array([1, 1, 1, 1]), p, N=1).ravel().tolist() == [2, 1]


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.integers(-50, 50), min_size=1, max_size=12),
    st.lists(st.integers(-50, 50), min_size=1, max_size=12),
    st.integers(-5, 5),
    st.integers(-5, 5),
    st.integers(1, 3),
    st.integers(1, 3),
)
def test_apply_D_tau_is_linear(x, y, alpha, beta, d, tau):
    n = max(len(x), len(y))
    a = np.array(x + [0] * (n - len(x)), dtype=np.int64)
    a2 = np.array(y + [0] * (n - len(y)), dtype=np.int64)
    p = IncrementParams(d=d, T=1.0, tau=tau)
    lhs = apply_D_tau(alpha * a + beta * a2, p)
    rhs = alpha * apply_D_tau(a, p) + beta * apply_D_tau(a2, p)
    assert np.array_equal(lhs, rhs)


def test_b_coeff_finite_examples():
    T, dt = 1.0, 1 / 8
    one = CoefficientFunction.from_callable(lambda t: 1 + 0 * t, 4.0, dt)
    assert b_coeff_finite(one, IncrementParams(d=1, T=T), 3, 0.0) == 5
    assert b_coeff_finite(one, IncrementParams(d=2, T=T), 1, 0.0) == 6
    a = CoefficientFunction.from_callable(lambda t: np.cos(t), 4.0, dt)
    assert b_coeff_finite(a, IncrementParams(d=2, T=T), 3, 3.5) == pytest.approx(np.cos(3.5))


def test_b_function_matches_pointwise_sum():
    p = IncrementParams(d=2, T=1.0, tau=2)
    a = CoefficientFunction.from_callable(lambda t: np.exp(-t) * np.sin(2 * t), 6.0, 1 / 16)
    b = b_function(a, p, N=5)
    for t in (0.0, 0.5, 1.25, 3.0, 5.9375):
        assert b(t) == pytest.approx(b_coeff_finite(a, p, 5, t))


def test_v_coeff_examples():
    dt = 1 / 16
    b = CoefficientFunction.from_callable(lambda t: 1 + t + np.sin(t), 6.0, dt)
    p1 = IncrementParams(d=1, T=1.0)
    p2 = IncrementParams(d=2, T=1.0)
    for t in (-0.9375, -0.5, -0.0625):
        assert v_coeff(b, p1, t) == pytest.approx(-b(t + 1))
        assert v_coeff(b, p2, t) == pytest.approx(-2 * b(t + 1) + b(t + 2))


def test_v_coeff_finite_cap():
    # with the horizon ending before t + 2 only the l = 1 term survives
    dt = 1 / 16
    p = IncrementParams(d=2, T=1.0)
    a = CoefficientFunction.from_callable(lambda t: np.cos(t), 1.0, dt)
    b = b_function(a, p, N=0)
    assert v_coeff(b, p, -0.5, N=0) == pytest.approx(-2 * b(0.5))


def _random_pair(rng, d, tau, T, N, vanishing=False):
    dt = T / 256
    L = (N + 1) * T
    c = rng.normal(size=4)
    w = rng.uniform(0.5, 3.0, size=2)

    def fa(t):
        val = c[0] * np.cos(w[0] * t) + c[1] * np.sin(w[1] * t) + c[2] * t + 1j * c[3]
        return (L - t) * val if vanishing else val

    a = CoefficientFunction.from_callable(fa, L, dt)
    q = rng.normal(size=3)
    path = ProcessPath.from_callable(
        lambda t: q[0] * np.sin(t) + q[1] * t**2 + q[2] * np.cos(3 * t), -tau * T * d, L, dt)
    return a, path


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("tau", [1, 2])
@pytest.mark.parametrize("T", [1.0, 2.0])
def test_representation_identity(d, tau, T):
    rng = np.random.default_rng(100 * d + 10 * tau + int(T))
    for N in (0, 2, 3):
        p = IncrementParams(d=d, T=T, tau=tau)
        a, path = _random_pair(rng, d, tau, T, N)
        A, B, V = representation_terms(a, path, p, N)
        assert abs(A - (B - V)) <= 1e-10 * abs(A)
        a, path = _random_pair(rng, d, tau, T, N, vanishing=True)
        A, B, V = representation_terms(a, path, p, None)
        assert abs(A - (B - V)) <= 1e-10 * abs(A)


def test_representation_identity_needs_history():
    p = IncrementParams(d=2, T=1.0)
    a = CoefficientFunction.from_callable(lambda t: 1 + 0 * t, 1.0, 1 / 8)
    path = ProcessPath.from_callable(lambda t: t, -1.0, 1.0, 1 / 8)
    with pytest.raises(InsufficientHistoryError):
        representation_terms(a, path, p, 0)


def test_coefficient_blocks_pair_bilinearly():
    # int a(t) xi(t) dt over one period equals the plain product a_0 . xi_0
    T, K, m = 1.0, 5, 512
    e3 = basis_function(3, T)
    a = CoefficientFunction.from_callable(lambda t: np.conj(e3(t)) * (t <= T), T, T / m)
    blocks = coefficient_blocks(a, T, K, 2)
    expect = np.zeros(K)
    expect[2] = 1
    assert np.abs(blocks[0] - expect).max() < 1e-8
    # the shared sample at t = T carries half a trapezoid weight into block 1
    assert np.abs(blocks[1]).max() <= 0.5 * (T / m) * 1.0001
    xi = lambda v: np.cos(2 * np.pi * v / T) + 0.3j * np.sin(4 * np.pi * v / T) + 0.2  # noqa: E731
    coords = fourier_block(_block(xi, T, m), K)
    a2 = CoefficientFunction.from_callable(lambda t: np.exp(-t) * (1 + 1j * t), T, T / m)
    direct = quad(lambda v: (np.exp(-v) * (1 + 1j * v) * xi(v)).real, 0, T)[0] + 1j * quad(
        lambda v: (np.exp(-v) * (1 + 1j * v) * xi(v)).imag, 0, T)[0]
    assert coefficient_blocks(a2, T, K, 1)[0] @ coords == pytest.approx(direct, abs=1e-5)


def test_tail_truncation_and_summability():
    blocks = np.array([[1.0], [0.5], [1e-14], [0.0]])
    assert tail_truncation(blocks) == 2
    s = summability(blocks)
    assert s["sum_norm"] == pytest.approx(1.5)
    assert s["support_blocks"] == 2
    assert s["decayed"]
