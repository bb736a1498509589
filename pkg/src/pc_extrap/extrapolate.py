"""Mean-square optimal extrapolation from the past of the increment sequence.

Given the block vectors ``b_j`` of the functional and the block-Toeplitz
operator ``F`` of ``f^{-1}/kernel``, the optimal coefficients solve
``F c = b`` and the error is ``Re <b, c>``.  The spectral characteristic is

    h(lam) = phi(lam) B(lam) - f^{-1}(lam) C(lam) / conj(phi(lam))
           = phi(lam) [B(lam) - W(lam) C(lam)],   W = f^{-1} / kernel,

with ``B(lam) = sum_j b_j e^{i lam j}`` and likewise ``C``.  The second form
is finite wherever ``W`` is, including at the kernel zeros and ``lam = 0``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import linalg

from .errors import (
    DimensionError,
    DomainError,
    IllConditionedOperatorError,
    InconsistencyError,
    NearSingularDensityError,
    PreconditionError,
)
from .increments import (
    CoefficientFunction,
    IncrementParams,
    apply_D_tau,
    b_function,
    coefficient_blocks,
    summability,
    v_function,
)
from .spectral import (
    BlockToeplitzOperator,
    IncrementKernel,
    MinimalityCheck,
    QuadratureGrid,
    SpectralDensityModel,
    check_minimality,
    hermitian_inverse,
    inverse_weight,
    toeplitz_from_weight,
)

PD_FLOOR = 1e-10
RESIDUAL_TOL = 1e-10
IMAG_TOL = 1e-12
NEGATIVE_TOL = 1e-10


# -- linear algebra -----------------------------------------------------------


def _as_blocks(b, K: Optional[int] = None) -> np.ndarray:
    b = np.asarray(b, dtype=complex)
    if b.ndim == 1:
        b = b[:, None] if K in (None, 1) else b.reshape(-1, K)
    if b.ndim != 2:
        raise DimensionError("block vectors must have shape (J, K)")
    return b


def fit_blocks(b, J: int) -> np.ndarray:
    """Truncate or zero-pad a block vector to ``J`` blocks."""
    b = _as_blocks(b)
    out = np.zeros((J, b.shape[1]), dtype=complex)
    k = min(J, b.shape[0])
    out[:k] = b[:k]
    return out


def solve_c(F: BlockToeplitzOperator, b) -> np.ndarray:
    """``c = F^{-1} b`` by Cholesky factorisation, with a definiteness check.

    Raises
    ------
    IllConditionedOperatorError
        If the smallest eigenvalue of ``F`` is not above ``1e-10 * trace / (JK)``
        or the solve residual exceeds ``1e-10 ||b||``.
    """
    J, K = F.J, F.K
    b = _as_blocks(b, K)
    if b.shape != (J, K):
        raise DimensionError(f"b has shape {b.shape}, operator expects {(J, K)}")
    A = F.dense()
    A = 0.5 * (A + A.conj().T)
    w = np.linalg.eigvalsh(A)
    floor = PD_FLOOR * np.real(np.trace(A)) / (J * K)
    cond = float(w[-1] / w[0]) if w[0] > 0 else float("inf")
    if not w[0] > floor:
        raise IllConditionedOperatorError(
            f"operator is not positive definite (min eigenvalue {w[0]:.3e}, floor {floor:.3e})",
            condition=cond,
        )
    x = linalg.cho_solve(linalg.cho_factor(A, lower=True), b.ravel())
    res = np.linalg.norm(A @ x - b.ravel())
    if res > RESIDUAL_TOL * max(np.linalg.norm(b), 1e-300):
        raise IllConditionedOperatorError(
            f"solve residual {res:.3e} exceeds tolerance", condition=cond
        )
    return x.reshape(J, K)


def mse(b, c) -> float:
    """``Re sum_j b_j^* c_j``.

    A sizeable imaginary part triggers a warning; a clearly negative value
    means the solve or the operator is wrong and raises.
    """
    b = np.asarray(b, dtype=complex).ravel()
    c = np.asarray(c, dtype=complex).ravel()
    if b.shape != c.shape:
        raise DimensionError("b and c differ in size")
    z = np.vdot(b, c)
    if abs(z.imag) > IMAG_TOL * max(abs(z), 1e-300) and abs(z.imag) > 1e-300:
        warnings.warn(f"mean-square error has imaginary part {z.imag:.3e}", RuntimeWarning)
    if z.real < -NEGATIVE_TOL:
        raise InconsistencyError(f"negative mean-square error {z.real:.3e}")
    return max(float(z.real), 0.0)


# -- spectral characteristic ---------------------------------------------------


def transform(blocks, lam) -> np.ndarray:
    """``sum_j blocks_j e^{i lam j}`` at each frequency, shape ``(n, K)``."""
    blocks = np.asarray(blocks, dtype=complex)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if blocks.shape[0] == 0:
        return np.zeros((lam.size, blocks.shape[1]), dtype=complex)
    return np.exp(1j * np.outer(lam, np.arange(blocks.shape[0]))) @ blocks


@dataclass
class SpectralCharacteristic:
    """Evaluator of ``h(lam)`` built from ``b``, ``c`` and the density.

    ``past`` optionally adds ``sum_{j <= -1} e^{i lam j} phi(lam) r_j``, which
    leaves the estimate admissible (it stays a functional of the past).
    """

    b: np.ndarray
    c: np.ndarray
    density: SpectralDensityModel
    kernel: IncrementKernel
    past: dict = field(default_factory=dict)

    def weight(self, lam):
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        F = self.density(lam)
        ok = np.ones(lam.size, dtype=bool)
        try:
            return hermitian_inverse(F, lam) / self.kernel(lam)[:, None, None], ok
        except NearSingularDensityError:
            pass
        W = np.full_like(F, np.nan)
        for i in range(lam.size):
            try:
                W[i] = hermitian_inverse(F[i : i + 1], lam[i : i + 1])[0]
            except NearSingularDensityError:
                ok[i] = False
        return W / self.kernel(lam)[:, None, None], ok

    def error_factor(self, lam):
        """``f^{-1} C / conj(phi) = phi W C``, the part not reproduced by the estimate."""
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        W, _ = self.weight(lam)
        phi = self.kernel.transfer(lam)
        e = phi[:, None] * np.einsum("nkl,nl->nk", W, transform(self.c, lam))
        for j, r in self.past.items():
            e = e - np.exp(1j * lam * j)[:, None] * phi[:, None] * np.asarray(r)[None, :]
        return e

    def __call__(self, lam):
        lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
        phi = self.kernel.transfer(lam_arr)
        h = phi[:, None] * transform(self.b, lam_arr) - self.error_factor(lam_arr)
        return h[0] if np.ndim(lam) == 0 else h

    def perturbed(self, coefficients: dict) -> "SpectralCharacteristic":
        """Add past-supported terms ``{j: r_j}`` with ``j <= -1``."""
        past = dict(self.past)
        for j, r in coefficients.items():
            if j > -1:
                raise DomainError("perturbations must be supported on j <= -1")
            past[j] = past.get(j, 0) + np.asarray(r, dtype=complex)
        return SpectralCharacteristic(self.b, self.c, self.density, self.kernel, past)

    def samples(self, grid: QuadratureGrid):
        lam = grid.nodes
        _, ok = self.weight(lam)
        return lam, self(lam), ~ok


def spectral_characteristic(problem, b, c) -> SpectralCharacteristic:
    return SpectralCharacteristic(_as_blocks(b), _as_blocks(c), problem.density,
                                  IncrementKernel.of(problem.params))


def error_value(h: SpectralCharacteristic, f: SpectralDensityModel, grid: QuadratureGrid) -> float:
    """``Delta(h; f) = 1/(2 pi) int e^* f e dlam`` with ``e = phi B - h``."""
    lam = grid.nodes
    e = h.error_factor(lam)
    val = np.einsum("nk,nkl,nl->", e.conj(), f(lam), e) / grid.M
    return float(val.real)


def check_orthogonality(problem, h: SpectralCharacteristic, j_range: Iterable[int] = range(-1, -11, -1)):
    """Residual of ``E[error * conj(xi_j)] = 0`` for past indices ``j``.

    ``residual(j) = || 1/(2 pi) int f(lam) (phi B - h)(lam) conj(phi(lam)) e^{-i j lam} dlam ||``.
    """
    grid = problem.grid
    lam = grid.nodes
    phi = h.kernel.transfer(lam)
    e = phi[:, None] * transform(h.b, lam) - h(lam)
    g = np.einsum("nkl,nl->nk", problem.density(lam), e) * np.conj(phi)[:, None]
    out = {}
    for j in j_range:
        if j > -1:
            raise DomainError("orthogonality is checked for j <= -1 only")
        v = (np.exp(-1j * j * lam)[:, None] * g).sum(axis=0) / grid.M
        out[int(j)] = float(np.linalg.norm(v))
    return out


# -- problem pipeline ---------------------------------------------------------


@dataclass(frozen=True)
class ExtrapolationProblem:
    """Prediction of ``int a(t) xi(t) dt`` over ``[0, inf)`` (``N`` None) or ``[0, (N+1)T]``.

    Either a sampled weight ``a`` or precomputed paired-order blocks
    ``a_blocks`` (shape ``(n, K)``) must be given.
    """

    params: IncrementParams
    density: SpectralDensityModel
    a: Optional[CoefficientFunction] = None
    a_blocks: Optional[np.ndarray] = None
    N: Optional[int] = None
    grid: QuadratureGrid = field(default_factory=QuadratureGrid)

    def __post_init__(self):
        if (self.a is None) == (self.a_blocks is None):
            raise DomainError("give exactly one of a, a_blocks")
        if self.density.K != self.params.K:
            raise DimensionError(f"density is {self.density.K}x{self.density.K}, K={self.params.K}")
        if self.N is not None:
            if self.N < 0:
                raise DomainError("N must be >= 0")
            if self.a is not None and self.a.support_end > (self.N + 1) * self.params.T + 1e-12:
                raise DomainError("finite-horizon weight must vanish beyond (N+1)T")
            if self.a_blocks is not None and np.any(np.asarray(self.a_blocks)[self.N + 1 :]):
                raise DomainError("finite-horizon blocks beyond N must vanish")

    @property
    def kernel(self) -> IncrementKernel:
        return IncrementKernel.of(self.params)

    def coefficient_blocks(self) -> np.ndarray:
        if self.a_blocks is not None:
            a = _as_blocks(self.a_blocks, self.params.K)
            if a.shape[1] != self.params.K:
                raise DimensionError(f"a_blocks has {a.shape[1]} coordinates, K={self.params.K}")
            return a
        n = None if self.N is None else self.N + 1
        return coefficient_blocks(self.a, self.params.T, self.params.K, n)

    def b_blocks(self) -> np.ndarray:
        """``D^tau a`` (all available blocks, before J-truncation)."""
        return apply_D_tau(self.coefficient_blocks(), self.params, self.N)

    def with_density(self, f: SpectralDensityModel) -> "ExtrapolationProblem":
        return ExtrapolationProblem(self.params, f, self.a, self.a_blocks, self.N, self.grid)


@dataclass
class EstimateReport:
    mse: float
    mse_refined: float
    b: np.ndarray
    c: np.ndarray
    h: SpectralCharacteristic
    J: int
    v: Optional[np.ndarray]
    orthogonality_residuals: dict
    minimality: MinimalityCheck
    diagnostics: dict

    @property
    def mse_refinement_delta(self) -> float:
        return abs(self.mse_refined - self.mse) / max(abs(self.mse), 1e-300)

    def to_json(self, grid: Optional[QuadratureGrid] = None, n_samples: int = 256) -> dict:
        grid = grid or QuadratureGrid(n_samples)
        lam, hv, skipped = self.h.samples(grid)
        return {
            "mse": self.mse,
            "mse_refined": self.mse_refined,
            "mse_refinement_delta": self.mse_refinement_delta,
            "J": self.J,
            "b": complex_to_json(self.b),
            "c": complex_to_json(self.c),
            "v": None if self.v is None else complex_to_json(self.v),
            "orthogonality_residuals": {str(k): v for k, v in self.orthogonality_residuals.items()},
            "minimality": {
                "finite": self.minimality.finite,
                "value": self.minimality.value,
                "value_refined": self.minimality.value_refined,
            },
            "h_samples": {
                "lambda": lam.tolist(),
                "re": hv.real.tolist(),
                "im": hv.imag.tolist(),
                "skipped_nodes": np.flatnonzero(skipped).tolist(),
            },
            "diagnostics": self.diagnostics,
        }


def complex_to_json(x):
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return {"re": x.real.tolist(), "im": x.imag.tolist()}
    return x.tolist()


def _solve_at(W, b_all, J):
    F = toeplitz_from_weight(W, J)
    b = fit_blocks(b_all, J)
    c = solve_c(F, b)
    return b, c, mse(b, c)


def solve_extrapolation(problem: ExtrapolationProblem, J: Optional[int] = None,
                        j_range: Sequence[int] = range(-1, -11, -1)) -> EstimateReport:
    """Full pipeline ``a -> b = D^tau a -> c = F^{-1} b -> (h, Delta, v)``.

    ``J`` defaults to ``max(params.J, N + 1)``; the report also carries the
    error obtained with ``2J`` blocks.
    """
    params, grid = problem.params, problem.grid
    kernel = problem.kernel
    mini = check_minimality(problem.density, kernel, grid)
    if not mini.finite:
        raise PreconditionError(
            f"minimality condition not verified (value={mini.value:.6g}, refined={mini.value_refined:.6g})"
        )
    b_all = problem.b_blocks()
    diag = {"kernel_exponent": "d", "horizon": "infinite" if problem.N is None else f"finite({problem.N})"}
    if problem.N is None:
        s = summability(b_all)
        diag["summability"] = s
        # samples beyond the stored support are zero, so the sums are finite
        # unless the data itself is not
        if not (np.isfinite(s["sum_norm"]) and np.isfinite(s["sum_weighted_norm"])):
            raise PreconditionError("coefficient blocks are not summable")
    J = J or max(params.J, (problem.N or 0) + 1)
    if problem.N is not None and J < problem.N + 1:
        raise DomainError("J must cover the finite horizon")
    norms = np.linalg.norm(b_all, axis=1)
    diag["b_tail_dropped"] = float(norms[J:].sum())

    W = inverse_weight(problem.density, kernel, grid)
    b, c, value = _solve_at(W, b_all, J)
    _, _, value2 = _solve_at(W, b_all, 2 * J)
    diag["mse_refinement_delta"] = abs(value2 - value) / max(abs(value), 1e-300)

    h = spectral_characteristic(problem, b, c)
    resid = check_orthogonality(problem, h, j_range)
    v = None
    if problem.a is not None:
        v = v_function(b_function(problem.a, params, problem.N), params, problem.N).values
    return EstimateReport(value, value2, b, c, h, J, v, resid, mini, diag)
