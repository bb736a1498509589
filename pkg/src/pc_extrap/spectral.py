"""Spectral density models, the increment kernel and block-Toeplitz assembly.

Convention: for the generated increment sequence ``xi_j`` (natural basis
order) the structural function is

    R(j)[k, n] = E xi_{k, l+j} conj(xi_{n, l})
               = 1/(2 pi) int e^{i j lam} phi_1(lam) conj(phi_2(lam)) f_{nk}(lam) dlam,

with ``phi(lam) = (1 - e^{-i lam tau})^d / (i lam)^d``.  Under this
convention the normal equations of the prediction problem read ``F c = b``
with ``F`` the block-Toeplitz matrix of the Fourier coefficients of
``f^{-1} / kernel``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionError, DomainError, NearSingularDensityError, PreconditionError

CONDITION_CEILING = 1e12
DIVERGENCE_CEILING = 1e8
DEFAULT_NODES = 4096


@dataclass(frozen=True)
class QuadratureGrid:
    """Midpoint nodes on ``[-pi, pi)``; every node carries weight ``1/M`` of ``dlam/(2 pi)``."""

    M: int = DEFAULT_NODES
    refinement: int = 2

    def __post_init__(self):
        if self.M < 2 or self.M % 2:
            raise DomainError("M must be an even integer >= 2 (odd M puts a node at lambda = 0)")
        if self.refinement < 2:
            raise DomainError("refinement factor must be >= 2")

    @property
    def nodes(self) -> np.ndarray:
        return -np.pi + (np.arange(self.M) + 0.5) * (2 * np.pi / self.M)

    @property
    def weight(self) -> float:
        return 1.0 / self.M

    def refined(self) -> "QuadratureGrid":
        return QuadratureGrid(self.M * self.refinement, self.refinement)

    def mean(self, values):
        """``1/(2 pi) int values dlam`` along the first axis."""
        return np.asarray(values).sum(axis=0) / self.M


@dataclass(frozen=True)
class IncrementKernel:
    """``|1 - e^{i lam tau}|^{2d} / lam^{2d}``, extended by ``tau^{2d}`` at zero."""

    d: int
    tau: int = 1

    def _ratio(self, lam):
        # 2 sin(lam tau / 2) / lam, smooth through zero
        return self.tau * np.sinc(np.asarray(lam, dtype=float) * self.tau / (2 * np.pi))

    def __call__(self, lam):
        return self._ratio(lam) ** (2 * self.d)

    def transfer(self, lam):
        """``phi(lam) = (1 - e^{-i lam tau})^d / (i lam)^d``; ``|phi|^2`` is the kernel."""
        lam = np.asarray(lam, dtype=float)
        return np.exp(-0.5j * lam * self.tau * self.d) * self._ratio(lam) ** self.d

    def zeros(self) -> np.ndarray:
        m = np.arange(-self.tau, self.tau + 1)
        z = 2 * np.pi * m / self.tau
        return z[(m != 0) & (z >= -np.pi) & (z < np.pi)]

    @classmethod
    def of(cls, params) -> "IncrementKernel":
        return cls(params.d, params.tau)


def _as_matrix(x, K=None) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise DimensionError("expected a square matrix")
    if K is not None and x.shape[0] != K:
        raise DimensionError(f"expected {K}x{K}, got {x.shape}")
    return x


def _poly(coefs, lam):
    """``sum_k coefs[k] e^{-i k lam}`` for scalar or matrix coefficients; lam is 1-D."""
    coefs = np.asarray(coefs, dtype=complex)
    z = np.exp(-1j * np.outer(lam, np.arange(coefs.shape[0])))
    return np.tensordot(z, coefs, axes=(1, 0))


@dataclass(frozen=True)
class SpectralDensityModel:
    """K x K Hermitian PSD matrix function ``f(lam)`` on ``[-pi, pi)``.

    ``evaluator`` maps a 1-D array of frequencies to an array ``(n, K, K)``.
    ``params`` keeps the construction data for serialisation.
    """

    K: int
    kind: str
    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        scalar = lam.ndim == 0
        out = np.asarray(self.evaluator(np.atleast_1d(lam)), dtype=complex)
        if out.shape[1:] != (self.K, self.K):
            raise DimensionError(f"evaluator returned shape {out.shape}")
        return out[0] if scalar else out

    def validate(self, grid: QuadratureGrid, tol: float = 1e-10):
        """Assert Hermitian PSD at all nodes."""
        F = self(grid.nodes)
        scale = max(np.abs(F).max(), 1e-300)
        if np.abs(F - np.conj(np.swapaxes(F, 1, 2))).max() > tol * scale:
            raise DomainError(f"{self.kind} density is not Hermitian")
        w = np.linalg.eigvalsh(F)
        if (w.min(axis=1) < -tol * np.maximum(np.abs(w).max(axis=1), 1e-300)).any():
            raise DomainError(f"{self.kind} density is not positive semidefinite")

    def is_real_symmetric(self, grid: QuadratureGrid, tol: float = 1e-12) -> bool:
        """True when ``f(-lam) = conj(f(lam))`` on the (symmetric) node set."""
        F = self(grid.nodes)
        return bool(np.abs(F[::-1] - np.conj(F)).max() <= tol * max(np.abs(F).max(), 1e-300))

    def scaled(self, s: float) -> "SpectralDensityModel":
        ev = self.evaluator
        return SpectralDensityModel(self.K, self.kind, lambda lam: s * ev(lam),
                                    dict(self.params, scale_factor=s))

    # -- constructors ---------------------------------------------------------

    @classmethod
    def from_callable(cls, fn, K: int = 1, kind: str = "custom"):
        def ev(lam):
            v = np.asarray(fn(lam), dtype=complex)
            if v.ndim == 1:
                v = v[:, None, None]
            return v
        return cls(K, kind, ev)

    @classmethod
    def constant(cls, F0):
        F0 = _as_matrix(F0)
        K = F0.shape[0]
        return cls(K, "constant", lambda lam: np.broadcast_to(F0, (lam.shape[0], K, K)).copy(),
                   {"matrix": F0})

    @classmethod
    def scalar_rational(cls, ma=(1.0,), ar=(1.0,), scale=1.0, kernel: Optional[IncrementKernel] = None):
        """``scale |ma(e^{-i lam})|^2 / |ar(e^{-i lam})|^2``.

        With ``kernel`` given the rational function is the density of the
        increment sequence and ``f`` is it divided by the kernel.
        """
        ma = np.atleast_1d(np.asarray(ma, dtype=complex))
        ar = np.atleast_1d(np.asarray(ar, dtype=complex))

        def ev(lam):
            g = scale * np.abs(_poly(ma, lam)) ** 2 / np.abs(_poly(ar, lam)) ** 2
            if kernel is not None:
                g = g / kernel(lam)
            return g[:, None, None].astype(complex)

        return cls(1, "scalar-rational", ev,
                   {"ma": ma, "ar": ar, "scale": scale, "increment_matched": kernel is not None})

    @classmethod
    def diagonal_rational(cls, components: Sequence[dict], kernel: Optional[IncrementKernel] = None):
        """Diagonal density whose entries are scalar rational functions."""
        parts = [cls.scalar_rational(kernel=kernel, **c) for c in components]
        K = len(parts)

        def ev(lam):
            out = np.zeros((lam.shape[0], K, K), dtype=complex)
            for k, p in enumerate(parts):
                out[:, k, k] = p.evaluator(lam)[:, 0, 0]
            return out

        return cls(K, "diagonal-rational", ev,
                   {"components": list(components), "increment_matched": kernel is not None})

    @classmethod
    def white_increment_matched(cls, K: int, kernel: IncrementKernel):
        """``f = I / kernel``: the generated increment sequence is white."""
        eye = np.eye(K, dtype=complex)
        return cls(K, "white-increment-matched",
                   lambda lam: eye[None] / kernel(lam)[:, None, None],
                   {"d": kernel.d, "tau": kernel.tau})

    @classmethod
    def vector_rational(cls, ma, ar=None, innovation=None, kernel: Optional[IncrementKernel] = None):
        """``A(z)^{-1} M(z) S M(z)^* A(z)^{-*}`` with ``z = e^{-i lam}``.

        ``ma``/``ar`` are sequences of K x K matrices (``ar[0]`` usually I).
        """
        ma = np.asarray(ma, dtype=complex)
        K = ma.shape[1]
        ar = np.eye(K, dtype=complex)[None] if ar is None else np.asarray(ar, dtype=complex)
        S = np.eye(K, dtype=complex) if innovation is None else _as_matrix(innovation, K)

        def ev(lam):
            Mz = _poly(ma, lam)
            H = np.linalg.solve(_poly(ar, lam), Mz)
            g = H @ S @ np.conj(np.swapaxes(H, 1, 2))
            g = 0.5 * (g + np.conj(np.swapaxes(g, 1, 2)))
            if kernel is not None:
                g = g / kernel(lam)[:, None, None]
            return g

        return cls(K, "vector-rational", ev,
                   {"ma": ma, "ar": ar, "innovation": S, "increment_matched": kernel is not None})

    @classmethod
    def tabulated(cls, lambdas, values):
        """Periodic piecewise-linear interpolation of tabulated matrices.

        Evaluating exactly at a tabulated node returns the stored value.
        """
        lam0 = np.asarray(lambdas, dtype=float)
        vals = np.asarray(values, dtype=complex)
        if vals.ndim == 1:
            vals = vals[:, None, None]
        if vals.shape[0] != lam0.shape[0] or lam0.ndim != 1 or lam0.size < 1:
            raise DimensionError("lambdas and values disagree in length")
        order = np.argsort(lam0)
        lam0, vals = lam0[order], vals[order]
        K = vals.shape[1]
        ext_lam = np.concatenate([lam0[-1:] - 2 * np.pi, lam0, lam0[:1] + 2 * np.pi])
        ext_val = np.concatenate([vals[-1:], vals, vals[:1]])
        flat = ext_val.reshape(ext_val.shape[0], -1)

        def ev(lam):
            x = np.mod(lam + np.pi, 2 * np.pi) - np.pi
            idx = np.clip(np.searchsorted(ext_lam, x, side="right") - 1, 0, ext_lam.size - 2)
            x0, x1 = ext_lam[idx], ext_lam[idx + 1]
            w = ((x - x0) / (x1 - x0))[:, None]
            out = (1 - w) * flat[idx] + w * flat[idx + 1]
            exact = x == x0
            out[exact] = flat[idx[exact]]
            return out.reshape(-1, K, K)

        return cls(K, "tabulated", ev, {"lambdas": lam0, "values": vals})


# -- evaluation --------------------------------------------------------------


def eval_increment_density(f: SpectralDensityModel, kernel: IncrementKernel, lam):
    """``kernel(lam) f(lam)``, the spectral density of the increment sequence."""
    k = kernel(lam)
    F = f(lam)
    return k * F if np.ndim(lam) == 0 else k[:, None, None] * F


def hermitian_inverse(F: np.ndarray, nodes: Optional[np.ndarray] = None,
                      ceiling: float = CONDITION_CEILING) -> np.ndarray:
    """Pointwise inverse of a stack of Hermitian matrices, refusing near-singular ones."""
    F = 0.5 * (F + np.conj(np.swapaxes(F, -1, -2)))
    w, V = np.linalg.eigh(F)
    wmax = np.abs(w).max(axis=-1)
    bad = (w.min(axis=-1) <= 0) | (w.min(axis=-1) * ceiling < wmax) | ~np.isfinite(wmax)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        lam = None if nodes is None else float(nodes[i])
        raise NearSingularDensityError(
            f"spectral density is singular or ill-conditioned at node {i}"
            + ("" if lam is None else f" (lambda={lam:.6g})"),
            node=i, lam=lam,
        )
    return (V / w[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))


def inverse_weight(f: SpectralDensityModel, kernel: IncrementKernel, grid: QuadratureGrid):
    """``f^{-1}(lam) / kernel(lam)`` at the grid nodes, shape ``(M, K, K)``."""
    lam = grid.nodes
    return hermitian_inverse(f(lam), lam) / kernel(lam)[:, None, None]


@dataclass(frozen=True)
class MinimalityCheck:
    finite: bool
    value: float
    converged: bool
    value_refined: float
    M: int


def check_minimality(f: SpectralDensityModel, kernel: IncrementKernel, grid: QuadratureGrid = None,
                     ceiling: float = DIVERGENCE_CEILING, rtol: float = 1e-4) -> MinimalityCheck:
    """Estimate ``1/(2 pi) int Tr[f^{-1}/kernel] dlam`` at ``M`` and refined nodes."""
    grid = grid or QuadratureGrid()
    vals = []
    for g in (grid, grid.refined()):
        W = inverse_weight(f, kernel, g)
        vals.append(float(np.real(np.trace(W, axis1=1, axis2=2)).sum() / g.M))
    v, v2 = vals
    converged = bool(abs(v2 - v) <= rtol * abs(v2))
    return MinimalityCheck(converged and v2 < ceiling, v, converged, v2, grid.M)


@dataclass(frozen=True)
class BlockToeplitzOperator:
    """Generators ``G_m``, ``0 <= m < J``; block ``(j, l)`` is ``G_{j-l}`` with ``G_{-m} = G_m^*``."""

    generators: np.ndarray

    @property
    def J(self) -> int:
        return self.generators.shape[0]

    @property
    def K(self) -> int:
        return self.generators.shape[1]

    def block(self, j: int, l: int) -> np.ndarray:
        m = j - l
        return self.generators[m] if m >= 0 else np.conj(self.generators[-m].T)

    def dense(self) -> np.ndarray:
        J, K = self.J, self.K
        out = np.empty((J * K, J * K), dtype=complex)
        for j in range(J):
            for l in range(J):
                out[j * K : (j + 1) * K, l * K : (l + 1) * K] = self.block(j, l)
        return out

    def truncated(self, J: int) -> "BlockToeplitzOperator":
        return BlockToeplitzOperator(self.generators[:J])

    @classmethod
    def identity(cls, J: int, K: int):
        G = np.zeros((J, K, K), dtype=complex)
        G[0] = np.eye(K)
        return cls(G)


def fourier_coefficients(values: np.ndarray, n: int, sign: int = -1) -> np.ndarray:
    """``1/(2 pi) int e^{sign * i lam m} values(lam) dlam`` for ``m = 0..n-1`` on midpoint nodes."""
    values = np.asarray(values)
    M = values.shape[0]
    if n > M:
        raise DomainError(f"cannot resolve {n} coefficients from {M} nodes")
    m = np.arange(n)
    if sign < 0:
        spec = np.fft.fft(values, axis=0)[:n]
    else:
        spec = np.fft.ifft(values, axis=0)[:n] * M
    # midpoint nodes lam_k = -pi + (k + 1/2) 2 pi / M
    phase = np.exp(sign * 1j * m * (-np.pi + np.pi / M))
    return phase.reshape((n,) + (1,) * (values.ndim - 1)) * spec / M


def toeplitz_from_weight(W: np.ndarray, J: int) -> BlockToeplitzOperator:
    """Block-Toeplitz operator of the Fourier coefficients of ``W`` (nodes x K x K)."""
    return BlockToeplitzOperator(fourier_coefficients(W, J, sign=-1))


def fourier_block_coeffs(f: SpectralDensityModel, kernel: IncrementKernel, J: int,
                         grid: QuadratureGrid = None,
                         minimality: Optional[MinimalityCheck] = None) -> BlockToeplitzOperator:
    """``G_m = 1/(2 pi) int e^{-i lam m} f^{-1}(lam) / kernel(lam) dlam`` assembled into a
    block-Toeplitz operator.  Runs :func:`check_minimality` unless a passing check is given."""
    grid = grid or QuadratureGrid()
    if minimality is None:
        minimality = check_minimality(f, kernel, grid)
    if not minimality.finite:
        raise PreconditionError(
            f"minimality condition not verified (value={minimality.value:.6g}, "
            f"refined={minimality.value_refined:.6g})"
        )
    return toeplitz_from_weight(inverse_weight(f, kernel, grid), J)


def _lag_density(f: SpectralDensityModel, params, grid: QuadratureGrid, tau1=None, tau2=None):
    lam = grid.nodes
    k1 = IncrementKernel(params.d, tau1 or params.tau)
    k2 = IncrementKernel(params.d, tau2 or params.tau)
    factor = k1.transfer(lam) * np.conj(k2.transfer(lam))
    return factor[:, None, None] * np.swapaxes(f(lam), 1, 2)


def structural_function(f: SpectralDensityModel, params, j: int, tau1: int = None, tau2: int = None,
                        grid: QuadratureGrid = None) -> np.ndarray:
    """Structural function ``R(j; tau1, tau2)`` of the generated increment sequence (K x K)."""
    grid = grid or QuadratureGrid()
    G = _lag_density(f, params, grid, tau1, tau2)
    e = np.exp(1j * j * grid.nodes)
    return np.tensordot(e, G, axes=(0, 0)) / grid.M


def structure_lags(f: SpectralDensityModel, params, max_lag: int, grid: QuadratureGrid = None):
    """``R(j)`` for ``j = 0..max_lag`` as an array ``(max_lag+1, K, K)``; ``R(-j) = R(j)^*``."""
    grid = grid or QuadratureGrid()
    return fourier_coefficients(_lag_density(f, params, grid), max_lag + 1, sign=+1)
