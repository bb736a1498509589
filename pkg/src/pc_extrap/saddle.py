"""Greatest value of the error and the least favourable moving-average sequence.

For block vector ``b`` with ``N + 1`` blocks the Gram operator

    Q(p, q) = sum_{s=0}^{min(N-p, N-q)} b_{s+p} b_{s+q}^*

equals ``L L^*`` where the block column ``p`` of ``L`` holds ``b_{s+p}`` in
column ``s``.  Its top eigenvalue ``nu^2`` bounds the error of the zero
estimate over one-sided moving averages of power ``P``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, DomainError

POWER_TOL = 1e-12
POWER_MAX_ITER = 10_000
DENSE_LIMIT = 256


def gram_factor(b) -> np.ndarray:
    """``L`` with ``L[p*K:(p+1)*K, s] = b_{s+p}`` (zero when ``s + p > N``)."""
    b = np.asarray(b, dtype=complex)
    if b.ndim == 1:
        b = b[:, None]
    n, K = b.shape
    L = np.zeros((n * K, n), dtype=complex)
    for p in range(n):
        for s in range(n - p):
            L[p * K : (p + 1) * K, s] = b[s + p]
    return L


def build_Q(b, N: Optional[int] = None) -> np.ndarray:
    """Hermitian PSD block matrix ``Q`` of size ``(N+1)K``."""
    b = np.asarray(b, dtype=complex)
    if b.ndim == 1:
        b = b[:, None]
    if b.ndim != 2 or b.shape[0] == 0:
        raise DimensionError("b must have shape (N+1, K)")
    if N is not None and b.shape[0] != N + 1:
        raise DimensionError(f"b has {b.shape[0]} blocks, expected N+1 = {N + 1}")
    L = gram_factor(b)
    Q = L @ L.conj().T
    return 0.5 * (Q + Q.conj().T)


@dataclass
class SaddleResult:
    nu_squared: float
    g: np.ndarray  # (N+1, K), ||g||^2 = P
    P: float
    degenerate: bool
    iterations: int
    converged: bool
    dense_nu_squared: Optional[float] = None

    @property
    def max_error(self) -> float:
        return self.P * self.nu_squared

    def ma_coefficients(self, M: Optional[int] = None) -> np.ndarray:
        """Blocks ``g(p)`` of shape ``(N+1, K, M)``; the first innovation carries ``conj(g_p)``.

        The conjugate makes ``sum_p b_p^T g(p)`` aligned with the top
        eigenvector under the bilinear pairing of the functional.
        """
        K = self.g.shape[1]
        M = K if M is None else M
        if not 1 <= M:
            raise DomainError("innovation dimension must be >= 1")
        out = np.zeros((self.g.shape[0], K, M), dtype=complex)
        out[:, :, 0] = np.conj(self.g)
        return out

    def to_json(self) -> dict:
        return {
            "nu_squared": self.nu_squared,
            "max_error": self.max_error,
            "P": self.P,
            "g_blocks": {"re": self.g.real.tolist(), "im": self.g.imag.tolist()},
            "degeneracy_flag": self.degenerate,
            "iterations": self.iterations,
            "converged": self.converged,
            "dense_nu_squared": self.dense_nu_squared,
        }


def top_eigen(Q, P: float = 1.0, K: int = 1, seed: int = 0, tol: float = POWER_TOL,
              max_iter: int = POWER_MAX_ITER) -> SaddleResult:
    """Top eigenpair of a Hermitian PSD matrix by power iteration.

    Stops when the Rayleigh quotient changes by less than ``tol`` relative
    and the eigen-residual is below ``1e-8 nu^2``.  For sizes up to 256 the
    value is cross-checked against a dense solver, which also decides the
    degeneracy flag (top eigenvalue repeated to relative 1e-8).
    """
    Q = np.asarray(Q, dtype=complex)
    n = Q.shape[0]
    if Q.shape != (n, n) or n % K:
        raise DimensionError("Q must be square with size divisible by K")
    if P < 0:
        raise DomainError("power bound must be nonnegative")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    nu = 0.0
    converged = False
    it = 0
    scale = max(np.abs(Q).max(), 1e-300)
    for it in range(1, max_iter + 1):
        y = Q @ x
        ny = np.linalg.norm(y)
        if ny <= 1e-300 * scale:
            nu, converged = 0.0, True
            break
        new = float(np.vdot(x, y).real)
        x = y / ny
        if abs(new - nu) <= tol * abs(new):
            res = np.linalg.norm(Q @ x - new * x)
            if res <= 1e-8 * new:
                nu, converged = new, True
                break
        nu = new

    dense = None
    degenerate = False
    if n <= DENSE_LIMIT:
        w, V = np.linalg.eigh(Q)
        dense = float(w[-1])
        degenerate = n > 1 and (w[-1] - w[-2]) <= 1e-8 * max(abs(w[-1]), 1e-300)
        if not converged or degenerate:
            # the power method stalls on a repeated top eigenvalue; take the
            # dense eigenvector, which lies in the top eigenspace
            x, nu, converged = V[:, -1], dense, True
    elif not converged:
        degenerate = True
    g = x * np.sqrt(P) / max(np.linalg.norm(x), 1e-300)
    return SaddleResult(max(nu, 0.0), g.reshape(-1, K), P, bool(degenerate), it, converged, dense)


def saddle_bound(b, P: float = 1.0, N: Optional[int] = None, seed: int = 0) -> SaddleResult:
    b = np.asarray(b, dtype=complex)
    if b.ndim == 1:
        b = b[:, None]
    return top_eigen(build_Q(b, N), P=P, K=b.shape[1], seed=seed)


@dataclass
class MovingAverageSequence:
    ma_coefficients: np.ndarray  # (N+1, K, M)
    innovations: np.ndarray  # (n_steps + N, M)
    values: np.ndarray  # (n_steps, K)


def synthesize_least_favorable(result: SaddleResult, n_steps: int, seed: int = 0,
                               M: Optional[int] = None) -> MovingAverageSequence:
    """``xi_j = sum_{p=0}^{N} g(p) eps(j - p)`` with complex Gaussian orthonormal innovations."""
    G = result.ma_coefficients(M)
    n_lag, K, M = G.shape
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    eps = (rng.standard_normal((n_steps + n_lag - 1, M))
           + 1j * rng.standard_normal((n_steps + n_lag - 1, M))) / np.sqrt(2)
    xi = np.zeros((n_steps, K), dtype=complex)
    for p in range(n_lag):
        xi += eps[n_lag - 1 - p : n_lag - 1 - p + n_steps] @ G[p].T
    return MovingAverageSequence(G, eps, xi)


def functional_error_mc(b, result: SaddleResult, n_paths: int, seed: int = 0):
    """Monte Carlo of ``E | sum_j b_j^T xi_j |^2`` over the future innovations.

    Uses the least favourable sequence built from the innovations
    ``eps(0..N)`` that are independent of the past; returns ``(mean, se)``.
    """
    b = np.asarray(b, dtype=complex)
    if b.ndim == 1:
        b = b[:, None]
    G = result.ma_coefficients()
    n_lag, K, M = G.shape
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    eps = (rng.standard_normal((n_paths, n_lag, M)) + 1j * rng.standard_normal((n_paths, n_lag, M))) / np.sqrt(2)
    # xi_j restricted to eps(s), 0 <= s <= j: everything before 0 is known
    total = np.zeros(n_paths, dtype=complex)
    for j in range(n_lag):
        for s in range(j + 1):
            total += (eps[:, s] @ G[j - s].T) @ b[j]
    v = np.abs(total) ** 2
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(n_paths))
