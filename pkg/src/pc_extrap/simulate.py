"""Brute-force oracles: spectral synthesis and Gaussian conditioning.

Synthesis draws independent circular complex Gaussian weights per frequency
cell with covariance ``f^T(lam_n) / M_s`` and sums

    xi_j = sum_n e^{i lam_n j} phi(lam_n) u_n

by one inverse FFT per path.  The resulting sequence has exactly the
structural function obtained by ``M_s``-point midpoint quadrature.  When
``f(-lam) = conj(f(lam))`` the cells are paired so that the output is real.

The conditioning oracle builds the joint covariance of the target
``y = sum_j b_j^T xi_j`` and a finite past window of increment coordinates
from the structural function and projects ``y`` on that window.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import DomainError
from .extrapolate import ExtrapolationProblem, solve_extrapolation
from .increments import IncrementParams
from .spectral import IncrementKernel, QuadratureGrid, SpectralDensityModel, structure_lags

CHUNK = 256


@dataclass(frozen=True)
class SynthesisConfig:
    density: SpectralDensityModel
    params: IncrementParams
    n_blocks: int
    n_paths: int
    seed: int = 0
    M_s: int = 4096
    start: int = 0  # index of the first synthesized block
    threads: int = 1

    def __post_init__(self):
        if self.n_blocks < 1 or self.n_paths < 1:
            raise DomainError("n_blocks and n_paths must be positive")
        if self.M_s < 8 * self.n_blocks:
            raise DomainError(f"M_s={self.M_s} must be at least 8*n_blocks={8 * self.n_blocks}")
        if self.M_s % 2:
            raise DomainError("M_s must be even")


def _cell_factors(cfg: SynthesisConfig):
    """``phi(lam_n) S_n`` with ``S_n S_n^* = f^T(lam_n)``, plus the real-pairing flag."""
    grid = QuadratureGrid(cfg.M_s)
    lam = grid.nodes
    F = np.swapaxes(cfg.density(lam), 1, 2)
    F = 0.5 * (F + np.conj(np.swapaxes(F, 1, 2)))
    w, V = np.linalg.eigh(F)
    S = V * np.sqrt(np.clip(w, 0, None))[:, None, :]
    phi = IncrementKernel.of(cfg.params).transfer(lam)
    return phi[:, None, None] * S, cfg.density.is_real_symmetric(grid), lam


def _chunk(cfg, A, real, lam0, rng, n):
    M, K = cfg.M_s, cfg.params.K
    cells = M // 2 if real else M
    z = rng.standard_normal((n, cells, K, 2)).view(complex)[..., 0] / np.sqrt(2)
    u = np.zeros((n, M, K), dtype=complex)
    for l in range(K):
        u[:, :cells] += A[None, :cells, :, l] * z[:, :, None, l]
    u /= np.sqrt(M)
    if real:
        # u at -lam is conj(u at lam), so paired terms sum to real values
        u[:, cells:] = np.conj(u[:, :cells][:, ::-1])
    j = cfg.start + np.arange(cfg.n_blocks)
    out = M * np.fft.ifft(u, axis=1)[:, j % M]
    out *= np.exp(1j * lam0 * j)[None, :, None]
    return out.real if real else out


def synthesize_increments(cfg: SynthesisConfig) -> np.ndarray:
    """Paths of the generated increment sequence, shape ``(n_paths, n_blocks, K)``.

    Blocks are indexed ``start, start+1, ...``.  Paths come in chunks of 256,
    each with its own Philox stream spawned from ``seed``, so the output does
    not depend on the thread count.
    """
    A, real, lam = _cell_factors(cfg)
    n_chunks = -(-cfg.n_paths // CHUNK)
    seeds = np.random.SeedSequence(cfg.seed).spawn(n_chunks)
    sizes = [min(CHUNK, cfg.n_paths - i * CHUNK) for i in range(n_chunks)]

    def work(i):
        return _chunk(cfg, A, real, lam[0], np.random.Generator(np.random.Philox(seeds[i])), sizes[i])

    if cfg.threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            parts = list(pool.map(work, range(n_chunks)))
    else:
        parts = [work(i) for i in range(n_chunks)]
    return np.concatenate(parts, axis=0)


def empirical_lags(paths: np.ndarray, max_lag: int):
    """Sample ``E xi_{j+l} xi_j^*`` averaged over paths and positions, with standard errors."""
    n_paths, n, K = paths.shape
    est, se = [], []
    for l in range(max_lag + 1):
        prod = np.einsum("pjk,pjn->pkn", paths[:, l:], np.conj(paths[:, : n - l])) / (n - l)
        est.append(prod.mean(axis=0))
        se.append(prod.std(axis=0, ddof=1) / np.sqrt(n_paths))
    return np.array(est), np.array(se)


# -- conditioning oracle ------------------------------------------------------


def _target_blocks(problem: ExtrapolationProblem) -> np.ndarray:
    b = problem.b_blocks()
    nz = np.flatnonzero(np.linalg.norm(b, axis=1))
    return b[: (nz[-1] + 1 if nz.size else 1)]


def _lag_table(problem, max_lag):
    M = max(problem.grid.M, 8 * (max_lag + 1))
    M += M % 2
    return structure_lags(problem.density, problem.params, max_lag, QuadratureGrid(M))


def _block_cov(R, rows, cols):
    """Covariance matrix ``[R(j - l)]`` for consecutive block ranges ``rows``, ``cols``."""
    K = R.shape[1]
    rows, cols = np.asarray(rows), np.asarray(cols)
    n = R.shape[0]
    # lag m = j - l; R(-m) = R(m)^*
    first_col = rows - cols[0]
    first_row = rows[0] - cols
    if max(np.abs(first_col).max(), np.abs(first_row).max()) >= n:
        raise DomainError("lag table too short")

    def lag(m, k, q):
        return np.where(m >= 0, R[np.abs(m), k, q], np.conj(R[np.abs(m), q, k]))

    out = np.empty((rows.size * K, cols.size * K), dtype=complex)
    for k in range(K):
        for q in range(K):
            out[k::K, q::K] = linalg.toeplitz(lag(first_col, k, q), lag(first_row, k, q))
    return out


@dataclass
class Projection:
    weights: np.ndarray  # row vector over the stacked past (block -window .. -1, all K)
    mse: float
    window: int
    ridge: bool


def conditioning(problem: ExtrapolationProblem, window: int, R=None) -> Projection:
    """Best linear predictor of the target from ``xi_{-window}, ..., xi_{-1}``."""
    if window < 1:
        raise DomainError("window must be >= 1")
    b = _target_blocks(problem)
    L = b.shape[0]
    if R is None:
        R = _lag_table(problem, window + L)
    past = list(range(-window, 0))
    fut = list(range(L))
    Sxx = _block_cov(R, past, past)
    Sxx = 0.5 * (Sxx + Sxx.conj().T)
    Stx = _block_cov(R, fut, past)
    Stt = _block_cov(R, fut, fut)
    bt = b.ravel()
    var = float(np.real(bt @ Stt @ bt.conj()))
    syx = bt @ Stx
    ridge = False
    try:
        cf = linalg.cho_factor(Sxx, lower=True)
    except linalg.LinAlgError:
        Sxx = Sxx + 1e-10 * np.real(np.trace(Sxx)) * np.eye(Sxx.shape[0])
        cf = linalg.cho_factor(Sxx, lower=True)
        ridge = True
    w = linalg.cho_solve(cf, syx.conj()).conj()
    m = var - float(np.real(w @ syx.conj()))
    return Projection(w, max(m, 0.0), window, ridge)


@dataclass
class OracleReport:
    analytic_mse: float
    oracle_mse: float
    oracle_mse_doubled: float
    window_length: int
    ridge_added: bool
    empirical_mse: Optional[float] = None
    standard_error: Optional[float] = None
    n_paths: int = 0
    flags: dict = field(default_factory=dict)
    projection: Optional[Projection] = field(default=None, repr=False)

    @property
    def agrees(self) -> bool:
        return all(self.flags.values())

    def to_json(self) -> dict:
        return {
            "analytic_mse": self.analytic_mse,
            "oracle_mse": self.oracle_mse,
            "oracle_mse_doubled_window": self.oracle_mse_doubled,
            "window_length": self.window_length,
            "ridge_added": self.ridge_added,
            "empirical_mse": self.empirical_mse,
            "standard_error": self.standard_error,
            "n_paths": self.n_paths,
            "agreement": self.flags,
        }


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def oracle_mmse(problem: ExtrapolationProblem, window: int, analytic: Optional[float] = None,
                rtol: float = 1e-3) -> OracleReport:
    """Gaussian-conditioning error at ``window`` and ``2 * window``, compared with the analytic error."""
    if analytic is None:
        analytic = solve_extrapolation(problem).mse
    L = _target_blocks(problem).shape[0]
    R = _lag_table(problem, 2 * window + L)
    p1 = conditioning(problem, window, R)
    p2 = conditioning(problem, 2 * window, R)
    scale = max(abs(p2.mse), 1e-300)
    flags = {
        "analytic_vs_oracle": _rel(analytic, p1.mse) < rtol if p1.mse > 0 else abs(analytic) < 1e-12,
        "window_converged": abs(p2.mse - p1.mse) / scale < 1e-4 if p2.mse > 0 else abs(p1.mse) < 1e-12,
    }
    return OracleReport(analytic, p1.mse, p2.mse, window, p1.ridge or p2.ridge, flags=flags, projection=p1)


def empirical_mse(problem: ExtrapolationProblem, cfg: SynthesisConfig, window: int,
                  report: Optional[OracleReport] = None, paths: Optional[np.ndarray] = None):
    """Apply the oracle projection to synthesized paths; mean squared residual and its standard error.

    ``cfg.start`` must be ``-window`` and ``cfg.n_blocks`` must cover the target blocks.
    """
    if report is None:
        report = oracle_mmse(problem, window)
    proj = report.projection
    if proj is None or proj.window != window:
        proj = conditioning(problem, window)
    b = _target_blocks(problem)
    L = b.shape[0]
    if cfg.start != -window or cfg.n_blocks < window + L:
        raise DomainError("synthesis must start at -window and cover the target blocks")
    if paths is None:
        paths = synthesize_increments(cfg)
    K = cfg.params.K
    x = paths[:, :window].reshape(paths.shape[0], window * K)
    y = paths[:, window : window + L].reshape(paths.shape[0], L * K) @ b.ravel()
    r = np.abs(y - x @ proj.weights) ** 2
    mean = float(r.mean())
    se = float(r.std(ddof=1) / np.sqrt(r.size)) if r.size > 1 else float("inf")
    report.empirical_mse = mean
    report.standard_error = se
    report.n_paths = r.size
    report.flags["empirical_vs_oracle"] = abs(mean - report.oracle_mse) <= 3 * se or (se == 0 and mean == report.oracle_mse)
    return report


def dump_paths_csv(paths: np.ndarray, path: str, start: int = 0, max_paths: int = 10):
    """Write up to ``max_paths`` synthesized sequences as path, j, then Re/Im columns per coordinate."""
    n, L, K = paths.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "j"] + [f"{part}_{k + 1}" for k in range(K) for part in ("re", "im")])
        for p in range(min(n, max_paths)):
            for j in range(L):
                row = [p, start + j]
                for k in range(K):
                    z = complex(paths[p, j, k])
                    row += [repr(z.real), repr(z.imag)]
                w.writerow(row)


# -- shipped scenarios ----------------------------------------------------------

SCENARIOS = ("white", "ma1-0.3", "ma1-0.5", "ma1-0.9", "ar")


def scenario_density(name: str, params: IncrementParams) -> SpectralDensityModel:
    """Increment-matched scenario densities for ``K`` = 1 (scalar) or 2 (coupled complex VMA/VAR)."""
    kernel = IncrementKernel.of(params)
    K = params.K
    if name == "white":
        return SpectralDensityModel.white_increment_matched(K, kernel)
    if name.startswith("ma1-"):
        theta = float(name[4:])
        if K == 1:
            return SpectralDensityModel.scalar_rational(ma=[1.0, theta], kernel=kernel)
        if K == 2:
            Th = theta * np.array([[1.0, 0.4j], [0.0, 0.6]])
            return SpectralDensityModel.vector_rational([np.eye(2), Th], kernel=kernel)
    if name == "ar":
        if K == 1:
            return SpectralDensityModel.scalar_rational(ar=[1.0, -0.5], kernel=kernel)
        if K == 2:
            Ph = 0.5 * np.array([[1.0, 0.3], [-0.2j, 0.7]])
            return SpectralDensityModel.vector_rational([np.eye(2)], ar=[np.eye(2), -Ph], kernel=kernel)
    raise DomainError(f"unknown scenario {name!r} for K={K}")


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("PC_EXTRAP_THREADS", "1")))
    except ValueError:
        return 1
