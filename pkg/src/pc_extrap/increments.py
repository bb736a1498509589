"""Increment operators, period blocking and coefficient transforms.

Continuous-time objects live on uniform grids.  The period ``T`` and the
physical increment step ``tau * T`` must be integer multiples of the grid
spacing; every integral is a composite trapezoid sum over grid samples.

Basis ordering
--------------
The orthonormal basis of ``L2[0, T)`` is indexed by ``k = 1, 2, 3, ...`` with
signed frequency ``(-1)**k * (k // 2)``, i.e. ``0, +1, -1, +2, -2, ...``.
Increment coordinates (the generated sequence) use this natural order.
Coefficient vectors of the functional (``a_j``, ``b_j``, ``c_j``) are stored
in *paired* order ``k = 1, 3, 2, 5, 4, ...``: position ``k`` holds the
coefficient at the opposite frequency, so that the plain bilinear product
``b_j @ xi_j`` equals ``int_0^T b_j(u) xi_j(u) du``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    DimensionError,
    DomainError,
    EmptyInputError,
    GridMismatchError,
    InsufficientHistoryError,
)

_GRID_TOL = 1e-9
TAIL_TOLERANCE = 1e-12


@dataclass(frozen=True)
class IncrementParams:
    """Increment order ``d``, period ``T``, step multiplier ``tau`` and truncation orders."""

    d: int
    T: float
    tau: int = 1
    K: int = 1
    J: int = 32

    def __post_init__(self):
        for name in ("d", "tau", "K", "J"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise DomainError(f"{name} must be a positive integer, got {value!r}")
        if not self.T > 0:
            raise DomainError(f"T must be positive, got {self.T!r}")

    @property
    def step(self) -> float:
        """Physical increment step ``tau * T``."""
        return self.tau * self.T

    def replace(self, **changes) -> "IncrementParams":
        values = dict(d=self.d, T=self.T, tau=self.tau, K=self.K, J=self.J)
        values.update(changes)
        return IncrementParams(**values)


def _as_steps(x: float, delta_t: float, what: str) -> int:
    """Number of grid steps in ``x``; raises unless ``x`` is a grid multiple."""
    q = x / delta_t
    n = int(round(q))
    if abs(q - n) > _GRID_TOL * max(1.0, abs(q)):
        raise GridMismatchError(f"{what}={x!r} is not a multiple of delta_t={delta_t!r}")
    return n


@dataclass(frozen=True)
class SampledFunction:
    """Samples ``values[i] = x(t_min + i * delta_t)``."""

    t_min: float
    delta_t: float
    values: np.ndarray

    def __post_init__(self):
        if not self.delta_t > 0:
            raise DomainError("delta_t must be positive")
        object.__setattr__(self, "values", np.asarray(self.values))
        if self.values.ndim != 1:
            raise DimensionError("samples must be one-dimensional")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def t_max(self) -> float:
        return self.t_min + (self.n - 1) * self.delta_t

    @property
    def grid(self) -> np.ndarray:
        return self.t_min + self.delta_t * np.arange(self.n)

    def steps(self, x: float, what: str = "value") -> int:
        return _as_steps(x, self.delta_t, what)

    def index(self, t: float) -> int:
        i = self.steps(t - self.t_min, "t")
        if i < 0 or i >= self.n:
            raise DomainError(f"t={t!r} outside [{self.t_min}, {self.t_max}]")
        return i

    def __call__(self, t: float):
        return self.values[self.index(t)]

    @classmethod
    def from_callable(cls, fn, t_min: float, t_max: float, delta_t: float):
        n = _as_steps(t_max - t_min, delta_t, "t_max - t_min") + 1
        grid = t_min + delta_t * np.arange(n)
        return cls(t_min, delta_t, np.asarray(fn(grid)))


class ProcessPath(SampledFunction):
    """A sampled realisation of the observed process on ``[t_min, t_max]``."""


class CoefficientFunction(SampledFunction):
    """Samples of the functional's weight ``a(t)`` on ``[0, t_max]``; zero elsewhere.

    The representation identity is exact on the grid when ``a`` vanishes at
    the right end of its support; otherwise a boundary term of order
    ``delta_t`` remains.
    """

    def __post_init__(self):
        super().__post_init__()
        if self.t_min != 0:
            raise DomainError("coefficient functions start at t = 0")

    def __call__(self, t: float):
        i = self.steps(t, "t")
        if i < 0 or i >= self.n:
            return self.values.dtype.type(0)
        return self.values[i]

    @property
    def support_end(self) -> float:
        nz = np.flatnonzero(self.values)
        return 0.0 if nz.size == 0 else float(nz[-1] * self.delta_t)

    @classmethod
    def from_callable(cls, fn, t_max: float, delta_t: float):
        return super().from_callable(fn, 0.0, t_max, delta_t)


@dataclass(frozen=True)
class BlockFunction:
    """Path restricted to ``[jT, (j+1)T)`` and re-indexed to ``[0, T)``.

    ``right`` is the sample at ``(j+1)T`` when the source path reaches it; the
    trapezoid rule needs it.  Without it the block is treated as periodic.
    """

    index: int
    values: np.ndarray
    delta_t: float
    right: Optional[complex] = None

    @property
    def T(self) -> float:
        return self.values.shape[0] * self.delta_t


# -- basis helpers ----------------------------------------------------------


def basis_frequency(k: int) -> int:
    """Signed frequency of basis index ``k >= 1``: 0, 1, -1, 2, -2, ..."""
    if k < 1:
        raise DomainError("basis indices start at 1")
    return (-1) ** k * (k // 2)


def frequency_to_index(freq: int) -> int:
    """Inverse of :func:`basis_frequency`."""
    if freq == 0:
        return 1
    return 2 * freq if freq > 0 else -2 * freq + 1


def partner_index(k: int) -> int:
    """Basis index with the opposite frequency (1 <-> 1, 2 <-> 3, 4 <-> 5, ...)."""
    return frequency_to_index(-basis_frequency(k))


def basis_frequencies(K: int) -> np.ndarray:
    return np.array([basis_frequency(k) for k in range(1, K + 1)])


def basis_function(k: int, T: float):
    freq = basis_frequency(k)
    return lambda v: np.exp(2j * np.pi * freq * np.asarray(v) / T) / math.sqrt(T)


# -- path operations ---------------------------------------------------------


def increment_path(path: ProcessPath, d: int, step: float) -> ProcessPath:
    """d-th backward difference ``sum_l (-1)^l C(d,l) x(t - l*step)``.

    The output grid drops the first ``d * step`` of the input.
    """
    if d < 0:
        raise DomainError("d must be non-negative")
    s = path.steps(step, "step")
    if s <= 0:
        raise DomainError("step must be positive")
    n_out = path.n - d * s
    if n_out <= 0:
        raise InsufficientHistoryError(
            f"path of length {path.n} too short for d={d} with step of {s} samples"
        )
    x = path.values
    out = np.zeros(n_out, dtype=np.result_type(x.dtype, np.int64))
    for l in range(d + 1):
        start = (d - l) * s
        out = out + (-1) ** l * math.comb(d, l) * x[start : start + n_out]
    return ProcessPath(path.t_min + d * s * path.delta_t, path.delta_t, out)


def block_decompose(path: SampledFunction, T: float) -> list[BlockFunction]:
    """Split a path into period blocks; the span must be a whole number of periods."""
    m = path.steps(T, "T")
    if m <= 0:
        raise DomainError("T must be positive")
    first = path.t_min / T
    if abs(first - round(first)) > _GRID_TOL:
        raise GridMismatchError(f"path start {path.t_min} is not aligned to the period {T}")
    span = path.n - 1
    if span % m:
        raise GridMismatchError(
            f"path span {span * path.delta_t} is not a whole number of periods {T}"
        )
    j0 = int(round(first))
    blocks = []
    for b in range(span // m):
        lo = b * m
        blocks.append(
            BlockFunction(j0 + b, path.values[lo : lo + m], path.delta_t, path.values[lo + m])
        )
    return blocks


def _fourier(block: BlockFunction, freqs: np.ndarray) -> np.ndarray:
    x = np.asarray(block.values)
    m = x.shape[0]
    if m == 0:
        raise EmptyInputError("empty block")
    T = block.T
    v = np.arange(m + 1) * block.delta_t
    right = x[0] if block.right is None else block.right
    samples = np.append(x, right)
    w = np.full(m + 1, block.delta_t)
    w[0] = w[-1] = 0.5 * block.delta_t
    phase = np.exp(-2j * np.pi * np.outer(freqs, v) / T)
    return phase @ (w * samples) / math.sqrt(T)


def fourier_block(block: BlockFunction, K: int) -> np.ndarray:
    """Basis coefficients ``<block, e_k>``, k = 1..K, in natural order."""
    if K < 1:
        raise DomainError("K must be >= 1")
    return _fourier(block, basis_frequencies(K))


def paired_fourier_block(block: BlockFunction, K: int) -> np.ndarray:
    """Coefficients in paired order 1, 3, 2, 5, 4, ... (opposite frequencies)."""
    if K < 1:
        raise DomainError("K must be >= 1")
    return _fourier(block, -basis_frequencies(K))


def coefficient_blocks(a: SampledFunction, T: float, K: int, n_blocks: Optional[int] = None):
    """Paired-order block vectors ``a_j`` of a weight function, shape ``(n_blocks, K)``.

    Missing samples beyond the function's support count as zeros.
    """
    m = a.steps(T, "T")
    span = a.n - 1
    if n_blocks is None:
        n_blocks = max(1, -(-span // m))
    total = n_blocks * m + 1
    vals = np.zeros(total, dtype=np.result_type(a.values.dtype, float))
    k = min(total, a.n)
    vals[:k] = a.values[:k]
    padded = SampledFunction(0.0, a.delta_t, vals)
    return np.array([paired_fourier_block(b, K) for b in block_decompose(padded, T)])


# -- coefficient transforms --------------------------------------------------


def dcoef(d: int, k: int) -> int:
    """Coefficient of ``x**k`` in ``(1 + x + x^2 + ...)**d``."""
    if d < 1 or k < 0:
        raise DomainError("need d >= 1 and k >= 0")
    return math.comb(k + d - 1, d - 1)


def dtau_coef(d: int, tau: int, k: int) -> int:
    """Coefficient of ``x**k`` in ``(1 + x^tau + x^(2 tau) + ...)**d``."""
    if tau < 1:
        raise DomainError("tau must be >= 1")
    return dcoef(d, k // tau) if k % tau == 0 else 0


def dtau_sequence(d: int, tau: int, n: int) -> np.ndarray:
    return np.array([dtau_coef(d, tau, k) for k in range(n)], dtype=np.int64)


def apply_D_tau(a: np.ndarray, params: IncrementParams, N: Optional[int] = None) -> np.ndarray:
    """``b_j = sum_{m >= j} d_tau(m - j) a_m`` applied entrywise to block vectors.

    With ``N`` given, blocks beyond ``N`` are treated as zero (finite horizon)
    and the output has ``N + 1`` blocks.  Integer input stays integer.
    """
    a = np.asarray(a)
    if a.ndim == 1:
        a = a[:, None]
    if N is not None:
        out = np.zeros((N + 1,) + a.shape[1:], dtype=a.dtype)
        k = min(N + 1, a.shape[0])
        out[:k] = a[:k]
        a = out
    n = a.shape[0]
    dt = dtau_sequence(params.d, params.tau, n)
    b = np.zeros_like(a)
    for j in range(n):
        b[j] = np.tensordot(dt[: n - j], a[j:], axes=(0, 0))
    return b


def tail_truncation(blocks: np.ndarray, rel: float = TAIL_TOLERANCE) -> int:
    """Number of leading blocks kept: stop once the remaining norm mass < rel * total."""
    norms = np.linalg.norm(np.atleast_2d(np.asarray(blocks)), axis=-1)
    total = norms.sum()
    if total == 0:
        return 1
    tail = np.cumsum(norms[::-1])[::-1]  # tail[j] = sum_{i >= j} norms[i]
    below = np.flatnonzero(tail < rel * total)
    return int(below[0]) if below.size else norms.shape[0]


def summability(blocks: np.ndarray) -> dict:
    """Numerical check of ``sum ||a_j||`` and ``sum (j+1) ||a_j||`` on the truncated support."""
    norms = np.linalg.norm(np.atleast_2d(np.asarray(blocks)), axis=-1)
    n_keep = tail_truncation(norms[:, None])
    total = float(norms.sum())
    tail = float(norms[n_keep:].sum())
    return {
        "sum_norm": total,
        "sum_weighted_norm": float(((np.arange(norms.size) + 1) * norms).sum()),
        "support_blocks": n_keep,
        "tail_mass": tail,
        "decayed": bool(n_keep < norms.size or norms[-1] <= TAIL_TOLERANCE * max(total, 1e-300)),
    }


def _horizon_steps(a: SampledFunction, params: IncrementParams, N: Optional[int]) -> int:
    if N is None:
        return a.n - 1
    return a.steps((N + 1) * params.T, "(N+1)T")


def b_coeff_finite(a: CoefficientFunction, params: IncrementParams, N: int, t: float):
    """``sum_{k=0}^{floor(((N+1)T - t)/(tau T))} a(t + tau T k) d(k)``."""
    L = a.steps((N + 1) * params.T, "(N+1)T")
    i = a.steps(t, "t")
    if i < 0 or i > L:
        raise DomainError(f"t={t!r} outside [0, (N+1)T]")
    s = a.steps(params.step, "tau*T")
    return sum(a((i + s * k) * a.delta_t) * dcoef(params.d, k) for k in range((L - i) // s + 1))


def b_function(a: CoefficientFunction, params: IncrementParams, N: Optional[int] = None):
    """Sampled ``b^tau`` (``N`` None) or ``b^{tau,N}`` on ``[0, L]``.

    The infinite-horizon sum is cut at the end of ``a``'s samples.
    """
    L = _horizon_steps(a, params, N)
    s = a.steps(params.step, "tau*T")
    x = np.zeros(L + 1, dtype=np.result_type(a.values.dtype, np.int64))
    k_avail = min(a.n, L + 1)
    x[:k_avail] = a.values[:k_avail]
    out = np.zeros_like(x)
    for k in range(L // s + 1):
        out[: L + 1 - k * s] += dcoef(params.d, k) * x[k * s :]
    return CoefficientFunction(0.0, a.delta_t, out)


def _v_sum(b: SampledFunction, params: IncrementParams, i: int, l_lo: int, L: int, s: int):
    d = params.d
    l_hi = min((L - i) // s, d)
    total = 0
    for l in range(l_lo, l_hi + 1):
        total = total + (-1) ** l * math.comb(d, l) * b.values[i + l * s]
    return total


def v_coeff(b: SampledFunction, params: IncrementParams, t: float, N: Optional[int] = None):
    """Boundary weight ``v(t) = sum_{l=ceil(-t/(tau T))}^{d'} (-1)^l C(d,l) b(t + l tau T)``.

    ``d' = d`` for the infinite horizon and ``min(floor(((N+1)T - t)/(tau T)), d)``
    for the finite one.  ``b`` must be sampled on ``[0, L]``.
    """
    s = b.steps(params.step, "tau*T")
    i = b.steps(t, "t")
    if not (-params.d * s <= i < 0):
        raise DomainError(f"t={t!r} outside [-tau*T*d, 0)")
    L = b.n - 1 if N is None else b.steps((N + 1) * params.T, "(N+1)T")
    l_lo = -(i // s)  # least integer >= -t/(tau T)
    return _v_sum(b, params, i, l_lo, L, s)


def v_function(b: SampledFunction, params: IncrementParams, N: Optional[int] = None) -> SampledFunction:
    """``v`` sampled on the half-open grid ``[-tau T d, 0)``."""
    s = b.steps(params.step, "tau*T")
    n = params.d * s
    vals = [v_coeff(b, params, (i - n) * b.delta_t, N) for i in range(n)]
    return SampledFunction(-n * b.delta_t, b.delta_t, np.array(vals))


def trapezoid(values, delta_t: float):
    values = np.asarray(values)
    if values.shape[0] < 2:
        return values.dtype.type(0) * delta_t
    return delta_t * (values.sum(axis=0) - 0.5 * (values[0] + values[-1]))


def _one_sided(b: SampledFunction, params: IncrementParams, L: int, pad: int = 0):
    """Left and right limits of ``b`` on ``[0, L]``, zero-padded by ``pad`` samples.

    ``b`` jumps by ``d(k) a(L)`` at ``t = L - k tau T`` where the term
    ``a(t + k tau T)`` leaves the horizon; point values are left limits.
    """
    s = b.steps(params.step, "tau*T")
    vals = b.values[: L + 1]
    left = np.zeros(L + 1 + pad, dtype=np.result_type(vals.dtype, float))
    left[: L + 1] = vals
    right = left.copy()
    idx = np.arange(L, -1, -s)
    right[idx] -= np.array([dcoef(params.d, k) for k in range(idx.size)]) * vals[L]
    return left, right


def _sided_trapezoid(f_left, f_right, x, delta_t: float):
    """Trapezoid sum that uses the limit from inside each cell at jump points."""
    n = x.shape[0]
    if n < 2:
        return 0 * delta_t
    return delta_t * 0.5 * (np.sum(f_left[1:n] * x[1:]) + np.sum(f_right[: n - 1] * x[:-1]))


def boundary_integral(b: SampledFunction, path: ProcessPath, params: IncrementParams,
                      N: Optional[int] = None):
    """``int_{-tau T d}^0 v(t) xi(t) dt`` with one-sided values of ``v`` at its jumps.

    ``v`` jumps where the lower summation limit changes (multiples of ``tau T``)
    and where a shifted ``b`` jumps.  Each cell of the trapezoid sum uses the
    limits from inside the cell, which makes the representation identity
    exact on the grid.
    """
    s = b.steps(params.step, "tau*T")
    d = params.d
    L = b.n - 1 if N is None else b.steps((N + 1) * params.T, "(N+1)T")
    i0 = path.steps(-d * s * b.delta_t - path.t_min, "path start")
    if i0 < 0:
        raise InsufficientHistoryError("path does not cover [-tau*T*d, 0]")
    left, right = _one_sided(b, params, L, pad=d * s + 1)
    pts = np.arange(-d * s, 1)
    v_left = np.zeros(pts.size, dtype=left.dtype)
    v_right = np.zeros(pts.size, dtype=left.dtype)
    for n, i in enumerate(pts):
        for l in range((-i) // s + 1, d + 1):  # t just below i
            v_left[n] += (-1) ** l * math.comb(d, l) * left[i + l * s]
        for l in range(-(i // s), d + 1):  # t just above i
            v_right[n] += (-1) ** l * math.comb(d, l) * right[i + l * s]
    xi = path.values[pts + i0 - pts[0]]
    return _sided_trapezoid(v_left, v_right, xi, b.delta_t)


def representation_terms(a: CoefficientFunction, path: ProcessPath, params: IncrementParams,
                         N: Optional[int] = None):
    """Return ``(A, B, V)`` for ``A = int a xi``, ``B = int b xi^(d)``, ``V = int v xi``.

    ``A = B - V`` holds up to rounding on any grid when ``a`` vanishes at the
    end of the horizon.
    """
    b = b_function(a, params, N)
    L = b.n - 1
    off = path.steps(-path.t_min, "t_min")  # index of t = 0 in the path
    if off < params.d * path.steps(params.step, "tau*T"):
        raise InsufficientHistoryError("path does not cover [-tau*T*d, 0]")
    if path.n - off < L + 1:
        raise InsufficientHistoryError("path does not cover the horizon")
    xi = path.values[off : off + L + 1]
    av = np.zeros(L + 1, dtype=np.result_type(a.values.dtype, float))
    k = min(a.n, L + 1)
    av[:k] = a.values[:k]
    A = trapezoid(av * xi, a.delta_t)
    inc = increment_path(path, params.d, params.step)
    off_inc = inc.steps(-inc.t_min, "t_min")
    left, right = _one_sided(b, params, L)
    B = _sided_trapezoid(left, right, inc.values[off_inc : off_inc + L + 1], a.delta_t)
    V = boundary_integral(b, path, params, N)
    return A, B, V
