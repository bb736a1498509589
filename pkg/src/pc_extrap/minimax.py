"""Least favourable spectral densities and saddle-point certification.

All fixed-point maps act on ``g = kernel * f`` sampled at the quadrature
nodes.  For diagonal densities ``W = f^{-1} / kernel = diag(1 / g)``, so the
block-Toeplitz operator only needs ``1 / g``; the optimal ``C`` then feeds a
pointwise update of ``g`` chosen so that the class constraint holds exactly.

Families
--------
``D0_1``  ``mean(g) = P`` (matrix; diagonal entries for diagonal models)
``D0_2``  ``mean(Tr g) = p``
``D0_3``  ``mean(g_kk) = p_k``
``D0_4``  ``mean(<B, g>) = p``
``D1d_1`` ``mean|g_ij - g1_ij| = delta_ij`` (diagonal entries)
``D1d_2`` ``mean|Tr(g - g1)| = delta``
``D1d_3`` ``mean|g_kk - g1_kk| = delta_k``
``D1d_4`` ``mean|<B, g - g1>| = delta``

Here ``mean`` is ``1/(2 pi) int dlam`` and ``g1 = kernel * f1``.  Measuring
the neighbourhood radius on the kernel-weighted density makes the Lagrange
equations ``|C|^2 = beta^2 gamma g^2`` the exact optimality conditions; an
unweighted radius would instead call for ``g ~ |C| sqrt(kernel)``.

For ``D0_2`` with ``K = 1`` and ``b`` supported on block 0, the constant
``g = p`` is a fixed point: it gives ``W = 1/p``, ``c = p b``, a constant
``C`` and therefore a constant update.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import DimensionError, DomainError, NearSingularDensityError, PreconditionError
from .extrapolate import ExtrapolationProblem, SpectralCharacteristic, fit_blocks, mse, solve_c, transform
from .spectral import (
    CONDITION_CEILING,
    IncrementKernel,
    QuadratureGrid,
    SpectralDensityModel,
    hermitian_inverse,
    toeplitz_from_weight,
)

FAMILIES = ("D0_1", "D0_2", "D0_3", "D0_4", "D1d_1", "D1d_2", "D1d_3", "D1d_4")
DAMPING = 0.5
FIXED_POINT_TOL = 1e-8
MAX_ITER = 500
CERTIFY_TOL = 1e-6


@dataclass(frozen=True)
class DensityClassSpec:
    """Admissible class: family tag plus the moment or neighbourhood data it needs."""

    family: str
    P: Optional[np.ndarray] = None
    p: Optional[float] = None
    p_k: Optional[Sequence[float]] = None
    B: Optional[np.ndarray] = None
    f1: Optional[SpectralDensityModel] = None
    delta: Optional[float] = None
    delta_k: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        need = {
            "D0_1": ("P",), "D0_2": ("p",), "D0_3": ("p_k",), "D0_4": ("p", "B"),
            "D1d_1": ("delta_k",), "D1d_2": ("delta",), "D1d_3": ("delta_k",), "D1d_4": ("delta", "B"),
        }[self.family]
        for name in need:
            if getattr(self, name) is None:
                raise DomainError(f"{self.family} needs {name}")
        if self.p is not None and not self.p > 0:
            raise DomainError("p must be positive")
        if self.p_k is not None and not np.all(np.asarray(self.p_k, dtype=float) > 0):
            raise DomainError("p_k must be positive")
        for name in ("P", "B"):
            M = getattr(self, name)
            if M is not None:
                M = np.atleast_2d(np.asarray(M, dtype=complex))
                if np.abs(M - M.conj().T).max() > 1e-12 * np.abs(M).max() or np.linalg.eigvalsh(M)[0] <= 0:
                    raise DomainError(f"{name} must be Hermitian positive definite")
        if self.delta is not None and self.delta < 0:
            raise DomainError("delta must be nonnegative")
        if self.delta_k is not None and np.any(np.asarray(self.delta_k, dtype=float) < 0):
            raise DomainError("delta_k must be nonnegative")

    @property
    def is_neighbourhood(self) -> bool:
        return self.family.startswith("D1d")

    @property
    def shared_budget(self) -> bool:
        """One scalar constraint across coordinates (trace or ``<B, .>`` classes)."""
        return self.family in ("D0_2", "D0_4", "D1d_2", "D1d_4")

    def weights(self, K: int) -> np.ndarray:
        """Diagonal weights of the shared constraint (ones for the trace classes)."""
        if self.family in ("D0_4", "D1d_4"):
            B = np.atleast_2d(np.asarray(self.B, dtype=complex))
            if B.shape != (K, K):
                raise DimensionError(f"B must be {K}x{K}")
            return np.real(np.diag(B)).copy()
        return np.ones(K)

    def targets(self, K: int) -> np.ndarray:
        """Per-coordinate budgets (moment targets or radii)."""
        if self.family == "D0_1":
            P = np.atleast_2d(np.asarray(self.P, dtype=complex))
            if P.shape != (K, K):
                raise DimensionError(f"P must be {K}x{K}")
            if np.abs(P - np.diag(np.diag(P))).max() > 0:
                raise PreconditionError("diagonal densities cannot meet an off-diagonal moment constraint")
            return np.real(np.diag(P)).copy()
        if self.family == "D0_3":
            out = np.asarray(self.p_k, dtype=float)
        elif self.family in ("D1d_1", "D1d_3"):
            out = np.asarray(self.delta_k, dtype=float)
            if out.ndim == 2:
                out = np.diag(out).copy()
        elif self.family in ("D0_2", "D0_4"):
            return np.array([float(self.p)])
        else:
            return np.array([float(self.delta)])
        if out.shape != (K,):
            raise DimensionError(f"{self.family} needs exactly K={K} budgets")
        return out

    def to_json(self) -> dict:
        out = {"family": self.family}
        for name in ("p", "delta"):
            if getattr(self, name) is not None:
                out[name] = float(getattr(self, name))
        for name in ("p_k", "delta_k"):
            if getattr(self, name) is not None:
                out[name] = np.asarray(getattr(self, name), dtype=float).tolist()
        for name in ("P", "B"):
            if getattr(self, name) is not None:
                M = np.atleast_2d(np.asarray(getattr(self, name), dtype=complex))
                out[name] = {"re": M.real.tolist(), "im": M.imag.tolist()}
        return out


@dataclass
class LeastFavorableResult:
    family: str
    f0: SpectralDensityModel
    g0: np.ndarray  # (M, K) diagonal of kernel * f0 at the nodes
    multipliers: dict
    C0: np.ndarray  # (M, K)
    c0: np.ndarray  # (J, K)
    b: np.ndarray  # (J, K)
    value: float
    equation_residual: float
    constraint_residual: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    alternatives: list = field(default_factory=list)
    experimental: bool = False

    def to_json(self, grid: QuadratureGrid) -> dict:
        f = self.f0(grid.nodes)
        return {
            "family": self.family,
            "value": self.value,
            "multipliers": self.multipliers,
            "equation_residual": self.equation_residual,
            "constraint_residual": self.constraint_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "experimental": self.experimental,
            "n_alternatives": len(self.alternatives),
            "f0_table": {
                "lambda": grid.nodes.tolist(),
                "diag": np.real(np.diagonal(f, axis1=1, axis2=2)).tolist(),
            },
        }


# -- node-level helpers -------------------------------------------------------


def _diag_stack(g: np.ndarray) -> np.ndarray:
    M, K = g.shape
    out = np.zeros((M, K, K), dtype=complex)
    idx = np.arange(K)
    out[:, idx, idx] = g
    return out


def _check_positive(g: np.ndarray, nodes: np.ndarray):
    lo = g.min(axis=1)
    bad = ~(lo > 0) | (lo * CONDITION_CEILING < g.max(axis=1))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NearSingularDensityError(f"density is singular at node {i} (lambda={nodes[i]:.6g})",
                                       node=i, lam=float(nodes[i]))


def optimal_C(g: np.ndarray, b: np.ndarray, nodes: np.ndarray):
    """Optimal ``c`` and ``C(lam)`` at the nodes for the diagonal density ``g / kernel``."""
    _check_positive(g, nodes)
    F = toeplitz_from_weight(_diag_stack(1.0 / g), b.shape[0])
    c = solve_c(F, b)
    return c, transform(c, nodes)


def _robust_weights(F0: np.ndarray, problem: ExtrapolationProblem):
    """``v = f0^{-1} C0`` and the kernel at the nodes."""
    lam = problem.grid.nodes
    kern = IncrementKernel.of(problem.params)(lam)
    J = max(problem.params.J, (problem.N or 0) + 1)
    b = fit_blocks(problem.b_blocks(), J)
    inv0 = hermitian_inverse(F0, lam)
    c = solve_c(toeplitz_from_weight(inv0 / kern[:, None, None], J), b)
    return np.einsum("nkl,nl->nk", inv0, transform(c, lam)), kern


def _quadratic(v, kern, F, M):
    return float(np.real(np.einsum("nk,nkl,nl->n", v.conj(), F, v) / kern).sum() / M)


def robust_value(f0, f, problem: ExtrapolationProblem) -> float:
    """``1/(2 pi) int v^* f v / kernel dlam`` with ``v = f0^{-1} C0`` and ``C0`` optimal under ``f0``.

    Both arguments may be density models or node arrays ``(M, K, K)``.  With
    ``f = f0`` this is the optimal error under ``f0``.
    """
    lam = problem.grid.nodes
    F0 = f0(lam) if callable(f0) else np.asarray(f0)
    Ff = f(lam) if callable(f) else np.asarray(f)
    v, kern = _robust_weights(F0, problem)
    return _quadratic(v, kern, Ff, problem.grid.M)


def _initial_g(spec: DensityClassSpec, K: int, nodes: np.ndarray, g1, rng=None) -> np.ndarray:
    if rng is None:
        shape = np.broadcast_to((1 + 0.5 * np.cos(nodes))[:, None], (nodes.size, K)).copy()
    else:
        # random smooth positive profile
        m = np.arange(1, 5)
        coef = rng.standard_normal((K, m.size)) / m
        phase = rng.uniform(0, 2 * np.pi, (K, m.size))
        shape = np.exp(0.5 * np.einsum("km,nkm->nk", coef, np.cos(nodes[:, None, None] * m + phase)))
    if spec.is_neighbourhood:
        return g1.copy() if rng is None else g1 * shape / shape.mean(axis=0)
    return _normalize_D0(spec, shape)


def _normalize_D0(spec: DensityClassSpec, shape: np.ndarray) -> np.ndarray:
    K = shape.shape[1]
    mean = shape.mean(axis=0)
    if spec.shared_budget:
        w = spec.weights(K)
        return shape * spec.p / float((w * mean).sum())
    return shape * spec.targets(K) / mean


# -- pointwise maps -----------------------------------------------------------


def _map_D0(spec, absC, K):
    """Update ``g ~ |C|`` scaled to the class budget; returns ``(g, multipliers)``."""
    m = absC.mean(axis=0)
    if spec.shared_budget:
        w = spec.weights(K)
        denom = float((np.sqrt(w) * m).sum())
        if np.any(m <= 0):
            raise PreconditionError("a coordinate of C vanishes identically; the shared-budget "
                                    "fixed point would be singular")
        inv_alpha = spec.p / denom
        g = absC * inv_alpha / np.sqrt(w)
        return g, {"alpha_squared": float(1 / inv_alpha**2)}
    t = spec.targets(K)
    g = np.empty_like(absC)
    alpha2 = np.zeros(K)
    for k in range(K):
        if m[k] > 0:
            g[:, k] = absC[:, k] * t[k] / m[k]
            alpha2[k] = (m[k] / t[k]) ** 2
        else:
            g[:, k] = t[k]
    return g, {"alpha_k_squared": alpha2.tolist()}


def _solve_u(fn, target):
    """Smallest root of the nondecreasing ``fn(u) = target`` with ``fn(0) = 0``."""
    if target <= 0:
        return 0.0
    hi = 1.0
    for _ in range(200):
        if fn(hi) >= target:
            break
        hi *= 2
    else:
        raise PreconditionError("neighbourhood constraint cannot be met")
    return brentq(lambda u: fn(u) - target, 0.0, hi, xtol=1e-300, rtol=1e-15, maxiter=500)


def _map_D1(spec, absC, g1, K):
    """``g = max(u |C|, g1)`` per coordinate, or the shared-ratio form for trace classes."""
    t = spec.targets(K)
    if not spec.shared_budget or K == 1:
        w = spec.weights(K) if spec.shared_budget else np.ones(K)
        if spec.shared_budget:
            absC = absC / np.sqrt(w)
        g = g1.copy()
        beta = np.zeros(K)
        us = np.zeros(K)
        for k in range(K):
            budget = t[0] / w[0] if spec.shared_budget else t[k]
            if budget == 0 or not absC[:, k].max() > 0:
                continue

            def excess(u, k=k):
                return float(np.maximum(u * absC[:, k] - g1[:, k], 0).mean())

            u = _solve_u(excess, budget)
            us[k] = u
            g[:, k] = np.maximum(u * absC[:, k], g1[:, k])
            beta[k] = 1 / u if u > 0 else np.inf
        return g, us, beta
    w = spec.weights(K)
    sw = (np.sqrt(w) * absC).sum(axis=1)
    ratio = np.where(sw > 0, (w * g1).sum(axis=1) / np.where(sw > 0, sw, 1), np.inf)
    shape = absC / np.sqrt(w)

    def excess(u):
        return float(np.where(sw > 0, np.maximum(u - ratio, 0) * sw, 0).mean())

    u = _solve_u(excess, t[0])
    s = np.maximum(u, ratio)
    g = np.where(np.isfinite(s)[:, None], shape * np.where(np.isfinite(s), s, 0)[:, None], g1)
    return g, np.array([u]), np.array([1 / u if u > 0 else np.inf])


# -- residuals ----------------------------------------------------------------


def _constraint_residual(spec, g, g1, K):
    t = spec.targets(K)
    w = spec.weights(K)
    if not spec.is_neighbourhood:
        m = g.mean(axis=0)
        got = np.array([(w * m).sum()]) if spec.shared_budget else m
    else:
        if spec.shared_budget:
            got = np.array([np.abs((w * (g - g1)).sum(axis=1)).mean()])
        else:
            got = np.abs(g - g1).mean(axis=0)
    return float(np.max(np.abs(got - t) / np.maximum(t, 1.0 if np.all(t == 0) else 1e-300)))


def _equation_residual(spec, g, g1, absC, K, mult):
    """Sup-node mismatch of the diagonal Lagrange equations, relative to ``sup |C|^2``."""
    scale = max(float((absC**2).max()), 1e-300)
    w = spec.weights(K)
    if not spec.is_neighbourhood:
        if spec.shared_budget:
            a2 = np.full(K, mult["alpha_squared"]) * w
        else:
            a2 = np.asarray(mult["alpha_k_squared"])
        live = absC.max(axis=0) > 0
        r = np.abs(absC**2 - a2 * g**2)[:, live]
        return float(r.max() / scale) if r.size else 0.0
    beta = np.asarray(mult["beta"], dtype=float)
    b2 = np.where(np.isfinite(beta), beta**2, np.inf)
    if spec.shared_budget and K > 1:
        b2 = np.full(K, b2[0]) * w
    elif spec.shared_budget:
        b2 = b2 * w
    if not np.all(np.isfinite(b2)):
        return 0.0
    rhs = b2 * g**2
    active = g > g1 * (1 + 1e-12)
    r = np.where(active, np.abs(absC**2 - rhs), np.maximum(absC**2 - rhs, 0))
    return float(r.max() / scale)


# -- solvers ------------------------------------------------------------------


def _setup(spec: DensityClassSpec, problem: ExtrapolationProblem):
    K = problem.params.K
    grid = problem.grid
    nodes = grid.nodes
    kern = IncrementKernel.of(problem.params)(nodes)
    J = max(problem.params.J, (problem.N or 0) + 1)
    b = fit_blocks(problem.b_blocks(), J)
    g1 = None
    if spec.is_neighbourhood:
        f1 = spec.f1 if spec.f1 is not None else problem.density
        F1 = f1(nodes)
        off = F1 - _diag_stack(np.diagonal(F1, axis1=1, axis2=2))
        if np.abs(off).max() > 0:
            raise PreconditionError("neighbourhood classes are implemented for diagonal f1 only")
        g1 = np.real(np.diagonal(F1, axis1=1, axis2=2)) * kern[:, None]
        _check_positive(g1, nodes)
    spec.targets(K)
    spec.weights(K)
    return K, grid, nodes, kern, b, g1


def _tabulate(nodes, g, kern):
    return SpectralDensityModel.tabulated(nodes, _diag_stack(g / kern[:, None]))


def _update(spec, g, b, nodes, g1, K):
    _, C = optimal_C(g, b, nodes)
    absC = np.abs(C)
    if spec.is_neighbourhood:
        g_new, u, beta = _map_D1(spec, absC, g1, K)
        return g_new, {"beta": beta.tolist(), "u": u.tolist()}
    return _map_D0(spec, absC, K)


def _finish(spec, problem, g, g1, kern, nodes, b, K, it, converged, history, mult):
    c, C = optimal_C(g, b, nodes)
    absC = np.abs(C)
    if spec.is_neighbourhood and "beta" in mult:
        # at zero radius the multiplier is only pinned by the equation
        beta = np.asarray(mult["beta"], dtype=float)
        if not np.all(np.isfinite(beta)):
            ratio = absC / g1
            if spec.shared_budget and K > 1:
                ratio = absC / np.sqrt(spec.weights(K)) / g1
            mult = dict(mult, beta=np.where(np.isfinite(beta), beta, ratio.max(axis=0)[: beta.size]).tolist())
    return LeastFavorableResult(
        family=spec.family,
        f0=_tabulate(nodes, g, kern),
        g0=g,
        multipliers=mult,
        C0=C,
        c0=c,
        b=b,
        value=mse(b, c),
        equation_residual=_equation_residual(spec, g, g1, absC, K, mult),
        constraint_residual=_constraint_residual(spec, g, g1, K),
        iterations=it,
        converged=converged,
        history=history,
    )


def _iterate(spec, problem, g, setup, damping=DAMPING, tol=FIXED_POINT_TOL, max_iter=MAX_ITER):
    K, grid, nodes, kern, b, g1 = setup
    history = []
    converged = False
    mult = {}
    new = g
    it = 0
    for it in range(1, max_iter + 1):
        new, mult = _update(spec, g, b, nodes, g1, K)
        change = float(np.max(np.abs(new - g) / np.maximum(np.abs(g), 1e-300)))
        history.append(change)
        if change < tol:
            converged = True
            break
        g = damping * g + (1 - damping) * new
    return _finish(spec, problem, new, g1, kern, nodes, b, K, it, converged, history, mult)


def _zero_functional(spec, problem, setup):
    K, grid, nodes, kern, b, g1 = setup
    g = _initial_g(spec, K, nodes, g1)
    if spec.is_neighbourhood:
        mult = {"beta": [0.0] * (1 if spec.shared_budget else K), "u": []}
    elif spec.shared_budget:
        mult = {"alpha_squared": 0.0}
    else:
        mult = {"alpha_k_squared": [0.0] * K}
    res = _finish(spec, problem, g, g1, kern, nodes, b, K, 0, True, [], mult)
    res.equation_residual = 0.0
    return res


def _distinct(results, tol=1e-6):
    out = []
    for r in results:
        if not r.converged:
            continue
        if all(np.max(np.abs(r.g0 - o.g0)) > tol * np.max(np.abs(o.g0)) for o in out):
            out.append(r)
    return out


def _solve(spec, problem, n_starts, seed, want):
    if spec.is_neighbourhood != want:
        raise DomainError(f"{spec.family} is not handled by this solver")
    if problem.params.K > 1 and not _is_diagonal(problem, spec):
        return _solve_matrix(spec, problem)
    setup = _setup(spec, problem)
    K, grid, nodes, kern, b, g1 = setup
    if not np.any(b):
        return _zero_functional(spec, problem, setup)
    if spec.is_neighbourhood and np.all(spec.targets(K) == 0):
        return _finish(spec, problem, g1.copy(), g1, kern, nodes, b, K, 0, True, [],
                       {"beta": [np.inf] * (1 if spec.shared_budget else K), "u": []})
    main = _iterate(spec, problem, _initial_g(spec, K, nodes, g1), setup)
    if n_starts > 1:
        rng = np.random.default_rng(seed)
        runs = [main] + [_iterate(spec, problem, _initial_g(spec, K, nodes, g1, rng), setup)
                         for _ in range(n_starts - 1)]
        main.alternatives = _distinct(runs)
    return main


def _is_diagonal(problem, spec):
    """Diagonal setting: the neighbourhood centre (or the working model) has no off-diagonal mass."""
    f = spec.f1 if spec.f1 is not None else problem.density
    F = f(problem.grid.nodes[:8])
    return bool(np.abs(F - _diag_stack(np.diagonal(F, axis1=1, axis2=2))).max() == 0)


def solve_least_favorable_D0(spec: DensityClassSpec, problem: ExtrapolationProblem,
                             n_starts: int = 1, seed: int = 0) -> LeastFavorableResult:
    """Damped fixed-point iteration for the moment classes ``D0_1`` .. ``D0_4``.

    ``n_starts > 1`` reruns from random feasible densities and keeps the
    distinct converged fixed points in ``alternatives``.
    """
    return _solve(spec, problem, n_starts, seed, want=False)


def solve_least_favorable_D1delta(spec: DensityClassSpec, problem: ExtrapolationProblem,
                                  n_starts: int = 1, seed: int = 0) -> LeastFavorableResult:
    """Damped fixed-point iteration for the neighbourhood classes ``D1d_1`` .. ``D1d_4``.

    The radius constraint fixes ``u = 1/beta`` by root bracketing at every
    step.  ``delta = 0`` returns ``f1`` itself.
    """
    return _solve(spec, problem, n_starts, seed, want=True)


def _psd_sqrt(A):
    w, V = np.linalg.eigh(A)
    return (V * np.sqrt(np.maximum(w, 0))[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))


def _solve_matrix(spec, problem, ridge=1e-6, damping=DAMPING, tol=FIXED_POINT_TOL, max_iter=MAX_ITER):
    """Experimental full-matrix fixed point for ``D0_2`` / ``D0_4``.

    ``C C^*`` is rank one, so the exact update is singular; a relative ridge
    keeps ``f`` invertible.  The result is flagged experimental.
    """
    if spec.family not in ("D0_2", "D0_4"):
        raise PreconditionError(f"{spec.family} is implemented for scalar and diagonal densities only")
    warnings.warn("full-matrix least favourable densities are experimental", RuntimeWarning)
    K = problem.params.K
    nodes = problem.grid.nodes
    kern = IncrementKernel.of(problem.params)(nodes)
    J = max(problem.params.J, (problem.N or 0) + 1)
    b = fit_blocks(problem.b_blocks(), J)
    Bm = np.eye(K, dtype=complex) if spec.family == "D0_2" else np.asarray(spec.B, dtype=complex)
    Bt = Bm.T
    Bh = _psd_sqrt(Bt)
    Bih = np.linalg.inv(Bh)
    G = _diag_stack(np.full((nodes.size, K), spec.p / np.real(np.trace(Bt))))
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        W = hermitian_inverse(G, nodes)
        c = solve_c(toeplitz_from_weight(W, J), b)
        C = transform(c, nodes)
        CC = np.einsum("nk,nl->nkl", C, C.conj())
        CC += ridge * np.real(np.einsum("nkk->n", CC)).max() * np.eye(K)
        new = Bih @ _psd_sqrt(Bh @ CC @ Bh) @ Bih
        mass = np.real(np.einsum("kl,nlk->n", Bt, new)).mean()
        new *= spec.p / mass
        change = float(np.abs(new - G).max() / np.abs(G).max())
        history.append(change)
        if change < tol:
            converged = True
            break
        G = damping * G + (1 - damping) * new
    W = hermitian_inverse(new, nodes)
    c = solve_c(toeplitz_from_weight(W, J), b)
    C = transform(c, nodes)
    f0 = SpectralDensityModel.tabulated(nodes, new / kern[:, None, None])
    mass = np.real(np.einsum("kl,nlk->n", Bt, new)).mean()
    return LeastFavorableResult(
        family=spec.family, f0=f0, g0=np.real(np.diagonal(new, axis1=1, axis2=2)),
        multipliers={}, C0=C, c0=c, b=b, value=mse(b, c),
        equation_residual=float("nan"), constraint_residual=abs(mass - spec.p) / spec.p,
        iterations=it, converged=converged, history=history, experimental=True,
    )


# -- certification -------------------------------------------------------------


@dataclass
class CertificationReport:
    passed: bool
    value: float
    self_gap: float
    density_margins: list
    characteristic_margins: list
    violation: Optional[dict] = None

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "value": self.value,
            "self_gap": self.self_gap,
            "density_margins": self.density_margins,
            "characteristic_margins": self.characteristic_margins,
            "violation": self.violation,
        }


def _random_member(spec, result, g1, rng, nodes):
    """A random density of the class, as node values of ``g``."""
    K = result.g0.shape[1]
    shape = _initial_g(DensityClassSpec("D0_3", p_k=[1.0] * K), K, nodes, None, rng)
    if not spec.is_neighbourhood:
        return _normalize_D0(spec, shape)
    # move outward from f1 by a nonnegative bump whose radius equals the budget
    t = spec.targets(K)
    w = spec.weights(K)
    if spec.shared_budget:
        size = float((w * shape).sum(axis=1).mean())
        return g1 + shape * (t[0] / size)
    return g1 + shape * t / shape.mean(axis=0)


def certify_saddle(result: LeastFavorableResult, spec: DensityClassSpec, problem: ExtrapolationProblem,
                   n_probes: int = 100, seed: int = 0, tol: float = CERTIFY_TOL) -> CertificationReport:
    """Check both saddle inequalities on random probes.

    Densities: convex mixtures of ``f0`` with random members of the class must
    not raise the error of the ``f0``-optimal estimate.  Characteristics: the
    ``f0``-optimal ``h`` plus random past-supported terms must not lower the
    error under ``f0``.  Tolerances are absolute, scaled by ``max(1, value)``.
    """
    K = problem.params.K
    nodes = problem.grid.nodes
    kern = IncrementKernel.of(problem.params)(nodes)
    g1 = None
    if spec.is_neighbourhood:
        f1 = spec.f1 if spec.f1 is not None else problem.density
        g1 = np.real(np.diagonal(f1(nodes), axis1=1, axis2=2)) * kern[:, None]
    F0 = result.f0(nodes)
    v0, _ = _robust_weights(F0, problem)
    value = _quadratic(v0, kern, F0, problem.grid.M)
    slack = tol * max(1.0, abs(value))
    self_gap = abs(value - result.value)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))

    d_margins = []
    violation = None
    for i in range(n_probes):
        member = _random_member(spec, result, g1, rng, nodes)
        t = rng.uniform(0.0, 1.0) if i else 1.0
        F = (1 - t) * F0 + t * _diag_stack(member / kern[:, None])
        m = value - _quadratic(v0, kern, F, problem.grid.M)
        d_margins.append(m)
        if m < -slack and violation is None:
            violation = {"kind": "density", "probe": i, "mix": t, "margin": m,
                         "g_member": member.tolist()}

    f0_model = result.f0
    h0 = SpectralCharacteristic(result.b, result.c0, f0_model, IncrementKernel.of(problem.params))
    e0 = h0.error_factor(nodes)
    base = float(np.real(np.einsum("nk,nkl,nl->", e0.conj(), F0, e0)) / problem.grid.M)
    h_margins = []
    for i in range(n_probes):
        depth = int(rng.integers(1, 6))
        amp = 10.0 ** rng.uniform(-4, 0) * np.sqrt(max(value, 1e-300))
        coeffs = {-j: amp * (rng.standard_normal(K) + 1j * rng.standard_normal(K)) / np.sqrt(2 * depth)
                  for j in range(1, depth + 1)}
        e = h0.perturbed(coeffs).error_factor(nodes)
        val = float(np.real(np.einsum("nk,nkl,nl->", e.conj(), F0, e)) / problem.grid.M)
        m = val - base
        h_margins.append(m)
        if m < -slack and violation is None:
            violation = {"kind": "characteristic", "probe": i, "margin": m,
                         "coefficients": {str(k): {"re": v.real.tolist(), "im": v.imag.tolist()}
                                          for k, v in coeffs.items()}}
    passed = violation is None and self_gap <= slack
    return CertificationReport(passed, value, self_gap, d_margins, h_margins, violation)


def corrupt(result: LeastFavorableResult, spec: DensityClassSpec, problem: ExtrapolationProblem,
            node: Optional[int] = None, fraction: float = 0.1) -> LeastFavorableResult:
    """Negative control: add ``fraction`` of the total mass at one node, then restore the constraint.

    The returned object keeps the corrupted density together with its own
    optimal coefficients, so certification tests it as a claimed saddle point.
    """
    K, grid, nodes, kern, b, g1 = _setup(spec, problem)
    g = result.g0.copy()
    node = int(np.argmax(g.sum(axis=1))) if node is None else node
    g[node] += fraction * grid.M * g.mean(axis=0)
    if spec.is_neighbourhood:
        # pull the extra mass back to the neighbourhood radius
        excess = g - g1
        size = _constraint_value(spec, excess, K)
        t = spec.targets(K)
        g = g1 + excess * np.where(size > 0, t / np.maximum(size, 1e-300), 0)
    else:
        g = _normalize_D0(spec, g)
    c, C = optimal_C(g, b, nodes)
    return LeastFavorableResult(spec.family, _tabulate(nodes, g, kern), g, {}, C, c, b, mse(b, c),
                                float("nan"), _constraint_residual(spec, g, g1, K), 0, True)


def _constraint_value(spec, excess, K):
    w = spec.weights(K)
    if spec.shared_budget:
        return np.array([float(np.abs((w * excess).sum(axis=1)).mean())])
    return np.abs(excess).mean(axis=0)
