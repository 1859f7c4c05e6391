"""JDFTD: trilinear (CP) decomposition of the M x P x N snapshot tensor.

The factors are fitted by regularized alternating least squares, then each
component is turned into a source estimate: spatial phase from the array
factor, sub-band from the branch factor, in-band frequency from the spectral
factor.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .estimators import (EstimationResult, fbar_from_spectrum, finalize_sources, ml_phase,
                         polish_sources, sources_from_tones)
from .frontend import SnapshotSet
from .signal_model import ArrayGeometry


@dataclass(frozen=True)
class RalsOptions:
    max_iters: int = 1000
    tol: float = 1e-6  # relative objective change
    lam: float | None = None  # None -> 1e-6 * ||Y||^2 / (M P N)
    init: str = "svd"  # "svd" (HOSVD start) | "random"
    restarts: int = 1  # later restarts start at random
    seed: int = 0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.lam is not None and self.lam < 0:
            raise ValueError("regularization weight must be non-negative")
        if self.init not in ("random", "svd"):
            raise ValueError(f"unknown init policy {self.init!r}")


@dataclass
class TrilinearFactors:
    A: np.ndarray  # M x K
    B: np.ndarray  # P x K
    S: np.ndarray  # K x N
    iterations: int
    final_residual: float
    converged: bool
    objective_history: np.ndarray
    degenerate: bool = False


def cp_reconstruct(A, B, S) -> np.ndarray:
    return np.einsum("mk,pk,kn->mpn", A, B, S)


def _objective(Y, A, B, S, lam):
    r = np.linalg.norm(Y - cp_reconstruct(A, B, S)) ** 2
    return r + lam * (np.linalg.norm(A) ** 2 + np.linalg.norm(B) ** 2 + np.linalg.norm(S) ** 2)


def _ls_update(rhs, gram, lam):
    """Solve ``X (gram + lam I) = rhs`` for X."""
    K = gram.shape[0]
    return np.linalg.solve((gram + lam * np.eye(K)).T, rhs.T).T


def _init_factors(Y, K, policy, rng):
    M, P, N = Y.shape
    if policy == "svd":
        fac = []
        for mode, n in enumerate(Y.shape):
            unf = np.moveaxis(Y, mode, 0).reshape(n, -1)
            u = np.linalg.svd(unf, full_matrices=False)[0][:, :K]
            if u.shape[1] < K:
                extra = rng.standard_normal((n, K - u.shape[1])) + 1j * rng.standard_normal((n, K - u.shape[1]))
                u = np.hstack([u, extra])
            fac.append(u)
        A, B, Sf = fac
        return A, B, Sf.T
    def cn(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    return cn(M, K), cn(P, K), cn(K, N)


def _kruskal_plausible(shape, K) -> bool:
    return sum(min(n, K) for n in shape) >= 2 * K + 2


def _rals_single(Y, K, A, B, S, lam, max_iters, tol):
    hist = [_objective(Y, A, B, S, lam)]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        A = _ls_update(np.einsum("mpn,pk,kn->mk", Y, B.conj(), S.conj()),
                       ((B.conj().T @ B) * (S.conj() @ S.T)).T, lam)
        B = _ls_update(np.einsum("mpn,mk,kn->pk", Y, A.conj(), S.conj()),
                       ((A.conj().T @ A) * (S.conj() @ S.T)).T, lam)
        St = _ls_update(np.einsum("mpn,mk,pk->nk", Y, A.conj(), B.conj()),
                        ((A.conj().T @ A) * (B.conj().T @ B)).T, lam)
        S = St.T
        hist.append(_objective(Y, A, B, S, lam))
        prev, cur = hist[-2], hist[-1]
        if prev == 0 or abs(prev - cur) <= tol * prev:
            converged = True
            break
    return A, B, S, it, converged, np.array(hist)


def rals_decompose(Y, K: int, opts: RalsOptions = RalsOptions()) -> TrilinearFactors:
    """Fit ``Y[m,p,n] ~ sum_k A[m,k] B[p,k] S[k,n]`` by regularized ALS.

    Runs ``opts.restarts`` independent starts and keeps the one with the lowest
    final objective. Columns come back in arbitrary order and scale.
    """
    Y = np.asarray(Y, dtype=complex)
    if Y.ndim != 3:
        raise ValueError("expected a third-order tensor")
    M, P, N = Y.shape
    if K < 1:
        raise ValueError("K must be positive")
    if K > 1 and not _kruskal_plausible(Y.shape, K):
        warnings.warn(f"rank {K} decomposition of a {Y.shape} tensor may not be unique")
    norm2 = np.linalg.norm(Y) ** 2
    if norm2 == 0:
        z = np.zeros
        return TrilinearFactors(z((M, K), complex), z((P, K), complex), z((K, N), complex),
                                0, 0.0, True, np.zeros(1), degenerate=True)
    lam = opts.lam if opts.lam is not None else 1e-6 * norm2 / (M * P * N)
    rng = np.random.default_rng(opts.seed)
    best = None
    for r in range(max(1, opts.restarts)):
        policy = opts.init if r == 0 else "random"
        A, B, S = _init_factors(Y, K, policy, rng)
        A, B, S, it, conv, hist = _rals_single(Y, K, A, B, S, lam, opts.max_iters, opts.tol)
        if best is None or hist[-1] < best[-1][-1]:
            best = (A, B, S, it, conv, hist)
    A, B, S, it, conv, hist = best
    resid = float(np.linalg.norm(Y - cp_reconstruct(A, B, S)) / np.sqrt(norm2))
    return TrilinearFactors(A, B, S, it, resid, conv, hist)


def match_cosets(B_t: np.ndarray, B: np.ndarray) -> list[int]:
    """Assign each estimated branch column to a distinct 1-based column of B.

    Pairs are taken greedily by decreasing normalized correlation; ties go to
    the smaller column index.
    """
    B_t = np.atleast_2d(np.asarray(B_t))
    nt = np.linalg.norm(B_t, axis=0)
    if np.any(nt == 0):
        raise ValueError("zero column in estimated branch factor")
    K, L = B_t.shape[1], B.shape[1]
    if K > L:
        raise ValueError(f"cannot assign {K} components to {L} distinct sub-bands")
    r = np.abs(B_t.conj().T @ B) / (nt[:, None] * np.linalg.norm(B, axis=0)[None, :])
    order = sorted(((-r[k, j], j, k) for k in range(K) for j in range(L)))
    omega = [0] * K
    used_k, used_j = set(), set()
    for _, j, k in order:
        if k in used_k or j in used_j:
            continue
        omega[k] = j + 1
        used_k.add(k)
        used_j.add(j)
        if len(used_k) == K:
            break
    return omega


def jdftd(snaps: SnapshotSet, B: np.ndarray, geom: ArrayGeometry, K: int,
          opts: RalsOptions = RalsOptions(), refine: bool = True) -> EstimationResult:
    """Joint DOA/frequency estimate from the CP factors of the snapshot tensor.

    ``refine`` has the same meaning as in :func:`subnyq.subspace.jdfsd`.
    """
    fac = rals_decompose(snaps.tensor, K, opts)
    if fac.degenerate:
        raise ValueError("all-zero snapshot tensor")
    phis = [ml_phase(fac.A[:, k], geom) for k in range(K)]
    omega = match_cosets(fac.B, B)
    fbars = [fbar_from_spectrum(fac.S[k], snaps.f_sub, snaps.L) for k in range(K)]
    sources = finalize_sources(phis, omega, fbars, snaps.f_N, snaps.L, geom.d)
    if refine:
        p, f = polish_sources(snaps, B, geom, [s.phi for s in sources], [s.f for s in sources],
                              [s.omega for s in sources])
        sources = sources_from_tones(p, f, snaps.f_N, snaps.L, geom.d, [s.omega for s in sources])
    return EstimationResult(
        sources=sources,
        algorithm="jdftd",
        residual=fac.final_residual,
        iterations=fac.iterations,
        flags={"converged": fac.converged},
    )
