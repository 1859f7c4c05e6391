"""JDFSD: noise-subspace search over (sub-band, spatial phase) pairs."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .estimators import (EstimationResult, fbar_from_spectrum, finalize_sources, polish_sources,
                         sources_from_tones)
from .frontend import SnapshotSet, reception_matrix
from .signal_model import ArrayGeometry, steering_matrix


class PeakSearchError(RuntimeError):
    """Raised when fewer than K admissible spectrum peaks exist."""

    def __init__(self, msg, found):
        super().__init__(msg)
        self.found = found


@dataclass(frozen=True)
class CovarianceEstimate:
    R: np.ndarray
    snapshots_used: int


@dataclass(frozen=True)
class PseudoSpectrum:
    grid_phi: np.ndarray
    values: np.ndarray  # L x G


def sample_covariance(snaps: SnapshotSet | np.ndarray) -> CovarianceEstimate:
    Y = snaps.Y if isinstance(snaps, SnapshotSet) else np.atleast_2d(snaps)
    N = Y.shape[1]
    if N < 1:
        raise ValueError("no snapshots")
    R = Y @ Y.conj().T / N
    return CovarianceEstimate(R=(R + R.conj().T) / 2, snapshots_used=N)


def noise_subspace(cov: CovarianceEstimate | np.ndarray, K: int) -> np.ndarray:
    """Orthonormal basis of the MP-K trailing eigenvectors of R."""
    R = cov.R if isinstance(cov, CovarianceEstimate) else np.asarray(cov)
    n = R.shape[0]
    if not 0 <= K < n:
        raise ValueError(f"need 0 <= K < {n}, got {K}")
    w, V = np.linalg.eigh(R)
    if K > 0:
        lo, hi = w[n - K - 1], w[n - K]
        if hi - lo <= 1e-8 * max(abs(hi), np.finfo(float).tiny):
            warnings.warn("signal/noise eigenvalue gap is degenerate")
    return V[:, : n - K]


def _branch_projections(U_N: np.ndarray, B: np.ndarray, M: int) -> np.ndarray:
    """M x L x R array ``W[:, l, r] = U_m(r) conj(B[:, l])``.

    ``U_m(r)`` is column r of U_N reshaped to M x P, so that
    ``(a kron B[:, l])^H U_N[:, r] = a^H W[:, l, r]``.
    """
    P = B.shape[0]
    return np.einsum("mpr,pl->mlr", U_N.reshape(M, P, -1), B.conj())


def _music_denominator(W: np.ndarray, geom: ArrayGeometry, phis) -> np.ndarray:
    """``||(a(phi) kron B[:, l])^H U_N||^2`` for every l (rows) and phi (columns)."""
    M, L, R = W.shape
    Ah = steering_matrix(geom, phis).conj().T  # G x M
    proj = (Ah @ W.reshape(M, L * R)).reshape(-1, L, R)
    return np.sum(proj.real ** 2 + proj.imag ** 2, axis=2).T


def pseudo_spectrum(U_N, B, geom: ArrayGeometry, grid: int = 4096) -> PseudoSpectrum:
    phis = -np.pi + 2 * np.pi * np.arange(grid) / grid
    den = _music_denominator(_branch_projections(U_N, B, geom.M), geom, phis)
    floor = np.finfo(float).eps * geom.M * np.max(np.sum(np.abs(B) ** 2, axis=0))
    return PseudoSpectrum(grid_phi=phis, values=1.0 / np.maximum(den, floor))


def _local_maxima(v: np.ndarray) -> np.ndarray:
    """Indices of strict local maxima of a circular sequence."""
    return np.flatnonzero((v > np.roll(v, 1)) & (v > np.roll(v, -1)))


def _refine_peak(U_N, B, geom, l, phi0, step) -> float:
    W = _branch_projections(U_N, B[:, [l - 1]], geom.M)

    def den(p):
        return _music_denominator(W, geom, [p])[0, 0]

    # parabolic step on the log spectrum, then a bounded search of the denominator
    ym, y0, yp = (-np.log(max(den(phi0 + s), 1e-300)) for s in (-step, 0.0, step))
    curv = ym - 2 * y0 + yp
    center = phi0 + (0.5 * step * (ym - yp) / curv if curv < 0 else 0.0)
    center = float(np.clip(center, phi0 - step, phi0 + step))
    res = minimize_scalar(lambda dx: den(center + dx), bounds=(-step, step),
                          method="bounded", options={"xatol": 1e-13})
    best = center + res.x if res.fun <= den(center) else center
    return float(np.mod(best + np.pi, 2 * np.pi) - np.pi)


def pseudo_spectrum_peaks(U_N, B, geom: ArrayGeometry, K: int, grid: int = 4096):
    """Top-K spectrum peaks with pairwise-distinct sub-bands as ``(l, phi)`` pairs.

    A peak in a sub-band adjacent to an already chosen peak, within 5% of
    the array's Rayleigh width of its phase, is treated as spectral leakage
    and passed over.
    """
    ps = pseudo_spectrum(U_N, B, geom, grid)
    if ps.values.max() <= ps.values.min() * (1 + 1e-9):
        raise PeakSearchError("pseudo-spectrum is flat", [])
    cands = []
    for li, row in enumerate(ps.values):
        for g in _local_maxima(row):
            cands.append((row[g], li + 1, g))
    cands.sort(key=lambda t: (-t[0], t[1], t[2]))
    # leakage from a tone near a sub-band edge repeats its peak in the next
    # sub-band at nearly the same phase; such echoes are skipped
    echo = 0.05 * 2 * np.pi / (geom.positions[-1] + 1)
    L = B.shape[1]
    picked, used = [], set()
    for _, l, g in cands:
        if l in used:
            continue
        phi = ps.grid_phi[g]
        if any(min(abs(l - lp), L - abs(l - lp)) == 1
               and abs(np.angle(np.exp(1j * (phi - ps.grid_phi[gp])))) < echo
               for lp, gp in picked):
            continue
        picked.append((l, g))
        used.add(l)
        if len(picked) == K:
            break
    step = 2 * np.pi / grid
    found = [(l, _refine_peak(U_N, B, geom, l, ps.grid_phi[g], step)) for l, g in picked]
    if len(found) < K:
        raise PeakSearchError(f"only {len(found)} of {K} peaks found", found)
    return found


def jdfsd(snaps: SnapshotSet, B: np.ndarray, geom: ArrayGeometry, K: int,
          grid: int = 4096, refine: bool = True) -> EstimationResult:
    """Joint DOA/frequency estimate from the (sub-band, phase) pseudo-spectrum.

    ``refine=False`` stops after the sub-band spectrum step; the default
    follows with :func:`polish_sources`.
    """
    cov = sample_covariance(snaps)
    U_N = noise_subspace(cov, K)
    peaks = pseudo_spectrum_peaks(U_N, B, geom, K, grid)
    omega = [l for l, _ in peaks]
    phis = [p for _, p in peaks]
    G = reception_matrix(geom, phis, B, omega).G_S
    cond = np.linalg.cond(G)
    S_bar = np.linalg.pinv(G) @ snaps.Y
    fbars = [fbar_from_spectrum(S_bar[k], snaps.f_sub, snaps.L) for k in range(K)]
    sources = finalize_sources(phis, omega, fbars, snaps.f_N, snaps.L, geom.d)
    if refine:
        by_f = [(s.phi, s.f, s.omega) for s in sources]
        p, f = polish_sources(snaps, B, geom, [t[0] for t in by_f], [t[1] for t in by_f],
                              [t[2] for t in by_f])
        sources = sources_from_tones(p, f, snaps.f_N, snaps.L, geom.d, [t[2] for t in by_f])
    resid = np.linalg.norm(snaps.Y - G @ S_bar) / max(np.linalg.norm(snaps.Y), 1e-300)
    return EstimationResult(
        sources=sources,
        algorithm="jdfsd",
        residual=float(resid),
        iterations=0,
        flags={"ill_conditioned": bool(cond > 1e8), "cond": float(cond)},
    )
