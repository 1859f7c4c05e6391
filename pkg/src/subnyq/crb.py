"""Cramer-Rao bounds on spatial phase and frequency, plus structural checks.

All bounds share one time axis: ``T`` is the Nyquist-rate snapshot count.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .frontend import SamplingPattern, khatri_rao, modulation_matrix
from .signal_model import ArrayGeometry, steering_matrix


@dataclass(frozen=True)
class CrbInputs:
    geom: ArrayGeometry
    phis: np.ndarray
    omega: tuple[int, ...]
    pattern: SamplingPattern
    sigma2: float
    T: int
    R_S: np.ndarray | None = None  # None -> identity (unit-power, uncorrelated)

    def __post_init__(self):
        phis = np.atleast_1d(np.asarray(self.phis, dtype=float))
        object.__setattr__(self, "phis", phis)
        object.__setattr__(self, "omega", tuple(int(l) for l in self.omega))
        if len(self.omega) != phis.size:
            raise ValueError("phis and omega differ in length")
        if len(set(self.omega)) != len(self.omega):
            raise ValueError(f"coset indices must be distinct: {self.omega}")
        R = np.eye(phis.size) if self.R_S is None else np.asarray(self.R_S, dtype=complex)
        if R.shape != (phis.size, phis.size) or not np.allclose(R, R.conj().T):
            raise ValueError("R_S must be a K x K Hermitian matrix")
        if np.linalg.eigvalsh(R).min() < -1e-12 * max(np.trace(R).real, 1.0):
            raise ValueError("R_S must be positive semidefinite")
        object.__setattr__(self, "R_S", R)
        if self.sigma2 <= 0 or self.T < 1:
            raise ValueError("need sigma2 > 0 and T >= 1")

    @property
    def K(self) -> int:
        return self.phis.size

    @property
    def snr(self) -> float:
        """Per-source SNR, taken from the mean source power."""
        return float(np.real(np.trace(self.R_S)) / self.K / self.sigma2)


def steering_derivative(geom: ArrayGeometry, phi) -> np.ndarray:
    """Derivative of the steering vector(s) w.r.t. phi: ``j p_m exp(j phi p_m)``."""
    pos = geom.positions[:, None]
    D = 1j * pos * np.exp(1j * pos * np.atleast_1d(phi)[None, :])
    return D[:, 0] if np.ndim(phi) == 0 else D


def _projector_complement(G: np.ndarray, labels) -> np.ndarray:
    s = np.linalg.svd(G, compute_uv=False)
    if s[-1] <= 1e-10 * s[0]:
        # name the pair of columns that are closest to parallel
        Gn = G / np.linalg.norm(G, axis=0)
        C = np.abs(Gn.conj().T @ Gn) - np.eye(G.shape[1])
        i, j = np.unravel_index(np.argmax(C), C.shape)
        raise np.linalg.LinAlgError(
            f"manifold is rank deficient: sources {labels[i]} and {labels[j]} collide")
    return np.eye(G.shape[0]) - G @ np.linalg.pinv(G)


def _phase_bound(G, E, R_S, sigma2, T):
    P_perp = _projector_complement(G, list(range(1, G.shape[1] + 1)))
    F = np.real((E.conj().T @ P_perp @ E) * R_S.T)
    C = sigma2 / (2 * T) * np.linalg.inv(F)
    return (C + C.T) / 2


def union_manifold(inp: CrbInputs) -> tuple[np.ndarray, np.ndarray]:
    """``(G_S, E)`` with ``G_S = A * B_Omega`` and ``E = D * B_Omega``."""
    B_om = modulation_matrix(inp.pattern)[:, [l - 1 for l in inp.omega]]
    A = steering_matrix(inp.geom, inp.phis)
    D = steering_derivative(inp.geom, inp.phis)
    return khatri_rao(A, B_om), khatri_rao(D, B_om)


def crb_sub_phase(inp: CrbInputs) -> np.ndarray:
    """K x K bound on spatial phase for the multi-coset union model."""
    if inp.pattern.P == 1 and inp.pattern.L > 1:
        warnings.warn("P=1: coset columns are fully correlated")
    G, E = union_manifold(inp)
    return _phase_bound(G, E, inp.R_S, inp.sigma2, inp.T)


def crb_ny_phase(inp: CrbInputs) -> np.ndarray:
    """K x K bound on spatial phase for a Nyquist-rate array."""
    A = steering_matrix(inp.geom, inp.phis)
    D = steering_derivative(inp.geom, inp.phis)
    return _phase_bound(A, D, inp.R_S, inp.sigma2, inp.T)


def crb_frequency(inp: CrbInputs, mode: str = "sub", f_N: float = 1.0) -> np.ndarray:
    """Large-sample frequency bound in Hz^2 for every source.

    ``mode="nyquist"`` drops the ``L/P`` rate penalty of the sub-Nyquist bank.
    """
    if mode not in ("sub", "nyquist"):
        raise ValueError(f"mode must be 'sub' or 'nyquist', got {mode!r}")
    snr = np.real(np.diag(inp.R_S)) / inp.sigma2
    base = (1 / (4 * np.pi ** 2)) * (6 / snr) / inp.geom.M * f_N ** 2 / inp.T ** 3
    if mode == "sub":
        base = base * inp.pattern.L / inp.pattern.P
    return base


def single_source_floor(snr: float, T: int, M: int) -> float:
    """Lowest spatial-phase variance reachable by a ULA: ``6 / (SNR T M (M^2 - 1))``."""
    return 6.0 / (snr * T * M * (M ** 2 - 1))


def coset_column_correlation(B: np.ndarray | SamplingPattern, normalized: bool = True) -> np.ndarray:
    """L x L matrix of column correlations of B.

    ``normalized=True`` divides by the column norms so the diagonal is 1.
    ``normalized=False`` returns the raw ``|(B^i)^H B^j|``, whose diagonal is
    ``P / L``.
    """
    if isinstance(B, SamplingPattern):
        B = modulation_matrix(B)
    B = np.asarray(B)
    if B.shape[0] == 1 and B.shape[1] > 1:
        warnings.warn("P=1: every pair of coset columns is fully correlated")
    C = np.abs(B.conj().T @ B)
    if normalized:
        n = np.linalg.norm(B, axis=0)
        C = C / np.outer(n, n)
        np.fill_diagonal(C, 1.0)
    return C


def psd_geq(X: np.ndarray, Y: np.ndarray, rtol: float = 1e-9) -> bool:
    """``X >= Y`` in PSD order, up to ``-rtol * trace`` on the smallest eigenvalue."""
    Dm = np.asarray(X) - np.asarray(Y)
    Dm = (Dm + Dm.conj().T) / 2
    scale = max(abs(np.trace(X)), abs(np.trace(Y)), np.finfo(float).tiny)
    return bool(np.linalg.eigvalsh(Dm).min() >= -rtol * scale)


def inverse_block_dominates(M_plus: np.ndarray, K: int) -> bool:
    """Check ``[M^-1]_{KxK} >= ([M]_{KxK})^-1`` for a Hermitian PD matrix."""
    inv_block = np.linalg.inv(M_plus)[:K, :K]
    block_inv = np.linalg.inv(M_plus[:K, :K])
    return psd_geq(inv_block, block_inv)
