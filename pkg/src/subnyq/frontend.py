"""Multi-coset receiver: sampling pattern, modulation matrix, snapshot assembly.

Channel ``(m, p)`` of the union model lives at row ``m * P + p`` (0-based),
which is the row order of ``A kron B``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .signal_model import ArrayGeometry, NyquistRecord, steering_matrix


@dataclass(frozen=True)
class SamplingPattern:
    L: int
    cosets: tuple[int, ...]

    def __post_init__(self):
        c = tuple(int(v) for v in self.cosets)
        object.__setattr__(self, "cosets", c)
        if self.L < 1:
            raise ValueError("L must be positive")
        if not 1 <= len(c) <= self.L:
            raise ValueError(f"need 1 <= P <= L, got P={len(c)}, L={self.L}")
        if c[0] < 0 or c[-1] > self.L - 1 or any(b <= a for a, b in zip(c, c[1:])):
            raise ValueError(f"cosets must satisfy 0 <= c1 < ... < cP <= L-1: {c}")
        if len(c) == 1 and self.L > 1:
            warnings.warn("P=1: all coset columns are parallel, sub-bands are not identifiable")

    @property
    def P(self) -> int:
        return len(self.cosets)

    @property
    def average_rate_factor(self) -> float:
        """Average sampling rate as a fraction of the Nyquist rate."""
        return self.P / self.L

    @classmethod
    def first(cls, L: int, P: int) -> "SamplingPattern":
        return cls(L, tuple(range(P)))

    @classmethod
    def random(cls, L: int, P: int, rng) -> "SamplingPattern":
        rng = np.random.default_rng(rng)
        return cls(L, tuple(sorted(rng.choice(L, size=P, replace=False).tolist())))

    @classmethod
    def parse(cls, text: str, L: int, P: int, rng=None) -> "SamplingPattern":
        """Build a pattern from ``"first"``, ``"random"`` or ``"0,3,7"``."""
        text = text.strip().lower()
        if text == "first":
            return cls.first(L, P)
        if text == "random":
            return cls.random(L, P, rng)
        cosets = tuple(int(v) for v in text.split(","))
        if len(cosets) != P:
            raise ValueError(f"explicit pattern has {len(cosets)} cosets, P={P}")
        return cls(L, cosets)


@dataclass(frozen=True)
class SnapshotSet:
    Y: np.ndarray  # MP x N
    M: int
    P: int
    L: int
    f_N: float

    @property
    def N(self) -> int:
        return self.Y.shape[1]

    @property
    def f_sub(self) -> float:
        return self.f_N / self.L

    @property
    def bin_width(self) -> float:
        return self.f_sub / self.N

    @property
    def tensor(self) -> np.ndarray:
        """The snapshots as an M x P x N array."""
        return self.Y.reshape(self.M, self.P, self.N)


@dataclass(frozen=True)
class ReceptionModel:
    G_S: np.ndarray  # MP x K
    support: list[int]
    omega: list[int]


def modulation_matrix(pat: SamplingPattern) -> np.ndarray:
    """P x L matrix ``exp(j 2 pi c_i l / L) / sqrt(L)`` with 1-based ``l``."""
    l = np.arange(1, pat.L + 1)
    return np.exp(2j * np.pi * np.outer(pat.cosets, l) / pat.L) / np.sqrt(pat.L)


def multicoset_sample(rec: NyquistRecord | np.ndarray, pat: SamplingPattern) -> np.ndarray:
    """Coset streams ``out[m, p, n] = X[m, n L + c_p]`` as an M x P x T/L array."""
    X = rec.X if isinstance(rec, NyquistRecord) else np.asarray(rec)
    M, T = X.shape
    if T % pat.L:
        raise ValueError(f"T={T} not divisible by L={pat.L}")
    return X.reshape(M, T // pat.L, pat.L)[:, :, list(pat.cosets)].transpose(0, 2, 1)


def coset_phase(pat: SamplingPattern, N: int) -> np.ndarray:
    """P x N unit-modulus factors applied to each branch's DFT bins.

    Bin ``q`` of branch ``p`` is multiplied by ``exp(j 2 pi c_p (1/L - q/(N L)))``.
    The ``-q`` part restores the ``c_p T_N`` sampling delay, so the transform
    equals the Nyquist-grid spectrum of the zero-interleaved coset sequence;
    the constant part aligns the result with the 1-based columns of B.
    """
    c = np.asarray(pat.cosets, dtype=float)[:, None]
    q = np.arange(N)[None, :]
    return np.exp(2j * np.pi * c * (1.0 / pat.L - q / (N * pat.L)))


def assemble_snapshots(streams: np.ndarray, pat: SamplingPattern, f_N: float) -> SnapshotSet:
    """Frequency-domain snapshots Y(q), one per DFT bin of the coset streams.

    Each stream gets a unitary N-point DFT followed by the delay alignment of
    :func:`coset_phase`. With that alignment ``Y_m(q) = B Xbar_m(q)`` holds
    exactly, where ``Xbar_m(q)[l-1]`` is bin ``q + (l-1) N`` of the unitary
    T-point DFT of sensor ``m``'s Nyquist record.
    """
    M, P, N = streams.shape
    if P != pat.P:
        raise ValueError(f"stream count {P} does not match pattern P={pat.P}")
    F = np.fft.fft(streams, axis=2, norm="ortho") * coset_phase(pat, N)[None]
    return SnapshotSet(Y=F.reshape(M * P, N), M=M, P=P, L=pat.L, f_N=f_N)


def subband_spectra(x: np.ndarray, L: int) -> np.ndarray:
    """Unitary T-point DFT of the last axis, split into L sub-bands of N bins.

    Returns an array of shape ``x.shape[:-1] + (L, N)``.
    """
    T = x.shape[-1]
    X = np.fft.fft(x, axis=-1, norm="ortho")
    return X.reshape(x.shape[:-1] + (L, T // L))


def khatri_rao(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product."""
    return (A[:, None, :] * B[None, :, :]).reshape(A.shape[0] * B.shape[0], A.shape[1])


def reception_matrix(geom: ArrayGeometry, phis, B: np.ndarray, omega) -> ReceptionModel:
    omega = [int(l) for l in omega]
    L = B.shape[1]
    if len(set(omega)) != len(omega):
        raise ValueError(f"duplicate coset indices in {omega}")
    if any(not 1 <= l <= L for l in omega):
        raise ValueError(f"coset indices must lie in 1..{L}: {omega}")
    A = steering_matrix(geom, phis)
    G = khatri_rao(A, B[:, [l - 1 for l in omega]])
    support = [k * L + l for k, l in enumerate(omega)]
    return ReceptionModel(G_S=G, support=support, omega=omega)


def observe(rec: NyquistRecord, pat: SamplingPattern) -> SnapshotSet:
    """Sample a Nyquist record with the multi-coset bank and form snapshots."""
    return assemble_snapshots(multicoset_sample(rec, pat), pat, rec.f_N)


def pattern_from_matrix(B: np.ndarray) -> SamplingPattern:
    """Recover the coset offsets from the first column of B."""
    B = np.atleast_2d(B)
    L = B.shape[1]
    c = np.round(np.angle(B[:, 0]) * L / (2 * np.pi)).astype(int) % L
    return SamplingPattern(L, tuple(sorted(c.tolist())))

