"""Ground-truth sources, array geometry and Nyquist-rate array synthesis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MRA8 = (0, 1, 4, 10, 16, 22, 28, 30)


@dataclass(frozen=True)
class ArrayGeometry:
    """Sensor positions in units of the reference spacing ``d``."""

    positions: np.ndarray
    d: float = 1.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 1 or pos.size < 2:
            raise ValueError("need at least two sensors")
        if pos[0] != 0:
            raise ValueError("first sensor must sit at position 0")
        if np.any(np.diff(pos) <= 0):
            raise ValueError("positions must be strictly increasing")
        object.__setattr__(self, "positions", pos)

    @property
    def M(self) -> int:
        return self.positions.size

    @classmethod
    def ula(cls, M: int, d: float = 1.0) -> "ArrayGeometry":
        return cls(np.arange(M), d)

    @classmethod
    def mra(cls, d: float = 1.0) -> "ArrayGeometry":
        """The 8-sensor minimum redundancy array."""
        return cls(np.array(MRA8), d)

    @classmethod
    def parse(cls, text: str, M: int = 8, d: float = 1.0) -> "ArrayGeometry":
        """Parse ``"ula"``, ``"mra"`` or a comma separated position list."""
        text = text.strip().lower()
        if text == "ula":
            return cls.ula(M, d)
        if text == "mra":
            if M != len(MRA8):
                raise ValueError(f"the built-in MRA has {len(MRA8)} sensors, got M={M}")
            return cls.mra(d)
        return cls(np.array([float(v) for v in text.split(",")]), d)


@dataclass(frozen=True)
class Source:
    theta: float  # radians
    f: float  # Hz
    power: float = 1.0


@dataclass(frozen=True)
class SourceEnsemble:
    sources: tuple[Source, ...]
    f_N: float
    L: int

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        for s in self.sources:
            if not 0 <= s.f < self.f_N:
                raise ValueError(f"frequency {s.f} outside [0, f_N)")
            if abs(s.theta) >= np.pi / 2:
                raise ValueError(f"DOA {s.theta} outside (-pi/2, pi/2)")
            if s.power <= 0:
                raise ValueError("source power must be positive")
        omega = self.omega
        if len(set(omega)) != len(omega):
            raise ValueError(f"sources share a sub-band: coset indices {omega}")

    @property
    def K(self) -> int:
        return len(self.sources)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([s.theta for s in self.sources])

    @property
    def freqs(self) -> np.ndarray:
        return np.array([s.f for s in self.sources])

    @property
    def powers(self) -> np.ndarray:
        return np.array([s.power for s in self.sources])

    @property
    def omega(self) -> list[int]:
        """1-based sub-band index of every source."""
        return [coset_index(s.f, self.f_N, self.L) for s in self.sources]

    def phis(self, d: float = 1.0) -> np.ndarray:
        return spatial_phase(self.thetas, self.freqs, self.f_N, d)


@dataclass(frozen=True)
class NyquistRecord:
    X: np.ndarray  # M x T
    sigma2: float
    f_N: float
    # ground truth kept for model checks; not used by estimators
    tones: np.ndarray = field(default=None, repr=False)

    @property
    def T(self) -> int:
        return self.X.shape[1]

    @property
    def T_N(self) -> float:
        return 1.0 / self.f_N


def coset_index(f: float, f_N: float, L: int) -> int:
    return 1 + int(np.floor(f * L / f_N))


def spatial_phase(theta, f, f_N: float, d: float = 1.0):
    """Inter-sensor phase increment ``pi * d * sin(theta) * f / f_N``."""
    return np.pi * d * np.sin(theta) * np.asarray(f) / f_N


def steering_vector(geom: ArrayGeometry, phi: float) -> np.ndarray:
    return np.exp(1j * phi * geom.positions)


def steering_matrix(geom: ArrayGeometry, phis) -> np.ndarray:
    """M x K matrix whose columns are steering vectors."""
    return np.exp(1j * np.outer(geom.positions, np.atleast_1d(phis)))


def noise_variance(snr_db: float, power: float = 1.0) -> float:
    """Noise variance giving ``power / sigma2`` equal to the requested SNR.

    ``snr_db = inf`` means noiseless.
    """
    if np.isinf(snr_db) and snr_db > 0:
        return 0.0
    return power / 10.0 ** (snr_db / 10.0)


def synthesize_nyquist(
    ens: SourceEnsemble,
    geom: ArrayGeometry,
    T: int,
    snr_db: float,
    seed=None,
) -> NyquistRecord:
    """Nyquist-rate array record of cisoid sources in white Gaussian noise.

    Each source gets a uniform random phase drawn from ``seed``. The SNR is
    per source with unit reference power, i.e. ``sigma2 = 1 / snr``.
    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if T % ens.L:
        raise ValueError(f"T={T} not divisible by L={ens.L}")
    if ens.K >= geom.M:
        raise ValueError(f"need fewer sources than sensors, got K={ens.K}, M={geom.M}")
    rng = np.random.default_rng(seed)
    n = np.arange(T)
    psi = rng.uniform(0.0, 2 * np.pi, ens.K)
    tones = np.sqrt(ens.powers)[:, None] * np.exp(
        1j * (2 * np.pi * np.outer(ens.freqs / ens.f_N, n) + psi[:, None])
    )
    A = steering_matrix(geom, ens.phis(geom.d))
    X = A @ tones if ens.K else np.zeros((geom.M, T), complex)
    sigma2 = noise_variance(snr_db)
    if sigma2 > 0:
        X = X + np.sqrt(sigma2 / 2) * (
            rng.standard_normal((geom.M, T)) + 1j * rng.standard_normal((geom.M, T))
        )
    return NyquistRecord(X=X, sigma2=sigma2, f_N=ens.f_N, tones=tones)
