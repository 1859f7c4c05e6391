"""Shared single-tone ML primitives and parameter conversions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .frontend import SnapshotSet, coset_phase, pattern_from_matrix
from .signal_model import ArrayGeometry, coset_index, steering_matrix

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class SourceEstimate:
    phi: float
    omega: int
    fbar: float
    f: float
    theta: float
    clamped: bool = False


@dataclass
class EstimationResult:
    sources: list[SourceEstimate]
    algorithm: str
    residual: float = float("nan")
    iterations: int = 0
    flags: dict = field(default_factory=dict)

    @property
    def phis(self) -> np.ndarray:
        return np.array([s.phi for s in self.sources])

    @property
    def freqs(self) -> np.ndarray:
        return np.array([s.f for s in self.sources])

    @property
    def thetas(self) -> np.ndarray:
        return np.array([s.theta for s in self.sources])

    @property
    def omega(self) -> list[int]:
        return [s.omega for s in self.sources]


def _refine_max(fun, center: float, half_width: float, xatol: float) -> float:
    # search the offset from the grid point so the solver's relative tolerance
    # acts on a small number
    res = minimize_scalar(
        lambda dx: -fun(center + dx),
        bounds=(-half_width, half_width),
        method="bounded",
        options={"xatol": xatol},
    )
    return center + res.x if -res.fun >= fun(center) else center


def _newton_peak(z, pos, x, steps: int = 3) -> float:
    """Newton steps on ``|sum z exp(-j x pos)|^2`` from a point already on the main lobe."""
    def parts(v):
        e = z * np.exp(-1j * v * pos)
        F, F1, F2 = e.sum(), (-1j * pos * e).sum(), (-(pos ** 2) * e).sum()
        return abs(F) ** 2, 2 * np.real(np.conj(F) * F1), 2 * np.real(abs(F1) ** 2 + np.conj(F) * F2)

    val = parts(x)[0]
    for _ in range(steps):
        _, g, h = parts(x)
        if h >= 0:
            break
        cand = x - g / h
        cv = parts(cand)[0]
        if cv < val * (1 - 1e-12):  # tolerate rounding on the flat top
            break
        x, val = cand, cv
    return x


def periodogram_ml_tone(z, pad: int = 8) -> float:
    """Angular frequency (rad/sample, in [0, 2 pi)) maximizing the periodogram of ``z``."""
    z = np.asarray(z, dtype=complex)
    N = z.size
    if N < 2:
        raise ValueError("need at least two samples")
    if not np.any(z):
        raise ValueError("periodogram of an all-zero sequence has no peak")
    G = pad * N
    mag = np.abs(np.fft.fft(z, G))
    w0 = TWO_PI * np.argmax(mag) / G
    n = np.arange(N)

    def mag(w):
        return np.abs(np.dot(z, np.exp(-1j * w * n)))

    w = _refine_max(mag, w0, TWO_PI / G, 1e-10 * TWO_PI / G)
    w = _newton_peak(z, n, w)
    return float(np.mod(w, TWO_PI))


def ml_phase(z, geom: ArrayGeometry, grid: int = 4096) -> float:
    """Spatial phase in [-pi, pi) maximizing ``|a(phi)^H z|``."""
    z = np.asarray(z, dtype=complex)
    if z.size != geom.M:
        raise ValueError(f"vector length {z.size} does not match M={geom.M}")
    if not np.any(z):
        raise ValueError("ML phase of an all-zero vector is undefined")
    phis = -np.pi + TWO_PI * np.arange(grid) / grid
    vals = np.abs(steering_matrix(geom, phis).conj().T @ z)
    p0 = phis[np.argmax(vals)]
    pos = geom.positions

    def mag(p):
        return np.abs(np.dot(np.exp(-1j * p * pos), z))

    p = _refine_max(mag, p0, TWO_PI / grid, 1e-12)
    p = _newton_peak(z, pos, p)
    return float(np.mod(p + np.pi, TWO_PI) - np.pi)


def fold_frequency(f: float, f_N: float, L: int) -> tuple[int, float]:
    """Split ``f`` into its 1-based sub-band index and in-band offset."""
    f_sub = f_N / L
    omega = int(np.floor(f / f_sub)) + 1
    return omega, f - (omega - 1) * f_sub


def unfold_frequency(omega: int, fbar: float, f_N: float, L: int) -> float:
    f_sub = f_N / L
    if not 1 <= omega <= L:
        raise ValueError(f"coset index {omega} outside 1..{L}")
    if not 0 <= fbar < f_sub:
        raise ValueError(f"in-band frequency {fbar} outside [0, {f_sub})")
    return (omega - 1) * f_sub + fbar


def theta_from_phase(phi: float, f: float, f_N: float, d: float = 1.0) -> tuple[float, bool]:
    """Invert the spatial-phase relation. Returns ``(theta, clamped)``."""
    if f <= 0:
        raise ValueError("DOA is unobservable at zero frequency")
    s = phi * f_N / (np.pi * d * f)
    clamped = abs(s) > 1
    return float(np.arcsin(np.clip(s, -1.0, 1.0))), bool(clamped)


def _band_kernel(nu, N: int, T: int) -> np.ndarray:
    """Unitary T-point DFT of ``exp(j 2 pi nu n / T)`` at bins 0..N-1, one row per ``nu``."""
    x = np.atleast_1d(nu)[:, None] - np.arange(N)[None, :]
    return np.sqrt(T) * np.exp(1j * np.pi * x * (T - 1) / T) * np.sinc(x) / np.sinc(x / T)


def _band_fit(spectrum, nu, T):
    H = _band_kernel(nu, spectrum.size, T)
    num = np.abs(H.conj() @ spectrum) ** 2
    return num / np.sum(np.abs(H) ** 2, axis=1)


def fbar_from_spectrum(spectrum, f_sub: float, L: int, pad: int = 8) -> float:
    """In-band frequency of a sub-band spectrum over the N bins of F.

    The bins are the in-band part of a T = N L point Nyquist-grid DFT. The tone
    is fitted by ML on those bins: the periodogram of the baseband record is
    normalized by the in-band energy of a unit tone, which removes the pull
    that band truncation exerts on tones near the band edges.
    """
    spectrum = np.asarray(spectrum, dtype=complex)
    N = spectrum.size
    if not np.any(spectrum):
        raise ValueError("all-zero spectrum has no tone")
    T = N * L
    grid = np.arange(pad * N) / pad
    nu0 = grid[np.argmax(_band_fit(spectrum, grid, T))]
    nu = _refine_max(lambda v: _band_fit(spectrum, v, T)[0], nu0, 1.0 / pad, 1e-10 / pad)
    nu = min(max(nu, 0.0), np.nextafter(N, 0))
    return float(nu / N * f_sub)


def finalize_sources(phis, omegas, fbars, f_N: float, L: int, d: float) -> list[SourceEstimate]:
    """Build per-source estimates (unfold frequency, convert DOA), sorted by f."""
    out = []
    for phi, om, fb in zip(phis, omegas, fbars):
        f = unfold_frequency(int(om), float(fb), f_N, L)
        if f > 0:
            theta, clamped = theta_from_phase(phi, f, f_N, d)
        else:
            theta, clamped = float("nan"), True
        out.append(SourceEstimate(float(phi), int(om), float(fb), f, theta, clamped))
    return sorted(out, key=lambda s: s.f)


def _coset_times(pat, N: int) -> np.ndarray:
    """P x N Nyquist-grid sample index ``n L + c_p`` of every coset sample."""
    return np.arange(N)[None, :] * pat.L + np.asarray(pat.cosets)[:, None]


def _fit_tone(r, geom, times, T, phi, f, lo, hi, f_N, pad=4, iters=20):
    """Alternate the frequency and phase ML steps for one cisoid in ``r`` (M x P x N)."""
    pos = geom.positions
    for _ in range(iters):
        u = np.einsum("m,mpn->pn", np.exp(-1j * phi * pos), r)
        seq = np.zeros(T, dtype=complex)
        seq[times.ravel()] = u.ravel()
        G = pad * T
        power = np.abs(np.fft.fft(seq, G))
        grid = np.arange(G) * f_N / G
        inside = (grid >= lo) & (grid <= hi)
        f0 = grid[inside][np.argmax(power[inside])]

        def mag(fv):
            return np.abs(np.sum(u * np.exp(-2j * np.pi * fv / f_N * times)))

        half = f_N / G
        f_new = _refine_max(mag, f0, half, 1e-10 * half)
        f_new = min(max(f_new, lo), hi)
        z = np.einsum("mpn,pn->m", r, np.exp(-2j * np.pi * f_new / f_N * times))
        phi_new = ml_phase(z, geom)
        done = abs(phi_new - phi) < 1e-12 and abs(f_new - f) < 1e-9 * half
        phi, f = phi_new, f_new
        if done:
            break
    z = np.einsum("mpn,pn->m", r, np.exp(-2j * np.pi * f / f_N * times))
    amp = np.dot(np.exp(-1j * phi * pos), z) / (geom.M * times.size)
    return phi, f, amp


def polish_sources(snaps: SnapshotSet, B: np.ndarray, geom: ArrayGeometry, phis, freqs,
                   omegas=None, sweeps: int = 3, margin_bins: float = 2.0):
    """Cyclic ML refinement of ``(phi, f)`` under the exact finite-record tone model.

    The single-sub-band model drops the leakage an off-grid tone spreads into
    the other sub-bands, which biases the estimates and can hide a tone near a
    band edge. Each source is refitted in turn against the data minus the other
    fitted tones, alternating the frequency ML step (periodogram of the
    beamformed coset samples on the Nyquist grid) and the phase ML step. The
    frequency search covers the source's sub-band widened by ``margin_bins``
    Nyquist-grid bins on each side.
    """
    pat = pattern_from_matrix(B)
    M, P, N, L, f_N = snaps.M, snaps.P, snaps.N, snaps.L, snaps.f_N
    T = N * L
    times = _coset_times(pat, N)
    streams = np.fft.ifft(snaps.tensor / coset_phase(pat, N)[None], axis=2, norm="ortho")
    phis = np.array(phis, dtype=float)
    freqs = np.array(freqs, dtype=float)
    K = phis.size
    if omegas is None:
        omegas = [coset_index(f, f_N, L) for f in freqs]
    f_sub = f_N / L
    margin = margin_bins * f_N / T
    pos = geom.positions

    def tone(k):
        return amps[k] * np.exp(1j * phis[k] * pos)[:, None, None] * np.exp(
            2j * np.pi * freqs[k] / f_N * times)[None]

    amps = np.ones(K, dtype=complex)
    H = np.stack([tone(k).ravel() for k in range(K)], axis=1)
    amps = np.linalg.lstsq(H, streams.ravel(), rcond=None)[0]
    for _ in range(sweeps):
        for k in range(K):
            r = streams - sum((tone(j) for j in range(K) if j != k), np.zeros_like(streams))
            lo = max((omegas[k] - 1) * f_sub - margin, 0.0)
            hi = min(omegas[k] * f_sub + margin, np.nextafter(f_N, 0))
            phis[k], freqs[k], amps[k] = _fit_tone(r, geom, times, T, phis[k], freqs[k],
                                                   lo, hi, f_N)
    return np.mod(phis + np.pi, TWO_PI) - np.pi, freqs


def sources_from_tones(phis, freqs, f_N: float, L: int, d: float,
                       fallback_omega=None) -> list[SourceEstimate]:
    """Estimates from absolute frequencies; sub-bands follow from ``f``.

    When two refined tones land in one sub-band, ``fallback_omega`` is used
    with each frequency clipped into its sub-band.
    """
    omegas = [coset_index(f, f_N, L) for f in freqs]
    f_sub = f_N / L
    if len(set(omegas)) != len(omegas) and fallback_omega is not None:
        omegas = list(fallback_omega)
    fbars = [min(max(f - (om - 1) * f_sub, 0.0), np.nextafter(f_sub, 0))
             for f, om in zip(freqs, omegas)]
    return finalize_sources(phis, omegas, fbars, f_N, L, d)
