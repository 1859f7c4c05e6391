import numpy as np
import pytest

from subnyq.frontend import SamplingPattern, modulation_matrix, observe
from subnyq.signal_model import ArrayGeometry, Source, SourceEnsemble, synthesize_nyquist

F_N = 10e9


def ensemble(thetas_deg, freqs, L=8, f_N=F_N):
    return SourceEnsemble(tuple(Source(np.deg2rad(t), f) for t, f in zip(thetas_deg, freqs)), f_N, L)


def on_grid(sub_band, bin_idx, T=512, L=8, f_N=F_N):
    """Frequency of Nyquist-grid DFT bin ``bin_idx`` inside 1-based ``sub_band``."""
    N = T // L
    return ((sub_band - 1) * N + bin_idx) * f_N / T


def snapshots(ens, geom, T=512, snr_db=np.inf, seed=0, pattern=None):
    pat = pattern or SamplingPattern.first(ens.L, ens.L)
    return observe(synthesize_nyquist(ens, geom, T, snr_db, seed), pat), modulation_matrix(pat)


@pytest.fixture
def ula8():
    return ArrayGeometry.ula(8)
