import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import F_N, ensemble, on_grid
from subnyq.frontend import (SamplingPattern, SnapshotSet, assemble_snapshots, khatri_rao, modulation_matrix,
                             multicoset_sample, observe, pattern_from_matrix, reception_matrix, subband_spectra)
from subnyq.signal_model import ArrayGeometry, steering_matrix, synthesize_nyquist


@st.composite
def patterns(draw, max_L=24):
    L = draw(st.integers(1, max_L))
    P = draw(st.integers(1, L))
    cosets = draw(st.permutations(range(L)))[:P]
    return SamplingPattern(L, tuple(sorted(cosets)))


def test_pattern_validation():
    with pytest.raises(ValueError):
        SamplingPattern(4, (0, 4))
    with pytest.raises(ValueError):
        SamplingPattern(4, (2, 1))
    with pytest.raises(ValueError):
        SamplingPattern(4, ())
    with pytest.warns(UserWarning, match="P=1"):
        SamplingPattern(4, (1,))
    assert SamplingPattern.first(8, 3).cosets == (0, 1, 2)
    assert SamplingPattern.parse("0,3,7", 8, 3).cosets == (0, 3, 7)
    assert SamplingPattern(20, tuple(range(5))).average_rate_factor == 0.25
    with pytest.raises(ValueError):
        SamplingPattern.parse("0,3", 8, 3)


def test_random_pattern_is_seeded():
    a = SamplingPattern.random(20, 6, np.random.default_rng(5))
    b = SamplingPattern.random(20, 6, np.random.default_rng(5))
    assert a == b and a.P == 6


def test_modulation_matrix_l2():
    B = modulation_matrix(SamplingPattern(2, (0, 1)))
    np.testing.assert_allclose(B, np.array([[1, 1], [-1, 1]]) / np.sqrt(2), atol=1e-15)


def test_modulation_matrix_unitary_cases():
    B = modulation_matrix(SamplingPattern.first(4, 4))
    np.testing.assert_allclose(B.conj().T @ B, np.eye(4), atol=1e-12)
    B = modulation_matrix(SamplingPattern(4, (0, 2)))
    np.testing.assert_allclose(B @ B.conj().T, np.eye(2), atol=1e-12)


@given(patterns())
def test_rows_orthonormal(pat):
    B = modulation_matrix(pat)
    np.testing.assert_allclose(B @ B.conj().T, np.eye(pat.P), atol=1e-12)


@given(patterns())
def test_pattern_from_matrix_round_trip(pat):
    assert pattern_from_matrix(modulation_matrix(pat)) == pat


def test_multicoset_sample_examples():
    x = np.arange(6, dtype=complex)[None]
    out = multicoset_sample(x, SamplingPattern(3, (0, 2)))
    np.testing.assert_array_equal(out[0], [[0, 3], [2, 5]])
    np.testing.assert_array_equal(multicoset_sample(x, SamplingPattern(1, (0,)))[0, 0], x[0])
    with pytest.raises(ValueError):
        multicoset_sample(np.zeros((1, 7)), SamplingPattern(3, (0,)))


def test_coset_streams_keep_noise_variance():
    rng = np.random.default_rng(0)
    L = 4
    x = (rng.standard_normal((2, 4096 * L)) + 1j * rng.standard_normal((2, 4096 * L))) * np.sqrt(0.5 * 0.3)
    out = multicoset_sample(x, SamplingPattern(L, (0, 3)))
    np.testing.assert_allclose(np.mean(np.abs(out) ** 2, axis=2), 0.3, rtol=0.05)


def test_zero_streams_give_zero_snapshots():
    pat = SamplingPattern.first(4, 2)
    sn = assemble_snapshots(np.zeros((3, 2, 16), complex), pat, F_N)
    assert sn.Y.shape == (6, 16) and not np.any(sn.Y)
    assert sn.N == 16 and sn.f_sub == F_N / 4 and sn.bin_width == F_N / 64


def test_on_grid_tone_energy_concentrated(ula8):
    ens = ensemble([10], [on_grid(3, 17)])
    sn = observe(synthesize_nyquist(ens, ula8, 512, np.inf, 0), SamplingPattern.first(8, 8))
    e = np.sum(np.abs(sn.Y) ** 2, axis=0)
    assert np.sort(e)[-2:].sum() >= 0.99 * e.sum()


@settings(max_examples=20)
@given(patterns(max_L=8), st.integers(0, 2**32 - 1))
def test_parseval(pat, seed):
    rng = np.random.default_rng(seed)
    streams = rng.standard_normal((3, pat.P, 32)) + 1j * rng.standard_normal((3, pat.P, 32))
    sn = assemble_snapshots(streams, pat, F_N)
    assert np.linalg.norm(sn.Y) ** 2 == pytest.approx(np.linalg.norm(streams) ** 2, rel=1e-10)


def test_channel_order_is_sensor_major():
    pat = SamplingPattern.first(4, 3)
    streams = np.zeros((2, 3, 8), complex)
    streams[1, 2, 0] = 1.0
    sn = assemble_snapshots(streams, pat, F_N)
    assert np.flatnonzero(np.linalg.norm(sn.Y, axis=1)).tolist() == [1 * 3 + 2]


@settings(max_examples=20)
@given(patterns(max_L=10), st.integers(0, 2**32 - 1))
def test_snapshots_equal_b_times_subband_spectra(pat, seed):
    # Y_m(q) = B Xbar_m(q) exactly, for arbitrary data
    rng = np.random.default_rng(seed)
    N, M = 16, 2
    x = rng.standard_normal((M, N * pat.L)) + 1j * rng.standard_normal((M, N * pat.L))
    sn = assemble_snapshots(multicoset_sample(x, pat), pat, F_N)
    Xbar = subband_spectra(x, pat.L)  # M x L x N
    expect = np.einsum("pl,mln->mpn", modulation_matrix(pat), Xbar).reshape(M * pat.P, N)
    np.testing.assert_allclose(sn.Y, expect, atol=1e-12)


def test_reception_support_and_columns():
    B = modulation_matrix(SamplingPattern.first(20, 20))
    geom = ArrayGeometry.ula(3)
    rm = reception_matrix(geom, [0.1, 0.4], B, [7, 5])
    assert rm.support == [7, 25]
    np.testing.assert_allclose(rm.G_S[:, 1], np.kron(steering_matrix(geom, [0.4])[:, 0], B[:, 4]))
    with pytest.raises(ValueError, match="duplicate"):
        reception_matrix(geom, [0.1, 0.4], B, [3, 3])
    with pytest.raises(ValueError):
        reception_matrix(geom, [0.1], B, [21])


def test_reception_column_hand_oracle():
    B = modulation_matrix(SamplingPattern.first(2, 2))
    col = reception_matrix(ArrayGeometry.ula(2), [0.0], B, [1]).G_S[:, 0]
    # B column 1 is (1/sqrt2)[1, -1]; a(0) = [1, 1]
    np.testing.assert_allclose(col, np.array([1, -1, 1, -1]) / np.sqrt(2), atol=1e-15)


@settings(max_examples=30)
@given(patterns(max_L=12), st.integers(0, 2**32 - 1))
def test_gram_identity(pat, seed):
    rng = np.random.default_rng(seed)
    K = min(3, pat.L)
    omega = (rng.permutation(pat.L)[:K] + 1).tolist()
    geom = ArrayGeometry.ula(5)
    phis = rng.uniform(-np.pi, np.pi, K)
    B = modulation_matrix(pat)
    G = reception_matrix(geom, phis, B, omega).G_S
    A, Bo = steering_matrix(geom, phis), B[:, [l - 1 for l in omega]]
    np.testing.assert_allclose(G.conj().T @ G, (A.conj().T @ A) * (Bo.conj().T @ Bo), atol=1e-12)


def test_khatri_rao_columns():
    rng = np.random.default_rng(1)
    A, B = rng.standard_normal((3, 2)), rng.standard_normal((4, 2))
    KR = khatri_rao(A, B)
    for k in range(2):
        np.testing.assert_allclose(KR[:, k], np.kron(A[:, k], B[:, k]))


@pytest.mark.parametrize("cosets", [(0, 1, 2, 3, 4, 5, 6, 7), (0, 2, 3, 6)])
def test_model_consistency_on_grid(ula8, cosets):
    # on-grid tones occupy one sub-band each, so Y = G_S Sbar exactly
    pat = SamplingPattern(8, cosets)
    ens = ensemble([-20, 5, 30], [on_grid(2, 9), on_grid(4, 40), on_grid(7, 63)])
    rec = synthesize_nyquist(ens, ula8, 512, np.inf, 0)
    sn = observe(rec, pat)
    rm = reception_matrix(ula8, ens.phis(), modulation_matrix(pat), ens.omega)
    Xs = subband_spectra(rec.tones, 8)
    S = np.stack([Xs[k, l - 1] for k, l in enumerate(ens.omega)])
    assert np.linalg.norm(sn.Y - rm.G_S @ S) / np.linalg.norm(sn.Y) < 1e-8


def test_snapshotset_tensor_view():
    Y = np.arange(2 * 3 * 4).reshape(6, 4).astype(complex)
    sn = SnapshotSet(Y, 2, 3, 4, F_N)
    assert sn.tensor[1, 2, 3] == Y[1 * 3 + 2, 3]
