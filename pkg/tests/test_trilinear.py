import numpy as np
import pytest

from conftest import ensemble, snapshots
from subnyq.estimators import fbar_from_spectrum, ml_phase
from subnyq.frontend import SamplingPattern, modulation_matrix
from subnyq.trilinear import RalsOptions, cp_reconstruct, jdftd, match_cosets, rals_decompose


def cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def col_corr(x, y):
    return np.abs(np.vdot(x, y)) / (np.linalg.norm(x) * np.linalg.norm(y))


def test_exact_rank3_recovery():
    rng = np.random.default_rng(0)
    A, B, S = cn(rng, 8, 3), cn(rng, 8, 3), cn(rng, 3, 64)
    Y = cp_reconstruct(A, B, S)
    fac = rals_decompose(Y, 3, RalsOptions(lam=0.0, tol=1e-14, max_iters=2000))
    assert np.linalg.norm(Y - cp_reconstruct(fac.A, fac.B, fac.S)) / np.linalg.norm(Y) < 1e-6
    # columns match the truth up to permutation and scale
    for k in range(3):
        assert max(col_corr(fac.A[:, j], A[:, k]) for j in range(3)) > 1 - 1e-6


def test_rank1_factors_match():
    rng = np.random.default_rng(1)
    a, b, s = cn(rng, 5), cn(rng, 4), cn(rng, 20)
    fac = rals_decompose(np.einsum("m,p,n->mpn", a, b, s), 1)
    for est, true in ((fac.A[:, 0], a), (fac.B[:, 0], b), (fac.S[0], s)):
        assert col_corr(est, true) > 1 - 1e-9


def test_zero_tensor_is_degenerate():
    fac = rals_decompose(np.zeros((3, 3, 4)), 1)
    assert fac.degenerate and fac.final_residual == 0
    assert not np.any(fac.A) and not np.any(fac.S)


@pytest.mark.parametrize("init", ["svd", "random"])
def test_regularized_objective_non_increasing(init):
    rng = np.random.default_rng(2)
    Y = cp_reconstruct(cn(rng, 6, 3), cn(rng, 5, 3), cn(rng, 3, 30)) + 0.1 * cn(rng, 6, 5, 30)
    fac = rals_decompose(Y, 3, RalsOptions(init=init, lam=1e-2, restarts=1, tol=1e-12, max_iters=200))
    h = fac.objective_history
    assert np.all(np.diff(h) <= 1e-10 * h[:-1])


def test_kruskal_warning_and_option_checks():
    with pytest.warns(UserWarning, match="may not be unique"):
        rals_decompose(np.ones((2, 2, 2)), 3, RalsOptions(max_iters=5))
    with pytest.raises(ValueError):
        RalsOptions(tol=0)
    with pytest.raises(ValueError):
        RalsOptions(lam=-1)
    with pytest.raises(ValueError):
        RalsOptions(init="nope")
    with pytest.raises(ValueError):
        rals_decompose(np.ones((2, 2)), 1)


def test_deterministic_given_seed():
    rng = np.random.default_rng(3)
    Y = cn(rng, 4, 4, 8)
    a = rals_decompose(Y, 2, RalsOptions(init="random", seed=9, max_iters=50))
    b = rals_decompose(Y, 2, RalsOptions(init="random", seed=9, max_iters=50))
    np.testing.assert_array_equal(a.A, b.A)


def test_match_cosets_examples():
    B = modulation_matrix(SamplingPattern.first(8, 6))
    assert match_cosets(B[:, [2, 0]], B) == [3, 1]
    assert match_cosets(5 * np.exp(1j * np.pi / 7) * B[:, [1]], B) == [2]
    with pytest.raises(ValueError):
        match_cosets(np.zeros((6, 1)), B)


def test_match_cosets_full_rate_runner_up_is_zero():
    B = modulation_matrix(SamplingPattern.first(8, 8))
    rng = np.random.default_rng(4)
    eps = cn(rng, 8)
    bt = B[:, 4] + 0.01 * eps / np.linalg.norm(eps)
    assert match_cosets(bt[:, None], B) == [5]
    scores = np.abs(B.conj().T @ B[:, 4])
    assert np.sort(scores)[-2] < 1e-12


def test_match_cosets_tie_goes_to_smaller_index():
    # with C=[0,2] and L=4, columns l and l+2 coincide
    B = modulation_matrix(SamplingPattern(4, (0, 2)))
    assert match_cosets(B[:, [2]], B) == [1]


def test_jdftd_noiseless_two_sources(ula8):
    ens = ensemble([-15, 25], [2.2e9, 6.9e9])
    sn, B = snapshots(ens, ula8)
    order = np.argsort(ens.freqs)
    for refine, tol_phi, tol_f in ((False, 1e-2, 1e-3), (True, 1e-6, 1e-6)):
        res = jdftd(sn, B, ula8, 2, refine=refine)
        assert res.omega == [ens.omega[k] for k in order]
        assert np.max(np.abs(res.phis - ens.phis()[order])) < tol_phi
        assert np.max(np.abs(res.freqs - ens.freqs[order])) < tol_f * sn.f_sub
        assert res.flags["converged"] and res.algorithm == "jdftd"


def test_jdftd_broadside(ula8):
    sn, B = snapshots(ensemble([0.0], [3.3e9]), ula8)
    res = jdftd(sn, B, ula8, 1)
    assert res.phis[0] == pytest.approx(0.0, abs=1e-6)


def test_pipeline_steps_are_scale_invariant(ula8):
    ens = ensemble([-15, 25], [2.2e9, 6.9e9])
    sn, B = snapshots(ens, ula8)
    fac = rals_decompose(sn.tensor, 2)
    c = np.array([3 - 2j, -0.5j])
    d = np.array([0.1, 7 + 1j])
    A2, B2 = fac.A * c, fac.B * d
    S2 = fac.S / (c * d)[:, None]
    for k in range(2):
        assert ml_phase(A2[:, k], ula8) == pytest.approx(ml_phase(fac.A[:, k], ula8), abs=1e-9)
        assert fbar_from_spectrum(S2[k], sn.f_sub, 8) == pytest.approx(
            fbar_from_spectrum(fac.S[k], sn.f_sub, 8), abs=1e-6 * sn.f_sub)
    assert match_cosets(B2, B) == match_cosets(fac.B, B)
