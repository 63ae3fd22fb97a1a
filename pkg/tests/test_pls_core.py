import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parcelforge.core_data import BoldDataset, VolumeGrid, center_rows
from parcelforge.errors import DegenerateInputError, PLSRankError, PolicyError, SeedIndexError, ShapeError
from parcelforge.pls_core import (PLSModel, TruncationPolicy, build_seed_matrix, covariance_features,
                                  dominant_singular_vector, kept_components, pca_decompose, pls_fit, truncate,
                                  whiten_scores)
from parcelforge.seeds import SeedSet
from parcelforge.synthetic import SyntheticCohortSpec, generate_synthetic_cohort


def cos(a, b):
    return abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))


def test_pca_rank_one():
    Xc = center_rows(np.outer(np.arange(1.0, 6.0), np.sin(np.arange(8.0))))
    v = pca_decompose(Xc).variances
    assert np.sum(v > 1e-10 * v[0]) == 1


def test_pca_reconstruction(rng):
    Xc = center_rows(rng.normal(size=(30, 50)))
    m = pca_decompose(Xc)
    assert np.abs(m.P @ m.scores - Xc).max() <= 1e-9
    assert np.all(np.diff(m.variances) <= 1e-12)


def test_pca_rank_zero():
    with pytest.raises(DegenerateInputError):
        pca_decompose(np.zeros((3, 4)))


def test_truncation_identity_and_window(rng):
    m = pca_decompose(center_rows(rng.normal(size=(10, 6))))
    np.testing.assert_array_equal(truncate(m, TruncationPolicy(0, 0, 0)), m.scores)
    m5 = pca_decompose(rng.normal(size=(10, 5)))
    assert m5.n_components == 5
    assert kept_components(m5, TruncationPolicy(1, 2, 0)).tolist() == [1, 2]
    with pytest.raises(PolicyError):
        truncate(m, TruncationPolicy(6, 0, 0))


def test_leading_pc_is_drift():
    coh = generate_synthetic_cohort(SyntheticCohortSpec(rng_seed=4, drift_amplitude=20.0))
    m = pca_decompose(center_rows(coh.datasets[0].X))
    dropped = m.scores[0]
    drift = coh.nuisance[0][0]
    assert abs(np.corrcoef(dropped, drift)[0, 1]) > 0.9
    kept = kept_components(m, TruncationPolicy(1, 0, 0))
    assert 0 not in kept


def test_dominant_singular_vector(rng):
    M = rng.normal(size=(12, 3))
    np.testing.assert_allclose(cos(dominant_singular_vector(M), np.linalg.svd(M)[0][:, 0]), 1, atol=1e-10)
    M = rng.normal(size=(3, 12))
    np.testing.assert_allclose(cos(dominant_singular_vector(M), np.linalg.svd(M)[0][:, 0]), 1, atol=1e-10)


@pytest.mark.parametrize("seed", range(3))
def test_first_pair_is_svd_of_cross_covariance(seed):
    rng = np.random.default_rng(seed)
    S = rng.normal(size=(20, 200))
    D = rng.normal(size=(200, 3))
    m = pls_fit(S, D, 1)
    U, _, Vt = np.linalg.svd(S @ (D - D.mean(0)))
    assert cos(m.W[:, 0], U[:, 0]) >= 1 - 1e-8
    assert cos(m.C_w[:, 0], Vt[0]) >= 1 - 1e-8


@pytest.mark.parametrize("K", [1, 2, 3, 5])
def test_latents_orthonormal(rng, K):
    m = pls_fit(rng.normal(size=(20, 200)), rng.normal(size=(200, 3)), K)
    assert np.abs(m.T_pls.T @ m.T_pls - np.eye(K)).max() <= 1e-8
    np.testing.assert_allclose(np.linalg.norm(m.W, axis=0), 1, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(m.C_w, axis=0), 1, atol=1e-12)


def test_covariance_maximal_over_probes(rng):
    S = rng.normal(size=(15, 80))
    D = rng.normal(size=(80, 4))
    Dc = D - D.mean(0)
    m = pls_fit(S, D, 1)
    E = S.T
    best = (E @ m.W[:, 0]) @ (Dc @ m.C_w[:, 0])
    for _ in range(200):
        w = rng.normal(size=15)
        c = rng.normal(size=4)
        assert (E @ (w / np.linalg.norm(w))) @ (Dc @ (c / np.linalg.norm(c))) <= best + 1e-10


def test_pc1_dependent_gives_pc1_latent(rng):
    m = pca_decompose(center_rows(rng.normal(size=(40, 30))))
    fit = pls_fit(m.scores, m.scores[0], 1)
    assert cos(fit.T_pls[:, 0], m.scores[0]) >= 1 - 1e-8


def test_projection_oracle_on_whitened_scores(rng):
    scores = pca_decompose(center_rows(rng.normal(size=(40, 30)))).scores[2:14]
    y = rng.normal(size=30)
    t = pls_fit(whiten_scores(scores), y, 1).T_pls[:, 0]
    yc = y - y.mean()
    coef, *_ = np.linalg.lstsq(scores.T, yc, rcond=None)
    proj = scores.T @ coef
    assert cos(t, proj) >= 1 - 1e-8
    assert t @ proj > 0


def test_whiten_scores_of_pca_rows(rng):
    scores = pca_decompose(center_rows(rng.normal(size=(20, 15)))).scores[:6]
    Wt = whiten_scores(scores)
    np.testing.assert_allclose(np.abs(Wt), np.abs(scores / np.linalg.norm(scores, axis=1, keepdims=True)),
                               atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3))
def test_rotation_invariance(seed, K):
    rng = np.random.default_rng(seed)
    S = rng.normal(size=(8, 40))
    D = rng.normal(size=(40, 2))
    Q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
    a = pls_fit(S, D, K).T_pls
    b = pls_fit(Q @ S, D, K).T_pls
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_reconstruction(rng):
    S = rng.normal(size=(10, 50))
    m = pls_fit(S, rng.normal(size=(50, 2)), 3)
    E1 = S.T
    np.testing.assert_allclose(m.T_pls @ (m.T_pls.T @ E1) + m.residual, E1, atol=1e-10)


def test_rank_error_returns_partial(rng):
    S = np.vstack([rng.normal(size=(1, 30)), np.zeros((3, 30))])
    with pytest.raises(PLSRankError) as e:
        pls_fit(S, rng.normal(size=(30, 2)), 3)
    assert e.value.step == 2
    assert e.value.partial.partial and e.value.partial.K == 1


def test_features():
    T = 10
    t = np.zeros(T)
    t[:5], t[5:] = 1, -1
    t /= np.linalg.norm(t)
    other = np.tile([1.0, -1.0], 5) / np.sqrt(T)
    model = PLSModel(np.column_stack([t, other]), np.eye(2), np.ones(2), np.eye(2), np.zeros((T, 2)))
    X0 = np.vstack([t, np.zeros(T)])
    ff = covariance_features(X0, model)
    np.testing.assert_allclose(ff.R_feat, [[1, t @ other], [0, 0]], atol=1e-8)
    assert ff.K == 2
    with pytest.raises(ShapeError):
        covariance_features(np.zeros((2, T + 1)), model)


def test_features_bounded(rng):
    from parcelforge.core_data import unit_normalize_rows
    X0, _ = unit_normalize_rows(center_rows(rng.normal(size=(50, 40))))
    m = pls_fit(rng.normal(size=(10, 40)), rng.normal(size=(40, 2)), 3)
    assert np.abs(covariance_features(X0, m).R_feat).max() <= 1 + 1e-12


def test_seed_matrix(rng):
    grid = VolumeGrid.full((5, 1, 1))
    ds = BoldDataset(grid, rng.normal(size=(5, 12)))
    a = SeedSet(np.array([1, 3]), np.zeros(2), "a", 1.0)
    D, dup = build_seed_matrix(ds, [a])
    np.testing.assert_allclose(D, center_rows(ds.X[[1, 3]]).T)
    assert dup == 0 and np.abs(D.mean(axis=0)).max() < 1e-12
    b = SeedSet(np.array([3, 4]), np.zeros(2), "b", 1.0)
    D2, dup2 = build_seed_matrix(ds, [a, b])
    assert D2.shape == (12, 3) and dup2 == 1
    with pytest.raises(SeedIndexError):
        build_seed_matrix(ds, [SeedSet(np.array([5]), np.zeros(1), "c", 1.0)])
