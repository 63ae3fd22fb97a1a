import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parcelforge.core_data import VolumeGrid
from parcelforge.errors import ParameterError, ShapeError
from parcelforge.evaluate import adjusted_rand
from parcelforge.parcellate import (build_graph, canonical_labels, cmeans, geodesics, graph_from_edges,
                                    local_distance, parcellate_pipeline, spatial_baseline, spectral_embed)
from parcelforge.pls_core import FeatureField


def test_local_distance(rng):
    assert local_distance([1, 2], [1, 2]) == 0
    assert local_distance([1, 0], [0, 1]) == pytest.approx(np.sqrt(2))
    a, b = rng.normal(size=7), rng.normal(size=7)
    assert local_distance(a, b) == pytest.approx(np.sqrt(sum((x - y) ** 2 for x, y in zip(a, b))), abs=1e-12)
    with pytest.raises(ShapeError):
        local_distance([1, 2], [1, 2, 3])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3),
       st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3),
       st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3))
def test_local_distance_metric(a, b, c):
    dab, dbc, dac = local_distance(a, b), local_distance(b, c), local_distance(a, c)
    assert dab == local_distance(b, a) and dab >= 0
    assert dac <= dab + dbc + 1e-9


def test_edge_counts():
    assert build_graph(VolumeGrid.full((2, 1, 1)), np.zeros((2, 1))).n_edges == 1
    g = build_graph(VolumeGrid.full((3, 3, 1)), np.zeros((9, 1)))
    # enumerate face-adjacent pairs directly
    cells = list(itertools.product(range(3), range(3)))
    expected = sum(1 for a, b in itertools.combinations(cells, 2)
                   if abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1)
    assert g.n_edges == expected == 12
    assert np.all(g.edge_weights == 0)


def test_masked_graph_skips_holes():
    mask = np.ones((3, 1, 1), bool)
    mask[1] = False
    g = build_graph(VolumeGrid((3, 1, 1), mask), np.zeros((2, 2)))
    assert g.n_edges == 0


def test_graph_weights_are_feature_distances(rng):
    grid = VolumeGrid.full((3, 2, 2))
    R = rng.normal(size=(12, 3))
    g = build_graph(grid, FeatureField(R))
    for (a, b), w in zip(g.edges, g.edge_weights):
        assert w == pytest.approx(np.linalg.norm(R[a] - R[b]))
    assert np.all(g.edges[:, 0] < g.edges[:, 1])


def test_geodesic_path_and_cycle():
    D = geodesics(graph_from_edges(3, [(0, 1), (1, 2)], [1, 2])).D
    assert D[0, 2] == 3
    cyc = geodesics(graph_from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)], [1, 1, 1, 10])).D
    # brute force over the two simple paths between 0 and 3
    assert cyc[0, 3] == min(10, 1 + 1 + 1) == 3


def random_weighted_grid(rng, dims=(4, 3, 2)):
    grid = VolumeGrid.full(dims)
    return grid, build_graph(grid, rng.normal(size=(grid.n_voxels, 2)))


def test_geodesic_metric_properties(rng):
    _, g = random_weighted_grid(rng)
    geo = geodesics(g)
    D = geo.D
    assert geo.connected
    np.testing.assert_array_equal(D, D.T)
    assert np.all(np.diag(D) == 0)
    assert np.all(D[:, :, None] <= D[:, None, :] + D.T[None, :, :] + 1e-9)


def test_geodesic_monotone_under_weight_increase(rng):
    _, g = random_weighted_grid(rng)
    heavier = graph_from_edges(g.n_nodes, g.edges, g.edge_weights + rng.random(g.n_edges))
    assert np.all(geodesics(heavier).D >= geodesics(g).D - 1e-12)


def test_disconnected_surrogate():
    geo = geodesics(graph_from_edges(4, [(0, 1), (2, 3)], [1.0, 2.0]))
    assert not geo.connected
    assert geo.D[0, 2] == geo.surrogate == 20.0
    assert len(set(geo.components.tolist())) == 2


def test_mds_collinear():
    x = np.array([0.0, 1.0, 3.0])
    D = np.abs(x[:, None] - x[None])
    y = spectral_embed(D, 1)[:, 0]
    np.testing.assert_allclose(np.abs(y[:, None] - y[None]), D, atol=1e-9)


def test_mds_zero_and_bounds():
    assert np.all(spectral_embed(np.zeros((4, 4)), 2) == 0)
    with pytest.raises(ParameterError):
        spectral_embed(np.zeros((4, 4)), 4)


def test_mds_never_exceeds_distances(rng):
    pts = rng.normal(size=(30, 5))
    D = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    for dims in (1, 2, 3, 5):
        y = spectral_embed(D, dims)
        Dy = np.linalg.norm(y[:, None] - y[None], axis=-1)
        assert np.all(Dy <= D + 1e-6)


def test_mds_sign_convention(rng):
    pts = rng.normal(size=(10, 3))
    y = spectral_embed(np.linalg.norm(pts[:, None] - pts[None], axis=-1), 3)
    idx = np.argmax(np.abs(y), axis=0)
    assert np.all(y[idx, range(3)] > 0)


def test_cmeans_blobs(rng):
    a = rng.normal(size=(30, 2)) * 0.1
    b = rng.normal(size=(30, 2)) * 0.1 + 50
    parc = cmeans(np.vstack([a, b]), 2, rng_seed=3)
    assert adjusted_rand(parc.labels, [0] * 30 + [1] * 30) == 1.0


def test_cmeans_K_equals_V(rng):
    x = rng.normal(size=(12, 3))
    parc = cmeans(x, 12)
    assert sorted(parc.labels.tolist()) == list(range(12))
    assert parc.wcss == 0
    with pytest.raises(ParameterError):
        cmeans(x, 13)


def test_cmeans_deterministic(rng):
    x = rng.normal(size=(100, 3))
    np.testing.assert_array_equal(cmeans(x, 5, rng_seed=9).labels, cmeans(x, 5, rng_seed=9).labels)


def test_canonical_labels():
    assert canonical_labels(np.array([4, 4, 1, 7, 1])).tolist() == [0, 0, 1, 2, 1]


def stripes(rng, noise=0.05):
    grid = VolumeGrid.full((8, 6, 2))
    truth = (grid.coords()[:, 0] >= 4).astype(int) + 2 * (grid.coords()[:, 1] >= 3)
    feats = np.eye(4)[truth] + noise * rng.normal(size=(grid.n_voxels, 4))
    return grid, feats, truth


def test_pipeline_recovers_blocks(rng):
    grid, feats, truth = stripes(rng)
    parc = parcellate_pipeline(feats, grid, 4, dims=10, rng_seed=0)
    assert adjusted_rand(parc.labels, truth) == 1.0
    assert sorted(set(parc.labels.tolist())) == [0, 1, 2, 3]


def test_pipeline_single_parcel(rng):
    grid, feats, _ = stripes(rng)
    assert set(parcellate_pipeline(feats, grid, 1).labels.tolist()) == {0}


def test_pipeline_row_permutation(rng):
    # The grid fixes row order, so permuting rows means permuting the voxels'
    # features; labels must follow the features back.
    grid, feats, truth = stripes(rng)
    base = parcellate_pipeline(feats, grid, 4, dims=10)
    perm = rng.permutation(grid.n_voxels)
    inv = np.argsort(perm)
    again = parcellate_pipeline(feats[perm][inv], grid, 4, dims=10)
    np.testing.assert_array_equal(again.labels, base.labels)


def test_pipeline_scale_invariance(rng):
    grid, feats, _ = stripes(rng, noise=0.3)
    a = parcellate_pipeline(feats, grid, 5, dims=10, rng_seed=2)
    b = parcellate_pipeline(4.0 * feats, grid, 5, dims=10, rng_seed=2)
    assert adjusted_rand(a.labels, b.labels) == 1.0


def test_spatial_baseline_ignores_features():
    grid = VolumeGrid.full((6, 2, 1))
    parc = spatial_baseline(grid, 2)
    assert parc.feature_provenance == "SC"
    assert adjusted_rand(parc.labels, (grid.coords()[:, 0] >= 3).astype(int)) == 1.0
