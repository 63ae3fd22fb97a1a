import numpy as np
import pytest
from scipy import signal

from parcelforge.core_data import BoldDataset, VolumeGrid
from parcelforge.errors import ConvergenceError, FormatError, InvariantError, ParameterError
from parcelforge.ica import ICDecomposition, export_ics, fastica, import_ics


def mixed_sources(seed=0, V=50, T=200):
    t = np.linspace(0, 8, T)
    sources = np.stack([signal.square(2 * np.pi * t), signal.sawtooth(2 * np.pi * 1.7 * t)])
    A = np.random.default_rng(seed).normal(size=(V, 2))
    grid = VolumeGrid.full((V, 1, 1))
    return BoldDataset(grid, A @ sources), sources


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_recovers_square_and_sawtooth(seed):
    ds, sources = mixed_sources(seed)
    ics = fastica(ds, n_components=2, rng_seed=seed)
    corr = np.abs(np.corrcoef(ics.timecourses.T, sources)[:2, 2:])
    match = corr.argmax(axis=1)
    assert sorted(match.tolist()) == [0, 1]
    assert corr.max(axis=1).min() >= 0.99


def test_timecourses_are_unit_variance_and_uncorrelated():
    ds, _ = mixed_sources()
    tc = fastica(ds, n_components=2).timecourses
    np.testing.assert_allclose(np.cov(tc.T), np.eye(2), atol=1e-8)


def test_n_components_equal_T_rejected():
    grid = VolumeGrid.full((20, 1, 1))
    ds = BoldDataset(grid, np.random.default_rng(0).normal(size=(20, 8)))
    with pytest.raises(ParameterError):
        fastica(ds, n_components=8)


def test_deterministic():
    ds, _ = mixed_sources(3)
    a = fastica(ds, 2, rng_seed=11)
    b = fastica(ds, 2, rng_seed=11)
    np.testing.assert_array_equal(a.timecourses, b.timecourses)
    np.testing.assert_array_equal(a.maps, b.maps)


def test_convergence_error_carries_iterations():
    ds = BoldDataset(VolumeGrid.full((30, 1, 1)), np.random.default_rng(0).normal(size=(30, 40)))
    with pytest.raises(ConvergenceError) as e:
        fastica(ds, n_components=5, max_iter=1)
    assert e.value.iterations == 1


def test_export_import_roundtrip(tmp_path):
    ds, _ = mixed_sources()
    ics = fastica(ds, 2, subject_id=4)
    tc, maps = export_ics(ics, tmp_path)
    back = import_ics(tc, maps, 4, n_voxels=50)
    np.testing.assert_array_equal(back.timecourses, ics.timecourses)
    np.testing.assert_array_equal(back.maps, ics.maps)


def _write(tmp_path, tc, maps):
    np.savetxt(tmp_path / "tc.csv", tc, delimiter=",")
    np.asarray(maps, "<f8").tofile(tmp_path / "maps.f64")
    return tmp_path / "tc.csv", tmp_path / "maps.f64"


def test_import_small(tmp_path):
    tc = np.array([[1, 0], [2, 1], [0, 0], [1, 3.0]])
    maps = np.arange(10.0).reshape(2, 5)
    ics = import_ics(*_write(tmp_path, tc, maps), subject_id=0)
    np.testing.assert_array_equal(ics.timecourses, tc)
    np.testing.assert_array_equal(ics.maps, maps)


def test_import_shape_mismatch(tmp_path):
    tc = np.random.default_rng(0).normal(size=(6, 3))
    paths = _write(tmp_path, tc, np.ones((2, 5)))
    with pytest.raises(FormatError):
        import_ics(*paths, subject_id=0)
    with pytest.raises(FormatError):
        import_ics(*paths, subject_id=0, n_voxels=5)


def test_import_constant_column(tmp_path):
    tc = np.array([[1, 5], [2, 5], [0, 5], [1, 5.0]])
    with pytest.raises(InvariantError):
        import_ics(*_write(tmp_path, tc, np.ones((2, 5))), subject_id=0)


def test_decomposition_rejects_too_many_components():
    with pytest.raises(InvariantError):
        ICDecomposition(0, np.random.default_rng(0).normal(size=(3, 4)), np.ones((4, 10)))
