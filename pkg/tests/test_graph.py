import numpy as np
import pytest

from snl import graph
from snl.errors import (
    AffinityOverflowError,
    DegenerateVertexError,
    KernelDomainError,
    PreconditionError,
    ShapeError,
)
from snl.graph import AffinityMatrix, FeatureMap


def rand_affinity(rng, n, c=3):
    phi = rng.normal(0.0, 0.4, size=(n, c))
    psi = rng.normal(0.0, 0.4, size=(n, c))
    return graph.compute_affinity(phi, psi, "exp_dot")


def test_feature_map_grid_roundtrip():
    rng = np.random.default_rng(0)
    fm = FeatureMap(3, 4, 2, rng.normal(size=(12, 2)))
    back = FeatureMap.from_grid(fm.to_grid())
    assert np.array_equal(back.values, fm.values)
    assert fm.n_positions == 12


def test_feature_map_shape_check():
    with pytest.raises(ShapeError):
        FeatureMap(3, 4, 2, np.zeros((11, 2)))


def test_kernel_dot_matches_manual():
    rng = np.random.default_rng(1)
    phi = rng.normal(size=(5, 3))
    psi = rng.normal(size=(5, 3))
    assert np.allclose(graph.kernel_matrix(phi, psi, "dot"), phi @ psi.T, atol=1e-15)


def test_kernel_expdot_matches_manual():
    rng = np.random.default_rng(2)
    phi = rng.normal(size=(6, 2))
    psi = rng.normal(size=(6, 2))
    want = np.exp(phi @ psi.T / np.sqrt(2.0))
    assert np.allclose(graph.kernel_matrix(phi, psi, "exp_dot"), want, rtol=1e-14)


def test_kernel_expdot_overflow_guard():
    big = np.full((2, 1), 1.0e3)
    with pytest.raises(AffinityOverflowError):
        graph.kernel_matrix(big, big, "exp_dot")


def test_symmetrize_bit_exact():
    rng = np.random.default_rng(3)
    m = rand_affinity(rng, 7)
    sym = graph.symmetrize(m)
    assert np.array_equal(sym.values, sym.values.T)
    assert sym.symmetrized


def test_symmetrize_rejects_normalized():
    rng = np.random.default_rng(4)
    a = graph.normalize(rand_affinity(rng, 5), "random_walk")
    with pytest.raises(PreconditionError):
        graph.symmetrize(a)


def test_degrees_negative_kernel():
    m = AffinityMatrix(np.array([[1.0, -0.5], [0.2, 1.0]]), "dot")
    with pytest.raises(KernelDomainError):
        graph.degrees(m)


def test_degrees_degenerate_vertex():
    m = AffinityMatrix(np.array([[0.0, 0.0], [1.0, 1.0]]), "dot")
    with pytest.raises(DegenerateVertexError):
        graph.degrees(m)


def test_random_walk_rows_sum_to_one():
    rng = np.random.default_rng(5)
    a = graph.normalize(rand_affinity(rng, 9), "random_walk")
    assert np.max(np.abs(a.values.sum(axis=1) - 1.0)) < 1e-12


def test_symmetric_normalization_exactly_symmetric():
    rng = np.random.default_rng(6)
    for _ in range(20):
        a = graph.normalize(graph.symmetrize(rand_affinity(rng, 8)), "symmetric")
        assert np.array_equal(a.values, a.values.T)


def test_symmetric_normalization_requires_symmetrize():
    rng = np.random.default_rng(7)
    with pytest.raises(PreconditionError):
        graph.normalize(rand_affinity(rng, 5), "symmetric")


def test_symmetric_spectrum_in_unit_interval():
    rng = np.random.default_rng(8)
    a = graph.normalize(graph.symmetrize(rand_affinity(rng, 12)), "symmetric")
    lam = np.linalg.eigvalsh(a.values)
    assert lam.min() >= -1.0 - 1e-12 and lam.max() <= 1.0 + 1e-12


def test_scaled_laplacian_is_negated_affinity():
    rng = np.random.default_rng(9)
    a = graph.normalize(graph.symmetrize(rand_affinity(rng, 6)), "symmetric")
    assert np.array_equal(graph.scaled_laplacian(a), -a.values)
    with pytest.raises(PreconditionError):
        graph.scaled_laplacian(rand_affinity(rng, 6))


def test_crisscross_mask_row_sums():
    for h, w in ((3, 3), (2, 5), (4, 1)):
        mask = graph.crisscross_mask(h, w)
        assert np.all(mask.sum(axis=1) == h + w - 1)
        assert np.array_equal(mask, mask.T)
        assert np.all(np.diag(mask) == 1.0)


def test_flatten_is_column_major_and_roundtrips():
    z = np.array([[1.0, 4.0], [2.0, 5.0], [3.0, 6.0]])
    v = graph.flatten_spatial_channel(z)
    assert v.shape == (6, 1)
    assert np.array_equal(v.ravel(), [1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    assert np.array_equal(graph.unflatten_spatial_channel(v, 3, 2), z)


def test_unflatten_size_check():
    with pytest.raises(ShapeError):
        graph.unflatten_spatial_channel(np.zeros((5, 1)), 3, 2)


def test_heatmap_minmax_and_constant_row():
    img = graph.heatmap_image(np.array([0.0, 0.5, 1.0, 0.25]), 2, 2)
    assert img.dtype == np.uint8
    assert img.min() == 0 and img.max() == 255
    flat = graph.heatmap_image(np.full(4, 3.3), 2, 2)
    assert np.all(flat == 0)


def test_write_pgm_format(tmp_path):
    img = np.arange(6, dtype=np.uint8).reshape(2, 3)
    path = tmp_path / "img.pgm"
    graph.write_pgm(img, path)
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n3 2\n255\n")
    assert raw[-6:] == bytes(range(6))
