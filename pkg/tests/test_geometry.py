import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cellhom.errors import DisconnectedInclusion, ShapeTouchesBoundary
from cellhom.geometry import (
    CellMask,
    Cube,
    GridSpec,
    LShape,
    Sphere,
    VoxelMask,
    constant_edge_field,
    discrete_ops,
    geometry_hash,
    read_voxel_mask,
    voxelize,
    write_voxel_mask,
)
from cellhom.validation import norm_identity_residual


def _brute_count(shape, n):
    # plain enumeration of cell centres, independent of the vectorized path
    centres = [(i + 0.5) / n - 0.5 for i in range(n)]
    return sum(bool(shape.contains(x, y, z)) for x, y, z in itertools.product(centres, repeat=3))


def test_cube_voxel_count():
    mask = voxelize(Cube(0.3), GridSpec(10))
    assert mask.count == 216
    assert mask.count == _brute_count(Cube(0.3), 10)


def test_sphere_touching_boundary():
    with pytest.raises(ShapeTouchesBoundary):
        voxelize(Sphere(0.6), GridSpec(8))


def test_lshape_voxel_count():
    mask = voxelize(LShape(), GridSpec(20))
    assert mask.count == 12 * 12 * 12 - 8 * 8 * 12 == 960
    assert mask.count == _brute_count(LShape(), 20)


def test_disconnected_inclusion():
    occ = np.zeros((8, 8, 8), dtype=bool)
    occ[2, 2, 2] = occ[5, 5, 5] = True
    with pytest.raises(DisconnectedInclusion):
        CellMask.from_array(occ)


def test_resolution_bounds():
    with pytest.raises(ValueError):
        GridSpec(3)


def test_interior_faces_and_edges_of_single_block():
    occ = np.zeros((8, 8, 8), dtype=bool)
    occ[2:5, 2:5, 2:5] = True
    mask = CellMask.from_array(occ)
    # a 3x3x3 block has 2*3*3 interior faces per direction and 2*2*3 interior edges
    assert mask.interior_faces.sum(axis=(1, 2, 3)).tolist() == [18, 18, 18]
    assert mask.interior_edges.sum(axis=(1, 2, 3)).tolist() == [12, 12, 12]
    assert mask.interior_nodes.sum() == 8
    assert mask.touched_nodes.sum() == 64


def test_geometry_hash_depends_on_shape_and_grid():
    g = GridSpec(8)
    assert geometry_hash(Cube(0.3), g) == geometry_hash(Cube(0.3), g)
    assert geometry_hash(Cube(0.3), g) != geometry_hash(Cube(0.25), g)
    assert geometry_hash(Cube(0.3), g) != geometry_hash(Cube(0.3), GridSpec(10))


def test_voxel_file_roundtrip(tmp_path):
    mask = voxelize(LShape(), GridSpec(12))
    path = tmp_path / "l.chvx"
    write_voxel_mask(path, mask.occupied)
    raw = path.read_bytes()
    assert raw.startswith(b"CHVX1\n12 12 12\n")
    assert len(raw) == len(b"CHVX1\n12 12 12\n") + 12**3
    # x-fastest: byte index i + N j + N^2 k
    payload = raw[len(b"CHVX1\n12 12 12\n"):]
    i, j, k = 3, 5, 7
    assert payload[i + 12 * j + 144 * k] == mask.occupied[i, j, k]
    assert np.array_equal(read_voxel_mask(path), mask.occupied)
    again = voxelize(VoxelMask(path=str(path)), GridSpec(12))
    assert again.digest() == mask.digest()


def test_voxel_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.chvx"
    path.write_bytes(b"CHVX1\n4 4 4\n" + bytes(10))
    with pytest.raises(ValueError):
        read_voxel_mask(path)


# -- difference complex ------------------------------------------------------


def test_div_curl_vanishes():
    grid = GridSpec(8)
    ops = discrete_ops(grid)
    w = np.random.default_rng(0).uniform(-1, 1, (3,) + grid.shape)
    assert np.abs(ops.div(ops.curl(w))).max() < 1e-13


def test_curl_grad_vanishes():
    grid = GridSpec(8)
    ops = discrete_ops(grid)
    p = np.random.default_rng(1).uniform(-1, 1, grid.shape)
    assert np.abs(ops.curl(ops.grad(p))).max() < 1e-13


def test_curl_of_zero():
    grid = GridSpec(8)
    ops = discrete_ops(grid)
    assert not ops.curl(np.zeros((3,) + grid.shape)).any()


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.sampled_from([4, 5, 8]))
def test_adjointness(seed, n):
    grid = GridSpec(n)
    ops = discrete_ops(grid)
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((3,) + grid.shape)
    f = rng.standard_normal((3,) + grid.shape)
    p = rng.standard_normal(grid.shape)
    q = rng.standard_normal(grid.shape)
    nw, nf = np.linalg.norm(w), np.linalg.norm(f)
    assert abs(np.sum(ops.curl(w) * f) - np.sum(w * ops.curl_t(f))) <= 1e-12 * nw * nf * n
    assert abs(np.sum(ops.grad(p) * w) - np.sum(p * ops.grad_t(w))) <= 1e-12 * nw * np.linalg.norm(p) * n
    assert abs(np.sum(ops.div(f) * q) - np.sum(f * ops.div_t(q))) <= 1e-12 * nf * np.linalg.norm(q) * n


def test_adjointness_spec_bound():
    # the operators carry a 1/h factor; the h^3-weighted form keeps the pairing scale-free
    grid = GridSpec(8)
    ops = discrete_ops(grid)
    rng = np.random.default_rng(7)
    w = rng.standard_normal((3,) + grid.shape)
    f = rng.standard_normal((3,) + grid.shape)
    gap = abs(ops.inner(ops.curl(w), f) - ops.inner(w, ops.curl_t(f)))
    assert gap <= 1e-12 * np.sqrt(ops.inner(w, w) * ops.inner(f, f))


def test_interior_supported_faces_are_div_free_outside():
    mask = voxelize(Cube(0.3), GridSpec(10))
    ops = discrete_ops(mask.grid)
    f = np.random.default_rng(3).standard_normal((3,) + mask.grid.shape) * mask.interior_faces
    d = ops.div(f)
    assert np.abs(d[~mask.occupied]).max() == 0.0


def test_interior_edge_curls_stay_on_interior_faces():
    mask = voxelize(LShape(), GridSpec(20))
    ops = discrete_ops(mask.grid)
    w = np.random.default_rng(4).standard_normal((3,) + mask.grid.shape) * mask.interior_edges
    c = ops.curl(w)
    assert np.abs(c[~mask.interior_faces]).max() == 0.0


def test_fourier_norm_identity():
    grid = GridSpec(16)
    u = np.random.default_rng(5).uniform(-1, 1, (3,) + grid.shape)
    assert norm_identity_residual(grid, u) < 1e-10


def test_constant_edge_field():
    grid = GridSpec(4)
    e = constant_edge_field(grid, [1.0, -2.0, 0.5])
    assert e.shape == (3, 4, 4, 4)
    assert np.all(e[1] == -2.0)
    assert not discrete_ops(grid).curl(e).any()
