import numpy as np
import pytest

from cellhom.errors import LanczosStagnation, NonZeroMeanSource
from cellhom.geometry import CellMask, Cube, GridSpec, LShape, discrete_ops, voxelize
from cellhom.spectrum import (
    Z0Subspace,
    apply_K,
    gamma_map,
    leray_project,
    solve_spectrum,
    strength_vector,
)


def _random_interior(z, rng):
    return z.scatter(rng.standard_normal(z.size))


def _norm(grid, f):
    return np.sqrt(grid.h**3 * np.sum(np.abs(f) ** 2))


def _loop_field(mask, odd_in_z=False):
    """curl of phi(r) e_3 (phi radially symmetric about the e_3 axis) on interior edges."""
    grid = mask.grid
    x, y, zc = grid.lattice_coords("edge", 2)
    phi = np.exp(-8 * (x**2 + y**2)) * (np.sign(zc) if odd_in_z else 1.0)
    w = np.zeros((3,) + grid.shape)
    w[2] = np.broadcast_to(phi, grid.shape)
    w *= mask.interior_edges
    return discrete_ops(grid).curl(w)


# -- projector -------------------------------------------------------------


def test_projector_idempotent_and_div_free(cube_z16):
    z = cube_z16
    rng = np.random.default_rng(0)
    f = _random_interior(z, rng)
    p = leray_project(z, f)
    pp = leray_project(z, p)
    assert _norm(z.grid, pp - p) <= 1e-11 * _norm(z.grid, f)
    div = discrete_ops(z.grid).div(p)
    assert np.abs(div).max() <= 1e-10 * _norm(z.grid, f)
    assert np.abs(p[~z.mask.interior_faces]).max() == 0.0


def test_projector_self_adjoint(cube_z16):
    z = cube_z16
    rng = np.random.default_rng(1)
    x, y = rng.standard_normal(z.size), rng.standard_normal(z.size)
    lhs, rhs = z.inner(z.project(x), y), z.inner(x, z.project(y))
    assert abs(lhs - rhs) <= 1e-11 * z.norm(x) * z.norm(y)


def test_projector_keeps_div_free_fields(cube_z16):
    z = cube_z16
    f = leray_project(z, _random_interior(z, np.random.default_rng(2)))
    assert _norm(z.grid, leray_project(z, f) - f) <= 1e-11 * _norm(z.grid, f)


def test_projector_kills_gradients(cube_z16):
    z = cube_z16
    q = np.random.default_rng(3).standard_normal(z.n_cells)
    g = z.div_matrix.T @ q
    assert z.norm(z.project(g)) <= 1e-10 * z.norm(g)


def test_subspace_dimension(cube_z16):
    z = cube_z16
    assert z.dim == z.size - z.n_cells + 1
    assert np.linalg.matrix_rank(z.div_matrix.toarray()) == z.n_cells - 1


# -- strength vector -------------------------------------------------------


def test_strength_of_axial_loop(cube_mask16):
    f = _loop_field(cube_mask16)
    m = strength_vector(cube_mask16, f)
    assert abs(m[0]) < 1e-12 and abs(m[1]) < 1e-12
    assert abs(m[2]) > 1e-3


def test_strength_of_zero(cube_mask16):
    assert not strength_vector(cube_mask16, np.zeros((3,) + cube_mask16.grid.shape)).any()


def test_counter_rotating_loops_are_dark(cube_mask16):
    f = _loop_field(cube_mask16, odd_in_z=True)
    m = strength_vector(cube_mask16, f)
    assert np.linalg.norm(m) < 1e-10 * _norm(cube_mask16.grid, f)


def test_strength_map_matches_full_field_sum(cube_z16):
    z = cube_z16
    x = np.random.default_rng(4).standard_normal(z.size)
    assert np.allclose(z.strength(x), strength_vector(z.mask, z.scatter(x)), rtol=1e-12, atol=1e-15)


# -- the operator K -------------------------------------------------------


def test_k_symmetric_positive_and_galerkin(cube_z16):
    z = cube_z16
    rng = np.random.default_rng(5)
    f, g = z.random_vector(rng), z.random_vector(rng)
    kf, kg = z.apply_k(f), z.apply_k(g)
    scale = abs(z.inner(kf, g))
    assert abs(z.inner(kf, g) - z.inner(f, kg)) <= 1e-10 * scale
    assert z.inner(kf, f) >= 0
    psi_f = z.psi(f)
    galerkin = z.grid.h**3 * np.sum(psi_f * z.scatter(g)) + 0.25 * z.strength(f) @ z.strength(g)
    assert abs(z.inner(kf, g) - galerkin) <= 1e-10 * scale


def test_apply_K_full_field(cube_z16):
    z = cube_z16
    x = z.random_vector(np.random.default_rng(6))
    assert np.array_equal(apply_K(z, z.scatter(x)), z.scatter(z.apply_k(x)))


def test_k_rejects_non_zero_mean(cube_z16):
    z = cube_z16
    x = np.zeros(z.size)
    x[: z.offsets[1]] = 1.0  # constant x-flux on interior x-faces: not div free, nonzero mean
    with pytest.raises(NonZeroMeanSource):
        z.apply_k(x)


# -- eigenpairs ------------------------------------------------------------


def test_mode_invariants(cube_catalog16):
    cat = cube_catalog16
    z = cat.subspace
    F = cat.vectors
    gram = z.grid.h**3 * F @ F.T
    assert np.abs(np.diag(gram) - 1).max() <= 1e-10
    assert np.abs(gram - np.eye(len(cat))).max() <= 1e-9
    assert np.all(np.diff(cat.alphas) <= 0) and cat.alphas[-1] > 0
    for mode in cat.modes:
        full = z.scatter(mode.f)
        assert np.abs(z.grid.h**3 * full.sum(axis=(1, 2, 3))).max() <= 1e-10
        r = z.apply_k(mode.f) - mode.alpha * mode.f
        assert z.norm(r) <= 1e-8
        assert mode.residual <= 1e-8
        assert np.abs(mode.f).max() == mode.f.max()  # sign convention


def test_cube_leading_triplet(cube_run32):
    cat, _ = cube_run32
    a = cat.alphas
    assert (a[0] - a[2]) / a[0] < 0.02
    assert 7.0 <= 2 * np.pi * np.sqrt(100 * a[0]) <= 8.0
    z = cat.subspace
    for mode in cat.modes:
        assert np.abs(z.grid.h**3 * z.scatter(mode.f).sum(axis=(1, 2, 3))).max() <= 1e-10


def test_deterministic(cube_z16, cube_catalog16):
    again = solve_spectrum(cube_z16, 30)
    assert np.array_equal(again.alphas, cube_catalog16.alphas)
    assert np.array_equal(again.vectors, cube_catalog16.vectors)
    assert again.digest() == cube_catalog16.digest()


def test_rotated_mask_has_same_spectrum():
    mask = voxelize(LShape(), GridSpec(16))
    rotated = CellMask.from_array(np.rot90(mask.occupied, axes=(0, 1)))
    assert rotated.digest() != mask.digest()
    a = solve_spectrum(Z0Subspace(mask), 10).alphas[:10]
    b = solve_spectrum(Z0Subspace(rotated), 10).alphas[:10]
    assert np.max(np.abs(a - b) / a) < 1e-6


def test_n_modes_bounds(cube_z16):
    with pytest.raises(ValueError):
        solve_spectrum(cube_z16, 0)
    with pytest.raises(ValueError):
        solve_spectrum(cube_z16, cube_z16.dim + 1)


def test_stagnation_reported():
    z = Z0Subspace(voxelize(Cube(0.3), GridSpec(8)))
    with pytest.raises(LanczosStagnation) as info:
        solve_spectrum(z, 20, max_restarts=0)
    assert info.value.converged_count < info.value.wanted


def test_multiplets_not_split():
    z = Z0Subspace(voxelize(Cube(0.3), GridSpec(8)))
    cat = solve_spectrum(z, 2)  # asks for part of the leading triplet
    assert len(cat) >= 3
    assert cat.multiplets()[0] == [0, 1, 2]


def test_catalog_serialization(cube_catalog16):
    d = cube_catalog16.to_dict()
    assert d["modes"][0]["n"] == 1
    assert len(d["modes"]) == len(cube_catalog16)
    assert d["digest"] == cube_catalog16.digest()


# -- gamma map -------------------------------------------------------------


def test_gamma_map_identities(cube_catalog16):
    cat = cube_catalog16
    z = cat.subspace
    ops = discrete_ops(z.grid)
    h3 = z.grid.h**3
    for n, mode in enumerate(cat.modes):
        u = gamma_map(z, mode)
        assert np.abs(h3 * u.sum(axis=(1, 2, 3)) - mode.avg_u).max() <= 1e-10
        curl_u = z.gather(ops.curl(u))
        assert np.abs(curl_u - mode.f / np.sqrt(mode.alpha)).max() <= 1e-9 * np.abs(mode.f).max() / np.sqrt(mode.alpha)
        b0 = h3 * np.sum(ops.curl(u) ** 2)
        assert abs(b0 - mode.lam) <= 1e-7 * mode.lam
        assert abs(h3 * np.sum(u * u) - 1.0) <= 1e-9
        assert np.array_equal(u, cat.u_field(n))


def test_gamma_map_orthogonality(cube_catalog16):
    cat = cube_catalog16
    ops = discrete_ops(cat.grid)
    h3 = cat.grid.h**3
    curls = np.array([ops.curl(cat.u_field(n)).ravel() for n in range(len(cat))])
    b0 = h3 * curls @ curls.T
    lam = 1 / cat.alphas
    off = b0 - np.diag(np.diag(b0))
    assert np.all(np.abs(off) <= 1e-7 * np.sqrt(np.outer(lam, lam)))
    # isometry: a0(f_n, f_m) = delta_nm alpha_n through b0(u_n, u_m) / (lambda_n lambda_m)^(1/2)
    F = cat.vectors
    assert np.abs(h3 * F @ F.T - b0 / np.sqrt(np.outer(lam, lam))).max() <= 1e-9
