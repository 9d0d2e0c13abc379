"""Independent checks: mean circulation, a dense eigen-oracle and discrete identities."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import NoClearPath, SubspaceTooLarge
from .geometry import CellMask, DiscreteOps, GridSpec
from .permeability import (
    DEFAULT_TRUNCATION,
    FrequencyPoint,
    TruncationRule,
    mu_eff,
    shape_magnetic_field,
)
from .poisson import PeriodicPoisson
from .spectrum import MULTIPLET_GAP, ModeCatalog, Z0Subspace, solve_spectrum

DENSE_MAX_DIM = 2000


# ---------------------------------------------------------------------------
# circulation


@dataclass(frozen=True)
class CirculationResult:
    value: np.ndarray  # one entry per axis
    paths: list
    residual: float  # max spread over the parallel lines of one axis

    def to_dict(self):
        return {
            "value": [[float(v.real), float(v.imag)] for v in np.asarray(self.value, dtype=complex)],
            "paths": self.paths,
            "residual": self.residual,
        }


def _clearance(occupied_along: np.ndarray) -> np.ndarray:
    """Periodic distance (in cells) from each node plane to the nearest occupied slab."""
    n = occupied_along.size
    hit = np.flatnonzero(occupied_along)
    if hit.size == 0:
        return np.full(n, np.inf)
    planes = np.arange(n)
    # node plane l separates cells l-1 and l
    d_right = np.min(np.abs(planes[:, None] - hit[None, :]) % n, axis=1)
    d_left = np.min(np.abs(planes[:, None] - 1 - hit[None, :]) % n, axis=1)
    d_right = np.minimum(d_right, n - d_right)
    d_left = np.minimum(d_left, n - d_left)
    return np.minimum(d_left, d_right)


def circulation(mask: CellMask, u: np.ndarray, n_lines: int = 3) -> CirculationResult:
    """Mean circulation of an edge field along straight grid lines outside the inclusion.

    For axis k the lines lie in a node plane (normal to another axis) that
    touches no inclusion cell, so the strip between two lines carries no
    current; the spread across ``n_lines`` such lines measures path dependence.
    """
    grid = mask.grid
    occ = mask.occupied
    h = grid.h
    values, paths, spread = [], [], 0.0
    for a in range(3):
        best = None
        for c in [d for d in range(3) if d != a]:
            slabs = occ.any(axis=tuple(d for d in range(3) if d != c))
            clear = _clearance(slabs)
            l = int(np.argmax(clear))
            if clear[l] >= 1 and (best is None or clear[l] > best[2]):
                best = (c, l, clear[l])
        if best is None:
            raise NoClearPath(f"no node plane along axis {a + 1} avoids the inclusion")
        c, l, _ = best
        b = 3 - a - c
        # every line of a clear plane avoids the inclusion; start from the one
        # farthest from it and spread the others evenly across the cell
        slabs_b = occ.any(axis=tuple(d for d in range(3) if d != b))
        j0 = int(np.argmax(np.minimum(_clearance(slabs_b), grid.n)))
        lines = sorted((j0 + t * grid.n // n_lines) % grid.n for t in range(n_lines))
        sums = []
        for j in lines:
            idx = [slice(None)] * 3
            idx[b], idx[c] = j, l
            sums.append(h * np.sum(u[a][tuple(idx)]))
        sums = np.array(sums)
        values.append(sums[0])
        spread = max(spread, float(np.max(np.abs(sums - sums[0]))))
        paths.append({"axis": a + 1, "plane_axis": c + 1, "plane_index": l,
                      "line_axis": b + 1, "line_indices": lines})
    return CirculationResult(np.array(values), paths, spread)


# ---------------------------------------------------------------------------
# dense oracle


@dataclass
class DenseOracleReport:
    resolution: int
    dimension: int
    dense_values: np.ndarray
    lanczos_values: np.ndarray
    max_relative_deviation: float
    max_principal_angle: float
    asymmetry: float
    tolerance: float = 1e-9

    @property
    def passed(self) -> bool:
        return (self.max_relative_deviation <= self.tolerance and self.max_principal_angle < 1e-6
                and self.asymmetry <= 1e-12)

    def to_dict(self):
        return {
            "resolution": self.resolution,
            "dimension": self.dimension,
            "dense_values": self.dense_values.tolist(),
            "lanczos_values": self.lanczos_values.tolist(),
            "max_relative_deviation": self.max_relative_deviation,
            "max_principal_angle": self.max_principal_angle,
            "asymmetry": self.asymmetry,
            "passed": self.passed,
        }


def _periodic_laplacian_pinv(n: int, h: float) -> np.ndarray:
    """Dense pseudo-inverse of -Lap_h on the n^3 torus (C-order flattening)."""
    eye = np.eye(n)
    d2 = (2 * eye - np.roll(eye, 1, axis=0) - np.roll(eye, -1, axis=0)) / h**2
    lap = (np.kron(np.kron(d2, eye), eye) + np.kron(np.kron(eye, d2), eye)
           + np.kron(np.kron(eye, eye), d2))
    vals, vecs = np.linalg.eigh(lap)
    inv = np.where(vals > 1e-8 * vals.max(), 1.0 / np.where(vals > 0, vals, 1.0), 0.0)
    return (vecs * inv) @ vecs.T


def dense_oracle(mask: CellMask, n_modes: int = 10, catalog: ModeCatalog | None = None,
                 seed: int = 42, max_dimension: int = DENSE_MAX_DIM) -> DenseOracleReport:
    """Brute-force spectrum of K from an explicit null-space basis.

    The basis, the Poisson inverse and the strength vectors are built with
    dense linear algebra, independently of the projector, the FFT solver and
    the Lanczos iteration used by :func:`solve_spectrum`.
    """
    grid = mask.grid
    n, h = grid.n, grid.h
    inner = mask.interior_faces
    face_ids = [np.flatnonzero(inner[a]) for a in range(3)]
    n_int = sum(len(f) for f in face_ids)
    n_cells = mask.count
    dim = n_int - (n_cells - 1) if n_cells else 0
    if dim > max_dimension:
        raise SubspaceTooLarge(f"div-free subspace has dimension {dim} > {max_dimension}")
    if dim == 0:
        empty = np.zeros(0)
        return DenseOracleReport(n, 0, empty, empty, 0.0, 0.0, 0.0)

    ops = DiscreteOps(grid)
    cells = np.flatnonzero(mask.occupied)
    cols = []  # full face fields of the unit vectors on interior faces
    div_rows = np.empty((n_cells, n_int))
    j = 0
    for a in range(3):
        for fid in face_ids[a]:
            e = np.zeros((3,) + grid.shape)
            e[a].ravel()[fid] = 1.0
            div_rows[:, j] = ops.div(e).ravel()[cells]
            cols.append((a, fid))
            j += 1
    basis = sla.null_space(div_rows, rcond=1e-10)
    if basis.shape[1] != dim:
        raise RuntimeError(f"null space has dimension {basis.shape[1]}, expected {dim}")
    basis = basis / np.sqrt(h**3)  # L2(Y)-orthonormal

    # full-field samples of every basis vector, component by component
    full = np.zeros((3, n**3, dim))
    pos = np.zeros((n_int, 3))
    j = 0
    for a in range(3):
        coords = grid.lattice_coords("face", a)
        ijk = np.unravel_index(face_ids[a], grid.shape)
        for d in range(3):
            pos[j:j + len(face_ids[a]), d] = coords[d].ravel()[ijk[d]]
        full[a, face_ids[a], :] = basis[j:j + len(face_ids[a])]
        j += len(face_ids[a])
    axis_of = np.array([a for a, _ in cols])
    unit = np.eye(3)[axis_of]
    m = h**3 * np.cross(pos, unit).T @ basis  # (3, dim)

    pinv = _periodic_laplacian_pinv(n, h)
    A = sum(h**3 * full[a].T @ (pinv @ full[a]) for a in range(3)) + 0.25 * m.T @ m
    asym = float(np.abs(A - A.T).max() / np.abs(A).max())
    vals, vecs = np.linalg.eigh(0.5 * (A + A.T))
    vals, vecs = vals[::-1], vecs[:, ::-1]

    n_modes = min(n_modes, dim)
    if catalog is None:
        catalog = solve_spectrum(Z0Subspace(mask), n_modes, seed)
    lanczos = catalog.alphas[:n_modes]
    dev = float(np.max(np.abs(lanczos - vals[:n_modes]) / vals[:n_modes]))

    # multiplet subspaces: dense eigenvectors mapped to compressed face vectors
    dense_vecs = basis @ vecs * np.sqrt(h**3)
    lanczos_vecs = catalog.vectors[:n_modes].T * np.sqrt(h**3)
    angle = 0.0
    groups = catalog.multiplets(MULTIPLET_GAP)
    for g in groups:
        if g[-1] >= n_modes:
            break
        ang = sla.subspace_angles(dense_vecs[:, g], lanczos_vecs[:, g])
        angle = max(angle, float(ang.max()))
    return DenseOracleReport(n, dim, vals[:n_modes], lanczos, dev, angle, asym)


# ---------------------------------------------------------------------------
# identities


@dataclass
class Check:
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)

    def to_dict(self):
        return {"name": self.name, "residual": self.residual, "tolerance": self.tolerance,
                "passed": self.passed}


@dataclass
class IdentityReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, residual, tolerance):
        self.checks.append(Check(name, float(residual), tolerance))

    def to_dict(self):
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def norm_identity_residual(grid: GridSpec, u: np.ndarray) -> float:
    """Relative gap between sum_d |D_d u|^2 (Fourier side) and |curl u|^2 + |div u|^2."""
    ops = DiscreteOps(grid)
    poisson = PeriodicPoisson(grid)
    grad_norm = sum(poisson.dirichlet_form(u[a], u[a]) for a in range(3))
    rhs = ops.inner(ops.curl(u), ops.curl(u)) + ops.inner(ops.grad_t(u), ops.grad_t(u))
    return abs(grad_norm - rhs) / abs(grad_norm)


def identity_suite(catalog: ModeCatalog, fp: FrequencyPoint,
                   trunc: TruncationRule = DEFAULT_TRUNCATION, seed: int = 0) -> IdentityReport:
    """Discrete counterparts of the analytic identities; failures are reported, not raised."""
    report = IdentityReport()
    grid = catalog.grid
    ops = DiscreteOps(grid)
    h3 = grid.h**3
    rng = np.random.default_rng(seed)

    u = rng.uniform(-1.0, 1.0, (3,) + grid.shape)
    report.add("norm_identity", norm_identity_residual(grid, u), 1e-10)

    mu = mu_eff(catalog, fp, trunc).matrix
    w = fp.w
    circ_h = 0.0
    for k in (1, 2, 3):
        H = shape_magnetic_field(catalog, fp, k, trunc)
        cH = ops.curl(H)
        quad = h3 * np.sum(H * H) - h3 * np.sum(cH * cH) / w
        report.add(f"quadratic_mean_{k}", abs(quad - mu[k - 1, k - 1]) / abs(mu[k - 1, k - 1]), 1e-10)
        osc = H.copy()
        osc[k - 1] -= 1.0
        curl_osc = ops.curl(osc)
        rhs = fp.eps_r.imag / (abs(fp.eps_r) ** 2 * fp.k0**2) * h3 * np.sum(np.abs(curl_osc) ** 2)
        lhs = mu[k - 1, k - 1].imag
        scale = max(abs(lhs), abs(rhs))
        report.add(f"imaginary_part_{k}", abs(lhs - rhs) / scale if scale > 0 else 0.0, 1e-10)
        c = circulation(catalog.subspace.mask, H)
        target = np.eye(3)[k - 1]
        circ_h = max(circ_h, float(np.max(np.abs(c.value - target))), c.residual)
    report.add("circulation_H", circ_h, 1e-8)

    n = len(catalog)
    F = np.array([m.f for m in catalog.modes])
    gram_f = h3 * F @ F.T
    curls = np.array([ops.curl(catalog.u_field(i)).ravel() for i in range(n)])
    b0 = h3 * curls @ curls.T
    lam = 1.0 / catalog.alphas
    report.add("isometry", float(np.max(np.abs(gram_f - b0 / np.sqrt(np.outer(lam, lam))))), 1e-7)
    us = np.array([catalog.u_field(i).ravel() for i in range(n)])
    report.add("u_orthonormality", float(np.max(np.abs(h3 * us @ us.T - np.eye(n)))), 1e-9)
    circ_u = 0.0
    for i in range(n):
        c = circulation(catalog.subspace.mask, catalog.u_field(i))
        circ_u = max(circ_u, float(np.max(np.abs(c.value))), c.residual)
    report.add("circulation_u", circ_u, 1e-8)
    return report
