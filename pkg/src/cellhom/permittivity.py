"""Electric cell problems and the effective permittivity tensor.

For each axis k the nodal potential chi_k is pinned to -y_k on every node
touching the inclusion and is discretely harmonic elsewhere.  The shape
electric field E^k = e_k + grad chi_k lives on edges, and

    eps_eff[k, l] = eps_e * h^3 * sum_edges E^k . E^l.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CellMask, DiscreteOps, GridSpec
from .krylov import pcg

CG_TOL = 1e-10


@dataclass(frozen=True)
class ChiSolution:
    chi: tuple  # three (N, N, N) arrays, chi_1..chi_3
    residuals: tuple
    iterations: tuple


@dataclass(frozen=True)
class PermittivityTensor:
    matrix: np.ndarray
    eps_e: float
    grid: GridSpec
    chi: ChiSolution

    def eigvalsh(self):
        return np.linalg.eigvalsh(self.matrix)

    def to_dict(self):
        return {
            "eps_eff": self.matrix.tolist(),
            "eps_e": self.eps_e,
            "resolution": self.grid.n,
            "eigenvalues": self.eigvalsh().tolist(),
            "cg_iterations": list(self.chi.iterations),
            "cg_residuals": list(self.chi.residuals),
        }


def _scaled_laplacian(p):
    # h^2 * (-Lap_h) on nodes
    out = 6.0 * p
    for ax in range(3):
        out -= np.roll(p, 1, axis=ax) + np.roll(p, -1, axis=ax)
    return out


def _solve_chi(mask: CellMask, k: int, tol=CG_TOL, max_iter=None):
    if k not in (1, 2, 3):
        raise ValueError("axis k must be 1, 2 or 3")
    grid = mask.grid
    dirichlet = mask.touched_nodes
    if not dirichlet.any():
        return np.zeros(grid.shape), 0.0, 0
    free = ~dirichlet
    coords = grid.lattice_coords("node")
    chi_d = np.where(dirichlet, -np.broadcast_to(coords[k - 1], grid.shape), 0.0)
    rhs = -_scaled_laplacian(chi_d) * free
    if max_iter is None:
        max_iter = 50 * grid.n
    x, its, rel = pcg(lambda v: _scaled_laplacian(v) * free, rhs, diag=6.0, tol=tol, max_iter=max_iter)
    return chi_d + x * free, rel, its


def solve_chi(mask: CellMask, k: int, tol: float = CG_TOL) -> np.ndarray:
    """Nodal corrector chi_k (k = 1, 2, 3)."""
    return _solve_chi(mask, k, tol)[0]


def solve_all_chi(mask: CellMask, tol: float = CG_TOL) -> ChiSolution:
    sols = [_solve_chi(mask, k, tol) for k in (1, 2, 3)]
    return ChiSolution(
        chi=tuple(s[0] for s in sols),
        residuals=tuple(float(s[1]) for s in sols),
        iterations=tuple(int(s[2]) for s in sols),
    )


def shape_electric_field(chi_k: np.ndarray, k: int) -> np.ndarray:
    """E^k = e_k + grad chi_k as an edge field."""
    grid = GridSpec(chi_k.shape[0])
    e = DiscreteOps(grid).grad(chi_k)
    e[k - 1] += 1.0
    return e


def effective_permittivity(mask: CellMask, eps_e: float = 1.0, tol: float = CG_TOL) -> PermittivityTensor:
    if not eps_e > 0:
        raise ValueError("matrix permittivity eps_e must be positive")
    chi = solve_all_chi(mask, tol)
    fields = [shape_electric_field(c, k) for k, c in zip((1, 2, 3), chi.chi)]
    h3 = mask.grid.h**3
    eps = np.empty((3, 3))
    for a in range(3):
        for b in range(a, 3):
            eps[a, b] = eps[b, a] = eps_e * h3 * np.sum(fields[a] * fields[b])
    return PermittivityTensor(matrix=eps, eps_e=float(eps_e), grid=mask.grid, chi=chi)
