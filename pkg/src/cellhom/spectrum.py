"""Mie resonances of the inclusion: the compact operator K on discrete Z_0.

Discrete Z_0 is the set of face fields carried by interior faces (both
neighbouring cells in the inclusion) whose cell divergence vanishes.  Vectors
in this module are *compressed*: one entry per interior face, ordered x-faces,
then y-faces, then z-faces.

    K f = P(psi_f + M f),   -Lap psi_f = f,   M f = 1/4 (m_f ^ y) on the inclusion,

with ``m_f = int y ^ f`` the strength vector and ``P`` the Leray projector onto
discrete Z_0.  Eigenpairs (alpha_n, f_n) give the resonances lambda_n = 1/alpha_n
and the magnetic correctors u_n = (curl^T psi_{f_n} + m_n / 2) / sqrt(alpha_n),
which live on edges.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ProjectorSolveFailure
from .geometry import CellMask, DiscreteOps, GridSpec
from .krylov import block_lanczos
from .poisson import PeriodicPoisson

PROJECTOR_TOL = 1e-11
MULTIPLET_GAP = 1e-3


class Z0Subspace:
    """Interior-face bookkeeping and the Leray projector for one cell mask."""

    def __init__(self, mask: CellMask):
        self.mask = mask
        self.grid = grid = mask.grid
        self.ops = DiscreteOps(grid)
        self.poisson = PeriodicPoisson(grid)
        n, h = grid.n, grid.h

        inner = mask.interior_faces
        self.face_index = [np.flatnonzero(inner[a]) for a in range(3)]
        sizes = [len(ix) for ix in self.face_index]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.size = int(self.offsets[-1])
        self.axis = np.repeat(np.arange(3), sizes)

        pos = np.empty((self.size, 3))
        for a in range(3):
            coords = grid.lattice_coords("face", a)
            sl = slice(self.offsets[a], self.offsets[a + 1])
            idx = np.unravel_index(self.face_index[a], grid.shape)
            for d in range(3):
                pos[sl, d] = coords[d].ravel()[idx[d]]
        self.positions = pos

        # strength map m = S x  (h^3 sum of y ^ (x e_axis))
        S = np.zeros((3, self.size))
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            sl = slice(self.offsets[a], self.offsets[a + 1])
            # y ^ e_a = y_c e_b - y_b e_c   (cyclic a, b, c)
            S[b, sl] = pos[sl, c]
            S[c, sl] = -pos[sl, b]
        self.strength_map = h**3 * S

        # divergence restricted to interior faces, rows = inclusion cells
        cell_id = -np.ones(grid.shape, dtype=np.int64)
        cells = np.flatnonzero(mask.occupied)
        cell_id.ravel()[cells] = np.arange(len(cells))
        self.n_cells = len(cells)
        rows, cols, vals = [], [], []
        for a in range(3):
            idx = np.unravel_index(self.face_index[a], grid.shape)
            right = cell_id[idx]
            left_idx = list(idx)
            left_idx[a] = (left_idx[a] - 1) % n
            left = cell_id[tuple(left_idx)]
            dofs = np.arange(self.offsets[a], self.offsets[a + 1])
            rows += [left, right]
            cols += [dofs, dofs]
            vals += [np.full(len(dofs), 1.0), np.full(len(dofs), -1.0)]
        if self.size:
            D = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(self.n_cells, self.size))
        else:
            D = sp.csr_matrix((self.n_cells, 0))
        self.div_matrix = D * (1.0 / h)
        self._incidence = D
        self.dim = self.size - (self.n_cells - 1) if self.n_cells else 0
        self._lap = (D @ D.T).tocsc()  # integer graph Laplacian of the inclusion cells
        if self.n_cells > 1:
            self._lu = spla.splu(self._lap[:-1, :-1].tocsc())
        else:
            self._lu = None

    # -- scatter / gather -------------------------------------------------
    def scatter(self, x: np.ndarray) -> np.ndarray:
        """Compressed vector -> full (3, N, N, N) face field (zero elsewhere)."""
        out = np.zeros((3,) + self.grid.shape, dtype=x.dtype)
        for a in range(3):
            out[a].ravel()[self.face_index[a]] = x[self.offsets[a]:self.offsets[a + 1]]
        return out

    def gather(self, f: np.ndarray) -> np.ndarray:
        return np.concatenate([f[a].ravel()[self.face_index[a]] for a in range(3)])

    # -- inner products ----------------------------------------------------
    def inner(self, x, y) -> float:
        return self.grid.h**3 * np.dot(x, y)

    def norm(self, x) -> float:
        return float(np.sqrt(self.grid.h**3 * np.vdot(x, x).real))

    # -- operators -----------------------------------------------------------
    def divergence(self, x) -> np.ndarray:
        return self.div_matrix @ x

    def _neumann_solve(self, q):
        """p with (D D^T) p = q on inclusion cells (integer Laplacian), zero mean."""
        p = np.zeros(self.n_cells)
        if self._lu is None:
            return p
        q = q - q.mean()  # D x sums to zero over the cells; drop rounding outside range(D D^T)
        qnorm = np.linalg.norm(q)
        if qnorm == 0.0:
            return p
        res = q
        rel = np.inf
        # iterative refinement down to rounding level; the projector output
        # must be divergence free well below the Poisson mean tolerance
        for _ in range(6):
            dp = np.zeros(self.n_cells)
            dp[:-1] = self._lu.solve(res[:-1])
            p += dp
            res = q - self._lap @ p
            new = np.linalg.norm(res) / qnorm
            if new >= 0.5 * rel:
                rel = new
                break
            rel = new
        if rel > PROJECTOR_TOL:
            raise ProjectorSolveFailure(rel)
        return p - p.mean()

    def project(self, x: np.ndarray) -> np.ndarray:
        """Orthogonal (Leray) projection onto discrete Z_0."""
        if self.n_cells == 0:
            return np.zeros_like(x)
        D = self._incidence
        q = D @ x
        if np.iscomplexobj(q):
            p = self._neumann_solve(q.real) + 1j * self._neumann_solve(q.imag)
        else:
            p = self._neumann_solve(q)
        return x - D.T @ p

    def strength(self, x) -> np.ndarray:
        return self.strength_map @ x

    def moment_term(self, m) -> np.ndarray:
        """Compressed samples of M f = 1/4 (m ^ y) on the interior faces."""
        return 0.25 * (self.strength_map.T @ m) / self.grid.h**3

    def psi(self, x, check_mean=True) -> np.ndarray:
        """Full face field psi_f solving -Lap psi = f (f zero-extended)."""
        return self.poisson.solve(self.scatter(x), check_mean=check_mean).psi

    def apply_k(self, x: np.ndarray) -> np.ndarray:
        g = self.gather(self.psi(x)) + self.moment_term(self.strength(x))
        return self.project(g)

    def random_vector(self, rng) -> np.ndarray:
        return self.project(rng.standard_normal(self.size))


def z0_subspace(mask: CellMask) -> Z0Subspace:
    return Z0Subspace(mask)


def leray_project(z: Z0Subspace, f: np.ndarray) -> np.ndarray:
    """Project a full face field; components off the interior faces are dropped."""
    return z.scatter(z.project(z.gather(f)))


def strength_vector(mask: CellMask, f: np.ndarray) -> np.ndarray:
    """m = int_Sigma y ^ f over interior faces of a full face field."""
    grid = mask.grid
    inner = mask.interior_faces
    m = np.zeros(3, dtype=np.result_type(f, float))
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        coords = grid.lattice_coords("face", a)
        fa = np.where(inner[a], f[a], 0)
        m[b] += np.sum(coords[c] * fa)
        m[c] -= np.sum(coords[b] * fa)
    return grid.h**3 * m


def apply_K(z: Z0Subspace, f: np.ndarray) -> np.ndarray:
    """K on a full face field (interior-supported, divergence free)."""
    return z.scatter(z.apply_k(z.gather(f)))


# ---------------------------------------------------------------------------
# modes and catalogs


@dataclass(frozen=True)
class EigenMode:
    index: int  # 0-based
    alpha: float
    f: np.ndarray = field(repr=False)  # compressed, unit L2(Y) norm
    strength: np.ndarray = field(default=None)
    residual: float = 0.0

    @property
    def lam(self) -> float:
        return 1.0 / self.alpha

    @property
    def avg_u(self) -> np.ndarray:
        return self.strength / (2.0 * np.sqrt(self.alpha))

    @property
    def label(self) -> int:
        return self.index + 1


@dataclass(frozen=True)
class ModeCatalog:
    modes: tuple
    subspace: Z0Subspace = field(repr=False)
    geometry_hash: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def grid(self) -> GridSpec:
        return self.subspace.grid

    def __len__(self):
        return len(self.modes)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([m.alpha for m in self.modes])

    @property
    def strengths(self) -> np.ndarray:
        return np.array([m.strength for m in self.modes]).reshape(-1, 3)

    @property
    def avg_u(self) -> np.ndarray:
        return np.array([m.avg_u for m in self.modes]).reshape(-1, 3)

    @property
    def vectors(self) -> np.ndarray:
        return np.array([m.f for m in self.modes])

    _u_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def u_field(self, n: int) -> np.ndarray:
        """Edge samples of u_n (0-based ``n``), computed once."""
        if n not in self._u_cache:
            self._u_cache[n] = gamma_map(self.subspace, self.modes[n])
        return self._u_cache[n]

    def face_field(self, n: int) -> np.ndarray:
        return self.subspace.scatter(self.modes[n].f)

    def multiplets(self, gap: float = MULTIPLET_GAP) -> list:
        """Index groups of eigenvalues within relative gap ``gap`` of their neighbour."""
        groups = []
        for i, a in enumerate(self.alphas):
            if groups and (self.modes[groups[-1][-1]].alpha - a) <= gap * self.modes[groups[-1][-1]].alpha:
                groups[-1].append(i)
            else:
                groups.append([i])
        return groups

    def digest(self) -> str:
        hsh = hashlib.sha256()
        hsh.update(self.alphas.tobytes())
        hsh.update(self.vectors.tobytes())
        return hsh.hexdigest()

    def to_dict(self) -> dict:
        return {
            "resolution": self.grid.n,
            "geometry_hash": self.geometry_hash,
            "digest": self.digest(),
            "subspace_dimension": self.subspace.dim,
            "diagnostics": self.diagnostics,
            "modes": [
                {
                    "n": m.label,
                    "alpha": m.alpha,
                    "lambda": m.lam,
                    "strength": m.strength.tolist(),
                    "avg_u": m.avg_u.tolist(),
                    "residual": m.residual,
                }
                for m in self.modes
            ],
        }


def _fix_sign(x):
    i = int(np.argmax(np.abs(x)))
    return -x if x[i] < 0 else x


def build_catalog(z: Z0Subspace, alphas, vectors, residuals=None, geometry_hash="", diagnostics=None):
    """Wrap Euclidean-orthonormal compressed eigenvectors (columns) into a catalog."""
    scale = 1.0 / np.sqrt(z.grid.h**3)
    fields = np.array([_fix_sign(vectors[:, i]) * scale for i in range(len(alphas))])
    return catalog_from_arrays(z, alphas, fields, residuals, geometry_hash, diagnostics)


def catalog_from_arrays(z: Z0Subspace, alphas, fields, residuals=None, geometry_hash="", diagnostics=None):
    """Catalog from unit-norm compressed fields (rows); strengths are recomputed."""
    modes = []
    for i, a in enumerate(alphas):
        f = np.array(fields[i], dtype=float)
        res = 0.0 if residuals is None else float(residuals[i])
        modes.append(EigenMode(index=i, alpha=float(a), f=f, strength=z.strength(f), residual=res))
    return ModeCatalog(tuple(modes), z, geometry_hash, diagnostics or {})


def solve_spectrum(
    z: Z0Subspace,
    n_modes: int,
    seed: int = 42,
    *,
    block_size: int = 4,
    tol: float = 1e-8,
    max_restarts: int = 20,
    complete_multiplets: bool = True,
    geometry_hash: str = "",
) -> ModeCatalog:
    """Leading eigenpairs of K by restarted block Lanczos.

    With ``complete_multiplets`` a few extra pairs are converged so that a
    degenerate group straddling position ``n_modes`` is returned whole.
    """
    if n_modes < 1 or n_modes > z.dim:
        raise ValueError(f"n_modes must lie in [1, {z.dim}], got {n_modes}")
    pad = block_size if complete_multiplets else 0
    n_wanted = min(n_modes + pad, z.dim)
    rng = np.random.default_rng(seed)
    start = np.column_stack([z.random_vector(rng) for _ in range(block_size)])
    res = block_lanczos(
        z.apply_k, n_wanted, start,
        project=z.project, tol=tol, max_restarts=max_restarts, dim=z.dim, seed=seed,
    )
    n_keep = n_modes
    if complete_multiplets:
        while n_keep < n_wanted and res.values[n_keep - 1] - res.values[n_keep] <= MULTIPLET_GAP * res.values[n_keep - 1]:
            n_keep += 1
    diagnostics = {
        "method": "block-lanczos",
        "block_size": block_size,
        "matvecs": res.matvecs,
        "restarts": res.restarts,
        "max_residual": float(res.residuals[:n_keep].max()),
        "seed": seed,
    }
    return build_catalog(z, res.values[:n_keep], res.vectors[:, :n_keep], res.residuals[:n_keep],
                         geometry_hash, diagnostics)


def gamma_map(z: Z0Subspace, mode: EigenMode) -> np.ndarray:
    """u_n = (curl^T psi_{f_n} + m_n / 2) / sqrt(alpha_n), an edge field."""
    psi = z.psi(mode.f, check_mean=False)
    u = z.ops.curl_t(psi)
    for a in range(3):
        u[a] += 0.5 * mode.strength[a]
    return u / np.sqrt(mode.alpha)
