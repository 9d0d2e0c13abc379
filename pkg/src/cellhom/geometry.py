"""Periodic unit cell, inclusion voxelization and the staggered difference complex.

The cell Y = (-1/2, 1/2)^3 is split into N^3 cubes of side h = 1/N.  Array
index ``[i, j, k]`` addresses, per lattice:

* node  ``(i, j, k)``            at ``(i/N - 1/2, j/N - 1/2, k/N - 1/2)``
* cell  ``(i+1/2, j+1/2, k+1/2)``
* x-edge ``(i+1/2, j, k)``  (y-, z-edges analogously)
* x-face ``(i, j+1/2, k+1/2)`` (normal along x; between cells i-1 and i)

All differences are periodic.  The primal operators are forward differences
(node -> edge -> face -> cell) and their transposes are backward differences,
so ``div(curl(.)) = 0`` and ``curl(grad(.)) = 0`` hold up to rounding.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Union

import numpy as np
from scipy import ndimage

from .errors import DisconnectedInclusion, ShapeTouchesBoundary

VOXEL_MAGIC = b"CHVX1\n"


@dataclass(frozen=True)
class GridSpec:
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4:
            raise ValueError(f"resolution must be an integer >= 4, got {self.n!r}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self):
        return (self.n, self.n, self.n)

    def cell_centers(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) / self.n - 0.5

    def node_coords(self) -> np.ndarray:
        return np.arange(self.n) / self.n - 0.5

    def lattice_coords(self, kind: str, axis: int | None = None):
        """Broadcastable (x, y, z) coordinates of a lattice.

        ``kind`` is one of ``node``, ``cell``, ``edge`` or ``face``; edges and
        faces additionally need the component ``axis``.
        """
        c, n = self.cell_centers(), self.node_coords()
        if kind == "node":
            per_axis = [n, n, n]
        elif kind == "cell":
            per_axis = [c, c, c]
        elif kind == "edge":
            per_axis = [c if d == axis else n for d in range(3)]
        elif kind == "face":
            per_axis = [n if d == axis else c for d in range(3)]
        else:
            raise ValueError(kind)
        return np.meshgrid(*per_axis, indexing="ij", sparse=True)


# ---------------------------------------------------------------------------
# inclusion shapes


@dataclass(frozen=True)
class Cube:
    half_side: float

    def contains(self, x, y, z):
        a = self.half_side
        return (np.abs(x) < a) & (np.abs(y) < a) & (np.abs(z) < a)

    def to_dict(self):
        return {"type": "cube", "half_side": self.half_side}


@dataclass(frozen=True)
class LShape:
    """Cube minus a closed axis-aligned box; ``None`` bounds are unbounded."""

    outer_half_side: float = 0.3
    cut_lo: tuple = (-0.3, -0.3, None)
    cut_hi: tuple = (0.1, 0.1, None)

    def contains(self, x, y, z):
        inside = Cube(self.outer_half_side).contains(x, y, z)
        in_cut = np.ones(np.broadcast_shapes(np.shape(x), np.shape(y), np.shape(z)), dtype=bool)
        for coord, lo, hi in zip((x, y, z), self.cut_lo, self.cut_hi):
            if lo is not None:
                in_cut = in_cut & (coord >= lo)
            if hi is not None:
                in_cut = in_cut & (coord <= hi)
        return inside & ~in_cut

    def to_dict(self):
        return {
            "type": "lshape",
            "outer_half_side": self.outer_half_side,
            "cut_lo": list(self.cut_lo),
            "cut_hi": list(self.cut_hi),
        }


@dataclass(frozen=True)
class Sphere:
    radius: float

    def contains(self, x, y, z):
        return x**2 + y**2 + z**2 < self.radius**2

    def to_dict(self):
        return {"type": "sphere", "radius": self.radius}


@dataclass(frozen=True)
class VoxelMask:
    """Occupancy read from a CHVX1 file (or given directly as an array)."""

    path: str | None = None
    data: np.ndarray | None = field(default=None, compare=False, repr=False)

    def occupancy(self, grid: GridSpec) -> np.ndarray:
        occ = self.data if self.data is not None else read_voxel_mask(self.path)
        if occ.shape != grid.shape:
            raise ValueError(f"voxel mask has shape {occ.shape}, grid expects {grid.shape}")
        return np.asarray(occ, dtype=bool)

    def to_dict(self):
        occ = self.data if self.data is not None else read_voxel_mask(self.path)
        digest = hashlib.sha256(np.ascontiguousarray(occ, dtype=np.uint8).tobytes()).hexdigest()
        return {"type": "voxel", "sha256": digest, "shape": list(occ.shape)}


InclusionShape = Union[Cube, LShape, Sphere, VoxelMask]


def shape_from_dict(d: dict) -> InclusionShape:
    kind = d.get("type")
    if kind == "cube":
        return Cube(float(d["half_side"]))
    if kind == "lshape":
        return LShape(
            float(d.get("outer_half_side", 0.3)),
            tuple(d.get("cut_lo", (-0.3, -0.3, None))),
            tuple(d.get("cut_hi", (0.1, 0.1, None))),
        )
    if kind == "sphere":
        return Sphere(float(d["radius"]))
    if kind == "voxel":
        return VoxelMask(path=str(d["path"]))
    raise ValueError(f"unknown geometry type {kind!r}")


def read_voxel_mask(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw.startswith(VOXEL_MAGIC):
        raise ValueError(f"{path}: missing CHVX1 header")
    rest = raw[len(VOXEL_MAGIC):]
    line, _, payload = rest.partition(b"\n")
    dims = tuple(int(t) for t in line.split())
    if len(dims) != 3:
        raise ValueError(f"{path}: malformed dimension line")
    count = dims[0] * dims[1] * dims[2]
    if len(payload) != count:
        raise ValueError(f"{path}: expected {count} voxel bytes, found {len(payload)}")
    flat = np.frombuffer(payload, dtype=np.uint8)
    if np.any(flat > 1):
        raise ValueError(f"{path}: voxel bytes must be 0 or 1")
    # x-fastest on disk == Fortran order for [i, j, k]
    return flat.reshape(dims, order="F").astype(bool)


def write_voxel_mask(path, occupancy: np.ndarray) -> None:
    occ = np.asarray(occupancy, dtype=np.uint8)
    nx, ny, nz = occ.shape
    with open(path, "wb") as fh:
        fh.write(VOXEL_MAGIC)
        fh.write(f"{nx} {ny} {nz}\n".encode("ascii"))
        fh.write(occ.ravel(order="F").tobytes())


# ---------------------------------------------------------------------------
# cell masks


@dataclass(frozen=True)
class CellMask:
    grid: GridSpec
    occupied: np.ndarray = field(repr=False)

    @classmethod
    def from_array(cls, occupied, check=True) -> "CellMask":
        occ = np.asarray(occupied, dtype=bool)
        if occ.ndim != 3 or len(set(occ.shape)) != 1:
            raise ValueError("occupancy must be a cubic 3D array")
        mask = cls(GridSpec(occ.shape[0]), occ.copy())
        mask.occupied.setflags(write=False)
        if check:
            mask.check()
        return mask

    def check(self) -> None:
        occ = self.occupied
        if not occ.any():
            return
        # the outer layer of cells touches dY (and, by periodicity, its image)
        border = np.zeros_like(occ)
        border[[0, -1], :, :] = True
        border[:, [0, -1], :] = True
        border[:, :, [0, -1]] = True
        if np.any(occ & border):
            raise ShapeTouchesBoundary("inclusion reaches the outer cell layer of Y")
        _, ncomp = ndimage.label(occ)
        if ncomp != 1:
            raise DisconnectedInclusion(f"inclusion has {ncomp} face-connected components")

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def count(self) -> int:
        return int(self.occupied.sum())

    @property
    def volume_fraction(self) -> float:
        return self.count / self.n**3

    def digest(self) -> str:
        return hashlib.sha256(np.packbits(self.occupied).tobytes()).hexdigest()

    @cached_property
    def interior_faces(self) -> np.ndarray:
        """(3, N, N, N) booleans: both cells sharing the face lie in the inclusion."""
        occ = self.occupied
        return np.stack([occ & np.roll(occ, 1, axis=a) for a in range(3)])

    @cached_property
    def boundary_faces(self) -> np.ndarray:
        occ = self.occupied
        return np.stack([occ ^ np.roll(occ, 1, axis=a) for a in range(3)])

    @cached_property
    def interior_edges(self) -> np.ndarray:
        """(3, N, N, N) booleans: the four faces around the edge are interior."""
        occ = self.occupied
        out = []
        for a in range(3):
            b, c = [d for d in range(3) if d != a]
            four = occ & np.roll(occ, 1, axis=b) & np.roll(occ, 1, axis=c)
            four &= np.roll(np.roll(occ, 1, axis=b), 1, axis=c)
            out.append(four)
        return np.stack(out)

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        """Nodes whose eight surrounding cells (hence all incident edges) are inside."""
        return self._around_nodes(np.logical_and)

    @cached_property
    def touched_nodes(self) -> np.ndarray:
        """Nodes incident to at least one inclusion cell."""
        return self._around_nodes(np.logical_or)

    def _around_nodes(self, op):
        occ = self.occupied
        acc = occ.copy()
        for s in [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (1, 0, 1), (0, 1, 1), (1, 1, 1)]:
            acc = op(acc, np.roll(occ, s, axis=(0, 1, 2)))
        return acc


def voxelize(shape: InclusionShape, grid: GridSpec, check: bool = True) -> CellMask:
    """Cell-center membership voxelization of ``shape`` on ``grid``."""
    if isinstance(shape, VoxelMask):
        occ = shape.occupancy(grid)
    else:
        x, y, z = grid.lattice_coords("cell")
        occ = np.broadcast_to(shape.contains(x, y, z), grid.shape)
    return CellMask.from_array(occ, check=check)


def geometry_hash(shape: InclusionShape, grid: GridSpec) -> str:
    payload = json.dumps({"shape": shape.to_dict(), "n": grid.n}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


# ---------------------------------------------------------------------------
# difference operators


def _fwd(a, axis, h):
    return (np.roll(a, -1, axis=axis) - a) * (1.0 / h)


def _bwd(a, axis, h):
    return (a - np.roll(a, 1, axis=axis)) * (1.0 / h)


@dataclass(frozen=True)
class DiscreteOps:
    """grad/curl/div on the periodic staggered grid and their transposes.

    Vector fields are arrays of shape ``(3, N, N, N)``; scalar fields are
    ``(N, N, N)``.  Transposes are with respect to the plain (equivalently
    h^3-weighted) Euclidean inner products on each lattice.
    """

    grid: GridSpec

    @property
    def h(self):
        return self.grid.h

    def grad(self, p):
        """node -> edge"""
        return np.stack([_fwd(p, a, self.h) for a in range(3)])

    def curl(self, e):
        """edge -> face"""
        h = self.h
        ex, ey, ez = e
        return np.stack([
            _fwd(ez, 1, h) - _fwd(ey, 2, h),
            _fwd(ex, 2, h) - _fwd(ez, 0, h),
            _fwd(ey, 0, h) - _fwd(ex, 1, h),
        ])

    def div(self, f):
        """face -> cell"""
        return sum(_fwd(f[a], a, self.h) for a in range(3))

    def grad_t(self, e):
        """edge -> node, transpose of grad (= minus the dual divergence)"""
        return -sum(_bwd(e[a], a, self.h) for a in range(3))

    def curl_t(self, f):
        """face -> edge, transpose of curl (the dual curl)"""
        h = self.h
        fx, fy, fz = f
        return np.stack([
            _bwd(fz, 1, h) - _bwd(fy, 2, h),
            _bwd(fx, 2, h) - _bwd(fz, 0, h),
            _bwd(fy, 0, h) - _bwd(fx, 1, h),
        ])

    def div_t(self, q):
        """cell -> face, transpose of div"""
        return np.stack([-_bwd(q, a, self.h) for a in range(3)])

    def inner(self, a, b):
        """h^3-weighted L2(Y) pairing (no conjugation)."""
        return self.h**3 * np.sum(a * b)


def discrete_ops(grid: GridSpec) -> DiscreteOps:
    return DiscreteOps(grid)


def constant_edge_field(grid: GridSpec, vec) -> np.ndarray:
    vec = np.asarray(vec)
    out = np.empty((3,) + grid.shape, dtype=np.result_type(vec, float))
    for a in range(3):
        out[a] = vec[a]
    return out
