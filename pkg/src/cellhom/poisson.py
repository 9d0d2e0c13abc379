"""Zero-mean periodic Poisson solves by Fourier diagonalization.

The 7-point Laplacian on the N-periodic lattice has symbol

    sigma(m) = (4/h^2) * sum_d sin^2(pi m_d / N)

for every lattice (nodes, cells, each face or edge component), so a staggered
vector field is solved component by component.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import NonZeroMeanSource
from .geometry import GridSpec

MEAN_TOL = 1e-12


@dataclass(frozen=True)
class PoissonSolution:
    psi: np.ndarray
    mean: np.ndarray  # removed source mean, one entry per component


class PeriodicPoisson:
    def __init__(self, grid: GridSpec):
        self.grid = grid
        n, h = grid.n, grid.h
        s = (4.0 / h**2) * np.sin(np.pi * np.arange(n) / n) ** 2
        s_last = s[: n // 2 + 1]
        sym = s[:, None, None] + s[None, :, None] + s_last[None, None, :]
        inv = np.zeros_like(sym)
        inv[sym > 0] = 1.0 / sym[sym > 0]
        self.symbol = sym
        self._inv_symbol = inv
        self._full_symbol = s[:, None, None] + s[None, :, None] + s[None, None, :]

    def _apply_inverse(self, f):
        axes = (-3, -2, -1)
        if np.iscomplexobj(f):
            return self._apply_inverse(f.real) + 1j * self._apply_inverse(f.imag)
        fh = sfft.rfftn(f, axes=axes)
        fh *= self._inv_symbol
        return sfft.irfftn(fh, s=self.grid.shape, axes=axes)

    def solve(self, f: np.ndarray, check_mean: bool = True) -> PoissonSolution:
        """psi with -Lap_h psi = f and zero mean; ``f`` is (N,N,N) or (3,N,N,N)."""
        f = np.asarray(f)
        h3 = self.grid.h**3
        comps = f.reshape((-1,) + self.grid.shape)
        means = h3 * comps.sum(axis=(1, 2, 3))
        if check_mean:
            norm = np.sqrt(h3 * np.sum(np.abs(f) ** 2))
            if np.any(np.abs(means) > MEAN_TOL * norm):
                raise NonZeroMeanSource(f"source means {means} exceed {MEAN_TOL:g} * ||f|| = {MEAN_TOL * norm:.3e}")
        psi = self._apply_inverse(f)
        return PoissonSolution(psi=psi, mean=means)

    def neg_laplacian(self, psi: np.ndarray) -> np.ndarray:
        """-Lap_h applied componentwise in real space (independent of the FFT path)."""
        n = self.grid.n
        out = np.zeros_like(psi)
        for ax in (-3, -2, -1):
            out += 2 * psi - np.roll(psi, 1, axis=ax) - np.roll(psi, -1, axis=ax)
        return out * n**2

    def dirichlet_form(self, psi_f: np.ndarray, psi_g: np.ndarray) -> complex:
        """sum_d <D_d psi_f, D_d psi_g> evaluated through the Fourier symbol."""
        axes = (-3, -2, -1)
        a = sfft.fftn(psi_f, axes=axes)
        b = sfft.fftn(psi_g, axes=axes)
        val = np.sum(self._full_symbol * a * np.conj(b)) / self.grid.n**3
        val = val * self.grid.h**3
        if not (np.iscomplexobj(psi_f) or np.iscomplexobj(psi_g)):
            return float(val.real)
        return val


def solve_poisson(f: np.ndarray, grid: GridSpec | None = None) -> PoissonSolution:
    if grid is None:
        grid = GridSpec(f.shape[-1])
    return PeriodicPoisson(grid).solve(f)
