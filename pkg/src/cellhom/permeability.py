"""Frequency-dependent effective permeability from the Mie spectrum.

Everything is dimensionless: k0 = 2 pi / (lambda/d) and w = eps_r k0^2.  Two
algebraically equal series are provided,

    mu = I + 1/4 sum_n w / (1 - w alpha_n) m_n (x) m_n        (strength form)
    mu = I + sum_n w / (lambda_n - w) a_n (x) a_n             (average form)

with a_n the bulk average of u_n.  The shape magnetic field H^k, the
displacement current J^k = curl H^k and the moment of J^k give a third route
to mu - I.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ResonanceSingularity
from .spectrum import MULTIPLET_GAP, ModeCatalog

POLE_TOL = 1e-9
RANK_TOL = 1e-8
GAP_XTOL = 1e-4


@dataclass(frozen=True)
class FrequencyPoint:
    lambda_over_d: float
    eps_r: complex

    def __post_init__(self):
        lam = float(self.lambda_over_d)
        if not (np.isfinite(lam) and lam > 0):
            raise ValueError(f"lambda/d must be positive and finite, got {self.lambda_over_d!r}")
        eps = complex(self.eps_r)
        if not np.isfinite(eps) or eps.imag < 0:
            raise ValueError(f"eps_r must be finite with Im(eps_r) >= 0, got {self.eps_r!r}")
        object.__setattr__(self, "lambda_over_d", lam)
        object.__setattr__(self, "eps_r", eps)

    @classmethod
    def from_k0(cls, k0: float, eps_r: complex) -> "FrequencyPoint":
        return cls(2 * math.pi / k0, eps_r)

    @property
    def k0(self) -> float:
        return 2 * math.pi / self.lambda_over_d

    @property
    def w(self) -> complex:
        return self.eps_r * self.k0**2

    @property
    def lossless(self) -> bool:
        return self.eps_r.imag == 0


@dataclass(frozen=True)
class TruncationRule:
    """Keep modes 1..n_max, then drop those with |m|^2 < strength_tol * max |m|^2."""

    n_max: int = 40
    strength_tol: float = 1e-6

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if not 0 <= self.strength_tol < 1:
            raise ValueError("strength_tol must lie in [0, 1)")

    def select(self, catalog: ModeCatalog):
        """Indices of retained modes and the dropped share of total |m|^2."""
        m2 = np.sum(catalog.strengths[: self.n_max] ** 2, axis=1)
        if m2.size == 0 or m2.max() == 0:
            return np.array([], dtype=int), 0.0
        keep = np.flatnonzero(m2 >= self.strength_tol * m2.max())
        dropped = float((m2.sum() - m2[keep].sum()) / m2.sum())
        return keep, dropped


DEFAULT_TRUNCATION = TruncationRule()


@dataclass(frozen=True)
class PermeabilityTensor:
    matrix: np.ndarray
    point: FrequencyPoint
    n_used: int
    truncation_residual: float

    @property
    def real_eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix.real)

    @property
    def imag_eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix.imag)

    def to_dict(self):
        return {
            "lambda_over_d": self.point.lambda_over_d,
            "eps_r": [self.point.eps_r.real, self.point.eps_r.imag],
            "mu_re": self.matrix.real.tolist(),
            "mu_im": self.matrix.imag.tolist(),
            "n_used": self.n_used,
            "truncation_residual": self.truncation_residual,
        }


def _check_poles(alphas, fp: FrequencyPoint, indices):
    if not fp.lossless:
        return
    gaps = np.abs(1.0 - fp.w * alphas)
    bad = np.flatnonzero(gaps < POLE_TOL)
    if bad.size:
        raise ResonanceSingularity(int(indices[bad[0]]), fp.lambda_over_d)


def mu_eff(catalog: ModeCatalog, fp: FrequencyPoint, trunc: TruncationRule = DEFAULT_TRUNCATION,
           form: str = "strength") -> PermeabilityTensor:
    """Truncated series for mu_eff; ``form`` is ``strength`` or ``average``."""
    if len(catalog) == 0:
        raise ValueError("empty mode catalog")
    keep, dropped = trunc.select(catalog)
    alphas = catalog.alphas[keep]
    _check_poles(alphas, fp, keep)
    w = fp.w
    if form == "strength":
        m = catalog.strengths[keep]
        coef = 0.25 * w / (1.0 - w * alphas)
        series = np.einsum("n,nk,nl->kl", coef, m, m)
    elif form == "average":
        a = catalog.avg_u[keep]
        coef = w / (1.0 / alphas - w)
        series = np.einsum("n,nk,nl->kl", coef, a, a)
    else:
        raise ValueError(f"unknown form {form!r}")
    mu = np.eye(3, dtype=complex) + series
    return PermeabilityTensor(mu, fp, len(keep), dropped)


def _field_coefficients(catalog, fp, k, trunc):
    if k not in (1, 2, 3):
        raise ValueError("axis k must be 1, 2 or 3")
    keep, _ = trunc.select(catalog)
    alphas = catalog.alphas[keep]
    _check_poles(alphas, fp, keep)
    return keep, alphas


def shape_magnetic_field(catalog: ModeCatalog, fp: FrequencyPoint, k: int,
                         trunc: TruncationRule = DEFAULT_TRUNCATION) -> np.ndarray:
    """H^k = e_k + sum_n <e_k, u_n> w / (lambda_n - w) u_n on edges (complex)."""
    keep, alphas = _field_coefficients(catalog, fp, k, trunc)
    w = fp.w
    H = np.zeros((3,) + catalog.grid.shape, dtype=complex)
    H[k - 1] = 1.0
    for n, alpha in zip(keep, alphas):
        c = catalog.modes[n].avg_u[k - 1] * w / (1.0 / alpha - w)
        H += c * catalog.u_field(n)
    return H


def displacement_current(catalog: ModeCatalog, fp: FrequencyPoint, k: int,
                         trunc: TruncationRule = DEFAULT_TRUNCATION) -> np.ndarray:
    """J^k = 1/2 sum_n w / (1 - alpha_n w) (m_n)_k f_n as a full face field."""
    keep, alphas = _field_coefficients(catalog, fp, k, trunc)
    w = fp.w
    z = catalog.subspace
    J = np.zeros(z.size, dtype=complex)
    for n, alpha in zip(keep, alphas):
        mode = catalog.modes[n]
        J += 0.5 * w / (1.0 - alpha * w) * mode.strength[k - 1] * mode.f
    return z.scatter(J)


def moment_permeability(catalog: ModeCatalog, fp: FrequencyPoint,
                        trunc: TruncationRule = DEFAULT_TRUNCATION) -> np.ndarray:
    """mu - I rebuilt from the magnetic moments 1/2 int y ^ J^k (row k)."""
    z = catalog.subspace
    rows = [0.5 * z.strength(z.gather(displacement_current(catalog, fp, k, trunc))) for k in (1, 2, 3)]
    return np.array(rows)


# ---------------------------------------------------------------------------
# multiplets and resonances


@dataclass(frozen=True)
class ModeStrengthMatrix:
    lam: float
    matrix: np.ndarray  # sum of avg_u (x) avg_u over the multiplet
    modes: tuple  # 0-based indices

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    @property
    def norm(self) -> float:
        return float(np.abs(self.eigenvalues).max())

    @property
    def rank(self) -> int:
        ev = self.eigenvalues
        top = np.abs(ev).max()
        if top == 0:
            return 0
        return int(np.sum(ev > RANK_TOL * top))

    def kernel(self) -> np.ndarray:
        """Orthonormal kernel directions (rows), the propagative directions of a partial gap."""
        ev, vec = np.linalg.eigh(self.matrix)
        top = np.abs(ev).max()
        return vec[:, ev <= RANK_TOL * top].T if top > 0 else np.eye(3)


@dataclass(frozen=True)
class Resonance:
    strength: ModeStrengthMatrix
    alpha: float
    lambda_over_d: float
    contributes: bool

    @property
    def modes(self):
        return self.strength.modes

    @property
    def rank(self):
        return self.strength.rank

    def to_dict(self):
        return {
            "modes": [n + 1 for n in self.modes],
            "lambda": self.strength.lam,
            "alpha": self.alpha,
            "lambda_over_d": self.lambda_over_d,
            "rank": self.rank,
            "contributes": self.contributes,
            "strength_matrix": self.strength.matrix.tolist(),
            "kernel": self.strength.kernel().tolist() if self.contributes else [],
        }


def mode_strength_matrices(catalog: ModeCatalog, gap: float = MULTIPLET_GAP) -> list:
    out = []
    avg = catalog.avg_u
    for group in catalog.multiplets(gap):
        a = avg[group]
        lam = float(np.mean([catalog.modes[n].lam for n in group]))
        out.append(ModeStrengthMatrix(lam, a.T @ a, tuple(group)))
    return out


def resonance_list(catalog: ModeCatalog, eps_r: complex, strength_tol: float = 1e-6,
                   gap: float = MULTIPLET_GAP) -> list:
    """Resonant multiplets sorted by lambda/d (descending)."""
    if len(catalog) == 0:
        raise ValueError("empty mode catalog")
    mats = mode_strength_matrices(catalog, gap)
    top = max(m.norm for m in mats)
    out = []
    for m in mats:
        alpha = 1.0 / m.lam
        lod = 2 * math.pi * math.sqrt(complex(eps_r).real * alpha)
        out.append(Resonance(m, alpha, lod, bool(top > 0 and m.norm > strength_tol * top)))
    out.sort(key=lambda r: -r.lambda_over_d)
    return out


# ---------------------------------------------------------------------------
# sweeps

COMPONENTS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


@dataclass
class SweepTable:
    lambda_over_d: np.ndarray
    mu: np.ndarray  # (rows, 3, 3) complex, NaN on flagged rows
    eigenvalues: np.ndarray  # (rows, 3) eigenvalues of Re mu, ascending
    flags: list
    eps_r: complex
    full_gaps: list = field(default_factory=list)
    negative_intervals: list = field(default_factory=list)
    partial_gaps: list = field(default_factory=list)
    resonances: list = field(default_factory=list)

    def header(self) -> list:
        cols = ["lambda_over_d"]
        for i, j in COMPONENTS:
            cols += [f"re_mu{i + 1}{j + 1}", f"im_mu{i + 1}{j + 1}"]
        return cols + ["eig1", "eig2", "eig3", "flag"]

    def rows(self):
        for t, lod in enumerate(self.lambda_over_d):
            row = [float(lod)]
            for i, j in COMPONENTS:
                row += [float(self.mu[t, i, j].real), float(self.mu[t, i, j].imag)]
            row += [float(e) for e in self.eigenvalues[t]]
            yield row + [self.flags[t]]

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            for row in self.rows():
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])

    def summary(self) -> dict:
        return {
            "eps_r": [self.eps_r.real, self.eps_r.imag],
            "full_gaps": [list(g) for g in self.full_gaps],
            "negative_intervals": [list(g) for g in self.negative_intervals],
            "partial_gaps": self.partial_gaps,
            "resonances": [r.to_dict() for r in self.resonances],
            "flagged_rows": [float(self.lambda_over_d[i]) for i, f in enumerate(self.flags) if f],
        }


def _bisect(fn, a, b, fa_neg, xtol=GAP_XTOL):
    """Sign change of ``fn < 0`` between a (where it is ``fa_neg``) and b."""
    while abs(b - a) > xtol:
        mid = 0.5 * (a + b)
        try:
            neg = fn(mid) < 0
        except ResonanceSingularity:
            mid = mid + 0.25 * xtol  # step off an exact pole
            neg = fn(mid) < 0
        if neg == fa_neg:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def _intervals(lods, values, fn):
    """Maximal intervals where ``values < 0`` with bisected endpoints."""
    neg = values < 0
    out = []
    t, n = 0, len(lods)
    while t < n:
        if not neg[t]:
            t += 1
            continue
        s = t
        while t + 1 < n and neg[t + 1]:
            t += 1
        lo = lods[s] if s == 0 or not np.isfinite(values[s - 1]) else _bisect(fn, lods[s], lods[s - 1], True)
        hi = lods[t] if t == n - 1 or not np.isfinite(values[t + 1]) else _bisect(fn, lods[t], lods[t + 1], True)
        out.append((float(min(lo, hi)), float(max(lo, hi))))
        t += 1
    return out


def sweep(catalog: ModeCatalog, lambda_range, eps_r: complex,
          trunc: TruncationRule = DEFAULT_TRUNCATION) -> SweepTable:
    """Evaluate mu_eff on a uniform lambda/d grid and locate negative bands."""
    lmin, lmax, steps = lambda_range
    steps = int(steps)
    if not lmin > 0 or not lmax > lmin or steps < 2:
        raise ValueError("sweep needs 0 < lambda_min < lambda_max and steps >= 2")
    eps_r = complex(eps_r)
    lods = np.linspace(lmin, lmax, steps)
    mu = np.full((steps, 3, 3), np.nan, dtype=complex)
    eig = np.full((steps, 3), np.nan)
    flags = []
    for t, lod in enumerate(lods):
        try:
            tensor = mu_eff(catalog, FrequencyPoint(lod, eps_r), trunc)
        except ResonanceSingularity:
            flags.append("singular")
            continue
        mu[t] = tensor.matrix
        eig[t] = tensor.real_eigenvalues
        flags.append("")

    def eig_at(lod):
        return mu_eff(catalog, FrequencyPoint(lod, eps_r), trunc).real_eigenvalues

    full = _intervals(lods, eig[:, 2], lambda x: eig_at(x)[2])
    negative = _intervals(lods, eig[:, 0], lambda x: eig_at(x)[0])
    resonances = resonance_list(catalog, eps_r, trunc.strength_tol)
    partial = []
    for lo, hi in negative:
        covered = sum(min(hi, g_hi) - max(lo, g_lo) for g_lo, g_hi in full if g_hi > lo and g_lo < hi)
        if (hi - lo) - covered <= 2 * GAP_XTOL:
            continue  # every direction is evanescent here: a full gap
        mid = 0.5 * (lo + hi)
        contributing = [r for r in resonances if r.contributes]
        near = min(contributing, key=lambda r: abs(r.lambda_over_d - mid)) if contributing else None
        partial.append({
            "interval": [lo, hi],
            "multiplet": [n + 1 for n in near.modes] if near else [],
            "rank": near.rank if near else 0,
            "propagative_directions": near.strength.kernel().tolist() if near else [],
        })
    return SweepTable(lods, mu, eig, flags, eps_r, full, negative, partial, resonances)
