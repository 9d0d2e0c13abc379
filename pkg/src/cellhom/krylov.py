"""Krylov solvers: preconditioned CG and a restarted block Lanczos eigensolver."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CgNoConvergence, LanczosStagnation


def pcg(apply_a, b, diag, tol=1e-10, max_iter=1000, x0=None):
    """Jacobi-preconditioned conjugate gradients for an SPD operator.

    Stops when ||b - A x|| <= tol * ||b||.  Returns ``(x, iterations, relres)``.
    """
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else x0.copy()
    if bnorm == 0.0:
        return x, 0, 0.0
    r = b - apply_a(x) if x0 is not None else b.copy()
    z = r / diag
    p = z.copy()
    rz = np.vdot(r, z).real
    for it in range(1, max_iter + 1):
        ap = apply_a(p)
        step = rz / np.vdot(p, ap).real
        x += step * p
        r -= step * ap
        rel = np.linalg.norm(r) / bnorm
        if rel <= tol:
            # guard against drift of the recursive residual
            rel = np.linalg.norm(b - apply_a(x)) / bnorm
            if rel <= tol:
                return x, it, rel
        z = r / diag
        rz_new = np.vdot(r, z).real
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise CgNoConvergence(max_iter, rel)


@dataclass
class LanczosResult:
    values: np.ndarray  # descending
    vectors: np.ndarray  # columns, Euclidean-orthonormal
    residuals: np.ndarray
    matvecs: int
    restarts: int
    history: list = field(default_factory=list)


def _orthonormalize_against(basis, block, rng, project, scale):
    """Column-wise Gram-Schmidt (two passes) of ``block`` against ``basis``.

    Deficient columns are replaced by fresh random directions (projected into
    the admissible subspace) so the block keeps its width while the space lasts.
    """
    out = []
    for col in block.T:
        v = col.copy()
        for _ in range(2):
            if basis.shape[1]:
                v -= basis @ (basis.T @ v)
            for w in out:
                v -= w * (w @ v)
        nv = np.linalg.norm(v)
        tries = 0
        while nv <= 1e-10 * scale and tries < 3:
            v = project(rng.standard_normal(block.shape[0]))
            for _ in range(2):
                if basis.shape[1]:
                    v -= basis @ (basis.T @ v)
                for w in out:
                    v -= w * (w @ v)
            nv = np.linalg.norm(v)
            scale = max(scale, 1.0)
            tries += 1
        if nv <= 1e-10 * scale:
            continue  # admissible space exhausted
        # cancellation amplifies rounding outside the admissible space; pull
        # the direction back in and sweep once more
        v = project(v / nv)
        if basis.shape[1]:
            v -= basis @ (basis.T @ v)
        for w in out:
            v -= w * (w @ v)
        out.append(v / np.linalg.norm(v))
    if not out:
        return np.zeros((block.shape[0], 0))
    return np.array(out).T


def block_lanczos(
    apply: Callable[[np.ndarray], np.ndarray],
    n_wanted: int,
    start: np.ndarray,
    *,
    project: Callable[[np.ndarray], np.ndarray] = lambda v: v,
    max_dim: int | None = None,
    keep: int | None = None,
    tol: float = 1e-8,
    max_restarts: int = 20,
    dim: int | None = None,
    seed: int = 0,
) -> LanczosResult:
    """Largest eigenpairs of a symmetric operator by thick-restart block Lanczos.

    The Krylov basis is fully reorthogonalized; eigenpairs come from an
    explicit Rayleigh-Ritz step on ``V^T A V`` so the returned vectors are
    orthonormal and ``A``-orthogonal to rounding.  ``start`` holds the initial
    block as columns (its width is the block size, which must be at least the
    largest exact multiplicity among the wanted eigenvalues).
    """
    n, b = start.shape
    if dim is None:
        dim = n
    if n_wanted > dim:
        raise ValueError(f"requested {n_wanted} eigenpairs from a {dim}-dimensional space")
    if max_dim is None:
        max_dim = max(2 * n_wanted + 2 * b, n_wanted + 10 + b)
    max_dim = min(max(max_dim, n_wanted + 2 * b), dim)
    if keep is None:
        keep = n_wanted + b
    keep = max(n_wanted, min(keep, max_dim - b))
    rng = np.random.default_rng(seed)

    def fresh_block():
        return np.column_stack([project(rng.standard_normal(n)) for _ in range(b)])

    V = np.zeros((n, 0))
    W = np.zeros((n, 0))
    Q = _orthonormalize_against(V, start, rng, project, np.linalg.norm(start, axis=0).max())
    matvecs = 0
    history = []
    for restart in range(max_restarts + 1):
        # grow by whole blocks only: clipping a block would drop part of the
        # residual space and break the Krylov relation the restart relies on
        while Q.shape[1] and V.shape[1] + Q.shape[1] <= max_dim:
            AQ = np.column_stack([apply(q) for q in Q.T])
            matvecs += Q.shape[1]
            V = np.hstack([V, Q])
            W = np.hstack([W, AQ])
            Q = _orthonormalize_against(V, AQ, rng, project, np.linalg.norm(AQ, axis=0).max())
        H = V.T @ W
        theta, Y = np.linalg.eigh(0.5 * (H + H.T))
        theta, Y = theta[::-1], Y[:, ::-1]
        X = V @ Y
        AX = W @ Y
        resid = np.linalg.norm(AX - X * theta, axis=0)
        converged = int(np.sum(resid[:n_wanted] <= tol))
        history.append({"restart": restart, "dim": int(V.shape[1]), "converged": converged,
                        "max_residual": float(resid[:n_wanted].max())})
        if converged == n_wanted or V.shape[1] >= dim:
            return LanczosResult(theta[:n_wanted], X[:, :n_wanted], resid[:n_wanted],
                                 matvecs, restart, history)
        V = X[:, :keep].copy()
        W = AX[:, :keep].copy()
        if Q.shape[1] == 0:
            Q = _orthonormalize_against(V, fresh_block(), rng, project, 1.0)
    raise LanczosStagnation(converged, n_wanted, resid[:n_wanted])
