"""On-disk formats: vector field snapshots, the eigenpair cache and plot scripts."""
from __future__ import annotations

import hashlib
import io
import json
import logging
from pathlib import Path

import numpy as np

from . import __version__
from .spectrum import ModeCatalog, Z0Subspace, catalog_from_arrays

FIELD_MAGIC = b"CHVF1\n"
log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# vector fields


def write_vector_field(path, data: np.ndarray, lattice: str) -> None:
    """Write a (3, N, N, N) field: header, dims line, then components x-fastest.

    The dims line is ``N N N ncomp dtype lattice`` with dtype ``f8`` or
    ``c16`` (little-endian) and lattice ``edge`` or ``face``.
    """
    data = np.asarray(data)
    ncomp, nx, ny, nz = data.shape
    kind = "c16" if np.iscomplexobj(data) else "f8"
    dtype = np.dtype("<c16") if kind == "c16" else np.dtype("<f8")
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(f"{nx} {ny} {nz} {ncomp} {kind} {lattice}\n".encode("ascii"))
        for comp in data:
            fh.write(np.asarray(comp, dtype=dtype).ravel(order="F").tobytes())


def read_vector_field(path):
    """Inverse of :func:`write_vector_field`; returns ``(data, lattice)``."""
    raw = Path(path).read_bytes()
    if not raw.startswith(FIELD_MAGIC):
        raise ValueError(f"{path}: missing CHVF1 header")
    line, _, payload = raw[len(FIELD_MAGIC):].partition(b"\n")
    parts = line.decode("ascii").split()
    if len(parts) != 6 or parts[4] not in ("f8", "c16"):
        raise ValueError(f"{path}: malformed dimension line")
    nx, ny, nz, ncomp = (int(t) for t in parts[:4])
    dtype = np.dtype("<c16") if parts[4] == "c16" else np.dtype("<f8")
    flat = np.frombuffer(payload, dtype=dtype)
    if flat.size != ncomp * nx * ny * nz:
        raise ValueError(f"{path}: payload size does not match header")
    data = np.stack([c.reshape((nx, ny, nz), order="F") for c in flat.reshape(ncomp, -1)])
    return data, parts[5]


# ---------------------------------------------------------------------------
# eigenpair cache


def cache_key(geometry: dict, resolution: int, n_modes: int, seed: int, version: str = __version__) -> str:
    payload = json.dumps(
        {"geometry": geometry, "resolution": resolution, "n_modes": n_modes, "seed": seed, "version": version},
        sort_keys=True, separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode()).hexdigest()


class CatalogCache:
    """Directory of ``<key>.npz`` payloads with ``<key>.sha256`` digests beside them."""

    def __init__(self, root):
        self.root = Path(root)

    def _paths(self, key):
        return self.root / f"{key}.npz", self.root / f"{key}.sha256"

    def store(self, key: str, catalog: ModeCatalog) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        buf = io.BytesIO()
        np.savez(
            buf,
            alphas=catalog.alphas,
            fields=catalog.vectors,
            residuals=np.array([m.residual for m in catalog.modes]),
            meta=np.array(json.dumps({"geometry_hash": catalog.geometry_hash,
                                      "diagnostics": catalog.diagnostics}, sort_keys=True)),
        )
        blob = buf.getvalue()
        data_path, digest_path = self._paths(key)
        tmp = data_path.with_suffix(".tmp")
        tmp.write_bytes(blob)
        tmp.replace(data_path)
        digest_path.write_text(hashlib.sha256(blob).hexdigest() + "\n")

    def load(self, key: str, z: Z0Subspace) -> ModeCatalog | None:
        """Cached catalog, or ``None`` when absent, corrupt or inconsistent with ``z``."""
        data_path, digest_path = self._paths(key)
        if not data_path.is_file() or not digest_path.is_file():
            return None
        blob = data_path.read_bytes()
        if hashlib.sha256(blob).hexdigest() != digest_path.read_text().strip():
            log.warning("cache entry %s failed its digest check; recomputing", key[:12])
            return None
        try:
            with np.load(io.BytesIO(blob), allow_pickle=False) as npz:
                alphas, fields, residuals = npz["alphas"], npz["fields"], npz["residuals"]
                meta = json.loads(str(npz["meta"]))
        except (ValueError, KeyError, OSError) as exc:
            log.warning("cache entry %s unreadable (%s); recomputing", key[:12], exc)
            return None
        if fields.ndim != 2 or fields.shape[1] != z.size:
            log.warning("cache entry %s does not match the subspace; recomputing", key[:12])
            return None
        return catalog_from_arrays(z, alphas, fields, residuals, meta["geometry_hash"], meta["diagnostics"])


# ---------------------------------------------------------------------------
# plotting


def gnuplot_script(csv_name: str, gaps: list, title: str = "") -> str:
    """Plot script for the sweep CSV: Re/Im of the diagonal and the Re eigenvalues."""
    lines = [
        "set datafile separator ','",
        "set key outside right",
        "set xlabel 'lambda/d'",
        "set ylabel 'mu_eff'",
        "set grid",
        f"set title '{title}'" if title else "unset title",
        "set yrange [-10:10]",
    ]
    for i, (lo, hi) in enumerate(gaps, start=1):
        lines.append(f"set object {i} rect from {lo!r},graph 0 to {hi!r},graph 1 fc rgb '#dddddd' behind")
    lines.append(
        f"plot '{csv_name}' using 1:2 with lines title 'Re mu11', "
        f"'' using 1:4 with lines title 'Re mu22', "
        f"'' using 1:6 with lines title 'Re mu33', "
        f"'' using 1:8 with lines title 'Re mu12', "
        f"'' using 1:3 with lines dt 2 title 'Im mu11', "
        f"'' using 1:14 with lines lw 2 title 'eig1', "
        f"'' using 1:16 with lines lw 2 title 'eig3'"
    )
    return "\n".join(lines) + "\n"
