"""Command line entry point: ``cellhom <subcommand> --config run.json``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunConfig, parse_config
from .errors import CellhomError, ConfigError, SubspaceTooLarge
from .geometry import DiscreteOps, GridSpec, geometry_hash, voxelize
from .io import CatalogCache, cache_key, gnuplot_script, write_vector_field
from .permeability import (
    FrequencyPoint,
    TruncationRule,
    displacement_current,
    mu_eff,
    resonance_list,
    shape_magnetic_field,
    sweep,
)
from .permittivity import effective_permittivity
from .poisson import PeriodicPoisson
from .spectrum import Z0Subspace, solve_spectrum
from .validation import DENSE_MAX_DIM, dense_oracle, identity_suite

log = logging.getLogger("cellhom")

COMMANDS = ("permittivity", "spectrum", "sweep", "fields", "resonances", "validate")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


class Runner:
    def __init__(self, cfg: RunConfig, output: Path, use_cache: bool = True):
        self.cfg = cfg
        self.output = output
        self.use_cache = use_cache
        self.grid = GridSpec(cfg.resolution)
        self._mask = None
        self._catalog = None

    @property
    def mask(self):
        if self._mask is None:
            self._mask = voxelize(self.cfg.geometry, self.grid)
        return self._mask

    @property
    def trunc(self):
        return TruncationRule(self.cfg.n_max, self.cfg.strength_tol)

    def cache(self):
        root = os.environ.get("CELLHOM_CACHE") or self.cfg.cache_dir or str(self.output / ".cellhom-cache")
        return CatalogCache(root)

    def catalog(self):
        if self._catalog is not None:
            return self._catalog
        cfg = self.cfg
        z = Z0Subspace(self.mask)
        if cfg.n_modes > z.dim:
            raise ConfigError("n_modes", f"exceeds the div-free subspace dimension {z.dim}")
        key = cache_key(cfg.geometry.to_dict(), cfg.resolution, cfg.n_modes, cfg.seed)
        cache = self.cache()
        cat = cache.load(key, z) if self.use_cache else None
        if cat is not None:
            log.info("spectrum served from cache %s", key[:12])
        else:
            t0 = time.perf_counter()
            cat = solve_spectrum(z, cfg.n_modes, cfg.seed, geometry_hash=geometry_hash(cfg.geometry, self.grid))
            log.info("spectrum: %d modes in %.1f s", len(cat), time.perf_counter() - t0)
            if self.use_cache:
                cache.store(key, cat)
        self._catalog = cat
        return cat

    # -- subcommands ---------------------------------------------------------
    def permittivity(self):
        tensor = effective_permittivity(self.mask, self.cfg.eps_e)
        out = tensor.to_dict()
        out["volume_fraction"] = self.mask.volume_fraction
        _write_json(self.output / "permittivity.json", out)
        return [self.output / "permittivity.json"]

    def spectrum(self):
        cat = self.catalog()
        out = cat.to_dict()
        eps = self.cfg.eps_r
        for mode in out["modes"]:
            mode["lambda_over_d"] = float(2 * np.pi * np.sqrt(eps.real * mode["alpha"]))
        _write_json(self.output / "spectrum.json", out)
        return [self.output / "spectrum.json"]

    def sweep(self):
        cat = self.catalog()
        table = sweep(cat, self.cfg.sweep.as_range(), self.cfg.eps_r, self.trunc)
        csv_path = self.output / "sweep.csv"
        table.to_csv(csv_path)
        gaps_path = self.output / "gaps.json"
        _write_json(gaps_path, table.summary())
        gp_path = self.output / "sweep.gp"
        gp_path.write_text(gnuplot_script(csv_path.name, table.full_gaps, "effective permeability"))
        return [csv_path, gaps_path, gp_path]

    def fields(self):
        cat = self.catalog()
        written = []
        for lod in self.cfg.fields.lambda_over_d:
            fp = FrequencyPoint(lod, self.cfg.eps_r)
            for name in self.cfg.fields.which:
                k = int(name[1])
                if name[0] == "H":
                    data, lattice = shape_magnetic_field(cat, fp, k, self.trunc), "edge"
                else:
                    data, lattice = displacement_current(cat, fp, k, self.trunc), "face"
                path = self.output / f"{name}_lambda{lod:g}.chvf"
                write_vector_field(path, data, lattice)
                written.append(path)
        return written

    def resonances(self):
        cat = self.catalog()
        res = resonance_list(cat, self.cfg.eps_r, self.cfg.strength_tol)
        path = self.output / "resonances.json"
        _write_json(path, {"eps_r": [self.cfg.eps_r.real, self.cfg.eps_r.imag],
                           "resonances": [r.to_dict() for r in res]})
        return [path]

    def validate(self):
        cfg = self.cfg
        cat = self.catalog()
        fp = FrequencyPoint(cfg.validate.lambda_over_d, cfg.eps_r)
        report = identity_suite(cat, fp, self.trunc, seed=cfg.seed)

        ops = DiscreteOps(self.grid)
        rng = np.random.default_rng(cfg.seed)
        edge = rng.uniform(-1.0, 1.0, (3,) + self.grid.shape)
        node = rng.uniform(-1.0, 1.0, self.grid.shape)
        report.add("div_curl", float(np.abs(ops.div(ops.curl(edge))).max()), 1e-12)
        report.add("curl_grad", float(np.abs(ops.curl(ops.grad(node))).max()), 1e-12)
        src = node - node.mean()
        poisson = PeriodicPoisson(self.grid)
        psi = poisson.solve(src).psi
        report.add("poisson_residual",
                   float(np.abs(poisson.neg_laplacian(psi) - src).max() / np.abs(src).max()), 1e-10)
        z = cat.subspace
        x = rng.standard_normal(z.size)
        px = z.project(x)
        report.add("projector_idempotent", float(np.linalg.norm(z.project(px) - px) / np.linalg.norm(x)), 1e-11)
        y = rng.standard_normal(z.size)
        py = z.project(y)
        report.add("projector_symmetric",
                   float(abs(px @ y - x @ py) / (np.linalg.norm(x) * np.linalg.norm(y))), 1e-11)
        eps = effective_permittivity(self.mask, cfg.eps_e)
        report.add("permittivity_above_matrix", float(max(0.0, -(eps.eigvalsh().min() - cfg.eps_e))), 1e-12)

        out = report.to_dict()
        out["lambda_over_d"] = fp.lambda_over_d
        try:
            oracle = dense_oracle(self.mask, min(cfg.validate.oracle_modes, len(cat)), cat, cfg.seed)
            out["dense_oracle"] = oracle.to_dict()
            out["passed"] = out["passed"] and oracle.passed
        except SubspaceTooLarge as exc:
            out["dense_oracle"] = {"skipped": str(exc), "max_dimension": DENSE_MAX_DIM}
        path = self.output / "validate.json"
        _write_json(path, out)
        if not out["passed"]:
            failed = [c["name"] for c in out["checks"] if not c["passed"]]
            raise CellhomError(f"validation failed: {', '.join(failed) or 'dense_oracle'} (see {path})")
        return [path]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cellhom", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--output", help="output directory (overrides output_dir)")
    parser.add_argument("--no-cache", action="store_true", help="neither read nor write the eigenpair cache")
    parser.add_argument("--modes", type=int, help="override n_modes")
    parser.add_argument("--resolution", type=int, help="override resolution N")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = parse_config(args.config)
        overrides = {}
        if args.modes is not None:
            if args.modes < 1:
                raise ConfigError("--modes", "must be >= 1")
            overrides["n_modes"] = args.modes
        if args.resolution is not None:
            if args.resolution < 4:
                raise ConfigError("--resolution", "must be >= 4")
            overrides["resolution"] = args.resolution
        if overrides:
            cfg = dataclasses.replace(cfg, **overrides)
        output = Path(args.output or cfg.output_dir)
        output.mkdir(parents=True, exist_ok=True)
        runner = Runner(cfg, output, use_cache=not args.no_cache)
        for path in getattr(runner, args.command)():
            print(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CellhomError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
