"""Batch front-end: ``python -m niche --config run.json [--seed N] [--out DIR] [--quiet] [--workers K]``.

Exit status: 0 success, 1 validation failure, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import artifacts
from .config import ConfigError, RunConfig, parse_config, serialize
from .kernels import EffectiveCoefficients
from .lattice import GridField, make_lattice
from .particles import SimConfig, make_phantom, run_ensemble, run_phantom_process
from .pde import make_operator, point_mass, solve
from .validation import (
    GridMismatchError,
    compare_particle_pde,
    compute_c_o,
    compute_c_star,
    default_suite,
    exterior_probe_cells,
    l1_on_lattice,
    phantom_extension_residual,
)

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class Reporter:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, msg: str) -> None:
        if not self.quiet:
            print(msg, flush=True)


def _table_field(cfg: RunConfig, domain, band: float) -> GridField:
    """Tabulated initial density (snapshot CSV) placed on the run's lattice."""
    tab = artifacts.read_snapshot_csv(cfg.initial.path)
    lat = make_lattice(domain, cfg.dx, band)
    interior = domain.contains(lat.centers())
    vals = np.zeros(lat.shape)
    for c, d in zip(tab.centers, tab.density):
        idx = lat.index_of(c)
        if not np.allclose(lat.centers()[idx], c, atol=1e-9 * lat.dx):
            raise ConfigError(f"{cfg.initial.path}: cell centre {c} is not on the grid with dx={cfg.dx!r}")
        vals[idx] = d
    return GridField(lat, np.where(interior, vals, 0.0), interior)


def _sim_config(cfg: RunConfig, domain, band: float = 0.0) -> SimConfig:
    init = cfg.initial
    table = _table_field(cfg, domain, band) if init.law == "tabulated" else None
    x0 = None
    if init.law == "point":
        x0 = init.x0[0] if domain.n == 1 else init.x0
    return SimConfig(cfg.params, domain, cfg.N or 1, cfg.T, init.law, x0, cfg.seed, cfg.dx, cfg.snapshots, table,
                     cfg.workers)


def _hist_sidecar(cfg, h) -> dict:
    return {
        "time": h.time, "step": h.step, "N": h.total, "seed": cfg.seed, "dx": cfg.dx, "tau": cfg.params.tau,
        "volumes": h.grid.volumes,
    }


def cmd_simulate(cfg: RunConfig, say) -> int:
    domain = cfg.domain.build()
    hists = run_ensemble(_sim_config(cfg, domain))
    for h in hists:
        base = os.path.join(cfg.out, f"hist_step_{h.step:06d}")
        artifacts.write_snapshot_csv(base + ".csv", h.centers, h.density, h.counts)
        artifacts.write_json(base + ".json", _hist_sidecar(cfg, h))
        err = abs(float(np.sum(h.density * h.grid.volumes)) - 1.0)
        say(f"t={h.time:.6g} step={h.step} mass={h.total / cfg.N:.12g} residual={err:.3g}")
    return EXIT_OK


def _coefficients(cfg: RunConfig, n: int) -> EffectiveCoefficients:
    c = EffectiveCoefficients.from_params(cfg.params, n)
    if cfg.alpha_override is None and cfg.beta_override is None:
        return c
    return EffectiveCoefficients(
        alpha=c.alpha if cfg.alpha_override is None else cfg.alpha_override,
        beta=c.beta if cfg.beta_override is None else cfg.beta_override,
        c_o=c.c_o,
    )


def _pde_initial(cfg: RunConfig, op, domain):
    init = cfg.initial
    if init.law == "point":
        return point_mass(op, init.x0)
    if init.law == "uniform":
        return np.where(op.interior, 1.0 / (op.interior.sum() * op.lattice.cell_volume), 0.0)
    if init.law == "tabulated":
        return _table_field(cfg, domain, cfg.band).values
    lo, hi = domain.bounds

    def cosine(x):
        x0 = x if domain.n == 1 else x[:, 0]
        return np.cos(init.mode * math.pi * (x0 - lo[0]) / (hi[0] - lo[0])) + init.offset

    return cosine


def _solve(cfg: RunConfig, domain, times):
    op = make_operator(domain, cfg.dx, cfg.s, cfg.band)
    return op, solve(op, _coefficients(cfg, domain.n), _pde_initial(cfg, op, domain), times)


def _write_field(cfg, op, f, prefix="field"):
    base = os.path.join(cfg.out, f"{prefix}_step_{f.meta['steps']:06d}")
    centers = op.lattice.centers()[op.interior]
    artifacts.write_snapshot_csv(base + ".csv", centers, f.values[op.interior])
    artifacts.write_json(base + ".json", f.meta)
    return base


def cmd_solve(cfg: RunConfig, say) -> int:
    domain = cfg.domain.build()
    op, fields = _solve(cfg, domain, cfg.snapshot_times)
    for f in fields:
        _write_field(cfg, op, f)
        m = f.meta
        say(f"t={m['time']:.6g} steps={m['steps']} mass={m['mass']:.12g} "
            f"residual={m['nonlocal_residual_max']:.3g} local={m['local_residual_max']:.3g}")
    return EXIT_OK


def cmd_phantom(cfg: RunConfig, say) -> int:
    domain = cfg.domain.build()
    setup = make_phantom(domain, cfg.params, cfg.dx, cfg.band)
    fields = run_phantom_process(_sim_config(cfg, domain, cfg.band), setup)
    lat = setup.lattice
    centers = lat.centers()
    dist = domain.distance_to_boundary(centers)
    band = ~setup.omega & (dist <= cfg.band * domain.diameter)
    for f in fields:
        step = f.meta["steps"]
        probes = exterior_probe_cells(f, domain, 20, max_distance=cfg.band * domain.diameter)
        f.meta["extension_residual_max"] = phantom_extension_residual(f, domain, cfg.s, probes)
        f.meta.update(dx=cfg.dx, far_value=f.far_value, tau=cfg.params.tau)
        base = os.path.join(cfg.out, f"phantom_step_{step:06d}")
        artifacts.write_snapshot_csv(base + ".csv", centers[setup.omega], f.values[setup.omega])
        artifacts.write_snapshot_csv(os.path.join(cfg.out, f"phantom_band_step_{step:06d}.csv"),
                                     centers[band], f.values[band])
        artifacts.write_json(base + ".json", f.meta)
        say(f"t={f.meta['time']:.6g} step={step} mass={f.mass:.12g} residual={f.meta['extension_residual_max']:.3g}")
    return EXIT_OK


def cmd_compare(cfg: RunConfig, say) -> int:
    if cfg.inputs is not None:
        a = artifacts.read_snapshot_csv(cfg.inputs[0])
        b = artifacts.read_snapshot_csv(cfg.inputs[1])
        dxa, dxb = a.meta.get("dx"), b.meta.get("dx")
        if dxa is None or dxb is None:
            raise GridMismatchError("both inputs need a JSON sidecar recording dx")
        if not math.isclose(dxa, dxb, rel_tol=1e-12):
            raise GridMismatchError(f"grid spacings differ: {dxa!r} vs {dxb!r}")
        n = a.centers.shape[1]
        va = np.asarray(a.meta.get("volumes", np.full(len(a.density), dxa**n)), float)
        vb = np.asarray(b.meta.get("volumes", np.full(len(b.density), dxb**n)), float)
        l1 = l1_on_lattice(a.centers, a.density, va, b.centers, b.density, vb, dxa)
        artifacts.write_json(os.path.join(cfg.out, "compare.json"),
                             {"histogram": cfg.inputs[0], "field": cfg.inputs[1], "l1": l1})
        say(f"l1={l1:.6g}")
        return EXIT_OK
    domain = cfg.domain.build()
    hists = run_ensemble(_sim_config(cfg, domain))
    times = [h.time for h in hists]  # the τ-lattice times the particles actually reached
    op, fields = _solve(cfg, domain, times)
    rows = []
    for h, f in zip(hists, fields):
        hb = os.path.join(cfg.out, f"hist_step_{h.step:06d}")
        artifacts.write_snapshot_csv(hb + ".csv", h.centers, h.density, h.counts)
        artifacts.write_json(hb + ".json", _hist_sidecar(cfg, h))
        _write_field(cfg, op, f)
        l1 = compare_particle_pde(h, f)
        rows.append({"time": h.time, "step": h.step, "l1": l1, "pde_mass": f.mass})
        say(f"t={h.time:.6g} step={h.step} mass={f.mass:.12g} l1={l1:.6g}")
    artifacts.write_json(os.path.join(cfg.out, "compare.json"), {"snapshots": rows})
    return EXIT_OK


def cmd_validate(cfg: RunConfig, say) -> int:
    report = default_suite(cfg.domain.build(), cfg.params, cfg.dx, samples=cfg.samples, seed=cfg.seed, log=say)
    with open(os.path.join(cfg.out, "report.json"), "w") as f:
        f.write(report.to_json() + "\n")
    failed = [e.id for e in report.entries.values() if not e.passed]
    say(f"{len(report.entries) - len(failed)}/{len(report.entries)} checks passed")
    return EXIT_OK if not failed else EXIT_VALIDATION


def cmd_constants(cfg: RunConfig, say) -> int:
    out = {"c_o": {str(n): compute_c_o(n)[0] for n in (1, 2, 3)}, "halfspace": {}}
    for n in (1, 2):
        hc = compute_c_star(n, samples=cfg.samples, seed=cfg.seed)
        out["halfspace"][str(n)] = {
            "c_star": hc.c_star, "c_star_se": hc.c_star_se, "vector": hc.vector, "vector_se": hc.vector_se,
            "a_0": hc.a_0, "b_0": hc.b_0, "varpi": hc.varpi, "method": hc.method,
            "c_star_quadrature": hc.c_star_quadrature,
        }
    n = cfg.domain.build().n
    c = EffectiveCoefficients.from_params(cfg.params, n)
    p = cfg.params
    out["process"] = {"n": n, "alpha": c.alpha, "beta": c.beta, "tau": p.tau, "lambda": p.lam, "walk_radius": p.walk_radius}
    artifacts.write_json(os.path.join(cfg.out, "constants.json"), out)
    say(f"c_o(1..3)={[out['c_o'][k] for k in '123']}")
    say(f"c_star(1)={out['halfspace']['1']['c_star']!r} c_star(2)={out['halfspace']['2']['c_star']:.6g}"
        f"±{out['halfspace']['2']['c_star_se']:.2g}")
    say(f"alpha={c.alpha!r} beta={c.beta!r} tau={p.tau!r} walk_radius={p.walk_radius!r}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "phantom": cmd_phantom,
    "compare": cmd_compare,
    "validate": cmd_validate,
    "constants": cmd_constants,
}


def run(cfg: RunConfig, quiet: bool = False) -> int:
    """Dispatch one subcommand; artifacts go to ``cfg.out``."""
    say = Reporter(quiet)
    try:
        os.makedirs(cfg.out, exist_ok=True)
        if not os.access(cfg.out, os.W_OK):
            raise PermissionError(cfg.out)
    except OSError as e:
        print(f"error: output directory not writable: {e}", file=sys.stderr)
        return EXIT_CONFIG
    with open(os.path.join(cfg.out, "config.json"), "w") as f:
        f.write(serialize(cfg) + "\n")
    if cfg.s is not None and not cfg.params.lam_is_integer:
        say(f"note: lambda = h^(s-1) = {cfg.params.lam:.6g} is not an integer; treated as real")
    try:
        return COMMANDS[cfg.subcommand](cfg, say)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - every failure maps to a status
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="niche", description="Mixed local/nonlocal dispersal: simulate, solve, validate.")
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--out", default=None, help="override the output directory")
    ap.add_argument("--quiet", action="store_true", help="suppress per-snapshot summaries")
    ap.add_argument("--workers", type=int, default=None,
                    help="worker threads (default: $NICHE_WORKERS, else available cores)")
    args = ap.parse_args(argv)
    try:
        with open(args.config) as f:
            cfg = parse_config(f.read())
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be a 64-bit non-negative integer")
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be positive")
        cfg = cfg.with_overrides(seed=args.seed, out=args.out, workers=args.workers)
    except (OSError, ConfigError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, quiet=args.quiet)


if __name__ == "__main__":
    sys.exit(main())
