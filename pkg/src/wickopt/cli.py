"""Command-line interface: ``wickopt <subcommand> [options]``.

Every subcommand accepts ``--config`` (TOML), ``--smoke`` (desk-scale
preset), ``--seed``, ``--threads`` and ``--out``. Exit codes: 0 success,
2 usage, 3 configuration, 4 input/output, 5 solver or emulator failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .grid import VoxelFormatError, append_records, export_vtk, read_voxel_file, unit_cell, write_voxel_file
from .heat import HeatConfig, conductivity_tensor
from .lbm import LbmDivergenceError, permeability_tensor
from .objectives import ORIENTATIONS, evaluate_design
from .pipeline import (
    CampaignConfig,
    CampaignError,
    ConfigError,
    Emulators,
    build_dataset,
    load_config,
    optimize_all,
    smoke_config,
    sobol_doe,
    train_emulators,
    validate_designs,
)
from .recon import realize
from .sdfgen import DegenerateSdfError, SdfParams, build_sdf
from .surrogate import CholeskyError

EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_SOLVER = 5

log = logging.getLogger("wickopt")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="TOML configuration file")
    p.add_argument("--smoke", action="store_true", help="start from the desk-scale preset")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for design evaluations")
    p.add_argument("--out", type=Path, help="output file or campaign directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _design_args(p: argparse.ArgumentParser, n_default: int = 64) -> None:
    g = p.add_argument_group("design point")
    g.add_argument("--r", type=float, default=7.40)
    g.add_argument("--sigma", type=float, default=1.22)
    g.add_argument("--theta", type=float, default=1.25)
    g.add_argument("--phi", type=float, default=0.30)
    g.add_argument("--v", type=float, default=0.4)
    g.add_argument("--type", dest="sdf_type", choices=("Sph", "Cyl"), default="Cyl")
    g.add_argument("--n", type=int, default=n_default, help="voxels per edge")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="wickopt", description="Porous wick design from spectral density functions.")
    ap.add_argument("--version", action="version", version=f"wickopt {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write the SDF of a design point")
    _design_args(p)
    p = sub.add_parser("reconstruct", parents=[common], help="realize one microstructure")
    _design_args(p)
    for name, text in (("simulate-perm", "directional permeabilities of a voxel file"),
                       ("simulate-cond", "directional thermal conductivities of a voxel file")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("input", type=Path)
        p.add_argument("--vtk", type=Path, help="directory for field exports")
        if name == "simulate-perm":
            p.add_argument("--reverse", action="store_true", help="also run with inlet and outlet swapped")
    p = sub.add_parser("evaluate", parents=[common], help="dataset records of one design point")
    _design_args(p, n_default=32)
    p = sub.add_parser("doe", parents=[common], help="Sobol design points")
    p.add_argument("--n", type=int, required=True)
    sub.add_parser("build-dataset", parents=[common], help="evaluate the DOE at all fidelities (resumable)")
    p = sub.add_parser("train", parents=[common], help="fit the three emulators")
    p.add_argument("--no-cv", action="store_true", help="skip cross-validation")
    p.add_argument("--convergence", type=str, default="",
                   help="comma-separated data fractions for a convergence study, e.g. 0.25,0.5,1")
    p = sub.add_parser("optimize", parents=[common], help="NSGA-II per SDF type and orientation")
    p.add_argument("--generations", type=int)
    sub.add_parser("validate", parents=[common], help="simulate the selected designs")
    p = sub.add_parser("export-vtk", parents=[common], help="convert a voxel file to legacy VTK")
    p.add_argument("input", type=Path)
    p = sub.add_parser("config", parents=[common], help="show configuration")
    p.add_argument("--dump", action="store_true", help="print every key with its value")
    return ap


def _config(args) -> CampaignConfig:
    cfg = load_config(args.config) if args.config else (smoke_config() if args.smoke else CampaignConfig())
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _params(args) -> SdfParams:
    return SdfParams(args.r, args.sigma, args.theta, args.phi, args.v, args.sdf_type)


def _emit(obj, out: Path | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_plain)
    if out is None:
        print(text)
    else:
        out.write_text(text + "\n")


def _plain(x):
    if hasattr(x, "item"):
        return x.item()
    if hasattr(x, "tolist"):
        return x.tolist()
    raise TypeError(type(x).__name__)


def _campaign_dir(args) -> Path:
    if args.out is None:
        raise CampaignError("--out must name the campaign directory")
    return args.out


def _seed(args, cfg) -> int:
    return cfg.seed if args.seed is None else args.seed


def run(args) -> int:
    cfg = _config(args)
    cmd = args.command
    if cmd == "config":
        sys.stdout.write(cfg.to_toml() if args.dump else json.dumps({"digest": cfg.digest()}) + "\n")
    elif cmd == "generate":
        sdf = build_sdf(_params(args), args.n)
        grid = unit_cell(sdf, cfg.system.a_um, "sdf", params=_params(args).to_dict())
        write_voxel_file(grid, args.out or Path("sdf.vox"))
    elif cmd == "reconstruct":
        m = realize(_params(args), args.n, _seed(args, cfg), cfg.system.a_um)
        write_voxel_file(m.grid, args.out or Path("structure.vox"))
        print(json.dumps({"v_real": m.v_real, "seed": m.seed, "voxel_size_um": m.grid.voxel_size}))
    elif cmd == "simulate-perm":
        grid = read_voxel_file(args.input)
        flow = permeability_tensor(grid_structure(grid), cfg.evaluation.lbm, validate_reverse=args.reverse,
                                   keep_velocity=args.vtk is not None)
        if args.vtk is not None:
            args.vtk.mkdir(parents=True, exist_ok=True)
            for a, name in enumerate("xyz"):
                export_vtk(flow.speed_field(a), args.vtk / f"speed_{name}.vtk", "speed", grid.voxel_size)
        _emit(flow.record(), args.out)
    elif cmd == "simulate-cond":
        grid = read_voxel_file(args.input)
        heat = HeatConfig(**{**cfg.evaluation.heat.to_dict(), "k_solid": cfg.system.k_solid})
        res = conductivity_tensor(grid_structure(grid), heat, keep_temperature=args.vtk is not None)
        if args.vtk is not None:
            args.vtk.mkdir(parents=True, exist_ok=True)
            for a, name in enumerate("xyz"):
                if res.axes[a].temperature is not None:
                    export_vtk(res.axes[a].temperature, args.vtk / f"temperature_{name}.vtk", "temperature",
                               grid.voxel_size)
        _emit(res.record(), args.out)
    elif cmd == "evaluate":
        ev = evaluate_design(_params(args), args.n, cfg.system, _seed(args, cfg), cfg.evaluation)
        if not ev.valid:
            print(json.dumps({"discarded": True, "reason": ev.error or ev.selection.reason}))
            return EXIT_SOLVER if ev.error else 0
        rows = ev.records(cfg.system, ORIENTATIONS)
        if args.out is None:
            for r in rows:
                print(json.dumps(r, sort_keys=True, default=_plain))
        else:
            append_records(args.out, rows)
    elif cmd == "doe":
        recs = [{"design_id": i, "params": p.to_dict()} for i, p in enumerate(sobol_doe(args.n, cfg.ranges))]
        if args.out is None:
            for r in recs:
                print(json.dumps(r, sort_keys=True))
        else:
            append_records(args.out, recs)
    elif cmd == "build-dataset":
        stats = build_dataset(cfg, _campaign_dir(args), args.threads,
                              progress=lambda res: log.info("design %d: %d rows", res["design_id"], len(res["rows"])))
        print(json.dumps(stats))
    elif cmd == "train":
        fracs = tuple(float(x) for x in args.convergence.split(",") if x.strip())
        emus = train_emulators(cfg, _campaign_dir(args), cv=not args.no_cv, convergence=fracs)
        print(json.dumps(emus.report, sort_keys=True, default=_plain))
    elif cmd == "optimize":
        out = _campaign_dir(args)
        summary = optimize_all(Emulators.load(out / "models"), cfg, out, args.generations)
        print(json.dumps(summary, sort_keys=True))
    elif cmd == "validate":
        table = validate_designs(cfg, _campaign_dir(args))
        print((_campaign_dir(args) / "validation" / "comparison.md").read_text(), end="")
        if any(not math.isfinite(r["f2_simulated"]) for r in table):
            log.warning("some selected designs were discarded at validation")
    elif cmd == "export-vtk":
        grid = read_voxel_file(args.input)
        export_vtk(grid, args.out or args.input.with_suffix(".vtk"),
                   name="solid" if grid.kind == "binary" else grid.kind)
    return 0


def grid_structure(grid):
    """Wrap a binary voxel grid as a microstructure for the solvers."""
    from .recon import Microstructure

    if grid.kind != "binary":
        raise VoxelFormatError(f"expected a binary grid, got kind {grid.kind!r}")
    return Microstructure(grid, v_real=grid.volume_fraction())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        log.error("configuration: %s", exc)
        return EXIT_CONFIG
    except (VoxelFormatError, CampaignError, OSError) as exc:
        log.error("input/output: %s", exc)
        return EXIT_IO
    except (LbmDivergenceError, CholeskyError, DegenerateSdfError) as exc:
        log.error("solver: %s", exc)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
