"""Campaign orchestration: DOE, multi-fidelity dataset, emulator training, search and validation.

A campaign lives in one output directory::

    manifest.json      seeds, config digest, software version, solver backend
    config.toml        the configuration that produced the directory
    designs.jsonl      DOE points with their design ids
    dataset.jsonl      property records (design x fidelity x orientation)
    quarantine.jsonl   discarded or failed (design, fidelity) pairs with reasons
    f3.jsonl           floating-cluster estimates with their train/test split
    models/            fitted emulators, latent coordinates, CV report
    fronts/            one Pareto front per (SDF type, orientation), selected designs
    validation/        emulated-vs-simulated table and VTK exports
"""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import jsonschema
import numpy as np
import tomlkit
from scipy.stats import qmc

from . import __version__
from .grid import append_records, derive_seed, export_vtk, read_records
from .heat import HeatConfig
from .lbm import BACKEND, Fluid, LbmConfig
from .morph import estimate_f3
from .objectives import (
    ORIENTATIONS,
    PROPERTY_RECORD_SCHEMA,
    EvalConfig,
    Orientation,
    SystemConfig,
    evaluate_design,
)
from .optimize import GaConfig, hypervolume, nondominated_sort, run_nsga2
from .sdfgen import DESIGN_RANGES, SdfParams, SdfType
from .surrogate import GpData, LmgpModel, LmgpSpec, cross_validate, fit, mae, nrmse

log = logging.getLogger(__name__)

FIDELITIES = ("high", "mid", "low")
QUANT_NAMES = ("r", "sigma", "theta", "phi", "v")


class ConfigError(ValueError):
    """Invalid or inconsistent campaign configuration."""


class CampaignError(RuntimeError):
    """A campaign directory is missing inputs or belongs to another configuration."""


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class CampaignConfig:
    """Everything that determines a campaign's outputs (besides the output directory)."""

    seed: int = 0
    ranges: dict = field(default_factory=lambda: dict(DESIGN_RANGES))
    resolutions: dict = field(default_factory=lambda: {"high": 125, "mid": 100, "low": 75})
    counts: dict = field(default_factory=lambda: {"high": 69, "mid": 131, "low": 206})
    f3_designs: int = 500
    f3_test: int = 150
    system: SystemConfig = field(default_factory=SystemConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    lmgp: LmgpSpec = field(default_factory=LmgpSpec)
    ga: GaConfig = field(default_factory=GaConfig)
    cv_folds: int = 5
    n_select: int = 7

    def __post_init__(self):
        if set(self.resolutions) != set(FIDELITIES) or set(self.counts) != set(FIDELITIES):
            raise ConfigError(f"resolutions and counts need exactly the keys {FIDELITIES}")
        res = [self.resolutions[f] for f in FIDELITIES]
        if not res[0] > res[1] > res[2]:
            raise ConfigError("resolutions must decrease strictly from high to low")
        if min(res) < 8:
            raise ConfigError("resolutions must be at least 8")
        if min(self.counts.values()) < 1:
            raise ConfigError("design counts must be at least 1")
        if set(self.ranges) != set(QUANT_NAMES):
            raise ConfigError(f"ranges need exactly the keys {QUANT_NAMES}")
        for k, (lo, hi) in self.ranges.items():
            if not lo < hi:
                raise ConfigError(f"range for {k} is empty")
        if not 0 <= self.f3_test < self.f3_designs:
            raise ConfigError("f3_test must lie in [0, f3_designs)")
        if self.cv_folds < 2 or self.n_select < 1:
            raise ConfigError("cv_folds must be >= 2 and n_select >= 1")

    @property
    def n_designs(self) -> int:
        return max(max(self.counts.values()), self.f3_designs)

    def fidelities_of(self, design_id: int) -> list[str]:
        """Nested assignment: design ``i`` is evaluated at every fidelity whose count exceeds ``i``."""
        return [f for f in FIDELITIES if design_id < self.counts[f]]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "ranges": {k: list(v) for k, v in self.ranges.items()},
            "resolutions": dict(self.resolutions),
            "counts": dict(self.counts),
            "f3_designs": self.f3_designs,
            "f3_test": self.f3_test,
            "cv_folds": self.cv_folds,
            "n_select": self.n_select,
            "system": self.system.to_dict(),
            "evaluation": {
                "max_realizations": self.evaluation.max_realizations,
                "f3_resolution": self.evaluation.f3_resolution,
                "f3_realizations": self.evaluation.f3_realizations,
                "max_loss": self.evaluation.max_loss,
            },
            "lbm": self.evaluation.lbm.to_dict(),
            "heat": self.evaluation.heat.to_dict(),
            "lmgp": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.lmgp).items()},
            "ga": {k: v for k, v in self.ga.to_dict().items() if v is not None},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        d = copy.deepcopy(d)
        try:
            lbm = _build(LbmConfig, d.pop("lbm", {}))
            heat = _build(HeatConfig, d.pop("heat", {}))
            ev = _build(EvalConfig, {**d.pop("evaluation", {}), "lbm": lbm, "heat": heat})
            sysd = d.pop("system", {})
            fluid = _build(Fluid, sysd.pop("fluid", {}))
            system = _build(SystemConfig, {**sysd, "fluid": fluid})
            lm = d.pop("lmgp", {})
            for k in ("omega_bounds", "nugget_bounds"):
                if k in lm:
                    lm[k] = tuple(lm[k])
            lmgp = _build(LmgpSpec, lm)
            ga = _build(GaConfig, d.pop("ga", {}))
            if "ranges" in d:
                d["ranges"] = {k: tuple(float(x) for x in v) for k, v in d["ranges"].items()}
            return _build(cls, {**d, "system": system, "evaluation": ev, "lmgp": lmgp, "ga": ga})
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def to_toml(self) -> str:
        return tomlkit.dumps(self.to_dict())

    @classmethod
    def from_toml(cls, text: str) -> "CampaignConfig":
        try:
            doc = tomlkit.parse(text).unwrap()
        except tomlkit.exceptions.TOMLKitError as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        return cls.from_dict(doc)


def _build(kind, values: dict):
    known = {f.name for f in fields(kind)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown {kind.__name__} keys: {sorted(unknown)}")
    return kind(**values)


def smoke_config(seed: int = 0) -> CampaignConfig:
    """Desk-scale campaign: 20/15/8 designs at 24/32/40 voxels, coarse solver and GA settings."""
    lbm = LbmConfig(window=500, rel_tol=1e-3, max_iters=20_000)
    return CampaignConfig(
        seed=seed,
        resolutions={"high": 40, "mid": 32, "low": 24},
        counts={"high": 8, "mid": 15, "low": 20},
        f3_designs=30,
        f3_test=9,
        evaluation=EvalConfig(lbm=lbm, max_realizations=20, f3_resolution=24, f3_realizations=10),
        lmgp=LmgpSpec(n_starts=4, seed=seed),
        ga=GaConfig(population=100, offspring=50, generations=16, seed=seed),
        n_select=3,
    )


def load_config(path) -> CampaignConfig:
    return CampaignConfig.from_toml(Path(path).read_text())


# -- design of experiments ---------------------------------------------------

def sobol_doe(n: int, ranges: dict | None = None, seed: int | None = None, scramble: bool = False) -> list[SdfParams]:
    """First ``n`` points of the 6-D Sobol sequence scaled into ``ranges``.

    The all-zero first point is skipped. Coordinates 1-5 map to
    (r, sigma, theta, phi, v); the sixth selects the SDF type (< 0.5 is Sph).
    ``seed`` only matters with ``scramble``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    ranges = ranges or DESIGN_RANGES
    sampler = qmc.Sobol(d=6, scramble=scramble, seed=seed)
    sampler.fast_forward(1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # balance warning for n not a power of two
        u = sampler.random(n)
    lo = np.array([ranges[k][0] for k in QUANT_NAMES])
    hi = np.array([ranges[k][1] for k in QUANT_NAMES])
    x = lo + u[:, :5] * (hi - lo)
    return [SdfParams(*map(float, row), sdf_type=SdfType.SPH if t < 0.5 else SdfType.CYL)
            for row, t in zip(x, u[:, 5])]


# -- dataset -----------------------------------------------------------------

F3_RECORD_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["design_id", "params", "N", "f3", "se", "counts", "n_degenerate", "seed", "split"],
    "properties": {
        "design_id": {"type": "integer", "minimum": 0},
        "params": PROPERTY_RECORD_SCHEMA["properties"]["params"],
        "N": {"type": "integer", "minimum": 8},
        "f3": {"type": "number", "minimum": 0},
        "se": {"type": "number", "minimum": 0},
        "counts": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "n_degenerate": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer"},
        "split": {"enum": ["train", "test"]},
    },
}

QUARANTINE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["design_id", "fidelity", "N", "params", "reason"],
    "properties": {
        "design_id": {"type": "integer", "minimum": 0},
        "fidelity": {"enum": list(FIDELITIES) + ["f3"]},
        "N": {"type": "integer"},
        "params": {"type": "object"},
        "reason": {"type": "string"},
        "dv": {"type": ["number", "null"]},
        "realizations_scanned": {"type": "integer"},
        "seed": {"type": ["integer", "null"]},
    },
}


def _f3_split(cfg: CampaignConfig) -> set[int]:
    """Design ids held out for testing the f3 emulator."""
    rng = np.random.Generator(np.random.Philox(derive_seed(cfg.seed, 5)))
    return set(int(i) for i in rng.permutation(cfg.f3_designs)[:cfg.f3_test])


def _design_unit(args) -> dict:
    """Evaluate one design point at every fidelity it belongs to (worker entry point)."""
    cfg, design_id, params, todo, need_f3 = args
    out = {"design_id": design_id, "f3": None, "rows": [], "quarantine": []}
    f3_seed = derive_seed(cfg.seed, design_id, 3)
    est = estimate_f3(params, cfg.evaluation.f3_resolution, cfg.evaluation.f3_realizations, f3_seed)
    est["seed"] = f3_seed
    if not math.isfinite(est["f3"]):
        out["quarantine"].append({"design_id": design_id, "fidelity": "f3", "N": cfg.evaluation.f3_resolution,
                                  "params": params.to_dict(), "reason": "degenerate SDF at f3 resolution"})
        return out
    if need_f3:
        out["f3"] = {"design_id": design_id, "params": params.to_dict(), "N": cfg.evaluation.f3_resolution,
                     "f3": est["f3"], "se": est["se"], "counts": [int(c) for c in est["counts"]],
                     "n_degenerate": est["n_degenerate"], "seed": f3_seed}
    for fid in todo:
        n = cfg.resolutions[fid]
        ev = evaluate_design(params, n, cfg.system, derive_seed(cfg.seed, design_id, FIDELITIES.index(fid)),
                             cfg.evaluation, f3=est)
        if ev.valid:
            out["rows"].extend(ev.records(cfg.system, design_id=design_id, fidelity=fid))
        else:
            sel = ev.selection
            out["quarantine"].append({
                "design_id": design_id, "fidelity": fid, "N": n, "params": params.to_dict(),
                "reason": ev.error or sel.reason,
                "dv": None if not math.isfinite(sel.dv) else float(sel.dv),
                "realizations_scanned": sel.n_scanned, "seed": sel.seed,
            })
    return out


def _manifest(cfg: CampaignConfig) -> dict:
    return {
        "software": "wickopt", "version": __version__, "config_digest": cfg.digest(), "seed": cfg.seed,
        "lbm_backend": BACKEND, "fidelity_assignment": "nested (high within mid within low)",
        "noise": "independent per resolution: derive_seed(seed, design_id, fidelity_index)",
        "f3_seed": "derive_seed(seed, design_id, 3)",
        "resolutions": cfg.resolutions, "counts": cfg.counts,
    }


def init_campaign(cfg: CampaignConfig, out) -> Path:
    """Create (or reopen) a campaign directory bound to ``cfg``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    man_path = out / "manifest.json"
    if man_path.exists():
        old = json.loads(man_path.read_text())
        if old.get("config_digest") != cfg.digest():
            raise CampaignError(f"{out} was created with a different configuration")
    else:
        man_path.write_text(json.dumps(_manifest(cfg), indent=2, sort_keys=True))
        (out / "config.toml").write_text(cfg.to_toml())
    return out


def build_dataset(cfg: CampaignConfig, out, threads: int = 1, progress=None) -> dict:
    """Evaluate all DOE points; resumes from whatever rows ``out`` already holds.

    Returns counts of rows written, quarantined pairs and f3 estimates.
    """
    out = init_campaign(cfg, out)
    designs = sobol_doe(cfg.n_designs, cfg.ranges)
    des_path = out / "designs.jsonl"
    if not des_path.exists():
        append_records(des_path, [{"design_id": i, "params": p.to_dict()} for i, p in enumerate(designs)])
    data_path, quar_path, f3_path = out / "dataset.jsonl", out / "quarantine.jsonl", out / "f3.jsonl"
    done = {(r["design_id"], r["fidelity"]) for r in read_records(data_path)}
    done |= {(r["design_id"], r["fidelity"]) for r in read_records(quar_path)}
    f3_done = {r["design_id"] for r in read_records(f3_path)}
    f3_dead = {r["design_id"] for r in read_records(quar_path) if r["fidelity"] == "f3"}
    test_ids = _f3_split(cfg)

    jobs = []
    for i, p in enumerate(designs):
        if i in f3_dead:
            continue
        todo = [f for f in cfg.fidelities_of(i) if (i, f) not in done]
        need_f3 = i < cfg.f3_designs and i not in f3_done
        if todo or need_f3:
            jobs.append((cfg, i, p, todo, need_f3))

    stats = {"rows": 0, "quarantined": 0, "f3": 0, "designs": len(jobs)}

    def consume(res):
        if res["f3"] is not None:
            rec = {**res["f3"], "split": "test" if res["design_id"] in test_ids else "train"}
            jsonschema.validate(rec, F3_RECORD_SCHEMA)
            append_records(f3_path, [rec])
            stats["f3"] += 1
        for row in res["rows"]:
            jsonschema.validate(row, PROPERTY_RECORD_SCHEMA)
        append_records(data_path, res["rows"])
        for q in res["quarantine"]:
            jsonschema.validate(q, QUARANTINE_SCHEMA)
        append_records(quar_path, res["quarantine"])
        stats["rows"] += len(res["rows"])
        stats["quarantined"] += len(res["quarantine"])
        if progress is not None:
            progress(res)

    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for res in pool.map(_design_unit, jobs):  # ordered: single appender
                consume(res)
    else:
        for job in jobs:
            consume(_design_unit(job))
    return stats


# -- emulators ---------------------------------------------------------------

def _x_row(params: dict) -> list[float]:
    return [float(params[k]) for k in QUANT_NAMES] + [0.0 if params["sdf_type"] == "Sph" else 1.0]


def property_table(rows: list[dict], target: str) -> GpData:
    """Mixed-input table for ``target`` ("f1" or "f2"): six quantitative inputs, fidelity and orientation groups."""
    x = np.array([_x_row(r["params"]) for r in rows])
    cats = np.array([[FIDELITIES.index(r["fidelity"]), ORIENTATIONS.index(Orientation(r["orientation"]))]
                     for r in rows], dtype=np.int64)
    y = np.array([r[target] for r in rows], dtype=float)
    return GpData(x, cats, y, (3, 3), 0, QUANT_NAMES + ("T",), ("fidelity", "orientation"))


def f3_table(rows: list[dict]) -> GpData:
    """Table for the floating-cluster emulator: five quantitative inputs and the SDF type as a group."""
    x = np.array([[float(r["params"][k]) for k in QUANT_NAMES] for r in rows])
    cats = np.array([[0 if r["params"]["sdf_type"] == "Sph" else 1] for r in rows], dtype=np.int64)
    y = np.array([r["f3"] for r in rows], dtype=float)
    return GpData(x, cats, y, (2,), None, QUANT_NAMES, ("T",))


@dataclass
class Emulators:
    eta1: LmgpModel
    eta2: LmgpModel
    eta3: LmgpModel
    report: dict = field(default_factory=dict)

    def predict(self, genomes: np.ndarray, sdf_type: SdfType | str, orientation: Orientation | str):
        """High-fidelity means and variances of (f1, f2, f3) for rows of ``[r, sigma, theta, phi, v]``."""
        g = np.atleast_2d(np.asarray(genomes, dtype=float))
        t = SdfType(sdf_type)
        o = ORIENTATIONS.index(Orientation(orientation))
        x6 = np.column_stack([g, np.full(len(g), float(t.code))])
        cats = np.tile([FIDELITIES.index("high"), o], (len(g), 1))
        p1 = self.eta1.predict(x6, cats)
        p2 = self.eta2.predict(x6, cats)
        p3 = self.eta3.predict(g, np.full((len(g), 1), t.code))
        mean = np.column_stack([p1.mean, p2.mean, p3.mean])
        var = np.column_stack([p1.variance, p2.variance, p3.variance])
        extrap = p1.extrapolated | p3.extrapolated
        return mean, var, extrap

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for name in ("eta1", "eta2", "eta3"):
            model = getattr(self, name)
            (d / f"{name}.json").write_text(model.to_json())
            (d / f"latent_{name}.csv").write_text(model.latent_csv())
        (d / "cv_report.json").write_text(json.dumps(self.report, indent=2, sort_keys=True))
        return d

    @classmethod
    def load(cls, directory) -> "Emulators":
        d = Path(directory)
        try:
            models = [LmgpModel.from_json((d / f"{n}.json").read_text()) for n in ("eta1", "eta2", "eta3")]
        except FileNotFoundError as exc:
            raise CampaignError(f"missing model file: {exc.filename}") from None
        rep = d / "cv_report.json"
        return cls(*models, json.loads(rep.read_text()) if rep.exists() else {})


def _cv_summary(data: GpData, cfg: CampaignConfig, seed: int) -> dict:
    cv = cross_validate(data, cfg.cv_folds, cfg.lmgp, seed)
    hi = data.cats[:, 0] == 0 if data.nugget_group == 0 else np.ones(data.n, bool)
    out = {"nrmse": cv.nrmse, "mae": cv.mae, "n": data.n}
    if data.nugget_group == 0 and hi.sum() > 1:
        out["nrmse_high"] = nrmse(cv.predictions[hi], data.y[hi])
    return out


def _nested_subset(rows: list[dict], frac: float) -> list[dict]:
    """Rows whose design id is among the first ``frac`` of each fidelity's designs."""
    keep = []
    for fid in FIDELITIES:
        ids = sorted({r["design_id"] for r in rows if r["fidelity"] == fid})
        cut = set(ids[:max(2, int(math.ceil(frac * len(ids))))])
        keep.extend(r for r in rows if r["fidelity"] == fid and r["design_id"] in cut)
    return keep


def train_emulators(cfg: CampaignConfig, out, cv: bool = True,
                    convergence: tuple[float, ...] = ()) -> Emulators:
    """Fit the f1, f2 and f3 emulators from the campaign in ``out`` and save them under ``out/models``."""
    out = Path(out)
    rows = read_records(out / "dataset.jsonl")
    f3_rows = read_records(out / "f3.jsonl")
    if not rows or not f3_rows:
        raise CampaignError(f"{out} has no dataset; run build-dataset first")
    missing = [f for f in FIDELITIES if not any(r["fidelity"] == f for r in rows)]
    if missing:
        raise CampaignError(f"no rows for fidelity {missing}")
    report: dict = {}
    models = []
    for k, target in enumerate(("f1", "f2")):
        data = property_table(rows, target)
        t0 = time.perf_counter()
        models.append(fit(data, replace(cfg.lmgp, seed=derive_seed(cfg.lmgp.seed, 20 + k))))
        rep = {"fit_s": time.perf_counter() - t0, "nll": models[-1].nll, "n": data.n}
        if cv:
            rep.update(_cv_summary(data, cfg, derive_seed(cfg.seed, 30 + k)))
        if convergence:
            rep["convergence"] = [
                {"fraction": frac, "n": len(sub), **_cv_summary(property_table(sub, target), cfg,
                                                                 derive_seed(cfg.seed, 40 + k))}
                for frac in convergence for sub in [_nested_subset(rows, frac)]
            ]
        report[f"eta{k + 1}"] = rep
    train = [r for r in f3_rows if r["split"] == "train"]
    test = [r for r in f3_rows if r["split"] == "test"]
    d3 = f3_table(train)
    eta3 = fit(d3, replace(cfg.lmgp, seed=derive_seed(cfg.lmgp.seed, 22)))
    rep3 = {"nll": eta3.nll, "n_train": d3.n, "n_test": len(test)}
    if cv:
        rep3.update(_cv_summary(d3, cfg, derive_seed(cfg.seed, 32)))
    if test:
        dt = f3_table(test)
        pred = eta3.predict(dt.x, dt.cats).mean
        rep3["test_mae"] = mae(pred, dt.y)
        rep3["test_nrmse"] = nrmse(pred, dt.y) if dt.n > 1 and np.var(dt.y) > 0 else math.nan
    report["eta3"] = rep3
    emus = Emulators(models[0], models[1], eta3, report)
    emus.save(out / "models")
    return emus


# -- optimization ------------------------------------------------------------

PARETO_RECORD_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["sdf_type", "orientation", "genome", "predicted", "variance", "rank", "crowding", "flags"],
    "properties": {
        "sdf_type": {"enum": ["Sph", "Cyl"]},
        "orientation": {"enum": ["O1", "O2", "O3"]},
        "genome": {"type": "object", "additionalProperties": False, "required": list(QUANT_NAMES),
                   "properties": {k: {"type": "number"} for k in QUANT_NAMES}},
        "predicted": {"type": "object", "additionalProperties": False, "required": ["f1", "f2", "f3"],
                      "properties": {k: {"type": "number"} for k in ("f1", "f2", "f3")}},
        "variance": {"type": "object", "additionalProperties": False, "required": ["f1", "f2", "f3"],
                     "properties": {k: {"type": "number", "minimum": 0} for k in ("f1", "f2", "f3")}},
        "rank": {"type": "integer", "minimum": 1},
        "crowding": {"type": ["number", "null"]},
        "flags": {"type": "object", "additionalProperties": False, "required": ["f3_above_half", "extrapolated"],
                  "properties": {"f3_above_half": {"type": "boolean"}, "extrapolated": {"type": "boolean"}}},
    },
}


def training_bounds(emus: Emulators) -> tuple[np.ndarray, np.ndarray]:
    """Box spanned by the high-fidelity-capable training inputs of the property emulators."""
    x = emus.eta1.data.x[:, :5]
    return x.min(axis=0), x.max(axis=0)


def front_records(genomes, mean, var, extrap, crowd, sdf_type, orientation) -> list[dict]:
    recs = []
    for g, m, v, e, c in zip(genomes, mean, var, extrap, crowd):
        recs.append({
            "sdf_type": SdfType(sdf_type).value, "orientation": Orientation(orientation).value,
            "genome": dict(zip(QUANT_NAMES, map(float, g))),
            "predicted": {"f1": float(m[0]), "f2": float(m[1]), "f3": float(m[2])},
            "variance": {"f1": float(v[0]), "f2": float(v[1]), "f3": float(v[2])},
            "rank": 1, "crowding": float(c) if math.isfinite(c) else None,
            "flags": {"f3_above_half": bool(m[2] > 0.5), "extrapolated": bool(e)},
        })
    return recs


def optimize_all(emus: Emulators, cfg: CampaignConfig, out, generations: int | None = None) -> dict:
    """One NSGA-II run per (SDF type, orientation); writes the fronts and the selected designs."""
    out = Path(out)
    fdir = out / "fronts"
    fdir.mkdir(parents=True, exist_ok=True)
    lo, hi = training_bounds(emus)
    ga = cfg.ga if generations is None else replace(cfg.ga, generations=generations)
    summary: dict = {"bounds": {"lo": lo.tolist(), "hi": hi.tolist()}, "fronts": {}}
    pooled = []
    for ti, t in enumerate((SdfType.SPH, SdfType.CYL)):
        for oi, o in enumerate(ORIENTATIONS):
            def objective(X, t=t, o=o):
                mean = emus.predict(X, t, o)[0]
                return np.column_stack([mean[:, 0], mean[:, 1], -mean[:, 2]])

            t0 = time.perf_counter()
            res = run_nsga2(objective, lo, hi, replace(ga, seed=derive_seed(cfg.seed, 7, ti, oi)))
            idx = res.front
            mean, var, extrap = emus.predict(res.X[idx], t, o)
            recs = front_records(res.X[idx], mean, var, extrap, res.crowding[idx], t, o)
            for r in recs:
                jsonschema.validate(r, PARETO_RECORD_SCHEMA)
            path = fdir / f"front_{t.value}_{o.value}.jsonl"
            path.unlink(missing_ok=True)
            append_records(path, recs)
            pooled.extend(recs)
            summary["fronts"][f"{t.value}_{o.value}"] = {"size": len(recs), "seconds": time.perf_counter() - t0,
                                                        "evaluations": res.n_evaluations}
    F = np.array([[r["predicted"]["f1"], r["predicted"]["f2"], -r["predicted"]["f3"]] for r in pooled])
    ref = np.array([min(0.0, F[:, 0].min()), min(0.0, F[:, 1].min()), F[:, 2].min() - 1.0])
    for key in summary["fronts"]:
        t, o = key.split("_")
        Fk = np.array([[r["predicted"]["f1"], r["predicted"]["f2"], -r["predicted"]["f3"]] for r in pooled
                       if r["sdf_type"] == t and r["orientation"] == o])
        summary["fronts"][key]["hypervolume"] = hypervolume(Fk, ref)
    summary["hv_reference"] = ref.tolist()
    best = nondominated_sort(F)[0]
    selected = select_spanning([pooled[i] for i in best], cfg.n_select)
    sel_path = fdir / "selected.jsonl"
    sel_path.unlink(missing_ok=True)
    append_records(sel_path, selected)
    summary["best_front_size"] = int(best.size)
    summary["selected"] = len(selected)
    (fdir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary


def select_spanning(front: list[dict], k: int, min_f2: float = 1e-4) -> list[dict]:
    """``k`` records at centred f1 quantiles of ``front``.

    Quantiles ``(i + 0.5) / k`` keep the picks off the front's extreme ends,
    where the emulators extrapolate. Records predicted to conduct less than
    ``min_f2`` (W/K) are skipped unless nothing else is left.
    """
    pool = [r for r in front if r["predicted"]["f2"] >= min_f2] or list(front)
    if not pool:
        return []
    pool.sort(key=lambda r: r["predicted"]["f1"])
    k = min(k, len(pool))
    picks = np.unique(np.floor((np.arange(k) + 0.5) / k * len(pool)).astype(int))
    return [pool[i] for i in picks]


# -- validation --------------------------------------------------------------

TABLE_COLUMNS = ("design", "sdf_type", "orientation", "r", "sigma", "theta", "phi", "v",
                 "f1_emulated", "f1_simulated", "f2_emulated", "f2_simulated", "f3_emulated", "f3_simulated",
                 "status")


def validate_designs(cfg: CampaignConfig, out, selected: list[dict] | None = None,
                     export_fields: bool = True) -> list[dict]:
    """Simulate each selected design at high fidelity and tabulate emulated vs simulated objectives."""
    out = Path(out)
    if selected is None:
        selected = read_records(out / "fronts" / "selected.jsonl")
        if not selected:
            raise CampaignError(f"{out} has no selected designs; run optimize first")
    vdir = out / "validation"
    vdir.mkdir(parents=True, exist_ok=True)
    n = cfg.resolutions["high"]
    table = []
    for j, rec in enumerate(selected):
        label = f"M{j + 1}"
        params = SdfParams(**rec["genome"], sdf_type=SdfType(rec["sdf_type"]))
        o = Orientation(rec["orientation"])
        ev = evaluate_design(params, n, cfg.system, derive_seed(cfg.seed, 11, j), cfg.evaluation,
                             keep_fields=export_fields)
        row = {"design": label, "sdf_type": params.sdf_type.value, "orientation": o.value,
               **{k: rec["genome"][k] for k in QUANT_NAMES},
               "f1_emulated": rec["predicted"]["f1"], "f2_emulated": rec["predicted"]["f2"],
               "f3_emulated": rec["predicted"]["f3"],
               "f1_simulated": math.nan, "f2_simulated": math.nan, "f3_simulated": math.nan}
        if ev.valid:
            obj = ev.objectives(o, cfg.system)
            row.update(f1_simulated=obj.f1, f2_simulated=obj.f2, f3_simulated=obj.f3, status="ok")
            m = ev.selection.structure
            export_vtk(m.grid, vdir / f"{label}_structure.vtk", name="solid")
            if export_fields:
                ax = o.vertical_axis
                speed = ev.flow.speed_field(ax)
                if speed is not None:
                    export_vtk(speed, vdir / f"{label}_speed.vtk", name="speed", voxel_size=m.grid.voxel_size)
                temp = ev.thermal.axes[ax].temperature
                if temp is not None:
                    export_vtk(temp, vdir / f"{label}_temperature.vtk", name="temperature",
                               voxel_size=m.grid.voxel_size)
        else:
            row["status"] = ev.error or ev.selection.reason
        table.append(row)
    write_table(table, vdir)
    return table


def write_table(table: list[dict], directory) -> None:
    d = Path(directory)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in table:
        w.writerow({k: row.get(k, "") for k in TABLE_COLUMNS})
    (d / "comparison.csv").write_text(buf.getvalue())
    head = ["Design", "T", "Orientation", "f1 emulated", "f1 simulated", "f2 emulated", "f2 simulated",
            "f3 emulated", "f3 simulated"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for r in table:
        cells = [r["design"], r["sdf_type"], r["orientation"]] + [
            _fmt(r[k]) for k in ("f1_emulated", "f1_simulated", "f2_emulated", "f2_simulated",
                                 "f3_emulated", "f3_simulated")]
        lines.append("| " + " | ".join(cells) + " |")
    (d / "comparison.md").write_text("\n".join(lines) + "\n")


def _fmt(x: float) -> str:
    return "n/a" if not math.isfinite(x) else f"{x:.4g}"


def run_campaign(cfg: CampaignConfig, out, threads: int = 1, generations: int | None = None,
                 cv: bool = True) -> dict:
    """DOE, dataset, training, search and validation in one call."""
    t0 = time.perf_counter()
    stats = build_dataset(cfg, out, threads)
    emus = train_emulators(cfg, out, cv=cv)
    summary = optimize_all(emus, cfg, out, generations)
    table = validate_designs(cfg, out)
    return {"dataset": stats, "cv": emus.report, "optimize": summary, "validation": table,
            "seconds": time.perf_counter() - t0}
