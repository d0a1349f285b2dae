"""Seeded runs, repeats, ablation sweeps, aggregation and file export.

A configuration is a mapping (usually loaded from YAML)::

    pde: wave                      # wave | convection | allen_cahn | burgers
    allen_cahn_sign: -1            # reaction sign, used only for allen_cahn
    sampler:
      name: qrdeim                 # see qrdeim_pinn.samplers.SAMPLERS
      params: {threshold: 0.005}
    train:                         # any TrainConfig field
      max_iterations: 100000
    repeats: 3                     # seeds seed, seed+1, ...
    seed: 0
    dump_iterations: [0, 25000, 50000, 75000, 100000]
    grid: {nx: 256, nt: 100}
    reference_cache: null          # directory; defaults to ~/.cache/qrdeim_pinn
    label: null                    # name used in reports

Every run directory holds ``metrics.csv``, ``temporal_bias.csv``,
``points_<iteration>.csv`` for each dump, ``updates.jsonl``,
``params.npz`` and, written last, ``summary.json``.
"""

from __future__ import annotations

import copy
import csv
import itertools
import json
import logging
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import yaml

from .errors import ConfigurationError
from .pinn import RunRecord, TrainConfig, train
from .problems import PROBLEM_NAMES, get_problem, relative_l2, transformed_output
from .reference import GridSpec, cached_reference
from .samplers import make_sampler, sampler_parameters

log = logging.getLogger(__name__)

TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed", "dump_iterations"}
TOP_KEYS = {"pde", "allen_cahn_sign", "sampler", "train", "repeats", "seed", "dump_iterations",
            "grid", "reference_cache", "label", "output_dir"}


@dataclass
class ExperimentConfig:
    pde: str
    sampler: str
    sampler_params: Dict = field(default_factory=dict)
    train: Dict = field(default_factory=dict)
    repeats: int = 1
    seed: int = 0
    dump_iterations: Sequence[int] = ()
    grid: GridSpec = GridSpec()
    allen_cahn_sign: int = -1
    reference_cache: Optional[str] = None
    label: Optional[str] = None
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.pde not in PROBLEM_NAMES:
            raise ConfigurationError(f"unknown pde {self.pde!r}")
        allowed = sampler_parameters(self.sampler)
        bad = set(self.sampler_params) - set(allowed)
        if bad:
            raise ConfigurationError(f"sampler {self.sampler!r} does not accept {sorted(bad)}")
        bad = set(self.train) - TRAIN_KEYS
        if bad:
            raise ConfigurationError(f"unknown train keys {sorted(bad)}")
        if self.repeats < 1:
            raise ConfigurationError("repeats must be >= 1")
        if self.label is None:
            self.label = f"{self.pde}-{self.sampler}"

    @classmethod
    def from_dict(cls, raw: Dict) -> "ExperimentConfig":
        raw = dict(raw)
        unknown = set(raw) - TOP_KEYS
        if unknown:
            raise ConfigurationError(f"unknown configuration keys {sorted(unknown)}")
        if "pde" not in raw or "sampler" not in raw:
            raise ConfigurationError("configuration needs 'pde' and 'sampler'")
        sampler = raw["sampler"]
        if isinstance(sampler, str):
            sampler = {"name": sampler}
        grid = GridSpec(**raw.get("grid", {})) if raw.get("grid") else GridSpec()
        return cls(pde=raw["pde"], sampler=sampler["name"],
                   sampler_params=dict(sampler.get("params") or {}),
                   train=dict(raw.get("train") or {}), repeats=int(raw.get("repeats", 1)),
                   seed=int(raw.get("seed", 0)),
                   dump_iterations=tuple(raw.get("dump_iterations") or ()), grid=grid,
                   allen_cahn_sign=int(raw.get("allen_cahn_sign", -1)),
                   reference_cache=raw.get("reference_cache"), label=raw.get("label"),
                   output_dir=raw.get("output_dir"))

    def to_dict(self) -> Dict:
        return {"pde": self.pde, "allen_cahn_sign": self.allen_cahn_sign,
                "sampler": {"name": self.sampler, "params": dict(self.sampler_params)},
                "train": dict(self.train), "repeats": self.repeats, "seed": self.seed,
                "dump_iterations": list(self.dump_iterations),
                "grid": {"nx": self.grid.nx, "nt": self.grid.nt}, "label": self.label}

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(seed=seed, dump_iterations=self.dump_iterations, **self.train)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_dict(yaml.safe_load(fh))


def run(config: ExperimentConfig, seed: int, out_dir=None) -> RunRecord:
    """Train one seeded run, score the best checkpoint on the test grid, optionally export."""
    problem = get_problem(config.pde, config.allen_cahn_sign)
    ref = cached_reference(config.pde, config.grid, config.reference_cache,
                           config.allen_cahn_sign)
    sampler = make_sampler(config.sampler, **config.sampler_params)
    cfg = config.train_config(seed)
    echo = config.to_dict()
    echo["seed"] = seed
    echo["sampler"]["resolved"] = sampler.describe()
    echo["train"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()}
    record = train(problem, sampler, cfg, config_echo=echo)
    pred = transformed_output(problem, record.best_network(), config.grid.points())
    record.final_error = relative_l2(pred, ref.flat()) if np.all(np.isfinite(pred)) else math.nan
    if out_dir is not None:
        export_record(record, out_dir)
    return record


@dataclass
class AggregateReport:
    label: str
    errors: List[float]
    mean: float
    std: float
    n: int
    single_sample: bool
    failures: int = 0
    cell: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return asdict(self)


def aggregate(records: Iterable, label: str = "", cell: Optional[Dict] = None) -> AggregateReport:
    """Mean and sample standard deviation (n-1) of final errors.

    Accepts :class:`RunRecord` objects or plain floats. Records without a
    finite error count as failures and are left out of the statistics.
    """
    items = list(records)
    if not items:
        raise ConfigurationError("aggregate needs at least one record")
    errors, failures = [], 0
    for item in items:
        err = item.final_error if isinstance(item, RunRecord) else item
        if err is None or not math.isfinite(err):
            failures += 1
        else:
            errors.append(float(err))
    n = len(errors)
    mean = float(np.mean(errors)) if n else math.nan
    std = float(np.std(errors, ddof=1)) if n > 1 else 0.0
    return AggregateReport(label, errors, mean, std, n, n == 1, failures, dict(cell or {}))


def run_repeats(config: ExperimentConfig, out_dir=None) -> AggregateReport:
    records = []
    for r in range(config.repeats):
        seed = config.seed + r
        target = None if out_dir is None else Path(out_dir) / f"seed_{seed}"
        records.append(run(config, seed, target))
    return aggregate(records, config.label)


def _set_path(raw: Dict, dotted: str, value):
    keys = dotted.split(".")
    node = raw
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value


def expand_grid(grid: Dict[str, Sequence]) -> List[Dict]:
    """Cartesian product of ``{"dotted.key": [values]}`` into a list of cell dicts."""
    if not grid:
        raise ConfigurationError("empty sweep grid")
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def sweep(base: Dict, grid: Dict[str, Sequence], out_dir=None) -> List[AggregateReport]:
    """Run ``repeats`` seeds for every cell of the grid. Cell failures are reported, not raised."""
    reports = []
    for i, cell in enumerate(expand_grid(grid)):
        raw = copy.deepcopy(base)
        for key, value in cell.items():
            _set_path(raw, key, value)
        label = ", ".join(f"{k.split('.')[-1]}={v}" for k, v in cell.items())
        raw["label"] = label
        target = None if out_dir is None else Path(out_dir) / f"cell_{i:03d}"
        try:
            rep = run_repeats(ExperimentConfig.from_dict(raw), target)
            rep.cell = cell
        except Exception as exc:  # keep the sweep going
            log.error("sweep cell %s failed: %s", label, exc)
            rep = AggregateReport(label, [], math.nan, math.nan, 0, False, 1, cell)
        reports.append(rep)
    if out_dir is not None:
        write_report(reports, out_dir)
    return reports


# ------------------------------------------------------------------ export

def _check_writable(out: Path):
    # a real probe write; permission bits alone say nothing when running as root
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(dir=out, prefix=".probe"):
        pass


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def export_record(record: RunRecord, out_dir) -> Path:
    out = Path(out_dir)
    _check_writable(out)
    val = dict(zip(record.val_iterations, record.val_loss))
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "train_loss", "val_loss", "lr"])
        for i, (loss, lr) in enumerate(zip(record.train_loss, record.learning_rate), start=1):
            w.writerow([i, _fmt(loss), _fmt(val.get(i)), _fmt(lr)])
    with open(out / "temporal_bias.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "fraction_t_below_half"])
        for i, frac in enumerate(record.early_fraction, start=1):
            w.writerow([i, _fmt(frac)])
    for it, pts in sorted(record.point_history.items()):
        with open(out / f"points_{it}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "x", "t"])
            for x, t in pts:
                w.writerow([it, _fmt(x), _fmt(t)])
    with open(out / "updates.jsonl", "w") as fh:
        for upd in record.sampler_updates:
            fh.write(json.dumps(upd) + "\n")
    np.savez(out / "params.npz", best=record.best_params, final=record.final_params,
             sizes=np.array(record.network_sizes))
    summary = {"config": record.config, "seed": record.seed, "final_error": record.final_error,
               "best_val_iteration": record.best_iteration,
               "best_val_loss": record.best_val_loss, "iterations": len(record.train_loss),
               "failed_at": record.failed_at, "failure": record.failure,
               "dump_iterations": sorted(record.point_history)}
    tmp = out / "summary.json.tmp"
    tmp.write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default))
    os.replace(tmp, out / "summary.json")
    return out


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)}")


def read_metrics(path) -> Dict[str, list]:
    cols = {"iteration": [], "train_loss": [], "val_loss": [], "lr": []}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            cols["iteration"].append(int(row["iteration"]))
            cols["train_loss"].append(float(row["train_loss"]))
            cols["val_loss"].append(float(row["val_loss"]) if row["val_loss"] else None)
            cols["lr"].append(float(row["lr"]))
    return cols


def read_points(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 1:]


def read_temporal_bias(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def load_summaries(root) -> List[Dict]:
    return [json.loads(p.read_text()) for p in sorted(Path(root).rglob("summary.json"))]


def report_from_dir(root) -> List[AggregateReport]:
    groups: Dict[str, List[float]] = {}
    for s in load_summaries(root):
        label = s["config"].get("label") or f"{s['config']['pde']}-{s['config']['sampler']['name']}"
        err = s.get("final_error")
        groups.setdefault(label, []).append(math.nan if err is None else err)
    return [aggregate(errs, label) for label, errs in sorted(groups.items())]


def write_report(reports: Sequence[AggregateReport], out_dir) -> Path:
    out = Path(out_dir)
    _check_writable(out)
    keys: List[str] = []
    for r in reports:
        keys += [k for k in r.cell if k not in keys]
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + keys + ["mean", "std", "n", "failures"])
        for r in reports:
            w.writerow([r.label] + [r.cell.get(k, "") for k in keys]
                       + [_fmt(r.mean), _fmt(r.std), r.n, r.failures])
    (out / "report.json").write_text(json.dumps([r.to_dict() for r in reports], indent=2))
    return out
