"""TOML experiment configuration.

Example::

    seed = 7
    trials = 3

    [dataset]
    synthetic = "mixture2d"     # or: csv = "points.csv"
    n = 20000
    queries = 100
    tuning_queries = 100

    [options]
    lsh_buckets = 4096

    [budget]
    mechanism = "rff"
    epsilons = [0.05]
    budgets = [64, 256, 1024]

See the README for every key.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..core import Dataset, KernelKind, KernelSpec, load_csv, scale_to_unit_bandwidth
from ..rng import Purpose, stream
from .adapters import LADDERS, MechanismOptions, check_mechanism
from .datasets import make_dataset, split_queries
from .experiments import run_error_vs_budget, run_error_vs_privacy, run_error_vs_runtime
from .records import write_records

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("budget", "privacy", "runtime")


class ConfigError(ValueError):
    pass


@dataclass
class BenchConfig:
    seed: int = 0
    trials: int = 1
    dataset: dict = field(default_factory=dict)
    options: MechanismOptions = field(default_factory=MechanismOptions)
    budget: dict = field(default_factory=dict)
    privacy: dict = field(default_factory=dict)
    runtime: dict = field(default_factory=dict)


_OPTION_KEYS = {f for f in MechanismOptions.__dataclass_fields__ if f != "extra"}


def _options(table: dict) -> MechanismOptions:
    unknown = set(table) - _OPTION_KEYS
    if unknown:
        raise ConfigError(f"unknown [options] keys: {sorted(unknown)}")
    kw = dict(table)
    if "rff_kernel" in kw:
        kw["rff_kernel"] = KernelKind(kw["rff_kernel"])
    center = kw.get("fgt_center")
    if center == "origin":
        kw["fgt_center"] = None
    elif isinstance(center, list):
        kw["fgt_center"] = tuple(float(c) for c in center)
    return MechanismOptions(**kw)


def parse_config(doc: dict) -> BenchConfig:
    known = {"seed", "trials", "dataset", "options", "budget", "privacy", "runtime"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    try:
        return BenchConfig(
            seed=int(doc.get("seed", 0)),
            trials=int(doc.get("trials", 1)),
            dataset=dict(doc.get("dataset", {})),
            options=_options(doc.get("options", {})),
            budget=dict(doc.get("budget", {})),
            privacy=dict(doc.get("privacy", {})),
            runtime=dict(doc.get("runtime", {})),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> BenchConfig:
    with Path(path).open("rb") as fh:
        return parse_config(tomllib.load(fh))


def prepare_data(cfg: BenchConfig):
    """Unit-bandwidth training set, evaluation queries and tuning queries.

    Queries are rows held out of the data, never part of the released set.
    """
    ds = cfg.dataset
    n_q = int(ds.get("queries", 100))
    n_t = int(ds.get("tuning_queries", 0))
    if "csv" in ds:
        bw = float(ds.get("bandwidth", 1.0))
        raw = load_csv(ds["csv"], bool(ds.get("has_header", False)), bandwidth=bw)
        points = scale_to_unit_bandwidth(raw, KernelSpec(KernelKind.GAUSSIAN, bw)).points
    elif "synthetic" in ds:
        n = int(ds.get("n", 10000))
        points = make_dataset(ds["synthetic"], n + n_q + n_t, stream(cfg.seed, Purpose.DATA), ds.get("dim"))
    else:
        raise ConfigError("[dataset] needs either 'synthetic' or 'csv'")
    rest, queries = split_queries(points, n_q, stream(cfg.seed, Purpose.QUERIES))
    tuning = None
    if n_t:
        rest, tuning = split_queries(rest, n_t, stream(cfg.seed, Purpose.QUERIES, 1))
    return Dataset(rest), queries, tuning


def _ladders(table: dict) -> dict:
    out = dict(LADDERS)
    for k, v in table.items():
        out[check_mechanism(k)] = list(v)
    return out


def run_bench(cfg: BenchConfig, experiment: str):
    """Run one experiment family; returns ``(records, metadata)``."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    data, queries, tuning = prepare_data(cfg)
    meta = {
        "experiment": experiment,
        "seed": cfg.seed,
        "trials": cfg.trials,
        "dataset": cfg.dataset,
        "n": data.n,
        "dim": data.dim,
        "options": {k: (v.value if isinstance(v, KernelKind) else v) for k, v in asdict(cfg.options).items()},
    }
    if experiment == "budget":
        b = cfg.budget
        mech = check_mechanism(b.get("mechanism", "rff"))
        budgets = list(b.get("budgets", LADDERS[mech]))
        meta.update(mechanism=mech, budgets=budgets, epsilons=b.get("epsilons", []))
        recs = run_error_vs_budget(
            data, mech, [float(e) for e in b.get("epsilons", [])], budgets, queries, cfg.trials, cfg.seed,
            options=cfg.options, oracle=bool(b.get("oracle", True)),
        )
    elif experiment == "privacy":
        p = cfg.privacy
        auto = bool(p.get("auto_tune", True))
        ladders = _ladders(p.get("ladders", {}))
        mechs = [check_mechanism(m) for m in p.get("mechanisms", ["rff", "fgt", "bernstein", "noisysample"])]
        meta.update(mechanisms=mechs, epsilons=p.get("epsilons", []), auto_tune=auto,
                    ladders={m: ladders[m] for m in mechs}, params=p.get("params", {}))
        if auto and tuning is None:
            raise ConfigError("auto_tune needs [dataset] tuning_queries > 0")
        recs = run_error_vs_privacy(
            data, mechs, [float(e) for e in p.get("epsilons", [])], queries, cfg.trials, cfg.seed,
            auto_tune=auto, params=p.get("params"), tuning_queries=tuning, options=cfg.options,
            ladders=ladders,
        )
    else:
        r = cfg.runtime
        mechs = [check_mechanism(m) for m in r.get("mechanisms", ["rff", "fgt"])]
        budgets = {m: list(v) for m, v in r.get("budgets", {}).items()}
        meta.update(mechanisms=mechs, epsilon=r.get("epsilon", 1.0), budgets=budgets)
        recs = run_error_vs_runtime(
            data, mechs, float(r.get("epsilon", 1.0)), queries, cfg.trials, cfg.seed,
            budgets=budgets, options=cfg.options,
        )
    return recs, meta


def write_bench(records, meta, output) -> None:
    """Records to ``output``; ladders and settings to ``output.meta.json``."""
    write_records(output, records)
    Path(str(output) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not serializable: {type(x).__name__}")
