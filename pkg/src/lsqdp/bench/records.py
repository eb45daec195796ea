"""Experiment records and their CSV form.

Columns, in order: mechanism, parameter, epsilon, mean_abs_error,
max_abs_error, curator_seconds, trial, seed.  ``epsilon`` is a number or the
literal ``non-private`` for oracle-mode rows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass
from pathlib import Path

from ..core import write_csv

FIELDS = (
    "mechanism",
    "parameter",
    "epsilon",
    "mean_abs_error",
    "max_abs_error",
    "curator_seconds",
    "trial",
    "seed",
)
NON_PRIVATE = "non-private"


@dataclass(frozen=True)
class ExperimentRecord:
    mechanism: str
    parameter: float
    epsilon: float | str
    mean_abs_error: float
    max_abs_error: float
    curator_seconds: float
    trial: int
    seed: int

    def __post_init__(self):
        if self.epsilon != NON_PRIVATE and not (isinstance(self.epsilon, (int, float)) and self.epsilon > 0):
            raise ValueError(f"epsilon must be positive or {NON_PRIVATE!r}, got {self.epsilon!r}")
        if not (self.mean_abs_error >= 0 and self.max_abs_error >= 0):
            raise ValueError("errors must be non-negative")
        if not self.curator_seconds >= 0:
            raise ValueError("curator time must be non-negative")

    @property
    def private(self) -> bool:
        return self.epsilon != NON_PRIVATE

    def sort_key(self):
        eps = math.inf if self.epsilon == NON_PRIVATE else float(self.epsilon)
        return (self.mechanism, self.parameter, eps, self.trial, self.seed)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def record_rows(records) -> list[list[str]]:
    return [[_fmt(v) for v in astuple(r)] for r in sorted(records, key=ExperimentRecord.sort_key)]


def write_records(path, records) -> None:
    """Sort records and write them as RFC-4180 CSV."""
    write_csv(path, FIELDS, record_rows(records))


def read_records(path) -> list[ExperimentRecord]:
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != FIELDS:
            raise ValueError(f"{path}: unexpected header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(FIELDS):
                raise ValueError(f"{path}: row {lineno} has {len(row)} columns")
            mech, param, eps, mean_e, max_e, secs, trial, seed = row
            out.append(
                ExperimentRecord(
                    mech,
                    float(param),
                    eps if eps == NON_PRIVATE else float(eps),
                    float(mean_e),
                    float(max_e),
                    float(secs),
                    int(trial),
                    int(seed),
                )
            )
    return out
