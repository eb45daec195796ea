"""Kernels, datasets and the exact KDE oracle.

Everything downstream of :func:`scale_to_unit_bandwidth` works with bandwidth
1; the bandwidth only ever enters as a coordinate scale.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

# Rows of the (queries x points x dim) difference tensor per block.
_BLOCK_ELEMENTS = 1 << 22


class DataError(ValueError):
    """Malformed input data (bad shape, non-finite values, bad CSV)."""


class KernelKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    LAPLACIAN = "laplacian"
    CAUCHY = "cauchy"


@dataclass(frozen=True)
class KernelSpec:
    """A shift-invariant kernel with scalar bandwidth.

    ``normalized`` only affects the Cauchy kernel: the literal product of
    ``2 / (1 + t**2)`` terms equals ``2**d`` at zero distance, the normalized
    product of ``1 / (1 + t**2)`` stays in [0, 1].
    """

    kind: KernelKind = KernelKind.GAUSSIAN
    bandwidth: float = 1.0
    normalized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if not (math.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError(f"bandwidth must be a positive finite number, got {self.bandwidth}")

    def unit(self) -> "KernelSpec":
        return replace(self, bandwidth=1.0)


def as_point(p, dim: int | None = None) -> np.ndarray:
    """Validate one point and return it as a float64 vector."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DataError(f"a point must be a 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("point has non-finite coordinates")
    if dim is not None and arr.shape[0] != dim:
        raise DataError(f"dimension mismatch: expected {dim}, got {arr.shape[0]}")
    return arr


def as_points(P, dim: int | None = None) -> np.ndarray:
    """Validate a batch of points and return an ``(m, d)`` float64 array."""
    arr = np.asarray(P, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if dim is None or dim == arr.shape[0] else arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DataError(f"points must form a 2-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("points have non-finite coordinates")
    if dim is not None and arr.shape[1] != dim:
        raise DataError(f"dimension mismatch: expected {dim}, got {arr.shape[1]}")
    return arr


@dataclass(frozen=True)
class Dataset:
    """An immutable ``(n, d)`` point set with its kernel bandwidth."""

    points: np.ndarray
    bandwidth: float = 1.0
    dim: int = field(init=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim != 2:
            raise DataError(f"dataset points must be a 2-d array, got shape {pts.shape}")
        if pts.shape[0] < 1:
            raise DataError("dataset must contain at least one point")
        if pts.shape[1] < 1:
            raise DataError("dataset dimension must be positive")
        if not np.all(np.isfinite(pts)):
            raise DataError("dataset contains non-finite coordinates")
        if not (math.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise DataError(f"bandwidth must be positive, got {self.bandwidth}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "dim", pts.shape[1])

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.n


def _kernel_from_diff(spec: KernelSpec, diff: np.ndarray) -> np.ndarray:
    """Kernel values from coordinate differences along the last axis."""
    t = diff / spec.bandwidth
    if spec.kind is KernelKind.GAUSSIAN:
        return np.exp(-np.einsum("...j,...j->...", t, t))
    if spec.kind is KernelKind.LAPLACIAN:
        return np.exp(-np.abs(t).sum(axis=-1))
    numer = 1.0 if spec.normalized else 2.0
    return np.prod(numer / (1.0 + t * t), axis=-1)


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """Evaluate ``k(x, y)`` for one pair of points."""
    x = as_point(x)
    y = as_point(y, x.shape[0])
    return float(_kernel_from_diff(spec, x - y))


def kernel_matrix(spec: KernelSpec, X, Y) -> np.ndarray:
    """``K[a, b] = k(X[a], Y[b])``, blocked to bound memory."""
    X = as_points(X)
    Y = as_points(Y, X.shape[1])
    out = np.empty((X.shape[0], Y.shape[0]))
    step = max(1, _BLOCK_ELEMENTS // (X.shape[0] * X.shape[1]))
    for s in range(0, Y.shape[0], step):
        diff = X[:, None, :] - Y[None, s : s + step, :]
        out[:, s : s + step] = _kernel_from_diff(spec, diff)
    return out


def check_bandwidth(dataset: Dataset, spec: KernelSpec):
    if not math.isclose(dataset.bandwidth, spec.bandwidth, rel_tol=1e-12):
        raise ValueError(
            f"dataset bandwidth {dataset.bandwidth} does not match kernel bandwidth {spec.bandwidth}"
        )


def exact_kde(dataset: Dataset, spec: KernelSpec, y) -> float:
    """Mean kernel value between ``y`` and every dataset point."""
    check_bandwidth(dataset, spec)
    y = as_point(y, dataset.dim)
    return float(np.mean(_kernel_from_diff(spec, dataset.points - y)))


def exact_kde_many(dataset: Dataset, spec: KernelSpec, Y) -> np.ndarray:
    """:func:`exact_kde` for each row of ``Y``."""
    check_bandwidth(dataset, spec)
    Y = as_points(Y, dataset.dim)
    X = dataset.points
    out = np.empty(Y.shape[0])
    step = max(1, _BLOCK_ELEMENTS // (X.shape[0] * X.shape[1]))
    for s in range(0, Y.shape[0], step):
        diff = Y[s : s + step, None, :] - X[None, :, :]
        out[s : s + step] = _kernel_from_diff(spec, diff).mean(axis=1)
    return out


def scale_to_unit_bandwidth(dataset: Dataset, spec: KernelSpec) -> Dataset:
    """Divide coordinates by the bandwidth; the result has bandwidth 1."""
    check_bandwidth(dataset, spec)
    if spec.bandwidth == 1.0:
        return dataset
    return Dataset(dataset.points / spec.bandwidth, bandwidth=1.0)


def load_csv(path, has_header: bool = False, bandwidth: float = 1.0) -> Dataset:
    """Read a dense numeric CSV, one point per row."""
    rows = []
    arity = None
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and has_header:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if arity is None:
                arity = len(row)
            elif len(row) != arity:
                raise DataError(f"{path}: row {lineno} has {len(row)} columns, expected {arity}")
            try:
                values = [float(c) for c in row]
            except ValueError:
                raise DataError(f"{path}: row {lineno} has a non-numeric cell: {row!r}") from None
            if not all(math.isfinite(v) for v in values):
                raise DataError(f"{path}: row {lineno} has a non-finite value")
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.array(rows, dtype=np.float64), bandwidth=bandwidth)


def write_csv(path, header, rows) -> None:
    """Write an RFC-4180 CSV (CRLF line endings, minimal quoting)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        if header is not None:
            writer.writerow(header)
        writer.writerows(rows)
