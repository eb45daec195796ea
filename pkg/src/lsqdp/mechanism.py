"""Generic LSQ release mechanism.

The curator samples ``I`` function pairs ``(f_i, g_i)`` from an LSQ family,
averages ``f_i`` over the dataset and perturbs every coordinate of the average
with Laplace noise.  The client answers a query ``y`` with the median over
``J`` groups of the mean of ``noisy_F_i . g_i(y)``.
"""

from __future__ import annotations

import abc
import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, ClassVar, NamedTuple, Sequence

import numpy as np

from .core import Dataset, KernelSpec, as_point, as_points
from .rng import Purpose, stream

DEFAULT_MEMORY_CAP = 2 * 1024**3


class PrivacyError(RuntimeError):
    """Raised when an operation would leak a non-private artifact."""


class FamilyTag(enum.IntEnum):
    RFF = 1
    FGT = 2
    LSH = 3
    BERNSTEIN = 4
    NOISYSAMPLE = 5


@dataclass(frozen=True, eq=False)
class SparseVector:
    """Nonzero entries of a length-``dim`` vector, indices strictly increasing."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        val = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if idx.shape != val.shape:
            raise ValueError("indices and values differ in length")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise ValueError("sparse index out of range")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("sparse indices must be strictly increasing")
            if not np.all(np.isfinite(val)) or np.any(val == 0):
                raise ValueError("sparse values must be finite and nonzero")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_arrays(cls, indices, values, dim: int) -> "SparseVector":
        """Build from unsorted entries, dropping exact zeros."""
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        val = np.asarray(values, dtype=np.float64).reshape(-1)
        keep = val != 0
        idx, val = idx[keep], val[keep]
        order = np.argsort(idx, kind="stable")
        return cls(idx[order], val[order], dim)

    @property
    def nnz(self) -> int:
        return self.indices.size

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def dot(self, dense: np.ndarray, op_counter: Counter | None = None) -> float:
        """Inner product with a dense vector, touching only the nonzeros."""
        if op_counter is not None:
            op_counter["multiply_adds"] += self.nnz
        return float(np.dot(dense[self.indices], self.values))

    def __eq__(self, other):
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )


class LsqParams(NamedTuple):
    Q: int
    R: float
    S: int


class LsqFamily(abc.ABC):
    """A distribution over pairs ``(f, g)`` of sparse, bounded vector maps.

    Subclasses implement the per-point maps; the batch methods ``mean_f`` and
    ``g_dot`` have slow generic defaults that families override with
    vectorized versions.
    """

    tag: ClassVar[FamilyTag]
    kernel: KernelSpec
    dim: int

    @abc.abstractmethod
    def sample(self, rng: np.random.Generator) -> Any:
        """Draw one pair descriptor."""

    def sample_many(self, rng: np.random.Generator, count: int) -> list:
        """``count`` independent descriptors from one generator (bulk Monte Carlo)."""
        return [self.sample(rng) for _ in range(count)]

    @abc.abstractmethod
    def eval_f(self, desc, x) -> SparseVector: ...

    @abc.abstractmethod
    def eval_g(self, desc, y) -> SparseVector: ...

    @property
    @abc.abstractmethod
    def params(self) -> LsqParams: ...

    def f_range_l1(self) -> float:
        """Bound on ``||f(x)||_1`` over all x; drives the noise scale."""
        p = self.params
        return p.R * p.S

    def mean_f(self, descs: Sequence, X: np.ndarray) -> np.ndarray:
        """``(I, Q)`` matrix whose row i is the mean of ``f_i`` over X."""
        Q = self.params.Q
        out = np.zeros((len(descs), Q))
        for i, desc in enumerate(descs):
            for x in X:
                sv = self.eval_f(desc, x)
                out[i, sv.indices] += sv.values
        return out / X.shape[0]

    def g_dot(self, descs: Sequence, aggregates: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """``(m, I)`` matrix of ``aggregates[i] . g_i(Y[q])``."""
        out = np.empty((Y.shape[0], len(descs)))
        for q, y in enumerate(Y):
            for i, desc in enumerate(descs):
                out[q, i] = self.eval_g(desc, y).dot(aggregates[i])
        return out

    @abc.abstractmethod
    def encode_descriptor(self, desc) -> bytes: ...

    @classmethod
    @abc.abstractmethod
    def decode_descriptor(cls, buf: bytes) -> Any: ...

    @classmethod
    @abc.abstractmethod
    def from_descriptor(cls, desc, kernel: KernelSpec) -> "LsqFamily":
        """Rebuild the family a released descriptor was drawn from."""


@dataclass(frozen=True)
class MechanismConfig:
    epsilon: float
    repetitions: int = 1
    groups: int = 1
    seed: int = 0
    clamp: bool = False

    def __post_init__(self):
        if not self.epsilon > 0 or math.isnan(self.epsilon):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.repetitions < 1 or self.groups < 1:
            raise ValueError("repetitions and groups must be positive")
        if self.repetitions % self.groups:
            raise ValueError(
                f"groups ({self.groups}) must divide repetitions ({self.repetitions})"
            )


@dataclass(frozen=True, eq=False)
class ReleasedFunction:
    """The public artifact: descriptors plus noisy aggregates.

    ``private`` is False only for oracle-mode (noise-free) releases, which
    refuse to serialize.
    """

    family_tag: FamilyTag
    kernel: KernelSpec
    epsilon: float
    groups: int
    noise_scale: float
    descriptors: tuple
    aggregates: np.ndarray
    clamp: bool = False
    private: bool = True
    dim: int = field(default=0)

    def __post_init__(self):
        agg = np.array(self.aggregates, dtype=np.float64)
        if agg.ndim != 2 or agg.shape[0] != len(self.descriptors):
            raise ValueError("aggregates must be an (I, Q) matrix with one row per descriptor")
        if self.groups < 1 or agg.shape[0] % self.groups:
            raise ValueError("groups must divide the number of repetitions")
        agg.setflags(write=False)
        object.__setattr__(self, "aggregates", agg)
        object.__setattr__(self, "descriptors", tuple(self.descriptors))
        object.__setattr__(self, "family_tag", FamilyTag(self.family_tag))

    @property
    def repetitions(self) -> int:
        return self.aggregates.shape[0]

    @property
    def Q(self) -> int:
        return self.aggregates.shape[1]


def noise_scale(repetitions: int, f_l1: float, epsilon: float, n: int) -> float:
    """Per-coordinate Laplace scale ``I * f_l1 / (epsilon * n)``."""
    if n <= 0:
        raise ValueError("dataset size must be positive")
    if repetitions <= 0 or not f_l1 > 0 or not epsilon > 0:
        raise ValueError("repetitions, f_l1 and epsilon must be positive")
    return repetitions * f_l1 / (epsilon * n)


def standard_laplace(rng: np.random.Generator, size=None):
    """Laplace(0, 1) by inverting the CDF of one uniform per draw."""
    u = rng.random(size) - 0.5
    # u == -0.5 has probability 2**-53; keep the log finite.
    a = np.minimum(np.abs(u), 0.5 - 2.0**-54)
    return -np.sign(u) * np.log1p(-2.0 * a)


def laplace_sample(rng: np.random.Generator, scale: float, size=None):
    """Draw from Laplace(0, scale)."""
    if not scale > 0 or not math.isfinite(scale):
        raise ValueError(f"Laplace scale must be positive and finite, got {scale}")
    z = standard_laplace(rng, size)
    return scale * z if size is not None else float(scale * z)


def privatize_count(n: int, epsilon: float, rng: np.random.Generator) -> float:
    """``n + Laplace(1/epsilon)``; the result may be below 1, callers floor it."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if math.isinf(epsilon):
        return float(n)
    return n + laplace_sample(rng, 1.0 / epsilon)


def sample_descriptors(family: LsqFamily, seed: int, repetitions: int) -> list:
    """Descriptor i comes from its own stream, so prefixes are stable in I."""
    return [family.sample(stream(seed, Purpose.DESCRIPTOR, i)) for i in range(repetitions)]


def noise_matrix(seed: int, repetitions: int, Q: int, scale: float) -> np.ndarray:
    """``(I, Q)`` i.i.d. Laplace(scale) noise, row i from stream ``(seed, NOISE, i)``."""
    if not scale > 0:
        raise ValueError("noise scale must be positive")
    out = np.empty((repetitions, Q))
    for i in range(repetitions):
        out[i] = standard_laplace(stream(seed, Purpose.NOISE, i), Q)
    return scale * out


def _check_release_inputs(dataset: Dataset, family: LsqFamily, config: MechanismConfig, memory_cap):
    if dataset.n < 1:
        raise ValueError("cannot release a function of an empty dataset")
    if dataset.dim != family.dim:
        raise ValueError(f"dataset dimension {dataset.dim} != family dimension {family.dim}")
    if dataset.bandwidth != 1.0:
        raise ValueError("dataset must be scaled to unit bandwidth before release")
    Q = family.params.Q
    nbytes = 8 * Q * config.repetitions
    if nbytes > memory_cap:
        raise MemoryError(
            f"aggregate matrix needs {nbytes} bytes (I={config.repetitions}, Q={Q}), "
            f"over the {memory_cap}-byte cap; reduce Q or I"
        )


def _release(dataset, family, config, noisy, bandwidth, memory_cap) -> ReleasedFunction:
    _check_release_inputs(dataset, family, config, memory_cap)
    I = config.repetitions
    descs = sample_descriptors(family, config.seed, I)
    agg = family.mean_f(descs, dataset.points)
    scale = 0.0
    if noisy:
        scale = noise_scale(I, family.f_range_l1(), config.epsilon, dataset.n)
        agg = agg + noise_matrix(config.seed, I, agg.shape[1], scale)
    kernel = KernelSpec(family.kernel.kind, bandwidth, family.kernel.normalized)
    return ReleasedFunction(
        family_tag=family.tag,
        kernel=kernel,
        epsilon=config.epsilon if noisy else math.inf,
        groups=config.groups,
        noise_scale=scale,
        descriptors=tuple(descs),
        aggregates=agg,
        clamp=config.clamp,
        private=noisy,
        dim=family.dim,
    )


def curator_release(
    dataset: Dataset,
    family: LsqFamily,
    config: MechanismConfig,
    *,
    bandwidth: float = 1.0,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> ReleasedFunction:
    """Release an epsilon-DP description of the KDE of ``dataset``.

    ``dataset`` must already be at unit bandwidth; ``bandwidth`` is only
    recorded so clients can scale raw queries the same way.
    """
    return _release(dataset, family, config, True, bandwidth, memory_cap)


def _oracle_release(
    dataset: Dataset,
    family: LsqFamily,
    config: MechanismConfig,
    *,
    bandwidth: float = 1.0,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> ReleasedFunction:
    # Test and oracle-mode harness hook: the same release without noise.  The
    # result is flagged non-private and cannot be serialized.
    return _release(dataset, family, config, False, bandwidth, memory_cap)


def median_of_means(values: np.ndarray, groups: int) -> np.ndarray:
    """Median over ``groups`` consecutive blocks of the last axis of their means."""
    values = np.asarray(values, dtype=np.float64)
    I = values.shape[-1]
    if groups < 1 or I % groups:
        raise ValueError(f"groups ({groups}) must divide {I}")
    means = values.reshape(values.shape[:-1] + (groups, I // groups)).mean(axis=-1)
    return np.median(means, axis=-1)


def _finish(est, released: ReleasedFunction):
    return np.clip(est, 0.0, 1.0) if released.clamp else est


def client_estimate(
    released: ReleasedFunction,
    family: LsqFamily,
    y,
    *,
    op_counter: Counter | None = None,
) -> float:
    """Estimate the KDE at one (unit-bandwidth) query point."""
    y = as_point(y, family.dim)
    vals = np.array(
        [
            family.eval_g(desc, y).dot(released.aggregates[i], op_counter)
            for i, desc in enumerate(released.descriptors)
        ]
    )
    return float(_finish(median_of_means(vals, released.groups), released))


def client_estimate_many(released: ReleasedFunction, family: LsqFamily, Y) -> np.ndarray:
    """Vectorized :func:`client_estimate` over the rows of ``Y``."""
    Y = as_points(Y, family.dim)
    vals = family.g_dot(released.descriptors, released.aggregates, Y)
    return _finish(median_of_means(vals, released.groups), released)
