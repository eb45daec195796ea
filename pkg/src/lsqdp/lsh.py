"""Random-binning LSH family for the Laplacian kernel.

Each axis gets a grid with pitch ``delta_j ~ Gamma(2, 1)`` and offset
``u_j ~ U[0, delta_j)``.  Two points share the bin along axis j with
probability ``E[max(0, 1 - |t| / delta)] = exp(-|t|)``, so sharing all bins has
probability ``exp(-||x - y||_1)``.  The d-tuple of bin indices is then mapped
into ``B'`` buckets by a strongly universal vector multiply-shift hash, which
only merges buckets and so biases collisions upward by at most ``1/B'``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import KernelKind, KernelSpec, as_point, as_points
from .mechanism import FamilyTag, LsqFamily, LsqParams, SparseVector

BIN_LIMIT = 2**31
_CHUNK = 1 << 22
_SHIFT32 = np.uint64(32)


@dataclass(frozen=True, eq=False)
class RandomBinningDescriptor:
    pitch: np.ndarray
    shift: np.ndarray
    hash_seed: int
    buckets: int

    def __post_init__(self):
        pitch = np.array(self.pitch, dtype=np.float64).reshape(-1)
        shift = np.array(self.shift, dtype=np.float64).reshape(-1)
        if pitch.shape != shift.shape:
            raise ValueError("pitch and shift differ in dimension")
        if np.any(~(pitch > 0)) or np.any(shift < 0) or np.any(shift >= pitch):
            raise ValueError("need pitch > 0 and 0 <= shift < pitch on every axis")
        if not 1 <= self.buckets < 2**32:
            raise ValueError("bucket count must be in [1, 2**32)")
        pitch.setflags(write=False)
        shift.setflags(write=False)
        object.__setattr__(self, "pitch", pitch)
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "hash_seed", int(self.hash_seed) & ((1 << 64) - 1))

    def __eq__(self, other):
        if not isinstance(other, RandomBinningDescriptor):
            return NotImplemented
        return (
            self.hash_seed == other.hash_seed
            and self.buckets == other.buckets
            and np.array_equal(self.pitch, other.pitch)
            and np.array_equal(self.shift, other.shift)
        )

    @property
    def d(self) -> int:
        return self.pitch.shape[0]

    @cached_property
    def _multipliers(self) -> np.ndarray:
        return hash_multipliers(np.array([self.hash_seed], dtype=np.uint64), self.d)[0]


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _splitmix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def hash_multipliers(seeds: np.ndarray, d: int) -> np.ndarray:
    """``(len(seeds), d + 1)`` hash coefficients expanded from 64-bit seeds by SplitMix64."""
    steps = np.arange(1, d + 2, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _splitmix64(seeds[:, None] + steps[None, :] * _GOLDEN)


def binning_sample_many(d: int, buckets: int, rng: np.random.Generator, count: int) -> list:
    """``count`` descriptors drawn in bulk (same law as :func:`binning_sample`)."""
    pitch = rng.gamma(2.0, 1.0, (count, d))
    shift = np.minimum(rng.random((count, d)) * pitch, np.nextafter(pitch, 0.0))
    seeds = rng.integers(0, 2**64, size=count, dtype=np.uint64, endpoint=False)
    return [RandomBinningDescriptor(p, s, int(h), buckets) for p, s, h in zip(pitch, shift, seeds)]


def binning_sample(d: int, buckets: int, rng: np.random.Generator) -> RandomBinningDescriptor:
    if buckets < 1:
        raise ValueError("bucket count must be positive")
    pitch = rng.gamma(2.0, 1.0, d)
    shift = np.minimum(rng.random(d) * pitch, np.nextafter(pitch, 0.0))
    seed = int(rng.integers(0, 2**64, dtype=np.uint64, endpoint=False))
    return RandomBinningDescriptor(pitch, shift, seed, buckets)


def bin_indices(desc: RandomBinningDescriptor, P: np.ndarray) -> np.ndarray:
    bins = np.floor((P - desc.shift) / desc.pitch)
    if np.any(np.abs(bins) >= BIN_LIMIT):
        raise ValueError("bin index beyond 2**31; scale the data down")
    return bins.astype(np.int64)


def hash_tuples(desc: RandomBinningDescriptor, bins: np.ndarray) -> np.ndarray:
    """Map rows of 32-bit bin tuples to ``[0, buckets)``.

    ``h = (b + sum_j a_j x_j) mod 2**64`` and its top 32 bits are strongly
    universal for 32-bit ``x_j``; those bits are range-reduced by
    ``(v * B') >> 32``.
    """
    a = desc._multipliers
    x = (bins + BIN_LIMIT).astype(np.uint64)
    with np.errstate(over="ignore"):
        h = np.full(x.shape[0], a[-1], dtype=np.uint64)
        for j in range(x.shape[1]):
            h += a[j] * x[:, j]
        v = h >> _SHIFT32
        return ((v * np.uint64(desc.buckets)) >> _SHIFT32).astype(np.int64)


def lsh_buckets_many(descs, P) -> np.ndarray:
    """``(len(descs), n)`` buckets of every point under every descriptor."""
    d = descs[0].d
    P = as_points(P, d)
    pitch = np.stack([x.pitch for x in descs])
    shift = np.stack([x.shift for x in descs])
    a = hash_multipliers(np.array([x.hash_seed for x in descs], dtype=np.uint64), d)
    B = np.array([x.buckets for x in descs], dtype=np.uint64)
    bins = np.floor((P[None, :, :] - shift[:, None, :]) / pitch[:, None, :])
    if np.any(np.abs(bins) >= BIN_LIMIT):
        raise ValueError("bin index beyond 2**31; scale the data down")
    x = (bins.astype(np.int64) + BIN_LIMIT).astype(np.uint64)
    with np.errstate(over="ignore"):
        h = np.repeat(a[:, -1:], P.shape[0], axis=1)
        for j in range(d):
            h += a[:, j : j + 1] * x[:, :, j]
        return (((h >> _SHIFT32) * B[:, None]) >> _SHIFT32).astype(np.int64)


def lsh_bucket(desc: RandomBinningDescriptor, p) -> int:
    p = as_point(p, desc.d)
    return int(hash_tuples(desc, bin_indices(desc, p[None, :]))[0])


def lsh_buckets(desc: RandomBinningDescriptor, P) -> np.ndarray:
    P = as_points(P, desc.d)
    return hash_tuples(desc, bin_indices(desc, P))


class LshFamily(LsqFamily):
    tag = FamilyTag.LSH
    kernel = KernelSpec(KernelKind.LAPLACIAN, 1.0)

    def __init__(self, d: int, buckets: int):
        if d < 1 or buckets < 1:
            raise ValueError("dimension and bucket count must be positive")
        self.dim = int(d)
        self.buckets = int(buckets)

    @property
    def params(self) -> LsqParams:
        return LsqParams(self.buckets, 1.0, 1)

    def f_range_l1(self) -> float:
        return 1.0

    def sample(self, rng):
        return binning_sample(self.dim, self.buckets, rng)

    def sample_many(self, rng, count: int) -> list:
        return binning_sample_many(self.dim, self.buckets, rng, count)

    def eval_f(self, desc, x) -> SparseVector:
        return SparseVector(np.array([lsh_bucket(desc, x)]), np.ones(1), self.buckets)

    eval_g = eval_f

    def _blocks(self, descs, n):
        step = max(1, _CHUNK // max(1, n * self.dim))
        for s in range(0, len(descs), step):
            yield s, descs[s : s + step]

    def mean_f(self, descs, X):
        B = self.buckets
        out = np.empty((len(descs), B))
        for s, block in self._blocks(descs, X.shape[0]):
            idx = lsh_buckets_many(block, X) + (np.arange(len(block)) * B)[:, None]
            out[s : s + len(block)] = np.bincount(idx.ravel(), minlength=len(block) * B).reshape(-1, B)
        return out / X.shape[0]

    def g_dot(self, descs, aggregates, Y):
        out = np.empty((Y.shape[0], len(descs)))
        for s, block in self._blocks(descs, Y.shape[0]):
            idx = lsh_buckets_many(block, Y)
            out[:, s : s + len(block)] = np.take_along_axis(aggregates[s : s + len(block)], idx, axis=1).T
        return out

    def encode_descriptor(self, desc: RandomBinningDescriptor) -> bytes:
        d = desc.d
        return struct.pack(f"<II{d}d{d}dQ", d, desc.buckets, *desc.pitch, *desc.shift, desc.hash_seed)

    @classmethod
    def decode_descriptor(cls, buf: bytes) -> RandomBinningDescriptor:
        d, buckets = struct.unpack_from("<II", buf)
        fmt = f"<II{d}d{d}dQ"
        if len(buf) != struct.calcsize(fmt):
            raise ValueError("LSH descriptor block has the wrong length")
        vals = struct.unpack(fmt, buf)
        return RandomBinningDescriptor(np.array(vals[2 : 2 + d]), np.array(vals[2 + d : 2 + 2 * d]), vals[-1], buckets)

    @classmethod
    def from_descriptor(cls, desc: RandomBinningDescriptor, kernel=None) -> "LshFamily":
        return cls(desc.d, desc.buckets)


def buckets_for_alpha(alpha: float) -> int:
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return math.ceil(1.0 / alpha)


def lsh_family(d: int, alpha: float) -> LshFamily:
    """(ceil(1/alpha), 1, 1)-LSQ family for the Laplacian kernel."""
    return LshFamily(d, buckets_for_alpha(alpha))
