"""Random Fourier feature LSQ families.

One pair per repetition: ``f = g = z`` with ``z(x) = a * sqrt(2) * cos(s * w.x + b)``.
The frequency law depends on the kernel (normal, Cauchy or Laplace
coordinates), ``s`` is sqrt(2) for the Gaussian kernel at unit bandwidth and 1
otherwise, and ``a`` is 1 except for the literal Cauchy kernel whose extra
factor ``2**d`` is carried as ``a = 2**(d/2)``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .core import KernelKind, KernelSpec, as_point
from .mechanism import FamilyTag, LsqFamily, LsqParams, SparseVector, standard_laplace

TWO_PI = 2.0 * math.pi
SQRT2 = math.sqrt(2.0)
_CHUNK = 1 << 22


@dataclass(frozen=True, eq=False)
class RffDescriptor:
    omega: np.ndarray
    beta: float

    def __post_init__(self):
        w = np.array(self.omega, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(w)):
            raise ValueError("frequency must be finite")
        if not 0.0 <= self.beta < TWO_PI:
            raise ValueError(f"phase must lie in [0, 2pi), got {self.beta}")
        w.setflags(write=False)
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "beta", float(self.beta))

    def __eq__(self, other):
        if not isinstance(other, RffDescriptor):
            return NotImplemented
        return self.beta == other.beta and np.array_equal(self.omega, other.omega)


def inner_scale(kind: KernelKind) -> float:
    return SQRT2 if KernelKind(kind) is KernelKind.GAUSSIAN else 1.0


def rff_sample(kernel: KernelSpec, d: int, rng: np.random.Generator) -> RffDescriptor:
    """Draw ``(omega, beta)`` from the Fourier law of a unit-bandwidth kernel."""
    omega = _frequencies(KernelKind(kernel.kind), rng, d)
    beta = TWO_PI * rng.random()
    if beta >= TWO_PI:
        beta = 0.0
    return RffDescriptor(omega, beta)


def _frequencies(kind: KernelKind, rng: np.random.Generator, shape):
    if kind is KernelKind.GAUSSIAN:
        return rng.standard_normal(shape)
    if kind is KernelKind.LAPLACIAN:
        return np.tan(math.pi * (rng.random(shape) - 0.5))
    return standard_laplace(rng, shape)


def rff_sample_many(kernel: KernelSpec, d: int, rng: np.random.Generator, count: int) -> list:
    """``count`` descriptors drawn in bulk (same law as :func:`rff_sample`)."""
    omega = _frequencies(KernelKind(kernel.kind), rng, (count, d))
    beta = TWO_PI * rng.random(count)
    beta[beta >= TWO_PI] = 0.0
    return [RffDescriptor(w, b) for w, b in zip(omega, beta)]


def rff_feature(desc: RffDescriptor, p, kind: KernelKind = KernelKind.GAUSSIAN) -> SparseVector:
    """The one-coordinate feature ``sqrt(2) cos(s * omega.p + beta)``."""
    p = as_point(p, desc.omega.shape[0])
    value = SQRT2 * math.cos(inner_scale(kind) * float(np.dot(desc.omega, p)) + desc.beta)
    return SparseVector.from_arrays([0], [value], 1)


class RffFamily(LsqFamily):
    tag = FamilyTag.RFF

    def __init__(self, kernel: KernelSpec, d: int):
        if d < 1:
            raise ValueError("dimension must be positive")
        self.kernel = KernelSpec(kernel.kind, 1.0, kernel.normalized)
        self.dim = int(d)
        self._inner = inner_scale(self.kernel.kind)
        literal_cauchy = self.kernel.kind is KernelKind.CAUCHY and not self.kernel.normalized
        self._amp = 2.0 ** (self.dim / 2.0) if literal_cauchy else 1.0

    @property
    def params(self) -> LsqParams:
        return LsqParams(1, SQRT2 * self._amp, 1)

    def f_range_l1(self) -> float:
        return SQRT2 * self._amp

    def sample(self, rng):
        return rff_sample(self.kernel, self.dim, rng)

    def sample_many(self, rng, count: int) -> list:
        return rff_sample_many(self.kernel, self.dim, rng, count)

    def eval_f(self, desc, x) -> SparseVector:
        sv = rff_feature(desc, x, self.kernel.kind)
        return sv if self._amp == 1.0 else SparseVector(sv.indices, sv.values * self._amp, 1)

    eval_g = eval_f

    def _stack(self, descs):
        W = np.stack([d.omega for d in descs]) * self._inner
        b = np.array([d.beta for d in descs])
        return W, b

    def _features(self, P, W, b):
        return (self._amp * SQRT2) * np.cos(P @ W.T + b)

    def mean_f(self, descs, X):
        # One descriptor at a time, so row i never depends on which other
        # descriptors share the call (repetition prefixes stay bit-identical).
        # The cosine runs in single precision (about 30x faster here); the
        # per-point error is ~1e-6 and averages out far below the noise.
        W, b = self._stack(descs)
        X = np.ascontiguousarray(X, dtype=np.float64)
        c = self._amp * SQRT2
        out = np.empty((len(descs), 1))
        for i in range(len(descs)):
            arg = (X @ W[i] + b[i]).astype(np.float32)
            out[i, 0] = c * np.cos(arg).mean(dtype=np.float64)
        return out

    def g_dot(self, descs, aggregates, Y):
        W, b = self._stack(descs)
        F = aggregates[:, 0]
        out = np.empty((Y.shape[0], len(descs)))
        step = max(1, _CHUNK // Y.shape[0])
        for s in range(0, len(descs), step):
            out[:, s : s + step] = self._features(Y, W[s : s + step], b[s : s + step]) * F[s : s + step]
        return out

    def encode_descriptor(self, desc: RffDescriptor) -> bytes:
        d = desc.omega.shape[0]
        return struct.pack(f"<I{d}dd", d, *desc.omega, desc.beta)

    @classmethod
    def decode_descriptor(cls, buf: bytes) -> RffDescriptor:
        (d,) = struct.unpack_from("<I", buf)
        if len(buf) != 4 + 8 * (d + 1):
            raise ValueError("RFF descriptor block has the wrong length")
        vals = struct.unpack_from(f"<{d}dd", buf, 4)
        return RffDescriptor(np.array(vals[:d]), vals[d])

    @classmethod
    def from_descriptor(cls, desc: RffDescriptor, kernel: KernelSpec) -> "RffFamily":
        return cls(kernel, desc.omega.shape[0])


def rff_family(kernel: KernelSpec, d: int) -> RffFamily:
    """Exact (1, sqrt 2, 1)-LSQ family for a Gaussian, Laplacian or Cauchy kernel."""
    try:
        KernelKind(kernel.kind)
    except ValueError:
        raise ValueError(f"unsupported kernel kind {kernel.kind!r}") from None
    return RffFamily(kernel, d)
