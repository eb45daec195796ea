"""Fast Gauss Transform LSQ family (Gaussian kernel, unit bandwidth).

Space is tiled by unit cells whose corners are the integer lattice.  For a
data point x in cell H with center z, ``f`` puts the monomials
``prod_j (x_j - z_j)**r_j`` for every multi-index ``r`` in ``{0..rho}**d`` into
the block of H.  For a query y, ``g`` fills the block of every cell whose
center lies within ``sqrt(rho)`` of y with ``prod_j h_{r_j}(y_j - z_j) / r_j!``
where ``h_r`` is the Hermite function.  Then ``f(x).g(y)`` is the truncated
Hermite expansion of ``exp(-||x - y||**2)``.

Only cells meeting the ball of radius ``radius`` around ``center`` carry
coordinates, so ``Q = n_cells * (rho + 1)**d``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import KernelKind, KernelSpec, as_point
from .mechanism import DEFAULT_MEMORY_CAP, FamilyTag, LsqFamily, LsqParams, SparseVector

MAX_RHO = 30
_CHUNK = 1 << 22
_SLACK = 1e-9


def hermite_values(t: float, rho: int) -> np.ndarray:
    """``h_0(t), ..., h_rho(t)`` with ``h_r(t) = exp(-t**2) * P_r(t)``.

    ``P_r`` are the physicists' Hermite polynomials, run through their
    three-term recurrence.
    """
    return _hermite(np.asarray(t, dtype=np.float64), rho)


def _hermite(T: np.ndarray, rho: int) -> np.ndarray:
    out = np.empty(T.shape + (rho + 1,))
    out[..., 0] = 1.0
    if rho >= 1:
        out[..., 1] = 2.0 * T
    for i in range(1, rho):
        out[..., i + 1] = 2.0 * T * out[..., i] - 2.0 * i * out[..., i - 1]
    out *= np.exp(-T * T)[..., None]
    return out


def _tensor(A: np.ndarray) -> np.ndarray:
    """Row-wise outer product over axis 1: ``(m, d, k) -> (m, k**d)``, C order."""
    out = A[:, 0, :]
    for j in range(1, A.shape[1]):
        out = (out[:, :, None] * A[:, j, None, :]).reshape(A.shape[0], out.shape[1] * A.shape[2])
    return out


def _powers(T: np.ndarray, rho: int) -> np.ndarray:
    out = np.empty(T.shape + (rho + 1,))
    out[..., 0] = 1.0
    for r in range(1, rho + 1):
        out[..., r] = out[..., r - 1] * T
    return out


def grid_cells(radius: float, d: int) -> np.ndarray:
    """Lower corners of the unit lattice cells meeting the ball ``||x|| <= radius``.

    Returned as an ``(n_cells, d)`` int64 array in lexicographic order.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    c = int(math.ceil(radius))
    axis = np.arange(-c - 1, c + 1)
    # Distance from the origin to [a, a + 1] along one axis.
    gap = np.maximum(np.maximum(axis, -axis - 1), 0).astype(np.float64)
    side = axis.size
    if side**d > 50_000_000:
        raise MemoryError(f"cell enumeration box has {side}**{d} cells; reduce radius or d")
    mesh = np.indices((side,) * d).reshape(d, -1).T
    dist2 = (gap[mesh] ** 2).sum(axis=1)
    keep = dist2 <= radius * radius * (1 + _SLACK) + _SLACK
    return axis[mesh[keep]].astype(np.int64)


@dataclass(frozen=True, eq=False)
class FgtDescriptor:
    rho: int
    radius: float
    d: int
    center: np.ndarray
    cells: np.ndarray

    def __post_init__(self):
        if not 1 <= self.rho <= MAX_RHO:
            raise ValueError(f"rho must be in [1, {MAX_RHO}], got {self.rho}")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        center = np.array(self.center, dtype=np.float64).reshape(-1)
        cells = np.array(self.cells, dtype=np.int64).reshape(-1, self.d)
        if center.shape != (self.d,):
            raise ValueError("center has the wrong dimension")
        center.setflags(write=False)
        cells.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "cells", cells)

    def __eq__(self, other):
        if not isinstance(other, FgtDescriptor):
            return NotImplemented
        return (
            self.rho == other.rho
            and self.radius == other.radius
            and self.d == other.d
            and np.array_equal(self.center, other.center)
            and np.array_equal(self.cells, other.cells)
        )

    @property
    def block(self) -> int:
        return (self.rho + 1) ** self.d

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def Q(self) -> int:
        return self.n_cells * self.block

    @cached_property
    def _table(self):
        lo = self.cells.min(axis=0)
        shape = tuple(self.cells.max(axis=0) - lo + 1)
        table = np.full(shape, -1, dtype=np.int64)
        table[tuple((self.cells - lo).T)] = np.arange(self.n_cells)
        return lo, table

    def cell_index(self, corners: np.ndarray) -> np.ndarray:
        """Block index of each cell (rows of lower corners), -1 if not in the grid."""
        lo, table = self._table
        rel = corners - lo
        ok = np.all((rel >= 0) & (rel < np.array(table.shape)), axis=-1)
        out = np.full(corners.shape[:-1], -1, dtype=np.int64)
        out[ok] = table[tuple(rel[ok].T)]
        return out

    @cached_property
    def _inv_factorials(self) -> np.ndarray:
        return np.array([1.0 / math.factorial(r) for r in range(self.rho + 1)])

    @cached_property
    def _offsets(self) -> np.ndarray:
        h = math.ceil(math.sqrt(self.rho)) + 1
        return (np.indices((2 * h + 1,) * self.d).reshape(self.d, -1).T - h).astype(np.int64)


def _f_blocks(desc: FgtDescriptor, X: np.ndarray):
    """Cell index and monomial block of each point of X."""
    shifted = X - desc.center
    norms = np.sqrt(np.einsum("ij,ij->i", shifted, shifted))
    if np.any(norms > desc.radius * (1 + _SLACK) + _SLACK):
        raise ValueError("point lies outside the FGT data ball; rebuild the family from the data")
    corners = np.floor(shifted).astype(np.int64)
    idx = desc.cell_index(corners)
    if np.any(idx < 0):
        raise ValueError("point falls in a cell outside the FGT grid")
    return idx, shifted - (corners + 0.5)


def fgt_eval_f(desc: FgtDescriptor, x) -> SparseVector:
    x = as_point(x, desc.d)
    idx, t = _f_blocks(desc, x[None, :])
    vals = _tensor(_powers(t, desc.rho))[0]
    B = desc.block
    return SparseVector.from_arrays(idx[0] * B + np.arange(B), vals, desc.Q)


def _g_candidates(desc: FgtDescriptor, Y: np.ndarray):
    """(query, cell, offset) triples with ``||y - z_H||**2 <= rho`` and H in the grid."""
    shifted = Y - desc.center
    base = np.floor(shifted).astype(np.int64)
    corners = base[:, None, :] + desc._offsets[None, :, :]
    T = shifted[:, None, :] - (corners + 0.5)
    near = np.einsum("qcj,qcj->qc", T, T) <= desc.rho
    q, c = np.nonzero(near)
    idx = desc.cell_index(corners[q, c])
    ok = idx >= 0
    return q[ok], idx[ok], T[q[ok], c[ok]]


def _g_values(desc: FgtDescriptor, T: np.ndarray) -> np.ndarray:
    return _tensor(_hermite(T, desc.rho) * desc._inv_factorials)


def fgt_eval_g(desc: FgtDescriptor, y) -> SparseVector:
    y = as_point(y, desc.d)
    _, idx, T = _g_candidates(desc, y[None, :])
    B = desc.block
    vals = _g_values(desc, T)
    indices = (idx[:, None] * B + np.arange(B)[None, :]).reshape(-1)
    return SparseVector.from_arrays(indices, vals.reshape(-1), desc.Q)


def fgt_l1_bound(rho: int, d: int) -> float:
    """``sum_r prod_j 2**-r_j`` over ``r in {0..rho}**d``, i.e. ``(2 - 2**-rho)**d``.

    Each monomial has ``|x_j - z_j| <= 1/2``, so this bounds ``||f(x)||_1``.
    """
    return (2.0 - 2.0**-rho) ** d


class FgtFamily(LsqFamily):
    """Single-pair LSQ family; ``sample`` ignores its generator."""

    tag = FamilyTag.FGT
    kernel = KernelSpec(KernelKind.GAUSSIAN, 1.0)

    def __init__(self, radius: float, d: int, rho: int, center=None, *, memory_cap=DEFAULT_MEMORY_CAP):
        if d < 1:
            raise ValueError("dimension must be positive")
        center = np.zeros(d) if center is None else center
        self.descriptor = FgtDescriptor(int(rho), float(radius), int(d), center, grid_cells(radius, d))
        self.dim = int(d)
        if 8 * self.descriptor.Q > memory_cap:
            raise MemoryError(
                f"FGT needs Q={self.descriptor.Q} coordinates; reduce rho or the data radius"
            )

    @classmethod
    def from_descriptor(cls, desc: FgtDescriptor, kernel=None) -> "FgtFamily":
        fam = cls.__new__(cls)
        fam.descriptor = desc
        fam.dim = desc.d
        return fam

    @property
    def rho(self) -> int:
        return self.descriptor.rho

    @property
    def params(self) -> LsqParams:
        desc = self.descriptor
        near_cells = (math.floor(2 * math.sqrt(desc.rho)) + 1) ** desc.d
        return LsqParams(desc.Q, 1.6**desc.d, min(desc.Q, near_cells * desc.block))

    def f_range_l1(self) -> float:
        return fgt_l1_bound(self.rho, self.dim)

    def sample(self, rng=None):
        return self.descriptor

    def eval_f(self, desc, x):
        return fgt_eval_f(desc, x)

    def eval_g(self, desc, y):
        return fgt_eval_g(desc, y)

    def _mean_f_one(self, desc: FgtDescriptor, X: np.ndarray) -> np.ndarray:
        B = desc.block
        idx, T = _f_blocks(desc, X)
        order = np.argsort(idx, kind="stable")
        idx, T = idx[order], T[order]
        F = np.zeros((desc.n_cells, B))
        step = max(1, _CHUNK // B)
        for s in range(0, X.shape[0], step):
            vals = _tensor(_powers(T[s : s + step], desc.rho))
            cells, starts = np.unique(idx[s : s + step], return_index=True)
            F[cells] += np.add.reduceat(vals, starts, axis=0)
        return F.reshape(-1) / X.shape[0]

    def mean_f(self, descs, X):
        out = np.empty((len(descs), descs[0].Q))
        for i, desc in enumerate(descs):
            if i and desc is descs[i - 1]:
                out[i] = out[i - 1]
            else:
                out[i] = self._mean_f_one(desc, X)
        return out

    def g_dot(self, descs, aggregates, Y):
        out = np.zeros((Y.shape[0], len(descs)))
        for i, desc in enumerate(descs):
            B = desc.block
            Fb = aggregates[i].reshape(desc.n_cells, B)
            step = max(1, _CHUNK // (desc._offsets.shape[0] * B))
            for s in range(0, Y.shape[0], step):
                q, idx, T = _g_candidates(desc, Y[s : s + step])
                dots = np.einsum("cb,cb->c", _g_values(desc, T), Fb[idx])
                out[s : s + step, i] = np.bincount(q, weights=dots, minlength=min(step, Y.shape[0] - s))
        return out

    def encode_descriptor(self, desc: FgtDescriptor) -> bytes:
        head = struct.pack("<IIdQ", desc.rho, desc.d, desc.radius, desc.n_cells)
        return head + desc.center.astype("<f8").tobytes() + desc.cells.astype("<i8").tobytes()

    @classmethod
    def decode_descriptor(cls, buf: bytes) -> FgtDescriptor:
        rho, d, radius, n_cells = struct.unpack_from("<IIdQ", buf)
        off = struct.calcsize("<IIdQ")
        if len(buf) != off + 8 * d + 8 * d * n_cells:
            raise ValueError("FGT descriptor block has the wrong length")
        center = np.frombuffer(buf, "<f8", d, off).astype(np.float64)
        cells = np.frombuffer(buf, "<i8", d * n_cells, off + 8 * d).astype(np.int64).reshape(n_cells, d)
        return FgtDescriptor(rho, radius, d, center, cells)


def fgt_family(radius: float, d: int, rho: int, center=None, **kw) -> FgtFamily:
    return FgtFamily(radius, d, rho, center, **kw)


def fgt_family_from_data(points, rho: int, center="centroid", **kw) -> FgtFamily:
    """Fit the grid to a unit-bandwidth point set.

    ``center`` is ``"centroid"`` (data dependent, see README), ``None`` for the
    origin, or an explicit public point.  The radius is the largest distance
    from the center to a data point.
    """
    X = np.asarray(points, dtype=np.float64)
    if isinstance(center, str):
        if center != "centroid":
            raise ValueError(f"unknown center mode {center!r}")
        c = X.mean(axis=0)
    elif center is None:
        c = np.zeros(X.shape[1])
    else:
        c = as_point(center, X.shape[1])
    radius = float(np.sqrt(((X - c) ** 2).sum(axis=1)).max())
    return FgtFamily(max(radius, 1e-6), X.shape[1], rho, c, **kw)
