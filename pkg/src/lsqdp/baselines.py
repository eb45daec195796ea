"""Comparison mechanisms: NoisySample and the Bernstein lattice mechanism."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .core import Dataset, KernelKind, KernelSpec, check_bandwidth, as_point, as_points, exact_kde_many
from .mechanism import DEFAULT_MEMORY_CAP, laplace_sample

MAX_ORDER = 64
MAX_ITERATIONS = 8
_CHUNK = 1 << 22


@dataclass(frozen=True)
class NoisySampleRelease:
    """A constant estimate: the noisy mean KDE of a held-out sample."""

    value: float
    sample_size: int
    epsilon: float
    noise_scale: float
    dim: int
    kernel: KernelSpec = KernelSpec()
    private: bool = True


def noisy_sample_release(
    dataset: Dataset,
    epsilon: float,
    sample_size: int = 100,
    rng: np.random.Generator | None = None,
    kernel: KernelSpec | None = None,
    *,
    _oracle: bool = False,
) -> NoisySampleRelease:
    """Hold out ``sample_size`` points, average their KDE over the rest, add noise.

    Privacy holds for the points that were not held out.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if sample_size < 1 or dataset.n <= sample_size:
        raise ValueError(f"dataset of size {dataset.n} is too small for a sample of {sample_size}")
    kernel = KernelSpec(KernelKind.GAUSSIAN, dataset.bandwidth) if kernel is None else kernel
    if rng is None:
        raise ValueError("a random generator is required")
    held = np.zeros(dataset.n, dtype=bool)
    held[rng.choice(dataset.n, size=sample_size, replace=False)] = True
    rest = Dataset(dataset.points[~held], bandwidth=dataset.bandwidth)
    value = float(np.mean(exact_kde_many(rest, kernel, dataset.points[held])))
    scale = 1.0 / (epsilon * rest.n)
    if not _oracle:
        value += laplace_sample(rng, scale)
    return NoisySampleRelease(
        value, sample_size, epsilon, 0.0 if _oracle else scale, dataset.dim, kernel, not _oracle
    )


def noisy_sample_estimate(release: NoisySampleRelease, y) -> float:
    as_point(y, release.dim)
    return release.value


@dataclass(frozen=True, eq=False)
class BernsteinRelease:
    """Noisy KDE values on the ``(k+1)**d`` lattice of the data box.

    ``iterations`` selects the client-side operator: 1 is the plain Bernstein
    operator, h > 1 the tensor product of univariate iterated operators
    ``I - (I - B_k)**h``.  Either is post-processing of the noisy lattice.
    """

    k: int
    d: int
    noisy_values: np.ndarray
    epsilon: float
    domain_box: np.ndarray
    noise_scale: float
    kernel: KernelSpec = KernelSpec()
    private: bool = True
    iterations: int = 1

    def __post_init__(self):
        if not 1 <= self.iterations <= MAX_ITERATIONS:
            raise ValueError(f"iteration order must be in [1, {MAX_ITERATIONS}]")
        vals = np.array(self.noisy_values, dtype=np.float64).reshape(-1)
        box = np.array(self.domain_box, dtype=np.float64).reshape(self.d, 2)
        if vals.size != (self.k + 1) ** self.d:
            raise ValueError("lattice value count must equal (k+1)**d")
        if np.any(box[:, 1] <= box[:, 0]):
            raise ValueError("domain box must have positive width on every axis")
        vals.setflags(write=False)
        box.setflags(write=False)
        object.__setattr__(self, "noisy_values", vals)
        object.__setattr__(self, "domain_box", box)


class BernsteinEstimate(NamedTuple):
    value: float
    clamped: bool


def domain_box(points: np.ndarray, pad: float = 0.01) -> np.ndarray:
    lo, hi = points.min(axis=0), points.max(axis=0)
    width = np.where(hi > lo, hi - lo, 1.0)
    return np.stack([lo - pad * width, hi + pad * width], axis=1)


def _axis_factors(kernel: KernelSpec, x: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Per-axis kernel factors ``(n, K)``; every supported kernel is a product."""
    t = (x[:, None] - nodes[None, :]) / kernel.bandwidth
    if kernel.kind is KernelKind.GAUSSIAN:
        return np.exp(-t * t)
    if kernel.kind is KernelKind.LAPLACIAN:
        return np.exp(-np.abs(t))
    return (1.0 if kernel.normalized else 2.0) / (1.0 + t * t)


def lattice_kde(points: np.ndarray, kernel: KernelSpec, box: np.ndarray, k: int) -> np.ndarray:
    """Exact KDE at every node of the ``(k+1)**d`` lattice over ``box``.

    The kernel factorizes over axes, so the lattice sum is a chain of
    contractions rather than ``n * (k+1)**d`` kernel evaluations.  Output is
    C-ordered over node multi-indices.
    """
    n, d = points.shape
    K = k + 1
    grid = np.linspace(0.0, 1.0, K)
    factors = [_axis_factors(kernel, points[:, j], box[j, 0] + grid * (box[j, 1] - box[j, 0])) for j in range(d)]
    if d == 1:
        return factors[0].mean(axis=0)
    out = np.zeros((K ** (d - 1), K))
    step = max(1, _CHUNK // K ** (d - 1))
    for s in range(0, n, step):
        W = factors[0][s : s + step]
        for j in range(1, d - 1):
            W = (W[:, :, None] * factors[j][s : s + step, None, :]).reshape(W.shape[0], -1)
        out += W.T @ factors[d - 1][s : s + step]
    return out.reshape(-1) / n


def bernstein_release(
    dataset: Dataset,
    kernel: KernelSpec,
    epsilon: float,
    k: int,
    rng: np.random.Generator | None = None,
    *,
    box=None,
    memory_cap: int = DEFAULT_MEMORY_CAP,
    iterations: int = 1,
    _oracle: bool = False,
) -> BernsteinRelease:
    """Lattice KDE plus Laplace noise of scale ``(k+1)**d / (epsilon n)``."""
    if not 1 <= k <= MAX_ORDER:
        raise ValueError(f"Bernstein order must be in [1, {MAX_ORDER}], got {k}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    check_bandwidth(dataset, kernel)
    d = dataset.dim
    nodes = (k + 1) ** d
    if 8 * nodes > memory_cap:
        raise MemoryError(f"lattice has {nodes} nodes, over the memory cap")
    box = domain_box(dataset.points) if box is None else np.asarray(box, dtype=np.float64).reshape(d, 2)
    values = lattice_kde(dataset.points, kernel, box, k)
    scale = nodes / (epsilon * dataset.n)
    if not _oracle:
        if rng is None:
            raise ValueError("a random generator is required")
        values = values + laplace_sample(rng, scale, size=nodes)
    return BernsteinRelease(
        k, d, values, epsilon, box, 0.0 if _oracle else scale, kernel, not _oracle, iterations
    )


def bernstein_basis(k: int, u: np.ndarray) -> np.ndarray:
    """``C(k, v) u**v (1-u)**(k-v)`` for v = 0..k, computed in log space.

    ``u`` of any shape; the basis index is appended as the last axis.
    """
    u = np.asarray(u, dtype=np.float64)[..., None]
    v = np.arange(k + 1)
    logc = gammaln(k + 1) - gammaln(v + 1) - gammaln(k - v + 1)
    return np.exp(logc + xlogy(v, u) + xlog1py(k - v, -u))


def iterated_weights(k: int, iterations: int) -> np.ndarray:
    """Matrix taking node values to coefficients of the iterated operator.

    ``B_k,h f = B_k[sum_{j<h} (I - B_k)**j f]`` restricted to the nodes, where
    ``B_k`` on node values is the matrix of basis polynomials at the nodes.
    """
    M = bernstein_basis(k, np.arange(k + 1) / k)
    R = np.eye(k + 1) - M
    A = np.eye(k + 1)
    term = np.eye(k + 1)
    for _ in range(iterations - 1):
        term = R @ term
        A = A + term
    return A


def _unit_coords(release: BernsteinRelease, Y: np.ndarray):
    box = release.domain_box
    U = (Y - box[:, 0]) / (box[:, 1] - box[:, 0])
    clamped = np.any((U < 0) | (U > 1), axis=1)
    return np.clip(U, 0.0, 1.0), clamped


def bernstein_estimate_many(release: BernsteinRelease, Y) -> tuple[np.ndarray, np.ndarray]:
    """Bernstein polynomial of the noisy lattice values at each row of Y.

    Returns ``(values, clamped)``; queries outside the domain box are moved to
    its boundary and flagged.
    """
    Y = as_points(Y, release.d)
    U, clamped = _unit_coords(release, Y)
    K = release.k + 1
    basis = bernstein_basis(release.k, U)  # (m, d, K)
    vals = release.noisy_values.reshape((K,) * release.d)
    if release.iterations > 1:
        A = iterated_weights(release.k, release.iterations)
        for j in range(release.d):
            vals = np.moveaxis(np.tensordot(A, vals, axes=([1], [j])), 0, j)
    out = np.tensordot(basis[:, -1, :], vals, axes=([1], [release.d - 1]))
    for j in range(release.d - 2, -1, -1):
        out = np.einsum("q...k,qk->q...", out, basis[:, j, :])
    return out, clamped


def bernstein_estimate(release: BernsteinRelease, y) -> BernsteinEstimate:
    y = as_point(y, release.d)
    vals, clamped = bernstein_estimate_many(release, y[None, :])
    return BernsteinEstimate(float(vals[0]), bool(clamped[0]))
