"""Uniform release/estimate interface over the five mechanisms.

The harness works on unit-bandwidth data throughout.  Parameters:
``rff`` and ``lsh`` take the repetition count I, ``fgt`` the truncation order
rho, ``bernstein`` the lattice order k, ``noisysample`` the held-out sample
size.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..baselines import (
    BernsteinRelease,
    NoisySampleRelease,
    bernstein_estimate_many,
    bernstein_release,
    noisy_sample_release,
)
from ..container import family_for
from ..core import Dataset, KernelKind, KernelSpec, as_points
from ..fgt import fgt_family_from_data
from ..lsh import LshFamily
from ..mechanism import (
    LsqFamily,
    MechanismConfig,
    ReleasedFunction,
    _oracle_release,
    client_estimate_many,
    curator_release,
    noise_matrix,
    noise_scale,
)
from ..rff import rff_family
from ..rng import Purpose, stream

MECHANISMS = ("rff", "fgt", "lsh", "bernstein", "noisysample")
REPETITION_MECHANISMS = ("rff", "lsh")

# Default search ladders for auto-tuning and budget sweeps.
LADDERS = {
    "rff": [2**e for e in range(6, 15)],
    "lsh": [2**e for e in range(0, 9)],
    "fgt": list(range(2, 15)),
    "bernstein": [2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64],
    "noisysample": [100],
}


@dataclass(frozen=True)
class MechanismOptions:
    rff_kernel: KernelKind = KernelKind.GAUSSIAN
    cauchy_normalized: bool = True
    lsh_buckets: int = 4096
    groups: int = 1
    fgt_center: object = "centroid"
    sample_size: int = 100
    bernstein_iterations: int = 1
    clamp: bool = False
    extra: dict = field(default_factory=dict)


def check_mechanism(name: str) -> str:
    if name not in MECHANISMS:
        raise ValueError(f"unknown mechanism {name!r}; choose from {', '.join(MECHANISMS)}")
    return name


def mechanism_kernel(name: str, opts: MechanismOptions) -> KernelSpec:
    """Unit-bandwidth kernel a mechanism approximates."""
    check_mechanism(name)
    if name == "lsh":
        return KernelSpec(KernelKind.LAPLACIAN)
    if name == "rff":
        return KernelSpec(opts.rff_kernel, 1.0, opts.cauchy_normalized)
    return KernelSpec(KernelKind.GAUSSIAN)


def build_family(name: str, points: np.ndarray, parameter, opts: MechanismOptions) -> LsqFamily:
    d = points.shape[1]
    if name == "rff":
        return rff_family(mechanism_kernel(name, opts), d)
    if name == "lsh":
        return LshFamily(d, opts.lsh_buckets)
    if name == "fgt":
        return fgt_family_from_data(points, _int_param(name, parameter), opts.fgt_center)
    raise ValueError(f"{name} is not an LSQ mechanism")


def _int_param(name: str, parameter) -> int:
    p = int(parameter)
    if p != parameter or p < 1:
        raise ValueError(f"{name} budget must be a positive integer, got {parameter!r}")
    return p


def _config(name, epsilon, parameter, seed, opts) -> MechanismConfig:
    reps = _int_param(name, parameter) if name in REPETITION_MECHANISMS else 1
    groups = opts.groups if name in REPETITION_MECHANISMS else 1
    return MechanismConfig(epsilon, reps, groups, seed, opts.clamp)


def make_release(
    name: str,
    dataset: Dataset,
    epsilon: float,
    parameter,
    seed: int,
    opts: MechanismOptions = MechanismOptions(),
    *,
    oracle: bool = False,
):
    """One release of ``name`` on unit-bandwidth data.  Oracle releases are noise-free."""
    check_mechanism(name)
    if name in ("rff", "lsh", "fgt"):
        fam = build_family(name, dataset.points, parameter, opts)
        cfg = _config(name, epsilon, parameter, seed, opts)
        return (_oracle_release if oracle else curator_release)(dataset, fam, cfg)
    if name == "bernstein":
        return bernstein_release(
            dataset,
            KernelSpec(),
            epsilon,
            _int_param(name, parameter),
            stream(seed, Purpose.NOISE),
            iterations=opts.bernstein_iterations,
            _oracle=oracle,
        )
    return noisy_sample_release(
        dataset, epsilon, _int_param(name, parameter), stream(seed, Purpose.HOLDOUT), _oracle=oracle
    )


def estimate(release, Y) -> np.ndarray:
    """Answer unit-bandwidth queries with any release object."""
    if isinstance(release, ReleasedFunction):
        return client_estimate_many(release, family_for(release), Y)
    if isinstance(release, BernsteinRelease):
        return bernstein_estimate_many(release, Y)[0]
    if isinstance(release, NoisySampleRelease):
        Y = as_points(Y, release.dim)
        return np.full(Y.shape[0], release.value)
    raise TypeError(f"not a release: {type(release).__name__}")


def estimate_raw(release, Y_raw) -> np.ndarray:
    """Answer queries given in the original (unscaled) coordinates.

    LSQ releases live in unit-bandwidth coordinates; the baselines are
    computed directly at the recorded bandwidth.
    """
    Y = np.asarray(Y_raw, dtype=np.float64)
    if isinstance(release, ReleasedFunction):
        Y = Y / release.kernel.bandwidth
    return estimate(release, Y)


def release_dim(release) -> int:
    return release.d if isinstance(release, BernsteinRelease) else release.dim


def repetition_ladder(
    name: str,
    dataset: Dataset,
    epsilons,
    budgets,
    seed: int,
    opts: MechanismOptions = MechanismOptions(),
    *,
    oracle: bool = False,
) -> Iterator[tuple[int, float | None, ReleasedFunction, float]]:
    """Releases for every repetition count in ``budgets`` from one shared pass.

    Descriptor i and its noise row come from their own streams, so the first
    m rows of a larger release are exactly a release with I = m; each
    yielded release equals ``make_release(name, dataset, eps, m, seed)``.
    The reported seconds are the cumulative curator work a standalone
    release of size m would have done: sampling and averaging its m pairs,
    then drawing its noise.  Yields ``(m, eps, release, seconds)`` with
    ``eps=None`` for oracle-mode releases.
    """
    if name not in REPETITION_MECHANISMS:
        raise ValueError(f"{name} is not parameterized by repetitions")
    budgets = sorted({_int_param(name, b) for b in budgets})
    fam = build_family(name, dataset.points, budgets[-1], opts)
    for m in budgets:
        _config(name, 1.0, m, seed, opts)
    X = dataset.points
    Q = fam.params.Q
    agg = np.empty((budgets[-1], Q))
    descs: list = []
    elapsed = 0.0
    kernel = KernelSpec(fam.kernel.kind, 1.0, fam.kernel.normalized)
    for m in budgets:
        t0 = time.perf_counter()
        new = [fam.sample(stream(seed, Purpose.DESCRIPTOR, i)) for i in range(len(descs), m)]
        if new:
            agg[len(descs) : m] = fam.mean_f(new, X)
        descs.extend(new)
        elapsed += time.perf_counter() - t0
        common = dict(
            family_tag=fam.tag,
            kernel=kernel,
            groups=opts.groups,
            descriptors=tuple(descs),
            clamp=opts.clamp,
            dim=fam.dim,
        )
        if oracle:
            yield m, None, ReleasedFunction(
                epsilon=float("inf"), noise_scale=0.0, aggregates=agg[:m], private=False, **common
            ), elapsed
        for eps in epsilons:
            t0 = time.perf_counter()
            scale = noise_scale(m, fam.f_range_l1(), eps, dataset.n)
            noisy = agg[:m] + noise_matrix(seed, m, Q, scale)
            rel = ReleasedFunction(epsilon=eps, noise_scale=scale, aggregates=noisy, **common)
            yield m, eps, rel, elapsed + time.perf_counter() - t0
