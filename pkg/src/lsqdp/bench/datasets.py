"""Synthetic datasets used by the harness and the tests.

All generators return unit-bandwidth coordinates (``n``, ``d``) arrays.
"""

from __future__ import annotations

import numpy as np


def mixture2d(n: int, rng: np.random.Generator) -> np.ndarray:
    """Two Gaussian clusters in the plane, 60/40 split."""
    k = rng.random(n) < 0.6
    out = np.empty((n, 2))
    out[k] = rng.normal([-1.5, 0.0], [1.0, 1.0], (int(k.sum()), 2))
    out[~k] = rng.normal([1.5, 1.0], [0.7, 0.7], (int((~k).sum()), 2))
    return out


def isotropic(n: int, d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    return rng.normal(0.0, scale, (n, d))


# Age decade (rescaled by 10 years) and length of stay in days for hospital
# encounters; the marginals mimic a public diabetes readmission table.
_AGE_NODES = np.arange(0.5, 10.0, 1.0)
_AGE_PROBS = np.array([0.002, 0.007, 0.016, 0.037, 0.095, 0.17, 0.22, 0.255, 0.169, 0.029])
_STAY_DAYS = np.arange(1, 15)


def diabetes_like(n: int, rng: np.random.Generator) -> np.ndarray:
    """Discrete two-column table whose query KDE has std close to 0.03."""
    pa = _AGE_PROBS / _AGE_PROBS.sum()
    pt = np.exp(-0.2 * (_STAY_DAYS - 1))
    pt /= pt.sum()
    age = rng.choice(_AGE_NODES, size=n, p=pa)
    stay = rng.choice(_STAY_DAYS, size=n, p=pt).astype(np.float64)
    return np.column_stack([age, stay])


GENERATORS = {
    "mixture2d": lambda n, rng, d=2: mixture2d(n, rng),
    "isotropic": lambda n, rng, d=50: isotropic(n, d, rng),
    "diabetes": lambda n, rng, d=2: diabetes_like(n, rng),
}


def make_dataset(name: str, n: int, rng: np.random.Generator, d: int | None = None) -> np.ndarray:
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise ValueError(f"unknown synthetic dataset {name!r}; choose from {sorted(GENERATORS)}") from None
    return gen(n, rng) if d is None else gen(n, rng, d)


def split_queries(points: np.ndarray, n_queries: int, rng: np.random.Generator):
    """Hold out ``n_queries`` rows; returns ``(train, queries)`` with disjoint row sets."""
    n = points.shape[0]
    if not 0 < n_queries < n:
        raise ValueError("need 0 < n_queries < n")
    held = np.zeros(n, dtype=bool)
    held[rng.choice(n, size=n_queries, replace=False)] = True
    return points[~held], points[held]
