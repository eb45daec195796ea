"""The three experiment families: error vs budget, vs privacy, vs runtime.

All randomness flows from one integer seed.  Trial t uses
``derive_seed(seed, TRIAL, t)``, so trials are independent of each other
and of the order they run in.  Errors are absolute differences from the
exact KDE of the kernel each mechanism approximates.
"""

from __future__ import annotations

import logging
import math
import time

import numpy as np

from ..baselines import MAX_ORDER
from ..core import Dataset, exact_kde_many
from ..mechanism import DEFAULT_MEMORY_CAP, privatize_count
from ..rng import Purpose, derive_seed, stream
from .adapters import (
    LADDERS,
    REPETITION_MECHANISMS,
    MechanismOptions,
    check_mechanism,
    estimate,
    make_release,
    mechanism_kernel,
    repetition_ladder,
)
from .records import NON_PRIVATE, ExperimentRecord

log = logging.getLogger(__name__)

_TUNE = 1


def trial_seed(seed: int, trial: int) -> int:
    return derive_seed(seed, Purpose.TRIAL, trial)


class _Oracle:
    """Exact KDE of the query set, cached per kernel."""

    def __init__(self, dataset: Dataset, queries: np.ndarray):
        self.dataset, self.queries, self._cache = dataset, queries, {}

    def __call__(self, name: str, opts: MechanismOptions) -> np.ndarray:
        kernel = mechanism_kernel(name, opts)
        if kernel not in self._cache:
            self._cache[kernel] = exact_kde_many(self.dataset, kernel, self.queries)
        return self._cache[kernel]


def _errors(release, queries, exact):
    err = np.abs(estimate(release, queries) - exact)
    return float(err.mean()), float(err.max())


def _check_unit(dataset: Dataset):
    if dataset.bandwidth != 1.0:
        raise ValueError("the harness expects a unit-bandwidth dataset")


def _budget_releases(name, dataset, epsilons, budgets, seed, opts, oracle, reuse_prefix):
    """Yield ``(parameter, eps or None, release, seconds)`` for one trial."""
    if reuse_prefix and name in REPETITION_MECHANISMS:
        yield from repetition_ladder(name, dataset, epsilons, budgets, seed, opts, oracle=oracle)
        return
    for b in budgets:
        for eps in ([None] if oracle else []) + list(epsilons):
            t0 = time.perf_counter()
            rel = make_release(name, dataset, 1.0 if eps is None else eps, b, seed, opts, oracle=eps is None)
            yield b, eps, rel, time.perf_counter() - t0


def run_error_vs_budget(
    dataset: Dataset,
    mechanism: str,
    epsilons,
    budgets,
    queries,
    trials: int,
    seed: int,
    *,
    options: MechanismOptions = MechanismOptions(),
    oracle: bool = True,
    reuse_prefix: bool = True,
) -> list[ExperimentRecord]:
    """Error of ``mechanism`` across a budget ladder, for each epsilon and trial.

    With ``oracle`` each budget also gets a ``non-private`` row computed from
    a noise-free release that is never serialized.  ``reuse_prefix`` shares
    one pass over the data across repetition counts (rff, lsh); see
    :func:`repetition_ladder` for why the rows are unchanged.
    """
    check_mechanism(mechanism)
    _check_unit(dataset)
    oracle_kde = _Oracle(dataset, np.asarray(queries, dtype=np.float64))
    exact = oracle_kde(mechanism, options)
    out = []
    for t in range(trials):
        ts = trial_seed(seed, t)
        for b, eps, rel, secs in _budget_releases(
            mechanism, dataset, epsilons, budgets, ts, options, oracle, reuse_prefix
        ):
            mean_e, max_e = _errors(rel, oracle_kde.queries, exact)
            out.append(
                ExperimentRecord(
                    mechanism, float(b), NON_PRIVATE if eps is None else float(eps), mean_e, max_e, secs, t, ts
                )
            )
    return out


def tuning_ladder(name: str, eps_n: float, ladders=None) -> list:
    """Candidate parameters around the rules of thumb m ~ eps*n, rho ~ log(eps*n)."""
    ladder = list((ladders or LADDERS)[name])
    if name == "rff":
        window = [m for m in ladder if eps_n / 8 <= m <= 8 * eps_n]
        return window or [min(ladder, key=lambda m: abs(math.log(m) - math.log(max(eps_n, 1.0))))]
    if name == "fgt":
        rho0 = 0.5 * math.log(max(eps_n, 1.0))
        window = [r for r in ladder if abs(r - rho0) <= 3]
        return window or [min(ladder, key=lambda r: abs(r - rho0))]
    return ladder


def _tune(name, dataset, eps, candidates, seed, tune_queries, exact, opts):
    best, best_err = None, math.inf
    for b, _, rel, _ in _budget_releases(name, dataset, [eps], candidates, seed, opts, False, True):
        err = _errors(rel, tune_queries, exact)[0]
        if err < best_err:
            best, best_err = b, err
    return best


def run_error_vs_privacy(
    dataset: Dataset,
    mechanisms,
    epsilons,
    queries,
    trials: int,
    seed: int,
    *,
    auto_tune: bool = True,
    params: dict | None = None,
    tuning_queries=None,
    options: MechanismOptions = MechanismOptions(),
    ladders: dict | None = None,
) -> list[ExperimentRecord]:
    """Error of each mechanism at each epsilon, at a tuned or given parameter.

    With ``auto_tune`` the parameter for every (mechanism, epsilon, trial) is
    the ladder entry with the lowest mean error on ``tuning_queries`` (which
    must be disjoint from ``queries``), using a separate release seed; the
    ladder is centred with a privatized dataset size.  Candidates that would
    exceed the memory cap are skipped.  The chosen value is the record's
    ``parameter``.
    """
    _check_unit(dataset)
    queries = np.asarray(queries, dtype=np.float64)
    if auto_tune and tuning_queries is None:
        raise ValueError("auto_tune needs a disjoint tuning query set")
    if not auto_tune and not params:
        raise ValueError("give params for every mechanism when auto_tune is off")
    oracle_kde = _Oracle(dataset, queries)
    tune_kde = _Oracle(dataset, np.asarray(tuning_queries, dtype=np.float64)) if auto_tune else None
    out = []
    for name in mechanisms:
        check_mechanism(name)
        exact = oracle_kde(name, options)
        for t in range(trials):
            ts = trial_seed(seed, t)
            for e_idx, eps in enumerate(epsilons):
                if auto_tune:
                    n_priv = max(1.0, privatize_count(dataset.n, eps, stream(ts, Purpose.COUNT, e_idx)))
                    cands = [c for c in tuning_ladder(name, eps * n_priv, ladders) if _feasible(name, dataset, c, options)]
                    if not cands:
                        log.warning("no feasible %s parameter for d=%d; skipped", name, dataset.dim)
                        continue
                    param = _tune(
                        name, dataset, eps, cands, derive_seed(ts, _TUNE), tune_kde.queries,
                        tune_kde(name, options), options,
                    )
                else:
                    param = params[name]
                t0 = time.perf_counter()
                rel = make_release(name, dataset, eps, param, ts, options)
                secs = time.perf_counter() - t0
                mean_e, max_e = _errors(rel, queries, exact)
                out.append(ExperimentRecord(name, float(param), float(eps), mean_e, max_e, secs, t, ts))
    return out


def _feasible(name, dataset, param, opts) -> bool:
    d = dataset.dim
    if name == "bernstein":
        return param <= MAX_ORDER and 8 * (param + 1) ** d <= DEFAULT_MEMORY_CAP
    if name == "fgt":
        # each cell block alone has (rho+1)**d coordinates
        return 8 * (param + 1) ** d <= DEFAULT_MEMORY_CAP // 64
    if name == "noisysample":
        return param < dataset.n
    return True


def run_error_vs_runtime(
    dataset: Dataset,
    mechanisms,
    epsilon: float,
    queries,
    trials: int,
    seed: int,
    *,
    budgets: dict | None = None,
    options: MechanismOptions = MechanismOptions(),
) -> list[ExperimentRecord]:
    """Error and curator wall time per budget; every release is built from scratch.

    Time is measured with a monotonic clock around the release call only.
    One extra warm-up trial per (mechanism, budget) runs first and is
    discarded.
    """
    _check_unit(dataset)
    oracle_kde = _Oracle(dataset, np.asarray(queries, dtype=np.float64))
    budgets = budgets or {}
    out = []
    for name in mechanisms:
        check_mechanism(name)
        exact = oracle_kde(name, options)
        for b in budgets.get(name, LADDERS[name]):
            for t in range(-1, trials):
                ts = trial_seed(seed, t) if t >= 0 else derive_seed(seed, Purpose.TRIAL, 2**32 - 1)
                t0 = time.perf_counter()
                rel = make_release(name, dataset, epsilon, b, ts, options)
                secs = time.perf_counter() - t0
                if t < 0:
                    continue
                mean_e, max_e = _errors(rel, oracle_kde.queries, exact)
                out.append(ExperimentRecord(name, float(b), float(epsilon), mean_e, max_e, secs, t, ts))
    return out
