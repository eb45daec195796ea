"""Acceptance criteria 1-12.

Each test records one ``C<n> PASS|FAIL`` line (shown in the terminal summary
and on stdout) before asserting.  Run alone with
``pytest tests/test_acceptance.py -v``.
"""

import itertools
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ACCEPTANCE_LINES
from lsqdp.baselines import bernstein_basis, bernstein_estimate_many, bernstein_release
from lsqdp.bench.adapters import MechanismOptions, estimate, make_release
from lsqdp.bench.datasets import diabetes_like, mixture2d, split_queries
from lsqdp.bench.experiments import run_error_vs_budget, run_error_vs_privacy, trial_seed
from lsqdp.cli import main
from lsqdp.container import save_release
from lsqdp.core import Dataset, KernelKind, KernelSpec, exact_kde_many, kernel_eval
from lsqdp.fgt import fgt_family, fgt_family_from_data
from lsqdp.lsh import LshFamily, lsh_buckets_many
from lsqdp.mechanism import MechanismConfig, PrivacyError, _oracle_release, curator_release
from lsqdp.rff import rff_family
from lsqdp.rng import Purpose, stream


def report(n: int, ok: bool, detail: str) -> None:
    line = f"C{n:<2} {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


def _data(name, n, n_queries, seed, scale=1.0):
    gen = {"mixture": mixture2d, "diabetes": diabetes_like}[name]
    pts = scale * gen(n + n_queries, stream(seed, Purpose.DATA))
    train, queries = split_queries(pts, n_queries, stream(seed, Purpose.QUERIES))
    return Dataset(train), queries


def _ball(g, n, d, radius):
    v = g.normal(size=(n, d))
    v /= np.linalg.norm(v, axis=1)[:, None]
    return v * radius * g.random(n)[:, None] ** (1 / d)


# 1 --------------------------------------------------------------------------


def test_c01_noise_calibration():
    g = np.random.default_rng(1)
    checks = []
    for n, eps, reps in [(500, 0.3, 7), (1234, 1.7, 64), (99, 0.01, 1)]:
        ds = Dataset(g.normal(size=(n, 2)))
        rff = curator_release(ds, rff_family(KernelSpec(), 2), MechanismConfig(eps, reps, 1, 3))
        checks.append((rff.noise_scale, reps * math.sqrt(2) / (eps * n)))
        lsh = curator_release(ds, LshFamily(2, 128), MechanismConfig(eps, reps, 1, 3))
        checks.append((lsh.noise_scale, reps * 1.0 / (eps * n)))
        for rho in (2, 5, 9):
            fam = fgt_family_from_data(ds.points, rho)
            fgt = curator_release(ds, fam, MechanismConfig(eps, 1, 1, 3))
            # range oracle: sum over multi-indices of prod_j 2**-r_j
            l1 = sum(math.prod(2.0**-r for r in idx) for idx in itertools.product(range(rho + 1), repeat=2))
            checks.append((fgt.noise_scale, l1 / (eps * n)))
    worst = max(abs(a - b) / b for a, b in checks)
    report(1, worst <= 1e-15, f"noise_scale = I*f_l1/(eps*n): {len(checks)} releases, max rel diff {worst:.1e}")


# 2 --------------------------------------------------------------------------


def _pairs(g, d, count=50):
    x = g.normal(size=(count, d)) * 0.5
    return x, x + g.normal(size=(count, d)) * 0.8 / math.sqrt(d)


def test_c02_kernel_feature_consistency():
    t0 = time.perf_counter()
    g = np.random.default_rng(2)
    N = 10**5
    total = bad = 0
    for d in (1, 3, 10):
        X, Y = _pairs(g, d)
        for spec in (KernelSpec(), KernelSpec(KernelKind.LAPLACIAN), KernelSpec(KernelKind.CAUCHY, normalized=True)):
            fam = rff_family(spec, d)
            W, b = fam._stack(fam.sample_many(g, N))
            prod = fam._features(X, W, b) * fam._features(Y, W, b)  # (50, N)
            est, se = prod.mean(axis=1), prod.std(axis=1) / math.sqrt(N)
            truth = np.array([kernel_eval(spec, x, y) for x, y in zip(X, Y)])
            bad += int(np.sum(np.abs(est - truth) > 4 * se))
            total += len(X)
        descs = LshFamily(d, 2**31).sample_many(g, N)
        B = lsh_buckets_many(descs, np.vstack([X, Y]))
        hits = B[:, : len(X)] == B[:, len(X) :]
        est, se = hits.mean(axis=0), hits.std(axis=0) / math.sqrt(N)
        truth = np.array([kernel_eval(KernelSpec(KernelKind.LAPLACIAN), x, y) for x, y in zip(X, Y)])
        bad += int(np.sum(np.abs(est - truth) > 4 * se + 2.0**-31))
        total += len(X)
    secs = time.perf_counter() - t0
    report(2, bad == 0 and secs < 60, f"E[f.g] vs kernel, 4 families x d in 1,3,10: {bad}/{total} pairs off by > 4 s.e., {secs:.1f}s")


# 3 --------------------------------------------------------------------------


def test_c03_fgt_truncation_decay():
    g = np.random.default_rng(3)
    X, Y = _ball(g, 100, 2, 3.0), _ball(g, 100, 2, 3.0)
    k = np.exp(-((X - Y) ** 2).sum(axis=1))
    rhos = [4, 6, 8, 10, 12]
    worst = []
    for rho in rhos:
        fam = fgt_family(3.0, 2, rho)
        desc = fam.descriptor
        est = np.array([fam.eval_f(desc, x).to_dense() @ fam.eval_g(desc, y).to_dense() for x, y in zip(X, Y)])
        worst.append(float(np.abs(est - k).max()))
    slope = np.polyfit(rhos, np.log(worst), 1)[0]
    ok = all(a >= b for a, b in zip(worst, worst[1:])) and worst[-1] <= 1e-3 and slope < 0
    report(3, ok, "max |f.g - k| over rho 4..12: " + ", ".join(f"{w:.1e}" for w in worst) + f"; log slope {slope:.2f}")


# 4 --------------------------------------------------------------------------


def test_c04_nonprivate_oracle_equivalence():
    ds, q = _data("mixture", 10**4, 100, 4)
    exact = exact_kde_many(ds, KernelSpec(), q)
    fgt = make_release("fgt", ds, 1.0, 12, 4, oracle=True)
    rff = make_release("rff", ds, 1.0, 2**14, 4, oracle=True)
    fgt_max = float(np.abs(estimate(fgt, q) - exact).max())
    rff_mean = float(np.abs(estimate(rff, q) - exact).mean())
    ok = fgt_max <= 2e-3 and rff_mean <= 2e-2 and not fgt.private and not rff.private
    report(4, ok, f"zero noise, n=1e4: FGT rho=12 max err {fgt_max:.1e} (<= 2e-3), RFF m=2^14 mean err {rff_mean:.1e} (<= 2e-2)")


# 5 --------------------------------------------------------------------------


def test_c05_inverse_sqrt_m():
    ds, q = _data("mixture", 5000, 100, 5)
    exact = exact_kde_many(ds, KernelSpec(), q)
    sq = {1024: [], 4096: []}
    for t in range(10):
        for m in sq:
            rel = make_release("rff", ds, 1.0, m, trial_seed(5, t), oracle=True)
            sq[m].append((estimate(rel, q) - exact) ** 2)
    ratio = math.sqrt(np.mean(sq[1024]) / np.mean(sq[4096]))
    report(5, 1.5 <= ratio <= 2.7, f"RMS error ratio m=2^10 / m=2^12 = {ratio:.2f} (in [1.5, 2.7])")


# 6 --------------------------------------------------------------------------


def test_c06_divergence():
    ds, q = _data("mixture", 10**5, 100, 6)
    ladder = [2**e for e in range(6, 15)]
    recs = run_error_vs_budget(ds, "rff", [0.02], ladder, q, 10, 6, oracle=False)
    wins = 0
    for t in range(10):
        err = {r.parameter: r.mean_abs_error for r in recs if r.trial == t}
        wins += err[2.0**14] > min(err.values())
    report(6, wins >= 8, f"DP-RFF n=1e5 eps=0.02: error at m=2^14 above the ladder minimum in {wins}/10 trials")


# 7 --------------------------------------------------------------------------


def test_c07_median_of_means():
    # a narrow bandwidth spreads the queries over thousands of hash buckets,
    # so each query sees its own noise draws
    ds, q = _data("mixture", 5000, 2000, 7, scale=30.0)
    exact = exact_kde_many(ds, KernelSpec(KernelKind.LAPLACIAN), q)
    wins = 0
    for t in range(10):
        p95 = {}
        for J in (1, 9):
            rel = make_release("lsh", ds, 0.002, 9, trial_seed(7, t), MechanismOptions(lsh_buckets=2**16, groups=J))
            p95[J] = np.quantile(np.abs(estimate(rel, q) - exact), 0.95)
        wins += p95[9] < p95[1]
    report(7, wins >= 8, f"LSH I=9, noise scale 0.9: J=9 lowers the 95th-pct error vs J=1 in {wins}/10 trials")


# 8 --------------------------------------------------------------------------


def test_c08_bernstein():
    g = np.random.default_rng(8)
    unity = float(np.abs(bernstein_basis(32, g.random(10**4)).sum(axis=-1) - 1).max())
    X = Dataset(g.normal(size=(1000, 1)))
    Y = g.normal(size=(100, 1))
    exact = exact_kde_many(X, KernelSpec(), Y)
    acc = {}
    for h in (1, 3):
        rel = bernstein_release(X, KernelSpec(), 1.0, 32, iterations=h, _oracle=True)
        acc[h] = float(np.abs(bernstein_estimate_many(rel, Y)[0] - exact).max())
    ds, q = _data("diabetes", 10**5, 100, 8)
    ladder = [2, 4, 8, 16, 32, 64]
    curve = {}
    for h in (1, 3):
        recs = run_error_vs_budget(ds, "bernstein", [0.05], ladder, q, 5, 8, options=MechanismOptions(bernstein_iterations=h), oracle=False)
        curve[h] = [np.mean([r.mean_abs_error for r in recs if r.parameter == k]) for k in ladder]
    best = int(np.argmin(curve[3]))
    ok = unity <= 1e-12 and acc[3] <= 0.01 and 0 < best < len(ladder) - 1
    report(
        8, ok,
        f"unity err {unity:.0e}; k=32 zero-noise max err {acc[3]:.4f} (iterated h=3; plain operator {acc[1]:.4f}); "
        f"eps=0.05 error min at interior k={ladder[best]} (plain operator min at k={ladder[int(np.argmin(curve[1]))]})",
    )


# 9 --------------------------------------------------------------------------


def test_c09_noisysample_floor():
    ds, q = _data("diabetes", 10**5, 100, 9)
    tune = _data("diabetes", 10**5, 100, 90)[1]
    std = float(exact_kde_many(ds, KernelSpec(), q).std())
    eps = [0.05, 0.2, 1.0]
    recs = run_error_vs_privacy(ds, ["fgt", "noisysample"], eps, q, 3, 9, tuning_queries=tune)
    ok = 0.02 <= std <= 0.045
    parts = []
    for e in eps:
        ns = np.mean([r.mean_abs_error for r in recs if r.mechanism == "noisysample" and r.epsilon == e])
        fg = np.mean([r.mean_abs_error for r in recs if r.mechanism == "fgt" and r.epsilon == e])
        ok &= 0.015 <= ns <= 0.06 and fg < ns / 2
        parts.append(f"eps={e}: NS {ns:.4f} FGT {fg:.4f}")
    report(9, bool(ok), f"KDE std {std:.3f}; " + "; ".join(parts))


# 10 -------------------------------------------------------------------------


def _best_time(fn, repeat=3):
    out = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out = min(out, time.perf_counter() - t0)
    return out


def test_c10_curator_and_client_scaling():
    ds, _ = _data("mixture", 20000, 10, 10)
    ms = [256, 1024, 4096]
    per_m = [_best_time(lambda: make_release("rff", ds, 1.0, m, 10)) / m for m in ms]
    spread = max(per_m) / min(per_m)
    Y = mixture2d(2000, np.random.default_rng(10))
    client = []
    for n in (1000, 100000):
        rel = make_release("rff", Dataset(mixture2d(n, np.random.default_rng(n))), 1.0, 1024, 10)
        client.append(_best_time(lambda: estimate(rel, Y), 5) / len(Y))
    cratio = client[1] / client[0]
    ok = spread <= 2.0 and 0.5 <= cratio <= 2.0
    report(10, ok, f"RFF curator s/feature spread {spread:.2f} over m 256..4096; client s/query ratio n=1e5 vs 1e3 {cratio:.2f}")


# 11 -------------------------------------------------------------------------


def _strip_seconds(text):
    rows = [line.split(",") for line in text.splitlines()]
    col = rows[0].index("curator_seconds")
    return [r[:col] + r[col + 1 :] for r in rows]


def test_c11_determinism(tmp_path):
    data, queries = tmp_path / "d.csv", tmp_path / "q.csv"
    g = np.random.default_rng(11)
    np.savetxt(data, g.normal(size=(2000, 2)), delimiter=",")
    np.savetxt(queries, g.normal(size=(50, 2)), delimiter=",")
    cfg = tmp_path / "c.toml"
    cfg.write_text(
        'seed = 1\ntrials = 2\n[dataset]\nsynthetic = "mixture2d"\nn = 2000\nqueries = 20\n'
        '[budget]\nmechanism = "lsh"\nepsilons = [0.5]\nbudgets = [1, 4, 16]\n'
    )
    flags = {"rff": ["--features", "128"], "fgt": ["--rho", "5"], "lsh": ["--buckets", "64", "--repetitions", "8"],
             "bernstein": ["--order", "8"], "noisysample": []}
    runs = []
    for run in range(2):
        d = tmp_path / f"run{run}"
        d.mkdir()
        out = {}
        for mech, extra in flags.items():
            rel = d / f"{mech}.lsqf"
            assert main(["release", "--mechanism", mech, "--epsilon", "0.5", "--input", str(data),
                         "--output", str(rel), "--seed", "42", *extra]) == 0
            assert main(["query", "--function", str(rel), "--queries", str(queries), "--output", str(d / f"{mech}.csv")]) == 0
            out[mech] = (rel.read_bytes(), (d / f"{mech}.csv").read_bytes())
        assert main(["bench", "--experiment", "budget", "--config", str(cfg), "--output", str(d / "b.csv"), "--seed", "42"]) == 0
        out["bench"] = _strip_seconds((d / "b.csv").read_text())
        out["meta"] = (d / "b.csv.meta.json").read_bytes()
        runs.append(out)
    same = [k for k in runs[0] if runs[0][k] == runs[1][k]]
    report(11, len(same) == len(runs[0]), f"seed 42 twice: {len(same)}/{len(runs[0])} artifacts identical (releases, queries, bench rows, metadata)")


# 12 -------------------------------------------------------------------------

_ORACLE_OUTCOMES: list = []


@settings(max_examples=25)
@given(
    mech=st.sampled_from(["rff", "fgt", "lsh", "bernstein", "noisysample"]),
    seed=st.integers(0, 2**32),
    eps=st.floats(0.01, 10.0),
)
def _oracle_never_writes(tmp_dir, mech, seed, eps):
    ds = Dataset(np.random.default_rng(seed).normal(size=(200, 2)))
    param = {"rff": 8, "fgt": 3, "lsh": 2, "bernstein": 4, "noisysample": 10}[mech]
    rel = make_release(mech, ds, eps, param, seed, oracle=True)
    path = tmp_dir / f"{mech}-{seed}.lsqf"
    try:
        save_release(rel, path)
        refused = False
    except PrivacyError:
        refused = True
    _ORACLE_OUTCOMES.append(refused and not path.exists() and not rel.private)


def test_c12_oracle_mode_never_writes(tmp_path):
    _ORACLE_OUTCOMES.clear()
    _oracle_never_writes(tmp_path)
    ds = Dataset(np.random.default_rng(0).normal(size=(300, 2)))
    rel = _oracle_release(ds, rff_family(KernelSpec(), 2), MechanismConfig(1.0, 4, 1, 0))
    with pytest.raises(PrivacyError):
        save_release(rel, tmp_path / "direct.lsqf")
    ok = all(_ORACLE_OUTCOMES) and not any(tmp_path.iterdir())
    report(12, ok, f"{len(_ORACLE_OUTCOMES)} generated oracle releases refused, no file written")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
