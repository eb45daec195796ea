import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lsqdp.container import serialize_released
from lsqdp.core import Dataset, KernelKind, KernelSpec, exact_kde_many
from lsqdp.fgt import fgt_family_from_data
from lsqdp.lsh import LshFamily
from lsqdp.mechanism import (
    FamilyTag,
    MechanismConfig,
    ReleasedFunction,
    SparseVector,
    _oracle_release,
    client_estimate,
    client_estimate_many,
    curator_release,
    laplace_sample,
    median_of_means,
    noise_scale,
    privatize_count,
    sample_descriptors,
)
from lsqdp.rff import rff_family
from lsqdp.rng import Purpose, stream


def test_noise_scale_examples():
    assert noise_scale(100, math.sqrt(2), 1.0, 10000) == pytest.approx(100 * math.sqrt(2) / 10000, rel=1e-15)
    assert round(noise_scale(100, math.sqrt(2), 1.0, 10000), 7) == 0.0141421
    assert noise_scale(1, 1.0, 1.0, 1) == 1.0
    # brute-force sum of 2**-(r1 + r2) over r in {0..5}**2
    f_l1 = sum(2.0 ** -(a + b) for a in range(6) for b in range(6))
    assert noise_scale(1, f_l1, 0.1, 100000) == pytest.approx(3.8759765625e-4, rel=1e-15)


@pytest.mark.parametrize("args", [(1, 1.0, 1.0, 0), (0, 1.0, 1.0, 1), (1, 0.0, 1.0, 1), (1, 1.0, 0.0, 1)])
def test_noise_scale_rejects(args):
    with pytest.raises(ValueError):
        noise_scale(*args)


def test_laplace_variance():
    x = laplace_sample(stream(1, Purpose.TEST), 1.0, size=10**6)
    assert 1.98 <= x.var() <= 2.02
    assert abs(x.mean()) < 0.01
    y = laplace_sample(stream(1, Purpose.TEST), 3.0, size=10**5)
    assert np.median(np.abs(y)) == pytest.approx(3.0 * math.log(2), rel=0.02)


def test_laplace_contract():
    with pytest.raises(ValueError):
        laplace_sample(stream(1, Purpose.TEST), 0.0)
    a = laplace_sample(stream(2, Purpose.TEST), 1.0, size=5)
    b = laplace_sample(stream(2, Purpose.TEST), 1.0, size=5)
    assert np.array_equal(a, b)
    assert isinstance(laplace_sample(stream(2, Purpose.TEST), 1.0), float)


def test_config_validation():
    with pytest.raises(ValueError):
        MechanismConfig(0.0)
    with pytest.raises(ValueError):
        MechanismConfig(1.0, repetitions=10, groups=3)
    MechanismConfig(1.0, repetitions=9, groups=3)


def test_privatize_count():
    assert privatize_count(1234, math.inf, stream(0, Purpose.COUNT)) == 1234.0
    g = stream(0, Purpose.COUNT)
    draws = np.array([privatize_count(500, 0.5, g) for _ in range(10**5)])
    assert abs(draws.mean() - 500) <= 3 * (1 / 0.5) / math.sqrt(10**5) * math.sqrt(2)
    tiny = [privatize_count(1, 0.01, g) for _ in range(200)]
    assert min(tiny) < 0  # callers floor at 1


def test_oracle_release_is_exact_mean(rng):
    X = rng.normal(size=(50, 2))
    fam = rff_family(KernelSpec(), 2)
    rel = _oracle_release(Dataset(X), fam, MechanismConfig(1.0, repetitions=4, seed=3))
    assert not rel.private and rel.noise_scale == 0.0
    descs = sample_descriptors(fam, 3, 4)
    expected = [np.mean([fam.eval_f(d, x).to_dense()[0] for x in X]) for d in descs]
    # aggregates use single-precision cosines: within 1e-6 of the float64 mean
    np.testing.assert_allclose(rel.aggregates[:, 0], expected, rtol=0, atol=1e-6)


def test_single_point_rff_release_is_feature():
    x = np.array([0.3, -0.2])
    fam = rff_family(KernelSpec(), 2)
    rel = _oracle_release(Dataset([x]), fam, MechanismConfig(1.0, repetitions=3, seed=8))
    for desc, row in zip(rel.descriptors, rel.aggregates):
        assert row[0] == pytest.approx(fam.eval_f(desc, x).to_dense()[0], abs=1e-6)


def test_release_is_deterministic(rng):
    ds = Dataset(rng.normal(size=(200, 2)))
    for fam, reps in [(rff_family(KernelSpec(), 2), 16), (LshFamily(2, 64), 4), (fgt_family_from_data(ds.points, 3), 1)]:
        cfg = MechanismConfig(0.5, repetitions=reps, seed=11)
        a = serialize_released(curator_release(ds, fam, cfg))
        b = serialize_released(curator_release(ds, fam, cfg))
        assert a == b
        c = serialize_released(curator_release(ds, fam, MechanismConfig(0.5, repetitions=reps, seed=12)))
        assert a != c


def test_release_noise_scale_and_all_coordinates_noised(rng):
    ds = Dataset(rng.normal(size=(100, 2)) * 0.01)  # occupies very few buckets
    fam = LshFamily(2, 512)
    rel = curator_release(ds, fam, MechanismConfig(2.0, repetitions=4, seed=1))
    assert rel.noise_scale == 4 * 1.0 / (2.0 * 100)
    assert rel.aggregates.shape == (4, 512)
    assert np.all(rel.aggregates != 0.0)
    exact = _oracle_release(ds, fam, MechanismConfig(2.0, repetitions=4, seed=1)).aggregates
    assert np.count_nonzero(exact) <= 4 * 8


def test_release_rejects_bad_inputs(rng):
    fam = rff_family(KernelSpec(), 2)
    with pytest.raises(ValueError):
        curator_release(Dataset(rng.normal(size=(5, 3))), fam, MechanismConfig(1.0))
    with pytest.raises(ValueError):
        curator_release(Dataset(rng.normal(size=(5, 2)), bandwidth=2.0), fam, MechanismConfig(1.0))
    with pytest.raises(MemoryError, match="reduce Q or I"):
        curator_release(Dataset(rng.normal(size=(5, 2))), LshFamily(2, 1024), MechanismConfig(1.0, repetitions=4), memory_cap=8 * 1024 * 3)


def test_median_of_means_examples():
    assert median_of_means(np.array([0.1, 0.5, 0.9]), 3) == pytest.approx(0.5)
    v = np.array([1.0, 2.0, 3.0, 10.0, 0.0, 0.5])
    assert median_of_means(v, 1) == pytest.approx(v.mean())
    assert median_of_means(v, 3) == pytest.approx(np.median([1.5, 6.5, 0.25]))
    with pytest.raises(ValueError):
        median_of_means(v, 4)


def _fake_release(values, groups):
    # RFF-style release whose F_i . g_i(y) equals values[i] at y = 0 with beta = 0, omega = 0
    from lsqdp.rff import RffDescriptor

    descs = [RffDescriptor(np.zeros(1), 0.0) for _ in values]
    agg = np.asarray(values)[:, None] / math.sqrt(2)
    return ReleasedFunction(FamilyTag.RFF, KernelSpec(), 1.0, groups, 1.0, descs, agg, dim=1)


def test_client_group_median():
    fam = rff_family(KernelSpec(), 1)
    rel = _fake_release([0.1, 0.1, 0.5, 0.5, 0.9, 0.9], 3)
    assert client_estimate(rel, fam, [0.0]) == pytest.approx(0.5)
    rel1 = _fake_release([0.1, 0.1, 0.5, 0.5, 0.9, 2.9], 1)
    assert client_estimate(rel1, fam, [0.0]) == pytest.approx(5.0 / 6)


def test_clamp_flag():
    fam = rff_family(KernelSpec(), 1)
    descs = _fake_release([1.7], 1).descriptors
    raw = ReleasedFunction(FamilyTag.RFF, KernelSpec(), 1.0, 1, 1.0, descs, [[1.7 / math.sqrt(2)]], dim=1)
    clamped = ReleasedFunction(FamilyTag.RFF, KernelSpec(), 1.0, 1, 1.0, descs, [[1.7 / math.sqrt(2)]], clamp=True, dim=1)
    assert client_estimate(raw, fam, [0.0]) == pytest.approx(1.7)
    assert client_estimate(clamped, fam, [0.0]) == 1.0


def test_client_dimension_mismatch(rng):
    fam = rff_family(KernelSpec(), 2)
    rel = curator_release(Dataset(rng.normal(size=(5, 2))), fam, MechanismConfig(1.0))
    with pytest.raises(ValueError):
        client_estimate(rel, fam, [0.0, 1.0, 2.0])


def test_client_many_matches_single(rng):
    X = rng.normal(size=(300, 2))
    ds = Dataset(X)
    Y = rng.normal(size=(15, 2))
    for fam, reps, groups in [
        (rff_family(KernelSpec(), 2), 12, 3),
        (LshFamily(2, 128), 6, 2),
        (fgt_family_from_data(X, 5), 1, 1),
    ]:
        rel = curator_release(ds, fam, MechanismConfig(1.0, repetitions=reps, groups=groups, seed=4))
        many = client_estimate_many(rel, fam, Y)
        single = [client_estimate(rel, fam, y) for y in Y]
        np.testing.assert_allclose(many, single, rtol=1e-10, atol=1e-13)


def test_zero_noise_fgt_matches_exact(rng):
    X = rng.normal(size=(2000, 2))
    Y = rng.normal(size=(50, 2))
    fam = fgt_family_from_data(X, 10)
    rel = _oracle_release(Dataset(X), fam, MechanismConfig(1.0))
    err = np.abs(client_estimate_many(rel, fam, Y) - exact_kde_many(Dataset(X), KernelSpec(), Y))
    assert err.max() <= 2e-3


def test_client_work_is_sparse(rng):
    X = rng.normal(size=(300, 2))
    fam = fgt_family_from_data(X, 4)
    rel = curator_release(Dataset(X), fam, MechanismConfig(1.0))
    ops = Counter()
    client_estimate(rel, fam, X[0], op_counter=ops)
    assert 0 < ops["multiply_adds"] <= fam.params.S < fam.params.Q
    lsh = LshFamily(2, 4096)
    rel = curator_release(Dataset(X), lsh, MechanismConfig(1.0, repetitions=7))
    ops = Counter()
    client_estimate(rel, lsh, X[0], op_counter=ops)
    assert ops["multiply_adds"] == 7


@given(st.integers(0, 2**32), st.integers(2, 40), st.sampled_from(["rff", "lsh", "fgt"]))
def test_sensitivity_bound(seed, n, kind):
    g = np.random.default_rng(seed)
    X = g.normal(size=(n, 2)) * 1.5
    Xn = X[1:]  # remove one point
    if kind == "rff":
        fam = rff_family(KernelSpec(KernelKind.LAPLACIAN), 2)
    elif kind == "lsh":
        fam = LshFamily(2, 16)
    else:
        fam = fgt_family_from_data(X, 4)
    descs = sample_descriptors(fam, seed, 3)
    diff = np.abs(fam.mean_f(descs, X) - fam.mean_f(descs, Xn)).sum(axis=1)
    assert np.all(diff <= 2 * fam.f_range_l1() / n + 1e-12)


def test_unbiased_before_median():
    g = np.random.default_rng(5)
    X = g.normal(size=(40, 2))
    y = np.array([0.2, -0.1])
    exact = exact_kde_many(Dataset(X), KernelSpec(), y[None, :])[0]
    fam = rff_family(KernelSpec(), 2)
    ests = np.array(
        [client_estimate(curator_release(Dataset(X), fam, MechanismConfig(50.0, seed=s)), fam, y) for s in range(4000)]
    )
    assert abs(ests.mean() - exact) <= 4 * ests.std() / math.sqrt(len(ests))


def test_median_of_means_concentration():
    g = np.random.default_rng(9)
    per_group = 5
    single = np.abs(median_of_means(g.laplace(size=(20000, per_group)), 1))
    q = np.quantile(single, 5 / 6)
    fractions = []
    for J in (1, 3, 5, 9):
        vals = g.laplace(size=(20000, J * per_group))
        fractions.append(np.mean(np.abs(median_of_means(vals, J)) > q))
    assert fractions[0] == pytest.approx(1 / 6, abs=0.01)
    assert all(b < a for a, b in zip(fractions, fractions[1:]))
    assert fractions[-1] < 0.01


def test_sparse_vector_contract():
    sv = SparseVector.from_arrays([3, 1, 2], [1.0, 0.0, -2.0], 5)
    assert list(sv.indices) == [2, 3] and sv.nnz == 2
    np.testing.assert_array_equal(sv.to_dense(), [0, 0, -2, 1, 0])
    ops = Counter()
    assert sv.dot(np.arange(5.0), ops) == -4 + 3
    assert ops["multiply_adds"] == 2
    for idx, val in [([1, 1], [1, 1]), ([5], [1]), ([0], [0.0]), ([0], [np.nan]), ([2, 1], [1, 1])]:
        with pytest.raises(ValueError):
            SparseVector(np.array(idx), np.array(val, dtype=float), 5)


def test_released_function_invariants():
    from lsqdp.rff import RffDescriptor

    d = [RffDescriptor(np.zeros(1), 0.0)] * 4
    with pytest.raises(ValueError):
        ReleasedFunction(FamilyTag.RFF, KernelSpec(), 1.0, 3, 1.0, d, np.zeros((4, 1)), dim=1)
    with pytest.raises(ValueError):
        ReleasedFunction(FamilyTag.RFF, KernelSpec(), 1.0, 1, 1.0, d, np.zeros((3, 1)), dim=1)
    rel = ReleasedFunction(FamilyTag.RFF, KernelSpec(), 1.0, 2, 1.0, d, np.zeros((4, 1)), dim=1)
    assert rel.repetitions == 4 and rel.Q == 1
    with pytest.raises(ValueError):
        rel.aggregates[0, 0] = 1.0
