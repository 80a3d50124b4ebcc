import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentkit import mds
from latentkit.errors import ConfigError, LatentKitError
from latentkit.synth import planted_points


def isotonic_oracle(y):
    """Best non-decreasing fit by enumerating every split into contiguous blocks."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    best, best_sse = None, math.inf
    for cuts in itertools.product((0, 1), repeat=n - 1):
        bounds = [0] + [i + 1 for i, c in enumerate(cuts) if c] + [n]
        means = [y[a:b].mean() for a, b in zip(bounds, bounds[1:])]
        if any(m2 < m1 - 1e-12 for m1, m2 in zip(means, means[1:])):
            continue
        fit = np.repeat(means, np.diff(bounds))
        sse = float(((y - fit) ** 2).sum())
        if sse < best_sse:
            best, best_sse = fit, sse
    return best


def test_pava_small_cases():
    np.testing.assert_allclose(mds.pava([3, 1, 2]), [2, 2, 2])
    np.testing.assert_allclose(mds.pava([1, 3, 2, 4]), [1, 2.5, 2.5, 4])
    np.testing.assert_allclose(mds.pava([1, 2, 3]), [1, 2, 3])
    np.testing.assert_allclose(mds.pava([2, 1], weights=[3, 1]), [1.75, 1.75])
    with pytest.raises(ConfigError):
        mds.pava([1, 2], weights=[1, 0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=8))
def test_pava_matches_block_oracle_on_reals(y):
    np.testing.assert_allclose(mds.pava(y), isotonic_oracle(y), atol=1e-9)


def test_stress_and_rsq_by_hand():
    d = np.array([1.0, 2.0, 2.0])
    dhat = np.array([1.0, 1.5, 2.5])
    assert mds.stress1(d, dhat) == pytest.approx(math.sqrt(0.5 / 9))
    assert mds.rsq(dhat, d) == pytest.approx(np.corrcoef(dhat, d)[0, 1] ** 2)
    with pytest.raises(LatentKitError):
        mds.stress1([0, 0], [1, 1])


def test_classical_init_recovers_euclidean_configuration():
    X, D = planted_points(8, 2, seed=3)
    Y, flags = mds.classical_init(D, 2)
    assert not flags
    np.testing.assert_allclose(mds.pairwise_distances(Y), D, atol=1e-10)
    with pytest.raises(LatentKitError) as e:
        mds.classical_init(D, 8)
    assert e.value.code == "DIMENSION_ERROR"


def test_corr_to_dissimilarity():
    R = np.array([[1, 0.5, -0.2], [0.5, 1, 0.1], [-0.2, 0.1, 1]])
    lin = mds.corr_to_dissimilarity(R)
    np.testing.assert_allclose(lin.values, 1 - R - np.diag(np.diag(1 - R)))
    sq = mds.corr_to_dissimilarity(R, "sqrt")
    assert sq.values[0, 1] == pytest.approx(math.sqrt(2 * 0.5))
    with pytest.raises(ConfigError):
        mds.corr_to_dissimilarity(R, "log")
    with pytest.raises(ConfigError):
        mds.Dissimilarity(np.array([[0, 1], [2, 0]]), ["a", "b"])


def test_metric_mds_exact_recovery_and_linear_map():
    _, D = planted_points(10, 2, seed=0)
    sol = mds.metric_mds(D, 2, seed=0)
    assert sol.stress1 < 1e-6
    assert sol.slope == pytest.approx(1.0, abs=1e-6) and sol.intercept == pytest.approx(0.0, abs=1e-6)
    np.testing.assert_allclose(sol.distances, sol.dissimilarities, atol=1e-5)


def test_nonmetric_depends_only_on_rank_order():
    _, D = planted_points(10, 2, seed=1)
    a = mds.nonmetric_mds(D, 2, seed=4)
    b = mds.nonmetric_mds(np.expm1(3 * D), 2, seed=4)
    assert a.stress1 < 0.01
    assert abs(a.stress1 - b.stress1) < 1e-3
    # the configuration is fixed up to the overall scale, which follows delta
    unit = lambda X: X / np.linalg.norm(X)
    np.testing.assert_allclose(unit(a.configuration), unit(b.configuration), atol=1e-5)


def test_restarts_are_seeded_and_thread_independent():
    rng = np.random.default_rng(9)
    D = rng.uniform(size=(9, 9))
    D = np.triu(D, 1) + np.triu(D, 1).T
    one = mds.nonmetric_mds(D, 2, seed=11, restarts=6, threads=1)
    many = mds.nonmetric_mds(D, 2, seed=11, restarts=6, threads=4)
    np.testing.assert_array_equal(one.configuration, many.configuration)
    assert one.start_stresses == many.start_stresses
    assert one.best_start == min(range(6), key=lambda i: (one.start_stresses[i], i))
    # start r is the same whatever the total number of starts
    fewer = mds.nonmetric_mds(D, 2, seed=11, restarts=3)
    assert fewer.start_stresses == one.start_stresses[:3]


def test_flags_and_dimension_errors():
    _, D = planted_points(8, 2, seed=2)
    assert "STABILITY_WARNING" in mds.nonmetric_mds(D, 2, restarts=2).flags
    _, D9 = planted_points(9, 2, seed=2)
    assert "STABILITY_WARNING" not in mds.nonmetric_mds(D9, 2, restarts=2).flags
    with pytest.raises(LatentKitError) as e:
        mds.nonmetric_mds(D[:2, :2], 2)
    assert e.value.code == "DIMENSION_ERROR" and e.value.exit_code == 2
    with pytest.raises(ConfigError):
        mds.nonmetric_mds(D, 2, restarts=0)


def test_random_baseline_contract():
    with pytest.raises(LatentKitError) as e:
        mds.random_stress_baseline(10, 2, trials=19)
    assert e.value.code == "MIN_TRIALS"
    base = mds.random_stress_baseline(8, 2, trials=20, seed=5)
    assert len(base.stresses) == 20 and base.p05 <= base.mean
    assert base.verdict(0.4 * base.mean) == "PASS" and base.verdict(0.6 * base.mean) == "FAIL"
    assert mds.random_stress_baseline(8, 2, trials=20, seed=5).stresses == base.stresses


def test_rotate_principal_orders_variance():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 2)) * [1, 5]
    Y = mds.rotate_principal(X)
    var = Y.var(axis=0)
    assert var[0] >= var[1]
    np.testing.assert_allclose(mds.pairwise_distances(Y), mds.pairwise_distances(X), atol=1e-10)
