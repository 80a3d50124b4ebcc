import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from latentkit import screening as scr
from latentkit.errors import ConfigError, LatentKitError

from conftest import matrix


def tau_b_bruteforce(x, y):
    """Kendall tau-b by direct pair enumeration."""
    conc = disc = tx = ty = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        dx, dy = np.sign(x[i] - x[j]), np.sign(y[i] - y[j])
        if dx == 0 and dy == 0:
            continue
        if dx == 0:
            tx += 1
        elif dy == 0:
            ty += 1
        elif dx == dy:
            conc += 1
        else:
            disc += 1
    return (conc - disc) / math.sqrt((conc + disc + tx) * (conc + disc + ty))


def test_moments_match_bias_corrected_reference():
    rng = np.random.default_rng(0)
    for n in (4, 7, 30, 200):
        x = rng.gamma(2.0, size=n)
        mean, sd, skew, kurt = scr.moments(x)
        assert mean == pytest.approx(x.mean())
        assert sd == pytest.approx(x.std(ddof=1))
        assert skew == pytest.approx(stats.skew(x, bias=False), rel=1e-10)
        assert kurt == pytest.approx(stats.kurtosis(x, bias=False), rel=1e-10)


def test_moments_small_and_constant():
    assert math.isnan(scr.moments(np.array([1.0, 2.0]))[2])
    assert math.isnan(scr.moments(np.array([1.0, 2.0, 4.0]))[3])
    mean, sd, skew, kurt = scr.moments(np.full(5, 3.0))
    assert sd == 0 and math.isnan(skew) and math.isnan(kurt)


def test_item_descriptive_flags():
    heavy = np.array([1.0] * 40 + [5.0])
    m = matrix(np.column_stack([heavy, np.full(41, 2.0), np.arange(41) % 5 + 1]))
    d = {x.item: x for x in scr.item_descriptives(m)}
    assert "SKEW" in d["i1"].flags and "KURTOSIS" in d["i1"].flags
    assert d["i2"].flags == ["CONSTANT_ITEM"]
    assert d["i3"].flags == []


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 5), st.integers(1, 5)), min_size=3, max_size=25))
def test_kendall_tau_b_matches_enumeration(pairs):
    x = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs], dtype=float)
    cm = scr.correlation_matrix(np.column_stack([x, y]), "kendall_tau_b")
    if np.all(x == x[0]) or np.all(y == y[0]):
        assert math.isnan(cm.values[0, 1])
    else:
        assert cm.values[0, 1] == pytest.approx(tau_b_bruteforce(x, y), abs=1e-12)


def test_pearson_and_spearman_against_numpy():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 4))
    X[:, 1] += X[:, 0]
    cm = scr.correlation_matrix(X, "pearson")
    np.testing.assert_allclose(cm.values, np.corrcoef(X, rowvar=False), atol=1e-12)
    ranks = np.apply_along_axis(stats.rankdata, 0, X)
    np.testing.assert_allclose(scr.correlation_matrix(X, "spearman").values, np.corrcoef(ranks, rowvar=False), atol=1e-12)


def test_pairwise_complete_counts_and_flags():
    X = np.array(
        [
            [1, 2, np.nan],
            [2, 1, np.nan],
            [3, 5, 1],
            [4, 3, 2],
            [5, 4, np.nan],
        ],
        dtype=float,
    )
    cm = scr.correlation_matrix(X, "pearson")
    assert cm.pairwise_n[0, 1] == 5 and cm.pairwise_n[0, 2] == 2
    assert math.isnan(cm.values[0, 2])
    assert any(f.startswith("TOO_FEW_PAIRS") for f in cm.flags)
    assert "PAIRWISE_N_VARIES" in cm.flags
    ok = ~np.isnan(X[:, 0])
    assert cm.values[0, 1] == pytest.approx(np.corrcoef(X[ok, 0], X[ok, 1])[0, 1])
    with pytest.raises(ConfigError):
        scr.correlation_matrix(X, "tau_a")


def test_bartlett_two_by_two_by_hand():
    r, n = 0.5, 30
    R = np.array([[1, r], [r, 1]])
    res = scr.bartlett_sphericity(R, n)
    chi2 = -(n - 1 - (2 * 2 + 5) / 6) * math.log(1 - r * r)
    assert res.statistic == pytest.approx(chi2, rel=1e-12)
    assert res.df == 1
    assert res.p_value == pytest.approx(stats.chi2.sf(chi2, 1))
    with pytest.raises(LatentKitError):
        scr.bartlett_sphericity(np.ones((2, 2)), n)


def test_anti_image_by_adjugate():
    # for a 3x3 correlation matrix the inverse is adj(R)/det(R); the partial
    # correlation of 1,2 given 3 is (r12 - r13 r23)/sqrt((1-r13^2)(1-r23^2))
    r12, r13, r23 = 0.6, 0.4, 0.3
    R = np.array([[1, r12, r13], [r12, 1, r23], [r13, r23, 1]])
    Q = scr.anti_image_correlations(R)
    partial = (r12 - r13 * r23) / math.sqrt((1 - r13**2) * (1 - r23**2))
    assert Q[0, 1] == pytest.approx(partial, abs=1e-12)
    k = scr.kmo(R)
    q2 = [Q[0, 1] ** 2, Q[0, 2] ** 2, Q[1, 2] ** 2]
    r2 = [r12**2, r13**2, r23**2]
    assert k.overall == pytest.approx(sum(r2) / (sum(r2) + sum(q2)), abs=1e-12)
    assert k.per_item[0] == pytest.approx((r2[0] + r2[1]) / (r2[0] + r2[1] + q2[0] + q2[1]), abs=1e-12)


def test_kmo_identity_is_degenerate():
    with pytest.raises(LatentKitError) as e:
        scr.kmo(np.eye(3))
    assert e.value.code == "DEGENERATE"


def test_factorability_report_verdicts():
    rng = np.random.default_rng(4)
    f = rng.normal(size=(300, 1))
    X = np.round(2.5 + f @ np.full((1, 6), 0.8) + 0.6 * rng.normal(size=(300, 6)))
    rep = scr.factorability_report(matrix(X))
    assert rep.verdict == "FACTORABLE" and rep.kmo_overall > 0.8
    assert rep.share_of_pairs_with_abs_r_ge_0_3 == 1.0
    noise = matrix(rng.normal(size=(300, 6)))
    assert scr.factorability_report(noise).verdict == "NOT_FACTORABLE"
