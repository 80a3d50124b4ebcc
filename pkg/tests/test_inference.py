import itertools
import math
from functools import lru_cache

import numpy as np
import pytest
from scipy import stats

from latentkit import inference as inf
from latentkit.errors import ConfigError, LatentKitError


@lru_cache(maxsize=None)
def null_u_values(pooled: tuple, na: int) -> tuple:
    """U for sample a under every assignment of na pooled values to a."""
    ranks = stats.rankdata(pooled)
    return tuple(sum(ranks[list(idx)]) - na * (na + 1) / 2 for idx in itertools.combinations(range(len(pooled)), na))


def enumerated_p(pooled, a_idx, tails):
    na = len(a_idx)
    nb = len(pooled) - na
    ranks = stats.rankdata(pooled)
    u_obs = sum(ranks[list(a_idx)]) - na * (na + 1) / 2
    us = np.array(null_u_values(tuple(pooled), na))
    mu = na * nb / 2
    eps = 1e-9
    if tails == "two-sided":
        hits = np.abs(us - mu) >= abs(u_obs - mu) - eps
    elif tails == "greater":
        hits = us >= u_obs - eps
    else:
        hits = us <= u_obs + eps
    return hits.mean()


@pytest.mark.parametrize("pooled", [(1, 2, 3, 4, 5, 6, 7, 8, 9, 10), (1, 1, 2, 2, 2, 3, 4, 4, 5, 5)])
def test_mann_whitney_exact_equals_enumeration_all_splits(pooled):
    for n in range(2, len(pooled) + 1):
        values = np.array(pooled[:n], dtype=float)
        for na in range(1, n):
            for a_idx in itertools.combinations(range(n), na):
                b_idx = [i for i in range(n) if i not in a_idx]
                # put the split in pooled order so ranks line up with the oracle
                a, b = values[list(a_idx)], values[b_idx]
                for tails in ("two-sided", "greater", "less"):
                    res = inf.mann_whitney(a, b, mode="exact", tails=tails)
                    assert res.p_value == pytest.approx(enumerated_p(values, a_idx, tails), abs=1e-12)


def test_mann_whitney_normal_matches_reference():
    rng = np.random.default_rng(0)
    a = rng.integers(1, 6, size=30).astype(float)
    b = rng.integers(2, 7, size=25).astype(float)
    res = inf.mann_whitney(a, b, mode="normal")
    ref = stats.mannwhitneyu(a, b, use_continuity=True, alternative="two-sided", method="asymptotic")
    assert res.statistic == pytest.approx(ref.statistic)
    assert res.p_value == pytest.approx(ref.pvalue, rel=1e-10)
    for tails, alt in (("greater", "greater"), ("less", "less")):
        r = inf.mann_whitney(a, b, mode="normal", tails=tails)
        assert r.p_value == pytest.approx(stats.mannwhitneyu(a, b, alternative=alt, method="asymptotic").pvalue, rel=1e-10)
    assert res.effect["U"] + res.effect["U_b"] == 30 * 25
    assert inf.mann_whitney(a, b).method == "mann_whitney_normal"
    assert inf.mann_whitney(a[:5], b[:5]).method == "mann_whitney_exact"
    with pytest.raises(ConfigError):
        inf.mann_whitney(a, b, mode="exact")


def test_rank_biserial_sign():
    res = inf.mann_whitney([5, 6, 7], [1, 2, 3])
    assert res.effect["rank_biserial"] == 1.0 and res.statistic == 9


@pytest.mark.parametrize("variant", ["student", "welch"])
def test_t_test_reference(variant):
    rng = np.random.default_rng(1)
    a, b = rng.normal(0.3, 1, 20), rng.normal(0, 2, 35)
    res = inf.t_test(a, b, variant)
    ref = stats.ttest_ind(a, b, equal_var=variant == "student")
    assert res.statistic == pytest.approx(ref.statistic, rel=1e-12)
    assert res.p_value == pytest.approx(ref.pvalue, rel=1e-10)
    one = inf.t_test(a, b, variant, tails="greater")
    assert one.p_value == pytest.approx(stats.ttest_ind(a, b, equal_var=variant == "student", alternative="greater").pvalue, rel=1e-10)


def test_t_test_degenerate_cases():
    assert inf.t_test([2, 2, 2], [2, 2]).p_value == 1.0
    with pytest.raises(LatentKitError):
        inf.t_test([1, 1], [2, 2])
    with pytest.raises(LatentKitError):
        inf.t_test([1], [2, 3])
    with pytest.raises(ConfigError):
        inf.t_test([1, 2], [2, 3], tails="both")


def test_anova_equals_t_squared():
    rng = np.random.default_rng(2)
    for _ in range(100):
        a = rng.normal(size=rng.integers(2, 20))
        b = rng.normal(0.5, 1.5, size=rng.integers(2, 20))
        F = inf.one_way_anova([a, b]).statistic
        t = inf.t_test(a, b).statistic
        assert F == pytest.approx(t * t, rel=1e-10, abs=1e-10)


def test_anova_levene_kruskal_reference():
    rng = np.random.default_rng(3)
    groups = [rng.normal(m, s, size=n) for m, s, n in ((0, 1, 12), (0.5, 2, 15), (1, 1, 9))]
    an = inf.one_way_anova(groups)
    ref = stats.f_oneway(*groups)
    assert an.statistic == pytest.approx(ref.statistic, rel=1e-12)
    assert an.p_value == pytest.approx(ref.pvalue, rel=1e-10)
    lev = inf.levene(groups)
    ref = stats.levene(*groups, center="mean")
    assert lev.statistic == pytest.approx(ref.statistic, rel=1e-10)
    tied = [np.round(g) for g in groups]
    kw = inf.kruskal_wallis(tied)
    ref = stats.kruskal(*tied)
    assert kw.statistic == pytest.approx(ref.statistic, rel=1e-12)
    assert kw.p_value == pytest.approx(ref.pvalue, rel=1e-10)


def test_posthoc_lsd_and_bonferroni():
    groups = [np.array([1.0, 2, 3, 4]), np.array([3.0, 4, 5, 6]), np.array([6.0, 7, 8, 9])]
    lsd = inf.posthoc(groups, "lsd", ["a", "b", "c"])
    bon = inf.posthoc(groups, "bonferroni", ["a", "b", "c"])
    mse = inf.one_way_anova(groups).effect["ms_within"]
    assert mse == pytest.approx(5 / 3)
    ab = lsd[0]
    assert (ab.group_a, ab.group_b, ab.mean_difference) == ("a", "b", -2.0)
    assert ab.se == pytest.approx(math.sqrt(mse / 2))
    assert ab.p_value == pytest.approx(2 * stats.t.sf(abs(ab.t), 9))
    for x, y in zip(lsd, bon):
        assert y.p_adjusted == pytest.approx(min(1.0, 3 * x.p_value))
    assert inf.bonferroni(0.01, 3) == pytest.approx(0.03)
    assert inf.bonferroni(0.5, 3) == 1.0


def test_correlate_reference():
    rng = np.random.default_rng(4)
    x = rng.normal(size=40)
    y = x + rng.normal(size=40)
    res = inf.correlate(x, y)
    ref = stats.pearsonr(x, y)
    assert res.statistic == pytest.approx(ref.statistic, rel=1e-12)
    assert res.p_value == pytest.approx(ref.pvalue, rel=1e-8)
    sp = inf.correlate(x, y, "spearman")
    assert sp.statistic == pytest.approx(stats.spearmanr(x, y).statistic, rel=1e-12)


def test_ols_single_predictor_beta_is_r():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(5, 60))
        x = rng.normal(size=n)
        y = 2 * x + rng.normal(size=n) * rng.uniform(0.1, 3)
        res = inf.ols(y, x, ["x"])
        assert res["x"].beta == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)


def test_ols_against_normal_equations():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(50, 3))
    y = 1 + X @ [0.5, -1, 0.2] + rng.normal(size=50)
    res = inf.ols(y, X, ["a", "b", "c"])
    D = np.column_stack([np.ones(50), X])
    b = np.linalg.solve(D.T @ D, D.T @ y)
    np.testing.assert_allclose([c.b for c in res.coefficients], b, rtol=1e-10)
    resid = y - D @ b
    s2 = resid @ resid / 46
    se = np.sqrt(np.diag(np.linalg.inv(D.T @ D)) * s2)
    np.testing.assert_allclose([c.se for c in res.coefficients], se, rtol=1e-10)
    r2 = 1 - resid @ resid / ((y - y.mean()) ** 2).sum()
    assert res.r2 == pytest.approx(r2)
    assert res.adj_r2 == pytest.approx(1 - (1 - r2) * 49 / 46)
    assert res.df == (3, 46)
    assert res.p_value == pytest.approx(stats.f.sf(res.F, 3, 46))


def test_ols_collinear_and_small():
    x = np.arange(10.0)
    with pytest.raises(LatentKitError) as e:
        inf.ols(x, np.column_stack([x, 2 * x]))
    assert e.value.code == "COLLINEAR"
    with pytest.raises(LatentKitError):
        inf.ols([1, 2], [1, 2])


def test_ci_mean_reference():
    x = np.array([2.0, 3, 5, 7, 11])
    lo, hi = inf.ci_mean(x, 0.9)
    ref = stats.t.interval(0.9, 4, loc=x.mean(), scale=stats.sem(x))
    assert (lo, hi) == pytest.approx(ref)
    with pytest.raises(ConfigError):
        inf.ci_mean(x, 1.5)
