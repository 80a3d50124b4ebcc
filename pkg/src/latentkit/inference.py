"""
Group comparison, correlation and regression statistics.

Distribution tails come from :mod:`scipy.stats`; the test statistics
themselves are computed here so their tie handling and corrections are
explicit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import ConfigError, LatentKitError

TAILS = ("two-sided", "greater", "less")


@dataclass
class TestResult:
    """One inferential result. ``df`` is a number, a (df1, df2) pair or None."""

    __test__ = False  # keep pytest from collecting this class

    method: str
    statistic: float
    p_value: float
    df: float | tuple[float, float] | None = None
    tails: str = "two-sided"
    effect: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "statistic": _jsonable(self.statistic),
            "df": list(self.df) if isinstance(self.df, tuple) else self.df,
            "p_value": _jsonable(self.p_value),
            "tails": self.tails,
            "effect": {k: _jsonable(v) for k, v in self.effect.items()},
        }


def _jsonable(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if math.isnan(x) else x
    if isinstance(x, np.integer):
        return int(x)
    return x


def _clean(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    return x[~np.isnan(x)]


def _check_tails(tails: str) -> None:
    if tails not in TAILS:
        raise ConfigError(f"tails must be one of {TAILS}")


def _t_pvalue(t: float, df: float, tails: str) -> float:
    if tails == "two-sided":
        return float(min(1.0, 2 * stats.t.sf(abs(t), df)))
    if tails == "greater":
        return float(stats.t.sf(t, df))
    return float(stats.t.cdf(t, df))


def _z_pvalue(z: float, tails: str) -> float:
    if tails == "two-sided":
        return float(min(1.0, 2 * stats.norm.sf(abs(z))))
    if tails == "greater":
        return float(stats.norm.sf(z))
    return float(stats.norm.cdf(z))


def t_test(a, b, variant: str = "student", tails: str = "two-sided") -> TestResult:
    """Independent-samples t-test of mean(a) - mean(b); Welch df by Satterthwaite."""
    _check_tails(tails)
    a, b = _clean(a), _clean(b)
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise LatentKitError("INSUFFICIENT_DATA", "t-test needs at least 2 observations per group")
    diff = a.mean() - b.mean()
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if variant == "student":
        df = na + nb - 2
        pooled = ((na - 1) * va + (nb - 1) * vb) / df
        se = math.sqrt(pooled * (1 / na + 1 / nb))
    elif variant == "welch":
        se = math.sqrt(va / na + vb / nb)
        if se == 0:
            df = na + nb - 2
        else:
            df = (va / na + vb / nb) ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    else:
        raise ConfigError(f"unknown t-test variant {variant!r}")
    if se == 0:
        if diff == 0:
            return TestResult(f"t_test_{variant}", 0.0, 1.0, float(df), tails, {"mean_difference": 0.0})
        raise LatentKitError("DEGENERATE", "zero variance with unequal means")
    t = diff / se
    return TestResult(
        f"t_test_{variant}",
        float(t),
        _t_pvalue(t, df, tails),
        float(df),
        tails,
        {"mean_difference": float(diff), "se": se, "mean_a": float(a.mean()), "mean_b": float(b.mean())},
    )


def one_way_anova(groups: Sequence) -> TestResult:
    groups = [_clean(g) for g in groups]
    if len(groups) < 2:
        raise ConfigError("ANOVA needs at least two groups")
    if any(len(g) == 0 for g in groups):
        raise LatentKitError("INSUFFICIENT_DATA", "empty group")
    allv = np.concatenate(groups)
    n, k = len(allv), len(groups)
    grand = allv.mean()
    ss_between = sum(len(g) * (g.mean() - grand) ** 2 for g in groups)
    ss_within = sum(((g - g.mean()) ** 2).sum() for g in groups)
    df1, df2 = k - 1, n - k
    if df2 <= 0:
        raise LatentKitError("INSUFFICIENT_DATA", "no within-group degrees of freedom")
    effect = {"ss_between": float(ss_between), "ss_within": float(ss_within), "ms_within": float(ss_within / df2)}
    if ss_within == 0:
        if ss_between == 0:
            raise LatentKitError("DEGENERATE", "all observations identical")
        return TestResult("one_way_anova", math.inf, 0.0, (df1, df2), effect=effect)
    F = (ss_between / df1) / (ss_within / df2)
    return TestResult("one_way_anova", float(F), float(stats.f.sf(F, df1, df2)), (df1, df2), effect=effect)


def levene(groups: Sequence) -> TestResult:
    """Mean-centred Levene test: ANOVA on |x - group mean|."""
    groups = [_clean(g) for g in groups]
    if len(groups) < 2 or any(len(g) < 2 for g in groups):
        raise LatentKitError("INSUFFICIENT_DATA", "Levene needs >= 2 groups of >= 2")
    dev = [np.abs(g - g.mean()) for g in groups]
    if all(np.all(d == dev[0][0]) for d in dev):
        # identical absolute deviations everywhere: no spread difference at all
        return TestResult("levene", 0.0, 1.0, (len(groups) - 1, sum(map(len, groups)) - len(groups)))
    res = one_way_anova(dev)
    res.method = "levene"
    return res


def _midranks(x: np.ndarray) -> np.ndarray:
    return stats.rankdata(x, method="average")


def _tie_term(x: np.ndarray) -> float:
    _, counts = np.unique(x, return_counts=True)
    return float((counts**3 - counts).sum())


def _rank_sum_counts(doubled_ranks: np.ndarray, k: int) -> dict[int, int]:
    """Number of k-subsets of ``doubled_ranks`` with each possible sum (subset-sum DP)."""
    # table[j] maps subset sum -> count for subsets of size j
    table: list[dict[int, int]] = [dict() for _ in range(k + 1)]
    table[0][0] = 1
    for r in doubled_ranks:
        r = int(r)
        for j in range(min(k, len(doubled_ranks)), 0, -1):
            prev = table[j - 1]
            if not prev:
                continue
            cur = table[j]
            for s, c in prev.items():
                cur[s + r] = cur.get(s + r, 0) + c
    return table[k]


def mann_whitney(a, b, mode: str = "auto", tails: str = "two-sided") -> TestResult:
    """
    Mann-Whitney U for sample ``a`` (U = R_a - n_a(n_a+1)/2, midranks for ties).

    ``exact`` builds the permutation distribution of the rank sum over all
    C(n, n_a) label assignments (with ties, the midranks are permuted), no
    continuity correction. ``normal`` uses the tie-corrected normal
    approximation with a 0.5 continuity correction. ``auto`` is exact when
    n_a + n_b <= 16.
    """
    _check_tails(tails)
    a, b = _clean(a), _clean(b)
    na, nb = len(a), len(b)
    if na < 1 or nb < 1:
        raise LatentKitError("INSUFFICIENT_DATA", "Mann-Whitney needs non-empty groups")
    n = na + nb
    if mode == "auto":
        mode = "exact" if n <= 16 else "normal"
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    U = float(ranks[:na].sum() - na * (na + 1) / 2)
    mu = na * nb / 2
    effect = {"U": U, "U_b": na * nb - U, "n_a": na, "n_b": nb, "rank_biserial": 2 * U / (na * nb) - 1}

    if mode == "exact":
        if n > 16:
            raise ConfigError("exact Mann-Whitney limited to n_a + n_b <= 16")
        doubled = np.rint(2 * ranks).astype(int)
        counts = _rank_sum_counts(doubled, na)
        total = sum(counts.values())
        offset = na * (na + 1)  # doubled form of n_a(n_a+1)/2
        obs2 = 2 * U
        # compare on the doubled integer scale; exact rational comparisons
        mu2 = na * nb
        if tails == "two-sided":
            hits = sum(c for s, c in counts.items() if abs((s - offset) - mu2) >= abs(obs2 - mu2))
        elif tails == "greater":
            hits = sum(c for s, c in counts.items() if s - offset >= obs2)
        else:
            hits = sum(c for s, c in counts.items() if s - offset <= obs2)
        return TestResult("mann_whitney_exact", U, min(1.0, hits / total), None, tails, effect)

    if mode != "normal":
        raise ConfigError(f"unknown Mann-Whitney mode {mode!r}")
    var = na * nb / 12 * ((n + 1) - _tie_term(pooled) / (n * (n - 1)))
    if var <= 0:
        return TestResult("mann_whitney_normal", U, 1.0, None, tails, {**effect, "z": 0.0})
    dev = U - mu
    if tails == "two-sided":
        z = math.copysign(max(abs(dev) - 0.5, 0.0), dev) / math.sqrt(var)
    elif tails == "greater":
        z = (dev - 0.5) / math.sqrt(var)
    else:
        z = (dev + 0.5) / math.sqrt(var)
    return TestResult("mann_whitney_normal", U, _z_pvalue(z, tails), None, tails, {**effect, "z": float(z)})


def kruskal_wallis(groups: Sequence) -> TestResult:
    groups = [_clean(g) for g in groups]
    if len(groups) < 2:
        raise ConfigError("Kruskal-Wallis needs at least two groups")
    if any(len(g) == 0 for g in groups):
        raise LatentKitError("INSUFFICIENT_DATA", "empty group")
    pooled = np.concatenate(groups)
    n = len(pooled)
    ranks = _midranks(pooled)
    H = 0.0
    start = 0
    for g in groups:
        r = ranks[start : start + len(g)]
        H += r.sum() ** 2 / len(g)
        start += len(g)
    H = 12 / (n * (n + 1)) * H - 3 * (n + 1)
    correction = 1 - _tie_term(pooled) / (n**3 - n)
    df = len(groups) - 1
    if correction <= 0:
        return TestResult("kruskal_wallis", 0.0, 1.0, df)
    H = max(H / correction, 0.0)
    return TestResult("kruskal_wallis", float(H), float(stats.chi2.sf(H, df)), df)


@dataclass
class PairwiseComparison:
    group_a: str
    group_b: str
    mean_difference: float
    se: float
    t: float
    df: float
    p_value: float
    p_adjusted: float

    def to_dict(self) -> dict:
        return {k: _jsonable(v) for k, v in self.__dict__.items()}


def bonferroni(p: float, m: int) -> float:
    return min(1.0, p * m)


def posthoc(groups: Sequence, method: str = "lsd", names: Sequence[str] | None = None) -> list[PairwiseComparison]:
    """
    Pairwise comparisons sharing the ANOVA within-group mean square.

    ``lsd`` leaves p unadjusted; ``bonferroni`` multiplies by the number of
    pairs and caps at 1.
    """
    if method not in ("lsd", "bonferroni"):
        raise ConfigError(f"unknown post-hoc method {method!r}")
    groups = [_clean(g) for g in groups]
    names = list(names) if names is not None else [str(i + 1) for i in range(len(groups))]
    anova = one_way_anova(groups)
    mse = anova.effect["ms_within"]
    df = anova.df[1]
    pairs = list(itertools.combinations(range(len(groups)), 2))
    out = []
    for i, j in pairs:
        gi, gj = groups[i], groups[j]
        diff = float(gi.mean() - gj.mean())
        se = math.sqrt(mse * (1 / len(gi) + 1 / len(gj)))
        if se == 0:
            t = 0.0 if diff == 0 else math.copysign(math.inf, diff)
            p = 1.0 if diff == 0 else 0.0
        else:
            t = diff / se
            p = _t_pvalue(t, df, "two-sided")
        p_adj = p if method == "lsd" else bonferroni(p, len(pairs))
        out.append(PairwiseComparison(names[i], names[j], diff, se, t, float(df), p, p_adj))
    return out


def correlate(x, y, method: str = "pearson") -> TestResult:
    """Correlation with a t-approximation p-value on n - 2 df (pairwise complete)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = ~(np.isnan(x) | np.isnan(y))
    x, y = x[ok], y[ok]
    n = len(x)
    if n < 3:
        raise LatentKitError("INSUFFICIENT_DATA", "correlation needs n >= 3")
    if method == "spearman":
        x, y = _midranks(x), _midranks(y)
    elif method != "pearson":
        raise ConfigError(f"unknown correlation method {method!r}")
    xc, yc = x - x.mean(), y - y.mean()
    denom = math.sqrt((xc @ xc) * (yc @ yc))
    if denom == 0:
        raise LatentKitError("DEGENERATE", "zero variance in correlation input")
    r = float(np.clip((xc @ yc) / denom, -1.0, 1.0))
    df = n - 2
    if abs(r) == 1.0:
        p = 0.0
        t = math.copysign(math.inf, r)
    else:
        t = r * math.sqrt(df / (1 - r * r))
        p = _t_pvalue(t, df, "two-sided")
    return TestResult(method, r, p, df, effect={"t": t, "n": n})


@dataclass
class Coefficient:
    name: str
    b: float
    se: float
    beta: float | None
    t: float
    p_value: float


@dataclass
class RegressionResult:
    coefficients: list[Coefficient]
    r2: float
    adj_r2: float
    F: float
    df: tuple[int, int]
    p_value: float
    n: int
    condition_number: float
    residuals: np.ndarray = field(repr=False)

    def __getitem__(self, name: str) -> Coefficient:
        for c in self.coefficients:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "r2": self.r2,
            "adj_r2": self.adj_r2,
            "F": _jsonable(self.F),
            "df": list(self.df),
            "p_value": self.p_value,
            "condition_number": self.condition_number,
            "coefficients": [{k: _jsonable(v) for k, v in c.__dict__.items()} for c in self.coefficients],
        }


def ols(y, X, names: Sequence[str] | None = None, standardize_report: bool = True) -> RegressionResult:
    """
    Least squares with an intercept, solved by QR.

    Standardized betas are b_j * sd(x_j) / sd(y). Rows with any missing value
    are dropped.
    """
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    ok = ~(np.isnan(y) | np.isnan(X).any(axis=1))
    y, X = y[ok], X[ok]
    n, p = X.shape
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(p)]
    if n <= p + 1:
        raise LatentKitError("INSUFFICIENT_DATA", f"need n > {p + 1} rows, have {n}")
    design = np.column_stack([np.ones(n), X])
    # condition number of the centred, scaled predictors (intercept excluded)
    Xs = X - X.mean(axis=0)
    norms = np.linalg.norm(Xs, axis=0)
    if np.any(norms == 0):
        raise LatentKitError("COLLINEAR", "constant predictor", condition_number=math.inf)
    sv = np.linalg.svd(Xs / norms, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    if cond > 1e10:
        raise LatentKitError("COLLINEAR", "predictors are rank deficient", condition_number=cond)

    Q, R = np.linalg.qr(design)
    coef = np.linalg.solve(R, Q.T @ y)
    resid = y - design @ coef
    sse = float(resid @ resid)
    sst = float(((y - y.mean()) ** 2).sum())
    df_resid = n - p - 1
    sigma2 = sse / df_resid
    Rinv = np.linalg.inv(R)
    se = np.sqrt(np.maximum(np.einsum("ij,ij->i", Rinv, Rinv) * sigma2, 0.0))
    r2 = 1 - sse / sst if sst > 0 else 1.0
    adj = 1 - (1 - r2) * (n - 1) / df_resid
    if sse == 0 or r2 >= 1:
        F, pF = math.inf, 0.0
    else:
        F = (r2 / p) / ((1 - r2) / df_resid)
        pF = float(stats.f.sf(F, p, df_resid))
    sd_y = y.std(ddof=1)
    coefs = []
    for j, name in enumerate(["(intercept)", *names]):
        b = float(coef[j])
        if se[j] > 0:
            t = b / se[j]
            pv = _t_pvalue(t, df_resid, "two-sided")
        else:
            t = math.copysign(math.inf, b) if b else 0.0
            pv = 0.0 if b else 1.0
        beta = None
        if j > 0 and standardize_report and sd_y > 0:
            beta = b * X[:, j - 1].std(ddof=1) / sd_y
        coefs.append(Coefficient(name, b, float(se[j]), beta, float(t), pv))
    return RegressionResult(coefs, float(r2), float(adj), float(F), (p, df_resid), pF, n, cond, resid)


def ci_mean(x, level: float = 0.95) -> tuple[float, float]:
    x = _clean(x)
    if len(x) < 2:
        raise LatentKitError("INSUFFICIENT_DATA", "confidence interval needs n >= 2")
    if not 0 < level < 1:
        raise ConfigError("level must lie in (0, 1)")
    half = stats.t.ppf(0.5 + level / 2, len(x) - 1) * x.std(ddof=1) / math.sqrt(len(x))
    return float(x.mean() - half), float(x.mean() + half)
