"""
Item descriptives, correlation matrices and factorability diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .dataset import ResponseMatrix, listwise
from .errors import ConfigError, LatentKitError
from .inference import TestResult

METHODS = ("pearson", "spearman", "kendall_tau_b")
SKEW_LIMIT = 2.0
KURTOSIS_LIMIT = 7.0
SALIENT_R = 0.3
KMO_MIN = 0.6


def _nan(x: float | None) -> float | None:
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else float(x)


@dataclass
class ItemDescriptive:
    item: str
    n: int
    mean: float
    sd: float
    skew: float
    kurtosis: float
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "item": self.item,
            "n": self.n,
            "mean": _nan(self.mean),
            "sd": _nan(self.sd),
            "skew": _nan(self.skew),
            "kurtosis": _nan(self.kurtosis),
            "flags": self.flags,
        }


def moments(x: np.ndarray) -> tuple[float, float, float, float]:
    """
    Mean, sample sd, adjusted skewness G1 and adjusted excess kurtosis G2.

    G1 = g1 * sqrt(n (n - 1)) / (n - 2)
    G2 = (n - 1) / ((n - 2)(n - 3)) * ((n + 1) g2 + 6)

    with g1 = m3 / m2^1.5 and g2 = m4 / m2^2 - 3 built from central moments.
    G1 needs n >= 3 and G2 n >= 4; otherwise (or when sd is 0) they are NaN.
    """
    n = len(x)
    mean = float(x.mean())
    sd = float(x.std(ddof=1)) if n > 1 else math.nan
    d = x - mean
    m2 = float((d**2).mean())
    if m2 == 0:
        return mean, 0.0, math.nan, math.nan
    m3 = float((d**3).mean())
    m4 = float((d**4).mean())
    g1 = m3 / m2**1.5
    g2 = m4 / m2**2 - 3
    skew = g1 * math.sqrt(n * (n - 1)) / (n - 2) if n >= 3 else math.nan
    kurt = (n - 1) / ((n - 2) * (n - 3)) * ((n + 1) * g2 + 6) if n >= 4 else math.nan
    return mean, sd, skew, kurt


def item_descriptives(m: ResponseMatrix) -> list[ItemDescriptive]:
    out = []
    for j, item in enumerate(m.item_ids):
        x = m.values[:, j]
        x = x[~np.isnan(x)]
        flags = []
        if len(x) < 2:
            out.append(ItemDescriptive(item, len(x), math.nan, math.nan, math.nan, math.nan, ["INSUFFICIENT_DATA"]))
            continue
        mean, sd, skew, kurt = moments(x)
        if sd == 0:
            flags.append("CONSTANT_ITEM")
        if not math.isnan(skew) and abs(skew) > SKEW_LIMIT:
            flags.append("SKEW")
        if not math.isnan(kurt) and kurt > KURTOSIS_LIMIT:
            flags.append("KURTOSIS")
        out.append(ItemDescriptive(item, len(x), mean, sd, skew, kurt, flags))
    return out


@dataclass
class CorrMatrix:
    """Symmetric correlation matrix with pairwise-complete counts."""

    values: np.ndarray
    method: str
    item_ids: list[str]
    pairwise_n: np.ndarray
    flags: list[str] = field(default_factory=list)

    @property
    def p(self) -> int:
        return len(self.item_ids)

    @property
    def min_n(self) -> int:
        return int(self.pairwise_n.min())

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "items": self.item_ids,
            "flags": self.flags,
            "values": [[_nan(v) for v in row] for row in self.values],
            "pairwise_n": self.pairwise_n.astype(int).tolist(),
        }


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc, yc = x - x.mean(), y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0:
        return math.nan
    return float(np.clip(float(xc @ yc) / denom, -1.0, 1.0))


def _pair_stat(x: np.ndarray, y: np.ndarray, method: str) -> float:
    if method == "pearson":
        return _pearson(x, y)
    if method == "spearman":
        return _pearson(stats.rankdata(x), stats.rankdata(y))
    if np.all(x == x[0]) or np.all(y == y[0]):
        return math.nan
    return float(stats.kendalltau(x, y, variant="b").statistic)


def correlation_matrix(m: ResponseMatrix | np.ndarray, method: str = "pearson", item_ids: Sequence[str] | None = None) -> CorrMatrix:
    """
    Pairwise-complete correlations. Cells with fewer than 3 complete pairs or a
    zero-variance side are NaN and flagged.
    """
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}")
    if isinstance(m, ResponseMatrix):
        data, item_ids = m.values, list(m.item_ids)
    else:
        data = np.asarray(m, dtype=float)
        item_ids = list(item_ids) if item_ids is not None else [f"v{j + 1}" for j in range(data.shape[1])]
    p = data.shape[1]
    R = np.eye(p)
    counts = np.zeros((p, p), dtype=int)
    present = ~np.isnan(data)
    flags: list[str] = []
    for i in range(p):
        counts[i, i] = int(present[:, i].sum())
        for j in range(i + 1, p):
            ok = present[:, i] & present[:, j]
            counts[i, j] = counts[j, i] = int(ok.sum())
            if ok.sum() < 3:
                R[i, j] = R[j, i] = math.nan
                flags.append(f"TOO_FEW_PAIRS:{item_ids[i]}:{item_ids[j]}")
                continue
            r = _pair_stat(data[ok, i], data[ok, j], method)
            if math.isnan(r):
                flags.append(f"ZERO_VARIANCE:{item_ids[i]}:{item_ids[j]}")
            R[i, j] = R[j, i] = r
    for i in range(p):
        if counts[i, i] == 0:
            R[i, i] = math.nan
    off = counts[~np.eye(p, dtype=bool)]
    if off.size and off.max() > 0 and (off.max() - off.min()) / off.max() > 0.05:
        flags.append("PAIRWISE_N_VARIES")
    return CorrMatrix(R, method, item_ids, counts, flags)


def _as_array(R) -> np.ndarray:
    return np.asarray(R.values if isinstance(R, CorrMatrix) else R, dtype=float)


def bartlett_sphericity(R, n: int) -> TestResult:
    """chi2 = -(n - 1 - (2p + 5)/6) ln det R on p(p-1)/2 df."""
    R = _as_array(R)
    p = R.shape[0]
    if np.isnan(R).any():
        raise LatentKitError("SINGULAR_MATRIX", "correlation matrix has undefined cells")
    if n <= p:
        raise LatentKitError("INSUFFICIENT_DATA", "Bartlett test needs n > p")
    sign, logdet = np.linalg.slogdet(R)
    if sign <= 0:
        raise LatentKitError("SINGULAR_MATRIX", "correlation matrix is not positive definite")
    chi2 = max(-(n - 1 - (2 * p + 5) / 6) * logdet, 0.0)
    df = p * (p - 1) // 2
    return TestResult("bartlett_sphericity", float(chi2), float(stats.chi2.sf(chi2, df)), df, effect={"n": n, "det": float(np.exp(logdet))})


@dataclass
class KMOResult:
    overall: float
    per_item: np.ndarray


def anti_image_correlations(R: np.ndarray) -> np.ndarray:
    """Partial correlations q_ij = -S_ij / sqrt(S_ii S_jj) with S = R^-1 (unit diagonal)."""
    try:
        S = np.linalg.inv(R)
    except np.linalg.LinAlgError as exc:
        raise LatentKitError("SINGULAR_MATRIX", "correlation matrix is singular") from exc
    if np.linalg.cond(R) > 1e12:
        raise LatentKitError("SINGULAR_MATRIX", "correlation matrix is numerically singular")
    d = np.sqrt(np.diag(S))
    Q = -S / np.outer(d, d)
    np.fill_diagonal(Q, 1.0)
    return Q


def kmo(R) -> KMOResult:
    R = _as_array(R)
    Q = anti_image_correlations(R)
    off = ~np.eye(R.shape[0], dtype=bool)
    r2 = np.where(off, R**2, 0.0)
    q2 = np.where(off, Q**2, 0.0)
    if r2.sum() == 0:
        raise LatentKitError("DEGENERATE", "KMO undefined for an identity matrix")
    overall = r2.sum() / (r2.sum() + q2.sum())
    row_r, row_q = r2.sum(axis=1), q2.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_item = np.where(row_r + row_q > 0, row_r / (row_r + row_q), math.nan)
    return KMOResult(float(overall), per_item)


@dataclass
class FactorabilityReport:
    n: int
    p: int
    bartlett: TestResult
    kmo_overall: float
    kmo_per_item: dict[str, float]
    share_of_pairs_with_abs_r_ge_0_3: float
    skew_flags: list[str]
    kurtosis_flags: list[str]
    verdict: str
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "bartlett": self.bartlett.to_dict(),
            "kmo_overall": _nan(self.kmo_overall),
            "kmo_per_item": {k: _nan(v) for k, v in self.kmo_per_item.items()},
            "share_of_pairs_with_abs_r_ge_0_3": self.share_of_pairs_with_abs_r_ge_0_3,
            "skew_flags": self.skew_flags,
            "kurtosis_flags": self.kurtosis_flags,
            "verdict": self.verdict,
            "flags": self.flags,
        }


def factorability_report(m: ResponseMatrix, alpha: float = 0.05) -> FactorabilityReport:
    """
    Bartlett, KMO and the share of |r| >= .3 pairs on the listwise-complete
    Pearson matrix, plus skew/kurtosis gates from the per-item descriptives.

    Verdict is FACTORABLE when Bartlett rejects sphericity at ``alpha`` and
    overall KMO is at least .6.
    """
    complete, _ = listwise(m)
    corr = correlation_matrix(complete, "pearson")
    R = corr.values
    p = R.shape[0]
    flags = []
    iu = np.triu_indices(p, 1)
    share = float(np.mean(np.abs(R[iu]) >= SALIENT_R)) if p > 1 else 0.0
    bart = bartlett_sphericity(R, complete.n)
    try:
        k = kmo(R)
        kmo_overall, per_item = k.overall, k.per_item
    except LatentKitError as exc:
        flags.append(f"KMO_{exc.code}")
        kmo_overall, per_item = math.nan, np.full(p, math.nan)
    desc = item_descriptives(m)
    skew_flags = [d.item for d in desc if "SKEW" in d.flags]
    kurt_flags = [d.item for d in desc if "KURTOSIS" in d.flags]
    ok = bart.p_value < alpha and not math.isnan(kmo_overall) and kmo_overall >= KMO_MIN
    return FactorabilityReport(
        n=complete.n,
        p=p,
        bartlett=bart,
        kmo_overall=kmo_overall,
        kmo_per_item=dict(zip(m.item_ids, map(float, per_item))),
        share_of_pairs_with_abs_r_ge_0_3=share,
        skew_flags=skew_flags,
        kurtosis_flags=kurt_flags,
        verdict="FACTORABLE" if ok else "NOT_FACTORABLE",
        flags=flags,
    )
