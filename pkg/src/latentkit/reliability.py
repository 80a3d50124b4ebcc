"""
Internal consistency (Cronbach's alpha, alpha-if-deleted, corrected
item-total correlations) and correction for attenuation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, LatentKitError


def _complete(items) -> np.ndarray:
    X = np.asarray(items, dtype=float)
    if X.ndim != 2:
        raise ConfigError("item scores must be a 2-D array (respondents x items)")
    return X[~np.isnan(X).any(axis=1)]


def cronbach_alpha(items) -> float:
    """alpha = k/(k-1) * (1 - sum of item variances / variance of the total)."""
    X = _complete(items)
    n, k = X.shape
    if k < 2:
        raise ConfigError("alpha needs at least 2 items")
    if n < 3:
        raise LatentKitError("INSUFFICIENT_DATA", "alpha needs at least 3 complete rows")
    total_var = X.sum(axis=1).var(ddof=1)
    if total_var == 0:
        raise LatentKitError("DEGENERATE", "total score has zero variance")
    return float(k / (k - 1) * (1 - X.var(axis=0, ddof=1).sum() / total_var))


def standardized_alpha(items) -> float:
    """k * rbar / (1 + (k - 1) * rbar) from the mean inter-item correlation."""
    X = _complete(items)
    k = X.shape[1]
    if k < 2:
        raise ConfigError("alpha needs at least 2 items")
    R = np.corrcoef(X, rowvar=False)
    rbar = R[np.triu_indices(k, 1)].mean()
    return float(k * rbar / (1 + (k - 1) * rbar))


def alpha_if_deleted(items) -> np.ndarray:
    X = _complete(items)
    k = X.shape[1]
    if k < 3:
        raise ConfigError("alpha-if-deleted needs at least 3 items")
    out = np.empty(k)
    for j in range(k):
        try:
            out[j] = cronbach_alpha(np.delete(X, j, axis=1))
        except LatentKitError:
            out[j] = math.nan
    return out


def corrected_item_total(items) -> np.ndarray:
    """Pearson r between each item and the sum of the other items."""
    X = _complete(items)
    k = X.shape[1]
    if k < 2:
        raise ConfigError("item-total correlation needs at least 2 items")
    total = X.sum(axis=1)
    out = np.empty(k)
    for j in range(k):
        x = X[:, j] - X[:, j].mean()
        rest = total - X[:, j]
        rest = rest - rest.mean()
        denom = math.sqrt(float(x @ x) * float(rest @ rest))
        out[j] = float(np.clip(x @ rest / denom, -1, 1)) if denom else math.nan
    return out


@dataclass
class ReliabilityReport:
    scale: str
    items: list[str]
    n: int
    alpha: float
    standardized_alpha: float
    alpha_if_deleted: list[float] | None
    corrected_item_total: list[float]
    flags: list[str] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.items)

    def to_dict(self) -> dict:
        def clean(v):
            return None if v is None or (isinstance(v, float) and math.isnan(v)) else v

        return {
            "scale": self.scale,
            "k": self.k,
            "n": self.n,
            "alpha": clean(self.alpha),
            "standardized_alpha": clean(self.standardized_alpha),
            "items": [
                {
                    "item": it,
                    "alpha_if_deleted": clean(self.alpha_if_deleted[j]) if self.alpha_if_deleted else None,
                    "corrected_item_total": clean(self.corrected_item_total[j]),
                }
                for j, it in enumerate(self.items)
            ],
            "flags": self.flags,
        }


def reliability_report(items, item_ids: Sequence[str], scale: str = "scale", min_item_total: float = 0.3) -> ReliabilityReport:
    """Alpha, alpha-if-deleted (k >= 3) and corrected item-total r for one scale."""
    X = _complete(items)
    alpha = cronbach_alpha(X)
    aid = alpha_if_deleted(X).tolist() if X.shape[1] >= 3 else None
    cit = corrected_item_total(X).tolist()
    flags = [f"LOW_ITEM_TOTAL:{item}" for item, r in zip(item_ids, cit) if not math.isnan(r) and r < min_item_total]
    if aid is not None:
        flags += [f"ALPHA_RISES_IF_DELETED:{item}" for item, a in zip(item_ids, aid) if not math.isnan(a) and a > alpha]
    return ReliabilityReport(scale, list(item_ids), X.shape[0], alpha, standardized_alpha(X), aid, cit, flags)


def disattenuate(r_obs: float, alpha_a: float, alpha_b: float) -> float:
    """r / sqrt(alpha_a * alpha_b). Results above 1 are returned as-is (overcorrected)."""
    if not (0 < alpha_a <= 1 and 0 < alpha_b <= 1):
        raise LatentKitError("DOMAIN_ERROR", "reliabilities must lie in (0, 1]", alpha_a=alpha_a, alpha_b=alpha_b)
    return r_obs / math.sqrt(alpha_a * alpha_b)


@dataclass
class DisattenuatedMatrix:
    """
    Observed and attenuation-corrected correlations among scales.

    ``table()`` gives the combined layout: reliabilities on the diagonal,
    observed r below it and corrected r above it.
    """

    names: list[str]
    alphas: np.ndarray
    observed: np.ndarray
    corrected: np.ndarray
    overcorrected: list[tuple[str, str]] = field(default_factory=list)

    def table(self) -> np.ndarray:
        m = len(self.names)
        T = np.diag(self.alphas).astype(float)
        lower = np.tril_indices(m, -1)
        upper = np.triu_indices(m, 1)
        T[lower] = self.observed[lower]
        T[upper] = self.corrected[upper]
        return T

    def to_dict(self) -> dict:
        return {
            "names": self.names,
            "layout": "diagonal=alpha; lower=observed; upper=corrected",
            "alphas": self.alphas.tolist(),
            "observed": self.observed.tolist(),
            "corrected": self.corrected.tolist(),
            "overcorrected": [list(p) for p in self.overcorrected],
        }


def disattenuated_matrix(score_corr, alphas: Sequence[float], names: Sequence[str] | None = None) -> DisattenuatedMatrix:
    R = np.asarray(getattr(score_corr, "values", score_corr), dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    m = R.shape[0]
    if R.shape != (m, m) or alphas.shape != (m,):
        raise ConfigError("correlation matrix and alpha vector dimensions disagree")
    names = list(names) if names is not None else [f"F{j + 1}" for j in range(m)]
    C = np.eye(m)
    over = []
    for i in range(m):
        for j in range(i + 1, m):
            c = disattenuate(R[i, j], alphas[i], alphas[j])
            C[i, j] = C[j, i] = c
            if abs(c) > 1:
                over.append((names[i], names[j]))
    return DisattenuatedMatrix(names, alphas, R.copy(), C, over)


def from_table(table) -> tuple[np.ndarray, np.ndarray]:
    """Split a combined table (alpha diagonal, observed lower triangle) into (R, alphas)."""
    T = np.asarray(table, dtype=float)
    m = T.shape[0]
    alphas = np.diag(T).copy()
    R = np.eye(m)
    lower = np.tril_indices(m, -1)
    R[lower] = T[lower]
    R = np.tril(R) + np.tril(R, -1).T
    return R, alphas
