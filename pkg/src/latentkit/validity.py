"""
Construct validity: average variance extracted, the Fornell-Larcker
discriminant comparison, and known-groups comparisons of scale scores.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import Group, GroupLabel, ScoreTable
from .errors import ConfigError, LatentKitError
from .inference import TestResult, mann_whitney, t_test
from .reliability import disattenuated_matrix


def ave(loadings: Sequence[float]) -> float:
    """Mean squared loading."""
    x = np.asarray(loadings, dtype=float)
    if x.size == 0:
        raise ConfigError("AVE needs at least one loading")
    if np.any(np.abs(x) > 1):
        warnings.warn("loading magnitude above 1 in AVE input", RuntimeWarning, stacklevel=2)
    return float((x**2).mean())


def ave_by_factor(loadings, members: dict[int, list[int]]) -> np.ndarray:
    """AVE per factor from the rows (item indices) assigned to it."""
    L = np.asarray(loadings, dtype=float)
    return np.array([ave(L[rows, j]) if rows else math.nan for j, rows in sorted(members.items())])


@dataclass
class FornellLarckerMatrix:
    """
    AVE on the diagonal, squared observed correlations below it and squared
    attenuation-corrected correlations above it. A pair passes when its
    squared correlation is below both factors' AVE.
    """

    names: list[str]
    ave: np.ndarray
    observed_sq: np.ndarray
    corrected_sq: np.ndarray
    observed_pass: np.ndarray
    corrected_pass: np.ndarray

    def table(self) -> np.ndarray:
        m = len(self.names)
        T = np.diag(self.ave).astype(float)
        lower, upper = np.tril_indices(m, -1), np.triu_indices(m, 1)
        T[lower] = self.observed_sq[lower]
        T[upper] = self.corrected_sq[upper]
        return T

    def verdict(self, a: str, b: str, basis: str = "corrected") -> str:
        i, j = self.names.index(a), self.names.index(b)
        grid = self.corrected_pass if basis == "corrected" else self.observed_pass
        return "PASS" if grid[i, j] else "FAIL"

    def failures(self, basis: str = "corrected") -> list[tuple[str, str]]:
        grid = self.corrected_pass if basis == "corrected" else self.observed_pass
        m = len(self.names)
        return [(self.names[i], self.names[j]) for i in range(m) for j in range(i + 1, m) if not grid[i, j]]

    def to_dict(self) -> dict:
        return {
            "names": self.names,
            "layout": "diagonal=AVE; lower=observed r^2; upper=corrected r^2",
            "ave": self.ave.tolist(),
            "observed_sq": self.observed_sq.tolist(),
            "corrected_sq": self.corrected_sq.tolist(),
            "failures_observed": [list(p) for p in self.failures("observed")],
            "failures_corrected": [list(p) for p in self.failures("corrected")],
        }


def fornell_larcker(ave_values: Sequence[float], score_corr, alphas: Sequence[float], names: Sequence[str] | None = None) -> FornellLarckerMatrix:
    A = np.asarray(ave_values, dtype=float)
    dm = disattenuated_matrix(score_corr, alphas, names)
    m = len(dm.names)
    if A.shape != (m,):
        raise ConfigError("AVE vector length must match the correlation matrix")
    obs_sq = dm.observed**2
    cor_sq = dm.corrected**2
    bound = np.minimum.outer(A, A)
    obs_pass = obs_sq < bound
    cor_pass = cor_sq < bound
    np.fill_diagonal(obs_pass, True)
    np.fill_diagonal(cor_pass, True)
    return FornellLarckerMatrix(dm.names, A, obs_sq, cor_sq, obs_pass, cor_pass)


@dataclass
class ScaleComparison:
    scale: str
    n_high: int
    n_low: int
    mean_high: float
    mean_low: float
    sd_high: float
    sd_low: float
    t_test: TestResult
    mann_whitney: TestResult
    verdict: str

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "high": {"n": self.n_high, "mean": self.mean_high, "sd": self.sd_high},
            "low": {"n": self.n_low, "mean": self.mean_low, "sd": self.sd_low},
            "t_test": self.t_test.to_dict(),
            "mann_whitney": self.mann_whitney.to_dict(),
            "verdict": self.verdict,
        }


@dataclass
class KnownGroupsReport:
    direction: str
    alpha: float
    scales: list[ScaleComparison] = field(default_factory=list)

    def __getitem__(self, scale: str) -> ScaleComparison:
        for s in self.scales:
            if s.scale == scale:
                return s
        raise KeyError(scale)

    def to_dict(self) -> dict:
        return {"direction": self.direction, "alpha": self.alpha, "scales": [s.to_dict() for s in self.scales]}


def known_groups(
    scores: ScoreTable,
    labels: Sequence[GroupLabel],
    direction: str = "HIGH>LOW",
    alpha: float = 0.05,
) -> KnownGroupsReport:
    """
    Compare HIGH against LOW respondents on every score column.

    The t statistic is mean(HIGH) - mean(LOW) based. Verdict per scale:
    CONFIRMED when the t-test is significant in the hypothesised direction,
    CONTRADICTED when significant the other way, else NOT_DISTINGUISHED.
    """
    if direction not in ("HIGH>LOW", "HIGH<LOW"):
        raise ConfigError("direction must be 'HIGH>LOW' or 'HIGH<LOW'")
    group_of = {lab.respondent_id: lab.group for lab in labels}
    rows = {g: [i for i, rid in enumerate(scores.respondent_ids) if group_of.get(rid) is g] for g in (Group.HIGH, Group.LOW)}
    report = KnownGroupsReport(direction, alpha)
    sign = 1 if direction == "HIGH>LOW" else -1
    for name, col in scores.columns.items():
        hi = col[rows[Group.HIGH]]
        lo = col[rows[Group.LOW]]
        hi, lo = hi[~np.isnan(hi)], lo[~np.isnan(lo)]
        if len(hi) < 2 or len(lo) < 2:
            raise LatentKitError("INSUFFICIENT_DATA", f"scale {name!r} needs >= 2 respondents per group")
        t = t_test(hi, lo, "student")
        mw = mann_whitney(hi, lo)
        if t.p_value < alpha and t.statistic * sign > 0:
            verdict = "CONFIRMED"
        elif t.p_value < alpha:
            verdict = "CONTRADICTED"
        else:
            verdict = "NOT_DISTINGUISHED"
        report.scales.append(
            ScaleComparison(
                name, len(hi), len(lo), float(hi.mean()), float(lo.mean()),
                float(hi.std(ddof=1)), float(lo.std(ddof=1)), t, mw, verdict,
            )
        )
    return report
