"""
Seeded synthetic data with known structure: Likert responses from a
common-factor model, and planted point configurations for MDS.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .dataset import Codebook, ItemSpec, ResponseMatrix
from .errors import ConfigError, LatentKitError


def quantile_thresholds(categories: int = 5) -> np.ndarray:
    """Cut points giving equal-probability categories on a standard normal."""
    return stats.norm.ppf(np.arange(1, categories) / categories)


@dataclass
class FactorModelSpec:
    """
    Population model X = F L' + E with F ~ N(0, phi) and E ~ N(0, diag(psi)).

    When ``uniqueness`` is omitted it is set to 1 - diag(L phi L') so the
    latent items have unit variance. ``thresholds`` (shared by all items, or
    one row per item) cut the latent continuum into categories 1..K.
    """

    loadings: np.ndarray
    phi: np.ndarray
    n: int
    seed: int = 0
    uniqueness: np.ndarray | None = None
    thresholds: np.ndarray | None = None
    item_ids: list[str] | None = None
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.loadings = np.asarray(self.loadings, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        p, m = self.loadings.shape
        if self.phi.shape != (m, m):
            raise ConfigError("phi must be m x m")
        if not np.allclose(np.diag(self.phi), 1.0) or not np.allclose(self.phi, self.phi.T):
            raise LatentKitError("DOMAIN_ERROR", "phi must be symmetric with unit diagonal")
        common = np.einsum("ij,jk,ik->i", self.loadings, self.phi, self.loadings)
        if self.uniqueness is None:
            if np.any(common > 1):
                self.flags.append("RESCALED")
            self.uniqueness = np.clip(1.0 - common, 0.0, None)
        self.uniqueness = np.asarray(self.uniqueness, dtype=float)
        if self.thresholds is None:
            self.thresholds = quantile_thresholds(5)
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        if self.item_ids is None:
            self.item_ids = [f"item{i + 1:02d}" for i in range(p)]

    @property
    def p(self) -> int:
        return self.loadings.shape[0]

    @property
    def categories(self) -> int:
        return self.thresholds.shape[-1] + 1

    def population_matrix(self) -> np.ndarray:
        """Implied covariance L phi L' + diag(psi), rescaled to a correlation matrix."""
        S = self.loadings @ self.phi @ self.loadings.T + np.diag(self.uniqueness)
        d = np.sqrt(np.diag(S))
        return S / np.outer(d, d)

    def to_dict(self) -> dict:
        return {
            "loadings": self.loadings.tolist(),
            "phi": self.phi.tolist(),
            "n": self.n,
            "seed": self.seed,
            "uniqueness": self.uniqueness.tolist(),
            "thresholds": self.thresholds.tolist(),
            "item_ids": self.item_ids,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FactorModelSpec":
        try:
            return cls(
                loadings=doc["loadings"],
                phi=doc["phi"],
                n=int(doc["n"]),
                seed=int(doc.get("seed", 0)),
                uniqueness=doc.get("uniqueness"),
                thresholds=doc.get("thresholds"),
                item_ids=doc.get("item_ids"),
            )
        except KeyError as exc:
            raise ConfigError(f"factor model spec missing {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "FactorModelSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def simple_structure(
    p: int = 25,
    m: int = 5,
    low: float = 0.6,
    high: float = 0.8,
    phi_offdiag: float = 0.3,
    n: int = 1000,
    seed: int = 0,
) -> FactorModelSpec:
    """Each factor gets p/m consecutive items with loadings spread evenly over [low, high]."""
    if p % m:
        raise ConfigError("p must be a multiple of m")
    per = p // m
    L = np.zeros((p, m))
    levels = np.linspace(low, high, per)
    for i in range(p):
        L[i, i // per] = levels[i % per]
    phi = np.full((m, m), phi_offdiag)
    np.fill_diagonal(phi, 1.0)
    return FactorModelSpec(L, phi, n, seed)


def _respondent_rng(seed: int, index: int) -> np.random.Generator:
    # counter-based stream: respondent i owns counter block i, so any subset
    # of respondents regenerates identically in any order
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, index]))


def latent_scores(spec: FactorModelSpec, rows: Sequence[int] | None = None) -> np.ndarray:
    """Continuous item scores for the requested respondents (default: all)."""
    try:
        chol = np.linalg.cholesky(spec.phi)
    except np.linalg.LinAlgError as exc:
        raise LatentKitError("DOMAIN_ERROR", "phi is not positive definite") from exc
    rows = range(spec.n) if rows is None else rows
    m = spec.phi.shape[0]
    sd_e = np.sqrt(spec.uniqueness)
    out = np.empty((len(rows), spec.p))
    for r, i in enumerate(rows):
        z = _respondent_rng(spec.seed, i).standard_normal(m + spec.p)
        out[r] = spec.loadings @ (chol @ z[:m]) + sd_e * z[m:]
    if "RESCALED" in spec.flags:
        S = spec.loadings @ spec.phi @ spec.loadings.T + np.diag(spec.uniqueness)
        out = out / np.sqrt(np.diag(S))
    return out


def discretize(latent: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Map latent values to categories 1..K via the cut points."""
    T = np.asarray(thresholds, dtype=float)
    if T.ndim == 1:
        return (np.searchsorted(T, latent, side="right") + 1).astype(float)
    out = np.empty_like(latent)
    for j in range(latent.shape[1]):
        out[:, j] = np.searchsorted(T[j], latent[:, j], side="right") + 1
    return out


def gen_likert(spec: FactorModelSpec) -> ResponseMatrix:
    values = discretize(latent_scores(spec), spec.thresholds)
    ids = [f"r{i + 1:05d}" for i in range(spec.n)]
    return ResponseMatrix(ids, list(spec.item_ids), values)


def codebook_for(spec: FactorModelSpec, subscale_names: Sequence[str] | None = None) -> Codebook:
    """Codebook whose subscales follow each item's largest planted loading."""
    m = spec.loadings.shape[1]
    names = list(subscale_names) if subscale_names is not None else [f"F{j + 1}" for j in range(m)]
    items = []
    for i, item in enumerate(spec.item_ids):
        j = int(np.argmax(np.abs(spec.loadings[i])))
        items.append(ItemSpec(item, text=f"synthetic item {i + 1}", subscale=names[j]))
    return Codebook(tuple(items), 1, spec.categories)


def planted_points(p: int, k: int = 2, spread: float = 1.0, noise: float = 0.0, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """
    Uniform points in [0, spread]^k and their Euclidean distance matrix,
    optionally perturbed by symmetric multiplicative log-normal noise.
    """
    if p <= k:
        raise LatentKitError("DIMENSION_ERROR", "need more points than dimensions")
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, spread, size=(p, k))
    diff = X[:, None, :] - X[None, :, :]
    D = np.sqrt((diff**2).sum(axis=-1))
    if noise > 0:
        iu = np.triu_indices(p, 1)
        factor = np.ones((p, p))
        factor[iu] = np.exp(noise * rng.standard_normal(len(iu[0])))
        factor = np.triu(factor, 1)
        factor = factor + factor.T + np.eye(p)
        D = D * factor
    return X, D
