"""Agglomerative clustering of items (single linkage by default)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, LatentKitError

LINKAGES = ("single", "average")


@dataclass(frozen=True)
class Merge:
    a: int
    b: int
    height: float
    new_id: int
    size: int


@dataclass
class Dendrogram:
    """Merge list in scipy's id convention: leaves 0..p-1, merge t creates id p + t."""

    merges: list[Merge]
    p: int
    labels: list[str] = field(default_factory=list)
    linkage: str = "single"

    @property
    def heights(self) -> list[float]:
        return [mg.height for mg in self.merges]

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "linkage": self.linkage,
            "labels": self.labels,
            "merges": [
                {"a": mg.a, "b": mg.b, "height": mg.height, "new_id": mg.new_id, "size": mg.size}
                for mg in self.merges
            ],
        }


def squared_euclidean(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    diff = X[:, None, :] - X[None, :, :]
    return (diff**2).sum(axis=-1)


def agglomerate(D, labels: Sequence[str] | None = None, linkage: str = "single") -> Dendrogram:
    """
    Naive agglomerative loop over a full distance matrix.

    Ties in the minimum are broken by the smallest (cluster_a, cluster_b) id
    pair, so the result does not depend on floating-point scan order.
    """
    if linkage not in LINKAGES:
        raise ConfigError(f"linkage must be one of {LINKAGES}")
    D = np.asarray(D, dtype=float)
    p = D.shape[0]
    if D.shape != (p, p):
        raise ConfigError("distance matrix must be square")
    if p < 2:
        raise LatentKitError("INSUFFICIENT_DATA", "clustering needs at least 2 objects")
    labels = list(labels) if labels is not None else [str(i) for i in range(p)]
    active: dict[int, list[int]] = {i: [i] for i in range(p)}
    dist: dict[tuple[int, int], float] = {(i, j): float(D[i, j]) for i in range(p) for j in range(i + 1, p)}
    merges = []
    next_id = p
    while len(active) > 1:
        (a, b), h = min(dist.items(), key=lambda kv: (kv[1], kv[0]))
        members = active.pop(a) + active.pop(b)
        merges.append(Merge(a, b, h, next_id, len(members)))
        new = {}
        for c in active:
            dac = dist[(min(a, c), max(a, c))]
            dbc = dist[(min(b, c), max(b, c))]
            if linkage == "single":
                new[c] = min(dac, dbc)
            else:
                # average linkage via the Lance-Williams weights
                na = _size(merges, a, p)
                nb = _size(merges, b, p)
                new[c] = (na * dac + nb * dbc) / (na + nb)
        dist = {k: v for k, v in dist.items() if a not in k and b not in k}
        for c, v in new.items():
            dist[(c, next_id)] = v
        active[next_id] = members
        next_id += 1
    return Dendrogram(merges, p, labels, linkage)


def _size(merges: list[Merge], cid: int, p: int) -> int:
    if cid < p:
        return 1
    return merges[cid - p].size


def single_linkage(D=None, X=None, labels: Sequence[str] | None = None) -> Dendrogram:
    """Single linkage on a distance matrix ``D``, or on squared Euclidean distances of ``X``."""
    if (D is None) == (X is None):
        raise ConfigError("pass exactly one of D or X")
    if D is None:
        D = squared_euclidean(X)
    return agglomerate(D, labels, "single")


def cut(dendrogram: Dendrogram, k: int) -> list[int]:
    """
    Cluster labels after undoing the last ``k - 1`` merges. Labels are
    numbered 0.. in order of each cluster's first leaf.
    """
    p = dendrogram.p
    if not 1 <= k <= p:
        raise LatentKitError("DOMAIN_ERROR", f"k must be in 1..{p}, got {k}")
    parent = list(range(p))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    leaf_of: dict[int, int] = {i: i for i in range(p)}  # cluster id -> a representative leaf
    for mg in dendrogram.merges[: p - k]:
        ra, rb = find(leaf_of[mg.a]), find(leaf_of[mg.b])
        parent[rb] = ra
        leaf_of[mg.new_id] = ra
    roots: dict[int, int] = {}
    out = []
    for i in range(p):
        r = find(i)
        if r not in roots:
            roots[r] = len(roots)
        out.append(roots[r])
    return out
