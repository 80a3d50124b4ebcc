"""
Metric (interval) and non-metric (ordinal) multidimensional scaling.

Both variants minimize Kruskal's stress-1 by SMACOF majorization: the
configuration update is the Guttman transform, alternated with a disparity
step (isotonic regression for ordinal data, a non-negative-slope linear fit
for interval data).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, LatentKitError

STRESS_TOL = 1e-6
MAX_ITER = 500
DEFAULT_RESTARTS = 10
TRANSFORMS = ("ordinal", "interval")


@dataclass
class Dissimilarity:
    values: np.ndarray
    item_ids: list[str]
    provenance: str = "external"

    def __post_init__(self):
        D = np.asarray(self.values, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise ConfigError("dissimilarity matrix must be square")
        if not np.allclose(D, D.T, atol=1e-12):
            raise ConfigError("dissimilarity matrix must be symmetric")
        if np.any(D < 0):
            raise ConfigError("dissimilarities must be non-negative")
        D = D.copy()
        np.fill_diagonal(D, 0.0)
        self.values = D

    @property
    def p(self) -> int:
        return self.values.shape[0]


def corr_to_dissimilarity(R, transform: str = "linear", item_ids: Sequence[str] | None = None, provenance: str | None = None) -> Dissimilarity:
    """delta = 1 - r (``linear``) or sqrt(2 (1 - r)) (``sqrt``), zero diagonal."""
    values = getattr(R, "values", R)
    if provenance is None:
        provenance = {"pearson": "pearson", "kendall_tau_b": "kendall"}.get(getattr(R, "method", ""), "external")
    if item_ids is None:
        item_ids = getattr(R, "item_ids", None)
    R = np.asarray(values, dtype=float)
    if np.isnan(R).any():
        raise LatentKitError("DEGENERATE", "correlation matrix has undefined cells")
    R = np.clip(R, -1.0, 1.0)
    if transform == "linear":
        D = 1.0 - R
    elif transform == "sqrt":
        D = np.sqrt(2.0 * (1.0 - R))
    else:
        raise ConfigError(f"unknown dissimilarity transform {transform!r}")
    item_ids = list(item_ids) if item_ids is not None else [f"v{j + 1}" for j in range(R.shape[0])]
    return Dissimilarity((D + D.T) / 2, item_ids, provenance)


def _as_matrix(delta) -> np.ndarray:
    return np.asarray(delta.values if isinstance(delta, Dissimilarity) else delta, dtype=float)


def pairwise_distances(X: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - X[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


def classical_init(delta, k: int, seed: int = 0) -> tuple[np.ndarray, list[str]]:
    """
    Torgerson scaling: eigen-decompose B = -1/2 J D^2 J and keep the top ``k``
    eigenpairs, coordinates = vec * sqrt(max(val, 0)). Falls back to a seeded
    random start (flagged ``RANDOM_FALLBACK``) when no eigenvalue is positive.
    """
    D = _as_matrix(delta)
    p = D.shape[0]
    if not 1 <= k < p:
        raise LatentKitError("DIMENSION_ERROR", f"need 1 <= k < p, got k={k}, p={p}")
    J = np.eye(p) - 1.0 / p
    B = -0.5 * J @ (D**2) @ J
    vals, vecs = np.linalg.eigh((B + B.T) / 2)
    order = np.argsort(vals)[::-1][:k]
    vals, vecs = vals[order], vecs[:, order]
    if np.all(vals <= 1e-12 * max(1.0, abs(vals).max())):
        rng = np.random.default_rng(seed)
        return rng.standard_normal((p, k)), ["RANDOM_FALLBACK"]
    return vecs * np.sqrt(np.clip(vals, 0.0, None)), []


def pava(y, weights=None) -> np.ndarray:
    """
    Weighted least-squares non-decreasing fit (pool adjacent violators).

    ``y`` must already be in the order the fit should be monotone in.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise ConfigError("pava weights must be positive")
    # stack of blocks: (weighted mean, total weight, length)
    means: list[float] = []
    wts: list[float] = []
    lens: list[int] = []
    for yi, wi in zip(y.tolist(), w.tolist()):
        means.append(yi)
        wts.append(wi)
        lens.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            w2 = wts[-2] + wts[-1]
            means[-2] = (means[-2] * wts[-2] + means[-1] * wts[-1]) / w2
            wts[-2] = w2
            lens[-2] += lens[-1]
            means.pop()
            wts.pop()
            lens.pop()
    return np.repeat(means, lens)


def _ordinal_disparities(delta: np.ndarray, d: np.ndarray) -> np.ndarray:
    # primary approach: tied dissimilarities may take any order, so sort ties by d
    order = np.lexsort((d, delta))
    fit = np.empty_like(d)
    fit[order] = pava(d[order])
    return fit


def _interval_disparities(delta: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, float, float]:
    dc = delta - delta.mean()
    var = float(dc @ dc)
    b = float(dc @ (d - d.mean())) / var if var > 0 else 0.0
    if b <= 0:
        b = 0.0
    a = float(d.mean() - b * delta.mean())
    return a + b * delta, a, b


def stress1(d, d_hat) -> float:
    """sqrt(sum (d - d_hat)^2 / sum d^2)."""
    d = np.asarray(d, dtype=float)
    d_hat = np.asarray(d_hat, dtype=float)
    denom = float(d @ d)
    if denom == 0:
        raise LatentKitError("DEGENERATE", "all fitted distances are zero")
    return math.sqrt(float(((d - d_hat) ** 2).sum()) / denom)


def rsq(d_hat, d) -> float:
    """Squared Pearson correlation between disparities and distances."""
    d_hat = np.asarray(d_hat, dtype=float)
    d = np.asarray(d, dtype=float)
    a, b = d_hat - d_hat.mean(), d - d.mean()
    denom = float(a @ a) * float(b @ b)
    if denom == 0:
        raise LatentKitError("DEGENERATE", "RSQ undefined for constant disparities or distances")
    return float((a @ b) ** 2 / denom)


def rotate_principal(X) -> np.ndarray:
    """Centre ``X`` and rotate it onto its principal axes (largest variance first)."""
    X = np.asarray(X, dtype=float)
    Xc = X - X.mean(axis=0)
    _, _, Vt = np.linalg.svd(Xc, full_matrices=False)
    Y = Xc @ Vt.T
    for j in range(Y.shape[1]):
        if Y[np.argmax(np.abs(Y[:, j])), j] < 0:
            Y[:, j] = -Y[:, j]
    return Y


@dataclass
class MdsSolution:
    configuration: np.ndarray
    item_ids: list[str]
    transform: str
    dissimilarities: np.ndarray
    distances: np.ndarray
    disparities: np.ndarray
    stress1: float
    rsq: float
    iterations: int
    restarts_used: int
    best_start: int
    converged: bool
    intercept: float | None = None
    slope: float | None = None
    start_stresses: list[float] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.configuration.shape[1]

    def to_dict(self) -> dict:
        return {
            "transform": self.transform,
            "k": self.k,
            "items": self.item_ids,
            "stress1": self.stress1,
            "rsq": self.rsq,
            "iterations": self.iterations,
            "converged": self.converged,
            "restarts_used": self.restarts_used,
            "best_start": self.best_start,
            "start_stresses": self.start_stresses,
            "intercept": self.intercept,
            "slope": self.slope,
            "flags": self.flags,
            "configuration": np.round(self.configuration, 12).tolist(),
        }


@dataclass
class _Run:
    X: np.ndarray
    stress: float
    iterations: int
    converged: bool
    degenerate: bool


def _smacof(delta_vec: np.ndarray, X: np.ndarray, transform: str, tol: float, max_iter: int) -> _Run:
    p = X.shape[0]
    iu = np.triu_indices(p, 1)
    n_pairs = len(delta_vec)
    stress_old = math.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        d = pairwise_distances(X)[iu]
        if not np.any(d > 0):
            return _Run(X, math.inf, it, False, True)
        if transform == "ordinal":
            dhat = _ordinal_disparities(delta_vec, d)
        else:
            dhat = _interval_disparities(delta_vec, d)[0]
        s = stress1(d, dhat)
        if stress_old - s < tol:
            converged = True
            break
        stress_old = s
        norm = math.sqrt(float(dhat @ dhat))
        if norm == 0:
            return _Run(X, s, it, False, True)
        dhat = dhat * math.sqrt(n_pairs) / norm
        # Guttman transform with unit weights
        ratio = np.zeros((p, p))
        ratio[iu] = np.where(d > 0, dhat / np.where(d > 0, d, 1.0), 0.0)
        ratio = ratio + ratio.T
        Bm = -ratio
        np.fill_diagonal(Bm, ratio.sum(axis=1))
        X = Bm @ X / p
    d = pairwise_distances(X)[iu]
    degenerate = d.mean() == 0 or d.std() / d.mean() < 1e-4
    return _Run(X, s, it, converged, degenerate)


def _scale_to(delta_vec: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Rescale X so its distances best match delta in least squares."""
    p = X.shape[0]
    d = pairwise_distances(X)[np.triu_indices(p, 1)]
    dd = float(d @ d)
    return X * (float(delta_vec @ d) / dd) if dd > 0 else X


def _rank_matrix(D: np.ndarray) -> np.ndarray:
    from scipy.stats import rankdata

    p = D.shape[0]
    iu = np.triu_indices(p, 1)
    out = np.zeros_like(D)
    out[iu] = rankdata(D[iu])
    return out + out.T


def start_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for random start ``index``; independent of how many starts run."""
    return np.random.default_rng([seed, index])


def _mds(delta, k: int, transform: str, seed: int, restarts: int, tol: float, max_iter: int, threads: int = 1) -> MdsSolution:
    if transform not in TRANSFORMS:
        raise ConfigError(f"transform must be one of {TRANSFORMS}")
    if restarts < 1:
        raise ConfigError("restarts must be >= 1")
    D = _as_matrix(delta)
    item_ids = list(delta.item_ids) if isinstance(delta, Dissimilarity) else [f"v{j + 1}" for j in range(D.shape[0])]
    if not isinstance(delta, Dissimilarity):
        Dissimilarity(D, item_ids)  # validates symmetry and sign
    p = D.shape[0]
    if k < 1 or p <= k:
        raise LatentKitError("DIMENSION_ERROR", f"need p > k >= 1, got p={p}, k={k}")
    flags = []
    if p < 4 * k + 1:
        flags.append("STABILITY_WARNING")
    iu = np.triu_indices(p, 1)
    delta_vec = D[iu]

    # non-metric fits see only the rank order, including for the start
    init_input = _rank_matrix(D) if transform == "ordinal" else D
    X0, init_flags = classical_init(init_input, k, seed)
    flags += init_flags
    starts = [X0] + [start_rng(seed, r).standard_normal((p, k)) for r in range(1, restarts)]

    def run(X):
        return _smacof(delta_vec, X, transform, tol, max_iter)

    if threads > 1 and restarts > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(run, starts))
    else:
        runs = [run(X) for X in starts]

    usable = [i for i, r in enumerate(runs) if not r.degenerate and math.isfinite(r.stress)]
    if not usable:
        flags.append("DEGENERATE_SOLUTION")
        usable = list(range(len(runs)))
    # lowest stress wins; ties go to the lowest start index
    best = min(usable, key=lambda i: (runs[i].stress, i))
    r = runs[best]
    X = rotate_principal(_scale_to(delta_vec, r.X))
    d = pairwise_distances(X)[iu]
    a = b = None
    if transform == "ordinal":
        dhat = _ordinal_disparities(delta_vec, d)
    else:
        dhat, a, b = _interval_disparities(delta_vec, d)
    s = stress1(d, dhat)
    try:
        fit = rsq(dhat, d)
    except LatentKitError:
        fit = math.nan
        flags.append("RSQ_DEGENERATE")
    if not r.converged:
        flags.append("NOT_CONVERGED")
    return MdsSolution(
        configuration=X,
        item_ids=item_ids,
        transform=transform,
        dissimilarities=delta_vec,
        distances=d,
        disparities=dhat,
        stress1=s,
        rsq=fit,
        iterations=r.iterations,
        restarts_used=restarts,
        best_start=best,
        converged=r.converged,
        intercept=a,
        slope=b,
        start_stresses=[float(x.stress) for x in runs],
        flags=flags,
    )


def nonmetric_mds(delta, k: int = 2, seed: int = 0, restarts: int = DEFAULT_RESTARTS, tol: float = STRESS_TOL, max_iter: int = MAX_ITER, threads: int = 1) -> MdsSolution:
    """
    Ordinal MDS: disparities are the isotonic regression of distances on the
    dissimilarity order (tied dissimilarities unconstrained). Start 0 is the
    classical solution of the rank-transformed dissimilarities; starts 1..
    are seeded Gaussian configurations.
    """
    return _mds(delta, k, "ordinal", seed, restarts, tol, max_iter, threads)


def metric_mds(delta, k: int = 2, seed: int = 0, restarts: int = DEFAULT_RESTARTS, tol: float = STRESS_TOL, max_iter: int = MAX_ITER, threads: int = 1) -> MdsSolution:
    """Interval MDS: disparities a + b * delta with b >= 0."""
    return _mds(delta, k, "interval", seed, restarts, tol, max_iter, threads)


@dataclass
class StressBaseline:
    p: int
    k: int
    trials: int
    mean: float
    p05: float
    stresses: list[float]

    def verdict(self, stress: float) -> str:
        """PASS when ``stress`` is under half the random-data mean."""
        return "PASS" if stress < 0.5 * self.mean else "FAIL"

    def to_dict(self) -> dict:
        return {"p": self.p, "k": self.k, "trials": self.trials, "mean": self.mean, "p05": self.p05}


def random_stress_baseline(p: int, k: int = 2, trials: int = 50, seed: int = 0, restarts: int = 1, threads: int = 1) -> StressBaseline:
    """Stress-1 of non-metric MDS fitted to uniform random dissimilarities."""
    if trials < 20:
        raise LatentKitError("MIN_TRIALS", "random baseline needs at least 20 trials")
    stresses = []
    iu = np.triu_indices(p, 1)
    for t in range(trials):
        rng = np.random.default_rng([seed, 1_000_003, t])
        D = np.zeros((p, p))
        D[iu] = rng.uniform(size=len(iu[0]))
        D = D + D.T
        sol = nonmetric_mds(D, k, seed=seed + t, restarts=restarts, threads=threads)
        stresses.append(sol.stress1)
    arr = np.array(stresses)
    return StressBaseline(p, k, trials, float(arr.mean()), float(np.percentile(arr, 5)), stresses)
