"""
Exploratory factor analysis: principal axis factoring with iterated
communalities, varimax and promax rotation, rotated-variance accounting and
item-to-factor assignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dataset import ResponseMatrix, ScoreTable, score_groups
from .errors import ConfigError, LatentKitError

PAF_TOL = 1e-4
PAF_MAX_ITER = 100


def _inverse(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if np.isnan(R).any():
        raise LatentKitError("SINGULAR_MATRIX", "correlation matrix has undefined cells")
    if np.linalg.cond(R) > 1e12:
        raise LatentKitError("SINGULAR_MATRIX", "correlation matrix is singular")
    return np.linalg.inv(R)


def smc(R) -> np.ndarray:
    """Squared multiple correlations 1 - 1 / (R^-1)_ii."""
    return 1.0 - 1.0 / np.diag(_inverse(R))


def _desc_eigh(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh((A + A.T) / 2)
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def eigen_spectrum(R, communalities=None) -> tuple[np.ndarray, np.ndarray]:
    """
    Eigenvalues (descending) of the full matrix and of the reduced matrix
    whose diagonal holds the communalities (SMC when not given).
    """
    R = np.asarray(R, dtype=float)
    h2 = smc(R) if communalities is None else np.asarray(communalities, dtype=float)
    reduced = R.copy()
    np.fill_diagonal(reduced, h2)
    return _desc_eigh(R)[0], _desc_eigh(reduced)[0]


def kaiser_count(eigen_full: Sequence[float]) -> int:
    return int(np.sum(np.asarray(eigen_full) > 1.0))


@dataclass
class RetentionAdvice:
    kaiser_count: int
    eigen_full: np.ndarray
    eigen_reduced: np.ndarray

    @property
    def scree_series(self) -> list[tuple[int, float, float]]:
        return [(i + 1, float(f), float(r)) for i, (f, r) in enumerate(zip(self.eigen_full, self.eigen_reduced))]

    def to_dict(self) -> dict:
        p = len(self.eigen_full)
        return {
            "kaiser_count": self.kaiser_count,
            "scree": [
                {"index": i, "full": f, "reduced": r, "pct_variance": 100 * f / p}
                for i, f, r in self.scree_series
            ],
        }


def retention_advice(R) -> RetentionAdvice:
    full, reduced = eigen_spectrum(R)
    return RetentionAdvice(kaiser_count(full), full, reduced)


def variance_percentages(eigenvalues: Sequence[float], p: int) -> np.ndarray:
    """Percent of total variance per eigenvalue; the total is p for a correlation matrix."""
    return 100.0 * np.asarray(eigenvalues, dtype=float) / p


@dataclass
class FactorSolution:
    """Unrotated and rotated parts of a factor solution; p items x m factors."""

    item_ids: list[str]
    unrotated: np.ndarray
    pattern: np.ndarray
    structure: np.ndarray
    phi: np.ndarray
    communalities_initial: np.ndarray
    communalities: np.ndarray
    eigen_full: np.ndarray
    eigen_reduced: np.ndarray
    iterations: int
    converged: bool
    rotation: str = "none"
    kappa: float | None = None
    flags: list[str] = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.unrotated.shape[1]

    @property
    def p(self) -> int:
        return self.unrotated.shape[0]

    def to_dict(self) -> dict:
        def mat(a):
            return np.round(a, 12).tolist()

        return {
            "m": self.m,
            "items": self.item_ids,
            "rotation": self.rotation,
            "kappa": self.kappa,
            "iterations": self.iterations,
            "converged": self.converged,
            "flags": self.flags,
            "eigen_full": mat(self.eigen_full),
            "eigen_reduced": mat(self.eigen_reduced),
            "communalities_initial": mat(self.communalities_initial),
            "communalities": mat(self.communalities),
            "unrotated": mat(self.unrotated),
            "pattern": mat(self.pattern),
            "structure": mat(self.structure),
            "phi": mat(self.phi),
        }


def fix_signs(L: np.ndarray) -> np.ndarray:
    """Flip columns so each column's largest-magnitude entry is positive."""
    L = L.copy()
    for j in range(L.shape[1]):
        if L[np.argmax(np.abs(L[:, j])), j] < 0:
            L[:, j] = -L[:, j]
    return L


def paf_extract(
    R,
    m: int,
    init="smc",
    tol: float = PAF_TOL,
    max_iter: int = PAF_MAX_ITER,
    item_ids: Sequence[str] | None = None,
) -> FactorSolution:
    """
    Principal axis factoring.

    Communalities start at the SMCs (or a supplied vector) and are replaced,
    each pass, by the row sums of squared loadings from the top-``m``
    eigenpairs of the reduced matrix, until the largest change is below
    ``tol``. Communalities above 1 are kept and flagged ``HEYWOOD``. A
    negative eigenvalue among the retained ones is clipped to zero and
    flagged ``NEGATIVE_EIGENVALUE``.
    """
    R = np.asarray(R, dtype=float)
    p = R.shape[0]
    if not isinstance(m, (int, np.integer)) or m < 1 or m > p:
        raise ConfigError(f"number of factors must be in 1..{p}, got {m}")
    item_ids = list(item_ids) if item_ids is not None else [f"v{j + 1}" for j in range(p)]
    flags = []
    if m > p / 3:
        flags.append("UNDERDETERMINED")
    if isinstance(init, str):
        if init != "smc":
            raise ConfigError(f"unknown communality start {init!r}")
        h2_init = smc(R)
    else:
        h2_init = np.asarray(init, dtype=float)
        if h2_init.shape != (p,):
            raise ConfigError("initial communalities must have one entry per item")
    full, reduced_eig = eigen_spectrum(R, h2_init)

    h2 = h2_init.copy()
    reduced = R.copy()
    converged = False
    it = 0
    L = np.zeros((p, m))
    for it in range(1, max_iter + 1):
        np.fill_diagonal(reduced, h2)
        vals, vecs = _desc_eigh(reduced)
        top = vals[:m]
        if top[0] <= 0:
            raise LatentKitError("EXTRACTION_FAILED", "leading eigenvalue of the reduced matrix is not positive", iteration=it)
        if np.any(top < -1e-10) and "NEGATIVE_EIGENVALUE" not in flags:
            # over-extraction: the factor contributes nothing and its loadings are zeroed
            flags.append("NEGATIVE_EIGENVALUE")
        L = vecs[:, :m] * np.sqrt(np.clip(top, 0.0, None))
        new_h2 = (L**2).sum(axis=1)
        delta = float(np.max(np.abs(new_h2 - h2)))
        h2 = new_h2
        if delta < tol:
            converged = True
            break
    if not converged:
        flags.append("NOT_CONVERGED")
    if np.any(h2 > 1.0):
        flags.append("HEYWOOD")
    L = fix_signs(L)
    return FactorSolution(
        item_ids=item_ids,
        unrotated=L,
        pattern=L.copy(),
        structure=L.copy(),
        phi=np.eye(m),
        communalities_initial=h2_init,
        communalities=h2,
        eigen_full=full,
        eigen_reduced=reduced_eig,
        iterations=it,
        converged=converged,
        flags=flags,
    )


def varimax_criterion(L: np.ndarray) -> float:
    """Raw varimax criterion: sum over factors of the variance of squared loadings."""
    L2 = L**2
    return float(((L2 - L2.mean(axis=0)) ** 2).mean(axis=0).sum())


def _row_norms(L: np.ndarray) -> np.ndarray:
    h = np.sqrt((L**2).sum(axis=1))
    h[h == 0] = 1.0
    return h


@dataclass
class VarimaxResult:
    loadings: np.ndarray
    rotation: np.ndarray
    sweeps: int
    converged: bool
    history: list[float]


def varimax(L, normalize: bool = True, tol: float = 1e-10, max_sweeps: int = 500) -> VarimaxResult:
    """
    Varimax by successive planar rotations.

    Each sweep visits every factor pair and applies the rotation angle that
    maximizes the criterion for that pair, so the criterion never decreases
    between sweeps. With ``normalize`` rows are scaled to unit length before
    rotating and scaled back afterwards.
    """
    L = np.asarray(L, dtype=float)
    p, m = L.shape
    if m < 2:
        return VarimaxResult(L.copy(), np.eye(m), 0, True, [varimax_criterion(L)])
    h = _row_norms(L) if normalize else np.ones(p)
    A = L / h[:, None]
    T = np.eye(m)
    history = [varimax_criterion(A)]
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        for j in range(m - 1):
            for k in range(j + 1, m):
                x, y = A[:, j], A[:, k]
                u = x * x - y * y
                v = 2 * x * y
                num = 2 * (p * (u @ v) - u.sum() * v.sum())
                den = p * ((u @ u) - (v @ v)) - (u.sum() ** 2 - v.sum() ** 2)
                angle = math.atan2(num, den) / 4
                if abs(angle) < 1e-15:
                    continue
                c, s = math.cos(angle), math.sin(angle)
                G = np.array([[c, -s], [s, c]])
                A[:, [j, k]] = A[:, [j, k]] @ G
                T[:, [j, k]] = T[:, [j, k]] @ G
        history.append(varimax_criterion(A))
        if history[-1] - history[-2] < tol:
            converged = True
            break
    return VarimaxResult(A * h[:, None], T, sweeps, converged, history)


@dataclass
class PromaxResult:
    pattern: np.ndarray
    structure: np.ndarray
    phi: np.ndarray
    transform: np.ndarray
    varimax: VarimaxResult


def promax(L, kappa: float = 4.0, normalize: bool = True) -> PromaxResult:
    """
    Promax oblique rotation of unrotated (or varimax) loadings.

    The varimax solution V is raised to a target P = |V|^kappa * sign(V);
    the least-squares transform U = (V'V)^-1 V'P is rescaled so the implied
    factor correlations (U'U)^-1 have unit diagonal. Pattern = V U,
    phi = (U'U)^-1 and structure = pattern @ phi. With ``normalize`` the target
    and fit use Kaiser row-normalized loadings.
    """
    if kappa < 1:
        raise ConfigError("promax kappa must be >= 1")
    L = np.asarray(L, dtype=float)
    vm = varimax(L, normalize=normalize)
    V = vm.loadings
    m = V.shape[1]
    if m < 2:
        return PromaxResult(V.copy(), V.copy(), np.eye(m), np.eye(m), vm)
    h = _row_norms(V) if normalize else np.ones(V.shape[0])
    Vn = V / h[:, None]
    target = np.abs(Vn) ** kappa * np.sign(Vn)
    normal = Vn.T @ Vn
    if np.linalg.cond(normal) > 1e12:
        raise LatentKitError("ROTATION_FAILED", "singular normal equations in promax fit")
    U = np.linalg.solve(normal, Vn.T @ target)
    UtU = U.T @ U
    if np.linalg.cond(UtU) > 1e12:
        raise LatentKitError("ROTATION_FAILED", "promax transform is singular")
    d = np.diag(np.linalg.inv(UtU))
    U = U * np.sqrt(d)[None, :]
    phi = np.linalg.inv(U.T @ U)
    phi = (phi + phi.T) / 2
    np.fill_diagonal(phi, 1.0)
    pattern = V @ U
    # orient each factor so its largest pattern entry is positive; phi follows
    signs = np.where(pattern[np.argmax(np.abs(pattern), axis=0), np.arange(m)] < 0, -1.0, 1.0)
    pattern = pattern * signs
    U = U * signs
    phi = phi * np.outer(signs, signs)
    structure = pattern @ phi
    return PromaxResult(pattern, structure, phi, U, vm)


def rotate(solution: FactorSolution, method: str = "promax", kappa: float = 4.0, normalize: bool = True) -> FactorSolution:
    """Return a copy of ``solution`` with pattern/structure/phi filled by rotation."""
    L = solution.unrotated
    flags = list(solution.flags)
    if method == "none" or solution.m == 1:
        pattern, structure, phi = L.copy(), L.copy(), np.eye(solution.m)
    elif method == "varimax":
        vm = varimax(L, normalize=normalize)
        if not vm.converged:
            flags.append("ROTATION_NOT_CONVERGED")
        pattern = fix_signs(vm.loadings)
        structure, phi = pattern.copy(), np.eye(solution.m)
    elif method == "promax":
        pm = promax(L, kappa=kappa, normalize=normalize)
        if not pm.varimax.converged:
            flags.append("ROTATION_NOT_CONVERGED")
        pattern, structure, phi = pm.pattern, pm.structure, pm.phi
    else:
        raise ConfigError(f"unknown rotation {method!r}")
    return FactorSolution(
        item_ids=solution.item_ids,
        unrotated=solution.unrotated,
        pattern=pattern,
        structure=structure,
        phi=phi,
        communalities_initial=solution.communalities_initial,
        communalities=solution.communalities,
        eigen_full=solution.eigen_full,
        eigen_reduced=solution.eigen_reduced,
        iterations=solution.iterations,
        converged=solution.converged,
        rotation=method,
        kappa=kappa if method == "promax" else None,
        flags=flags,
    )


def fit_efa(R, m: int, rotation: str = "promax", kappa: float = 4.0, item_ids=None, **paf_kwargs) -> FactorSolution:
    return rotate(paf_extract(R, m, item_ids=item_ids, **paf_kwargs), rotation, kappa)


@dataclass
class RotatedVariance:
    variance: np.ndarray
    pct_total: np.ndarray
    pct_common: np.ndarray

    def to_dict(self) -> dict:
        return {
            "variance": self.variance.tolist(),
            "pct_total": self.pct_total.tolist(),
            "pct_common": self.pct_common.tolist(),
            "sum_variance": float(self.variance.sum()),
            "sum_pct_total": float(self.pct_total.sum()),
        }


def variance_shares(variance: Sequence[float], p: int) -> RotatedVariance:
    V = np.asarray(variance, dtype=float)
    total = V.sum()
    if total <= 0:
        raise LatentKitError("DEGENERATE", "rotated factors explain no variance")
    return RotatedVariance(V, 100.0 * V / p, 100.0 * V / total)


def rotated_variance(pattern, structure) -> RotatedVariance:
    """Per-factor variance sum_i pattern_ij * structure_ij, as % of p and of the total."""
    pattern = np.asarray(pattern, dtype=float)
    structure = np.asarray(structure, dtype=float)
    if pattern.shape != structure.shape:
        raise ConfigError("pattern and structure must have the same shape")
    return variance_shares((pattern * structure).sum(axis=0), pattern.shape[0])


@dataclass
class ItemAssignment:
    item: str
    factor: int | None
    salient: list[int]
    cross_loading: bool
    below_threshold: bool
    tie: bool = False
    overridden: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class AssignmentReport:
    threshold: float
    items: list[ItemAssignment]
    m: int

    def members(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {j: [] for j in range(self.m)}
        for a in self.items:
            if a.factor is not None:
                out[a.factor].append(a.item)
        return out

    def labels(self) -> list[int | None]:
        return [a.factor for a in self.items]

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "m": self.m,
            "items": [a.to_dict() for a in self.items],
            "members": {str(k): v for k, v in self.members().items()},
        }


def assign_items(
    pattern,
    threshold: float = 0.4,
    overrides: Mapping[str, int] | None = None,
    item_ids: Sequence[str] | None = None,
) -> AssignmentReport:
    """
    Assign each item to the factor with its largest salient |pattern|
    coefficient (salient: |coef| >= threshold). Factors are 0-based.

    Items with two or more salient coefficients are flagged ``cross_loading``;
    items with none get no factor and ``below_threshold``. A tie for the
    largest goes to the lower factor index and sets ``tie``. ``overrides``
    (item id -> factor) win over the rule, leaving the flags untouched.
    """
    if not 0 < threshold < 1:
        raise ConfigError("threshold must lie in (0, 1)")
    P = np.asarray(pattern, dtype=float)
    p, m = P.shape
    item_ids = list(item_ids) if item_ids is not None else [f"v{j + 1}" for j in range(p)]
    overrides = dict(overrides or {})
    bad = {k: v for k, v in overrides.items() if k not in item_ids or not 0 <= v < m}
    if bad:
        raise ConfigError(f"invalid overrides: {bad}")
    out = []
    for i, item in enumerate(item_ids):
        a = np.abs(P[i])
        salient = [j for j in range(m) if a[j] >= threshold]
        factor = None
        tie = False
        if salient:
            best = max(a[j] for j in salient)
            winners = [j for j in salient if a[j] == best]
            factor = winners[0]
            tie = len(winners) > 1
        overridden = item in overrides
        if overridden:
            factor = overrides[item]
        out.append(
            ItemAssignment(item, factor, salient, len(salient) >= 2, not salient, tie, overridden)
        )
    return AssignmentReport(threshold, out, m)


def factor_scores(
    m: ResponseMatrix,
    assignment: AssignmentReport,
    names: Sequence[str] | None = None,
    agg: str = "mean",
) -> ScoreTable:
    """Equal-weight mean (or sum) of each factor's assigned items."""
    names = list(names) if names is not None else [f"F{j + 1}" for j in range(assignment.m)]
    groups = {}
    flags = []
    for j, items in assignment.members().items():
        if items:
            groups[names[j]] = items
        else:
            flags.append(f"NO_ITEMS:{names[j]}")
    if not groups:
        raise LatentKitError("DEGENERATE", "no factor has assigned items")
    table = score_groups(m, groups, agg)
    table.flags.extend(flags)
    return table


def congruence(a, b) -> float:
    """Tucker's congruence coefficient between two loading vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = math.sqrt(float(a @ a) * float(b @ b))
    return float(a @ b / denom) if denom else math.nan


def match_factors(estimated, target) -> tuple[np.ndarray, np.ndarray]:
    """
    Column permutation and signs aligning ``estimated`` to ``target`` by
    maximal total |congruence|. Returns (order, signs) such that
    ``estimated[:, order] * signs`` lines up with ``target``.
    """
    E = np.asarray(estimated, dtype=float)
    T = np.asarray(target, dtype=float)
    m = T.shape[1]
    C = np.array([[congruence(E[:, i], T[:, j]) for j in range(m)] for i in range(E.shape[1])])
    rows, cols = linear_sum_assignment(-np.abs(np.nan_to_num(C)))
    order = np.empty(m, dtype=int)
    signs = np.ones(m)
    for r, c in zip(rows, cols):
        order[c] = r
        signs[c] = -1.0 if C[r, c] < 0 else 1.0
    return order, signs
