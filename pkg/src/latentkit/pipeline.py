"""
Stage runners behind the CLI.

Every stage reads the configured inputs itself (ingest, reverse-code,
re-derive the factor solution when it needs one), so running ``pipeline``
writes exactly the files the individual subcommands would.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import cluster as clu
from . import dataset as ds
from . import efa
from . import inference as inf
from . import mds as mdsmod
from . import reliability as rel
from . import report
from . import screening as scr
from . import synth
from . import validity as val
from .errors import ConfigError, LatentKitError

STAGES = ("ingest", "screen", "efa", "reliability", "validity", "mds", "cluster", "compare", "regress")


@dataclass
class PipelineConfig:
    responses: str | None = None
    codebook: str | None = None
    out: str = "latentkit_out"
    seed: int = 0
    threads: int = 1
    stages: list[str] = field(default_factory=lambda: list(STAGES))
    # ingestion
    dedup_key: str | None = None
    id_column: str | None = None
    disqualify: list | None = None
    # factor analysis
    efa_items: list[str] | None = None
    factors: int | str = "auto"
    max_factors: int | None = None
    rotation: str = "promax"
    kappa: float = 4.0
    threshold: float = 0.4
    overrides: dict[str, int] = field(default_factory=dict)
    factor_names: list[str] | None = None
    # scales, reliability, validity
    scales: str = "efa"
    ave_basis: str = "pattern"
    criterion_subscale: str | None = None
    direction: str = "HIGH>LOW"
    # mds / cluster
    mds_dims: int = 2
    mds_transform: str = "ordinal"
    mds_corr: str = "pearson"
    dissimilarity: str = "linear"
    restarts: int = mdsmod.DEFAULT_RESTARTS
    baseline_trials: int = 50
    cluster_k: int | None = None
    cluster_source: str = "mds"
    # group comparison / regression
    group_column: str | None = None
    posthoc: str = "lsd"
    regress_outcome: str | None = None
    regress_predictors: list[str] | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path: str) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def validate(self) -> None:
        if self.factors != "auto":
            if isinstance(self.factors, str):
                try:
                    self.factors = int(self.factors)
                except ValueError:
                    raise ConfigError("factors must be a positive integer or 'auto'") from None
            if self.factors < 1:
                raise ConfigError("factors must be a positive integer or 'auto'")
        if self.max_factors is not None and self.max_factors < 1:
            raise ConfigError("max_factors must be positive")
        if not 0 < self.threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)")
        if self.kappa < 1:
            raise ConfigError("kappa must be >= 1")
        if self.rotation not in ("promax", "varimax", "none"):
            raise ConfigError(f"unknown rotation {self.rotation!r}")
        if self.scales not in ("efa", "codebook"):
            raise ConfigError("scales must be 'efa' or 'codebook'")
        if self.ave_basis not in ("pattern", "structure"):
            raise ConfigError("ave_basis must be 'pattern' or 'structure'")
        if self.mds_dims < 1:
            raise ConfigError("mds_dims must be >= 1")
        if self.mds_transform not in mdsmod.TRANSFORMS:
            raise ConfigError(f"mds_transform must be one of {mdsmod.TRANSFORMS}")
        if self.mds_corr not in ("pearson", "kendall_tau_b", "spearman"):
            raise ConfigError("mds_corr must be pearson, spearman or kendall_tau_b")
        if self.dissimilarity not in ("linear", "sqrt"):
            raise ConfigError("dissimilarity must be 'linear' or 'sqrt'")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        if self.cluster_k is not None and self.cluster_k < 1:
            raise ConfigError("cluster_k must be >= 1")
        if self.cluster_source not in ("mds", "dissimilarity"):
            raise ConfigError("cluster_source must be 'mds' or 'dissimilarity'")
        if self.posthoc not in ("lsd", "bonferroni"):
            raise ConfigError("posthoc must be 'lsd' or 'bonferroni'")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stages: {bad}")

    def effective_seed(self) -> int:
        env = os.environ.get("LATENTKIT_SEED")
        if env is None:
            return self.seed
        try:
            return int(env)
        except ValueError:
            raise ConfigError("LATENTKIT_SEED must be an integer") from None


class Workspace:
    """Output directory plus a manifest of every file written so far."""

    def __init__(self, out: str):
        self.root = Path(out)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}
        self.stages: dict[str, str] = {}
        # stages run one at a time into the same directory accumulate one manifest
        previous = self.root / "manifest.json"
        if previous.exists():
            doc = json.loads(previous.read_text(encoding="utf-8"))
            self.files = {k: v for k, v in doc.get("files", {}).items() if (self.root / k).exists()}
            self.stages = dict(doc.get("stages", {}))
        stale = self.root / "error.json"
        if stale.exists():
            stale.unlink()
        self.files.pop("error.json", None)

    def path(self, name: str) -> Path:
        return self.root / name

    def record(self, *paths: Path) -> None:
        for p in paths:
            self.files[p.name] = report.sha256(p)
        self.flush()

    def json(self, name: str, obj) -> Path:
        p = report.write_json(self.path(name), obj)
        self.record(p)
        return p

    def text(self, name: str, lines: list[str]) -> Path:
        p = self.path(name)
        p.write_text("\n".join(lines) + "\n", encoding="utf-8")
        self.record(p)
        return p

    def flush(self) -> None:
        manifest = {"stages": self.stages, "files": dict(sorted(self.files.items()))}
        report.write_json(self.path("manifest.json"), manifest)


# ---------------------------------------------------------------- loading


@dataclass
class Loaded:
    codebook: ds.Codebook
    raw: ds.ResponseMatrix
    scored: ds.ResponseMatrix
    ingest_report: ds.IngestReport


def _need(value, what: str):
    if value is None:
        raise ConfigError(f"{what} is required")
    return value


def load_inputs(cfg: PipelineConfig) -> Loaded:
    cb = ds.Codebook.load(_need(cfg.codebook, "codebook"))
    path = _need(cfg.responses, "responses")
    try:
        rows = ds.read_rows(path)
    except FileNotFoundError:
        raise ConfigError(f"responses file not found: {path}") from None
    if not rows:
        raise LatentKitError("EMPTY_SOURCE", f"{path} has no records")
    key = cfg.dedup_key or cfg.id_column or next(iter(rows[0]))
    m, rep = ds.ingest(rows, cb, key, cfg.disqualify, cfg.id_column)
    return Loaded(cb, m, ds.reverse_code(m, cb), rep)


def efa_item_ids(cfg: PipelineConfig, cb: ds.Codebook) -> list[str]:
    if cfg.efa_items:
        unknown = [i for i in cfg.efa_items if i not in cb.item_ids]
        if unknown:
            raise ConfigError(f"efa_items not in codebook: {unknown}")
        return list(cfg.efa_items)
    return [it.id for it in cb.items if cfg.criterion_subscale is None or it.subscale != cfg.criterion_subscale]


@dataclass
class EfaRun:
    items: list[str]
    n: int
    corr: scr.CorrMatrix
    advice: efa.RetentionAdvice
    solution: efa.FactorSolution
    assignment: efa.AssignmentReport
    names: list[str]


def run_efa(cfg: PipelineConfig, data: Loaded) -> EfaRun:
    items = efa_item_ids(cfg, data.codebook)
    complete, _ = ds.listwise(data.scored, items)
    corr = scr.correlation_matrix(complete, "pearson")
    advice = efa.retention_advice(corr.values)
    if cfg.factors == "auto":
        cap = cfg.max_factors or max(1, len(items) // 3)
        m = max(1, min(advice.kaiser_count, cap))
    else:
        m = int(cfg.factors)
    sol = efa.fit_efa(corr.values, m, rotation=cfg.rotation, kappa=cfg.kappa, item_ids=items)
    names = list(cfg.factor_names) if cfg.factor_names else [f"F{j + 1}" for j in range(m)]
    if len(names) != m:
        raise ConfigError(f"{len(names)} factor names given for {m} factors")
    overrides = {}
    for item, f in cfg.overrides.items():
        overrides[item] = names.index(f) if isinstance(f, str) else int(f) - 1
    assignment = efa.assign_items(sol.pattern, cfg.threshold, overrides, items)
    return EfaRun(items, complete.n, corr, advice, sol, assignment, names)


def scale_groups(cfg: PipelineConfig, data: Loaded, run: EfaRun | None = None) -> dict[str, list[str]]:
    if cfg.scales == "codebook":
        groups = {k: v for k, v in data.codebook.subscales().items() if k != cfg.criterion_subscale}
        if not groups:
            raise ConfigError("codebook defines no subscales to score")
        return groups
    run = run or run_efa(cfg, data)
    return {run.names[j]: items for j, items in run.assignment.members().items() if items}


def scale_scores(cfg: PipelineConfig, data: Loaded, groups: dict[str, list[str]]) -> ds.ScoreTable:
    table = ds.score_groups(data.scored, groups, "mean")
    overall_items = [i for items in groups.values() for i in items]
    table.columns["overall"] = ds.score_groups(data.scored, {"overall": overall_items}, "mean")["overall"]
    table.members["overall"] = overall_items
    return table


# ---------------------------------------------------------------- stages


def stage_ingest(cfg: PipelineConfig, ws: Workspace) -> dict:
    data = load_inputs(cfg)
    rep = data.ingest_report
    ws.json("ingest_report.json", rep.to_dict())
    clean = ws.path("clean_responses.csv")
    data.raw.to_csv(clean, id_column=cfg.id_column or "id")
    ws.record(clean)
    ws.text(
        "ingest_summary.txt",
        [
            f"received      {rep.received}",
            f"duplicates    {rep.duplicates}",
            f"unique        {rep.unique}",
            f"malformed     {rep.malformed}",
            f"disqualified  {rep.disqualified}",
            f"retained (n)  {rep.retained}",
            f"cell errors   {len(rep.cell_errors)}",
        ],
    )
    return {k: v for k, v in rep.to_dict().items() if k not in ("row_errors", "cell_errors", "disqualified_ids")}


def stage_screen(cfg: PipelineConfig, ws: Workspace) -> dict:
    data = load_inputs(cfg)
    items = efa_item_ids(cfg, data.codebook)
    m = data.scored.select(items)
    desc = scr.item_descriptives(m)
    ws.record(
        report.write_csv(
            ws.path("descriptives.csv"),
            ["item", "n", "mean", "sd", "skew", "kurtosis", "flags"],
            [[d.item, d.n, d.mean, d.sd, d.skew, d.kurtosis, ";".join(d.flags)] for d in desc],
        )
    )
    for method in scr.METHODS:
        cm = scr.correlation_matrix(m, method)
        ws.record(report.write_matrix(ws.path(f"corr_{method}.csv"), cm.item_ids, cm.values))
    fr = scr.factorability_report(m)
    ws.json("factorability.json", {"descriptives": [d.to_dict() for d in desc], **fr.to_dict()})
    ws.text(
        "screen_summary.txt",
        [
            f"items {fr.p}, complete cases {fr.n}",
            f"Bartlett chi2({fr.bartlett.df}) = {fr.bartlett.statistic:.2f}, p = {fr.bartlett.p_value:.4g}",
            f"KMO = {report.fmt(fr.kmo_overall, 3)}",
            f"share of pairs with |r| >= .3: {fr.share_of_pairs_with_abs_r_ge_0_3:.3f}",
            f"skew flags: {fr.skew_flags or 'none'}; kurtosis flags: {fr.kurtosis_flags or 'none'}",
            f"verdict: {fr.verdict}",
        ],
    )
    return {
        "n": fr.n,
        "p": fr.p,
        "bartlett": fr.bartlett.to_dict(),
        "kmo_overall": fr.kmo_overall,
        "share_of_pairs_with_abs_r_ge_0_3": fr.share_of_pairs_with_abs_r_ge_0_3,
        "verdict": fr.verdict,
    }


def _pattern_rows(run: EfaRun, M: np.ndarray, rv: efa.RotatedVariance | None):
    sol = run.solution
    rows = []
    for i, item in enumerate(run.items):
        a = run.assignment.items[i]
        rows.append([item, *M[i], sol.communalities[i], run.names[a.factor] if a.factor is not None else "", _assign_flags(a)])
    if rv is not None:
        rows.append(["#rotated_variance", *rv.variance, rv.variance.sum(), "", ""])
        rows.append(["#pct_total", *rv.pct_total, rv.pct_total.sum(), "", ""])
        rows.append(["#pct_common", *rv.pct_common, rv.pct_common.sum(), "", ""])
    return rows


def _assign_flags(a: efa.ItemAssignment) -> str:
    flags = [name for name, on in (("cross_loading", a.cross_loading), ("below_threshold", a.below_threshold), ("tie", a.tie), ("override", a.overridden)) if on]
    return ";".join(flags)


def stage_efa(cfg: PipelineConfig, ws: Workspace) -> dict:
    data = load_inputs(cfg)
    run = run_efa(cfg, data)
    sol = run.solution
    p = len(run.items)
    rv = efa.rotated_variance(sol.pattern, sol.structure)
    extraction = efa.variance_percentages((sol.unrotated**2).sum(axis=0), p)
    ws.json("efa_solution.json", {"n": run.n, **sol.to_dict(), "factor_names": run.names, "rotated_variance": rv.to_dict()})
    ws.json("efa_retention.json", run.advice.to_dict())
    ws.json("assignment.json", {"factor_names": run.names, **run.assignment.to_dict()})
    ws.record(
        report.write_csv(
            ws.path("scree.csv"),
            ["index", "eigen_full", "eigen_reduced", "pct_variance_full"],
            [[i, f, r, 100 * f / p] for i, f, r in run.advice.scree_series],
        ),
        report.scree_svg(ws.path("scree.svg"), run.advice.eigen_full, run.advice.eigen_reduced),
    )
    header = ["item", *run.names, "h2", "assigned", "flags"]
    ws.record(
        report.write_csv(ws.path("pattern.csv"), header, _pattern_rows(run, sol.pattern, rv)),
        report.write_csv(ws.path("structure.csv"), header, _pattern_rows(run, sol.structure, None)),
    )
    lines = [
        f"items {p}, complete cases {run.n}, Kaiser count {run.advice.kaiser_count}, factors retained {sol.m}",
        f"PAF iterations {sol.iterations} (converged={sol.converged}); rotation {sol.rotation}"
        + (f" kappa={sol.kappa:g}" if sol.kappa else ""),
        "factor  rotated_var  %total  %common  items",
    ]
    members = run.assignment.members()
    for j, name in enumerate(run.names):
        lines.append(f"{name:6s}  {rv.variance[j]:11.3f}  {rv.pct_total[j]:6.2f}  {rv.pct_common[j]:7.2f}  {', '.join(members[j])}")
    unassigned = [a.item for a in run.assignment.items if a.factor is None]
    lines.append(f"unassigned: {unassigned or 'none'}; flags: {sol.flags or 'none'}")
    ws.text("efa_summary.txt", lines)
    summary = {
        "n": run.n,
        "kaiser_count": run.advice.kaiser_count,
        "factors": sol.m,
        "converged": sol.converged,
        "flags": sol.flags,
        "communalities": {"initial": sol.communalities_initial, "extracted": sol.communalities},
        "variance_explained": {
            "eigen_full": sol.eigen_full[: sol.m],
            "pct_full": efa.variance_percentages(sol.eigen_full[: sol.m], p),
            "extraction_ss": (sol.unrotated**2).sum(axis=0),
            "pct_extraction": extraction,
            "rotated": rv.to_dict(),
        },
        "pattern_matrix": {"names": run.names, "items": run.items, "pattern": sol.pattern, "phi": sol.phi},
        "assignment": {run.names[j]: items for j, items in members.items()},
        "unassigned": unassigned,
    }
    agreement = _codebook_agreement(data.codebook, run)
    if agreement is not None:
        summary["codebook_agreement"] = agreement
    return summary


def _codebook_agreement(cb: ds.Codebook, run: EfaRun) -> dict | None:
    """Match factors to codebook subscales and count items placed consistently."""
    subs = {it.id: it.subscale for it in cb.items if it.id in run.items}
    if not any(subs.values()):
        return None
    names = sorted({s for s in subs.values() if s})
    counts = np.zeros((run.solution.m, len(names)), dtype=int)
    for a in run.assignment.items:
        if a.factor is not None and subs.get(a.item):
            counts[a.factor, names.index(subs[a.item])] += 1
    from scipy.optimize import linear_sum_assignment

    rows, cols = linear_sum_assignment(-counts)
    mapping = {run.names[r]: names[c] for r, c in zip(rows, cols)}
    correct = sum(1 for a in run.assignment.items if a.factor is not None and mapping.get(run.names[a.factor]) == subs.get(a.item))
    return {"factor_to_subscale": mapping, "items_consistent": correct, "items_total": len(run.items)}


def _scale_corr(table: ds.ScoreTable, names: list[str]) -> np.ndarray:
    X = np.column_stack([table[n] for n in names])
    X = X[~np.isnan(X).any(axis=1)]
    return np.corrcoef(X, rowvar=False)


def stage_reliability(cfg: PipelineConfig, ws: Workspace) -> dict:
    data = load_inputs(cfg)
    groups = scale_groups(cfg, data)
    reports = []
    alphas = []
    for name, items in groups.items():
        block = data.scored.select(items).values
        if len(items) >= 2:
            r = rel.reliability_report(block, items, name)
            reports.append(r)
            alphas.append(r.alpha)
        else:
            reports.append(None)
            alphas.append(math.nan)
    all_items = [i for items in groups.values() for i in items]
    overall = rel.reliability_report(data.scored.select(all_items).values, all_items, "overall") if len(all_items) >= 2 else None
    table = scale_scores(cfg, data, groups)
    names = list(groups)
    descriptives = []
    for name in names:
        col = table[name]
        col = col[~np.isnan(col)]
        descriptives.append({"scale": name, "n": len(col), "mean": float(col.mean()), "sd": float(col.std(ddof=1)), "items": groups[name]})
    out = {
        "scales": [r.to_dict() if r else {"scale": n, "k": 1, "alpha": None} for r, n in zip(reports, names)],
        "overall": overall.to_dict() if overall else None,
        "scale_descriptives": descriptives,
    }
    dm = None
    if len(names) >= 2 and all(0 < a <= 1 for a in alphas):
        dm = rel.disattenuated_matrix(_scale_corr(table, names), alphas, names)
        ws.record(report.write_matrix(ws.path("disattenuated.csv"), names, dm.table(), "diagonal=alpha;lower=observed;upper=corrected"))
        out["scale_correlations"] = dm.to_dict()
    elif len(names) >= 2:
        out["scale_correlations"] = None
        out["flags"] = ["DISATTENUATION_SKIPPED: a scale has alpha outside (0, 1]"]
    ws.json("reliability.json", out)
    lines = ["scale  k  alpha  min_item_total"]
    for r, n in zip(reports, names):
        if r:
            lines.append(f"{n}  {r.k}  {r.alpha:.3f}  {np.nanmin(r.corrected_item_total):.3f}")
        else:
            lines.append(f"{n}  1  NA  NA")
    if overall:
        lines.append(f"overall  {overall.k}  {overall.alpha:.3f}")
    ws.text("reliability_summary.txt", lines)
    return out


def stage_validity(cfg: PipelineConfig, ws: Workspace) -> dict:
    data = load_inputs(cfg)
    run = run_efa(cfg, data)
    groups = scale_groups(cfg, data, run)
    names = list(groups)
    out: dict = {}
    idx = {item: i for i, item in enumerate(run.items)}
    ave_by_basis = {}
    for basis, L in (("pattern", run.solution.pattern), ("structure", run.solution.structure)):
        vals = []
        for name in names:
            j = run.names.index(name) if name in run.names else None
            rows = [idx[i] for i in groups[name] if i in idx]
            vals.append(val.ave(L[rows, j]) if j is not None and rows else math.nan)
        ave_by_basis[basis] = vals
    out["ave"] = ave_by_basis
    out["ave_basis"] = cfg.ave_basis
    table = scale_scores(cfg, data, groups)
    alphas = []
    for name in names:
        items = groups[name]
        alphas.append(rel.cronbach_alpha(data.scored.select(items).values) if len(items) >= 2 else math.nan)
    if len(names) >= 2 and all(0 < a <= 1 for a in alphas) and not any(math.isnan(a) for a in ave_by_basis[cfg.ave_basis]):
        fl = val.fornell_larcker(ave_by_basis[cfg.ave_basis], _scale_corr(table, names), alphas, names)
        out["discriminant_validity"] = fl.to_dict()
        ws.record(report.write_matrix(ws.path("fornell_larcker.csv"), names, fl.table(), "diagonal=AVE;lower=observed r^2;upper=corrected r^2"))
    else:
        out["discriminant_validity"] = None
    if cfg.criterion_subscale:
        crit_items = data.codebook.subscales().get(cfg.criterion_subscale)
        if not crit_items:
            raise ConfigError(f"criterion subscale {cfg.criterion_subscale!r} has no items")
        crit = ds.composite_score(data.scored, data.codebook, crit_items, "criterion", "sum")["criterion"]
        split = ds.quartile_classify(crit, data.scored.respondent_ids)
        kg = val.known_groups(table, split.labels, cfg.direction)
        out["criterion"] = {"items": crit_items, "q1": split.q1, "q3": split.q3, "flags": split.flags}
        out["known_groups"] = kg.to_dict()
    ws.json("validity.json", out)
    lines = [f"AVE ({cfg.ave_basis}): " + ", ".join(f"{n}={report.fmt(a, 3)}" for n, a in zip(names, ave_by_basis[cfg.ave_basis]))]
    if out["discriminant_validity"]:
        lines.append(f"observed failures: {out['discriminant_validity']['failures_observed'] or 'none'}")
        lines.append(f"corrected failures: {out['discriminant_validity']['failures_corrected'] or 'none'}")
    if "known_groups" in out:
        lines.append(f"criterion Q1={split.q1:g} Q3={split.q3:g}")
        for s in kg.scales:
            lines.append(f"{s.scale}: high {s.mean_high:.2f} vs low {s.mean_low:.2f}, t={s.t_test.statistic:.2f}, p={s.t_test.p_value:.4g} -> {s.verdict}")
    ws.text("validity_summary.txt", lines)
    return out


def _mds_solution(cfg: PipelineConfig, data: Loaded):
    items = efa_item_ids(cfg, data.codebook)
    complete, _ = ds.listwise(data.scored, items)
    corr = scr.correlation_matrix(complete, cfg.mds_corr)
    delta = mdsmod.corr_to_dissimilarity(corr, cfg.dissimilarity)
    fit = mdsmod.nonmetric_mds if cfg.mds_transform == "ordinal" else mdsmod.metric_mds
    sol = fit(delta, cfg.mds_dims, seed=cfg.effective_seed(), restarts=cfg.restarts, threads=cfg.threads)
    return delta, sol


def _cluster_k(cfg: PipelineConfig, data: Loaded, p: int) -> int:
    """Explicit ``cluster_k``, else the number of codebook subscales, else the Kaiser count."""
    if cfg.cluster_k is not None:
        k = cfg.cluster_k
    else:
        items = set(efa_item_ids(cfg, data.codebook))
        k = len({it.subscale for it in data.codebook.items if it.subscale and it.id in items})
        if k < 1:
            complete, _ = ds.listwise(data.scored, sorted(items, key=data.codebook.item_ids.index))
            k = max(1, efa.retention_advice(scr.correlation_matrix(complete).values).kaiser_count)
    if k > p:
        raise ConfigError(f"cluster_k {k} exceeds number of items {p}")
    return k


def _dendrogram(cfg: PipelineConfig, data: Loaded):
    delta, sol = _mds_solution(cfg, data)
    if cfg.cluster_source == "mds":
        dendro = clu.single_linkage(X=sol.configuration, labels=sol.item_ids)
    else:
        dendro = clu.single_linkage(D=delta.values, labels=delta.item_ids)
    return delta, sol, dendro


def stage_mds(cfg: PipelineConfig, ws: Workspace) -> dict:
    data = load_inputs(cfg)
    delta, sol, dendro = _dendrogram(cfg, data)
    k = _cluster_k(cfg, data, delta.p)
    labels = clu.cut(dendro, k)
    out = sol.to_dict()
    out["dissimilarity"] = {"source": delta.provenance, "transform": cfg.dissimilarity}
    if cfg.baseline_trials:
        base = mdsmod.random_stress_baseline(delta.p, sol.k, cfg.baseline_trials, cfg.effective_seed(), threads=cfg.threads)
        out["random_baseline"] = {**base.to_dict(), "verdict": base.verdict(sol.stress1)}
    ws.json("mds_solution.json", out)
    ws.record(
        report.write_csv(
            ws.path("mds_configuration.csv"),
            ["item", *[f"dim{j + 1}" for j in range(sol.k)], "cluster"],
            [[item, *sol.configuration[i], labels[i] + 1] for i, item in enumerate(sol.item_ids)],
        )
    )
    if sol.k >= 2:
        ws.record(report.mds_map_svg(ws.path("mds_map.svg"), sol.configuration, sol.item_ids, labels, f"{sol.transform} MDS, stress-1 {sol.stress1:.3f}"))
    lines = [
        f"{sol.transform} MDS, k={sol.k}, p={delta.p}",
        f"stress-1 {sol.stress1:.4f}, RSQ {report.fmt(sol.rsq, 4)}, iterations {sol.iterations}, best start {sol.best_start} of {sol.restarts_used}",
        f"flags: {sol.flags or 'none'}",
    ]
    if "random_baseline" in out:
        rb = out["random_baseline"]
        lines.append(f"random-data stress mean {rb['mean']:.4f} (5th pct {rb['p05']:.4f}) over {rb['trials']} trials -> {rb['verdict']}")
    ws.text("mds_summary.txt", lines)
    return {k_: v for k_, v in out.items() if k_ != "configuration"}


def stage_cluster(cfg: PipelineConfig, ws: Workspace) -> dict:
    data = load_inputs(cfg)
    delta, _, dendro = _dendrogram(cfg, data)
    k = _cluster_k(cfg, data, delta.p)
    labels = clu.cut(dendro, k)
    ws.json("dendrogram.json", {**dendro.to_dict(), "source": cfg.cluster_source, "k": k, "clusters": labels})
    ws.record(
        report.write_csv(ws.path("clusters.csv"), ["item", "cluster"], [[item, lab + 1] for item, lab in zip(dendro.labels, labels)]),
        report.dendrogram_svg(ws.path("dendrogram.svg"), dendro),
    )
    groups: dict[int, list[str]] = {}
    for item, lab in zip(dendro.labels, labels):
        groups.setdefault(lab + 1, []).append(item)
    ws.text("cluster_summary.txt", [f"single linkage on {cfg.cluster_source}, k={k}"] + [f"cluster {c}: {', '.join(v)}" for c, v in groups.items()])
    return {"k": k, "source": cfg.cluster_source, "clusters": {str(c): v for c, v in groups.items()}, "heights": dendro.heights}


def _group_rows(data: Loaded, column: str) -> dict[str, np.ndarray]:
    if column not in data.scored.metadata:
        raise ConfigError(f"group column {column!r} not found")
    values = data.scored.metadata[column]
    levels = sorted({v for v in values if v not in ("", "NA")})
    return {lvl: np.array([i for i, v in enumerate(values) if v == lvl]) for lvl in levels}


def stage_compare(cfg: PipelineConfig, ws: Workspace) -> dict:
    data = load_inputs(cfg)
    column = _need(cfg.group_column, "group_column")
    groups = scale_groups(cfg, data)
    table = scale_scores(cfg, data, groups)
    rows = _group_rows(data, column)
    if len(rows) < 2:
        raise LatentKitError("INSUFFICIENT_DATA", f"group column {column!r} has fewer than 2 levels")
    levels = list(rows)
    results = []
    posthoc_rows = []
    for name in table.names:
        col = table[name]
        samples = [col[idx] for idx in rows.values()]
        entry = {
            "scale": name,
            "groups": [
                {"group": lvl, "n": int((~np.isnan(s)).sum()), "mean": float(np.nanmean(s)), "sd": float(np.nanstd(s, ddof=1)), "ci95": inf.ci_mean(s)}
                for lvl, s in zip(levels, samples)
            ],
            "levene": inf.levene(samples).to_dict(),
        }
        if len(levels) == 2:
            entry["t_test"] = inf.t_test(*samples).to_dict()
            entry["welch"] = inf.t_test(*samples, variant="welch").to_dict()
            entry["mann_whitney"] = inf.mann_whitney(*samples).to_dict()
        else:
            entry["anova"] = inf.one_way_anova(samples).to_dict()
            entry["kruskal_wallis"] = inf.kruskal_wallis(samples).to_dict()
            for method in ("lsd", "bonferroni"):
                for pc in inf.posthoc(samples, method, levels):
                    posthoc_rows.append([name, method, pc.group_a, pc.group_b, pc.mean_difference, pc.se, pc.t, pc.df, pc.p_value, pc.p_adjusted])
        results.append(entry)
    out = {"group_column": column, "levels": levels, "posthoc_method": cfg.posthoc, "scales": results}
    ws.json("compare.json", out)
    if posthoc_rows:
        ws.record(report.write_csv(ws.path("posthoc.csv"), ["scale", "method", "group_a", "group_b", "mean_difference", "se", "t", "df", "p", "p_adjusted"], posthoc_rows))
    lines = [f"grouping: {column} ({', '.join(levels)})"]
    for e in results:
        test = e.get("t_test") or e.get("anova")
        lines.append(f"{e['scale']}: statistic {test['statistic']:.3f}, p = {test['p_value']:.4g}")
    ws.text("compare_summary.txt", lines)
    return out


def stage_regress(cfg: PipelineConfig, ws: Workspace) -> dict:
    data = load_inputs(cfg)
    outcome = _need(cfg.regress_outcome, "regress_outcome")
    groups = scale_groups(cfg, data)
    table = scale_scores(cfg, data, groups)
    subs = data.codebook.subscales()
    if outcome in table.columns:
        y = table[outcome]
    elif outcome in subs:
        y = ds.composite_score(data.scored, data.codebook, subs[outcome], outcome, "sum")[outcome]
    elif outcome in data.scored.metadata:
        y = np.array([float(v) if v not in ("", "NA") else math.nan for v in data.scored.metadata[outcome]])
    else:
        raise ConfigError(f"regression outcome {outcome!r} is not a scale, subscale or column")
    predictors = cfg.regress_predictors or [n for n in table.names if n != "overall" and n != outcome]
    unknown = [p for p in predictors if p not in table.columns]
    if unknown:
        raise ConfigError(f"unknown predictors: {unknown}")
    X = np.column_stack([table[p] for p in predictors])
    res = inf.ols(y, X, predictors)
    out = {"outcome": outcome, "predictors": predictors, **res.to_dict()}
    ws.json("regression.json", out)
    lines = [f"outcome {outcome}; n={res.n}; R2={res.r2:.3f}; adjusted R2={res.adj_r2:.3f}; F{res.df}={res.F:.2f}, p={res.p_value:.4g}"]
    lines += [f"{c.name}: B={c.b:.3f} SE={c.se:.3f} beta={report.fmt(c.beta, 3)} t={c.t:.2f} p={c.p_value:.4g}" for c in res.coefficients]
    ws.text("regression_summary.txt", lines)
    return out


RUNNERS: dict[str, Callable[[PipelineConfig, Workspace], dict]] = {
    "ingest": stage_ingest,
    "screen": stage_screen,
    "efa": stage_efa,
    "reliability": stage_reliability,
    "validity": stage_validity,
    "mds": stage_mds,
    "cluster": stage_cluster,
    "compare": stage_compare,
    "regress": stage_regress,
}

# consolidated report section titles, one per stage
SECTIONS = {
    "ingest": "sample_flow",
    "screen": "item_screening_and_factorability",
    "efa": "factor_extraction_and_rotation",
    "reliability": "reliability_and_scale_correlations",
    "validity": "construct_validity",
    "mds": "multidimensional_scaling",
    "cluster": "item_clustering",
    "compare": "group_comparisons",
    "regress": "regression",
}

# stages that need optional configuration; the pipeline skips them when absent
OPTIONAL = {"compare": "group_column", "regress": "regress_outcome"}


def run_stage(name: str, cfg: PipelineConfig, ws: Workspace) -> dict:
    cfg.validate()
    try:
        result = RUNNERS[name](cfg, ws)
    except LatentKitError:
        ws.stages[name] = "failed"
        ws.flush()
        raise
    ws.stages[name] = "ok"
    ws.flush()
    return result


def run_pipeline(cfg: PipelineConfig, ws: Workspace) -> dict:
    cfg.validate()
    sections: dict = {}
    for name in STAGES:
        if name not in cfg.stages:
            continue
        needed = OPTIONAL.get(name)
        if needed and getattr(cfg, needed) is None:
            ws.stages[name] = f"skipped (no {needed})"
            continue
        sections[SECTIONS[name]] = run_stage(name, cfg, ws)
    ws.json("report.json", {"config": dataclasses.asdict(cfg), "seed": cfg.effective_seed(), "sections": sections})
    return sections


def run_synth(out: str, spec: synth.FactorModelSpec, groups: int = 0, subscale_names=None) -> dict:
    ws = Workspace(out)
    m = synth.gen_likert(spec)
    if groups:
        m.metadata["group"] = [f"G{i % groups + 1}" for i in range(m.n)]
    cb = synth.codebook_for(spec, subscale_names)
    path = ws.path("responses.csv")
    m.to_csv(path, id_column="id")
    ws.record(path)
    ws.json("codebook.json", cb.to_dict())
    ws.json("synth_spec.json", spec.to_dict())
    ws.stages["synth"] = "ok"
    ws.flush()
    return {"n": m.n, "p": spec.p, "m": spec.loadings.shape[1], "seed": spec.seed}
