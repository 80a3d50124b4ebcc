"""
Command-line entry point.

Exit status: 0 on success, 1 for data or analysis errors, 2 for
configuration errors. Failures leave ``error.json`` next to whatever
outputs were already written, and ``manifest.json`` lists those files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from typing import Sequence

from . import pipeline as pl
from . import synth
from .errors import ConfigError, LatentKitError

# flag name -> PipelineConfig field (when they differ)
FLAG_FIELDS = {
    "dims": "mds_dims",
    "transform": "mds_transform",
    "k": "cluster_k",
    "group": "group_column",
    "outcome": "regress_outcome",
    "predictors": "regress_predictors",
    "criterion": "criterion_subscale",
    "items": "efa_items",
    "trials": "baseline_trials",
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with PipelineConfig fields; flags override it")
    p.add_argument("--responses", help="response CSV")
    p.add_argument("--codebook", help="codebook JSON")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker threads for MDS restarts (results do not depend on it)")
    p.add_argument("--dedup-key", dest="dedup_key")
    p.add_argument("--id-column", dest="id_column")
    p.add_argument("--items", nargs="+", help="items entering factor analysis, MDS and clustering")
    p.add_argument("--criterion", help="codebook subscale used as the known-groups criterion")


def _add_efa(p: argparse.ArgumentParser) -> None:
    p.add_argument("--factors", help="number of factors, or 'auto' (min of Kaiser count and --max-factors)")
    p.add_argument("--max-factors", dest="max_factors", type=int)
    p.add_argument("--rotation", choices=["promax", "varimax", "none"])
    p.add_argument("--kappa", type=float)
    p.add_argument("--threshold", type=float, help="salient loading threshold")
    p.add_argument("--scales", choices=["efa", "codebook"], help="score scales from factor assignment or codebook subscales")


def _add_mds(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dims", type=int)
    p.add_argument("--transform", choices=["ordinal", "interval"])
    p.add_argument("--restarts", type=int)
    p.add_argument("--trials", type=int, help="random-data baseline trials (0 disables)")
    p.add_argument("--dissimilarity", choices=["linear", "sqrt"])
    p.add_argument("--k", type=int, help="number of clusters to cut")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latentkit", description="Psychometric scale analysis pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    adders = {
        "ingest": [],
        "screen": [],
        "efa": [_add_efa],
        "reliability": [_add_efa],
        "validity": [_add_efa],
        "mds": [_add_mds],
        "cluster": [_add_mds],
        "compare": [_add_efa],
        "regress": [_add_efa],
        "pipeline": [_add_efa, _add_mds],
    }
    helps = {
        "ingest": "read, de-duplicate and disqualify responses",
        "screen": "item descriptives, correlations and factorability",
        "efa": "principal axis factoring, rotation and item assignment",
        "reliability": "alpha per scale and disattenuated scale correlations",
        "validity": "AVE, Fornell-Larcker and known-groups validity",
        "mds": "multidimensional scaling of items with a random-stress baseline",
        "cluster": "single-linkage clustering of items",
        "compare": "group comparisons of scale scores",
        "regress": "OLS regression of one scale on others",
        "pipeline": "run every stage in order",
    }
    for name, extra in adders.items():
        p = sub.add_parser(name, help=helps[name])
        _add_common(p)
        for add in extra:
            add(p)
        if name == "validity":
            p.add_argument("--direction", choices=["HIGH>LOW", "HIGH<LOW"])
            p.add_argument("--ave-basis", dest="ave_basis", choices=["pattern", "structure"])
            p.add_argument("--table", help="fixed-input mode: CSV with alphas on the diagonal, observed r below")
            p.add_argument("--ave", nargs="+", type=float, help="AVE per scale for fixed-input mode")
        if name in ("compare", "pipeline"):
            p.add_argument("--group", help="grouping column for comparisons")
        if name in ("regress", "pipeline"):
            p.add_argument("--outcome")
            p.add_argument("--predictors", nargs="+")
        if name == "cluster":
            p.add_argument("--source", dest="cluster_source", choices=["mds", "dissimilarity"])
    s = sub.add_parser("synth", help="generate Likert data from a common-factor model")
    s.add_argument("--out", required=True)
    s.add_argument("--spec", help="factor model JSON (loadings, phi, n, ...)")
    s.add_argument("--p", type=int, default=25)
    s.add_argument("--m", type=int, default=5)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--low", type=float, default=0.6)
    s.add_argument("--high", type=float, default=0.8)
    s.add_argument("--phi", type=float, default=0.3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--groups", type=int, default=0, help="add a 'group' column cycling over this many levels")
    return parser


def make_config(args: argparse.Namespace) -> pl.PipelineConfig:
    doc: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    fields = {f.name for f in dataclasses.fields(pl.PipelineConfig)}
    for key, value in vars(args).items():
        if key in ("command", "config", "table", "ave") or value is None:
            continue
        name = FLAG_FIELDS.get(key, key)
        if name in fields:
            doc[name] = value
    if args.command != "pipeline":
        doc["stages"] = [args.command]
    cfg = pl.PipelineConfig.from_dict(doc)
    cfg.validate()
    return cfg


def _fixed_validity(args, ws: pl.Workspace) -> dict:
    """Fornell-Larcker check on supplied alphas, observed correlations and AVEs."""
    import numpy as np

    from . import reliability as rel
    from . import report
    from . import validity as val
    from .dataset import read_rows

    rows = read_rows(args.table)
    names = [r[""] for r in rows if r.get("") and not r[""].startswith("#")]
    if not names:
        raise ConfigError("table needs a first column of scale names")
    M = np.array([[float(r[n]) if r[n] not in ("", "NA") else np.nan for n in names] for r in rows if r[""] in names])
    R, alphas = rel.from_table(M)
    if not args.ave or len(args.ave) != len(names):
        raise ConfigError(f"--ave needs {len(names)} values")
    dm = rel.disattenuated_matrix(R, alphas, names)
    fl = val.fornell_larcker(args.ave, R, alphas, names)
    ws.record(
        report.write_matrix(ws.path("disattenuated.csv"), names, dm.table(), "diagonal=alpha;lower=observed;upper=corrected"),
        report.write_matrix(ws.path("fornell_larcker.csv"), names, fl.table(), "diagonal=AVE;lower=observed r^2;upper=corrected r^2"),
    )
    out = {"scale_correlations": dm.to_dict(), "discriminant_validity": fl.to_dict()}
    ws.json("validity.json", out)
    ws.text(
        "validity_summary.txt",
        [f"corrected failures: {fl.failures('corrected') or 'none'}", f"observed failures: {fl.failures('observed') or 'none'}"],
    )
    ws.stages["validity"] = "ok"
    ws.flush()
    return out


def _execute(args) -> None:
    if args.command == "synth":
        spec = synth.FactorModelSpec.load(args.spec) if args.spec else synth.simple_structure(
            args.p, args.m, args.low, args.high, args.phi, args.n, args.seed
        )
        info = pl.run_synth(args.out, spec, args.groups)
        print(json.dumps(info))
        return
    cfg = make_config(args)
    ws = pl.Workspace(cfg.out)
    try:
        if args.command == "validity" and getattr(args, "table", None):
            _fixed_validity(args, ws)
        elif args.command == "pipeline":
            pl.run_pipeline(cfg, ws)
        else:
            pl.run_stage(args.command, cfg, ws)
    except LatentKitError as exc:
        ws.json("error.json", exc.to_dict())
        raise
    print(f"wrote {len(ws.files)} files to {ws.root}")


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _execute(args)
    except LatentKitError as exc:
        print(f"error [{exc.code}]: {exc.message}", file=sys.stderr)
        _write_error_fallback(args, exc)
        return exc.exit_code
    return 0


def _write_error_fallback(args, exc: LatentKitError) -> None:
    """Config errors raised before the workspace exists still leave error.json."""
    out = getattr(args, "out", None)
    if out is None and getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                out = json.load(fh).get("out")
        except (OSError, json.JSONDecodeError, AttributeError):
            out = None
    if out is None:
        return
    from pathlib import Path

    from .report import write_json

    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    if not (path / "error.json").exists():
        write_json(path / "error.json", exc.to_dict())


if __name__ == "__main__":
    sys.exit(main())
