"""
Survey ingestion and scoring.

Responses are held as a float matrix with ``NaN`` standing in for a missing
answer. Everything downstream (screening, EFA, reliability) consumes that
matrix, usually after :func:`reverse_code` and :func:`listwise`.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, LatentKitError

MISSING = math.nan
MISSING_TOKENS = frozenset({"", "NA"})


@dataclass(frozen=True)
class ItemSpec:
    id: str
    text: str = ""
    reversed: bool = False
    subscale: str | None = None
    marker: bool = False


@dataclass(frozen=True)
class Codebook:
    """Ordered item metadata plus the response-scale bounds."""

    items: tuple[ItemSpec, ...]
    scale_min: int = 1
    scale_max: int = 5
    declared_subscales: tuple[str, ...] = ()

    def __post_init__(self):
        ids = [it.id for it in self.items]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ConfigError(f"duplicate item ids: {dupes}")
        if not self.scale_min < self.scale_max:
            raise ConfigError("scale_min must be below scale_max")
        used = {it.subscale for it in self.items if it.subscale}
        orphans = [s for s in self.declared_subscales if s not in used]
        if orphans:
            raise ConfigError(f"subscales without items: {orphans}")

    @property
    def item_ids(self) -> list[str]:
        return [it.id for it in self.items]

    def __getitem__(self, item_id: str) -> ItemSpec:
        for it in self.items:
            if it.id == item_id:
                return it
        raise KeyError(item_id)

    def subscales(self) -> dict[str, list[str]]:
        """Subscale name -> member item ids, in order of first appearance."""
        out: dict[str, list[str]] = {name: [] for name in self.declared_subscales}
        for it in self.items:
            if it.subscale:
                out.setdefault(it.subscale, []).append(it.id)
        return out

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Codebook":
        try:
            items = tuple(
                ItemSpec(
                    id=str(d["id"]),
                    text=d.get("text", ""),
                    reversed=bool(d.get("reversed", False)),
                    subscale=d.get("subscale"),
                    marker=bool(d.get("marker", False)),
                )
                for d in doc["items"]
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed codebook: {exc}") from exc
        return cls(
            items=items,
            scale_min=int(doc.get("scale_min", 1)),
            scale_max=int(doc.get("scale_max", 5)),
            declared_subscales=tuple(doc.get("subscales", ())),
        )

    @classmethod
    def load(cls, path: str | Path) -> "Codebook":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        doc = {
            "scale_min": self.scale_min,
            "scale_max": self.scale_max,
            "items": [
                {
                    "id": it.id,
                    "text": it.text,
                    "reversed": it.reversed,
                    "subscale": it.subscale,
                    "marker": it.marker,
                }
                for it in self.items
            ],
        }
        if self.declared_subscales:
            doc["subscales"] = list(self.declared_subscales)
        return doc


@dataclass
class ResponseMatrix:
    """n respondents x p items; ``NaN`` marks a missing answer."""

    respondent_ids: list[str]
    item_ids: list[str]
    values: np.ndarray
    metadata: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.respondent_ids), len(self.item_ids)):
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"{len(self.respondent_ids)} ids x {len(self.item_ids)} items"
            )

    @property
    def n(self) -> int:
        return len(self.respondent_ids)

    def column(self, item_id: str) -> np.ndarray:
        return self.values[:, self.item_ids.index(item_id)]

    def select(self, items: Sequence[str]) -> "ResponseMatrix":
        missing = [i for i in items if i not in self.item_ids]
        if missing:
            raise ConfigError(f"unknown items: {missing}")
        idx = [self.item_ids.index(i) for i in items]
        return ResponseMatrix(list(self.respondent_ids), list(items), self.values[:, idx], self.metadata)

    def take(self, rows: np.ndarray | Sequence[int]) -> "ResponseMatrix":
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        meta = {k: [v[i] for i in rows] for k, v in self.metadata.items()}
        return ResponseMatrix([self.respondent_ids[i] for i in rows], list(self.item_ids), self.values[rows], meta)

    def to_csv(self, path: str | Path, id_column: str = "id") -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            meta_cols = [c for c in self.metadata if c != id_column]
            writer.writerow([id_column, *meta_cols, *self.item_ids])
            for r, rid in enumerate(self.respondent_ids):
                cells = ["NA" if math.isnan(v) else f"{v:g}" for v in self.values[r]]
                writer.writerow([rid, *(self.metadata[c][r] for c in meta_cols), *cells])


@dataclass
class IngestReport:
    received: int = 0
    duplicates: int = 0
    malformed: int = 0
    disqualified: int = 0
    retained: int = 0
    row_errors: list[dict] = field(default_factory=list)
    cell_errors: list[dict] = field(default_factory=list)
    disqualified_ids: list[str] = field(default_factory=list)

    @property
    def unique(self) -> int:
        return self.received - self.duplicates

    def to_dict(self) -> dict:
        return {
            "received": self.received,
            "duplicates": self.duplicates,
            "unique": self.unique,
            "malformed": self.malformed,
            "disqualified": self.disqualified,
            "retained": self.retained,
            "row_errors": self.row_errors,
            "cell_errors": self.cell_errors,
            "disqualified_ids": self.disqualified_ids,
        }


@dataclass(frozen=True)
class Disqualifier:
    """Row filter: a row fails if ``column`` is outside ``allowed`` or inside
    ``excluded``, or if more than ``max_missing`` items are unanswered."""

    column: str | None = None
    allowed: frozenset[str] | None = None
    excluded: frozenset[str] | None = None
    max_missing: int | None = None

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Disqualifier":
        unknown = set(doc) - {"column", "allowed", "excluded", "max_missing"}
        if unknown:
            raise ConfigError(f"unknown disqualifier keys: {sorted(unknown)}")
        allowed = doc.get("allowed")
        excluded = doc.get("excluded")
        if doc.get("column") is None and doc.get("max_missing") is None:
            raise ConfigError("disqualifier needs a column or max_missing")
        return cls(
            column=doc.get("column"),
            allowed=frozenset(map(str, allowed)) if allowed is not None else None,
            excluded=frozenset(map(str, excluded)) if excluded is not None else None,
            max_missing=doc.get("max_missing"),
        )

    def rejects(self, row: Mapping[str, str], n_missing: int) -> bool:
        if self.max_missing is not None and n_missing > self.max_missing:
            return True
        if self.column is None:
            return False
        value = (row.get(self.column) or "").strip()
        if self.allowed is not None and value not in self.allowed:
            return True
        return self.excluded is not None and value in self.excluded


def _parse_disqualifiers(disqualify) -> list[Disqualifier]:
    if disqualify is None:
        return []
    if isinstance(disqualify, Mapping):
        disqualify = disqualify.get("rules", [])
    return [d if isinstance(d, Disqualifier) else Disqualifier.from_dict(d) for d in disqualify]


def read_rows(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8-sig") as fh:
        return list(csv.DictReader(fh))


def ingest(
    rows: Iterable[Mapping[str, str]],
    codebook: Codebook,
    dedup_key: str,
    disqualify=None,
    id_column: str | None = None,
) -> tuple[ResponseMatrix, IngestReport]:
    """
    Turn raw CSV records into a :class:`ResponseMatrix`.

    Duplicates (same ``dedup_key``) keep the first occurrence; disqualification
    rules run on the surviving unique rows. Malformed rows and out-of-range or
    non-integer cells are reported, not fatal: bad cells become missing, so the
    row drops out of any later listwise analysis.

    Parameters
    ----------
    rows : iterable of mappings
        Records as produced by :class:`csv.DictReader`.
    codebook : Codebook
    dedup_key : str
        Column identifying a submitter (e.g. an email address).
    disqualify : list of dict or Disqualifier, optional
        ``{"column": ..., "allowed": [...]}``, ``{"column": ..., "excluded": [...]}``
        or ``{"max_missing": k}`` rules; a row failing any rule is dropped.
    id_column : str, optional
        Column used as respondent id; defaults to ``dedup_key``.

    Returns
    -------
    (ResponseMatrix, IngestReport)
    """
    rows = list(rows)
    if not rows:
        raise LatentKitError("EMPTY_SOURCE", "no records to ingest")
    if dedup_key not in rows[0]:
        raise ConfigError(f"dedup key column {dedup_key!r} not found")
    id_column = id_column or dedup_key
    item_ids = codebook.item_ids
    absent = [i for i in item_ids if i not in rows[0]]
    if absent:
        raise ConfigError(f"item columns missing from input: {absent}")
    rules = _parse_disqualifiers(disqualify)
    lo, hi = codebook.scale_min, codebook.scale_max
    meta_cols = [c for c in rows[0] if c not in item_ids and c is not None]

    report = IngestReport(received=len(rows))
    seen: set[str] = set()
    ids: list[str] = []
    values: list[list[float]] = []
    meta: dict[str, list[str]] = {c: [] for c in meta_cols}

    for line, row in enumerate(rows, start=2):  # line 1 is the header
        key = (row.get(dedup_key) or "").strip()
        if key and key in seen:
            report.duplicates += 1
            continue
        if key:
            seen.add(key)
        if None in row or any(v is None for v in row.values()):
            report.malformed += 1
            report.row_errors.append({"line": line, "error": "MALFORMED_ROW"})
            continue

        rid = (row.get(id_column) or "").strip() or f"row{line}"
        parsed: list[float] = []
        for item in item_ids:
            raw = row[item].strip()
            if raw in MISSING_TOKENS:
                parsed.append(MISSING)
                continue
            try:
                v = float(raw)
            except ValueError:
                report.cell_errors.append({"line": line, "id": rid, "item": item, "value": raw, "error": "NOT_NUMERIC"})
                parsed.append(MISSING)
                continue
            if v != int(v) or not lo <= v <= hi:
                report.cell_errors.append({"line": line, "id": rid, "item": item, "value": raw, "error": "OUT_OF_RANGE"})
                parsed.append(MISSING)
                continue
            parsed.append(v)

        n_missing = sum(math.isnan(v) for v in parsed)
        if any(rule.rejects(row, n_missing) for rule in rules):
            report.disqualified += 1
            report.disqualified_ids.append(rid)
            continue
        ids.append(rid)
        values.append(parsed)
        for c in meta_cols:
            meta[c].append(row[c])

    report.retained = len(ids)
    matrix = ResponseMatrix(ids, list(item_ids), np.array(values, dtype=float).reshape(len(ids), len(item_ids)), meta)
    return matrix, report


def reverse_code(m: ResponseMatrix, cb: Codebook) -> ResponseMatrix:
    """Reflect reversed items: v -> scale_min + scale_max - v. NaN stays NaN."""
    out = m.values.copy()
    flip = cb.scale_min + cb.scale_max
    for j, item in enumerate(m.item_ids):
        try:
            spec = cb[item]
        except KeyError:
            continue
        if spec.reversed:
            out[:, j] = flip - out[:, j]
    return ResponseMatrix(list(m.respondent_ids), list(m.item_ids), out, m.metadata)


def listwise(m: ResponseMatrix, items: Sequence[str] | None = None) -> tuple[ResponseMatrix, int]:
    """Drop rows with any missing value among ``items``; return (matrix, n_removed)."""
    sub = m if items is None else m.select(items)
    keep = ~np.isnan(sub.values).any(axis=1)
    if not keep.any():
        raise LatentKitError("NO_COMPLETE_CASES", "every row has a missing value")
    return sub.take(keep), int((~keep).sum())


@dataclass
class ScoreTable:
    respondent_ids: list[str]
    columns: dict[str, np.ndarray]
    aggregation: str
    members: dict[str, list[str]] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def to_dict(self) -> dict:
        return {
            "aggregation": self.aggregation,
            "members": self.members,
            "flags": self.flags,
            "respondent_ids": self.respondent_ids,
            "scores": {k: [None if math.isnan(x) else float(x) for x in v] for k, v in self.columns.items()},
        }


def score_groups(m: ResponseMatrix, groups: Mapping[str, Sequence[str]], agg: str = "mean") -> ScoreTable:
    """Equal-weight score per group of items; any missing member -> missing score."""
    if agg not in ("mean", "sum"):
        raise ConfigError(f"aggregation must be 'mean' or 'sum', got {agg!r}")
    cols: dict[str, np.ndarray] = {}
    for name, items in groups.items():
        if not items:
            raise ConfigError(f"scale {name!r} has no items")
        block = m.select(list(items)).values
        # NaN propagates through sum/mean, which is the no-proration policy
        cols[name] = block.mean(axis=1) if agg == "mean" else block.sum(axis=1)
    return ScoreTable(list(m.respondent_ids), cols, agg, {k: list(v) for k, v in groups.items()})


def subscale_scores(m: ResponseMatrix, cb: Codebook, agg: str = "mean") -> ScoreTable:
    groups = cb.subscales()
    if not groups:
        raise ConfigError("codebook defines no subscales")
    return score_groups(m, groups, agg)


def composite_score(
    m: ResponseMatrix, cb: Codebook, item_set: Sequence[str], name: str = "composite", agg: str = "sum"
) -> ScoreTable:
    unknown = [i for i in item_set if i not in cb.item_ids]
    if unknown:
        raise ConfigError(f"items not in codebook: {unknown}")
    return score_groups(m, {name: list(item_set)}, agg)


class Group(str, Enum):
    LOW = "LOW"
    MID = "MID"
    HIGH = "HIGH"


@dataclass(frozen=True)
class GroupLabel:
    respondent_id: str
    group: Group


@dataclass
class QuartileSplit:
    labels: list[GroupLabel]
    q1: float
    q3: float
    low_ids: list[str]
    high_ids: list[str]
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "q1": self.q1,
            "q3": self.q3,
            "flags": self.flags,
            "counts": {g.value: sum(lab.group is g for lab in self.labels) for g in Group},
            "labels": {lab.respondent_id: lab.group.value for lab in self.labels},
        }


def percentile(sorted_values: np.ndarray, q: float) -> float:
    """Linear interpolation at 1-based position 1 + (n - 1) q."""
    pos = (len(sorted_values) - 1) * q
    lo = math.floor(pos)
    hi = min(lo + 1, len(sorted_values) - 1)
    return float(sorted_values[lo] + (pos - lo) * (sorted_values[hi] - sorted_values[lo]))


def quartile_classify(scores: Sequence[float], respondent_ids: Sequence[str] | None = None) -> QuartileSplit:
    """
    Label respondents LOW (score <= Q1), HIGH (score >= Q3) or MID.

    Missing scores get no label. When Q1 == Q3 some respondents satisfy both
    conditions; they are labelled LOW, listed in both ``low_ids`` and
    ``high_ids``, and the split is flagged ``DEGENERATE_SPLIT``.
    """
    scores = np.asarray(scores, dtype=float)
    if respondent_ids is None:
        respondent_ids = [str(i) for i in range(len(scores))]
    ok = ~np.isnan(scores)
    if ok.sum() < 4:
        raise LatentKitError("INSUFFICIENT_DATA", "quartile split needs at least 4 scores")
    s = np.sort(scores[ok])
    q1, q3 = percentile(s, 0.25), percentile(s, 0.75)
    labels, low_ids, high_ids = [], [], []
    for rid, x in zip(respondent_ids, scores):
        if math.isnan(x):
            continue
        is_low, is_high = x <= q1, x >= q3
        if is_low:
            low_ids.append(rid)
        if is_high:
            high_ids.append(rid)
        group = Group.LOW if is_low else Group.HIGH if is_high else Group.MID
        labels.append(GroupLabel(rid, group))
    flags = ["DEGENERATE_SPLIT"] if q1 == q3 else []
    return QuartileSplit(labels, q1, q3, low_ids, high_ids, flags)
