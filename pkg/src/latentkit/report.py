"""JSON/CSV writers and SVG plots for stage outputs."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SVG_RC = {"svg.hashsalt": "latentkit", "svg.fonttype": "none"}


def plain(obj):
    """Recursively convert numpy types and NaN into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return None if math.isnan(x) or math.isinf(x) else x
    return obj


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(plain(obj), indent=2, allow_nan=False) + "\n", encoding="utf-8")
    return path


def fmt(x, digits: int = 6) -> str:
    if x is None:
        return "NA"
    x = float(x)
    if math.isnan(x):
        return "NA"
    return f"{x:.{digits}f}"


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) if isinstance(v, (float, np.floating)) or v is None else v for v in row])
    return path


def write_matrix(path: Path, names: Sequence[str], M: np.ndarray, legend: str | None = None) -> Path:
    """Square matrix with a row-label column; an optional ``role`` legend row comes last."""
    rows = [[name, *M[i]] for i, name in enumerate(names)]
    if legend:
        rows.append(["#layout", legend, *[""] * (len(names) - 1)])
    return write_csv(path, ["", *names], rows)


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save_svg(fig, path: Path) -> Path:
    plt = _pyplot()
    with plt.rc_context(SVG_RC):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def scree_svg(path: Path, eigen_full: Sequence[float], eigen_reduced: Sequence[float]) -> Path:
    plt = _pyplot()
    idx = np.arange(1, len(eigen_full) + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(idx, eigen_full, "o-", label="full correlation matrix")
    ax.plot(idx, eigen_reduced, "s--", label="reduced correlation matrix")
    ax.axhline(1.0, color="grey", lw=0.8)
    ax.set_xlabel("factor")
    ax.set_ylabel("eigenvalue")
    ax.legend()
    return _save_svg(fig, path)


def mds_map_svg(path: Path, X: np.ndarray, labels: Sequence[str], clusters: Sequence[int] | None = None, title: str = "") -> Path:
    """2-D map with item labels; clusters are outlined by their padded convex hull."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 6))
    ax.scatter(X[:, 0], X[:, 1], s=14, color="black")
    for (x, y), lab in zip(X[:, :2], labels):
        ax.annotate(lab, (x, y), textcoords="offset points", xytext=(3, 3), fontsize=7)
    if clusters is not None:
        span = float(np.ptp(X[:, :2], axis=0).max()) or 1.0
        pad = 0.04 * span
        for c in sorted(set(clusters)):
            pts = X[np.asarray(clusters) == c, :2]
            ax.plot(*_loop(pts, pad).T, lw=0.9)
    ax.set_xlabel("dimension 1")
    ax.set_ylabel("dimension 2")
    ax.set_aspect("equal", adjustable="datalim")
    if title:
        ax.set_title(title)
    return _save_svg(fig, path)


def _loop(pts: np.ndarray, pad: float) -> np.ndarray:
    """Closed outline around ``pts``: circles padded around each hull vertex."""
    theta = np.linspace(0, 2 * np.pi, 24, endpoint=False)
    ring = np.column_stack([np.cos(theta), np.sin(theta)]) * pad
    cloud = (pts[:, None, :] + ring[None, :, :]).reshape(-1, 2)
    from scipy.spatial import ConvexHull

    hull = ConvexHull(cloud)
    loop = cloud[hull.vertices]
    return np.vstack([loop, loop[:1]])


def dendrogram_svg(path: Path, dendro) -> Path:
    from scipy.cluster.hierarchy import dendrogram as draw

    plt = _pyplot()
    Z = np.array([[mg.a, mg.b, mg.height, mg.size] for mg in dendro.merges], dtype=float)
    fig, ax = plt.subplots(figsize=(8, 4))
    draw(Z, labels=list(dendro.labels), ax=ax, orientation="top", color_threshold=0)
    ax.set_ylabel("merge height")
    return _save_svg(fig, path)
