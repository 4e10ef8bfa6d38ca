"""Angular error metrics, corpus summary statistics, and algorithm ranking.

Recovery error is the angle between the estimated and reference illuminant
RGB vectors (intensity-blind).  Reproduction error is the angle between the
channel-wise ratio reference/estimate and the neutral (1, 1, 1) direction,
i.e. how far from white a white surface lands after correcting with the
estimate.  Both share one angle kernel based on atan2(|u x v|, u.v), which is
exact at zero for parallel inputs and equivalent to the arccos form elsewhere.

Quantiles interpolate linearly between order statistics at position (n-1)*q;
that convention is pinned so summaries are reproducible bit for bit.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ._util import atomic_write_text, fmt9

__all__ = [
    "ErrorSummary",
    "RankRow",
    "RankingTable",
    "STAT_KEYS",
    "format_ranking_text",
    "rank",
    "recovery_error",
    "reproduction_error",
    "summarize",
    "summary_stat",
    "write_ranking_csv",
]

STAT_KEYS = ("mean", "median", "trimean", "q95", "best25", "worst25")


def _as_vec3(v, what: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.shape != (3,):
        raise ValueError(f"{what} must be an RGB triple")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} must be finite")
    return arr


def _angle_degrees(u: np.ndarray, v: np.ndarray) -> float:
    # atan2 formulation: exactly 0 for identical/parallel inputs and well
    # conditioned near 0 and 180 where arccos of a rounded cosine is not.
    cross = np.cross(u, v)
    return math.degrees(math.atan2(float(np.linalg.norm(cross)), float(np.dot(u, v))))


def recovery_error(e, g) -> float:
    """Angle in degrees between estimate and reference directions."""
    e = _as_vec3(e, "estimate")
    g = _as_vec3(g, "reference")
    if not e.any() or not g.any():
        raise ValueError("zero vector has no direction")
    return _angle_degrees(e, g)


def reproduction_error(e, g) -> float:
    """Angle in degrees between the ratio g/e and the neutral direction."""
    e = _as_vec3(e, "estimate")
    g = _as_vec3(g, "reference")
    if np.any(e == 0.0):
        raise ValueError("division by zero channel in estimate")
    if np.any(e < 0.0):
        raise ValueError("estimate channels must be positive")
    r = g / e
    if not r.any():
        raise ValueError("zero vector has no direction")
    return _angle_degrees(r, np.ones(3))


@dataclass(frozen=True)
class ErrorSummary:
    """Summary statistics (degrees) over a corpus of angular errors."""

    mean: float
    median: float
    trimean: float
    q95: float
    best25_mean: float
    worst25_mean: float
    count: int


def summarize(errors: Sequence[float]) -> ErrorSummary:
    """Mean/median/trimean/95%-quantile plus best-25% and worst-25% means."""
    arr = np.asarray(errors, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("need a nonempty 1-D list of errors")
    if not np.all(np.isfinite(arr)):
        raise ValueError("errors must be finite")
    ordered = np.sort(arr)
    q25, q50, q75, q95 = np.quantile(ordered, [0.25, 0.5, 0.75, 0.95], method="linear")
    k = math.ceil(arr.size / 4)
    return ErrorSummary(
        mean=float(arr.mean()),
        median=float(q50),
        trimean=float((q25 + 2.0 * q50 + q75) / 4.0),
        q95=float(q95),
        best25_mean=float(ordered[:k].mean()),
        worst25_mean=float(ordered[-k:].mean()),
        count=int(arr.size),
    )


_STAT_ATTR = {
    "mean": "mean",
    "median": "median",
    "trimean": "trimean",
    "q95": "q95",
    "best25": "best25_mean",
    "worst25": "worst25_mean",
}


def summary_stat(summary: ErrorSummary, key: str) -> float:
    if key not in _STAT_ATTR:
        raise ValueError(f"unknown statistic {key!r}; choose from {STAT_KEYS}")
    return getattr(summary, _STAT_ATTR[key])


@dataclass(frozen=True)
class RankRow:
    rank: int
    algorithm: str
    summary: ErrorSummary


@dataclass(frozen=True)
class RankingTable:
    rows: tuple[RankRow, ...]
    key: str


def rank(summaries: Mapping[str, ErrorSummary], key: str = "median") -> RankingTable:
    """Ascending ranking by the chosen statistic; ties by mean, then name."""
    if not summaries:
        raise ValueError("no summaries to rank")
    if key not in _STAT_ATTR:
        raise ValueError(f"unknown statistic {key!r}; choose from {STAT_KEYS}")
    ordered = sorted(
        summaries.items(),
        key=lambda kv: (summary_stat(kv[1], key), kv[1].mean, kv[0]),
    )
    rows = tuple(
        RankRow(rank=i + 1, algorithm=name, summary=summary)
        for i, (name, summary) in enumerate(ordered)
    )
    return RankingTable(rows=rows, key=key)


def write_ranking_csv(table: RankingTable, path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["rank", "algorithm"] + list(STAT_KEYS))
    for row in table.rows:
        writer.writerow(
            [row.rank, row.algorithm]
            + [fmt9(summary_stat(row.summary, k)) for k in STAT_KEYS]
        )
    atomic_write_text(path, buf.getvalue())


def format_ranking_text(table: RankingTable, title: str = "") -> str:
    """Aligned plain-text rendering of a ranking table."""
    headers = ["rank", "algorithm"] + list(STAT_KEYS)
    body = [
        [str(row.rank), row.algorithm]
        + [f"{summary_stat(row.summary, k):.4f}" for k in STAT_KEYS]
        for row in table.rows
    ]
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in body)) if body else len(headers[i])
        for i in range(len(headers))
    ]
    lines = []
    if title:
        lines.append(title)
    lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)))
    for r in body:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))))
    return "\n".join(lines)
