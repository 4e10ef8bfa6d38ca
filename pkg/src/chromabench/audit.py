"""Ground-truth forensics: set comparison, offset hypotheses, provenance checks.

Two reference sets that claim to describe the same corpus can disagree for
mundane reasons (bad chart coordinates, channels drawn from different
patches) or for one big systematic one: a constant dark offset that one set
subtracted and the other did not.  This module measures per-image angular
divergence, flags outliers, tests the "b is a plus a constant offset"
hypothesis directly, and checks legacy files for same-patch violations.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from ._util import atomic_write_text, fmt9
from .groundtruth import GroundTruthRecord, records_by_id
from .metrics import recovery_error

__all__ = [
    "Chromaticity",
    "DivergenceReport",
    "OffsetFit",
    "check_same_patch",
    "chromaticity",
    "diff_ground_truths",
    "emit_chromaticity_scatter",
    "explain_offset",
    "scan_offset",
]

DEFAULT_OUTLIER_THRESHOLD_DEG = 0.25


class Chromaticity(NamedTuple):
    r: float
    g: float


def chromaticity(v) -> Chromaticity:
    """Intensity-normalized coordinates (R/(R+G+B), G/(R+G+B))."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.shape != (3,):
        raise ValueError("expected an RGB triple")
    total = float(arr.sum())
    if total <= 0.0:
        raise ValueError("zero-sum vector has no chromaticity")
    return Chromaticity(float(arr[0] / total), float(arr[1] / total))


GTSet = Mapping[str, GroundTruthRecord] | Iterable[GroundTruthRecord]


def _as_map(records: GTSet) -> dict[str, GroundTruthRecord]:
    if isinstance(records, Mapping):
        return dict(records)
    return records_by_id(records)


@dataclass(frozen=True)
class DivergenceReport:
    """Per-image angular differences between two ground-truth sets."""

    angles_deg: dict[str, float]
    outliers: tuple[str, ...]
    threshold_deg: float
    only_in_a: tuple[str, ...]
    only_in_b: tuple[str, ...]

    @property
    def matched(self) -> int:
        return len(self.angles_deg)

    @property
    def median_deg(self) -> float:
        return float(np.median(list(self.angles_deg.values())))

    @property
    def max_deg(self) -> float:
        return float(max(self.angles_deg.values()))


def diff_ground_truths(
    a: GTSet,
    b: GTSet,
    outlier_threshold_deg: float = DEFAULT_OUTLIER_THRESHOLD_DEG,
) -> DivergenceReport:
    """Compare two sets image by image; intensity differences are invisible."""
    map_a = _as_map(a)
    map_b = _as_map(b)
    common = sorted(set(map_a) & set(map_b))
    if not common:
        raise ValueError("no common images between the two sets")
    angles = {
        image_id: recovery_error(map_a[image_id].illuminant, map_b[image_id].illuminant)
        for image_id in common
    }
    outliers = tuple(i for i in common if angles[i] > outlier_threshold_deg)
    return DivergenceReport(
        angles_deg=angles,
        outliers=outliers,
        threshold_deg=float(outlier_threshold_deg),
        only_in_a=tuple(sorted(set(map_a) - set(map_b))),
        only_in_b=tuple(sorted(set(map_b) - set(map_a))),
    )


@dataclass(frozen=True)
class OffsetFit:
    """How well "b = a + offset per channel" explains the divergence."""

    offset: float
    compared: int
    fraction_within: float  # fraction of images within 0.1 degrees
    median_residual_deg: float


_WITHIN_DEG = 0.1


def explain_offset(a: GTSet, b: GTSet, offset: float) -> OffsetFit:
    """Residual angles between (a + offset) and b over the common images."""
    map_a = _as_map(a)
    map_b = _as_map(b)
    common = sorted(set(map_a) & set(map_b))
    if not common:
        raise ValueError("no common images between the two sets")
    residuals = []
    for image_id in common:
        shifted = np.asarray(map_a[image_id].illuminant, dtype=np.float64) + offset
        residuals.append(recovery_error(shifted, map_b[image_id].illuminant))
    residuals_arr = np.asarray(residuals)
    return OffsetFit(
        offset=float(offset),
        compared=len(common),
        fraction_within=float(np.mean(residuals_arr <= _WITHIN_DEG)),
        median_residual_deg=float(np.median(residuals_arr)),
    )


def scan_offset(a: GTSet, b: GTSet, lo: int = 0, hi: int = 512) -> OffsetFit:
    """Sweep integer offsets and return the fit with the smallest median residual.

    Ties go to the smaller offset.
    """
    best: OffsetFit | None = None
    for offset in range(lo, hi + 1):
        fit = explain_offset(a, b, float(offset))
        if best is None or fit.median_residual_deg < best.median_residual_deg:
            best = fit
    assert best is not None
    return best


_PER_CHANNEL_COLS = ("patch_index_R", "patch_index_G", "patch_index_B")


def check_same_patch(path: str | Path) -> list[str]:
    """Image ids whose R, G and B were drawn from different patches.

    Requires the extended CSV columns patch_index_R/G/B; files without the
    annotations are skipped with a warning (legacy sets predate them).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        names = set(reader.fieldnames or ())
        if not set(_PER_CHANNEL_COLS) <= names:
            warnings.warn(
                f"{path}: no per-channel patch annotations; same-patch check skipped",
                stacklevel=2,
            )
            return []
        if "image_id" not in names:
            raise ValueError(f"{path}: missing image_id column")
        violations = []
        for lineno, row in enumerate(reader, start=2):
            try:
                indices = {int(row[c]) for c in _PER_CHANNEL_COLS}
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
            if len(indices) > 1:
                violations.append(row["image_id"])
    return sorted(violations)


def emit_chromaticity_scatter(sets: Mapping[str, GTSet], path: str | Path) -> None:
    """Write "set_name,image_id,r,g" rows for external plotting.

    Sets are emitted in name order, each sorted by image_id.
    """
    if not sets:
        raise ValueError("no ground-truth sets given")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["set_name", "image_id", "r", "g"])
    for set_name in sorted(sets):
        by_id = _as_map(sets[set_name])
        for image_id in sorted(by_id):
            chrom = chromaticity(by_id[image_id].illuminant)
            writer.writerow([set_name, image_id, fmt9(chrom.r), fmt9(chrom.g)])
    atomic_write_text(path, buf.getvalue())
