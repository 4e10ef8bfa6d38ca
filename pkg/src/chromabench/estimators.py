"""Statistical illuminant estimators under a unified (n, p, sigma) framework.

A single pipeline covers the classic family: Gaussian-smooth the image with
scale sigma, take the per-channel derivative magnitude of order n, then pool
each channel with a Minkowski norm p and normalize the pooled RGB to unit
length.  The familiar names are parameter presets:

    grey-world           n=0, p=1,   sigma=0     (channel means)
    white-patch          n=0, p=inf, sigma=0     (channel maxima)
    shades-of-grey       n=0, p,     sigma=0
    general-grey-world   n=0, p,     sigma
    grey-edge-1          n=1, p,     sigma
    grey-edge-2          n=2, p,     sigma

Derivatives use central differences on the smoothed image with reflect
padding; the second-order magnitude is the Frobenius norm of the Hessian,
sqrt(fxx^2 + 2*fxy^2 + fyy^2).  Pooling is ((1/N) * sum v^p)^(1/p) so that
p = 1 is exactly the mean; p = inf is the maximum.  Estimates are invariant
to exposure scaling by construction.

External estimators (learned or otherwise) plug into the same evaluation
interface through :class:`Registry`.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import ndimage

from ._util import atomic_write_text, fmt9
from .imagecore import LinearImage, normalize_estimate

__all__ = [
    "EstimatorSpec",
    "IlluminantEstimate",
    "PRESETS",
    "Registry",
    "chart_region_mask",
    "derivative_magnitude",
    "estimate",
    "gaussian_smooth",
    "list_presets",
    "minkowski_pool",
    "read_estimates",
    "saturation_mask",
    "spec_from_string",
    "write_estimates",
]

_D1 = np.array([-0.5, 0.0, 0.5])  # central difference, d/dx
_D2 = np.array([1.0, -2.0, 1.0])  # second central difference


@dataclass(frozen=True)
class EstimatorSpec:
    """One statistical estimator: derivative order, Minkowski norm, smoothing."""

    name: str
    n: int
    p: float
    sigma: float

    def __post_init__(self) -> None:
        if self.n not in (0, 1, 2):
            raise ValueError("derivative order n must be 0, 1 or 2")
        if not (self.p >= 1.0):  # also rejects NaN
            raise ValueError("Minkowski norm p must be >= 1 (or inf)")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


@dataclass(frozen=True)
class IlluminantEstimate:
    """Unit-norm illuminant direction estimated for one image."""

    image_id: str
    algorithm: str
    rgb: tuple[float, float, float]

    def __post_init__(self) -> None:
        rgb = tuple(float(v) for v in self.rgb)
        if len(rgb) != 3 or any(not np.isfinite(v) or v < 0 for v in rgb):
            raise ValueError("estimate must be a finite nonnegative RGB triple")
        if abs(math.sqrt(sum(v * v for v in rgb)) - 1.0) > 1e-12:
            raise ValueError("estimate must have unit Euclidean norm")
        object.__setattr__(self, "rgb", rgb)


PRESETS: dict[str, EstimatorSpec] = {
    "grey-world": EstimatorSpec("grey-world", 0, 1.0, 0.0),
    "white-patch": EstimatorSpec("white-patch", 0, math.inf, 0.0),
    "shades-of-grey": EstimatorSpec("shades-of-grey", 0, 6.0, 0.0),
    "general-grey-world": EstimatorSpec("general-grey-world", 0, 6.0, 2.0),
    "grey-edge-1": EstimatorSpec("grey-edge-1", 1, 6.0, 2.0),
    "grey-edge-2": EstimatorSpec("grey-edge-2", 2, 6.0, 2.0),
}


def list_presets() -> dict[str, tuple[int, float, float]]:
    """Preset catalog as name -> (n, p, sigma)."""
    return {name: (s.n, s.p, s.sigma) for name, s in PRESETS.items()}


_FAMILY_BY_ORDER = {0: "grey-world", 1: "grey-edge-1", 2: "grey-edge-2"}


def spec_from_string(text: str) -> EstimatorSpec:
    """Resolve a preset name or an explicit "n=...,p=...,sigma=..." spec.

    Explicit specs get a synthesized label, e.g. "grey-edge-1(p=5,s=2)".
    """
    text = text.strip()
    if text in PRESETS:
        return PRESETS[text]
    if "=" not in text:
        raise ValueError(f"unknown estimator: {text!r}")
    n, p, sigma = 0, 1.0, 0.0
    for part in text.split(","):
        key, sep, value = part.partition("=")
        if not sep:
            raise ValueError(f"bad estimator spec fragment: {part!r}")
        key = key.strip()
        value = value.strip()
        if key == "n":
            n = int(value)
        elif key == "p":
            p = math.inf if value.lower() == "inf" else float(value)
        elif key == "sigma":
            sigma = float(value)
        else:
            raise ValueError(f"unknown estimator parameter: {key!r}")
    name = f"{_FAMILY_BY_ORDER[n]}(p={p:g},s={sigma:g})" if n in _FAMILY_BY_ORDER else ""
    return EstimatorSpec(name, n, p, sigma)


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    return weights / weights.sum()


def _correlate_axis(data: np.ndarray, weights: np.ndarray, axis: int) -> np.ndarray:
    # scipy's "mirror" mode is reflect-about-edge-sample padding, matching
    # np.pad(mode="reflect"); used consistently for smoothing and derivatives.
    return ndimage.correlate1d(data, weights, axis=axis, mode="mirror")


def gaussian_smooth(img: LinearImage, sigma: float) -> LinearImage:
    """Separable Gaussian blur; sigma = 0 returns the input unchanged.

    Kernel radius is ceil(3*sigma); weights are the sampled Gaussian
    normalized to sum 1, so constants pass through exactly.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return img
    kernel = _gaussian_kernel(sigma)
    out = _correlate_axis(img.data, kernel, axis=1)
    out = _correlate_axis(out, kernel, axis=0)
    return img.with_data(out)


def derivative_magnitude(img: LinearImage, n: int, sigma: float) -> LinearImage:
    """Per-channel derivative-magnitude response of order n after smoothing.

    n=0: the smoothed image itself.
    n=1: sqrt(fx^2 + fy^2) with central differences.
    n=2: sqrt(fxx^2 + 2*fxy^2 + fyy^2), the Hessian Frobenius norm.
    """
    if n not in (0, 1, 2):
        raise ValueError("derivative order n must be 0, 1 or 2")
    smoothed = gaussian_smooth(img, sigma)
    if n == 0:
        return smoothed
    a = smoothed.data
    if n == 1:
        fx = _correlate_axis(a, _D1, axis=1)
        fy = _correlate_axis(a, _D1, axis=0)
        mag = np.sqrt(fx * fx + fy * fy)
    else:
        fxx = _correlate_axis(a, _D2, axis=1)
        fyy = _correlate_axis(a, _D2, axis=0)
        fxy = _correlate_axis(_correlate_axis(a, _D1, axis=1), _D1, axis=0)
        mag = np.sqrt(fxx * fxx + 2.0 * fxy * fxy + fyy * fyy)
    return smoothed.with_data(mag)


def minkowski_pool(values, p: float, mask=None) -> float:
    """((1/N) * sum v^p)^(1/p) over the masked-in values; p = inf is the max.

    Large p is computed on values scaled by their maximum so arbitrary count
    magnitudes cannot overflow; p = 1 is the exact arithmetic mean.
    """
    v = np.asarray(values, dtype=np.float64)
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.shape != v.shape:
            raise ValueError("mask shape must match values")
        v = v[m]
    v = v.ravel()
    if v.size == 0:
        raise ValueError("empty mask: no values to pool")
    if np.any(v < 0):
        raise ValueError("minkowski_pool requires nonnegative values")
    if math.isinf(p):
        return float(v.max())
    if p < 1.0:
        raise ValueError("Minkowski norm p must be >= 1")
    if p == 1.0:
        return float(v.mean())
    vmax = float(v.max())
    if vmax == 0.0:
        return 0.0
    scaled = v / vmax
    return vmax * float(np.mean(scaled ** p) ** (1.0 / p))


def estimate(
    img: LinearImage,
    spec: EstimatorSpec,
    mask: np.ndarray | None = None,
    image_id: str = "",
) -> IlluminantEstimate:
    """Run one estimator on an image; optional boolean mask selects pixels."""
    response = derivative_magnitude(img, spec.n, spec.sigma)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (img.height, img.width):
            raise ValueError("mask dimensions must match the image")
        if not mask.any():
            raise ValueError("empty mask: no values to pool")
    pooled = np.array(
        [minkowski_pool(response.data[:, :, c], spec.p, mask) for c in range(3)]
    )
    if np.any(pooled == 0.0):
        raise ValueError("degenerate estimate: zero channel under mask")
    rgb = normalize_estimate(pooled)
    return IlluminantEstimate(image_id=image_id, algorithm=spec.name, rgb=tuple(rgb))


# An external estimator receives (image, mask-or-None) and returns any
# RGB-like vector; the registry normalizes it.
ExternalEstimator = Callable[[LinearImage, np.ndarray | None], object]


class Registry:
    """Catalog of runnable estimators: built-in presets plus external hooks.

    Built once at setup, then treated as read-only while a corpus evaluation
    fans out over images.
    """

    def __init__(self) -> None:
        self._external: dict[str, ExternalEstimator] = {}

    def register_external(self, name: str, fn: ExternalEstimator) -> None:
        if name in PRESETS or name in self._external:
            raise ValueError(f"duplicate estimator name: {name!r}")
        self._external[name] = fn

    def names(self) -> list[str]:
        return list(PRESETS) + list(self._external)

    def run(
        self,
        name: str,
        img: LinearImage,
        mask: np.ndarray | None = None,
        image_id: str = "",
    ) -> IlluminantEstimate:
        if name in self._external:
            rgb = normalize_estimate(np.asarray(self._external[name](img, mask), float))
            return IlluminantEstimate(image_id=image_id, algorithm=name, rgb=tuple(rgb))
        if name in PRESETS:
            return estimate(img, PRESETS[name], mask, image_id)
        raise ValueError(f"unknown estimator: {name!r}")


def saturation_mask(img: LinearImage, saturation_level: float) -> np.ndarray:
    """True where every channel stays below the clipping threshold."""
    return ~np.any(img.data >= saturation_level, axis=2)


def chart_region_mask(
    height: int, width: int, corners, dilate_px: int = 5
) -> np.ndarray:
    """True outside the chart quadrilateral dilated by ``dilate_px`` pixels.

    Keeps the reference target from leaking into scene statistics.
    """
    corners = np.asarray(corners, dtype=np.float64)
    if corners.shape != (4, 2):
        raise ValueError("expected 4 corner points")
    # Map the output-rectangle convention onto the quad and test the unit box:
    # cheaper here to use half-plane tests with consistent winding.
    area2 = 0.0
    for i in range(4):
        x0, y0 = corners[i]
        x1, y1 = corners[(i + 1) % 4]
        area2 += x0 * y1 - x1 * y0
    orientation = 1.0 if area2 > 0 else -1.0
    ys, xs = np.mgrid[0:height, 0:width]
    inside = np.ones((height, width), dtype=bool)
    for i in range(4):
        ax, ay = corners[i]
        bx, by = corners[(i + 1) % 4]
        cross = (bx - ax) * (ys - ay) - (by - ay) * (xs - ax)
        inside &= orientation * cross >= 0
    if dilate_px > 0:
        size = 2 * dilate_px + 1
        inside = ndimage.binary_dilation(inside, structure=np.ones((size, size), bool))
    return ~inside


EST_FIELDS = ("image_id", "algorithm", "n", "p", "sigma", "R", "G", "B")


def write_estimates(
    rows: list[tuple[IlluminantEstimate, EstimatorSpec | None]], path: str | Path
) -> None:
    """Write the estimates CSV; p = inf is serialized as "inf"."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EST_FIELDS)
    for est, spec in rows:
        if spec is not None:
            n_txt = str(spec.n)
            p_txt = "inf" if math.isinf(spec.p) else fmt9(spec.p)
            s_txt = fmt9(spec.sigma)
        else:
            n_txt = p_txt = s_txt = ""
        writer.writerow(
            [
                est.image_id,
                est.algorithm,
                n_txt,
                p_txt,
                s_txt,
                fmt9(est.rgb[0]),
                fmt9(est.rgb[1]),
                fmt9(est.rgb[2]),
            ]
        )
    atomic_write_text(path, buf.getvalue())


def read_estimates(path: str | Path) -> list[IlluminantEstimate]:
    """Read an estimates CSV, re-normalizing each vector to unit length.

    Nine-digit serialization perturbs the norm in the tenth digit; the stored
    quantity is a direction, so normalization restores the invariant without
    changing any angle.
    """
    estimates: list[IlluminantEstimate] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(EST_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"estimates CSV missing columns: {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rgb = normalize_estimate(
                    (float(row["R"]), float(row["G"]), float(row["B"]))
                )
                estimates.append(
                    IlluminantEstimate(
                        image_id=row["image_id"],
                        algorithm=row["algorithm"],
                        rgb=tuple(rgb),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    return estimates
