"""Scene constructions shared by pipeline, CLI and acceptance tests.

The renderer quantizes to integer counts, so test scenes pick an integer
white-patch target vector v and derive (illuminant, exposure) from it:
illuminant = v / |v| and exposure = |v| / white_reflectance.  The rendered
white patch then lands exactly on v and the extracted ground truth is
parallel to the true illuminant up to float rounding.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from chromabench import synth

WHITE_REFLECTANCE = float(synth.DEFAULT_REFLECTANCES[18][0])

# Achromatic ramp of exact binary fractions: products with integer exposures
# stay exactly representable, which the saturation boundary tests rely on.
EXACT_ACHROMATIC = (0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625)


def exact_reflectance_table() -> np.ndarray:
    table = synth.DEFAULT_REFLECTANCES.copy()
    for i, r in enumerate(EXACT_ACHROMATIC):
        table[18 + i] = (r, r, r)
    return table


def translation_pose(dx: float = 20.0, dy: float = 40.0) -> np.ndarray:
    """Exact integer translation: rectification copies counts bit-for-bit."""
    return synth.pose_from_corners(synth.CANONICAL_CORNERS + np.array([dx, dy]))


def random_pose(
    rng: np.random.Generator,
    width: int = 640,
    height: int = 480,
    scale_range: tuple[float, float] = (0.45, 0.60),
    max_rot_deg: float = 12.0,
    jitter: float = 8.0,
) -> np.ndarray:
    """Mildly projective pose: scaled/rotated chart with jittered corners."""
    s = rng.uniform(*scale_range)
    theta = math.radians(rng.uniform(-max_rot_deg, max_rot_deg))
    w = (synth.CHART_W - 1) * s
    h = (synth.CHART_H - 1) * s
    base = np.array([[-w / 2, -h / 2], [w / 2, -h / 2], [w / 2, h / 2], [-w / 2, h / 2]])
    rot = np.array(
        [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
    )
    center = np.array([(width - 1) / 2.0, (height - 1) / 2.0])
    corners = base @ rot.T + center + rng.uniform(-jitter, jitter, size=(4, 2))
    return synth.pose_from_corners(corners)


def scene_for_target(
    white_counts,
    pose: np.ndarray,
    black_level: float = 0.0,
    noise_sigma: float = 0.0,
    rng_seed: int = 0,
    width: int = 640,
    height: int = 480,
) -> tuple[synth.SceneSpec, np.ndarray]:
    """SceneSpec whose white patch renders exactly to the integer target."""
    v = np.asarray(white_counts, dtype=np.float64)
    truth = v / np.linalg.norm(v)
    spec = synth.SceneSpec(
        illuminant=tuple(truth),
        pose=pose,
        width=width,
        height=height,
        exposure=float(np.linalg.norm(v)) / WHITE_REFLECTANCE,
        black_level=black_level,
        noise_sigma=noise_sigma,
        rng_seed=rng_seed,
    )
    return spec, truth


def write_corpus(
    out_dir: Path,
    rng: np.random.Generator,
    count: int,
    black_levels: tuple[float, ...] = (0.0, 129.0),
    noise_sigma: float = 0.0,
    counts_range: tuple[int, int] = (1400, 2900),
    prefix: str = "img",
) -> dict[str, np.ndarray]:
    """Render `count` random scenes; returns image_id -> unit true illuminant."""
    truths: dict[str, np.ndarray] = {}
    for i in range(count):
        v = rng.integers(*counts_range, size=3).astype(np.float64)
        spec, truth = scene_for_target(
            v,
            random_pose(rng),
            black_level=black_levels[i % len(black_levels)],
            noise_sigma=noise_sigma,
            rng_seed=int(rng.integers(0, 2**31)),
        )
        image_id = f"{prefix}{i:03d}"
        synth.write_scene(synth.render(spec), out_dir, image_id)
        truths[image_id] = truth
    return truths


def write_nonneutral_corpus(
    out_dir: Path,
    rng: np.random.Generator,
    count: int,
    black_level: float = 129.0,
    prefix: str = "img",
) -> dict[str, np.ndarray]:
    """Strongly non-neutral illuminants so a constant offset visibly rotates them."""
    truths: dict[str, np.ndarray] = {}
    for i in range(count):
        v = np.array(
            [
                rng.integers(2000, 2800),
                rng.integers(1200, 1800),
                rng.integers(600, 1000),
            ],
            dtype=np.float64,
        )
        spec, truth = scene_for_target(
            v,
            random_pose(rng),
            black_level=black_level,
            rng_seed=int(rng.integers(0, 2**31)),
        )
        image_id = f"{prefix}{i:03d}"
        synth.write_scene(synth.render(spec), out_dir, image_id)
        truths[image_id] = truth
    return truths


def write_reversal_corpus(
    out_dir: Path, rng: np.random.Generator, count: int = 6
) -> dict[str, np.ndarray]:
    """Scenes engineered so estimator rankings flip between GT conventions.

    The background mean is aligned with the true illuminant (grey-world wins
    against the subtracted ground truth) while a bright highlight square is
    aimed at the direction of the unsubtracted ground truth (white-patch wins
    against that one).
    """
    width, height = 640, 480
    truths: dict[str, np.ndarray] = {}
    for i in range(count):
        v = np.array(
            [rng.integers(850, 950), rng.integers(540, 620), rng.integers(290, 350)],
            dtype=np.float64,
        )
        truth = v / np.linalg.norm(v)
        exposure = float(np.linalg.norm(v)) / WHITE_REFLECTANCE
        shifted = v + 129.0
        aim = shifted / shifted.max()
        # Highlight intensity: above the background's per-channel maximum but
        # within reflectance <= 1 and clear of the saturation threshold.
        limit = ((v / WHITE_REFLECTANCE) / aim).min()
        floor = ((0.5 * v / WHITE_REFLECTANCE) / aim).max()
        assert floor < limit
        intensity = 0.5 * (floor + limit)
        background = rng.uniform(0.1, 0.5, size=(height, width, 3))
        background += 0.3 - background.mean(axis=(0, 1))
        background[20:50, 20:50, :] = intensity * aim * WHITE_REFLECTANCE / v
        spec = synth.SceneSpec(
            illuminant=tuple(truth),
            pose=random_pose(rng, width, height, scale_range=(0.45, 0.55), jitter=6.0),
            width=width,
            height=height,
            exposure=exposure,
            background=background,
            black_level=129.0,
            rng_seed=int(rng.integers(0, 2**31)),
        )
        image_id = f"rev{i:03d}"
        synth.write_scene(synth.render(spec), out_dir, image_id)
        truths[image_id] = truth
    return truths
