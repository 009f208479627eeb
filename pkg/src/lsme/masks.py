"""Proxy instance masks and all mask post-processing.

Objects are rendered as the projected disks of spheres (radius half the
object scale) under a pinhole camera; overlapping pixels go to the
nearest-depth object, which produces the occlusion patterns the evaluation
studies. Masks travel as row-major run-length encodings that alternate
background/foreground runs, starting with a (possibly zero-length)
background run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigurationError, DataIntegrityError
from .jsonio import read_json, write_json
from .scenes import CameraPose, SceneSpec

# An object counts as visible in a view iff its mask covers more pixels.
VISIBILITY_THRESHOLD_PX = 30

CONFIDENCE_THRESHOLD = 0.5
MERGE_IOU_THRESHOLD = 0.7

DEFAULT_RESOLUTION = 128
MIN_RESOLUTION = 64
DEFAULT_FOV_DEGREES = 90.0

# Sphere radius as a fraction of the object scale.
PROXY_RADIUS_FACTOR = 0.5


def rle_encode(bitmap: np.ndarray) -> list[int]:
    """Row-major run lengths, background first (leading run may be 0)."""
    flat = np.asarray(bitmap, dtype=bool).ravel()
    if flat.size == 0:
        return []
    boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [flat.size]))
    runs = (ends - starts).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def rle_decode(rle: Sequence[int], width: int, height: int) -> np.ndarray:
    runs = np.asarray(rle, dtype=np.int64)
    if runs.size and runs.min() < 0:
        raise DataIntegrityError("negative run length")
    total = int(runs.sum())
    if total != width * height:
        raise DataIntegrityError(
            f"run lengths sum to {total}, expected {width * height}"
        )
    values = np.zeros(runs.size, dtype=bool)
    values[1::2] = True
    return np.repeat(values, runs).reshape(height, width)


@dataclass(frozen=True)
class InstanceMask:
    object_index: int
    width: int
    height: int
    rle: tuple[int, ...]
    confidence: float
    area: int = field(default=-1)

    def __post_init__(self) -> None:
        object.__setattr__(self, "rle", tuple(int(r) for r in self.rle))
        if sum(self.rle) != self.width * self.height:
            raise DataIntegrityError(
                f"mask {self.object_index}: runs sum {sum(self.rle)} != "
                f"{self.width}x{self.height}"
            )
        fg = int(sum(self.rle[1::2]))
        if self.area == -1:
            object.__setattr__(self, "area", fg)
        elif self.area != fg:
            raise DataIntegrityError(
                f"mask {self.object_index}: stated area {self.area} != decoded {fg}"
            )
        if not 0.0 <= self.confidence <= 1.0:
            raise DataIntegrityError(f"confidence {self.confidence} outside [0, 1]")

    @classmethod
    def from_bitmap(
        cls, object_index: int, bitmap: np.ndarray, confidence: float = 1.0
    ) -> "InstanceMask":
        bitmap = np.asarray(bitmap, dtype=bool)
        return cls(
            object_index=object_index,
            width=bitmap.shape[1],
            height=bitmap.shape[0],
            rle=tuple(rle_encode(bitmap)),
            confidence=confidence,
        )

    def to_bitmap(self) -> np.ndarray:
        return rle_decode(self.rle, self.width, self.height)

    def to_dict(self) -> dict:
        return {
            "object_index": self.object_index,
            "confidence": self.confidence,
            "rle": list(self.rle),
        }


@dataclass(frozen=True)
class MaskSet:
    scene_id: str
    view_id: int
    masks: list[InstanceMask]
    is_ground_truth: bool = False

    def __post_init__(self) -> None:
        if self.is_ground_truth:
            occupied = None
            for m in self.masks:
                bm = m.to_bitmap()
                if occupied is None:
                    occupied = bm.copy()
                    continue
                if np.any(occupied & bm):
                    raise DataIntegrityError(
                        f"ground-truth masks overlap in {self.scene_id} "
                        f"view {self.view_id}"
                    )
                occupied |= bm

    def to_dict(self) -> dict:
        if not self.masks:
            raise DataIntegrityError("cannot serialize a mask set without dimensions")
        return {
            "scene_id": self.scene_id,
            "view_id": self.view_id,
            "width": self.masks[0].width,
            "height": self.masks[0].height,
            "masks": [m.to_dict() for m in self.masks],
        }

    @classmethod
    def from_dict(cls, doc: dict, *, is_ground_truth: bool = False) -> "MaskSet":
        return cls(
            scene_id=doc["scene_id"],
            view_id=doc["view_id"],
            masks=[
                InstanceMask(
                    object_index=m["object_index"],
                    width=doc["width"],
                    height=doc["height"],
                    rle=tuple(m["rle"]),
                    confidence=m["confidence"],
                )
                for m in doc["masks"]
            ],
            is_ground_truth=is_ground_truth,
        )


def save_mask_set(mask_set: MaskSet, path: str | Path) -> None:
    write_json(path, mask_set.to_dict())


def load_mask_set(path: str | Path, *, is_ground_truth: bool = False) -> MaskSet:
    return MaskSet.from_dict(read_json(path), is_ground_truth=is_ground_truth)


@dataclass(frozen=True)
class Assignment:
    """Minimum-cost partial bijection between predicted and ground-truth masks."""

    pairs: list[tuple[int, int]]
    total_cost: float


def visible(mask: InstanceMask) -> bool:
    """True iff the mask area is strictly above the visibility threshold."""
    return mask.area > VISIBILITY_THRESHOLD_PX


def mask_iou(a: InstanceMask, b: InstanceMask) -> float:
    """Intersection over union; 0.0 by convention when both masks are empty."""
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError(
            f"mask dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    inter = int(np.count_nonzero(a.to_bitmap() & b.to_bitmap()))
    union = a.area + b.area - inter
    if union == 0:
        return 0.0
    return inter / union


def _normalize_resolution(resolution: int | tuple[int, int]) -> tuple[int, int]:
    if isinstance(resolution, int):
        resolution = (resolution, resolution)
    width, height = resolution
    if min(width, height) < MIN_RESOLUTION:
        raise ConfigurationError(
            f"resolution {width}x{height} below minimum "
            f"{MIN_RESOLUTION}x{MIN_RESOLUTION}"
        )
    return int(width), int(height)


def _camera_frame(camera: CameraPose) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    position = np.asarray(camera.position, dtype=float)
    forward = np.asarray(camera.look_at, dtype=float) - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.array([0.0, 0.0, 1.0]))
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)
    return position, right, up, forward


def _project_spheres(
    scene: SceneSpec, view: int, width: int, height: int, fov_degrees: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-object projected disk center (px), disk radius (px), and camera
    depth. Objects behind the camera get a non-positive depth."""
    camera = scene.cameras[view]
    position, right, up, forward = _camera_frame(camera)
    focal = (width / 2.0) / math.tan(math.radians(fov_degrees) / 2.0)
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0

    radii = np.array([PROXY_RADIUS_FACTOR * p.scale for p in scene.placements])
    centers = np.array(
        [[p.position[0], p.position[1], PROXY_RADIUS_FACTOR * p.scale]
         for p in scene.placements]
    )
    rel = centers - position
    depth = rel @ forward
    safe = np.where(depth > 1e-9, depth, 1.0)
    u0 = cx + focal * (rel @ right) / safe
    v0 = cy - focal * (rel @ up) / safe
    r_px = focal * radii / safe
    return np.stack([u0, v0], axis=1), r_px, depth


def _render(
    scene: SceneSpec,
    view: int,
    resolution: int | tuple[int, int],
    fov_degrees: float,
) -> tuple[np.ndarray, np.ndarray, int, int]:
    width, height = _normalize_resolution(resolution)
    centers, r_px, depth = _project_spheres(scene, view, width, height, fov_degrees)
    cols = np.arange(width, dtype=float)
    rows = np.arange(height, dtype=float)[:, None]
    coverage = np.zeros((len(scene.placements), height, width), dtype=bool)
    for i in range(len(scene.placements)):
        if depth[i] <= 1e-9:
            continue
        coverage[i] = (cols - centers[i, 0]) ** 2 + (rows - centers[i, 1]) ** 2 <= (
            r_px[i] ** 2
        )
    return coverage, depth, width, height


def rasterize_view(
    scene: SceneSpec,
    view: int,
    resolution: int | tuple[int, int] = DEFAULT_RESOLUTION,
    *,
    fov_degrees: float = DEFAULT_FOV_DEGREES,
) -> MaskSet:
    """Ground-truth masks for one view; nearer objects occlude farther ones
    (exact depth ties go to the lower object index)."""
    mask_set, _ = rasterize_view_full(
        scene, view, resolution, fov_degrees=fov_degrees
    )
    return mask_set


def rasterize_view_full(
    scene: SceneSpec,
    view: int,
    resolution: int | tuple[int, int] = DEFAULT_RESOLUTION,
    *,
    fov_degrees: float = DEFAULT_FOV_DEGREES,
) -> tuple[MaskSet, list[int]]:
    """Ground-truth masks plus each object's unoccluded silhouette area,
    the denominator of its per-view visible fraction."""
    coverage, depth, width, height = _render(scene, view, resolution, fov_degrees)
    full_areas = [int(n) for n in coverage.sum(axis=(1, 2))]

    depth_field = np.where(
        coverage, depth[:, None, None], np.inf
    )
    winner = np.argmin(depth_field, axis=0)
    covered = coverage.any(axis=0)
    masks = [
        InstanceMask.from_bitmap(i, covered & (winner == i), confidence=1.0)
        for i in range(len(scene.placements))
    ]
    return (
        MaskSet(scene.scene_id, view, masks, is_ground_truth=True),
        full_areas,
    )


def unoccluded_areas(
    scene: SceneSpec,
    view: int,
    resolution: int | tuple[int, int] = DEFAULT_RESOLUTION,
    *,
    fov_degrees: float = DEFAULT_FOV_DEGREES,
) -> list[int]:
    """Each object's silhouette area with occlusion ignored."""
    coverage, _, _, _ = _render(scene, view, resolution, fov_degrees)
    return [int(n) for n in coverage.sum(axis=(1, 2))]


def postprocess_predictions(raw: MaskSet) -> MaskSet:
    """Drop low-confidence predictions and merge near-duplicates.

    Masks at confidence <= 0.5 are removed; surviving pairs with IoU
    strictly above 0.7 are merged (union of pixels, max confidence),
    highest-IoU pair first, until no pair crosses the threshold.
    """
    kept = [m for m in raw.masks if m.confidence > CONFIDENCE_THRESHOLD]
    while True:
        best: tuple[float, int, int] | None = None
        for i in range(len(kept)):
            for j in range(i + 1, len(kept)):
                iou = mask_iou(kept[i], kept[j])
                if iou > MERGE_IOU_THRESHOLD and (best is None or iou > best[0]):
                    best = (iou, i, j)
        if best is None:
            break
        _, i, j = best
        merged = InstanceMask.from_bitmap(
            min(kept[i].object_index, kept[j].object_index),
            kept[i].to_bitmap() | kept[j].to_bitmap(),
            confidence=max(kept[i].confidence, kept[j].confidence),
        )
        kept = kept[:i] + [merged] + kept[i + 1 : j] + kept[j + 1 :]
    return MaskSet(raw.scene_id, raw.view_id, kept, is_ground_truth=False)


def _min_assignment_total(cost: np.ndarray) -> float:
    if cost.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def hungarian_match(cost: Sequence[Sequence[float]] | np.ndarray) -> Assignment:
    """Minimum-total-cost partial bijection covering min(n, m) pairs.

    Among cost-equal optima, returns the lexicographically smallest pair
    list, found by fixing candidate pairs in (row, col) order and keeping
    each one only if the optimum stays reachable.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if cost.size and not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    n, m = cost.shape
    k = min(n, m)
    if k == 0:
        return Assignment(pairs=[], total_cost=0.0)

    best = _min_assignment_total(cost)
    tol = 1e-9 * max(1.0, abs(best))

    pairs: list[tuple[int, int]] = []
    used_cols: set[int] = set()
    fixed_cost = 0.0
    for r in range(n):
        if len(pairs) == k:
            break
        rows_after = np.arange(r + 1, n)
        for c in range(m):
            if c in used_cols:
                continue
            need = k - len(pairs) - 1
            cols_left = [cc for cc in range(m) if cc not in used_cols and cc != c]
            if need > 0:
                if min(len(rows_after), len(cols_left)) < need:
                    continue
                residual = _min_assignment_total(cost[np.ix_(rows_after, cols_left)])
            else:
                residual = 0.0
            if fixed_cost + cost[r, c] + residual <= best + tol:
                pairs.append((r, int(c)))
                used_cols.add(c)
                fixed_cost += float(cost[r, c])
                break
        # No column worked: row r stays unmatched (only possible when n > m).
    total = float(sum(cost[r, c] for r, c in pairs))
    return Assignment(pairs=pairs, total_cost=total)


def match_to_ground_truth(predicted: MaskSet, truth: MaskSet) -> Assignment:
    """Hungarian matching with cost 1 - IoU between prediction and truth."""
    if not predicted.masks or not truth.masks:
        return Assignment(pairs=[], total_cost=0.0)
    cost = np.array(
        [[1.0 - mask_iou(p, t) for t in truth.masks] for p in predicted.masks]
    )
    return hungarian_match(cost)


def apply_mask_ratio(
    mask: InstanceMask, rho: float, seed: int
) -> InstanceMask:
    """Remove foreground by seeded square-patch dropout until at least
    `rho * area` pixels are gone.

    Patch anchors (top-left corners) walk a seeded shuffle of the original
    foreground pixels; an anchor's own pixel is always inside its patch, so
    the walk can empty the mask and rho=1 does exactly that. Patch side is
    ceil(sqrt(area)) // 8, at least 1.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"mask ratio {rho} outside [0, 1]")
    if rho == 0.0 or mask.area == 0:
        return mask
    bitmap = mask.to_bitmap()
    area = mask.area
    side = max(1, math.ceil(math.sqrt(area)) // 8)
    target = rho * area
    rng = np.random.default_rng(seed)
    anchors = np.flatnonzero(bitmap.ravel())
    removed = 0
    for anchor in rng.permutation(anchors):
        if removed >= target:
            break
        row, col = divmod(int(anchor), mask.width)
        patch = bitmap[row : row + side, col : col + side]
        removed += int(np.count_nonzero(patch))
        patch[:] = False
    return InstanceMask.from_bitmap(mask.object_index, bitmap, mask.confidence)
