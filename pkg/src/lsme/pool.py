"""Scene pools: the fixed sets of support/query/base scenes (with their
ground-truth masks) that episodes are sampled from.

A pool is reproducible from (split, variant, counts, seed); the on-disk
layout written by the CLI round-trips through `save_pool`/`load_pool`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError, DataIntegrityError
from .masks import (
    DEFAULT_RESOLUTION,
    MaskSet,
    load_mask_set,
    rasterize_view_full,
    save_mask_set,
    unoccluded_areas,
)
from .scenes import (
    DEFAULT_VIEWS,
    CategorySplit,
    PoseBank,
    SceneSpec,
    load_scene,
    sample_pose_bank,
    save_scene,
)
from .seeding import derive_seed
from .variants import VariantConfig


@dataclass
class PoolData:
    split: CategorySplit
    views: int
    resolution: int
    scenes: dict[str, SceneSpec]
    gt_masks: dict[tuple[str, int], MaskSet]
    full_areas: dict[tuple[str, int], list[int]]

    def scene_ids(self, role: str) -> list[str]:
        return sorted(s for s in self.scenes if s.startswith(f"{role}-"))

    def scenes_for(self, role: str) -> list[SceneSpec]:
        return [self.scenes[s] for s in self.scene_ids(role)]


def scene_seed(root_seed: int, role: str, index: int) -> int:
    return derive_seed(root_seed, "scene", role, index)


def generate_role_scenes(
    split: CategorySplit,
    variant: VariantConfig,
    role: str,
    count: int,
    seed: int,
    *,
    views: int = DEFAULT_VIEWS,
    pose_bank: PoseBank | None = None,
) -> list[SceneSpec]:
    from .scenes import generate_scene

    if count < 1:
        raise ConfigurationError(f"{role}: scene count must be >= 1")
    if variant.uses_pose_bank and pose_bank is None:
        pose_bank = sample_pose_bank(
            split.all_instances(), derive_seed(seed, "posebank")
        )
    return [
        generate_scene(
            split,
            variant,
            scene_seed(seed, role, i),
            scene_id=f"{role}-{i:05d}",
            role=role,
            pose_bank=pose_bank,
            views=views,
        )
        for i in range(count)
    ]


def build_pool(
    split: CategorySplit,
    variant: VariantConfig,
    *,
    n_support: int,
    n_query: int,
    n_base: int = 0,
    views: int = DEFAULT_VIEWS,
    resolution: int = DEFAULT_RESOLUTION,
    seed: int = 0,
) -> PoolData:
    """Generate every pool scene and rasterize its ground-truth masks."""
    pose_bank = None
    if variant.uses_pose_bank:
        pose_bank = sample_pose_bank(
            split.all_instances(), derive_seed(seed, "posebank")
        )
    scenes: dict[str, SceneSpec] = {}
    for role, count in (("support", n_support), ("query", n_query), ("base", n_base)):
        if count == 0:
            continue
        for scene in generate_role_scenes(
            split, variant, role, count, seed, views=views, pose_bank=pose_bank
        ):
            scenes[scene.scene_id] = scene

    gt_masks: dict[tuple[str, int], MaskSet] = {}
    full_areas: dict[tuple[str, int], list[int]] = {}
    for scene_id, scene in scenes.items():
        for view in range(views):
            mask_set, areas = rasterize_view_full(scene, view, resolution)
            gt_masks[(scene_id, view)] = mask_set
            full_areas[(scene_id, view)] = areas
    return PoolData(
        split=split,
        views=views,
        resolution=resolution,
        scenes=scenes,
        gt_masks=gt_masks,
        full_areas=full_areas,
    )


def save_pool(pool: PoolData, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    (out_dir / "scenes").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    for scene_id in sorted(pool.scenes):
        save_scene(pool.scenes[scene_id], out_dir / "scenes" / f"{scene_id}.json")
        for view in range(pool.views):
            save_mask_set(
                pool.gt_masks[(scene_id, view)],
                out_dir / "masks" / f"{scene_id}.v{view:02d}.json",
            )


def load_pool(pool_dir: str | Path, split: CategorySplit) -> PoolData:
    """Read a pool directory back; unoccluded areas are recomputed from the
    scene descriptions (they are not part of the mask file format)."""
    pool_dir = Path(pool_dir)
    scene_files = sorted((pool_dir / "scenes").glob("*.json"))
    if not scene_files:
        raise DataIntegrityError(f"no scenes under {pool_dir}")
    scenes = {
        scene.scene_id: scene for scene in (load_scene(f) for f in scene_files)
    }

    gt_masks: dict[tuple[str, int], MaskSet] = {}
    views_seen: set[int] = set()
    resolution: int | None = None
    for scene_id in scenes:
        for path in sorted((pool_dir / "masks").glob(f"{scene_id}.v*.json")):
            mask_set = load_mask_set(path, is_ground_truth=True)
            gt_masks[(scene_id, mask_set.view_id)] = mask_set
            views_seen.add(mask_set.view_id)
            if mask_set.masks:
                width = mask_set.masks[0].width
                if resolution is None:
                    resolution = width
                elif resolution != width:
                    raise DataIntegrityError("mixed mask resolutions in pool")
    if resolution is None:
        raise DataIntegrityError(f"no masks under {pool_dir}")
    views = max(views_seen) + 1
    for scene_id in scenes:
        for view in range(views):
            if (scene_id, view) not in gt_masks:
                raise DataIntegrityError(f"missing mask file for {scene_id} view {view}")

    full_areas = {
        (scene_id, view): unoccluded_areas(scenes[scene_id], view, resolution)
        for scene_id in scenes
        for view in range(views)
    }
    return PoolData(
        split=split,
        views=views,
        resolution=resolution,
        scenes=scenes,
        gt_masks=gt_masks,
        full_areas=full_areas,
    )
