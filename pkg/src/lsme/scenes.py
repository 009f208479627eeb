"""Procedural scene layout and camera sampling.

Emits renderer-independent scene descriptions: object placements on the
ground plane, an orbiting camera per view, and a per-scene illumination
scalar. All sampling ranges are half-open `[a, b)` and every draw comes from
an explicit seeded generator, so a scene is a pure function of
(split, variant, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DataIntegrityError, PlacementInfeasibleError
from .jsonio import read_json, write_json
from .variants import VariantConfig

# Rendering parameter ranges (scene units; scale/illumination dimensionless).
CAMERA_R_RANGE = (1.0, 1.1)
CAMERA_Z_RANGE = (0.3, 0.5)
CAMERA_JITTER = 0.01
OBJECT_SCALE_RANGE = (0.35, 0.45)
OBJECT_LOCATION_RANGE = (-0.5, 0.5)
ILLUMINATION_RANGE = (0.6, 0.8)
OBJECT_MARGIN = 0.4

POSES_PER_INSTANCE = 16
PLACEMENT_ATTEMPTS = 1000
DEFAULT_VIEWS = 20

IDENTITY_QUATERNION = (1.0, 0.0, 0.0, 0.0)  # scalar-first (w, x, y, z)

# Slack absorbing the 9-significant-digit file precision on reload.
_RANGE_TOL = 1e-9

SCENE_ROLES = ("support", "query", "base")


def _as_rng(seed_or_rng: int | np.random.Generator) -> np.random.Generator:
    if isinstance(seed_or_rng, (int, np.integer)):
        return np.random.default_rng(seed_or_rng)
    return seed_or_rng  # a Generator, or anything exposing the same draws


def _in_range(x: float, lo: float, hi: float) -> bool:
    return lo - _RANGE_TOL <= x < hi + _RANGE_TOL


@dataclass(frozen=True)
class CategorySplit:
    """Disjoint base / low-shot category sets with their instance ids."""

    base_categories: list[str]
    lowshot_categories: list[str]
    instances_per_category: dict[str, list[str]]

    def __post_init__(self) -> None:
        if not self.base_categories or not self.lowshot_categories:
            raise DataIntegrityError("split needs non-empty base and lowshot sets")
        overlap = set(self.base_categories) & set(self.lowshot_categories)
        if overlap:
            raise DataIntegrityError(f"categories in both splits: {sorted(overlap)}")
        seen: dict[str, str] = {}
        for cat in self.base_categories + self.lowshot_categories:
            instances = self.instances_per_category.get(cat)
            if not instances:
                raise DataIntegrityError(f"category {cat!r} has no instances")
            for inst in instances:
                if inst in seen:
                    raise DataIntegrityError(
                        f"instance {inst!r} listed under {seen[inst]!r} and {cat!r}"
                    )
                seen[inst] = cat

    def category_of(self, instance_id: str) -> str:
        for cat, instances in self.instances_per_category.items():
            if instance_id in instances:
                return cat
        raise DataIntegrityError(f"unknown instance {instance_id!r}")

    def all_instances(self) -> list[str]:
        out: list[str] = []
        for cat in self.base_categories + self.lowshot_categories:
            out.extend(self.instances_per_category[cat])
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "CategorySplit":
        return cls(
            base_categories=list(doc["base"]),
            lowshot_categories=list(doc["lowshot"]),
            instances_per_category={k: list(v) for k, v in doc["instances"].items()},
        )

    def to_dict(self) -> dict:
        return {
            "base": list(self.base_categories),
            "lowshot": list(self.lowshot_categories),
            "instances": {k: list(v) for k, v in self.instances_per_category.items()},
        }


def load_split(path: str | Path) -> CategorySplit:
    return CategorySplit.from_dict(read_json(path))


def save_split(split: CategorySplit, path: str | Path) -> None:
    write_json(path, split.to_dict())


@dataclass(frozen=True)
class PoseBank:
    """Precomputed initial rotations: 16 unit quaternions per instance."""

    poses_per_instance: dict[str, list[tuple[float, float, float, float]]]

    def __post_init__(self) -> None:
        for inst, quats in self.poses_per_instance.items():
            if len(quats) != POSES_PER_INSTANCE:
                raise DataIntegrityError(
                    f"{inst!r}: expected {POSES_PER_INSTANCE} poses, got {len(quats)}"
                )
            for q in quats:
                norm = math.sqrt(sum(c * c for c in q))
                if abs(norm - 1.0) > 1e-9:
                    raise DataIntegrityError(f"{inst!r}: quaternion norm {norm}")

    def pick(self, instance_id: str, rng: np.random.Generator) -> tuple[float, ...]:
        quats = self.poses_per_instance[instance_id]
        return quats[int(rng.integers(len(quats)))]


def sample_pose_bank(instances: Sequence[str], seed: int) -> PoseBank:
    """16 rotations per instance, uniform over SO(3).

    A normalized 4D Gaussian is uniform on the quaternion sphere, which
    double-covers SO(3) uniformly.
    """
    if not instances:
        raise ConfigurationError("pose bank needs at least one instance")
    rng = np.random.default_rng(seed)
    bank: dict[str, list[tuple[float, float, float, float]]] = {}
    for inst in instances:
        raw = rng.standard_normal((POSES_PER_INSTANCE, 4))
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
        bank[inst] = [tuple(float(c) for c in q) for q in raw]
    return PoseBank(bank)


@dataclass(frozen=True)
class ObjectPlacement:
    instance_id: str
    category_id: str
    position: tuple[float, float]
    scale: float
    rotation: tuple[float, float, float, float] = IDENTITY_QUATERNION

    def __post_init__(self) -> None:
        lo, hi = OBJECT_LOCATION_RANGE
        if not all(_in_range(c, lo, hi) for c in self.position):
            raise DataIntegrityError(f"position {self.position} outside [{lo}, {hi})")
        if not _in_range(self.scale, *OBJECT_SCALE_RANGE):
            raise DataIntegrityError(f"scale {self.scale} outside {OBJECT_SCALE_RANGE}")


@dataclass(frozen=True)
class CameraPose:
    theta: float
    r: float
    z: float
    look_at: tuple[float, float, float]
    position: tuple[float, float, float]

    def __post_init__(self) -> None:
        expect = (
            self.r * math.cos(self.theta),
            self.r * math.sin(self.theta),
            self.z,
        )
        if max(abs(a - b) for a, b in zip(self.position, expect)) > 1e-6:
            raise DataIntegrityError(
                f"camera position {self.position} != (r cos t, r sin t, z) {expect}"
            )


@dataclass(frozen=True)
class SceneSpec:
    scene_id: str
    placements: list[ObjectPlacement]
    cameras: list[CameraPose]
    illumination: float
    rng_seed: int

    def __post_init__(self) -> None:
        if not _in_range(self.illumination, *ILLUMINATION_RANGE):
            raise DataIntegrityError(f"illumination {self.illumination} out of range")

    @property
    def role(self) -> str:
        """Scene role encoded as the id prefix ('support-', 'query-', 'base-')."""
        prefix = self.scene_id.split("-", 1)[0]
        if prefix not in SCENE_ROLES:
            raise DataIntegrityError(f"scene id {self.scene_id!r} has no role prefix")
        return prefix

    def lowshot_indices(self, split: CategorySplit) -> list[int]:
        lows = set(split.lowshot_categories)
        return [i for i, p in enumerate(self.placements) if p.category_id in lows]

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "placements": [
                {
                    "instance_id": p.instance_id,
                    "category_id": p.category_id,
                    "position": list(p.position),
                    "scale": p.scale,
                    "rotation": list(p.rotation),
                }
                for p in self.placements
            ],
            "cameras": [
                {
                    "theta": c.theta,
                    "r": c.r,
                    "z": c.z,
                    "look_at": list(c.look_at),
                    "position": list(c.position),
                }
                for c in self.cameras
            ],
            "illumination": self.illumination,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SceneSpec":
        return cls(
            scene_id=doc["scene_id"],
            placements=[
                ObjectPlacement(
                    instance_id=p["instance_id"],
                    category_id=p["category_id"],
                    position=tuple(p["position"]),
                    scale=p["scale"],
                    rotation=tuple(p["rotation"]),
                )
                for p in doc["placements"]
            ],
            cameras=[
                CameraPose(
                    theta=c["theta"],
                    r=c["r"],
                    z=c["z"],
                    look_at=tuple(c["look_at"]),
                    position=tuple(c["position"]),
                )
                for c in doc["cameras"]
            ],
            illumination=doc["illumination"],
            rng_seed=doc["rng_seed"],
        )


def save_scene(scene: SceneSpec, path: str | Path) -> None:
    write_json(path, scene.to_dict(), sig_floats=True)


def load_scene(path: str | Path) -> SceneSpec:
    return SceneSpec.from_dict(read_json(path))


def place_objects(
    instances: Sequence[tuple[str, str]],
    n_objects: int | None = None,
    *,
    margin: float = OBJECT_MARGIN,
    rng: int | np.random.Generator,
) -> list[ObjectPlacement]:
    """Place `(instance_id, category_id)` pairs at random XY locations,
    rejection-sampling until every pair of centers is at least `margin` apart.

    Draw order per object is fixed (x, y repeated until accepted, then scale)
    so placements are reproducible from the generator state alone.
    """
    if n_objects is None:
        n_objects = len(instances)
    if n_objects < 1:
        raise ConfigurationError("need at least one object")
    if n_objects != len(instances):
        raise ConfigurationError(
            f"{n_objects} objects requested but {len(instances)} instances given"
        )
    if margin <= 0:
        raise ConfigurationError("margin must be positive")
    rng = _as_rng(rng)
    lo, hi = OBJECT_LOCATION_RANGE
    placements: list[ObjectPlacement] = []
    for instance_id, category_id in instances:
        for attempt in range(PLACEMENT_ATTEMPTS):
            x = float(rng.uniform(lo, hi))
            y = float(rng.uniform(lo, hi))
            ok = all(
                math.hypot(x - p.position[0], y - p.position[1]) >= margin
                for p in placements
            )
            if ok:
                break
        else:
            raise PlacementInfeasibleError(
                f"no placement for {instance_id!r} after {PLACEMENT_ATTEMPTS} attempts "
                f"(margin {margin}, {len(placements)} objects placed)"
            )
        scale = float(rng.uniform(*OBJECT_SCALE_RANGE))
        placements.append(
            ObjectPlacement(
                instance_id=instance_id,
                category_id=category_id,
                position=(x, y),
                scale=scale,
            )
        )
    return placements


def sample_camera(
    placements: Sequence[ObjectPlacement],
    *,
    r_range: tuple[float, float] = CAMERA_R_RANGE,
    z_range: tuple[float, float] = CAMERA_Z_RANGE,
    eps: float = CAMERA_JITTER,
    rng: int | np.random.Generator,
) -> CameraPose:
    """One orbit-camera pose: position (r cos t, r sin t, z), aimed at a point
    on the ground plane within `eps` of the mean object location."""
    rng = _as_rng(rng)
    theta = float(rng.uniform(0.0, 2.0 * math.pi))
    r = float(rng.uniform(*r_range))
    z = float(rng.uniform(*z_range))
    cx = sum(p.position[0] for p in placements) / len(placements)
    cy = sum(p.position[1] for p in placements) / len(placements)
    jitter_angle = float(rng.uniform(0.0, 2.0 * math.pi))
    jitter_radius = eps * math.sqrt(float(rng.uniform(0.0, 1.0)))
    look_at = (
        cx + jitter_radius * math.cos(jitter_angle),
        cy + jitter_radius * math.sin(jitter_angle),
        0.0,
    )
    position = (r * math.cos(theta), r * math.sin(theta), z)
    return CameraPose(theta=theta, r=r, z=z, look_at=look_at, position=position)


def _draw_instance(
    split: CategorySplit, categories: Sequence[str], rng: np.random.Generator
) -> tuple[str, str]:
    cat = categories[int(rng.integers(len(categories)))]
    instances = split.instances_per_category[cat]
    return instances[int(rng.integers(len(instances)))], cat


def generate_scene(
    split: CategorySplit,
    variant: VariantConfig,
    seed: int,
    *,
    scene_id: str,
    role: str = "support",
    pose_bank: PoseBank | None = None,
    views: int = DEFAULT_VIEWS,
    margin: float = OBJECT_MARGIN,
) -> SceneSpec:
    """Build a complete scene for one pool role.

    support/query scenes hold exactly one low-shot-category object (at a
    random slot) plus base-class distractors; base scenes hold base-class
    objects only. Pose comes from the bank when the variant calls for it,
    otherwise the canonical identity rotation.
    """
    if role not in SCENE_ROLES:
        raise ConfigurationError(f"unknown scene role {role!r}")
    if variant.uses_pose_bank and pose_bank is None:
        raise ConfigurationError(f"variant {variant.name!r} requires a pose bank")
    rng = np.random.default_rng(seed)
    n_objects = variant.objects_per_scene

    base_pool = sum(
        len(split.instances_per_category[c]) for c in split.base_categories
    )
    needed_base = n_objects - 1 if role in ("support", "query") else n_objects
    if base_pool < needed_base:
        raise ConfigurationError(
            f"{needed_base} distinct base instances needed, split has {base_pool}"
        )

    chosen: list[tuple[str, str]] = []
    if role in ("support", "query"):
        novel = _draw_instance(split, split.lowshot_categories, rng)
        novel_slot = int(rng.integers(n_objects))
        while len(chosen) < n_objects - 1:
            inst, cat = _draw_instance(split, split.base_categories, rng)
            if all(inst != got for got, _ in chosen):
                chosen.append((inst, cat))
        chosen.insert(novel_slot, novel)
    else:
        while len(chosen) < n_objects:
            inst, cat = _draw_instance(split, split.base_categories, rng)
            if all(inst != got for got, _ in chosen):
                chosen.append((inst, cat))

    placements = place_objects(chosen, margin=margin, rng=rng)
    if variant.uses_pose_bank:
        assert pose_bank is not None
        placements = [
            replace(p, rotation=pose_bank.pick(p.instance_id, rng)) for p in placements
        ]

    cameras = [sample_camera(placements, rng=rng) for _ in range(views)]
    illumination = float(rng.uniform(*ILLUMINATION_RANGE))
    return SceneSpec(
        scene_id=scene_id,
        placements=placements,
        cameras=cameras,
        illumination=illumination,
        rng_seed=seed,
    )
