"""Object embeddings: storage, similarity, aggregation, and the synthetic
feature oracle.

Vectors are L2-normalized at ingestion so cosine similarity is a plain dot
product. The store's file form is a JSON manifest plus a sibling binary blob
of little-endian float32 rows in manifest key order; that pair is the
contract with external feature exporters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, DataIntegrityError, ObjectNotVisibleError
from .jsonio import read_json, write_json
from .seeding import rng_for
from .scenes import CategorySplit, SceneSpec

EmbeddingKey = tuple[str, int, int]  # (scene_id, object_index, view_id)

DEFAULT_DIM = 64

_NORM_TOL = 1e-6


def normalize(vector: np.ndarray) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        raise DataIntegrityError("cannot normalize a zero vector")
    return vector / norm


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; scale-invariant because both sides are normalized."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(normalize(a), normalize(b)))


@lru_cache(maxsize=100_000)
def _cached_unit_vector(seed: int, tags: tuple, dim: int) -> np.ndarray:
    rng = rng_for(seed, *tags)
    while True:
        v = rng.standard_normal(dim)
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            v /= norm
            v.setflags(write=False)
            return v


def unit_vector_from_tags(seed: int, *tags: object, dim: int) -> np.ndarray:
    """Deterministic unit vector drawn from the seeded hash of `tags`.

    Returned arrays are shared and read-only; callers combine them into
    fresh vectors.
    """
    return _cached_unit_vector(int(seed), tags, int(dim))


@dataclass(frozen=True)
class Embedding:
    vector: np.ndarray
    key: EmbeddingKey

    def __post_init__(self) -> None:
        object.__setattr__(self, "vector", np.asarray(self.vector, dtype=float))
        norm = float(np.linalg.norm(self.vector))
        if abs(norm - 1.0) > _NORM_TOL:
            raise DataIntegrityError(f"embedding {self.key} has norm {norm}")


@dataclass(frozen=True)
class SynthWorldParams:
    """Controls for the synthetic feature oracle.

    Each embedding is the category prototype plus instance noise, view noise,
    and an occlusion term that grows as the object's visible fraction drops;
    all component directions are deterministic functions of (seed, argument).
    """

    dim: int = DEFAULT_DIM
    alpha_inst: float = 0.0
    alpha_view: float = 0.0
    beta: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ConfigurationError("embedding dim must be at least 2")
        for name in ("alpha_inst", "alpha_view"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigurationError(f"{name} must be finite and non-negative")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigurationError("beta must lie in [0, 1]")


def synth_embedding(
    params: SynthWorldParams,
    category: str,
    instance: str,
    view: object,
    visible_fraction: float = 1.0,
    *,
    occlusion_context: object = None,
) -> np.ndarray:
    """Synthetic unit embedding for one object observation.

    The object-content terms (prototype and instance direction) are scaled by
    the visible fraction: features computed from a partial mask carry
    proportionally less of the object's signal, which is what makes accuracy
    track mask quality. At full visibility this reduces to
    normalize(proto + a_i g(inst) + a_v g(view)). `occlusion_context`
    identifies the observed object (e.g. its scene and slot) so the same
    instance corrupts differently in different scenes; a globally shared
    occlusion direction would be common to every similarity comparison and
    cancel out of rankings.
    """
    if not 0.0 <= visible_fraction <= 1.0:
        raise ValueError(f"visible_fraction {visible_fraction} outside [0, 1]")
    proto = unit_vector_from_tags(params.seed, "proto", category, dim=params.dim)
    content = proto.copy()
    if params.alpha_inst > 0:
        content += params.alpha_inst * unit_vector_from_tags(
            params.seed, "inst", instance, dim=params.dim
        )
    vector = visible_fraction * content
    if params.alpha_view > 0:
        vector = vector + params.alpha_view * unit_vector_from_tags(
            params.seed, "view", view, dim=params.dim
        )
    occlusion = params.beta * (1.0 - visible_fraction)
    if occlusion > 0:
        vector = vector + occlusion * unit_vector_from_tags(
            params.seed, "occ", instance, occlusion_context, dim=params.dim
        )
    norm = float(np.linalg.norm(vector))
    if norm < 1e-12:
        # Continuous limit of normalize(vf * content) as vf -> 0.
        return normalize(content)
    return vector / norm


def info_nce_loss(
    query: np.ndarray,
    positive: np.ndarray,
    negatives: Sequence[np.ndarray],
    temperature: float,
) -> float:
    """Contrastive loss -log(exp(q.k+/t) / (exp(q.k+/t) + sum exp(q.k-/t))),
    evaluated stably in log space."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if len(negatives) == 0:
        raise ValueError("at least one negative sample is required")
    query = np.asarray(query, dtype=float)
    logits = np.array(
        [float(np.dot(query, positive))]
        + [float(np.dot(query, k)) for k in negatives]
    ) / temperature
    peak = float(np.max(logits))
    lse = peak + math.log(float(np.sum(np.exp(logits - peak))))
    return float(lse - logits[0])


def aggregate_views(
    vectors: Sequence[np.ndarray],
    visible: Sequence[bool] | None = None,
    *,
    mode: str = "mean",
) -> np.ndarray:
    """Single object embedding from its per-view embeddings.

    mean: renormalized mean of the visible views. single: the first visible
    view's vector unchanged.
    """
    if visible is None:
        visible = [True] * len(vectors)
    rows = [np.asarray(v, dtype=float) for v, flag in zip(vectors, visible) if flag]
    if not rows:
        raise ObjectNotVisibleError("no view passes the visibility threshold")
    if mode == "single":
        return rows[0]
    if mode != "mean":
        raise ConfigurationError(f"unknown aggregation mode {mode!r}")
    return normalize(np.mean(rows, axis=0))


class EmbeddingStore:
    """Immutable map from (scene_id, object_index, view_id) to a unit vector."""

    def __init__(
        self,
        dim: int,
        entries: Mapping[EmbeddingKey, np.ndarray],
        source: str = "ingested",
    ) -> None:
        if source not in ("ingested", "synthetic"):
            raise ConfigurationError(f"unknown store source {source!r}")
        self.dim = int(dim)
        self.source = source
        self._entries: dict[EmbeddingKey, np.ndarray] = {}
        index: dict[tuple[str, int], list[int]] = {}
        for key, vector in entries.items():
            key = (str(key[0]), int(key[1]), int(key[2]))
            if key in self._entries:
                raise DataIntegrityError(f"duplicate embedding key {key}")
            vector = np.asarray(vector, dtype=float)
            if vector.shape != (self.dim,):
                raise DataIntegrityError(
                    f"embedding {key} has dim {vector.shape}, store dim {self.dim}"
                )
            self._entries[key] = normalize(vector)
            index.setdefault((key[0], key[1]), []).append(key[2])
        self._views = {k: sorted(v) for k, v in index.items()}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: EmbeddingKey) -> bool:
        return key in self._entries

    def keys(self) -> list[EmbeddingKey]:
        return sorted(self._entries)

    def vector(self, key: EmbeddingKey) -> np.ndarray:
        try:
            return self._entries[key]
        except KeyError:
            raise DataIntegrityError(f"missing embedding for key {key}") from None

    def views_for(self, scene_id: str, object_index: int) -> list[int]:
        return self._views.get((scene_id, object_index), [])

    def object_embedding(
        self, scene_id: str, object_index: int, *, mode: str = "mean"
    ) -> np.ndarray:
        views = self.views_for(scene_id, object_index)
        if not views:
            raise ObjectNotVisibleError(
                f"object ({scene_id}, {object_index}) has no stored views"
            )
        return aggregate_views(
            [self._entries[(scene_id, object_index, v)] for v in views], mode=mode
        )


def save_store(store: EmbeddingStore, manifest_path: str | Path) -> None:
    """Write the manifest and its sibling .bin blob (f32le, key order)."""
    manifest_path = Path(manifest_path)
    keys = store.keys()
    manifest = {
        "dim": store.dim,
        "count": len(keys),
        "dtype": "f32le",
        "keys": [[k[0], k[1], k[2]] for k in keys],
    }
    write_json(manifest_path, manifest)
    matrix = np.vstack([store.vector(k) for k in keys]) if keys else np.zeros((0, store.dim))
    manifest_path.with_suffix(".bin").write_bytes(
        np.ascontiguousarray(matrix, dtype="<f4").tobytes()
    )


def load_store(manifest_path: str | Path) -> EmbeddingStore:
    """Load a manifest + blob pair, rejecting size mismatches."""
    manifest_path = Path(manifest_path)
    manifest = read_json(manifest_path)
    if manifest.get("dtype") != "f32le":
        raise DataIntegrityError(f"unsupported dtype {manifest.get('dtype')!r}")
    dim = int(manifest["dim"])
    count = int(manifest["count"])
    keys = [
        (str(k[0]), int(k[1]), int(k[2])) for k in manifest["keys"]
    ]
    if len(keys) != count:
        raise DataIntegrityError(
            f"manifest count {count} != {len(keys)} listed keys"
        )
    blob = manifest_path.with_suffix(".bin").read_bytes()
    expected = count * dim * 4
    if len(blob) != expected:
        raise DataIntegrityError(
            f"blob holds {len(blob)} bytes, manifest implies {expected}"
        )
    matrix = np.frombuffer(blob, dtype="<f4").reshape(count, dim).astype(float)
    return EmbeddingStore(
        dim, {key: row for key, row in zip(keys, matrix)}, source="ingested"
    )


@dataclass(frozen=True)
class FeatureLibrary:
    """Aggregated embeddings of every base-class object from the base scenes."""

    entries: list[tuple[str, np.ndarray]]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def matrix(self) -> np.ndarray:
        if "matrix" not in self.__dict__:
            stacked = (
                np.vstack([v for _, v in self.entries])
                if self.entries
                else np.zeros((0, 0))
            )
            self.__dict__["matrix"] = stacked
        return self.__dict__["matrix"]


def build_library(
    store: EmbeddingStore,
    base_scenes: Iterable[SceneSpec],
    split: CategorySplit,
    *,
    mode: str = "mean",
) -> FeatureLibrary:
    """One aggregated entry per (scene, object) across the base scenes.

    The store only holds visibility-passing observations, so aggregation runs
    over whatever views are present; an object with none is an error, as is
    any low-shot category appearing in a base scene.
    """
    lowshot = set(split.lowshot_categories)
    entries: list[tuple[str, np.ndarray]] = []
    for scene in base_scenes:
        for index, placement in enumerate(scene.placements):
            if placement.category_id in lowshot:
                raise DataIntegrityError(
                    f"low-shot category {placement.category_id!r} in base scene "
                    f"{scene.scene_id}"
                )
            entries.append(
                (
                    placement.category_id,
                    store.object_embedding(scene.scene_id, index, mode=mode),
                )
            )
    return FeatureLibrary(entries)
