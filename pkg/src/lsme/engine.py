"""Run orchestration: assemble observations from a pool, build embeddings
and the feature library, evaluate episodes concurrently, and aggregate.

Mask handling per run:
  gt        ground-truth masks straight from the pool
  rho:X     ground-truth masks degraded by seeded patch dropout
  <dir>     externally predicted mask files in the pool's mask format

Variants that need localization route their (degraded or ingested) masks
through confidence filtering, merging, and Hungarian matching against the
ground truth before any object gets features; other variants read masks by
object index. mIoU is reported whenever the masks in use are not the plain
ground truth.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .embeddings import (
    EmbeddingStore,
    FeatureLibrary,
    SynthWorldParams,
    build_library,
    load_store,
    synth_embedding,
    unit_vector_from_tags,
)
from .episodes import (
    DEFAULT_QUERIES_PER_EPISODE,
    Episode,
    PoolIndex,
    QueryPrediction,
    SceneAssignment,
    SceneRef,
    assign_support,
    classify_queries,
    sample_episode,
)
from .errors import ConfigurationError, DataIntegrityError
from .masks import (
    VISIBILITY_THRESHOLD_PX,
    InstanceMask,
    MaskSet,
    apply_mask_ratio,
    hungarian_match,
    load_mask_set,
    postprocess_predictions,
)
from .metrics import AggregateReport, EpisodeMetrics, aggregate, lowshot_accuracy, support_accuracy
from .pool import PoolData
from .seeding import derive_seed
from .variants import VariantConfig, get_variant

logger = logging.getLogger("lsme")

THREADS_ENV = "LSME_THREADS"


@dataclass(frozen=True)
class RunConfig:
    variant: str
    n_way: int = 5
    k_shot: int = 1
    episodes: int = 500
    n_query: int = DEFAULT_QUERIES_PER_EPISODE
    views_mode: str = "mean"  # mean | single
    mask_source: str = "gt"  # gt | rho:<x> | <directory>
    embedding_source: str = "synthetic"  # synthetic | random | <manifest.json>
    synth: SynthWorldParams = field(default_factory=SynthWorldParams)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.episodes < 1:
            raise ConfigurationError("episode count must be >= 1")
        if self.views_mode not in ("mean", "single"):
            raise ConfigurationError(f"unknown views mode {self.views_mode!r}")
        get_variant(self.variant)
        _parse_mask_source(self.mask_source)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "n_way": self.n_way,
            "k_shot": self.k_shot,
            "episodes": self.episodes,
            "n_query": self.n_query,
            "views_mode": self.views_mode,
            "mask_source": self.mask_source,
            "embedding_source": self.embedding_source,
            "synth": {
                "dim": self.synth.dim,
                "alpha_inst": self.synth.alpha_inst,
                "alpha_view": self.synth.alpha_view,
                "beta": self.synth.beta,
                "seed": self.synth.seed,
            },
            "seed": self.seed,
        }


def _parse_mask_source(source: str) -> tuple[str, float | str | None]:
    if source == "gt":
        return "gt", None
    if source.startswith("rho:"):
        rho = float(source.split(":", 1)[1])
        if not 0.0 <= rho <= 1.0:
            raise ConfigurationError(f"mask ratio {rho} outside [0, 1]")
        return "rho", rho
    return "file", source


@dataclass(frozen=True)
class EpisodeResult:
    index: int
    episode: Episode
    assignments: list[SceneAssignment] | None
    predictions: list[QueryPrediction]
    metrics: EpisodeMetrics

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "seed": self.episode.seed,
            "novel_categories": list(self.episode.novel_categories),
            "support_scenes": list(self.episode.support),
            "query_scenes": list(self.episode.queries),
            "assignment": (
                None
                if self.assignments is None
                else [a.to_dict() for a in self.assignments]
            ),
            "queries": [p.to_dict() for p in self.predictions],
            "metrics": self.metrics.to_dict(),
        }


@dataclass(frozen=True)
class RunResult:
    config: RunConfig
    report: AggregateReport
    episodes: list[EpisodeResult]

    def manifest_dict(self) -> dict:
        return {
            "variant": self.config.variant,
            "n_way": self.config.n_way,
            "k_shot": self.config.k_shot,
            "root_seed": self.config.seed,
            "episodes": [
                {
                    "index": r.index,
                    "seed": r.episode.seed,
                    "novel_categories": list(r.episode.novel_categories),
                    "support_scenes": list(r.episode.support),
                    "query_scenes": list(r.episode.queries),
                }
                for r in self.episodes
            ],
        }

    def raw_results_dict(self) -> dict:
        return {
            "run_config": self.config.to_dict(),
            "episodes": [r.to_dict() for r in self.episodes],
        }


def _mask_iou_fast(
    a: np.ndarray, a_area: int, b: np.ndarray, b_area: int
) -> float:
    inter = int(np.count_nonzero(a & b))
    union = a_area + b_area - inter
    return inter / union if union else 0.0


class _RunContext:
    """Everything episode evaluation reads; immutable once built."""

    def __init__(self, pool: PoolData, variant: VariantConfig, config: RunConfig):
        self.pool = pool
        self.variant = variant
        self.config = config
        self._check_pool_shape()

        kind, param = _parse_mask_source(config.mask_source)
        self.miou_enabled = variant.needs_localization or kind != "gt"
        # (scene_id, object_index, view) -> visible fraction, for keys whose
        # observation mask passes the visibility threshold.
        self.visible_fraction: dict[tuple[str, int, int], float] = {}
        self.scene_miou: dict[str, tuple[float, int]] = {}
        self._assemble_observations(kind, param)

        self.store, self.agg = self._build_embeddings()
        self.library: FeatureLibrary | None = None
        if variant.needs_support_assignment:
            base_scenes = pool.scenes_for("base")
            if not base_scenes:
                raise ConfigurationError(
                    f"variant {variant.name!r} needs base scenes for the library"
                )
            self.library = build_library(
                self.store, base_scenes, pool.split, mode=config.views_mode
            )
        self.novel_index: dict[str, int] = {}
        self.index = self._build_pool_index()

    def _check_pool_shape(self) -> None:
        expected = self.variant.objects_per_scene
        for role in ("support", "query"):
            scenes = self.pool.scenes_for(role)
            if not scenes:
                raise ConfigurationError(f"pool has no {role} scenes")
            for scene in scenes:
                if len(scene.placements) != expected:
                    raise ConfigurationError(
                        f"{scene.scene_id} has {len(scene.placements)} objects, "
                        f"variant {self.variant.name!r} expects {expected}"
                    )

    def _predictions_for_view(
        self, kind: str, param, scene_id: str, view: int, gt: MaskSet
    ) -> list[InstanceMask]:
        if kind == "rho":
            return [
                apply_mask_ratio(
                    m,
                    param,
                    derive_seed(self.config.seed, "maskratio", scene_id, view, i),
                )
                for i, m in enumerate(gt.masks)
            ]
        path = Path(param) / f"{scene_id}.v{view:02d}.json"
        if not path.exists():
            raise DataIntegrityError(f"missing predicted mask file {path}")
        return list(load_mask_set(path).masks)

    def _assemble_observations(self, kind: str, param) -> None:
        pool = self.pool
        sigma = VISIBILITY_THRESHOLD_PX
        miou_sums: dict[str, float] = {}
        miou_counts: dict[str, int] = {}
        for (scene_id, view), gt in pool.gt_masks.items():
            full = pool.full_areas[(scene_id, view)]
            if kind == "gt":
                per_object: list[InstanceMask | None] = list(gt.masks)
                inters = [m.area for m in gt.masks]
            else:
                predictions = self._predictions_for_view(
                    kind, param, scene_id, view, gt
                )
                gt_bitmaps = [m.to_bitmap() for m in gt.masks]
                if self.variant.needs_localization:
                    processed = postprocess_predictions(
                        MaskSet(scene_id, view, predictions)
                    )
                    matched = self._match(processed.masks, gt, gt_bitmaps)
                    per_object = [None] * len(gt.masks)
                    inters = [0] * len(gt.masks)
                    ious: list[float] = []
                    for p_idx, g_idx in matched:
                        pred = processed.masks[p_idx]
                        pb = pred.to_bitmap()
                        inter = int(np.count_nonzero(pb & gt_bitmaps[g_idx]))
                        per_object[g_idx] = pred
                        inters[g_idx] = inter
                        union = pred.area + gt.masks[g_idx].area - inter
                        if gt.masks[g_idx].area > 0:
                            ious.append(inter / union if union else 0.0)
                else:
                    if len(predictions) != len(gt.masks):
                        raise DataIntegrityError(
                            f"{scene_id} view {view}: {len(predictions)} masks "
                            f"for {len(gt.masks)} objects"
                        )
                    per_object = sorted(predictions, key=lambda m: m.object_index)
                    inters = [
                        int(np.count_nonzero(m.to_bitmap() & gt_bitmaps[i]))
                        for i, m in enumerate(per_object)
                    ]
                    matched = self._match(per_object, gt, gt_bitmaps)
                    ious = []
                    for p_idx, g_idx in matched:
                        if gt.masks[g_idx].area == 0:
                            continue
                        pb = per_object[p_idx].to_bitmap()
                        inter = int(np.count_nonzero(pb & gt_bitmaps[g_idx]))
                        union = per_object[p_idx].area + gt.masks[g_idx].area - inter
                        ious.append(inter / union if union else 0.0)
                if self.miou_enabled:
                    # Objects absent from the view (empty truth masks) are not
                    # scored; misses on present objects count as zero.
                    present = sum(1 for m in gt.masks if m.area > 0)
                    miou_sums[scene_id] = miou_sums.get(scene_id, 0.0) + sum(ious)
                    miou_counts[scene_id] = miou_counts.get(scene_id, 0) + present

            for i, mask in enumerate(per_object):
                if mask is None or mask.area <= sigma:
                    continue
                fraction = inters[i] / full[i] if full[i] else 0.0
                self.visible_fraction[(scene_id, i, view)] = min(1.0, fraction)

        if self.miou_enabled and kind == "gt":
            # Localization on unmodified ground truth: predictions == truth.
            for (scene_id, _), gt in pool.gt_masks.items():
                present = sum(1 for m in gt.masks if m.area > 0)
                miou_sums[scene_id] = miou_sums.get(scene_id, 0.0) + float(present)
                miou_counts[scene_id] = miou_counts.get(scene_id, 0) + present
        self.scene_miou = {
            sid: (miou_sums[sid], miou_counts[sid]) for sid in miou_sums
        }

    @staticmethod
    def _match(
        predictions: list[InstanceMask], gt: MaskSet, gt_bitmaps: list[np.ndarray]
    ) -> list[tuple[int, int]]:
        if not predictions or not gt.masks:
            return []
        pred_bitmaps = [m.to_bitmap() for m in predictions]
        cost = np.empty((len(predictions), len(gt.masks)))
        for i, (pb, pm) in enumerate(zip(pred_bitmaps, predictions)):
            for j, (gb, gm) in enumerate(zip(gt_bitmaps, gt.masks)):
                cost[i, j] = 1.0 - _mask_iou_fast(pb, pm.area, gb, gm.area)
        return hungarian_match(cost).pairs

    def _build_embeddings(self) -> tuple[EmbeddingStore, dict[tuple[str, int], np.ndarray]]:
        config = self.config
        source = config.embedding_source
        entries: dict[tuple[str, int, int], np.ndarray] = {}
        if source == "synthetic":
            for (scene_id, obj, view), vf in self.visible_fraction.items():
                placement = self.pool.scenes[scene_id].placements[obj]
                entries[(scene_id, obj, view)] = synth_embedding(
                    config.synth,
                    placement.category_id,
                    placement.instance_id,
                    (scene_id, obj, view),
                    vf,
                    occlusion_context=(scene_id, obj),
                )
            store = EmbeddingStore(config.synth.dim, entries, source="synthetic")
        elif source == "random":
            for key in self.visible_fraction:
                entries[key] = unit_vector_from_tags(
                    config.seed, "randemb", *key, dim=config.synth.dim
                )
            store = EmbeddingStore(config.synth.dim, entries, source="synthetic")
        else:
            loaded = load_store(source)
            for key in self.visible_fraction:
                entries[key] = loaded.vector(key)
            store = EmbeddingStore(loaded.dim, entries, source="ingested")

        agg = {
            (scene_id, obj): store.object_embedding(
                scene_id, obj, mode=config.views_mode
            )
            for scene_id, obj in {
                (sid, o) for sid, o, _ in self.visible_fraction
            }
        }
        return store, agg

    def _build_pool_index(self) -> PoolIndex:
        support: dict[str, list[SceneRef]] = {}
        query: dict[str, list[SceneRef]] = {}
        for role, grouped in (("support", support), ("query", query)):
            for scene in self.pool.scenes_for(role):
                novel = scene.lowshot_indices(self.pool.split)
                if len(novel) != 1:
                    raise DataIntegrityError(
                        f"{scene.scene_id}: expected exactly one novel object, "
                        f"found {len(novel)}"
                    )
                idx = novel[0]
                placement = scene.placements[idx]
                self.novel_index[scene.scene_id] = idx
                grouped.setdefault(placement.category_id, []).append(
                    SceneRef(
                        scene_id=scene.scene_id,
                        novel_category=placement.category_id,
                        novel_instance=placement.instance_id,
                        novel_index=idx,
                        novel_visible=(scene.scene_id, idx) in self.agg,
                    )
                )
        return PoolIndex(support=support, query=query)


def _evaluate_episode(ctx: _RunContext, index: int) -> EpisodeResult:
    config = ctx.config
    seed = derive_seed(config.seed, "episode", index)
    episode = sample_episode(
        ctx.index,
        ctx.variant,
        config.n_way,
        config.k_shot,
        seed,
        n_query=config.n_query,
    )

    supports: list[tuple[str, np.ndarray]] = []
    assignments: list[SceneAssignment] | None = None
    if ctx.variant.needs_support_assignment:
        assignments = []
        for slot, scene_id in enumerate(episode.support):
            scene = ctx.pool.scenes[scene_id]
            vectors = {
                i: ctx.agg[(scene_id, i)]
                for i in range(len(scene.placements))
                if (scene_id, i) in ctx.agg
            }
            chosen, scores = assign_support(vectors, ctx.library)
            assignments.append(
                SceneAssignment(
                    scene_id=scene_id,
                    chosen_index=chosen,
                    true_index=ctx.novel_index[scene_id],
                    scores=[
                        scores.get(i) for i in range(len(scene.placements))
                    ],
                )
            )
            supports.append((episode.support_label(slot), ctx.agg[(scene_id, chosen)]))
    else:
        for slot, scene_id in enumerate(episode.support):
            supports.append(
                (
                    episode.support_label(slot),
                    ctx.agg[(scene_id, ctx.novel_index[scene_id])],
                )
            )

    novel_set = set(episode.novel_categories)
    query_objects: list[tuple[str, int, str, np.ndarray]] = []
    for scene_id in episode.queries:
        scene = ctx.pool.scenes[scene_id]
        eligible = [
            (scene_id, i, p.category_id, ctx.agg[(scene_id, i)])
            for i, p in enumerate(scene.placements)
            if p.category_id in novel_set and (scene_id, i) in ctx.agg
        ]
        if not eligible:
            logger.warning(
                "episode %d: query scene %s has no eligible object, skipping",
                index,
                scene_id,
            )
            continue
        query_objects.extend(eligible)
    predictions = classify_queries(supports, query_objects)

    def _episode_miou(scene_ids: list[str]) -> float | None:
        if not ctx.miou_enabled:
            return None
        total = sum(ctx.scene_miou[s][0] for s in scene_ids)
        count = sum(ctx.scene_miou[s][1] for s in scene_ids)
        return total / count if count else None

    metrics = EpisodeMetrics(
        lsa=lowshot_accuracy([p.correct for p in predictions]),
        sa=(
            support_accuracy([a.correct for a in assignments])
            if assignments is not None
            else None
        ),
        miou_support=_episode_miou(episode.support),
        miou_query=_episode_miou(episode.queries),
    )
    return EpisodeResult(
        index=index,
        episode=episode,
        assignments=assignments,
        predictions=predictions,
        metrics=metrics,
    )


def worker_count(episodes: int) -> int:
    env = os.environ.get(THREADS_ENV)
    if env is not None:
        try:
            cap = int(env)
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV}={env!r} is not an integer")
        if cap < 1:
            raise ConfigurationError(f"{THREADS_ENV} must be >= 1")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, episodes))


def evaluate_run(pool: PoolData, config: RunConfig) -> RunResult:
    """Evaluate `config.episodes` episodes against a pool.

    Episodes run concurrently over immutable inputs and are reduced in
    episode-index order, so results are order-deterministic.
    """
    variant = get_variant(config.variant)
    ctx = _RunContext(pool, variant, config)
    workers = worker_count(config.episodes)
    if workers == 1:
        results = [_evaluate_episode(ctx, i) for i in range(config.episodes)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(
                executor.map(
                    lambda i: _evaluate_episode(ctx, i), range(config.episodes)
                )
            )
    report = aggregate((r.metrics for r in results), config.to_dict())
    return RunResult(config=config, report=report, episodes=results)


def run_mask_sweep(
    pool: PoolData, config: RunConfig, rhos: list[float]
) -> list[tuple[float, RunResult]]:
    """One evaluation per mask ratio, sharing the episode seed derivation."""
    for rho in rhos:
        if not 0.0 <= rho <= 1.0:
            raise ConfigurationError(f"mask ratio {rho} outside [0, 1]")
    out = []
    for rho in rhos:
        run_config = replace(config, mask_source=f"rho:{rho}")
        out.append((rho, evaluate_run(pool, run_config)))
    return out
