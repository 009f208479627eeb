"""Episode sampling and the two per-episode decision steps.

An episode is one N-way K-shot trial: K support scenes per novel category
(each holding exactly one novel-class object) plus a fixed number of query
scenes. Support assignment gives the novel label to the scene object least
similar to the feature library; low-shot classification labels each eligible
query object by its nearest support.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .estimators import FamiliarityScorer, NearestSupportClassifier
from .embeddings import FeatureLibrary
from .variants import VariantConfig

DEFAULT_QUERIES_PER_EPISODE = 15


@dataclass(frozen=True)
class SceneRef:
    """Episode-sampling metadata for one support or query scene."""

    scene_id: str
    novel_category: str
    novel_instance: str
    novel_index: int
    novel_visible: bool


@dataclass(frozen=True)
class PoolIndex:
    """Support and query scenes grouped by their novel category."""

    support: dict[str, list[SceneRef]]
    query: dict[str, list[SceneRef]]

    def categories(self) -> list[str]:
        return sorted(set(self.support) & set(self.query))


@dataclass(frozen=True)
class Episode:
    n_way: int
    k_shot: int
    novel_categories: list[str]
    support: list[str]  # k_shot scene ids per category, category-major order
    queries: list[str]
    seed: int

    def __post_init__(self) -> None:
        if len(set(self.novel_categories)) != self.n_way:
            raise ConfigurationError("episode categories must be distinct")
        if len(self.support) != self.n_way * self.k_shot:
            raise ConfigurationError("one support scene per (category, shot) needed")

    def support_label(self, slot: int) -> str:
        return self.novel_categories[slot // self.k_shot]


def _pick_without_replacement(
    refs: list[SceneRef], count: int, rng: np.random.Generator, what: str
) -> list[SceneRef]:
    if len(refs) < count:
        raise ConfigurationError(
            f"pool has {len(refs)} usable {what} scenes, episode needs {count}"
        )
    order = rng.permutation(len(refs))
    return [refs[int(i)] for i in order[:count]]


def sample_episode(
    index: PoolIndex,
    variant: VariantConfig,
    n_way: int,
    k_shot: int,
    seed: int,
    *,
    n_query: int = DEFAULT_QUERIES_PER_EPISODE,
) -> Episode:
    """Deterministic episode for `seed`.

    Support scenes are drawn per category among those whose novel object is
    visible (scenes failing the visibility rule are never selected, which is
    the resampling guarantee). Queries cycle through the episode categories;
    in the instance-recognition variant a query must show the same instance
    as its category's support.
    """
    if n_way < 1 or k_shot < 1 or n_query < 1:
        raise ConfigurationError("n_way, k_shot and n_query must be >= 1")
    queries_per_cat = -(-n_query // n_way)
    categories = [
        cat
        for cat in index.categories()
        if sum(r.novel_visible for r in index.support[cat]) >= k_shot
        and sum(r.novel_visible for r in index.query[cat]) >= queries_per_cat
    ]
    if len(categories) < n_way:
        raise ConfigurationError(
            f"{n_way}-way episode needs {n_way} categories with {k_shot} usable "
            f"support and {queries_per_cat} usable query scenes, pool index has "
            f"{len(categories)}"
        )
    rng = np.random.default_rng(seed)
    chosen = [
        categories[int(i)]
        for i in rng.choice(len(categories), size=n_way, replace=False)
    ]

    support: list[SceneRef] = []
    support_by_cat: dict[str, list[SceneRef]] = {}
    for cat in chosen:
        usable = [ref for ref in index.support[cat] if ref.novel_visible]
        picks = _pick_without_replacement(usable, k_shot, rng, f"support[{cat}]")
        support_by_cat[cat] = picks
        support.extend(picks)

    queries: list[SceneRef] = []
    taken: set[str] = set()
    for slot in range(n_query):
        cat = chosen[slot % n_way]
        usable = [
            ref
            for ref in index.query[cat]
            if ref.novel_visible and ref.scene_id not in taken
        ]
        if variant.instance_level:
            instances = {ref.novel_instance for ref in support_by_cat[cat]}
            usable = [ref for ref in usable if ref.novel_instance in instances]
        picks = _pick_without_replacement(usable, 1, rng, f"query[{cat}]")
        queries.append(picks[0])
        taken.add(picks[0].scene_id)

    return Episode(
        n_way=n_way,
        k_shot=k_shot,
        novel_categories=chosen,
        support=[ref.scene_id for ref in support],
        queries=[ref.scene_id for ref in queries],
        seed=seed,
    )


@dataclass(frozen=True)
class SceneAssignment:
    """Mutual-exclusivity outcome for one support scene; `scores` aligns with
    object indices (None where the object had no usable view)."""

    scene_id: str
    chosen_index: int
    true_index: int
    scores: list[float | None]

    @property
    def correct(self) -> bool:
        return self.chosen_index == self.true_index

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "chosen_index": self.chosen_index,
            "true_index": self.true_index,
            "scores": self.scores,
        }


@dataclass(frozen=True)
class QueryPrediction:
    scene_id: str
    object_index: int
    true_label: str
    predicted_label: str
    similarity: float

    @property
    def correct(self) -> bool:
        return self.predicted_label == self.true_label

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "object_index": self.object_index,
            "true_label": self.true_label,
            "predicted_label": self.predicted_label,
            "similarity": self.similarity,
        }


def assign_support(
    object_vectors: dict[int, np.ndarray], library: FeatureLibrary
) -> tuple[int, dict[int, float]]:
    """Pick the scene object to receive the novel label.

    Each object's score is its maximum cosine similarity to the library; the
    argmin wins, ties going to the lowest object index.
    """
    if len(library) == 0:
        raise ValueError("support assignment needs a non-empty feature library")
    if not object_vectors:
        raise ValueError("support assignment needs at least one object embedding")
    indices = sorted(object_vectors)
    scorer = FamiliarityScorer().fit(library.matrix)
    scores = scorer.score_samples(
        np.vstack([object_vectors[i] for i in indices])
    )
    chosen = indices[int(np.argmin(scores))]
    return chosen, {i: float(s) for i, s in zip(indices, scores)}


def classify_queries(
    supports: list[tuple[str, np.ndarray]],
    query_objects: list[tuple[str, int, str, np.ndarray]],
) -> list[QueryPrediction]:
    """Nearest-support labels for pre-filtered eligible query objects.

    `query_objects` rows are (scene_id, object_index, true_label, vector);
    eligibility (novel category, visibility) is the caller's contract.
    """
    if not supports:
        raise ValueError("classification needs a non-empty support set")
    if not query_objects:
        return []
    clf = NearestSupportClassifier().fit(
        np.vstack([vec for _, vec in supports]),
        np.array([label for label, _ in supports]),
    )
    labels, sims = clf.predict_with_similarity(
        np.vstack([vec for _, _, _, vec in query_objects])
    )
    return [
        QueryPrediction(
            scene_id=scene_id,
            object_index=object_index,
            true_label=true_label,
            predicted_label=str(pred),
            similarity=float(sim),
        )
        for (scene_id, object_index, true_label, _), pred, sim in zip(
            query_objects, labels, sims
        )
    ]
