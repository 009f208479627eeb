import math

import numpy as np
import pytest

from lsme.embeddings import (
    EmbeddingStore,
    SynthWorldParams,
    aggregate_views,
    build_library,
    cosine_sim,
    info_nce_loss,
    load_store,
    normalize,
    save_store,
    synth_embedding,
    unit_vector_from_tags,
)
from lsme.errors import (
    ConfigurationError,
    DataIntegrityError,
    ObjectNotVisibleError,
)
from lsme.scenes import CameraPose, ObjectPlacement, SceneSpec

from splitutil import build_split


class TestCosine:
    def test_identical_unit_vectors(self):
        assert cosine_sim([1.0, 0.0], [1.0, 0.0]) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_sim([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)

    def test_hand_computed(self):
        a = normalize(np.array([1.0, 2.0, 2.0]))
        b = normalize(np.array([2.0, 1.0, 2.0]))
        assert cosine_sim(a, b) == pytest.approx(8 / 9, abs=1e-12)

    def test_rescaling_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a = rng.standard_normal(8)
            b = rng.standard_normal(8)
            s, t = rng.uniform(0.1, 50, size=2)
            assert cosine_sim(a, b) == pytest.approx(
                cosine_sim(s * a, t * b), abs=1e-12
            )

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            cosine_sim([1.0, 0.0], [1.0, 0.0, 0.0])


class TestAggregateViews:
    def test_single_view_identity(self):
        v = normalize(np.array([3.0, 4.0]))
        out = aggregate_views([v], [True])
        assert np.allclose(out, v)

    def test_two_identical_views(self):
        v = normalize(np.array([1.0, 1.0, 0.0]))
        out = aggregate_views([v, v.copy()], [True, True])
        assert np.allclose(out, v)

    def test_hand_computed_mean(self):
        out = aggregate_views(
            [np.array([1.0, 0.0]), np.array([0.0, 1.0])], [True, True]
        )
        assert np.allclose(out, [math.sqrt(2) / 2, math.sqrt(2) / 2])

    def test_invisible_views_excluded(self):
        out = aggregate_views(
            [np.array([1.0, 0.0]), np.array([0.0, 1.0])], [True, False]
        )
        assert np.allclose(out, [1.0, 0.0])

    def test_zero_visible_raises(self):
        with pytest.raises(ObjectNotVisibleError):
            aggregate_views([np.array([1.0, 0.0])], [False])

    def test_single_mode_returns_first_visible(self):
        a = normalize(np.array([1.0, 2.0]))
        b = normalize(np.array([2.0, 1.0]))
        out = aggregate_views([a, b], [False, True], mode="single")
        assert np.allclose(out, b)


class TestSynthEmbedding:
    def test_zero_noise_equals_prototype(self):
        params = SynthWorldParams(dim=16, seed=5)
        proto = unit_vector_from_tags(5, "proto", "cat-a", dim=16)
        out = synth_embedding(params, "cat-a", "inst-1", "view-0")
        assert np.array_equal(out, proto / np.linalg.norm(proto))

    def test_zero_noise_ignores_visible_fraction(self):
        params = SynthWorldParams(dim=16, seed=5)
        full = synth_embedding(params, "cat-a", "i", "v", 1.0)
        part = synth_embedding(params, "cat-a", "i", "v", 0.25)
        assert np.allclose(full, part)

    def test_deterministic(self):
        params = SynthWorldParams(dim=32, alpha_inst=0.5, alpha_view=0.3, beta=0.7, seed=9)
        a = synth_embedding(params, "c", "i", ("s", 0, 3), 0.8, occlusion_context=("s", 0))
        b = synth_embedding(params, "c", "i", ("s", 0, 3), 0.8, occlusion_context=("s", 0))
        assert np.array_equal(a, b)

    def test_unit_norm_everywhere(self):
        params = SynthWorldParams(dim=24, alpha_inst=1.2, alpha_view=0.8, beta=1.0, seed=2)
        for vf in (0.0, 0.3, 1.0):
            for inst in ("i1", "i2"):
                v = synth_embedding(params, "c", inst, f"view-{vf}", vf)
                assert abs(np.linalg.norm(v) - 1.0) < 1e-6

    def test_cross_category_cosine_centered(self):
        # Monte-Carlo oracle: random unit prototypes in d=64 are nearly
        # orthogonal on average.
        params = SynthWorldParams(dim=64, seed=13)
        categories = [f"cat-{k}" for k in range(150)]
        vectors = {
            c: synth_embedding(params, c, "i", "v") for c in categories
        }
        rng = np.random.default_rng(0)
        total = 0.0
        n_pairs = 10000
        for _ in range(n_pairs):
            a, b = rng.choice(150, size=2, replace=False)
            total += float(vectors[categories[a]] @ vectors[categories[b]])
        assert abs(total / n_pairs) < 0.05

    def test_same_category_cosine_is_one_at_zero_noise(self):
        params = SynthWorldParams(dim=32, seed=4)
        a = synth_embedding(params, "c", "i1", "v1")
        b = synth_embedding(params, "c", "i2", "v2")
        assert cosine_sim(a, b) == pytest.approx(1.0, abs=1e-12)

    def test_visible_fraction_validated(self):
        with pytest.raises(ValueError):
            synth_embedding(SynthWorldParams(dim=8), "c", "i", "v", 1.5)

    def test_beta_range_enforced(self):
        with pytest.raises(ConfigurationError):
            SynthWorldParams(dim=8, beta=1.5)

    def test_negative_noise_rejected(self):
        with pytest.raises(ConfigurationError):
            SynthWorldParams(dim=8, alpha_inst=-0.1)


class TestInfoNce:
    def test_equal_logits_ln3(self):
        q = np.array([1.0, 0.0])
        k = np.array([0.5, 0.5])
        loss = info_nce_loss(q, k, [k, k], temperature=1.0)
        assert loss == pytest.approx(math.log(3), abs=1e-9)

    def test_hand_computed(self):
        # q.k+ = 0.5, q.k- = 0.1, tau = 1 -> ln(1 + e^{-0.4}).
        q = np.array([1.0, 0.0])
        pos = np.array([0.5, 0.1])
        neg = np.array([0.1, 0.9])
        loss = info_nce_loss(q, pos, [neg], temperature=1.0)
        assert loss == pytest.approx(math.log(1 + math.exp(-0.4)), abs=1e-9)
        assert loss == pytest.approx(0.513015, abs=1e-6)

    def test_saturated_case_tiny(self):
        # q.k+ = 1, q.k- = -1, tau = 0.07: loss ~ 3.8e-13.
        q = np.array([1.0, 0.0])
        loss = info_nce_loss(q, np.array([1.0, 0.0]), [np.array([-1.0, 0.0])], 0.07)
        assert 0.0 <= loss < 1e-9

    def test_equal_logit_negatives_ln_n_plus_one(self):
        q = np.array([1.0, 0.0, 0.0])
        k = np.array([0.3, 0.1, 0.0])
        for n in range(1, 65):
            loss = info_nce_loss(q, k, [k] * n, temperature=0.5)
            assert loss == pytest.approx(math.log(n + 1), abs=1e-9)

    def test_strictly_decreasing_in_positive_similarity(self):
        negs = [np.array([0.2, 0.3]), np.array([-0.4, 0.1])]
        q = np.array([1.0, 0.0])
        losses = [
            info_nce_loss(q, np.array([s, 0.0]), negs, temperature=0.5)
            for s in np.linspace(-1, 1, 21)
        ]
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_positive(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            q, pos, neg = rng.standard_normal((3, 8))
            assert info_nce_loss(q, pos, [neg], 0.2) > 0.0

    def test_contract_violations(self):
        q = np.array([1.0, 0.0])
        with pytest.raises(ValueError):
            info_nce_loss(q, q, [q], temperature=0.0)
        with pytest.raises(ValueError):
            info_nce_loss(q, q, [], temperature=1.0)


class TestEmbeddingType:
    def test_unit_norm_enforced(self):
        from lsme.embeddings import Embedding

        Embedding(vector=np.array([1.0, 0.0]), key=("s", 0, 0))
        with pytest.raises(DataIntegrityError):
            Embedding(vector=np.array([2.0, 0.0]), key=("s", 0, 0))


def make_store(dim=8, keys=(), seed=0):
    rng = np.random.default_rng(seed)
    return EmbeddingStore(
        dim, {k: rng.standard_normal(dim) for k in keys}, source="synthetic"
    )


class TestEmbeddingStore:
    def test_normalizes_on_ingestion(self):
        store = EmbeddingStore(4, {("s", 0, 0): np.array([2.0, 0.0, 0.0, 0.0])})
        assert np.allclose(store.vector(("s", 0, 0)), [1, 0, 0, 0])

    def test_missing_key_named_in_error(self):
        store = make_store(keys=[("s", 0, 0)])
        with pytest.raises(DataIntegrityError, match=r"\('s', 1, 0\)"):
            store.vector(("s", 1, 0))

    def test_dim_mismatch_rejected(self):
        with pytest.raises(DataIntegrityError):
            EmbeddingStore(4, {("s", 0, 0): np.ones(5)})

    def test_save_load_round_trip(self, tmp_path):
        keys = [("query-0001", o, v) for o in range(3) for v in range(4)]
        store = make_store(dim=16, keys=keys, seed=3)
        manifest = tmp_path / "embeddings.json"
        save_store(store, manifest)
        blob = manifest.with_suffix(".bin").read_bytes()
        assert len(blob) == len(keys) * 16 * 4
        loaded = load_store(manifest)
        assert loaded.dim == 16
        assert len(loaded) == len(keys)
        assert loaded.keys() == store.keys()
        for k in keys:
            assert np.allclose(loaded.vector(k), store.vector(k), atol=1e-6)

    def test_blob_size_mismatch_rejected(self, tmp_path):
        store = make_store(dim=8, keys=[("s", 0, 0), ("s", 0, 1)])
        manifest = tmp_path / "embeddings.json"
        save_store(store, manifest)
        blob_path = manifest.with_suffix(".bin")
        blob_path.write_bytes(blob_path.read_bytes()[:-4])
        with pytest.raises(DataIntegrityError):
            load_store(manifest)

    def test_object_embedding_aggregates_present_views(self):
        store = EmbeddingStore(
            2,
            {
                ("s", 0, 0): np.array([1.0, 0.0]),
                ("s", 0, 5): np.array([0.0, 1.0]),
            },
        )
        out = store.object_embedding("s", 0)
        assert np.allclose(out, [math.sqrt(2) / 2, math.sqrt(2) / 2])


def base_scene(scene_id, categories, split):
    placements = [
        ObjectPlacement(split.instances_per_category[c][0], c, (0.0, 0.0), 0.4)
        for c in categories
    ]
    cam = CameraPose(theta=0.0, r=1.05, z=0.4, look_at=(0, 0, 0), position=(1.05, 0, 0.4))
    return SceneSpec(scene_id, placements, [cam], 0.7, 0)


class TestBuildLibrary:
    def test_entry_per_scene_object(self):
        # 500 base scenes x 3 objects -> 1500 entries.
        split = build_split(n_base=5, n_low=2, base_inst=2, low_inst=2)
        cats = split.base_categories
        scenes = [
            base_scene(f"base-{i:05d}", [cats[i % 5], cats[(i + 1) % 5], cats[(i + 2) % 5]], split)
            for i in range(500)
        ]
        entries = {}
        rng = np.random.default_rng(0)
        for scene in scenes:
            for o in range(3):
                entries[(scene.scene_id, o, 0)] = rng.standard_normal(8)
        store = EmbeddingStore(8, entries)
        library = build_library(store, scenes, split)
        assert len(library) == 1500
        assert library.matrix.shape == (1500, 8)

    def test_empty_scene_list(self):
        split = build_split()
        store = EmbeddingStore(8, {})
        assert len(build_library(store, [], split)) == 0

    def test_deterministic_order(self):
        split = build_split(n_base=3, n_low=2, base_inst=2, low_inst=2)
        cats = split.base_categories
        scenes = [base_scene(f"base-{i:05d}", cats, split) for i in range(4)]
        entries = {
            (s.scene_id, o, 0): np.eye(8)[(i + o) % 8]
            for i, s in enumerate(scenes)
            for o in range(3)
        }
        store = EmbeddingStore(8, entries)
        a = build_library(store, scenes, split)
        b = build_library(store, scenes, split)
        assert [c for c, _ in a.entries] == [c for c, _ in b.entries]
        assert np.array_equal(a.matrix, b.matrix)

    def test_lowshot_in_base_scene_rejected(self):
        split = build_split(n_base=3, n_low=2, base_inst=2, low_inst=2)
        bad = base_scene("base-00000", [split.lowshot_categories[0]], split)
        store = EmbeddingStore(8, {("base-00000", 0, 0): np.ones(8)})
        with pytest.raises(DataIntegrityError):
            build_library(store, [bad], split)

    def test_object_without_views_rejected(self):
        split = build_split(n_base=3, n_low=2, base_inst=2, low_inst=2)
        scene = base_scene("base-00000", split.base_categories[:2], split)
        store = EmbeddingStore(8, {("base-00000", 0, 0): np.ones(8)})
        with pytest.raises(ObjectNotVisibleError):
            build_library(store, [scene], split)
