"""Desk-scale evaluation engine for low-shot object learning with a
mutual-exclusivity support-assignment step."""

from .embeddings import (
    EmbeddingStore,
    FeatureLibrary,
    SynthWorldParams,
    aggregate_views,
    build_library,
    cosine_sim,
    info_nce_loss,
    load_store,
    save_store,
    synth_embedding,
)
from .engine import RunConfig, evaluate_run, run_mask_sweep
from .episodes import Episode, assign_support, classify_queries, sample_episode
from .errors import (
    ConfigurationError,
    DataIntegrityError,
    LsmeError,
    ObjectNotVisibleError,
    PlacementInfeasibleError,
    UndefinedMetricError,
)
from .estimators import FamiliarityScorer, NearestSupportClassifier
from .masks import (
    InstanceMask,
    MaskSet,
    apply_mask_ratio,
    hungarian_match,
    mask_iou,
    postprocess_predictions,
    rasterize_view,
    visible,
)
from .metrics import aggregate, lowshot_accuracy, mean_iou, support_accuracy
from .pool import build_pool, load_pool, save_pool
from .scenes import (
    CategorySplit,
    SceneSpec,
    generate_scene,
    load_split,
    place_objects,
    sample_camera,
    sample_pose_bank,
)
from .variants import VARIANTS, VariantConfig, get_variant

__version__ = "0.1.0"
