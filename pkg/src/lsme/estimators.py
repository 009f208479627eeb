"""The two decision rules at the heart of the task, as sklearn estimators.

FamiliarityScorer implements the mutual-exclusivity step: score every scene
object by its maximum cosine similarity to a fitted library of known-object
features, then hand the novel label to the least familiar one.
NearestSupportClassifier is the low-shot step: label each query object by
its most similar support object.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils import check_array


def check_embedding_matrix(X, *, name: str = "X") -> np.ndarray:
    """Validate and L2-normalize a 2-D stack of embedding rows."""
    X = check_array(X, dtype=float, ensure_2d=True, ensure_all_finite=True)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError(f"{name} contains zero rows")
    return X / norms


class FamiliarityScorer(BaseEstimator):
    """Scores objects by max cosine similarity to a library of known objects.

    The least familiar object (lowest score) is the one a mutual-exclusivity
    learner binds a novel label to.
    """

    def fit(self, X, y=None):
        X = check_embedding_matrix(X, name="library")
        if X.shape[0] == 0:
            raise ValueError("library must contain at least one entry")
        self.library_ = X
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self, X) -> np.ndarray:
        if not hasattr(self, "library_"):
            raise NotFittedError("fit the scorer before scoring")
        X = check_embedding_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"got {X.shape[1]} features, library has {self.n_features_in_}"
            )
        return X

    def score_samples(self, X) -> np.ndarray:
        """Max cosine similarity of each row against the fitted library."""
        X = self._check_fitted(X)
        return (X @ self.library_.T).max(axis=1)

    def least_familiar(self, X) -> int:
        """Index of the row with the lowest familiarity; ties go to the
        lowest index."""
        return int(np.argmin(self.score_samples(X)))


class NearestSupportClassifier(BaseEstimator, ClassifierMixin):
    """1-nearest-neighbor over support embeddings with cosine similarity.

    Every support object is an independent candidate (no per-class
    averaging); similarity ties go to the lowest support index.
    """

    def fit(self, X, y):
        X = check_embedding_matrix(X, name="supports")
        y = np.asarray(y)
        if X.shape[0] == 0:
            raise ValueError("support set must be non-empty")
        if y.shape[0] != X.shape[0]:
            raise ValueError("one label per support row is required")
        self.supports_ = X
        self.support_labels_ = y
        self.classes_ = np.unique(y)
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self, X) -> np.ndarray:
        if not hasattr(self, "supports_"):
            raise NotFittedError("fit the classifier before predicting")
        X = check_embedding_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"got {X.shape[1]} features, supports have {self.n_features_in_}"
            )
        return X

    def similarity(self, X) -> np.ndarray:
        """Cosine similarity of each row to every support, shape (n, supports)."""
        X = self._check_fitted(X)
        return X @ self.supports_.T

    def predict(self, X) -> np.ndarray:
        sims = self.similarity(X)
        return self.support_labels_[np.argmax(sims, axis=1)]

    def predict_with_similarity(self, X) -> tuple[np.ndarray, np.ndarray]:
        sims = self.similarity(X)
        nearest = np.argmax(sims, axis=1)
        return self.support_labels_[nearest], sims[np.arange(len(nearest)), nearest]
