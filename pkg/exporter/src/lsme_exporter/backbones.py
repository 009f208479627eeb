"""Feature backbones behind one small interface.

Built-ins run CPU-only with no downloads: `stub:<dim>` emits a constant
vector (pipeline plumbing tests), `grid:<n>` average-pools the crop to an
n x n RGB grid (content-sensitive, deterministic). `torchvision:<model>`
adapts a pretrained classifier as a feature extractor; its weights download
on first use, so it stays out of CI.
"""

from __future__ import annotations

import numpy as np

from .maskfiles import ExportError


class Backbone:
    name: str
    dim: int
    input_size: int = 64

    def extract(self, batch: np.ndarray) -> np.ndarray:
        """(n, size, size, 3) floats in [0, 1] -> (n, dim) features."""
        raise NotImplementedError


class ConstantStub(Backbone):
    """Emits the same unit-scale vector for every crop."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ExportError("stub dim must be >= 1")
        self.name = f"stub:{dim}"
        self.dim = dim

    def extract(self, batch: np.ndarray) -> np.ndarray:
        return np.ones((batch.shape[0], self.dim), dtype=np.float32)


class GridPool(Backbone):
    """Average-pools each crop to an n x n grid per RGB channel."""

    def __init__(self, cells: int):
        if cells < 1:
            raise ExportError("grid cells must be >= 1")
        self.cells = cells
        self.name = f"grid:{cells}"
        self.dim = 3 * cells * cells
        self.input_size = max(64, cells)

    def extract(self, batch: np.ndarray) -> np.ndarray:
        n, size, _, _ = batch.shape
        edges = np.linspace(0, size, self.cells + 1, dtype=int)
        features = np.empty((n, self.dim), dtype=np.float32)
        for i in range(n):
            pooled = [
                batch[i, edges[r] : edges[r + 1], edges[c] : edges[c + 1]].mean(axis=(0, 1))
                for r in range(self.cells)
                for c in range(self.cells)
            ]
            features[i] = np.concatenate(pooled)
        return features


class TorchvisionBackbone(Backbone):
    """Pretrained torchvision classifier with the head removed."""

    input_size = 224

    def __init__(self, model_name: str):
        try:
            import torch
            import torchvision.models as models
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise ExportError(
                "torchvision backbones need the [torch] extra installed"
            ) from exc
        self._torch = torch
        factory = getattr(models, model_name, None)
        if factory is None:
            raise ExportError(f"unknown torchvision model {model_name!r}")
        model = factory(weights="DEFAULT")
        if hasattr(model, "fc"):
            model.fc = torch.nn.Identity()
        elif hasattr(model, "classifier"):
            model.classifier = torch.nn.Identity()
        self._model = model.eval()
        self.name = f"torchvision:{model_name}"
        with torch.no_grad():
            probe = torch.zeros(1, 3, self.input_size, self.input_size)
            self.dim = int(self._model(probe).shape[1])

    def extract(self, batch: np.ndarray) -> np.ndarray:  # pragma: no cover
        torch = self._torch
        tensor = torch.from_numpy(batch).permute(0, 3, 1, 2).float()
        with torch.no_grad():
            return self._model(tensor).numpy().astype(np.float32)


def make_backbone(spec: str) -> Backbone:
    kind, _, arg = spec.partition(":")
    if kind == "stub":
        return ConstantStub(int(arg or 8))
    if kind == "grid":
        return GridPool(int(arg or 4))
    if kind == "torchvision":
        if not arg:
            raise ExportError("torchvision backbone needs a model name")
        return TorchvisionBackbone(arg)
    raise ExportError(f"unknown backbone {spec!r}")
