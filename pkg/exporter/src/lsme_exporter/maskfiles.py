"""Reading the engine's per-view mask files.

The format is a JSON document per (scene, view):
{"scene_id", "view_id", "width", "height",
 "masks": [{"object_index", "confidence", "rle": [ints]}]}
where `rle` holds row-major run lengths alternating background/foreground,
starting with a (possibly zero-length) background run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# An object is exported only if its mask covers more pixels than this.
VISIBILITY_THRESHOLD_PX = 30


class ExportError(Exception):
    pass


def rle_decode(rle: list[int], width: int, height: int) -> np.ndarray:
    runs = np.asarray(rle, dtype=np.int64)
    if runs.size and runs.min() < 0:
        raise ExportError("negative run length in mask file")
    if int(runs.sum()) != width * height:
        raise ExportError(
            f"mask runs sum to {int(runs.sum())}, expected {width * height}"
        )
    values = np.zeros(runs.size, dtype=bool)
    values[1::2] = True
    return np.repeat(values, runs).reshape(height, width)


@dataclass(frozen=True)
class MaskRecord:
    scene_id: str
    view_id: int
    object_index: int
    bitmap: np.ndarray

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.scene_id, self.object_index, self.view_id)


def read_mask_file(path: Path) -> list[MaskRecord]:
    doc = json.loads(path.read_text())
    width, height = int(doc["width"]), int(doc["height"])
    records = []
    for entry in doc["masks"]:
        bitmap = rle_decode(entry["rle"], width, height)
        records.append(
            MaskRecord(
                scene_id=str(doc["scene_id"]),
                view_id=int(doc["view_id"]),
                object_index=int(entry["object_index"]),
                bitmap=bitmap,
            )
        )
    return records


def visible_records(mask_dir: str | Path) -> list[MaskRecord]:
    """All visibility-passing object observations under a mask directory,
    sorted by (scene_id, object_index, view_id)."""
    mask_dir = Path(mask_dir)
    paths = sorted(mask_dir.glob("*.json"))
    if not paths:
        raise ExportError(f"no mask files under {mask_dir}")
    records = [
        record
        for path in paths
        for record in read_mask_file(path)
        if int(record.bitmap.sum()) > VISIBILITY_THRESHOLD_PX
    ]
    records.sort(key=lambda r: r.key)
    return records
