"""The export pipeline: masks + images -> embedding manifest and blob.

Every visibility-passing (scene, object, view) observation yields exactly one
feature row; rows are sorted by (scene_id, object_index, view_id) and written
as a JSON manifest plus a sibling .bin blob of little-endian float32 values,
the format the evaluation engine ingests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .backbones import Backbone, make_backbone
from .maskfiles import ExportError, MaskRecord, visible_records
from .preprocess import masked_crop

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class ExportJob:
    image_dir: str | Path
    mask_dir: str | Path
    backbone: str
    out_manifest: str | Path
    batch_size: int = 16

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ExportError("batch size must be >= 1")


def _image_path(image_dir: Path, scene_id: str, view_id: int) -> Path | None:
    stem = f"{scene_id}.v{view_id:02d}"
    for suffix in IMAGE_SUFFIXES:
        candidate = image_dir / f"{stem}{suffix}"
        if candidate.exists():
            return candidate
    return None


def _load_image(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def export(job: ExportJob) -> dict:
    """Run the job and return the manifest that was written."""
    backbone = make_backbone(job.backbone)
    image_dir = Path(job.image_dir)
    records = visible_records(job.mask_dir)

    missing = sorted(
        {
            (r.scene_id, r.view_id)
            for r in records
            if _image_path(image_dir, r.scene_id, r.view_id) is None
        }
    )
    if missing:
        listing = ", ".join(f"{sid} view {view}" for sid, view in missing)
        raise ExportError(f"missing image for mask(s): {listing}")

    images: dict[tuple[str, int], np.ndarray] = {}
    rows = np.empty((len(records), backbone.dim), dtype=np.float32)
    for start in range(0, len(records), job.batch_size):
        chunk = records[start : start + job.batch_size]
        crops = []
        for record in chunk:
            img_key = (record.scene_id, record.view_id)
            if img_key not in images:
                images[img_key] = _load_image(
                    _image_path(image_dir, record.scene_id, record.view_id)
                )
            crops.append(
                masked_crop(images[img_key], record.bitmap, backbone.input_size)
            )
        rows[start : start + len(chunk)] = backbone.extract(np.stack(crops))

    zero_rows = np.flatnonzero(np.linalg.norm(rows, axis=1) == 0)
    if zero_rows.size:
        bad = records[int(zero_rows[0])]
        raise ExportError(
            f"backbone produced a zero feature for {bad.key}; rows must be "
            "L2-normalizable"
        )

    manifest = {
        "dim": backbone.dim,
        "count": len(records),
        "dtype": "f32le",
        "keys": [[r.scene_id, r.object_index, r.view_id] for r in records],
    }
    out_manifest = Path(job.out_manifest)
    out_manifest.parent.mkdir(parents=True, exist_ok=True)
    out_manifest.write_text(json.dumps(manifest, indent=2) + "\n")
    out_manifest.with_suffix(".bin").write_bytes(
        np.ascontiguousarray(rows, dtype="<f4").tobytes()
    )
    return manifest
