import json
from pathlib import Path

import numpy as np
from PIL import Image


def rle_encode(bitmap: np.ndarray) -> list[int]:
    flat = np.asarray(bitmap, dtype=bool).ravel()
    runs: list[int] = []
    prev = False
    count = 0
    for value in flat:
        if bool(value) == prev:
            count += 1
        else:
            runs.append(count)
            count = 1
            prev = bool(value)
    runs.append(count)
    return runs


def write_mask_file(path: Path, scene_id: str, view_id: int, bitmaps: list[np.ndarray]):
    height, width = bitmaps[0].shape
    doc = {
        "scene_id": scene_id,
        "view_id": view_id,
        "width": width,
        "height": height,
        "masks": [
            {"object_index": i, "confidence": 1.0, "rle": rle_encode(bm)}
            for i, bm in enumerate(bitmaps)
        ],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def write_image(path: Path, seed: int, size: int = 64):
    rng = np.random.default_rng(seed)
    base = rng.integers(40, 216, size=3)
    ramp = np.linspace(0, 39, size, dtype=np.uint8)
    img = np.zeros((size, size, 3), dtype=np.uint8)
    img[..., :] = base[None, None, :]
    img[..., 0] += ramp[None, :]
    img[..., 1] += ramp[:, None]
    Image.fromarray(img).save(path)


def object_bitmaps(size: int = 64, n_objects: int = 3, shift: int = 0):
    # Disjoint 10x10 squares (area 100 > 30), offset a little per view.
    bitmaps = []
    for i in range(n_objects):
        bm = np.zeros((size, size), dtype=bool)
        r0 = 4 + 18 * i + (shift % 3)
        c0 = 6 + 15 * i + (shift % 4)
        bm[r0 : r0 + 10, c0 : c0 + 10] = True
        bitmaps.append(bm)
    return bitmaps


def build_dataset(root: Path, n_scenes=2, n_objects=3, n_views=20, size=64):
    masks = root / "masks"
    images = root / "images"
    masks.mkdir(parents=True)
    images.mkdir(parents=True)
    for s in range(n_scenes):
        scene_id = f"query-{s:05d}"
        for v in range(n_views):
            bitmaps = object_bitmaps(size, n_objects, shift=s + v)
            write_mask_file(
                masks / f"{scene_id}.v{v:02d}.json", scene_id, v, bitmaps
            )
            write_image(images / f"{scene_id}.v{v:02d}.png", seed=1000 * s + v, size=size)
    return images, masks
