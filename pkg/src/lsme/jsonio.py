"""Deterministic JSON serialization helpers.

Scene files carry floats at 9 significant digits; rewriting a loaded
document reproduces it byte for byte, which is what the rerun-safety
guarantees are built on.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any


def round_floats(obj: Any) -> Any:
    """Recursively snap floats to 9 significant digits."""
    if isinstance(obj, float):
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {k: round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v) for v in obj]
    return obj


def dumps_canonical(obj: Any, *, sig_floats: bool = False) -> str:
    """Serialize with a fixed layout so equal payloads give equal bytes."""
    if sig_floats:
        obj = round_floats(obj)
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def write_json(path: str | Path, obj: Any, *, sig_floats: bool = False) -> None:
    Path(path).write_text(dumps_canonical(obj, sig_floats=sig_floats))


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text())
