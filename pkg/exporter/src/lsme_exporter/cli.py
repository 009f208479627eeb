"""Command line wrapper around the export pipeline."""

from __future__ import annotations

import argparse
import sys

from .export import ExportJob, export
from .maskfiles import ExportError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="lsme-export",
        description="extract per-object embeddings from masked image crops",
    )
    parser.add_argument("--images", required=True, help="rendered image directory")
    parser.add_argument("--masks", required=True, help="engine mask-file directory")
    parser.add_argument(
        "--backbone",
        default="grid:4",
        help="stub:<dim> | grid:<cells> | torchvision:<model>",
    )
    parser.add_argument("--out", required=True, help="output manifest path (.json)")
    parser.add_argument("--batch-size", type=int, default=16)
    args = parser.parse_args(argv)
    try:
        manifest = export(
            ExportJob(
                image_dir=args.images,
                mask_dir=args.masks,
                backbone=args.backbone,
                out_manifest=args.out,
                batch_size=args.batch_size,
            )
        )
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {manifest['count']} rows (dim {manifest['dim']}) to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
