"""Command line entry point: pool generation, episode evaluation, and the
mask-ratio sweep.

Exit codes: 0 success, 2 usage/configuration, 3 data integrity, 4 placement
infeasibility. LSME_THREADS caps the episode worker pool.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .embeddings import SynthWorldParams
from .engine import RunConfig, RunResult, evaluate_run, run_mask_sweep
from .errors import (
    ConfigurationError,
    DataIntegrityError,
    LsmeError,
    PlacementInfeasibleError,
)
from .jsonio import write_json
from .metrics import render_table
from .pool import generate_role_scenes, load_pool
from .masks import DEFAULT_RESOLUTION, rasterize_view_full, save_mask_set
from .scenes import DEFAULT_VIEWS, load_split, save_scene
from .variants import VARIANTS, get_variant

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INFEASIBLE = 4

DEFAULT_RHO_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)

# Noise preset keeping accuracies mid-range so the difficulty orderings are
# visible against their confidence intervals.
MODERATE_NOISE = (1.5, 0.8, 1.0)


def _parse_noise(text: str) -> tuple[float, float, float]:
    if text in ("zero", "0"):
        return (0.0, 0.0, 0.0)
    if text == "moderate":
        return MODERATE_NOISE
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigurationError(
            "--noise takes 'zero', 'moderate', or alpha_inst,alpha_view,beta"
        )
    return tuple(float(p) for p in parts)  # type: ignore[return-value]


def _parse_embeddings(text: str) -> str:
    if text in ("synth", "synthetic"):
        return "synthetic"
    if text == "random":
        return "random"
    return text  # manifest path


def _add_eval_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--split", required=True, help="category split JSON")
    parser.add_argument("--variant", required=True, choices=sorted(VARIANTS))
    parser.add_argument("--pool", required=True, help="directory written by gen")
    parser.add_argument("--episodes", type=int, default=500)
    parser.add_argument("--n-way", type=int, default=5)
    parser.add_argument("--k-shot", type=int, default=1)
    parser.add_argument("--queries", type=int, default=15)
    parser.add_argument("--views-mode", choices=("mean", "single"), default="mean")
    parser.add_argument(
        "--embeddings",
        default="synth",
        help="synth | random | path to an embedding manifest",
    )
    parser.add_argument(
        "--noise",
        default="moderate",
        help="'zero', 'moderate', or alpha_inst,alpha_view,beta",
    )
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument(
        "--synth-seed", type=int, default=None, help="defaults to --seed"
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lsme", description="low-shot mutual-exclusivity evaluation engine"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate pool scenes and ground-truth masks")
    gen.add_argument("--split", required=True)
    gen.add_argument("--variant", required=True, choices=sorted(VARIANTS))
    gen.add_argument(
        "--role", choices=("support", "query", "base"), default="support"
    )
    gen.add_argument("--scenes", type=int, required=True)
    gen.add_argument("--views", type=int, default=DEFAULT_VIEWS)
    gen.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    ev = sub.add_parser("eval", help="run episodes and write reports")
    _add_eval_flags(ev)
    ev.add_argument(
        "--masks",
        default="gt",
        help="gt | rho:<ratio> | directory of predicted mask files",
    )

    sweep = sub.add_parser(
        "mask-sweep", help="evaluate across a grid of mask degradation ratios"
    )
    _add_eval_flags(sweep)
    sweep.add_argument(
        "--rhos",
        default=",".join(str(r) for r in DEFAULT_RHO_GRID),
        help="comma-separated ratios in [0, 1]",
    )
    return parser


def _run_config(args: argparse.Namespace, mask_source: str) -> RunConfig:
    alpha_inst, alpha_view, beta = _parse_noise(args.noise)
    synth_seed = args.synth_seed if args.synth_seed is not None else args.seed
    return RunConfig(
        variant=args.variant,
        n_way=args.n_way,
        k_shot=args.k_shot,
        episodes=args.episodes,
        n_query=args.queries,
        views_mode=args.views_mode,
        mask_source=mask_source,
        embedding_source=_parse_embeddings(args.embeddings),
        synth=SynthWorldParams(
            dim=args.dim,
            alpha_inst=alpha_inst,
            alpha_view=alpha_view,
            beta=beta,
            seed=synth_seed,
        ),
        seed=args.seed,
    )


def _write_run(result: RunResult, out_dir: Path, label: str | None = None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "config.json", result.config.to_dict())
    write_json(out_dir / "episodes.json", result.manifest_dict())
    write_json(out_dir / "raw_results.json", result.raw_results_dict())
    write_json(out_dir / "report.json", result.report.to_dict())
    table = render_table([(label or result.config.variant, result.report)])
    (out_dir / "report.txt").write_text(table)


def cmd_gen(args: argparse.Namespace) -> int:
    if args.scenes < 1:
        raise ConfigurationError("--scenes must be >= 1")
    if args.views < 1:
        raise ConfigurationError("--views must be >= 1")
    split = load_split(args.split)
    variant = get_variant(args.variant)
    scenes = generate_role_scenes(
        split, variant, args.role, args.scenes, args.seed, views=args.views
    )
    out = Path(args.out)
    (out / "scenes").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    for scene in scenes:
        save_scene(scene, out / "scenes" / f"{scene.scene_id}.json")
        for view in range(args.views):
            mask_set, _ = rasterize_view_full(scene, view, args.resolution)
            save_mask_set(mask_set, out / "masks" / f"{scene.scene_id}.v{view:02d}.json")
    print(f"wrote {len(scenes)} scenes x {args.views} views to {out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    split = load_split(args.split)
    pool = load_pool(args.pool, split)
    config = _run_config(args, args.masks)
    result = evaluate_run(pool, config)
    _write_run(result, Path(args.out))
    print(render_table([(config.variant, result.report)]), end="")
    return EXIT_OK


def cmd_mask_sweep(args: argparse.Namespace) -> int:
    rhos = [float(r) for r in args.rhos.split(",") if r != ""]
    for rho in rhos:
        if not 0.0 <= rho <= 1.0:
            raise ConfigurationError(f"mask ratio {rho} outside [0, 1]")
    split = load_split(args.split)
    pool = load_pool(args.pool, split)
    config = _run_config(args, "gt")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for rho, result in run_mask_sweep(pool, config, rhos):
        _write_run(result, out / f"rho_{rho:g}")
        summary = result.report.summary("lsa")
        rows.append((rho, summary.mean, summary.ci95))
    with open(out / "sweep.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["rho", "lsa_mean", "lsa_ci95"])
        for rho, mean, ci in rows:
            writer.writerow([f"{rho:g}", repr(mean), repr(ci)])
    print(f"wrote {len(rows)} sweep rows to {out / 'sweep.csv'}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"gen": cmd_gen, "eval": cmd_eval, "mask-sweep": cmd_mask_sweep}
    try:
        return handlers[args.command](args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PlacementInfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DataIntegrityError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except LsmeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
