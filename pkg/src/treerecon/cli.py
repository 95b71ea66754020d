"""Command-line interface: generate / reconstruct / eval / gradcheck / bench.

Exit codes (stable scripting contract):
  0 success, 2 I/O failure, 3 empty or degenerate input,
  4 input mismatch (specs, missing targets), 5 internal check failure.
"""
from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .core import GridSpec, Rng, SunConfig
from .errors import (
    EmptyCloud,
    EmptyFootprint,
    InvalidSun,
    MalformedFile,
    MissingTarget,
    SpecMismatch,
    TreeReconError,
)
from .gradcheck import REL_TOL, run_gradcheck
from .io_formats import load_scene, read_manifest, read_pfm, read_ply, read_ppm, save_scene, write_ply
from .losses import LossWeights
from .metrics import baseline_extrude, eval_chamfer, format_report, fscore
from .protree import SceneConfig, TreeParamRanges, generate_scene
from .reconstruct import OptimConfig, reconstruct

EXIT_OK = 0
EXIT_IO = 2
EXIT_EMPTY = 3
EXIT_MISMATCH = 4
EXIT_CHECK = 5


# ---------------------------------------------------------------------------
# generate


def _scene_config(args) -> SceneConfig:
    return SceneConfig(
        ranges=TreeParamRanges(n_points=(args.points_per_tree, args.points_per_tree)),
        spec=GridSpec.centered(args.grid_size, args.pixel_size),
        sun=SunConfig(azimuth_deg=args.sun_az, elevation_deg=args.sun_el),
    )


def _generate_one(task):
    seed, out_dir, cfg = task
    scene = generate_scene(seed, cfg)
    save_scene(scene, out_dir)
    return seed, out_dir, len(scene.cloud)


def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _scene_config(args)
    tasks = [
        (args.seed + i, str(out / f"scene_{i:05d}"), cfg) for i in range(args.count)
    ]
    if args.jobs > 1 and tasks:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_generate_one, tasks))
    else:
        results = [_generate_one(t) for t in tasks]
    for seed, out_dir, n in results:
        print(f"{out_dir}: seed={seed} points={n}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# reconstruct


def _load_inputs(args):
    """Resolve ortho/dsm/shadow/sun from flags, with the manifest as fallback."""
    manifest = None
    base = None
    if args.manifest:
        manifest = read_manifest(args.manifest)
        base = Path(args.manifest).parent
    spec = manifest.grid if manifest else None

    ortho_path = args.ortho or (base / manifest.files.ortho if manifest else None)
    dsm_path = args.dsm or (base / manifest.files.dsm if manifest else None)
    if ortho_path is None or dsm_path is None:
        raise MissingTarget("need --ortho and --dsm (or --manifest)")
    ortho = read_ppm(ortho_path, spec)
    dsm = read_pfm(dsm_path, spec)

    shadow = None
    if args.shadow:
        shadow = read_pfm(args.shadow, dsm.spec)
    elif manifest:
        # manifest-supplied shadow is optional; real scenes may lack one
        shadow_path = base / manifest.files.shadow
        if shadow_path.exists():
            shadow = read_pfm(shadow_path, dsm.spec)
    sun = manifest.sun if manifest else None
    if args.sun_az is not None and args.sun_el is not None:
        sun = SunConfig(azimuth_deg=args.sun_az, elevation_deg=args.sun_el)
    return ortho, dsm, shadow, sun


def _resolve_weights(args, gt, shadow) -> LossWeights:
    """Flag values win; unset lambdas default from what inputs are available."""
    lam_geo = args.lambda_geo if args.lambda_geo is not None else (1.0 if gt else 0.0)
    lam_shadow = (
        args.lambda_shadow
        if args.lambda_shadow is not None
        else (0.5 if shadow is not None else 0.0)
    )
    lam_sil = args.lambda_sil if args.lambda_sil is not None else 1.0
    lam_dsm = args.lambda_dsm if args.lambda_dsm is not None else 1.0
    return LossWeights(
        lambda_geo=lam_geo,
        lambda_sil=lam_sil,
        lambda_shadow=lam_shadow,
        lambda_dsm=lam_dsm,
    )


def _write_history(path, history):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iter", "total", "geo", "sil", "shadow", "dsm"])
        for it, total, breakdown in history:
            w.writerow(
                [it, repr(total)]
                + [repr(breakdown.get(k, 0.0)) for k in ("geo", "sil", "shadow", "dsm")]
            )


def cmd_reconstruct(args) -> int:
    ortho, dsm, shadow, sun = _load_inputs(args)
    gt = read_ply(args.gt) if args.gt else None
    weights = _resolve_weights(args, gt, shadow)
    cfg = OptimConfig(
        n_points=args.points,
        iters=args.iters,
        lr=args.lr,
        weights=weights,
        seed=args.seed,
        h_min=args.h_min,
        log_every=args.log_every,
    )
    result = reconstruct(
        ortho, dsm, sun=sun, shadow_target=shadow, gt_cloud=gt, cfg=cfg
    )
    out = Path(args.out)
    write_ply(result.cloud, out)
    _write_history(out.with_suffix(".history.csv"), result.loss_history)
    _, total0, _ = result.loss_history[0]
    it, total, breakdown = result.loss_history[-1]
    terms = " ".join(f"{k}={v:.6g}" for k, v in sorted(breakdown.items()))
    print(f"iter={it} total={total:.6g} initial={total0:.6g} {terms}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    pred = read_ply(args.pred)
    gt = read_ply(args.gt)
    cd = eval_chamfer(pred, gt)
    p, r, f = fscore(pred, gt, args.tau)
    print(
        format_report(
            {"chamfer": cd, "precision": p, "recall": r, "fscore": f, "tau": args.tau}
        )
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck


def cmd_gradcheck(args) -> int:
    result = run_gradcheck(
        seed=args.seed,
        trials=args.trials,
        n_points=args.points,
        corrupt=1e-2 if args.corrupt_gradient else 0.0,
    )
    for name, score in result.max_scores.items():
        status = "ok" if score <= REL_TOL else "FAIL"
        print(f"{name}: max_rel_error={score:.3e} [{status}]")
    return EXIT_OK if result.passed else EXIT_CHECK


# ---------------------------------------------------------------------------
# bench


def _bench_one(task):
    scene_dir, iters, points, tau, seed = task
    scene = load_scene(scene_dir)
    cfg = OptimConfig(
        n_points=points,
        iters=iters,
        seed=seed,
        weights=LossWeights(lambda_geo=0.0, lambda_sil=1.0, lambda_shadow=0.5, lambda_dsm=0.25),
    )
    recon = reconstruct(
        scene.ortho,
        scene.dsm,
        sun=scene.manifest.sun,
        shadow_target=scene.shadow,
        cfg=cfg,
    ).cloud
    base = baseline_extrude(
        scene.dsm, scene.silhouette, scene.ortho, points, Rng(seed)
    )
    rows = []
    for method, cloud in (("reconstruct", recon), ("baseline", base)):
        cd = eval_chamfer(cloud, scene.cloud)
        p, r, f = fscore(cloud, scene.cloud, tau)
        rows.append([Path(scene_dir).name, method, cd, p, r, f])
    return rows


def cmd_bench(args) -> int:
    dataset = Path(args.dataset)
    scene_dirs = sorted(d for d in dataset.iterdir() if d.is_dir())
    if not scene_dirs:
        print(f"no scene directories under {dataset}", file=sys.stderr)
        return EXIT_EMPTY
    tasks = []
    for d in scene_dirs:
        seed = read_manifest(d / "manifest.json").seed
        tasks.append((str(d), args.iters, args.points, args.tau, seed))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            all_rows = list(pool.map(_bench_one, tasks))
    else:
        all_rows = [_bench_one(t) for t in tasks]

    out = dataset / "bench.csv"
    with open(out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["scene", "method", "chamfer", "precision", "recall", "fscore"])
        for rows in all_rows:
            for row in rows:
                w.writerow(row[:2] + [repr(v) for v in row[2:]])

    flat = [row for rows in all_rows for row in rows]
    for method in ("reconstruct", "baseline"):
        sel = [r for r in flat if r[1] == method]
        means = np.mean([r[2:] for r in sel], axis=0)
        print(
            f"{method}: mean_chamfer={means[0]:.6g} mean_precision={means[1]:.6g} "
            f"mean_recall={means[2]:.6g} mean_fscore={means[3]:.6g}"
        )
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treerecon",
        description="Tree point-cloud reconstruction from orthophoto + DSM",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a dataset of scenes")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--grid-size", type=int, default=128)
    g.add_argument("--pixel-size", type=float, default=0.25)
    g.add_argument("--sun-az", type=float, default=135.0)
    g.add_argument("--sun-el", type=float, default=70.0)
    g.add_argument("--points-per-tree", type=int, default=2000)
    g.add_argument("--jobs", type=int, default=1)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("reconstruct", help="optimize a cloud against one scene")
    r.add_argument("--ortho")
    r.add_argument("--dsm")
    r.add_argument("--manifest")
    r.add_argument("--shadow")
    r.add_argument("--gt")
    r.add_argument("--out", required=True)
    r.add_argument("--iters", type=int, default=800)
    r.add_argument("--points", type=int, default=2000)
    r.add_argument("--lr", type=float, default=0.05)
    r.add_argument("--lambda-geo", type=float, default=None)
    r.add_argument("--lambda-sil", type=float, default=None)
    r.add_argument("--lambda-shadow", type=float, default=None)
    r.add_argument("--lambda-dsm", type=float, default=None)
    r.add_argument("--sun-az", type=float, default=None)
    r.add_argument("--sun-el", type=float, default=None)
    r.add_argument("--h-min", type=float, default=0.5)
    r.add_argument("--log-every", type=int, default=50)
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(func=cmd_reconstruct)

    e = sub.add_parser("eval", help="score a prediction against ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--tau", type=float, default=0.5)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--points", type=int, default=None)
    c.add_argument("--trials", type=int, default=100)
    c.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    c.set_defaults(func=cmd_gradcheck)

    b = sub.add_parser("bench", help="reconstruct + baseline over a dataset")
    b.add_argument("--dataset", required=True)
    b.add_argument("--tau", type=float, default=0.5)
    b.add_argument("--iters", type=int, default=800)
    b.add_argument("--points", type=int, default=2000)
    b.add_argument("--jobs", type=int, default=1)
    b.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EmptyFootprint, EmptyCloud) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_EMPTY
    except (SpecMismatch, MissingTarget, InvalidSun) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISMATCH
    except (MalformedFile, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except TreeReconError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
