"""``tview`` command line: simulate, fit, eval, sweep and gradcheck.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .camera import PROJECTION_MODES
from .errors import MismatchedFiles, TViewError
from .estimator import FitConfig, fit_frame
from .evaluation import DEFAULT_LEVELS, evaluate_frames, format_value, rows_to_csv, summarize
from .gradcheck import check_gradient
from .io_formats import read_estimates, read_scene, write_atomic, write_estimates, write_scene
from .simulator import POSE_STYLES, NoiseSpec, RigSpec, simulate_scene

RIG_CHOICES = ("four-ring", "two-same-side", "two-antipodal")
THREADS_ENV = "TVIEW_THREADS"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument types


def _nonneg_float(s):
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}")
    if not v >= 0 or not np.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be a finite number >= 0, got {s}")
    return v


def _pos_float(s):
    v = _nonneg_float(s)
    if v == 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {s}")
    return v


def _rate(s):
    v = _nonneg_float(s)
    if v > 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {s}")
    return v


def _pos_int(s):
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}")
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {s}")
    return v


def _nonneg_int(s):
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}")
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {s}")
    return v


def _level(s):
    v = _nonneg_float(s)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"levels must lie in (0, 1), got {s}")
    return v


def _list_of(item):
    def parse(s):
        parts = [p.strip() for p in s.split(",") if p.strip()]
        if not parts:
            raise argparse.ArgumentTypeError("empty list")
        return [item(p) for p in parts]
    return parse


def _rig(s):
    if s not in RIG_CHOICES:
        raise argparse.ArgumentTypeError(f"unknown rig {s!r}; choose from {', '.join(RIG_CHOICES)}")
    return s


def _rig_spec(name: str) -> RigSpec:
    return RigSpec(kind=name.replace("-", "_"))


# ---------------------------------------------------------------------------
# parallel fitting


def resolve_threads(flag: int | None) -> int:
    """``--threads`` wins, then ``TVIEW_THREADS``, then the core count."""
    if flag is not None:
        return flag
    env = os.environ.get(THREADS_ENV)
    if env is None or env == "":
        return os.cpu_count() or 1
    try:
        n = int(env)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
    if n <= 0:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
    return n


def _fit_job(job):
    cams, obs, valid, cfg = job
    return fit_frame(cams, obs, valid, cfg)


def ordered_map(fn, jobs, threads: int):
    """``map`` whose output order is the input order for any worker count."""
    jobs = list(jobs)
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * threads))))


def fit_scene(scene, cfg: FitConfig, threads: int = 1):
    jobs = [(scene.cameras, f.observations, f.valid, cfg) for f in scene.frames]
    return ordered_map(_fit_job, jobs, threads)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args, out):
    noise = NoiseSpec(pixel_sigma=args.noise_px, outlier_rate=args.outlier_rate, seed=args.seed)
    scene = simulate_scene(_rig_spec(args.rig), args.frames, noise)
    write_scene(scene, args.output)
    print(f"wrote {args.output}: {len(scene.cameras)} cameras, {len(scene.frames)} frames, "
          f"{scene.n_keypoints} keypoints, noise {args.noise_px:g} px, outlier rate {args.outlier_rate:g}",
          file=out)
    return 0


def _fit_summary(scene, frames):
    ests = [e for fr in frames for e in fr]
    n = len(ests)
    losses = np.array([e.final_loss for e in ests if e.dist is not None])
    errs = np.array([
        np.linalg.norm(e.mu - g)
        for fr, f in zip(frames, scene.frames) for e, g in zip(fr, f.gt) if e.dist is not None
    ])
    return {
        "n": n,
        "mean_loss": float(losses.mean()) if losses.size else float("nan"),
        "converged": sum(e.converged for e in ests) / n if n else float("nan"),
        "degenerate": sum(e.degenerate for e in ests) / n if n else float("nan"),
        "mu_error": float(errs.mean()) if errs.size else float("nan"),
        "failed": sum(e.dist is None for e in ests),
    }


def cmd_fit(args, out):
    scene = read_scene(args.scene)
    cfg = FitConfig(nu=args.nu, max_iters=args.max_iters, projection=args.projection)
    frames = fit_scene(scene, cfg, resolve_threads(args.threads))
    write_estimates(frames, args.output, cfg)
    s = _fit_summary(scene, frames)
    print(f"wrote {args.output}: {len(frames)} frames, {s['n']} keypoint estimates", file=out)
    print(f"mean final loss {s['mean_loss']:.6g}", file=out)
    print(f"converged {100 * s['converged']:.1f}%", file=out)
    print(f"degenerate_fraction {s['degenerate']:.6g}", file=out)
    print(f"mean mu error {s['mu_error']:.6g}", file=out)
    if s["n"] and s["failed"] == s["n"]:
        for i, fr in enumerate(frames):
            reasons = sorted({e.error for e in fr if e.error})
            print(f"frame {i}: no estimate ({'; '.join(reasons)})", file=sys.stderr)
        print("error: every keypoint in every frame is degenerate", file=sys.stderr)
        return 1
    return 0


def _check_match(scene, frames):
    if len(frames) != len(scene.frames):
        raise MismatchedFiles(f"estimates have {len(frames)} frames, scene has {len(scene.frames)}")
    for i, fr in enumerate(frames):
        if len(fr) != scene.n_keypoints:
            raise MismatchedFiles(f"frame {i}: {len(fr)} keypoint estimates, scene has {scene.n_keypoints} keypoints")


def evaluate_scene(scene, frames, levels, include_degenerate=True):
    _check_match(scene, frames)
    metrics = evaluate_frames(
        frames, [f.gt for f in scene.frames], [f.action for f in scene.frames],
        scene.pelvis_index, levels, include_degenerate,
    )
    return summarize(metrics)


def cmd_eval(args, out):
    frames, _ = read_estimates(args.estimates)
    scene = read_scene(args.scene)
    overall, _, rows = evaluate_scene(scene, frames, args.levels, not args.exclude_degenerate)
    write_atomic(args.output, rows_to_csv(rows))
    print(f"wrote {args.output}: {overall.n_frames} frames", file=out)
    print(f"MPJPE {format_value(overall.mpjpe_mm)} mm (SE {format_value(overall.mpjpe_se_mm)})", file=out)
    for lv, c in overall.coverage_at.items():
        print(f"coverage@{lv:g} {format_value(c)}", file=out)
    print(f"degenerate_fraction {format_value(overall.degenerate_fraction)}", file=out)
    return 0


def cell_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0] >> 1)


SWEEP_HEAD = ["cell", "rig", "noise_px", "outlier_rate", "status", "n_frames"]
SWEEP_TAIL = ["Avg", "AvgGroups", "mpjpe_se_mm", "coverage@0.95", "degenerate_fraction"]


def cmd_sweep(args, out):
    threads = resolve_threads(args.threads)
    cfg = FitConfig(nu=args.nu, max_iters=args.max_iters, projection=args.projection)
    levels = sorted(set(DEFAULT_LEVELS) | {0.95})
    cells = list(itertools.product(args.rigs, args.noise_grid, args.outlier_grid))
    outdir = Path(args.output)
    (outdir / "cells").mkdir(parents=True, exist_ok=True)

    scenes, status = [], []
    for i, (rig, noise, rate) in enumerate(cells):
        try:
            scenes.append(simulate_scene(_rig_spec(rig), args.trials, NoiseSpec(noise, rate, seed=cell_seed(args.seed, i))))
            status.append("ok")
        except (TViewError, ValueError) as exc:
            scenes.append(None)
            status.append(f"failed: {exc}")

    # one ordered pool map over every (cell, frame) pair
    jobs = [(s.cameras, f.observations, f.valid, cfg) for s in scenes if s is not None for f in s.frames]
    fitted = iter(ordered_map(_fit_job, jobs, threads))

    groups = list(POSE_STYLES)
    wide, long_rows = [], []
    for i, ((rig, noise, rate), scene) in enumerate(zip(cells, scenes)):
        row = {"cell": i, "rig": rig, "noise_px": format_value(noise), "outlier_rate": format_value(rate),
               "status": status[i], "n_frames": 0}
        if scene is not None:
            frames = [next(fitted) for _ in scene.frames]
            try:
                overall, by_group, rows = evaluate_scene(scene, frames, levels)
            except (TViewError, ValueError) as exc:
                row["status"] = f"failed: {exc}"
            else:
                write_atomic(outdir / "cells" / f"cell_{i:03d}.csv", rows_to_csv(rows))
                row["n_frames"] = overall.n_frames
                for g, rep in by_group.items():
                    row[g] = format_value(rep.mpjpe_mm)
                    if g not in groups:
                        groups.append(g)
                row["Avg"] = format_value(overall.mpjpe_mm)
                row["AvgGroups"] = next(format_value(v) for g, m, v, _ in rows if g == "AvgGroups")
                row["mpjpe_se_mm"] = format_value(overall.mpjpe_se_mm)
                row["coverage@0.95"] = format_value(overall.coverage_at[0.95])
                row["degenerate_fraction"] = format_value(overall.degenerate_fraction)
                for g, m, v, n in rows:
                    long_rows.append([i, rig, format_value(noise), format_value(rate), g, m, format_value(v), n])
        wide.append(row)

    header = SWEEP_HEAD + groups + SWEEP_TAIL
    buf = io.StringIO()
    w = csv.DictWriter(buf, header, restval="", lineterminator="\n")
    w.writeheader()
    w.writerows(wide)
    write_atomic(outdir / "combined.csv", buf.getvalue())

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cell", "rig", "noise_px", "outlier_rate", "group", "metric", "value", "n"])
    w.writerows(long_rows)
    write_atomic(outdir / "long.csv", buf.getvalue())

    for row in wide:
        print(f"cell {row['cell']} {row['rig']} noise {row['noise_px']} outliers {row['outlier_rate']}: "
              f"{row['status']} MPJPE {row.get('Avg', 'nan')} mm", file=out)
    n_ok = sum(r["status"] == "ok" for r in wide)
    print(f"wrote {outdir}: {n_ok}/{len(wide)} cells ok", file=out)
    return 0 if n_ok else 1


def cmd_gradcheck(args, out):
    res = check_gradient(args.configs, args.seed, args.h, args.nu, args.projection)
    ok = res.passed(args.tol)
    print(f"max relative error {res.max_rel_error:.3e} over {res.n_configs} configurations "
          f"(tolerance {args.tol:g}): {'pass' if ok else 'FAIL'}", file=out)
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="tview", description="Multi-view keypoint t-distribution fitting.", formatter_class=fmt)
    sub = p.add_subparsers(dest="command", required=True, metavar="{simulate,fit,eval,sweep,gradcheck}")

    def fit_flags(sp):
        sp.add_argument("--nu", type=_pos_float, default=5.0, help="degrees of freedom")
        sp.add_argument("--max-iters", type=_pos_int, default=500, help="optimiser iteration cap")
        sp.add_argument("--projection", choices=PROJECTION_MODES, default="anchored",
                        help="para-perspective linearisation used in the objective")
        sp.add_argument("--threads", type=_pos_int, default=None,
                        help=f"worker processes (default: ${THREADS_ENV} or the core count)")

    sp = sub.add_parser("simulate", help="generate a synthetic scene", formatter_class=fmt)
    sp.add_argument("--rig", type=_rig, default="four-ring", help=f"one of {', '.join(RIG_CHOICES)}")
    sp.add_argument("--frames", type=_pos_int, default=10, help="number of frames")
    sp.add_argument("--noise-px", type=_nonneg_float, default=0.0, help="Gaussian pixel noise sigma")
    sp.add_argument("--outlier-rate", type=_rate, default=0.0, help="probability of a uniform outlier label")
    sp.add_argument("--seed", type=_nonneg_int, required=True, help="RNG seed")
    sp.add_argument("-o", "--output", required=True, help="scene JSON path")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="fit keypoint distributions to a scene", formatter_class=fmt)
    sp.add_argument("scene", help="scene JSON path")
    fit_flags(sp)
    sp.add_argument("--seed", type=_nonneg_int, default=0,
                    help="accepted for interface symmetry; fitting draws no random numbers")
    sp.add_argument("-o", "--output", required=True, help="estimates JSON path")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("eval", help="score estimates against scene ground truth", formatter_class=fmt)
    sp.add_argument("estimates", help="estimates JSON path")
    sp.add_argument("scene", help="scene JSON path")
    sp.add_argument("--levels", type=_list_of(_level), default=list(DEFAULT_LEVELS),
                    help="comma-separated confidence levels")
    sp.add_argument("--exclude-degenerate", action="store_true",
                    help="drop degenerate estimates from MPJPE (still counted in degenerate_fraction)")
    sp.add_argument("-o", "--output", required=True, help="metrics CSV path")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("sweep", help="simulate, fit and evaluate over a grid of rigs and noise", formatter_class=fmt)
    sp.add_argument("--rigs", type=_list_of(_rig), default=list(RIG_CHOICES), help="comma-separated rigs")
    sp.add_argument("--noise-grid", type=_list_of(_nonneg_float), default=[2.0], help="comma-separated pixel sigmas")
    sp.add_argument("--outlier-grid", type=_list_of(_rate), default=[0.0], help="comma-separated outlier rates")
    sp.add_argument("--trials", type=_pos_int, default=20, help="frames per cell")
    sp.add_argument("--seed", type=_nonneg_int, required=True, help="RNG seed")
    fit_flags(sp)
    sp.add_argument("-o", "--output", required=True, help="output directory")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients", formatter_class=fmt)
    sp.add_argument("--configs", type=_pos_int, default=100, help="random configurations")
    sp.add_argument("--seed", type=_nonneg_int, default=0, help="RNG seed")
    sp.add_argument("--h", type=_pos_float, default=1e-5, help="relative finite-difference step")
    sp.add_argument("--tol", type=_pos_float, default=1e-5, help="maximum relative error")
    sp.add_argument("--nu", type=_pos_float, default=5.0, help="degrees of freedom")
    sp.add_argument("--projection", choices=PROJECTION_MODES, default="anchored", help="linearisation")
    sp.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except UsageError as exc:
        print(f"tview: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, TViewError, ValueError) as exc:
        print(f"tview {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
