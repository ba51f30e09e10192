"""``scenecast`` command line: simgen, forecast and evaluate.

Exit codes: 0 ok, 2 usage, 3 data error, 4 numerical degeneracy.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import imageio
from .errors import DataError, DegenerateGeometryError, DomainError
from .geometry import Pose, pose_compose, pose_inverse
from .metrics import epe_3d, format_report, frame_metrics, pose_error
from .motion import MotionConfig, MultiScaleSchedule
from .render import ForecastConfig, RenderConfig, forecast_frame, render_view
from .simulator import (generate_sequence, ground_truth_flow, load_dataset, load_scene,
                        render_ground_truth)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DEGENERATE = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _pose_arg(text):
    try:
        return Pose.from_line(text)
    except (ValueError, DataError) as exc:
        raise argparse.ArgumentTypeError(f"expected 'qw qx qy qz tx ty tz': {exc}") from None


def _schedule_arg(text):
    try:
        return MultiScaleSchedule.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text):
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return n


def build_parser():
    p = argparse.ArgumentParser(prog="scenecast", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("simgen", help="render a synthetic dataset from a scene config")
    g.add_argument("config", type=Path, help="scene config (key = value with [section] headers)")
    g.add_argument("out", type=Path, help="output dataset directory")
    g.add_argument("--seed", type=int, default=None, help="override the config's random seed")
    g.add_argument("--threads", type=_positive_int, default=1, help="ray-casting threads")

    f = sub.add_parser("forecast", help="forecast future frames from frames t-1 and t")
    f.add_argument("dataset", type=Path, help="dataset directory written by simgen")
    f.add_argument("--t", type=int, required=True, help="index of the current frame (needs t-1)")
    f.add_argument("--horizon", type=int, default=1, help="number of future steps (0 = view synthesis only)")
    f.add_argument("--view-offset", type=_pose_arg, default=None, metavar="POSE",
                   help="novel view as 'qw qx qy qz tx ty tz', mapping forecast-camera to view coordinates")
    f.add_argument("--out", type=Path, required=True, help="output directory")
    f.add_argument("--no-emf", action="store_true", help="disable ego-motion forecasting")
    f.add_argument("--no-omf", action="store_true", help="disable residual object motion")
    f.add_argument("--fixed-depth", type=float, default=None, metavar="D",
                   help="replace input depth with the constant D (metres)")
    f.add_argument("--corr", choices=("gt", "nn"), default="gt", help="correspondence source")
    f.add_argument("--depth-noise", type=float, default=0.0, metavar="SIGMA",
                   help="relative Gaussian noise on input depth")
    f.add_argument("--noise-seed", type=int, default=0, help="seed for --depth-noise")
    f.add_argument("--schedule", type=_schedule_arg, default=MultiScaleSchedule(),
                   help="voxel scale factors, e.g. '4,4,4,2,2,2,1,1,1'")
    f.add_argument("--compositing", choices=("soft", "zbuffer"), default="soft", help="splat compositing")
    f.add_argument("--base-radius", type=float, default=0.03, help="world-space point radius (m)")
    f.add_argument("--threads", type=_positive_int, default=1, help="worker threads")
    f.add_argument("--dump-intermediate", action="store_true",
                   help="also write splat weight/coverage grids (PFM) and flow fields")

    e = sub.add_parser("evaluate", help="score predicted frames against ground truth")
    e.add_argument("pred", type=Path, help="directory of predicted frame_NNNN.ppm files")
    e.add_argument("gt", type=Path, help="dataset or directory of ground-truth frames")
    e.add_argument("--out", type=Path, default=None, help="write the report here as well")
    return p


# --- simgen ----------------------------------------------------------------------

def cmd_simgen(args):
    spec = load_scene(args.config, seed=args.seed)
    names = generate_sequence(spec, args.out, threads=args.threads)
    k = spec.intrinsics
    print(f"wrote {len(names)} frames ({k.width}x{k.height}, {len(spec.boxes)} boxes, seed {spec.seed}) to {args.out}")
    return EXIT_OK


# --- forecast ------------------------------------------------------------------------

def _forecast_config(args, k):
    motion = MotionConfig(corr_mode=args.corr, schedule=args.schedule, use_emf=not args.no_emf,
                          use_omf=not args.no_omf, threads=args.threads)
    view = args.view_offset or Pose.identity()
    rc = RenderConfig(k, target_view=view, base_radius=args.base_radius, compositing=args.compositing,
                      threads=args.threads)
    return ForecastConfig(k, motion=motion, render=rc, fixed_depth=args.fixed_depth,
                          depth_noise=args.depth_noise, noise_seed=args.noise_seed)


def _ground_truth(ds, index, view, threads):
    if index >= len(ds):
        raise DataError(f"dataset has {len(ds)} frames; ground truth for frame {index} is missing")
    if view is None:
        return ds.frame(index).rgb
    if ds.scene is None:
        raise DataError("a view offset needs scene.cfg in the dataset to render ground truth")
    return render_ground_truth(ds.scene, index, view_offset=view, threads=threads).rgb


def _is_identity(p: Pose | None):
    return p is None or (np.all(p.t == 0) and p.q[0] == 1 and np.all(p.q[1:] == 0))


def cmd_forecast(args):
    if args.horizon < 0:
        raise UsageError("--horizon must be non-negative")
    if args.horizon == 0 and _is_identity(args.view_offset):
        raise UsageError("nothing to do: zero horizon with the identity view")
    if not args.dataset.is_dir():
        raise DataError(f"{args.dataset}: not a dataset directory")
    ds = load_dataset(args.dataset)
    if args.t < 1 or args.t >= len(ds):
        raise DataError(f"--t {args.t} needs frames t-1 and t; dataset has {len(ds)} frames")
    view = None if _is_identity(args.view_offset) else args.view_offset
    cfg = _forecast_config(args, ds.intrinsics)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    rows = []

    if args.horizon == 0:
        rgb, depth = render_view(ds.frame(args.t), cfg)
        name = imageio_names(args.t)
        imageio.write_ppm(out / name[0], rgb)
        imageio.write_pfm(out / name[1], depth)
        row = {"step": 0, **frame_metrics(rgb, _ground_truth(ds, args.t, view, args.threads))}
        rows.append(row)
    else:
        # evaluation needs ground truth through t + horizon; fail before the work
        _ground_truth_available(ds, args.t + args.horizon)
        steps = forecast_frame(ds.frame(args.t - 1), ds.frame(args.t), cfg, args.horizon)
        for st in steps:
            idx = args.t + st.step
            name = imageio_names(idx)
            imageio.write_ppm(out / name[0], st.rgb)
            imageio.write_pfm(out / name[1], st.depth)
            (out / f"ego_{idx:04d}.txt").write_text(st.ego.to_lines())
            if args.dump_intermediate:
                for tag, buf in zip(("prev", "curr"), st.buffers):
                    imageio.write_pfm(out / f"weight_{tag}_{idx:04d}.pfm", buf.weight.astype(np.float32))
                    imageio.write_pfm(out / f"coverage_{tag}_{idx:04d}.pfm", buf.coverage.astype(np.float32))
                imageio.write_flow(out / f"flow_prev_{idx:04d}.bin", st.flows[1][0])
                imageio.write_flow(out / f"flow_curr_{idx:04d}.bin", st.flows[1][1])
            row = {"step": st.step, **frame_metrics(st.rgb, _ground_truth(ds, idx, view, args.threads))}
            gt_rel = ds.scene.relative_pose(idx - 1, idx) if ds.scene else _relative(ds, idx - 1, idx)
            row["pose_rot"], row["pose_trans"] = pose_error(st.ego.T_curr_to_future, gt_rel)
            if ds.scene is not None:
                P = st.clouds[1]
                gt_flow = ground_truth_flow(ds.scene, P.positions, P.object_ids, P.local, idx - 1, idx)
                row["epe3d"] = epe_3d(st.flows[1][1], gt_flow)
            rows.append(row)

    title = (f"forecast t={args.t} horizon={args.horizon} corr={args.corr} emf={'off' if args.no_emf else 'on'} "
             f"omf={'off' if args.no_omf else 'on'} fixed_depth={args.fixed_depth} depth_noise={args.depth_noise}")
    report = format_report(rows, title)
    (out / "report.txt").write_text(report)
    sys.stdout.write(report)
    return EXIT_OK


def imageio_names(i):
    return f"frame_{i:04d}.ppm", f"depth_{i:04d}.pfm"


def _relative(ds, a, b):
    return pose_compose(ds.pose(a), pose_inverse(ds.pose(b)))


def _ground_truth_available(ds, last):
    if last >= len(ds):
        raise DataError(f"ground truth through frame {last} is needed; dataset has {len(ds)} frames")


# --- evaluate ----------------------------------------------------------------------

def _frame_files(d: Path):
    return sorted((p.name for p in d.glob("frame_*.ppm")), key=imageio.natural_key)


def cmd_evaluate(args):
    for d in (args.pred, args.gt):
        if not d.is_dir():
            raise DataError(f"{d}: not a directory")
    pred = _frame_files(args.pred)
    gt = _frame_files(args.gt)
    if not pred:
        raise DataError(f"{args.pred}: no frame_NNNN.ppm files")
    if (args.gt / "manifest.txt").exists():
        missing = [n for n in pred if n not in gt]
        if missing:
            raise DataError(f"ground truth lacks {len(missing)} predicted frames, first {missing[0]}")
    elif pred != gt:
        raise DataError(f"frame lists differ: {len(pred)} predicted vs {len(gt)} ground truth "
                        f"({pred[0]}.. vs {gt[0] if gt else '-'}..)")
    rows = []
    for i, name in enumerate(pred, start=1):
        a = imageio.read_ppm(args.pred / name)
        b = imageio.read_ppm(args.gt / name)
        if a.shape != b.shape:
            raise DataError(f"{name}: size {a.shape[:2]} vs {b.shape[:2]}")
        rows.append({"step": i, **frame_metrics(a, b)})
    report = format_report(rows, f"evaluate {args.pred} against {args.gt}")
    if args.out:
        args.out.write_text(report)
    sys.stdout.write(report)
    return EXIT_OK


COMMANDS = {"simgen": cmd_simgen, "forecast": cmd_forecast, "evaluate": cmd_evaluate}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"scenecast: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DegenerateGeometryError, DomainError) as exc:
        print(f"scenecast: numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (DataError, OSError) as exc:
        print(f"scenecast: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
