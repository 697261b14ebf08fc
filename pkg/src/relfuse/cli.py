"""Command-line surface: dataset generation, fusion, evaluation, method
comparison, prior fitting, and parameter sweeps."""

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import datasets
from .binning import (
    default_direction_codebook,
    default_rotation_codebook,
    load_codebook,
)
from .crf import PairPriorSet, fit_pairwise_prior
from .estimators import CRFRefiner, SceneFuser
from .evaluate import (
    DETECTION_CRITERIA_SETS,
    build_report,
    fused_to_predictions,
    pr_points_csv,
)
from .fusion import FusionConfig, fuse_scene, unary_as_fused
from .io import write_canonical_json
from .metrics import Thresholds
from .synthgen import LayoutConfig, NoiseProfile, default_layout, generate_scene

MODE_FLAGS = {"gt-box": "gt_box", "detection": "detection"}


def _default_seed():
    return int(os.environ.get("RELFUSE_SEED", "0"))


def _load_layout(path):
    if path is None:
        return default_layout()
    with open(path) as f:
        return LayoutConfig.from_dict(json.load(f))


def _load_noise(path):
    if path is None:
        return NoiseProfile()
    with open(path) as f:
        return NoiseProfile.from_dict(json.load(f))


def _load_codebooks(spec_arg):
    rot = default_rotation_codebook()
    direc = default_direction_codebook()
    if spec_arg:
        for path in spec_arg.split(","):
            table = load_codebook(path.strip())
            if table.bins.shape[1] == 4:
                rot = table
            else:
                direc = table
    return rot, direc


def _generate(layout, noise, n_scenes, seed, mode, jobs):
    rot = default_rotation_codebook()
    direc = default_direction_codebook()
    if jobs > 1 and n_scenes > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(
                generate_scene,
                [layout] * n_scenes, [noise] * n_scenes, [rot] * n_scenes,
                [direc] * n_scenes, [seed] * n_scenes, range(n_scenes),
                [mode] * n_scenes, chunksize=max(1, n_scenes // (4 * jobs))))
    return [generate_scene(layout, noise, rot, direc, seed, i, mode)
            for i in range(n_scenes)]


def cmd_gen(args):
    layout = _load_layout(args.layout)
    noise = _load_noise(args.noise)
    mode = MODE_FLAGS[args.mode]
    scenes = _generate(layout, noise, args.scenes, args.seed, mode, args.jobs)
    os.makedirs(args.out, exist_ok=True)
    datasets.write_dataset(scenes, args.out, layout, noise, args.seed, mode)
    print(f"wrote {len(scenes)} scenes to {args.out}")
    return 0


def cmd_fuse(args):
    scenes, manifest = datasets.read_dataset(getattr(args, "in"))
    rot, direc = _load_codebooks(args.codebooks)
    config = FusionConfig(lam=args.lam, score_threshold=args.score_thresh,
                          rotation_rel_weight_cap=args.cap,
                          mode=manifest.get("mode", "gt_box"))
    fused = [fuse_scene(s, config, rot, direc) for s in scenes]
    datasets.write_fused(fused, args.out, {
        "lambda": config.lam,
        "score_threshold": config.score_threshold,
        "rotation_rel_weight_cap": config.rotation_rel_weight_cap,
        "mode": config.mode,
        "dataset_hash": manifest["config_hash"],
    })
    print(f"wrote {len(fused)} fused scenes to {args.out}")
    return 0


def _load_thresholds(path):
    if path is None:
        return Thresholds()
    with open(path) as f:
        return Thresholds(**json.load(f))


def _criteria_sets(arg):
    if arg is None:
        return dict(DETECTION_CRITERIA_SETS)
    sets = {}
    for name in arg.split(","):
        name = name.strip()
        if name == "all":
            sets[name] = DETECTION_CRITERIA_SETS["all"]
        elif name in DETECTION_CRITERIA_SETS:
            sets[name] = DETECTION_CRITERIA_SETS[name]
        else:
            parts = tuple(name.split("+"))
            sets[name] = parts
    return sets


def _write_report(report, out_path):
    write_canonical_json(report.to_json_dict(), out_path)
    stem, _ = os.path.splitext(out_path)
    with open(stem + ".csv", "w") as f:
        f.write(report.to_csv())
    for name, det in report.detection.items():
        safe = name.replace("+", "_")
        with open(f"{stem}_pr_{safe}.csv", "w") as f:
            f.write(pr_points_csv(det["pr"]))


def cmd_eval(args):
    fused, _ = datasets.read_fused(args.pred)
    scenes, manifest = datasets.read_dataset(args.gt)
    scene_ids = {s.scene_id for s in scenes}
    missing = sorted(f.scene_id for f in fused if f.scene_id not in scene_ids)
    if missing:
        print(f"error: fused scenes not present in ground truth: {missing[:10]}"
              f" ({len(missing)} total)", file=sys.stderr)
        return 1
    layout = LayoutConfig.from_dict(manifest["layout"])
    rot, _ = _load_codebooks(None)
    thresholds = _load_thresholds(args.thresholds)
    preds = fused_to_predictions(fused, scenes, rot, layout=layout)
    report = build_report(preds, scenes, thresholds,
                          criteria_sets=_criteria_sets(args.criteria))
    _write_report(report, args.out)
    print(f"wrote {args.out}")
    return 0


def _compare_rows(scenes, manifest, methods, args):
    layout = LayoutConfig.from_dict(manifest["layout"])
    rot = default_rotation_codebook()
    thresholds = Thresholds()
    rows = []
    for method in methods:
        if method == "unary":
            fused = [unary_as_fused(s) for s in scenes]
        elif method == "fused":
            fuser = SceneFuser(lam=args.lam, score_threshold=args.score_thresh,
                               mode=manifest.get("mode", "gt_box"))
            fused = fuser.predict(scenes)
        elif method == "crf":
            if args.priors is None:
                raise ValueError("--priors is required for the crf method")
            refiner = CRFRefiner(lambda_data=args.lambda_data)
            refiner.set_priors(PairPriorSet.load(args.priors))
            fused = refiner.predict(scenes)
        else:
            raise ValueError(f"unknown method {method!r}")
        preds = fused_to_predictions(fused, scenes, rot, layout=layout)
        report = build_report(preds, scenes, thresholds, with_detection=False)
        row = [method]
        for comp in ("translation", "rotation", "scale"):
            st = report.components[comp]
            row += [f"{st.median:.6g}", f"{st.mean:.6g}", f"{st.pct_within:.6g}"]
        rows.append(",".join(row))
    return rows


def cmd_compare(args):
    scenes, manifest = datasets.read_dataset(getattr(args, "in"))
    methods = [m.strip() for m in args.methods.split(",")]
    header = ("method,trans_median,trans_mean,trans_pct,"
              "rot_median,rot_mean,rot_pct,scale_median,scale_mean,scale_pct")
    rows = _compare_rows(scenes, manifest, methods, args)
    with open(args.out, "w") as f:
        f.write(header + "\n" + "\n".join(rows) + "\n")
    print(f"wrote {args.out}")
    return 0


def cmd_fit_prior(args):
    scenes, _ = datasets.read_dataset(getattr(args, "in"))
    priors = fit_pairwise_prior(scenes, components=args.components, seed=args.seed)
    priors.save(args.out)
    print(f"wrote {len(priors)} category-pair priors to {args.out}")
    return 0


def cmd_sweep(args):
    values = [float(v) for v in args.values.split(",")]
    layout = _load_layout(args.layout)
    noise = _load_noise(args.noise)
    mode = MODE_FLAGS[args.mode]
    rot = default_rotation_codebook()
    thresholds = Thresholds()
    lines = ["param,value,trans_median,trans_mean,trans_pct,"
             "scale_median,scale_mean,scale_pct,rot_median,rot_mean,rot_pct,"
             "mean_shift_from_unary"]
    base_scenes = None
    for value in values:
        lam = args.lam
        run_noise = noise
        if args.param == "lambda":
            lam = value
        elif args.param == "kappa":
            run_noise = replace(noise, direction_kappa=value)
        elif args.param == "sigma_t_rel":
            run_noise = replace(noise, sigma_t_rel=value)
        else:
            raise ValueError(f"unknown sweep parameter {args.param!r}")
        if args.param == "lambda" and base_scenes is not None:
            scenes = base_scenes
        else:
            scenes = _generate(layout, run_noise, args.scenes, args.seed, mode, args.jobs)
            if args.param == "lambda":
                base_scenes = scenes
        config = FusionConfig(lam=lam, mode=mode)
        direc = default_direction_codebook()
        fused = [fuse_scene(s, config, rot, direc) for s in scenes]
        preds = fused_to_predictions(fused, scenes, rot, layout=layout)
        report = build_report(preds, scenes, thresholds, with_detection=False)
        shifts = [float(np.mean(np.linalg.norm(
            f.translations - np.stack([u.translation for u in s.unary]), axis=1)))
            for f, s in zip(fused, scenes)]
        row = [args.param, f"{value:.6g}"]
        for comp in ("translation", "scale", "rotation"):
            st = report.components[comp]
            row += [f"{st.median:.6g}", f"{st.mean:.6g}", f"{st.pct_within:.6g}"]
        row.append(f"{float(np.mean(shifts)):.6g}")
        lines.append(",".join(row))
    with open(args.out, "w") as f:
        f.write("\n".join(lines) + "\n")
    print(f"wrote {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="relfuse",
        description="Pose-graph fusion of per-object and pairwise 3D predictions")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--scenes", type=int, required=True)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--layout", default=None, help="layout config JSON")
    p.add_argument("--noise", default=None, help="noise profile JSON")
    p.add_argument("--mode", choices=sorted(MODE_FLAGS), default="gt-box")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fuse", help="fuse a dataset's predictions")
    p.add_argument("--in", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--score-thresh", type=float, default=0.3)
    p.add_argument("--cap", type=float, default=5.0,
                   help="rotation relative-weight cap")
    p.add_argument("--codebooks", default=None,
                   help="comma-separated codebook JSON files (rotation and/or direction)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="evaluate fused predictions")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--thresholds", default=None, help="thresholds JSON")
    p.add_argument("--criteria", default=None,
                   help="comma-separated criteria sets (default: the named sets)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="compare methods on one dataset")
    p.add_argument("--in", required=True)
    p.add_argument("--methods", default="unary,fused")
    p.add_argument("--priors", default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--lambda-data", dest="lambda_data", type=float, default=1.0)
    p.add_argument("--score-thresh", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fit-prior", help="fit category-pair mixture priors")
    p.add_argument("--in", required=True)
    p.add_argument("--components", type=int, default=10)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_prior)

    p = sub.add_parser("sweep", help="re-run fuse+eval over parameter values")
    p.add_argument("--param", choices=("lambda", "kappa", "sigma_t_rel"), required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--scenes", type=int, default=50)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--layout", default=None)
    p.add_argument("--noise", default=None)
    p.add_argument("--mode", choices=sorted(MODE_FLAGS), default="gt-box")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
