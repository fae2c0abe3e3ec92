"""Command-line entry point: ``mink3d <subcommand> ...``.

Stages communicate through files. Errors go to stderr as a single line
``mink3d: error: <kind>: <message>`` with exit code 2 for invalid input or
configuration and 1 for failures during processing.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .aniso_mf import anisotropy_map, write_map
from .calibration import calibrate_volume, read_calibration
from .features import (FeatureBlock, assemble, read_feature_matrix, select_columns,
                       write_feature_matrix)
from .learn import LinearModel, TrainConfig, fit
from .local_mf import local_mf, make_box_kernel, make_isotropic_gaussian, write_table
from .minkowski import global_mf
from .phantom import PHANTOM_KINDS, PhantomSpec, generate, generate_cohort, write_cohort
from .pipeline import (ConfigError, evaluate, expand_groups, group_blocks, load_config,
                       load_specimens)
from .stats_eval import (compare_to_baseline, quartile_table, read_results, write_comparisons,
                         write_results)
from .voi import fit_sphere, read_points, scale_and_mask
from .volume import (load_mask, load_raw, read_header, save_mask, save_raw, header_path,
                     threshold)

logger = logging.getLogger("mink3d")


class UsageError(Exception):
    pass


def _require(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise UsageError(f"input not found: {p}")


def _out(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _load_binary(path, t=None):
    _require(path, header_path(path))
    if read_header(header_path(path))["value_kind"] == "MASK":
        return load_mask(path)
    if t is None:
        raise UsageError(f"{path} is a scalar volume; pass --threshold")
    return threshold(load_raw(path), t)


# -- subcommands -------------------------------------------------------------


def cmd_mf_global(args):
    mf = global_mf(_load_binary(args.input, args.threshold))
    print(f"volume={mf.volume} surface={mf.surface} "
          f"mean_breadth={mf.mean_breadth} euler={mf.euler}")


def cmd_calibrate(args):
    _require(args.volume, args.calibration)
    vol = load_raw(args.volume)
    save_raw(calibrate_volume(vol, read_calibration(args.calibration)), _out(args.out))


def cmd_threshold(args):
    _require(args.volume)
    binary = threshold(load_raw(args.volume), args.t)
    if args.mask:
        mask = load_mask(args.mask)
        binary = type(binary)(binary.voxels & mask.voxels, binary.spacing)
    save_mask(binary, _out(args.out))


def cmd_voi_mask(args):
    _require(args.points, args.volume)
    voi = fit_sphere(read_points(args.points))
    logger.info("sphere centre=%s radius=%.6g mm", voi.center, voi.radius)
    save_mask(scale_and_mask(voi, load_raw(args.volume), args.scale), _out(args.out))


def cmd_imf(args):
    binary = _load_binary(args.binary, args.threshold)
    if args.kernel == "box":
        kernel = make_box_kernel(args.size)
    else:
        kernel = make_isotropic_gaussian(args.size, args.sigma or args.size / 4.0)
    write_table(local_mf(binary, kernel), _out(args.out))


def cmd_amf(args):
    binary = _load_binary(args.binary, args.threshold)
    write_map(anisotropy_map(binary, args.size, args.ratio, sigma_long=args.sigma_long),
              _out(args.out))


def _config_from(args):
    cfg = load_config(
        getattr(args, "config", None),
        manifest=getattr(args, "manifest", None),
        threshold=getattr(args, "threshold", None),
        kernel_sizes=getattr(args, "kernel_sizes", None),
        sigma_ratios=getattr(args, "sigma_ratios", None),
        groups=getattr(args, "groups", None),
        methods=getattr(args, "methods", None),
        seed=getattr(args, "seed", None),
        iterations=getattr(args, "iterations", None),
        out_dir=getattr(args, "out_dir", None),
    )
    return cfg.validate()


def cmd_features(args):
    """Static feature matrix; IMF bin ranges come from all listed specimens."""
    cfg = _config_from(args)
    specimens = load_specimens(cfg.manifest, cfg.threshold)
    index = np.arange(len(specimens))
    blocks_per_specimen = [[] for _ in specimens]
    for gid, spec, size, ratio in expand_groups(cfg.groups, cfg.kernel_sizes, cfg.sigma_ratios):
        X = np.hstack([b.fit_transform(index, index[:0])[0]
                       for b in group_blocks(spec, specimens, size, ratio, cfg)])
        for q in index:
            blocks_per_specimen[q].append(FeatureBlock(gid, X[q]))
    vectors = [assemble(s.specimen_id, blocks) for s, blocks in zip(specimens, blocks_per_specimen)]
    write_feature_matrix(_out(args.out), vectors, [s.fl_kn for s in specimens])


def cmd_train(args):
    _require(args.features)
    ids, targets, labels, X = read_feature_matrix(args.features)
    if targets is None:
        raise UsageError("training needs FL_kN for every specimen")
    if args.columns:
        keep = [i for i, lab in enumerate(labels)
                if any(lab == p or lab.startswith(p + "[") for p in args.columns)]
        X = select_columns(labels, X, args.columns)
        labels = [labels[i] for i in keep]
    config = TrainConfig(method=args.method, C=args.C, epsilon=args.epsilon, lam=args.lam)
    fit(X, targets, config, labels).save(_out(args.out))


def cmd_predict(args):
    _require(args.model, args.features)
    model = LinearModel.load(args.model)
    ids, _, labels, X = read_feature_matrix(args.features)
    X = select_columns(labels, X, model.feature_names) if model.feature_names else X
    with open(_out(args.out), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["specimen_id", "FL_pred_kN"])
        for sid, p in zip(ids, np.atleast_1d(model.predict(X))):
            writer.writerow([sid, repr(float(p))])


def cmd_evaluate(args):
    cfg = _config_from(args)
    specimens = load_specimens(cfg.manifest, cfg.threshold)
    distributions, _ = evaluate(specimens, cfg)
    out = _out(Path(cfg.out_dir) / "results.csv")
    write_results(out, distributions)
    logger.info("wrote %s", out)


def cmd_compare(args):
    _require(args.results)
    comps = compare_to_baseline(read_results(args.results), args.baseline,
                                args.baseline_method, args.alpha)
    write_comparisons(_out(args.out), comps)


def cmd_plot_data(args):
    _require(args.results)
    with open(_out(args.out), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "method", "median", "q25", "q75", "mean", "std"])
        for row in quartile_table(read_results(args.results)):
            writer.writerow([row[0], row[1], *(repr(float(v)) for v in row[2:])])


def cmd_phantom(args):
    if args.cohort:
        manifest = write_cohort(generate_cohort(args.cohort, args.seed), args.out)
        logger.info("wrote %s", manifest)
        return
    direction = tuple(float(v) for v in args.direction.split(","))
    spec = PhantomSpec(kind=args.kind, dims=(args.size,) * 3, direction=direction,
                       fraction=args.fraction, thickness=args.thickness, seed=args.seed)
    save_raw(generate(spec).volume, _out(Path(args.out) / f"{args.kind}_bmd.raw"))


# -- parser ------------------------------------------------------------------


def _ints(text):
    return tuple(int(v) for v in text.split(","))


def _floats(text):
    return tuple(float(v) for v in text.split(","))


def _strs(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _pipeline_flags(p, evaluate_flags=True):
    p.add_argument("--config", help="key = value config file (flags override it)")
    p.add_argument("--manifest", help="cohort manifest CSV")
    p.add_argument("--threshold", type=float, help="BMD threshold (default 400)")
    p.add_argument("--kernel-sizes", type=_ints, help="comma-separated odd sizes")
    p.add_argument("--sigma-ratios", type=_floats, help="comma-separated ratios")
    p.add_argument("--groups", type=_strs,
                   help="comma-separated groups, e.g. DXA_BMD,DXA_BMD+AMF.euler.FA/phi")
    if evaluate_flags:
        p.add_argument("--methods", type=_strs, help="multireg, svr and/or multireg_gd")
        p.add_argument("--seed", type=int, help="split seed")
        p.add_argument("--iterations", type=int, help="number of random splits")
        p.add_argument("--out-dir", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="mink3d", description="Minkowski-functional bone texture pipeline.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log one line per stage")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mf-global", help="global Minkowski functionals of a mask")
    p.add_argument("input", help="mask file, or scalar volume with --threshold")
    p.add_argument("--threshold", type=float, help="BMD threshold when the input is a scalar volume")
    p.set_defaults(func=cmd_mf_global)

    p = sub.add_parser("calibrate", help="convert an HU volume to BMD")
    p.add_argument("--volume", required=True, help="input HU volume (.raw with .hdr sidecar)")
    p.add_argument("--calibration", required=True, help="slice_index,HU_W,HU_B table")
    p.add_argument("--out", required=True, help="output BMD volume")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("threshold", help="binarize a BMD volume (white iff value >= t)")
    p.add_argument("--volume", required=True, help="input BMD volume")
    p.add_argument("--t", type=float, default=400.0, help="threshold in mg/cm^3")
    p.add_argument("--mask", help="restrict to a VOI mask")
    p.add_argument("--out", required=True, help="output mask")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("voi-mask", help="fit a sphere to surface points and rasterize it")
    p.add_argument("--points", required=True, help="CSV x_mm,y_mm,z_mm")
    p.add_argument("--volume", required=True, help="volume giving dims and spacing")
    p.add_argument("--scale", type=float, default=0.75, help="radius scale factor in (0, 1]")
    p.add_argument("--out", required=True, help="output mask")
    p.set_defaults(func=cmd_voi_mask)

    p = sub.add_parser("imf", help="isotropic local MF table")
    p.add_argument("--binary", required=True, help="mask, or scalar volume with --threshold")
    p.add_argument("--threshold", type=float, help="BMD threshold for a scalar input")
    p.add_argument("--size", type=int, default=5, help="odd kernel edge length")
    p.add_argument("--kernel", choices=("box", "gaussian"), default="box", help="kernel weights")
    p.add_argument("--sigma", type=float, help="Gaussian sigma in voxels (default size/4)")
    p.add_argument("--out", required=True, help="output CSV table")
    p.set_defaults(func=cmd_imf)

    p = sub.add_parser("amf", help="anisotropy map (FA, theta, phi per voxel)")
    p.add_argument("--binary", required=True, help="mask, or scalar volume with --threshold")
    p.add_argument("--threshold", type=float, help="BMD threshold for a scalar input")
    p.add_argument("--size", type=int, default=5, help="odd kernel edge length")
    p.add_argument("--ratio", type=float, default=4.0, help="long/short sigma ratio (>= 1)")
    p.add_argument("--sigma-long", type=float, help="long-axis sigma in voxels (default size/4)")
    p.add_argument("--out", required=True, help="output CSV map")
    p.set_defaults(func=cmd_amf)

    p = sub.add_parser("features", help="feature matrix CSV for a cohort")
    _pipeline_flags(p, evaluate_flags=False)
    p.add_argument("--out", required=True, help="output feature matrix CSV")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="fit a model on a feature matrix")
    p.add_argument("--features", required=True, help="feature matrix CSV")
    p.add_argument("--columns", type=_strs, help="feature blocks to use (default all)")
    p.add_argument("--method", default="multireg", help="multireg, multireg_gd or svr")
    p.add_argument("--C", type=float, default=1.0, help="SVR penalty weight")
    p.add_argument("--epsilon", type=float, default=0.1, help="SVR insensitivity half-width (in standardized units)")
    p.add_argument("--lam", type=float, default=0.0, help="L2 penalty (normal equation / GD)")
    p.add_argument("--out", required=True, help="output model JSON")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="apply a saved model to a feature matrix")
    p.add_argument("--model", required=True, help="model JSON from train")
    p.add_argument("--features", required=True, help="feature matrix CSV")
    p.add_argument("--out", required=True, help="output predictions CSV")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="repeated 80/20 split RMSE evaluation")
    _pipeline_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="Wilcoxon + Holm comparisons against a baseline group")
    p.add_argument("--results", required=True, help="results CSV from evaluate")
    p.add_argument("--baseline", default="DXA_BMD", help="baseline group id")
    p.add_argument("--baseline-method", default="multireg_normal",
                   help="method of the baseline distribution, or 'same'")
    p.add_argument("--alpha", type=float, default=0.05, help="family-wise significance level")
    p.add_argument("--out", required=True, help="output comparisons CSV")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("plot-data", help="per-group RMSE quartiles for box plots")
    p.add_argument("--results", required=True, help="results CSV from evaluate")
    p.add_argument("--out", required=True, help="output quartile CSV")
    p.set_defaults(func=cmd_plot_data)

    p = sub.add_parser("phantom", help="synthetic phantom or labelled cohort")
    p.add_argument("--cohort", type=int, help="number of specimens (writes a manifest)")
    p.add_argument("--kind", choices=PHANTOM_KINDS, default="rod_lattice", help="single phantom structure")
    p.add_argument("--size", type=int, default=32, help="edge length in voxels")
    p.add_argument("--direction", default="1,0,0", help="structure axis as x,y,z")
    p.add_argument("--fraction", type=float, default=0.2, help="structure volume fraction")
    p.add_argument("--thickness", type=float, default=3.0, help="rod/plate thickness or blob radius in voxels")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--out", default="cohort", help="output directory (default ./cohort)")
    p.set_defaults(func=cmd_phantom)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"mink3d: error: usage: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"mink3d: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
