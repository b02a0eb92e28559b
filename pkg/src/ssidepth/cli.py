"""Command-line entry point: ``ssidepth <command> ...``.

Exit codes: 0 ok, 2 configuration, 3 I/O, 4 parse/shape, 5 numerically
degenerate input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evalharness as ev
from . import losses as L
from . import stereopipe as sp
from . import trainer as tr
from .errors import ConfigError, ParseError, SsiError
from .grids import ValidityMask
from .io import read_pfm, read_pgm_mask, write_pfm
from .mo_opt import TaskGradient, combine, min_norm_fw
from .sampler import DatasetHandle, MixPlan

log = logging.getLogger("ssidepth")

EXIT_IO = 3


def _dump(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
    return text


def _require_files(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"input file not found: {p}")


def _load_json(path) -> dict:
    _require_files(path)
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: expected a JSON object")
    if doc.get("schema", 1) != 1:
        raise ConfigError(f"{path}: unsupported schema {doc.get('schema')!r}")
    return doc


# -- loss -------------------------------------------------------------------

def run_loss(args) -> L.LossResult:
    _require_files(args.pred, args.gt, args.mask)
    unit = "depth" if args.loss == "silog" else "disparity"
    pred = read_pfm(args.pred, unit)
    gt = read_pfm(args.gt, unit)
    mask = read_pgm_mask(args.mask) if args.mask else ValidityMask.like(gt)
    trim = L.TrimConfig(args.trim)
    gm = L.GradMatchConfig(args.levels)
    if args.loss == "total":
        return L.total_loss(pred, gt, mask, L.TotalLossConfig(args.alpha, args.base), trim, gm)
    if args.loss == "ssitrim":
        return L.ssitrim(pred, gt, mask, trim)
    if args.loss == "ordinal":
        return L.ordinal(pred, gt, mask, args.pairs, args.ratio_threshold, args.seed)
    if args.loss == "nmg":
        return L.nmg(pred, gt, mask, gm)
    if args.loss == "gradient_matching":
        return L.gradient_matching(pred, gt, mask, gm, args.aligner)
    return L.LOSSES[args.loss](pred, gt, mask)



def cmd_loss(args) -> int:
    res = run_loss(args)
    g = res.grad.values
    out = {
        "loss": args.loss,
        "value": res.value,
        "value_12g": f"{res.value:.12g}",
        "grad": {
            "l2": float(np.sqrt((g * g).sum())),
            "max_abs": float(np.abs(g).max()),
            "sum": float(g.sum()),
        },
    }
    if args.grad_out:
        write_pfm(args.grad_out, res.grad)
        out["grad_path"] = str(args.grad_out)
    _dump(out)
    return 0


# -- eval -------------------------------------------------------------------

def _descriptor(args) -> ev.DatasetDescriptor:
    if args.dataset_descriptor:
        _require_files(args.dataset_descriptor)
        return ev.DatasetDescriptor.from_json(args.dataset_descriptor)
    if args.dataset in ev.DESCRIPTORS:
        return ev.DESCRIPTORS[args.dataset]
    raise ConfigError("pass --dataset-descriptor or a known --dataset name")


def cmd_eval(args) -> int:
    manifest = _load_json(args.manifest)
    root = Path(args.manifest).parent
    descriptor = _descriptor(args)
    pred_dir = Path(args.pred_dir)
    images = sorted(manifest.get("images", []), key=lambda e: str(e["id"]))
    if not images:
        raise ConfigError(f"{args.manifest}: no images listed")

    def resolve(p):
        return None if p is None else root / p

    annotations = {}
    if descriptor.metric == "whdr":
        ann_path = resolve(manifest.get("annotations"))
        if ann_path is None:
            raise ConfigError("WHDR evaluation needs an 'annotations' CSV in the manifest")
        _require_files(ann_path)
        annotations = ev.read_annotations(ann_path)
    for entry in images:
        _require_files(pred_dir / f"{entry['id']}.pfm", resolve(entry.get("gt")), resolve(entry.get("mask")))

    records = []
    for entry in images:
        image_id = str(entry["id"])
        pred = read_pfm(pred_dir / f"{image_id}.pfm")
        gt_path, mask_path = resolve(entry.get("gt")), resolve(entry.get("mask"))
        gt = read_pfm(gt_path, "depth" if descriptor.gt_unit == "depth" else "disparity") if gt_path else None
        mask = read_pgm_mask(mask_path) if mask_path else None
        records.append(ev.evaluate_image(image_id, descriptor, pred, gt, mask, annotations.get(image_id, ())))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "per_image.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "dataset", "metric", "value", "status", "reason"])
        for rec in records:
            if isinstance(rec, ev.SkipRecord):
                writer.writerow([rec.image_id, rec.dataset, descriptor.metric, "", "skipped", rec.reason])
            else:
                writer.writerow([rec.image_id, rec.dataset, rec.metric, repr(rec.value), "ok", ""])
    reports = ev.aggregate(records)
    summary = {"descriptor": descriptor.__dict__, "aggregate": [r.to_dict() for r in reports]}
    _dump(summary, out_dir / "aggregate.json")
    _dump(summary)
    return 0


# -- filter-frames ----------------------------------------------------------

def cmd_filter_frames(args) -> int:
    manifest = _load_json(args.manifest)
    root = Path(args.manifest).parent
    frames = sorted(manifest.get("frames", []), key=lambda f: str(f["id"]))
    keys = ("lr_u", "lr_v", "rl_u", "rl_v")
    for f in frames:
        missing = [k for k in keys if k not in f]
        if missing:
            raise ConfigError(f"frame {f.get('id')!r} lacks {missing}")
        _require_files(*(root / f[k] for k in keys))
    thresholds = sp.QualityThresholds(args.v_px, args.v_frac, args.h_range, args.pass_rate, args.lr_px)
    out_dir = Path(args.out_dir)
    (out_dir / "reports").mkdir(parents=True, exist_ok=True)
    accepted = []
    for f in frames:
        fid = str(f["id"])
        flow_lr = sp.FlowField(read_pfm(root / f["lr_u"], "flow_u"), read_pfm(root / f["lr_v"], "flow_v"))
        flow_rl = sp.FlowField(read_pfm(root / f["rl_u"], "flow_u"), read_pfm(root / f["rl_v"], "flow_v"))
        report = sp.frame_quality(flow_lr, flow_rl, thresholds)
        _dump({"id": fid, **report.to_dict()}, out_dir / "reports" / f"{fid}.json")
        if report.accepted:
            accepted.append(fid)
    with open(out_dir / "accepted.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["frame_id"])
        writer.writerows([fid] for fid in accepted)
    _dump({"frames": len(frames), "accepted": accepted})
    return 0


# -- train-toy --------------------------------------------------------------

def _opt_config(doc: dict) -> tr.OptimizerConfig:
    o = doc.get("optimizer", {})
    return tr.OptimizerConfig(
        algorithm=o.get("algorithm", "adam"),
        lr=float(o.get("lr", 1e-4)),
        beta1=float(o.get("beta1", 0.9)),
        beta2=float(o.get("beta2", 0.999)),
        steps=int(o.get("steps", 100)),
        schedule=o.get("schedule", "constant"),
    )


def _loss_setup(doc: dict) -> tr.LossSetup:
    lc = doc.get("loss", {})
    return tr.LossSetup(
        L.TotalLossConfig(float(lc.get("alpha", 0.5)), lc.get("base", "ssitrim")),
        L.TrimConfig(float(lc.get("trim", 0.2))),
        L.GradMatchConfig(int(lc.get("levels", 4))),
    )


def cmd_train_toy(args) -> int:
    doc = _load_json(args.config)
    mode = doc.get("mode", "naive")
    seed = int(doc.get("seed", 0))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        if mode == "robustness":
            r = doc.get("robustness", {})
            report = tr.robustness_experiment(
                grid_size=int(r.get("grid_size", 32)),
                outlier_fraction=float(r.get("outlier_fraction", 0.2)),
                outlier_magnitude=float(r.get("outlier_magnitude", 10.0)),
                seed=seed,
                kind=r.get("kind", "free_grid"),
                steps=int(r.get("steps", 4000)),
                lr=float(r.get("lr", 0.05)),
                alpha=float(r.get("alpha", 0.5)),
            )
            _dump({"mode": mode, "seed": seed, **report}, out_dir / "report.json")
            _dump(report)
            return 0
        if mode not in ("naive", "pareto"):
            raise ConfigError(f"unknown mode {mode!r}")
        data = doc.get("data", {})
        datasets = tr.make_synthetic_datasets(
            int(data.get("datasets", 2)), int(data.get("images", 4)),
            int(data.get("rows", 16)), int(data.get("cols", 16)),
            seed=seed, n_features=int(data.get("features", 0)),
        )
        kind = doc.get("predictor", "linear_features" if int(data.get("features", 0)) else "free_grid")
        plan = MixPlan(
            int(doc.get("batch_size", 2 * len(datasets))),
            tuple(DatasetHandle(d.id, len(d.samples)) for d in datasets),
            int(doc.get("epoch_images", 72_000)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SsiError):
            raise
        raise ConfigError(f"{args.config}: {exc}") from exc
    setup = _loss_setup(doc)
    train = tr.train_pareto if mode == "pareto" else tr.train_naive
    result = train(datasets, setup, _opt_config(doc), plan, seed, kind)
    result.write_csv(out_dir / "trace.csv")
    values, grads = tr.dataset_objectives(result.predictor, datasets, setup)
    report = {
        "mode": mode,
        "seed": seed,
        "final_losses": dict(zip(result.dataset_ids, values)),
        "min_norm_sq": tr.min_norm_value(grads),
    }
    _dump(report, out_dir / "report.json")
    _dump(report)
    return 0


# -- mgda -------------------------------------------------------------------

def cmd_mgda(args) -> int:
    _require_files(args.grads)
    grads = []
    with open(args.grads, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#"):
                continue
            try:
                grads.append(TaskGradient(row[0].strip(), [float(x) for x in row[1:]]))
            except ValueError as exc:
                if lineno == 1:
                    continue  # header row
                raise ParseError(f"{args.grads}:{lineno}: {exc}") from exc
    w = min_norm_fw(grads, args.max_iter, args.tol)
    point = combine(grads, w)
    _dump({
        "dataset_ids": [g.dataset_id for g in grads],
        "weights": w.alpha.tolist(),
        "min_norm_sq": float(point @ point),
    })
    return 0


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="ssidepth", description=__doc__, formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("loss", help="evaluate a loss and its gradient on PFM/PGM inputs", formatter_class=fmt)
    p.add_argument("pred", help="prediction PFM")
    p.add_argument("gt", help="ground-truth PFM")
    p.add_argument("mask", nargs="?", help="validity PGM (nonzero = valid); all valid if omitted")
    p.add_argument("--loss", default="total",
                   choices=["ssimse", "ssimae", "ssitrim", "silog", "ordinal", "nmg", "total", "gradient_matching"])
    p.add_argument("--base", default="ssitrim", choices=L.BASE_LOSSES, help="base loss for --loss total")
    p.add_argument("--alpha", type=float, default=0.5, help="gradient-matching weight")
    p.add_argument("--trim", type=float, default=0.2, help="fraction of largest residuals trimmed")
    p.add_argument("--levels", type=int, default=4, help="scale levels K")
    p.add_argument("--aligner", default="robust", choices=["lsq", "robust"],
                   help="alignment used by --loss gradient_matching")
    p.add_argument("--pairs", type=int, default=5000, help="ordinal point pairs")
    p.add_argument("--ratio-threshold", type=float, default=1.02, help="ordinal equality ratio")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grad-out", help="write the gradient grid to this PFM")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("eval", help="zero-shot evaluation of predicted disparities", formatter_class=fmt)
    p.add_argument("manifest", help="JSON {schema, images: [{id, gt, mask}], annotations}")
    p.add_argument("pred_dir", help="directory holding <id>.pfm disparity predictions")
    p.add_argument("--dataset-descriptor", help="JSON {name, metric, cap_meters, gt_unit, max_gt_depth}")
    p.add_argument("--dataset", choices=sorted(ev.DESCRIPTORS),
                   help="built-in descriptor (caps ETH3D 72, Sintel 72, KITTI 80, NYU 10, TUM 10 m)")
    p.add_argument("--out-dir", default="eval_out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("filter-frames", help="gate stereo frames on flow quality", formatter_class=fmt)
    p.add_argument("manifest", help="JSON {schema, frames: [{id, lr_u, lr_v, rl_u, rl_v}]}")
    p.add_argument("--v-px", type=float, default=2.0, help="vertical disparity limit (px)")
    p.add_argument("--v-frac", type=float, default=0.10, help="max fraction above the vertical limit")
    p.add_argument("--h-range", type=float, default=10.0, help="min horizontal disparity range (px)")
    p.add_argument("--pass-rate", type=float, default=0.70, help="min left-right consistency pass rate")
    p.add_argument("--lr-px", type=float, default=2.0, help="left-right consistency threshold (px)")
    p.add_argument("--out-dir", default="frames_out")
    p.set_defaults(func=cmd_filter_frames)

    p = sub.add_parser(
        "train-toy", formatter_class=fmt,
        help="synthetic naive/Pareto mixing or robustness runs from a JSON config",
        description="Config keys: mode (naive|pareto|robustness), seed, data, predictor, batch_size, "
                    "loss {base, alpha=0.5, trim=0.2, levels=4}, "
                    "optimizer {algorithm=adam, lr=1e-4, beta1=0.9, beta2=0.999, steps, schedule}.",
    )
    p.add_argument("config")
    p.add_argument("--out-dir", default="train_out")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("mgda", help="min-norm simplex weights for per-dataset gradients", formatter_class=fmt)
    p.add_argument("grads", help="CSV rows: dataset_id, g1, g2, ...")
    p.add_argument("--max-iter", type=int, default=250)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_mgda)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SsiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
