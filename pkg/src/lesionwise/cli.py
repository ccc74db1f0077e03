"""Command-line driver: evaluate, compute losses, export maps and stats.

Exit codes: 0 success, 1 usage error, 2 IO/parse error, 3 some cases failed.
Reports are fully deterministic: identical inputs and configuration produce
byte-identical files regardless of the worker-pool size
(``LESIONWISE_THREADS``).
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .components import label_components
from .dataset_stats import corpus_stats
from .io import VolumeFormatError, read_mask, read_volume, write_volume
from .losses import (
    DegeneratePolicy,
    EmptyGtMode,
    LossKind,
    LossWeights,
    combined_loss,
    normalize_gradient,
)
from .metrics import aggregate, case_metrics, quartile_recall
from .phantoms import figure1_scenario, figure2_scenario
from .volumes import BinaryMask, LogitVolume, ShapeMismatchError, binarize, sigmoid
from .voronoi import EmptyGroundTruthError, voronoi_partition

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_PARTIAL = 3

TIE_POLICY = "lowest-component-id"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _worker_count() -> int:
    try:
        n = int(os.environ.get("LESIONWISE_THREADS", "4"))
    except ValueError:
        n = 4
    return max(1, n)


def _num(x):
    """JSON-safe number: None / NaN become null."""
    if x is None:
        return None
    x = float(x)
    return None if np.isnan(x) else x


def _load_prediction(path, threshold: float) -> BinaryMask:
    vol = read_volume(path)
    if isinstance(vol, LogitVolume):
        return binarize(sigmoid(vol), threshold)
    return vol


def _read_manifest(path: Path) -> list[tuple[str, str]]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise VolumeFormatError(f"cannot read manifest {path}: {exc}") from exc
    reader = csv.DictReader(_io.StringIO(text))
    fields = [f.strip() for f in (reader.fieldnames or [])]
    if fields[:2] != ["gt", "pred"]:
        raise VolumeFormatError(
            f"manifest {path} must start with header 'gt,pred', got {reader.fieldnames}"
        )
    rows = []
    for row in reader:
        gt = (row.get("gt") or "").strip()
        pred = (row.get("pred") or "").strip()
        if gt and pred:
            rows.append((gt, pred))
    return rows


def cmd_eval(args) -> int:
    formats = [f.strip() for f in args.format.split(",") if f.strip()]
    unknown = [f for f in formats if f not in ("json", "csv")]
    if unknown or not formats:
        print(f"lesionwise eval: unsupported report format {unknown}", file=sys.stderr)
        return EXIT_USAGE

    manifest = Path(args.manifest)
    try:
        rows = _read_manifest(manifest)
    except VolumeFormatError as exc:
        print(f"lesionwise eval: {exc}", file=sys.stderr)
        return EXIT_IO
    if not rows:
        print("lesionwise eval: manifest lists no cases", file=sys.stderr)
        return EXIT_USAGE

    base = manifest.parent
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def run_case(row):
        gt_rel, pred_rel = row
        gt = read_mask(base / gt_rel)
        pred = _load_prediction(base / pred_rel, args.threshold)
        return case_metrics(pred, gt, metric=args.distance)

    results = []
    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        futures = [pool.submit(run_case, row) for row in rows]
        for row, fut in zip(rows, futures):
            try:
                results.append((row, fut.result(), None))
            except (VolumeFormatError, ShapeMismatchError, OSError, ValueError) as exc:
                results.append((row, None, f"{type(exc).__name__}: {exc}"))

    case_records = []
    ok_metrics = []
    for idx, ((gt_rel, pred_rel), cm, err) in enumerate(results):
        rec = {"index": idx, "gt": gt_rel, "pred": pred_rel}
        if err is None:
            rec["status"] = "ok"
            rec["metrics"] = {
                "dice": _num(cm.dice),
                "cc_dice": _num(cm.cc_dice),
                "precision": _num(cm.precision),
                "recall": _num(cm.recall),
                "f1": _num(cm.f1),
                "n_gt": cm.n_gt,
                "n_pred": cm.n_pred,
                "tp": cm.tp,
                "fp": cm.fp,
                "fn": cm.fn,
            }
            ok_metrics.append(cm)
        else:
            rec["status"] = "error"
            rec["error"] = err
        case_records.append(rec)

    agg_rec = None
    if ok_metrics:
        agg_rec = {
            name: {
                "mean": _num(st.mean),
                "std": _num(st.std),
                "n": st.n,
                "n_undefined": st.n_undefined,
            }
            for name, st in aggregate(ok_metrics).items()
        }
    qr_rec = None
    if ok_metrics and any(c.n_gt > 0 for c in ok_metrics):
        qr = quartile_recall(ok_metrics)
        qr_rec = {
            "boundaries_mm3": [_num(b) for b in qr.boundaries],
            "recall": [_num(r) for r in qr.recall_q],
            "detected": list(qr.detected),
            "total": list(qr.total),
        }

    n_failed = sum(1 for _, _, err in results if err is not None)
    report = {
        "schema_version": 1,
        "tool": {"name": "lesionwise", "version": __version__},
        "config": _config_echo(args, command="eval"),
        "cases": case_records,
        "aggregate": agg_rec,
        "quartile_recall": qr_rec,
        "summary": {"n_cases": len(rows), "n_ok": len(ok_metrics), "n_failed": n_failed},
    }

    if "json" in formats:
        (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    if "csv" in formats:
        _write_cases_csv(out_dir / "cases.csv", case_records)

    return EXIT_PARTIAL if n_failed else EXIT_OK


def _write_cases_csv(path: Path, case_records) -> None:
    cols = [
        "index", "gt", "pred", "status",
        "dice", "cc_dice", "precision", "recall", "f1",
        "n_gt", "n_pred", "tp", "fp", "fn", "error",
    ]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for rec in case_records:
            m = rec.get("metrics", {})
            writer.writerow(
                [rec["index"], rec["gt"], rec["pred"], rec["status"]]
                + [("" if m.get(k) is None else repr(m.get(k))) for k in
                   ("dice", "cc_dice", "precision", "recall", "f1")]
                + [("" if m.get(k) is None else m.get(k)) for k in
                   ("n_gt", "n_pred", "tp", "fp", "fn")]
                + [rec.get("error", "")]
            )


def _config_echo(args, command: str) -> dict:
    cfg = {"command": command}
    for key in (
        "manifest", "gt", "logits", "masks", "name", "out",
        "loss", "w_global", "w_instance", "w_dice", "w_ce",
        "threshold", "distance", "empty_gt", "format",
    ):
        if hasattr(args, key):
            val = getattr(args, key)
            cfg[key] = str(val) if isinstance(val, Path) else val
    cfg["tie_policy"] = TIE_POLICY
    return cfg


def cmd_loss(args) -> int:
    try:
        gt = read_mask(args.gt)
        logits = read_volume(args.logits)
    except (VolumeFormatError, OSError) as exc:
        print(f"lesionwise loss: {exc}", file=sys.stderr)
        return EXIT_IO
    if not isinstance(logits, LogitVolume):
        print("lesionwise loss: the logits volume must be float-valued (f32)", file=sys.stderr)
        return EXIT_IO

    weights = LossWeights(args.w_global, args.w_instance, args.w_dice, args.w_ce)
    policy = DegeneratePolicy(EmptyGtMode(args.empty_gt))
    try:
        lv = combined_loss(args.loss, logits, gt, weights, policy, metric=args.distance)
    except ShapeMismatchError as exc:
        print(f"lesionwise loss: {exc}", file=sys.stderr)
        return EXIT_IO
    value = lv.scalar
    if args.grad_out:
        out = normalize_gradient(lv.grad) if args.normalized else lv.grad
        write_volume(LogitVolume(out, gt.spacing), args.grad_out)

    payload = {
        "tool": {"name": "lesionwise", "version": __version__},
        "config": _config_echo(args, command="loss"),
        "loss": _num(value),
    }
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def _iter_mask_files(directory: Path):
    for p in sorted(directory.iterdir()):
        name = p.name.lower()
        if name.endswith(".nii") or name.endswith(".nii.gz"):
            yield p
        elif not name.endswith(".json") and p.with_name(p.name + ".json").exists():
            yield p


def cmd_stats(args) -> int:
    directory = Path(args.masks)
    if not directory.is_dir():
        print(f"lesionwise stats: not a directory: {directory}", file=sys.stderr)
        return EXIT_IO
    paths = list(_iter_mask_files(directory))
    if not paths:
        print(f"lesionwise stats: no volumes found in {directory}", file=sys.stderr)
        return EXIT_USAGE
    try:
        stats = corpus_stats(read_mask(p) for p in paths)
    except (VolumeFormatError, OSError) as exc:
        print(f"lesionwise stats: {exc}", file=sys.stderr)
        return EXIT_IO

    cc_col = f"{stats.cc_p50:g} [{stats.cc_p25:g}, {stats.cc_p75:g}]"
    vol_col = f"{stats.vol_mean_mm3:.1f} ± {stats.vol_std_mm3:.1f}"
    header = ("CC P50 [P25, P75]", "Mean volume ± std [mm³]")
    w0 = max(len(header[0]), len(cc_col))
    w1 = max(len(header[1]), len(vol_col))
    print(f"{header[0]:<{w0}}  {header[1]:<{w1}}")
    print(f"{cc_col:<{w0}}  {vol_col:<{w1}}")
    print(f"(scans: {stats.n_scans}, components: {stats.n_components})")

    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with (out_dir / "stats.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["cc_p25", "cc_p50", "cc_p75", "vol_mean_mm3", "vol_std_mm3",
                 "n_scans", "n_components"]
            )
            writer.writerow(
                [repr(stats.cc_p25), repr(stats.cc_p50), repr(stats.cc_p75),
                 repr(stats.vol_mean_mm3), repr(stats.vol_std_mm3),
                 stats.n_scans, stats.n_components]
            )
    return EXIT_OK


def cmd_phantom(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ext = ".nii" if args.volume_format == "nifti" else ".raw"
    if args.name == "figure1":
        sc = figure1_scenario()
        write_volume(sc.gt, out_dir / f"gt{ext}")
        write_volume(sc.pred_perfect, out_dir / f"pred_perfect{ext}")
        write_volume(sc.pred_partial, out_dir / f"pred_partial{ext}")
    else:
        sc = figure2_scenario()
        write_volume(sc.gt, out_dir / f"gt{ext}")
        write_volume(sc.logits, out_dir / f"logits{ext}")
    return EXIT_OK


def cmd_voronoi(args) -> int:
    try:
        gt = read_mask(args.gt)
    except (VolumeFormatError, OSError) as exc:
        print(f"lesionwise voronoi: {exc}", file=sys.stderr)
        return EXIT_IO
    lab = label_components(gt)
    try:
        part = voronoi_partition(lab, args.distance)
    except EmptyGroundTruthError as exc:
        print(f"lesionwise voronoi: {exc}", file=sys.stderr)
        return EXIT_IO
    # Region IDs exported as f32; exact for any realistic component count.
    write_volume(
        LogitVolume(part.region_of.astype(np.float64), gt.spacing), args.out
    )
    return EXIT_OK


def _add_common_loss_flags(p):
    p.add_argument("--loss", choices=[k.value for k in LossKind], default="cc-dicece")
    p.add_argument("--w-global", dest="w_global", type=float, default=1.0)
    p.add_argument("--w-instance", dest="w_instance", type=float, default=1.0)
    p.add_argument("--w-dice", dest="w_dice", type=float, default=1.0)
    p.add_argument("--w-ce", dest="w_ce", type=float, default=1.0)


def build_parser() -> _Parser:
    parser = _Parser(prog="lesionwise", description=__doc__)
    parser.add_argument("--version", action="version", version=f"lesionwise {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate prediction/ground-truth pairs from a manifest")
    p.add_argument("--manifest", required=True, help="CSV with header gt,pred; paths relative to the manifest")
    p.add_argument("--out", required=True, help="output directory for reports")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--distance", choices=["voxel", "physical"], default="voxel")
    p.add_argument("--empty-gt", dest="empty_gt", choices=[m.value for m in EmptyGtMode],
                   default="global-only")
    p.add_argument("--format", default="json,csv", help="comma list of report formats")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("loss", help="compute a loss (and optionally its gradient map)")
    p.add_argument("--gt", required=True)
    p.add_argument("--logits", required=True)
    _add_common_loss_flags(p)
    p.add_argument("--distance", choices=["voxel", "physical"], default="voxel")
    p.add_argument("--empty-gt", dest="empty_gt", choices=[m.value for m in EmptyGtMode],
                   default="global-only")
    p.add_argument("--grad-out", dest="grad_out", default=None,
                   help="write the per-voxel gradient volume here")
    p.add_argument("--normalized", action="store_true",
                   help="export the per-panel normalized gradient instead of the raw one")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("stats", help="corpus component statistics for a directory of masks")
    p.add_argument("--masks", required=True)
    p.add_argument("--out", default=None, help="also write stats.csv to this directory")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("phantom", help="write a built-in phantom scenario to disk")
    p.add_argument("--name", choices=["figure1", "figure2"], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--volume-format", dest="volume_format", choices=["raw", "nifti"],
                   default="raw")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("voronoi", help="export the Voronoi region-id volume of a mask")
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--distance", choices=["voxel", "physical"], default="voxel")
    p.set_defaults(func=cmd_voronoi)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "threshold") and not 0.0 < args.threshold < 1.0:
        parser.error(f"--threshold must be in (0, 1), got {args.threshold}")
    return args.func(args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
