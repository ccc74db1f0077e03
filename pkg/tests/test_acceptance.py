"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -v -s``)."""

import json
import time

import numpy as np

from lesionwise import (
    Shape,
    Spacing,
    blob_instance_loss,
    blob_instance_terms,
    build_phantom,
    cc_instance_loss,
    cc_instance_terms,
    combined_loss,
    figure1_scenario,
    figure2_scenario,
    gradient_map,
    hard_dice,
    label_components,
    match_instances,
    quartile_recall,
    random_instances_spec,
    soft_dice_loss,
    voronoi_partition,
    voronoi_partition_bruteforce,
    write_volume,
)
from lesionwise.cli import EXIT_OK, main as cli_main
from lesionwise.metrics import CaseMetrics
from oracles import (
    UNIT,
    finite_difference_grad,
    grad_errors,
    max_matching_size,
    mk_logits,
    mk_mask,
)

DYADIC = Spacing(0.5, 1.0, 2.0)


def _report(number, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[acceptance] criterion {number} ({name}): {status}  {detail}".rstrip())
    assert ok, f"criterion {number} ({name}): {detail}"


def test_criterion_1_figure1_reproduction():
    t0 = time.perf_counter()
    sc = figure1_scenario()
    lab = label_components(sc.gt)
    part = voronoi_partition(lab)

    cc = cc_instance_loss(sc.pred_partial, sc.gt, lab, part, w_dice=1.0, w_ce=0.0).scalar
    blob = blob_instance_loss(sc.pred_partial, sc.gt, lab, w_dice=1.0, w_ce=0.0).scalar
    glob = soft_dice_loss(sc.pred_partial, sc.gt).scalar

    cc_p = cc_instance_loss(sc.pred_perfect, sc.gt, lab, part, w_dice=1.0, w_ce=0.0).scalar
    blob_p = blob_instance_loss(sc.pred_perfect, sc.gt, lab, w_dice=1.0, w_ce=0.0).scalar
    glob_p = soft_dice_loss(sc.pred_perfect, sc.gt).scalar
    elapsed = time.perf_counter() - t0

    ok = (
        abs(cc - 0.8125) <= 1e-9
        and abs(blob - 0.8125) <= 1e-9
        and 0.055 <= glob <= 0.065
        and max(abs(cc_p), abs(blob_p), abs(glob_p)) <= 1e-9
        and elapsed < 1.0
    )
    _report(
        1, "figure-1 loss values", ok,
        f"cc={cc:.12f} blob={blob:.12f} global={glob:.6f} "
        f"perfect<= {max(abs(cc_p), abs(blob_p), abs(glob_p)):.2e} t={elapsed:.2f}s",
    )


def test_criterion_2_gradient_correctness():
    t0 = time.perf_counter()
    kinds = ("dicece", "cc-dicece", "blob-dicece")
    worst_rel = 0.0
    worst_abs = 0.0
    for seed in range(20):
        n = 1 + seed % 4
        spec = random_instances_spec(Shape(8, 8, 8), UNIT, n, 1000 + seed)
        gt, lab = build_phantom(spec)
        part = voronoi_partition(lab)
        rng = np.random.default_rng(seed)
        logits = rng.normal(0.0, 2.0, size=(8, 8, 8))

        for kind in kinds:
            analytic = combined_loss(
                kind, mk_logits(logits), gt, lab=lab, part=part
            ).grad
            fd = finite_difference_grad(
                lambda a: combined_loss(
                    kind, mk_logits(a), gt, lab=lab, part=part
                ).scalar,
                logits,
            )
            rel, absolute = grad_errors(analytic, fd)
            worst_rel = max(worst_rel, rel)
            worst_abs = max(worst_abs, absolute)
    elapsed = time.perf_counter() - t0
    ok = worst_rel < 1e-4 and worst_abs < 1e-7 and elapsed < 30.0
    _report(
        2, "analytic gradients vs finite differences", ok,
        f"max_rel={worst_rel:.3e} max_abs={worst_abs:.3e} t={elapsed:.1f}s",
    )


def _tie_aware_compare(lab, metric):
    """Fast vs brute-force partitions plus an independent distance table."""
    from lesionwise.voronoi import _grids, _site_sq_dist

    fast = voronoi_partition(lab, metric)
    brute = voronoi_partition_bruteforce(lab, metric)

    # independent per-component min-distance stack by direct site scan
    gx, gy, gz = _grids(lab.labels.shape)
    stacks = []
    for cid in range(1, lab.count + 1):
        d2 = None
        for sx, sy, sz in lab.voxel_lists[cid - 1]:
            site = _site_sq_dist(
                gx - int(sx), gy - int(sy), gz - int(sz), metric, lab.spacing
            )
            d2 = site if d2 is None else np.minimum(d2, site)
        stacks.append(d2)
    stack = np.stack(stacks)
    dmin = stack.min(axis=0)
    n_min = (stack == dmin).sum(axis=0)
    tie = n_min > 1

    fast_d2 = np.take_along_axis(stack, (fast.region_of - 1)[None], axis=0)[0]
    brute_d2 = np.take_along_axis(stack, (brute.region_of - 1)[None], axis=0)[0]

    agree_outside_ties = bool(np.all(fast.region_of[~tie] == brute.region_of[~tie]))
    fast_minimizes = bool(np.all(fast_d2 == dmin))
    brute_minimizes = bool(np.all(brute_d2 == dmin))
    return agree_outside_ties, fast_minimizes, brute_minimizes, fast


def test_criterion_3_voronoi_oracle_equivalence():
    t0 = time.perf_counter()
    ok = True
    detail = ""
    for seed in range(50):
        n = 1 + seed % 5
        spec = random_instances_spec(Shape(16, 16, 16), DYADIC, n, 2000 + seed)
        _, lab = build_phantom(spec)
        for metric in ("voxel", "physical"):
            agree, fast_min, brute_min, _ = _tie_aware_compare(lab, metric)
            if not (agree and fast_min and brute_min):
                ok = False
                detail = f"seed={seed} metric={metric} agree={agree} " \
                         f"fast_min={fast_min} brute_min={brute_min}"
                break
        if not ok:
            break
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 60.0
    _report(
        3, "fast partition vs brute-force oracle", ok,
        detail or f"50 masks x 2 metrics agree t={elapsed:.1f}s",
    )


def test_criterion_4_partition_invariants():
    checked = 0
    ok = True
    detail = ""
    masks = []
    for seed in range(12):
        spec = random_instances_spec(Shape(16, 16, 16), DYADIC, 1 + seed % 5, 2000 + seed)
        masks.append(build_phantom(spec)[1])
    masks.append(label_components(figure1_scenario().gt))
    masks.append(label_components(figure2_scenario().gt))

    for lab in masks:
        for metric in ("voxel", "physical"):
            part = voronoi_partition(lab, metric)
            covered = part.region_of.min() >= 1 and part.region_of.max() <= lab.count
            sizes_ok = int(part.region_sizes().sum()) == lab.labels.size
            contains = all(
                np.all(part.region_of[lab.labels == cid] == cid)
                for cid in range(1, lab.count + 1)
            )
            if not (covered and sizes_ok and contains):
                ok = False
                detail = f"invariant broken (metric={metric})"
                break
            checked += 1
    _report(4, "partition invariants", ok, detail or f"{checked} partitions checked")


def test_criterion_5_matching_optimality():
    rng = np.random.default_rng(99)
    ok = True
    detail = ""
    for case in range(200):
        n_gt = 1 + int(rng.integers(0, 6))
        n_pred = 1 + int(rng.integers(0, 6))
        gt_spec = random_instances_spec(Shape(14, 14, 6), UNIT, n_gt, 3000 + case)
        pred_spec = random_instances_spec(Shape(14, 14, 6), UNIT, n_pred, 7000 + case)
        gt, gt_lab = build_phantom(gt_spec)
        pred, pred_lab = build_phantom(pred_spec)

        result = match_instances(pred_lab, gt_lab)

        # independent overlap-graph extraction and exhaustive matching
        adj = [set() for _ in range(gt_lab.count)]
        both = gt.voxels & pred.voxels
        for g, p in zip(gt_lab.labels[both], pred_lab.labels[both]):
            adj[g - 1].add(p - 1)
        want = max_matching_size([sorted(a) for a in adj], pred_lab.count)

        overlap_ok = all(
            np.any((gt_lab.labels == g) & (pred_lab.labels == p))
            for g, p in result.pairs
        )
        gt_ids = [g for g, _ in result.pairs]
        pred_ids = [p for _, p in result.pairs]
        one_to_one = len(set(gt_ids)) == len(gt_ids) and len(set(pred_ids)) == len(pred_ids)
        valid = overlap_ok and one_to_one
        if len(result.pairs) != want or not valid:
            ok = False
            detail = f"case={case} got={len(result.pairs)} want={want} valid={valid}"
            break
    _report(5, "maximum matching vs exhaustive oracle", ok, detail or "200 cases")


def test_criterion_6_figure2_gradient_ordering():
    sc = figure2_scenario()
    lab = label_components(sc.gt)
    part = voronoi_partition(lab)
    sizes = part.region_sizes()

    _, norm = gradient_map("cc-dicece", sc.logits, sc.gt)
    fn_voxels = lab.labels == 2  # the missed small component
    fp_voxels = sc.fp_blob
    mean_fn = float(np.mean(np.abs(norm[fn_voxels])))
    mean_fp = float(np.mean(np.abs(norm[fp_voxels])))

    cc_terms = cc_instance_terms(sc.logits, sc.gt, lab, part)
    blob_terms = blob_instance_terms(sc.logits, sc.gt, lab)
    cc_hits = sum(1 for t in cc_terms if np.any(t.grad[fp_voxels] != 0.0))
    blob_hits = sum(1 for t in blob_terms if np.any(t.grad[fp_voxels] != 0.0))

    ok = (
        sizes[1] < sizes[0]
        and mean_fn > mean_fp
        and cc_hits == 1
        and blob_hits == lab.count
    )
    _report(
        6, "gradients scale with region size", ok,
        f"|grad| fn={mean_fn:.4f} > fp={mean_fp:.4f}; "
        f"fp in {cc_hits}/2 cc terms, {blob_hits}/2 blob terms",
    )


def test_criterion_7_metric_formula_suite():
    checks = []

    a = np.zeros((20, 1, 1), dtype=bool)
    a[0:10] = True
    b = np.zeros_like(a)
    b[5:15] = True
    checks.append(hard_dice(mk_mask(a), mk_mask(a)) == 1.0)
    checks.append(hard_dice(mk_mask(a), mk_mask(~a)) == 0.0)
    checks.append(hard_dice(mk_mask(a), mk_mask(b)) == 0.5)

    tp, fp, fn = 3, 1, 13
    checks.append(tp / (tp + fp) == 0.75)
    checks.append(tp / (tp + fn) == 0.1875)
    checks.append(2 * tp / (2 * tp + fp + fn) == 6 / 20)

    def case(volumes, detected):
        return CaseMetrics(
            dice=1.0, cc_dice=None, precision=None, recall=None, f1=None,
            n_gt=len(volumes), n_pred=0, tp=int(np.sum(detected)), fp=0,
            fn=len(volumes) - int(np.sum(detected)),
            gt_volumes_mm3=np.asarray(volumes, dtype=float),
            gt_detected=np.asarray(detected, dtype=bool),
        )

    qr = quartile_recall([case(range(1, 9), [v > 4.5 for v in range(1, 9)])])
    checks.append(qr.recall_q == (0.0, 0.0, 1.0, 1.0))
    qr_all = quartile_recall([case([1.0, 2.0, 3.0, 4.0], [True] * 4)])
    checks.append(qr_all.recall_q == (1.0, 1.0, 1.0, 1.0))

    ok = all(checks)
    _report(7, "metric formula hand cases", ok, f"{sum(checks)}/{len(checks)} exact")


def test_criterion_8_determinism(tmp_path, monkeypatch):
    sc1 = figure1_scenario()
    sc2 = figure2_scenario()
    write_volume(sc1.gt, tmp_path / "gt1.raw")
    write_volume(sc1.pred_partial, tmp_path / "pred1.raw")
    write_volume(sc2.gt, tmp_path / "gt2.raw")
    write_volume(sc2.logits, tmp_path / "pred2.raw")
    manifest = tmp_path / "cases.csv"
    manifest.write_text(
        "gt,pred\ngt1.raw,pred1.raw\ngt2.raw,pred2.raw\ngt1.raw,gt1.raw\n"
    )

    payloads = []
    out = tmp_path / "out"  # same directory: the config echo is part of the report
    for threads in ("1", "4"):
        monkeypatch.setenv("LESIONWISE_THREADS", threads)
        code = cli_main(["eval", "--manifest", str(manifest), "--out", str(out)])
        assert code == EXIT_OK
        payloads.append(
            ((out / "report.json").read_bytes(), (out / "cases.csv").read_bytes())
        )
    ok = payloads[0] == payloads[1]
    json.loads(payloads[0][0])  # reports must stay parseable
    _report(8, "byte-identical reports across thread counts", ok,
            f"{len(payloads[0][0])} bytes compared")
