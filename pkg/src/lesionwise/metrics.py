"""Hard (binarized) lesion-wise evaluation.

Undefined values (zero-denominator metrics, e.g. recall with no ground-truth
components) are reported as ``None`` and excluded from aggregation; the
aggregate keeps a count of them.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .components import ComponentLabeling, label_components
from .volumes import BinaryMask, require_same_grid
from .voronoi import VoronoiPartition, voronoi_partition


@dataclass(frozen=True)
class MatchResult:
    """One-to-one component matching; a pair shares at least one voxel."""

    pairs: tuple[tuple[int, int], ...]  # (gt_id, pred_id)
    unmatched_gt: tuple[int, ...]
    unmatched_pred: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class CaseMetrics:
    """Per-case metric record. None marks an undefined value."""

    dice: float
    cc_dice: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    n_gt: int
    n_pred: int
    tp: int
    fp: int
    fn: int
    gt_volumes_mm3: np.ndarray  # per GT component, canonical order
    gt_detected: np.ndarray  # bool, aligned with gt_volumes_mm3


@dataclass(frozen=True)
class QuartileRecall:
    """Detection recall stratified by pooled GT component volume quartiles."""

    boundaries: tuple[float, float, float]  # 25/50/75th percentile cuts, mm^3
    recall_q: tuple[float | None, float | None, float | None, float | None]
    detected: tuple[int, int, int, int]
    total: tuple[int, int, int, int]


@dataclass(frozen=True)
class AggregateStat:
    mean: float
    std: float
    n: int
    n_undefined: int


def hard_dice(pred: BinaryMask, gt: BinaryMask) -> float:
    """Set Dice 2|P∩K| / (|P|+|K|); 1.0 when both masks are empty."""
    require_same_grid(pred, gt)
    inter = int(np.count_nonzero(pred.voxels & gt.voxels))
    denom = pred.foreground_count + gt.foreground_count
    if denom == 0:
        return 1.0
    return 2.0 * inter / denom


def cc_dice(
    pred: BinaryMask,
    gt: BinaryMask,
    metric: str = "voxel",
    lab: ComponentLabeling | None = None,
    part: VoronoiPartition | None = None,
) -> float | None:
    """Mean over GT components C of Dice(P ∩ R_C, C); None for empty GT.

    ``lab``/``part`` may be passed to reuse precomputed structures.
    """
    require_same_grid(pred, gt)
    if lab is None:
        lab = label_components(gt)
    if lab.count == 0:
        return None
    if part is None:
        part = voronoi_partition(lab, metric)

    n = lab.count
    p = pred.voxels
    inter = np.bincount(lab.labels[p], minlength=n + 1)[1:]
    pred_in_region = np.bincount(part.region_of[p], minlength=n + 1)[1:]
    denom = pred_in_region + lab.volumes_vox
    return float(np.mean(2.0 * inter / denom))


def _hopcroft_karp(adj: list[list[int]], n_right: int) -> list[int]:
    """Maximum bipartite matching; returns match_left (right index or -1)."""
    n_left = len(adj)
    match_l = [-1] * n_left
    match_r = [-1] * n_right
    INF = float("inf")
    dist = [INF] * n_left

    def bfs() -> bool:
        q = deque()
        for u in range(n_left):
            if match_l[u] == -1:
                dist[u] = 0
                q.append(u)
            else:
                dist[u] = INF
        found = False
        while q:
            u = q.popleft()
            for v in adj[u]:
                w = match_r[v]
                if w == -1:
                    found = True
                elif dist[w] == INF:
                    dist[w] = dist[u] + 1
                    q.append(w)
        return found

    def dfs(u: int) -> bool:
        for v in adj[u]:
            w = match_r[v]
            if w == -1 or (dist[w] == dist[u] + 1 and dfs(w)):
                match_l[u] = v
                match_r[v] = u
                return True
        dist[u] = INF
        return False

    while bfs():
        for u in range(n_left):
            if match_l[u] == -1:
                dfs(u)
    return match_l


def match_instances(
    pred_lab: ComponentLabeling, gt_lab: ComponentLabeling
) -> MatchResult:
    """Maximum-cardinality one-to-one matching on the >=1-voxel overlap graph.

    Deterministic given the canonical component IDs.
    """
    if pred_lab.labels.shape != gt_lab.labels.shape:
        raise ValueError("labelings cover different grids")

    both = (pred_lab.labels > 0) & (gt_lab.labels > 0)
    if both.any():
        edges = np.unique(
            np.stack([gt_lab.labels[both], pred_lab.labels[both]]), axis=1
        )
    else:
        edges = np.zeros((2, 0), dtype=np.int32)

    adj: list[list[int]] = [[] for _ in range(gt_lab.count)]
    for g, p in edges.T:
        adj[g - 1].append(p - 1)
    match_l = _hopcroft_karp(adj, pred_lab.count)

    pairs = tuple(
        (g + 1, v + 1) for g, v in enumerate(match_l) if v != -1
    )
    matched_pred = {v for _, v in pairs}
    unmatched_gt = tuple(g + 1 for g, v in enumerate(match_l) if v == -1)
    unmatched_pred = tuple(
        p for p in range(1, pred_lab.count + 1) if p not in matched_pred
    )
    return MatchResult(pairs, unmatched_gt, unmatched_pred)


def case_metrics(pred: BinaryMask, gt: BinaryMask, metric: str = "voxel") -> CaseMetrics:
    """All per-case metrics for one prediction/ground-truth pair."""
    require_same_grid(pred, gt)
    gt_lab = label_components(gt)
    pred_lab = label_components(pred)
    match = match_instances(pred_lab, gt_lab)

    n_gt, n_pred = gt_lab.count, pred_lab.count
    tp = len(match.pairs)
    fp = n_pred - tp
    fn = n_gt - tp

    detected = np.zeros(n_gt, dtype=bool)
    for g, _ in match.pairs:
        detected[g - 1] = True

    if n_gt > 0:
        part = voronoi_partition(gt_lab, metric)
        ccd = cc_dice(pred, gt, metric, lab=gt_lab, part=part)
        recall = tp / n_gt
    else:
        ccd = None
        recall = None
    precision = tp / (tp + fp) if tp + fp > 0 else None
    f1 = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn > 0 else None

    return CaseMetrics(
        dice=hard_dice(pred, gt),
        cc_dice=ccd,
        precision=precision,
        recall=recall,
        f1=f1,
        n_gt=n_gt,
        n_pred=n_pred,
        tp=tp,
        fp=fp,
        fn=fn,
        gt_volumes_mm3=gt_lab.volumes_mm3.copy(),
        gt_detected=detected,
    )


def quartile_recall(cases, boundaries=None) -> QuartileRecall:
    """Recall per volume quartile.

    By default the boundaries are the linearly interpolated 25/50/75th
    percentiles of all GT component volumes pooled across the evaluated
    cases; pass ``boundaries`` to reuse cut points from another set. Buckets
    are half-open with the maximum closed: (-inf, b25], (b25, b50],
    (b50, b75], (b75, +inf).
    """
    vols = np.concatenate([np.asarray(c.gt_volumes_mm3, dtype=float) for c in cases]) \
        if cases else np.zeros(0)
    det = np.concatenate([np.asarray(c.gt_detected, dtype=bool) for c in cases]) \
        if cases else np.zeros(0, dtype=bool)
    if vols.size == 0:
        raise ValueError("quartile recall needs at least one ground-truth component")

    if boundaries is None:
        b1, b2, b3 = np.percentile(vols, [25.0, 50.0, 75.0])
    else:
        b1, b2, b3 = (float(b) for b in boundaries)
        if not b1 <= b2 <= b3:
            raise ValueError("quartile boundaries must be non-decreasing")
    bucket = np.digitize(vols, [b1, b2, b3], right=True)

    detected, total, recalls = [], [], []
    for q in range(4):
        in_q = bucket == q
        t = int(np.count_nonzero(in_q))
        d = int(np.count_nonzero(det[in_q]))
        total.append(t)
        detected.append(d)
        recalls.append(d / t if t > 0 else None)
    return QuartileRecall(
        boundaries=(float(b1), float(b2), float(b3)),
        recall_q=tuple(recalls),
        detected=tuple(detected),
        total=tuple(total),
    )


METRIC_FIELDS = ("dice", "cc_dice", "precision", "recall", "f1")


def aggregate(cases) -> dict[str, AggregateStat]:
    """Mean and population std per metric over defined values."""
    cases = list(cases)
    if not cases:
        raise ValueError("cannot aggregate an empty case list")
    out = {}
    for field in METRIC_FIELDS:
        vals = [getattr(c, field) for c in cases]
        defined = np.array([v for v in vals if v is not None], dtype=float)
        n_undef = len(vals) - defined.size
        if defined.size:
            out[field] = AggregateStat(
                mean=float(defined.mean()),
                std=float(defined.std()),
                n=int(defined.size),
                n_undefined=n_undef,
            )
        else:
            out[field] = AggregateStat(
                mean=float("nan"), std=float("nan"), n=0, n_undefined=n_undef
            )
    return out
