"""Differentiable global and instance-aware segmentation losses.

Every loss maps (logits, ground truth) to a scalar plus the exact analytic
gradient with respect to the logits. The soft Dice term is the non-smooth
variant (no additive smoothing constant): over a voxel set S,

    dice_loss = 1 - 2 * sum_S(p * g) / (sum_S(p) + sum_S(g)),   p = sigmoid(l)

and cross-entropy is the mean over S of the stable logit form
``softplus(l) - g * l`` with gradient ``(p - g) / |S|``.

The instance-aware losses average a DiceCE term over the ground-truth
components, weighting every component equally:

* ``cc_instance_loss`` scores component C against the prediction restricted
  to C's Voronoi region, so each false positive affects exactly one
  component's term.
* ``blob_instance_loss`` scores component C against the prediction with
  probabilities zeroed on the *other* components' voxels (false positives
  everywhere remain), so each false positive affects every component's term.

Logits are clamped to [-LOGIT_CLAMP, LOGIT_CLAMP] before the sigmoid; at the
bound this changes probabilities by less than 1e-17 and keeps exp() finite.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .components import ComponentLabeling, label_components
from .volumes import BinaryMask, LogitVolume, require_same_grid
from .voronoi import EmptyGroundTruthError, VoronoiPartition, voronoi_partition

LOGIT_CLAMP = 40.0


class LossKind(str, enum.Enum):
    DICECE = "dicece"
    CC_DICECE = "cc-dicece"
    BLOB_DICECE = "blob-dicece"


class EmptyGtMode(str, enum.Enum):
    """What the combined loss does when the ground truth has no components."""

    GLOBAL_ONLY = "global-only"  # instance term is skipped entirely
    ZERO = "zero"  # instance term contributes 0 with zero gradient


@dataclass(frozen=True)
class DegeneratePolicy:
    """Degenerate-case behavior, fixed per run and recorded in reports."""

    empty_gt_loss_mode: EmptyGtMode = EmptyGtMode.GLOBAL_ONLY
    empty_denominator_dice: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.empty_denominator_dice <= 1.0:
            raise ValueError("empty_denominator_dice must be in [0, 1]")


@dataclass(frozen=True)
class LossWeights:
    """Weights of the global/instance terms and of Dice vs CE inside DiceCE."""

    w_global: float = 1.0
    w_instance: float = 1.0
    w_dice: float = 1.0
    w_ce: float = 1.0

    def __post_init__(self):
        vals = (self.w_global, self.w_instance, self.w_dice, self.w_ce)
        if any(w < 0 for w in vals):
            raise ValueError("loss weights must be non-negative")
        if all(w == 0 for w in vals):
            raise ValueError("at least one loss weight must be positive")


@dataclass(frozen=True, eq=False)
class LossValue:
    """Scalar loss plus the per-voxel gradient with respect to the logits."""

    scalar: float
    grad: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.scalar):
            raise ValueError(f"loss scalar is not finite: {self.scalar}")
        if not np.isfinite(self.grad).all():
            raise ValueError("loss gradient contains NaN or Inf")
        self.grad.setflags(write=False)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _prep(logits: LogitVolume, gt: BinaryMask, restrict):
    """Clamped logits, probabilities, sigmoid derivative and float GT."""
    require_same_grid(logits, gt)
    if restrict is not None:
        restrict = np.asarray(restrict, dtype=bool)
        if restrict.shape != logits.voxels.shape:
            raise ValueError("restrict mask shape does not match the volume")
    lc = np.clip(logits.voxels, -LOGIT_CLAMP, LOGIT_CLAMP)
    e = np.exp(-np.abs(lc))
    p = np.where(lc >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    dpdl = p * (1.0 - p)
    gf = gt.voxels.astype(np.float64)
    return lc, p, dpdl, gf, restrict


def soft_dice_loss(
    logits: LogitVolume,
    gt: BinaryMask,
    restrict: np.ndarray | None = None,
    empty_value: float = 0.0,
) -> LossValue:
    """Non-smooth soft Dice loss over the restricted voxel set.

    When the denominator is zero (empty set, or empty GT with all-zero
    probabilities) the loss is ``empty_value`` with zero gradient.
    """
    lc, p, dpdl, gf, S = _prep(logits, gt, restrict)
    if S is None:
        inter = float(np.sum(p * gf))
        denom = float(np.sum(p) + np.sum(gf))
    else:
        inter = float(np.sum(p[S] * gf[S]))
        denom = float(np.sum(p[S]) + np.sum(gf[S]))

    grad = np.zeros_like(p)
    if denom == 0.0:
        return LossValue(float(empty_value), grad)

    loss = 1.0 - 2.0 * inter / denom
    # d(loss)/dp = -2 (g * denom - inter) / denom^2 on S, 0 elsewhere
    dldp = (-2.0 / (denom * denom)) * (gf * denom - inter)
    if S is None:
        grad = dldp * dpdl
    else:
        grad[S] = (dldp * dpdl)[S]
    return LossValue(loss, grad)


def cross_entropy_loss(
    logits: LogitVolume,
    gt: BinaryMask,
    restrict: np.ndarray | None = None,
) -> LossValue:
    """Mean binary cross-entropy over the restricted voxel set (stable form)."""
    lc, p, dpdl, gf, S = _prep(logits, gt, restrict)
    ce = _softplus(lc) - gf * lc
    grad = np.zeros_like(p)
    if S is None:
        n = ce.size
        if n == 0:
            return LossValue(0.0, grad)
        loss = float(np.sum(ce)) / n
        grad = (p - gf) / n
    else:
        n = int(np.count_nonzero(S))
        if n == 0:
            return LossValue(0.0, grad)
        loss = float(np.sum(ce[S])) / n
        grad[S] = ((p - gf) / n)[S]
    return LossValue(loss, grad)


def dicece_loss(
    logits: LogitVolume,
    gt: BinaryMask,
    restrict: np.ndarray | None = None,
    w_dice: float = 1.0,
    w_ce: float = 1.0,
    empty_dice_value: float = 0.0,
) -> LossValue:
    """Weighted sum of soft Dice and cross-entropy over one voxel set."""
    d = soft_dice_loss(logits, gt, restrict, empty_value=empty_dice_value)
    c = cross_entropy_loss(logits, gt, restrict)
    return LossValue(w_dice * d.scalar + w_ce * c.scalar, w_dice * d.grad + w_ce * c.grad)


def _check_instance_inputs(logits, gt, lab):
    require_same_grid(logits, gt)
    if lab.labels.shape != gt.voxels.shape:
        raise ValueError("component labeling shape does not match the volume")
    if lab.count < 1:
        raise EmptyGroundTruthError(
            "instance loss needs at least one ground-truth component"
        )


def _cc_per_component(logits, gt, lab, part):
    """Per-component DiceCE constants for the Voronoi-restricted loss.

    Returns (p, dpdl, region index grid, inter, denom, sizes, dice, ce) where
    the per-component vectors are indexed 0..count-1.
    """
    _check_instance_inputs(logits, gt, lab)
    if part.region_of.shape != gt.voxels.shape or part.count != lab.count:
        raise ValueError("Voronoi partition does not match the labeling")
    lc, p, dpdl, gf, _ = _prep(logits, gt, None)

    region = part.region_of
    rflat = region.ravel()
    n = lab.count
    inter = np.bincount(rflat, weights=(p * gf).ravel(), minlength=n + 1)[1:]
    psum = np.bincount(rflat, weights=p.ravel(), minlength=n + 1)[1:]
    gsum = lab.volumes_vox.astype(np.float64)  # gt inside R_C is exactly C
    sizes = np.bincount(rflat, minlength=n + 1)[1:].astype(np.float64)

    denom = psum + gsum  # >= 1: every region contains its component
    dice = 1.0 - 2.0 * inter / denom
    ce_vox = _softplus(lc) - gf * lc
    ce = np.bincount(rflat, weights=ce_vox.ravel(), minlength=n + 1)[1:] / sizes
    return p, dpdl, gf, region, inter, denom, sizes, dice, ce


def cc_instance_loss(
    logits: LogitVolume,
    gt: BinaryMask,
    lab: ComponentLabeling,
    part: VoronoiPartition,
    w_dice: float = 1.0,
    w_ce: float = 1.0,
) -> LossValue:
    """Voronoi-restricted instance loss: mean over components C of
    DiceCE(prediction restricted to C's region, C).

    Regions are disjoint, so each voxel receives exactly one component's
    gradient scaled by 1/count.
    """
    p, dpdl, gf, region, inter, denom, sizes, dice, ce = _cc_per_component(
        logits, gt, lab, part
    )
    n = lab.count
    scalar = float(np.sum(w_dice * dice + w_ce * ce)) / n

    ri = region - 1
    dldp = (-2.0 / (denom * denom))[ri] * (gf * denom[ri] - inter[ri])
    grad = (w_dice * dldp * dpdl + w_ce * (p - gf) / sizes[ri]) / n
    return LossValue(scalar, grad)


def cc_instance_terms(
    logits: LogitVolume,
    gt: BinaryMask,
    lab: ComponentLabeling,
    part: VoronoiPartition,
    w_dice: float = 1.0,
    w_ce: float = 1.0,
) -> list[LossValue]:
    """Unweighted per-component terms of ``cc_instance_loss`` (no 1/count)."""
    p, dpdl, gf, region, inter, denom, sizes, dice, ce = _cc_per_component(
        logits, gt, lab, part
    )
    terms = []
    for c in range(lab.count):
        in_region = region == c + 1
        dldp = (-2.0 / (denom[c] * denom[c])) * (gf * denom[c] - inter[c])
        grad = np.where(in_region, w_dice * dldp * dpdl + w_ce * (p - gf) / sizes[c], 0.0)
        terms.append(LossValue(float(w_dice * dice[c] + w_ce * ce[c]), grad))
    return terms


def _blob_per_component(logits, gt, lab):
    """Per-component constants for the blob loss (mask-other-components form)."""
    _check_instance_inputs(logits, gt, lab)
    lc, p, dpdl, gf, _ = _prep(logits, gt, None)

    labels = lab.labels
    lflat = labels.ravel()
    n = lab.count
    vol = float(labels.size)

    p_by = np.bincount(lflat, weights=p.ravel(), minlength=n + 1)
    sp_by = np.bincount(lflat, weights=_softplus(lc).ravel(), minlength=n + 1)
    sn_by = np.bincount(lflat, weights=_softplus(-lc).ravel(), minlength=n + 1)
    gsum = lab.volumes_vox.astype(np.float64)

    # For component C the masked prediction keeps background and C itself:
    # intersection = sum_C p, denom = (sum_bg p + sum_C p) + |C|.
    inter = p_by[1:]
    denom = p_by[0] + p_by[1:] + gsum
    dice = 1.0 - 2.0 * inter / denom
    # Cross-entropy over the full lattice; masked voxels contribute zero.
    ce = (sp_by[0] + sn_by[1:]) / vol
    return p, dpdl, labels, vol, inter, denom, dice, ce


def blob_instance_loss(
    logits: LogitVolume,
    gt: BinaryMask,
    lab: ComponentLabeling,
    w_dice: float = 1.0,
    w_ce: float = 1.0,
) -> LossValue:
    """Mask-other-components instance loss: mean over components C of
    DiceCE over the full lattice with probabilities zeroed on the other
    components' voxels (false positives remain in every term).

    Masked voxels contribute zero gradient; a background voxel accumulates
    gradient from every component's term.
    """
    p, dpdl, labels, vol, inter, denom, dice, ce = _blob_per_component(logits, gt, lab)
    n = lab.count
    scalar = float(np.sum(w_dice * dice + w_ce * ce)) / n

    # Foreground voxel of component c: appears (with g=1) only in term c.
    li = labels - 1  # valid where labels > 0
    fg = labels > 0
    dldp_fg = (-2.0 / (denom * denom))[li] * (denom[li] - inter[li])
    grad_fg = w_dice * dldp_fg * dpdl + w_ce * (p - 1.0) / vol
    # Background voxel: appears (with g=0) in every term.
    s_dice = float(np.sum(2.0 * inter / (denom * denom)))
    grad_bg = w_dice * s_dice * dpdl + w_ce * n * p / vol
    grad = np.where(fg, grad_fg, grad_bg) / n
    return LossValue(scalar, grad)


def blob_instance_terms(
    logits: LogitVolume,
    gt: BinaryMask,
    lab: ComponentLabeling,
    w_dice: float = 1.0,
    w_ce: float = 1.0,
) -> list[LossValue]:
    """Unweighted per-component terms of ``blob_instance_loss`` (no 1/count)."""
    p, dpdl, labels, vol, inter, denom, dice, ce = _blob_per_component(logits, gt, lab)
    terms = []
    for c in range(lab.count):
        keep = (labels == 0) | (labels == c + 1)
        g_c = (labels == c + 1).astype(np.float64)
        dldp = (-2.0 / (denom[c] * denom[c])) * (g_c * denom[c] - inter[c])
        grad = np.where(keep, w_dice * dldp * dpdl + w_ce * (p - g_c) / vol, 0.0)
        terms.append(LossValue(float(w_dice * dice[c] + w_ce * ce[c]), grad))
    return terms


def combined_loss(
    kind: LossKind | str,
    logits: LogitVolume,
    gt: BinaryMask,
    weights: LossWeights | None = None,
    policy: DegeneratePolicy | None = None,
    *,
    metric: str = "voxel",
    lab: ComponentLabeling | None = None,
    part: VoronoiPartition | None = None,
) -> LossValue:
    """Global DiceCE plus the selected instance term, weighted 1:1 by default.

    ``lab`` and ``part`` may be supplied to reuse precomputed structures;
    they must derive from ``gt``. With no ground-truth components the
    degenerate policy decides whether the instance term is skipped
    (``global-only``) or contributes zero (``zero``); either way the value
    reduces to the global term.
    """
    kind = LossKind(kind)
    weights = weights or LossWeights()
    policy = policy or DegeneratePolicy()

    g = dicece_loss(
        logits, gt, None, weights.w_dice, weights.w_ce,
        empty_dice_value=policy.empty_denominator_dice,
    )
    scalar = weights.w_global * g.scalar
    grad = weights.w_global * g.grad
    if kind is LossKind.DICECE:
        return LossValue(scalar, grad)

    if lab is None:
        lab = label_components(gt)
    if lab.count == 0:
        # Both policies reduce to the global term; they differ only in how
        # the absent instance term is reported.
        return LossValue(scalar, grad)

    if kind is LossKind.CC_DICECE:
        if part is None:
            part = voronoi_partition(lab, metric)
        inst = cc_instance_loss(logits, gt, lab, part, weights.w_dice, weights.w_ce)
    else:
        inst = blob_instance_loss(logits, gt, lab, weights.w_dice, weights.w_ce)
    return LossValue(
        scalar + weights.w_instance * inst.scalar,
        grad + weights.w_instance * inst.grad,
    )


def normalize_gradient(grad: np.ndarray) -> np.ndarray:
    """Rescale so the maximum magnitude is 1 (sign preserved).

    An all-zero gradient normalizes to all zeros.
    """
    peak = float(np.max(np.abs(grad))) if grad.size else 0.0
    return grad / peak if peak > 0.0 else np.zeros_like(grad)


def gradient_map(
    kind: LossKind | str,
    logits: LogitVolume,
    gt: BinaryMask,
    weights: LossWeights | None = None,
    policy: DegeneratePolicy | None = None,
    *,
    metric: str = "voxel",
) -> tuple[np.ndarray, np.ndarray]:
    """Per-voxel gradient of the combined loss plus a per-panel normalized copy."""
    lv = combined_loss(kind, logits, gt, weights, policy, metric=metric)
    return lv.grad, normalize_gradient(lv.grad)
