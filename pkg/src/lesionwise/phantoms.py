"""Deterministic synthetic volumes for tests, demos and the CLI.

Generators enforce a safety margin of at least two background voxels
(Chebyshev distance >= 3) between components so the painted instance count
always equals the labeled 26-connected component count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .components import ComponentLabeling, label_components
from .losses import LOGIT_CLAMP
from .volumes import BinaryMask, LogitVolume, Shape, Spacing

# Chebyshev-radius-2 neighborhood: two components whose dilations touch are
# closer than the required two-voxel gap.
_GAP_STRUCTURE = np.ones((5, 5, 5), dtype=bool)


@dataclass(frozen=True)
class ComponentSpec:
    """One instance: an axis-aligned box or a voxel-index ball.

    ``size`` is (dx, dy, dz) for boxes and a radius (in voxel indices) for
    balls. The box spans ``center - (size - 1) // 2`` onward per axis.
    """

    center: tuple[int, int, int]
    kind: str = "box"
    size: tuple[int, int, int] | float = (1, 1, 1)

    def __post_init__(self):
        if self.kind not in ("box", "ball"):
            raise ValueError(f"kind must be 'box' or 'ball', got {self.kind!r}")
        if self.kind == "box":
            if len(self.size) != 3 or any(int(d) < 1 for d in self.size):
                raise ValueError(f"box size must be three positive ints, got {self.size!r}")
        elif self.size < 0:
            raise ValueError(f"ball radius must be >= 0, got {self.size!r}")


@dataclass(frozen=True)
class PhantomSpec:
    shape: Shape
    spacing: Spacing
    components: tuple[ComponentSpec, ...]
    seed: int = 0


def _paint(spec: ComponentSpec, shape: Shape) -> np.ndarray:
    out = np.zeros(shape.as_tuple(), dtype=bool)
    cx, cy, cz = spec.center
    if spec.kind == "box":
        dx, dy, dz = (int(d) for d in spec.size)
        x0, y0, z0 = cx - (dx - 1) // 2, cy - (dy - 1) // 2, cz - (dz - 1) // 2
        if x0 < 0 or y0 < 0 or z0 < 0 or x0 + dx > shape.nx or y0 + dy > shape.ny \
                or z0 + dz > shape.nz:
            raise ValueError(f"component {spec} exceeds the volume bounds")
        out[x0 : x0 + dx, y0 : y0 + dy, z0 : z0 + dz] = True
    else:
        r = float(spec.size)
        ri = int(np.floor(r))
        if min(cx - ri, cy - ri, cz - ri) < 0 or cx + ri >= shape.nx \
                or cy + ri >= shape.ny or cz + ri >= shape.nz:
            raise ValueError(f"component {spec} exceeds the volume bounds")
        gx = np.arange(shape.nx).reshape(-1, 1, 1) - cx
        gy = np.arange(shape.ny).reshape(1, -1, 1) - cy
        gz = np.arange(shape.nz).reshape(1, 1, -1) - cz
        out = gx * gx + gy * gy + gz * gz <= r * r
    return out


def build_phantom(spec: PhantomSpec) -> tuple[BinaryMask, ComponentLabeling]:
    """Paint the phantom and label it; exactly one component per spec entry.

    Raises ValueError if any two components come closer than a two-voxel
    background gap (Chebyshev distance < 3) or leave the volume.
    """
    if not spec.components:
        raise ValueError("phantom needs at least one component")
    painted = np.zeros(spec.shape.as_tuple(), dtype=bool)
    for i, comp in enumerate(spec.components):
        vox = _paint(comp, spec.shape)
        if ndimage.binary_dilation(vox, structure=_GAP_STRUCTURE)[painted].any():
            raise ValueError(
                f"component {i} is closer than the required 2-voxel gap to an earlier one"
            )
        painted |= vox

    mask = BinaryMask(painted, spec.spacing)
    lab = label_components(mask)
    if lab.count != len(spec.components):
        raise ValueError(
            f"painted {len(spec.components)} components but labeling found {lab.count}"
        )
    return mask, lab


def random_instances_spec(
    shape: Shape,
    spacing: Spacing,
    n_components: int,
    seed: int,
    max_extent: int = 3,
    max_tries: int = 2000,
) -> PhantomSpec:
    """Randomly place ``n_components`` well-separated boxes; deterministic per seed."""
    if n_components < 1:
        raise ValueError("need at least one component")
    rng = np.random.default_rng(seed)
    boxes: list[tuple[np.ndarray, np.ndarray]] = []  # (start, dims)
    for _ in range(max_tries):
        if len(boxes) == n_components:
            break
        dims = np.array(
            [rng.integers(1, min(max_extent, n) + 1) for n in shape.as_tuple()]
        )
        start = np.array(
            [rng.integers(0, n - d + 1) for n, d in zip(shape.as_tuple(), dims)]
        )
        ok = True
        for s0, d0 in boxes:
            axis_gap = np.maximum(start - (s0 + d0 - 1), s0 - (start + dims - 1))
            if np.max(axis_gap) < 3:  # Chebyshev distance between the boxes
                ok = False
                break
        if ok:
            boxes.append((start, dims))
    if len(boxes) < n_components:
        raise ValueError(
            f"could not place {n_components} separated components in {shape.as_tuple()}"
        )
    comps = tuple(
        ComponentSpec(
            center=tuple(int(s + (d - 1) // 2) for s, d in zip(start, dims)),
            kind="box",
            size=tuple(int(d) for d in dims),
        )
        for start, dims in boxes
    )
    return PhantomSpec(shape=shape, spacing=spacing, components=comps, seed=seed)


def _saturated(fg: np.ndarray, spacing: Spacing) -> LogitVolume:
    return LogitVolume(np.where(fg, LOGIT_CLAMP, -LOGIT_CLAMP), spacing)


class Figure1Scenario(NamedTuple):
    gt: BinaryMask
    pred_perfect: LogitVolume
    pred_partial: LogitVolume


def figure1_scenario() -> Figure1Scenario:
    """16-instance phantom where the 3 largest instances carry ~88.5% of the
    foreground volume.

    ``pred_partial`` saturates exactly those 3 instances and is background
    elsewhere, so the per-instance Dice-part loss is exactly 13/16 = 0.8125
    while the global soft-Dice loss is 13/213 ~ 0.061. ``pred_perfect``
    saturates all 16.
    """
    shape = Shape(38, 38, 9)
    spacing = Spacing(1.0, 1.0, 1.0)
    starts = (3, 12, 21, 30)

    big = [
        ComponentSpec(center=(4, 4, 4), kind="box", size=(4, 3, 3)),  # 36 vox
        ComponentSpec(center=(4, 13, 4), kind="box", size=(4, 3, 3)),  # 36 vox
        ComponentSpec(center=(6, 21, 3), kind="box", size=(7, 2, 2)),  # 28 vox
    ]
    small = [
        ComponentSpec(center=(starts[i] + 2, starts[j] + 2, 4))
        for i in range(4)
        for j in range(4)
        if not (i == 0 and j < 3)  # cells taken by the big instances
    ]
    spec = PhantomSpec(shape, spacing, tuple(big + small))
    gt, _ = build_phantom(spec)

    big_fg = np.zeros(shape.as_tuple(), dtype=bool)
    for comp in big:
        big_fg |= _paint(comp, shape)
    return Figure1Scenario(
        gt=gt,
        pred_perfect=_saturated(gt.voxels, spacing),
        pred_partial=_saturated(big_fg, spacing),
    )


class Figure2Scenario(NamedTuple):
    gt: BinaryMask
    logits: LogitVolume
    fp_blob: np.ndarray  # bool grid of the false-positive blob


def figure2_scenario() -> Figure2Scenario:
    """Two unequal instances: the large one predicted (plus a false-positive
    blob inside its Voronoi region), the small corner one missed entirely.

    Logits are +/-6: confident but unsaturated, so the cross-entropy term
    dominates the gradients. Under the region-restricted loss the missed
    component's small Voronoi region concentrates its gradient (the panel
    peak sits on the false negative), while under the blob loss the false
    positive feeds every component's term and carries the peak instead.
    """
    shape = Shape(32, 16, 3)
    spacing = Spacing(1.0, 1.0, 1.0)
    spec = PhantomSpec(
        shape,
        spacing,
        (
            ComponentSpec(center=(5, 6, 1), kind="box", size=(8, 6, 1)),  # large
            ComponentSpec(center=(27, 12, 1), kind="box", size=(2, 2, 1)),  # small
        ),
    )
    gt, _ = build_phantom(spec)

    fp = np.zeros(shape.as_tuple(), dtype=bool)
    fp[14:16, 1:3, 1] = True

    large = _paint(spec.components[0], shape)
    logits = LogitVolume(np.where(large | fp, 6.0, -6.0), spacing)
    return Figure2Scenario(gt=gt, logits=logits, fp_blob=fp)
