"""26-connectivity connected-component labeling and per-component geometry."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volumes import BinaryMask, Shape, Spacing

# Full 3x3x3 structuring element: faces, edges and corners all connect.
_STRUCTURE_26 = np.ones((3, 3, 3), dtype=bool)


@dataclass(frozen=True, eq=False)
class ComponentLabeling:
    """Result of labeling a binary mask.

    ``labels`` assigns 0 to background and 1..count to foreground components.
    Component IDs are canonical: sorted by each component's minimal linear
    voxel index (x-fastest scan order), so labeling is fully deterministic
    and downstream tie-breaking can rely on the IDs.
    """

    labels: np.ndarray
    count: int
    voxel_lists: tuple[np.ndarray, ...]  # per component: (k, 3) int32 coords
    volumes_vox: np.ndarray
    volumes_mm3: np.ndarray
    spacing: Spacing

    def __post_init__(self):
        self.labels.setflags(write=False)
        self.volumes_vox.setflags(write=False)
        self.volumes_mm3.setflags(write=False)
        for v in self.voxel_lists:
            v.setflags(write=False)

    @property
    def shape(self) -> Shape:
        return Shape(*self.labels.shape)


def label_components(mask: BinaryMask) -> ComponentLabeling:
    """Label the 26-connected components of a mask.

    IDs follow first-encounter order of the canonical x-fastest scan
    (equivalently: ascending minimal linear voxel index).
    """
    raw, count = ndimage.label(mask.voxels, structure=_STRUCTURE_26)
    nx, ny, nz = mask.voxels.shape

    if count == 0:
        return ComponentLabeling(
            labels=raw.astype(np.int32),
            count=0,
            voxel_lists=(),
            volumes_vox=np.zeros(0, dtype=np.int64),
            volumes_mm3=np.zeros(0, dtype=np.float64),
            spacing=mask.spacing,
        )

    # Positions in the F-raveled array ARE the canonical linear indices.
    flat = raw.ravel(order="F")
    fg_pos = np.flatnonzero(flat)
    fg_raw = flat[fg_pos]

    # First occurrence of each raw id in scan order == its minimal linear index.
    raw_ids, first_pos = np.unique(fg_raw, return_index=True)
    order = np.argsort(first_pos, kind="stable")
    remap = np.zeros(count + 1, dtype=np.int32)
    remap[raw_ids[order]] = np.arange(1, count + 1, dtype=np.int32)

    labels = remap[raw]
    fg_new = remap[fg_raw]

    volumes_vox = np.bincount(fg_new, minlength=count + 1)[1:].astype(np.int64)

    # Group foreground positions by canonical id, ascending linear index
    # within each component (fg_pos is already ascending; stable sort keeps it).
    by_comp = np.argsort(fg_new, kind="stable")
    pos_sorted = fg_pos[by_comp]
    splits = np.cumsum(volumes_vox)[:-1]
    xs = pos_sorted % nx
    ys = (pos_sorted // nx) % ny
    zs = pos_sorted // (nx * ny)
    coords = np.stack([xs, ys, zs], axis=1).astype(np.int32)
    voxel_lists = tuple(np.split(coords, splits))

    return ComponentLabeling(
        labels=labels,
        count=int(count),
        voxel_lists=voxel_lists,
        volumes_vox=volumes_vox,
        volumes_mm3=volumes_vox * mask.spacing.voxel_volume,
        spacing=mask.spacing,
    )


def component_mask(lab: ComponentLabeling, component_id: int) -> BinaryMask:
    """Mask of the voxels carrying one component id (1..count)."""
    if not 1 <= component_id <= lab.count:
        raise ValueError(
            f"component id must be in 1..{lab.count}, got {component_id}"
        )
    return BinaryMask(lab.labels == component_id, lab.spacing)
