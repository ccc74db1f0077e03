"""Core 3D grid types and elementwise prediction utilities.

All volumes live on a regular lattice indexed ``(x, y, z)`` with array shape
``(nx, ny, nz)``. The canonical scan order is x-fastest: linear index
``x + nx * (y + ny * z)``, matching the on-disk layout used by
:mod:`lesionwise.io`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ShapeMismatchError(ValueError):
    """Two volumes that must share a grid have different shapes."""


@dataclass(frozen=True)
class Shape:
    """Voxel counts per axis. All strictly positive."""

    nx: int
    ny: int
    nz: int

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or n <= 0:
                raise ValueError(f"{name} must be a positive integer, got {n!r}")

    @property
    def count(self) -> int:
        return self.nx * self.ny * self.nz

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)


@dataclass(frozen=True)
class Spacing:
    """Physical voxel edge lengths in mm. All strictly positive and finite."""

    sx: float
    sy: float
    sz: float

    def __post_init__(self):
        for name in ("sx", "sy", "sz"):
            s = getattr(self, name)
            if not (isinstance(s, (int, float, np.floating)) and math.isfinite(s) and s > 0):
                raise ValueError(f"{name} must be positive and finite, got {s!r}")

    @property
    def voxel_volume(self) -> float:
        """Volume of one voxel in mm^3."""
        return float(self.sx) * float(self.sy) * float(self.sz)

    def as_tuple(self) -> tuple[float, float, float]:
        return (float(self.sx), float(self.sy), float(self.sz))


def _freeze(voxels: np.ndarray, dtype) -> np.ndarray:
    if voxels.ndim != 3:
        raise ValueError(f"expected a 3D voxel grid, got ndim={voxels.ndim}")
    out = np.array(voxels, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Dense boolean voxel grid with physical spacing.

    Immutable after construction; the voxel array is read-only and safe to
    share across workers.
    """

    voxels: np.ndarray
    spacing: Spacing

    def __post_init__(self):
        object.__setattr__(self, "voxels", _freeze(self.voxels, bool))

    @property
    def shape(self) -> Shape:
        return Shape(*self.voxels.shape)

    @property
    def foreground_count(self) -> int:
        return int(np.count_nonzero(self.voxels))


@dataclass(frozen=True, eq=False)
class LogitVolume:
    """Dense real grid of network outputs before the sigmoid. Values finite."""

    voxels: np.ndarray
    spacing: Spacing

    def __post_init__(self):
        arr = _freeze(self.voxels, np.float64)
        if not np.isfinite(arr).all():
            raise ValueError("logit volume contains NaN or Inf")
        object.__setattr__(self, "voxels", arr)

    @property
    def shape(self) -> Shape:
        return Shape(*self.voxels.shape)


@dataclass(frozen=True, eq=False)
class ProbVolume:
    """Dense real grid of foreground probabilities. Values in [0, 1]."""

    voxels: np.ndarray
    spacing: Spacing

    def __post_init__(self):
        arr = _freeze(self.voxels, np.float64)
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("probability volume has values outside [0, 1]")
        object.__setattr__(self, "voxels", arr)

    @property
    def shape(self) -> Shape:
        return Shape(*self.voxels.shape)


def require_same_grid(a, b) -> None:
    """Raise ShapeMismatchError unless the two volumes share the same shape."""
    if a.voxels.shape != b.voxels.shape:
        raise ShapeMismatchError(
            f"volume shapes differ: {a.voxels.shape} vs {b.voxels.shape}"
        )


def stable_sigmoid(logits: np.ndarray) -> np.ndarray:
    """Elementwise logistic function, overflow-safe for any finite input."""
    out = np.empty_like(logits, dtype=np.float64)
    pos = logits >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    e = np.exp(logits[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(logits: LogitVolume) -> ProbVolume:
    """Map a logit volume to probabilities with the logistic function."""
    return ProbVolume(stable_sigmoid(logits.voxels), logits.spacing)


def binarize(probs: ProbVolume, threshold: float = 0.5) -> BinaryMask:
    """Threshold a probability volume; a voxel is foreground iff p >= threshold.

    The threshold must lie strictly inside (0, 1).
    """
    if not (0.0 < threshold < 1.0):
        raise ValueError(f"threshold must be in (0, 1), got {threshold!r}")
    return BinaryMask(probs.voxels >= threshold, probs.spacing)


def linear_index(shape: Shape, x, y, z):
    """Canonical x-fastest linear index of voxel coordinates."""
    return x + shape.nx * (y + shape.ny * z)
