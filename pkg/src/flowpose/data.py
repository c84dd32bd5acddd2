"""Plain data containers shared by every stage of the pipeline.

Rasters are numpy arrays indexed ``[row, col]``; coordinates handed around as
tuples are always ``(x, y)`` with ``x`` the column and ``y`` the row.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

JOINT_NAMES = ("face", "shoulder_mid", "belly", "hip_mid", "knee_mid", "ankle_mid")


@dataclass(eq=False)
class Frame:
    """Single-channel luminance image with intensities in [0, 1]."""

    luma: np.ndarray
    index: int = 0

    def __post_init__(self):
        luma = np.asarray(self.luma, dtype=np.float64)
        if luma.ndim != 2 or luma.size == 0:
            raise ValidationError(f"frame luma must be a non-empty 2-D grid, got shape {luma.shape}")
        if not np.all(np.isfinite(luma)) or luma.min() < 0.0 or luma.max() > 1.0:
            raise ValidationError("frame intensities must lie in [0, 1]")
        if self.index < 0:
            raise ValidationError(f"frame index must be non-negative, got {self.index}")
        self.luma = luma

    @property
    def height(self) -> int:
        return self.luma.shape[0]

    @property
    def width(self) -> int:
        return self.luma.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.luma.shape


@dataclass(frozen=True)
class BBox:
    """Pixel box; ``x0, y0`` inclusive, ``x1, y1`` exclusive."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValidationError(f"degenerate box {self.as_tuple()}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)

    def contains(self, xs, ys):
        """Vectorised membership test for pixel coordinates."""
        xs = np.asarray(xs)
        ys = np.asarray(ys)
        return (xs >= self.x0) & (xs < self.x1) & (ys >= self.y0) & (ys < self.y1)

    def clamp(self, width: int, height: int) -> "BBox":
        return BBox(
            min(max(self.x0, 0), width),
            min(max(self.y0, 0), height),
            min(max(self.x1, 0), width),
            min(max(self.y1, 0), height),
        )


@dataclass(frozen=True)
class Detection:
    frame_index: int
    bbox: BBox
    score: float


@dataclass
class Keypoints:
    """Ground-truth joints of one frame; absent names are unannotated."""

    frame_index: int
    joints: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        for name, (x, y) in self.joints.items():
            if name not in JOINT_NAMES:
                raise ValidationError(f"unknown joint name {name!r}")
            if not (np.isfinite(x) and np.isfinite(y)):
                raise ValidationError(f"joint {name!r} has a non-finite coordinate")


@dataclass(eq=False)
class FlowField:
    """Dense displacement field, ``vectors[..., 0]`` = u (right), ``[..., 1]`` = v (down)."""

    vectors: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=np.float64)
        if vec.ndim != 3 or vec.shape[2] != 2 or vec.shape[0] == 0 or vec.shape[1] == 0:
            raise ValidationError(f"flow vectors must have shape (H, W, 2), got {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise ValidationError("flow vectors must be finite")
        self.vectors = vec

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        return cls(np.zeros((height, width, 2)))

    @property
    def u(self) -> np.ndarray:
        return self.vectors[..., 0]

    @property
    def v(self) -> np.ndarray:
        return self.vectors[..., 1]

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]


@dataclass(eq=False)
class PartLabelMap:
    """Per-pixel part ids; 0 is background, 1..k are bands top to bottom."""

    labels: np.ndarray
    k: int = 5
    frame_index: int = 0

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValidationError(f"label map must be 2-D, got shape {labels.shape}")
        if not 1 <= self.k <= 255:
            raise ValidationError(f"part count must be in 1..255, got {self.k}")
        if labels.size and (labels.min() < 0 or labels.max() > self.k):
            raise ValidationError(f"labels must lie in 0..{self.k}")
        self.labels = labels.astype(np.uint8)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]
