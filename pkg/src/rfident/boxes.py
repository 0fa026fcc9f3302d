"""Normalized spectro-temporal boxes, labels, and IoU.

x runs along frequency (image width), y along time (image height); all four
box parameters are fractions of the image.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .synth import NUM_CLASSES, EmissionClass


@dataclass(frozen=True)
class BoundingBox:
    x_c: float
    y_c: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box needs positive size, got w={self.w} h={self.h}")

    @classmethod
    def from_edges(cls, x0, y0, x1, y1) -> "BoundingBox":
        return cls((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0)

    @classmethod
    def clipped(cls, x0, y0, x1, y1, eps=1e-9) -> "BoundingBox | None":
        """Box from edges clipped to the unit square; None if nothing is left."""
        x0, x1 = max(x0, 0.0), min(x1, 1.0)
        y0, y1 = max(y0, 0.0), min(y1, 1.0)
        if x1 - x0 <= eps or y1 - y0 <= eps:
            return None
        return cls.from_edges(x0, y0, x1, y1)

    @property
    def edges(self) -> tuple[float, float, float, float]:
        return (self.x_c - self.w / 2, self.y_c - self.h / 2,
                self.x_c + self.w / 2, self.y_c + self.h / 2)

    @property
    def area(self) -> float:
        return self.w * self.h

    def translated(self, du: float, dv: float) -> "BoundingBox":
        return replace(self, x_c=self.x_c + du, y_c=self.y_c + dv)

    def is_inside_unit(self, tol=1e-9) -> bool:
        x0, y0, x1, y1 = self.edges
        return x0 >= -tol and y0 >= -tol and x1 <= 1 + tol and y1 <= 1 + tol


def iou(a: BoundingBox, b: BoundingBox) -> float:
    ax0, ay0, ax1, ay1 = a.edges
    bx0, by0, bx1, by1 = b.edges
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return min(max(inter / union, 0.0), 1.0)


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise IoU for (n, 4) and (m, 4) arrays of (x_c, y_c, w, h)."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    a0, a1 = a[:, :2] - a[:, 2:] / 2, a[:, :2] + a[:, 2:] / 2
    b0, b1 = b[:, :2] - b[:, 2:] / 2, b[:, :2] + b[:, 2:] / 2
    lo = np.maximum(a0[:, None], b0[None])
    hi = np.minimum(a1[:, None], b1[None])
    wh = np.clip(hi - lo, 0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0, inter / union, 0.0)
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class Annotation:
    cls: EmissionClass
    box: BoundingBox
    snr_db: float | None = None


@dataclass(frozen=True)
class Detection:
    cls: EmissionClass
    box: BoundingBox
    confidence: float
    class_probs: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if not self.class_probs:
            probs = [0.0] * NUM_CLASSES
            probs[int(self.cls)] = 1.0
            object.__setattr__(self, "class_probs", tuple(probs))
        elif len(self.class_probs) != NUM_CLASSES:
            raise ValueError("class_probs needs one entry per class")
        elif self.class_probs[int(self.cls)] < max(self.class_probs):
            raise ValueError("class must be the argmax of class_probs")
