"""Image-space augmentations over cropped emission prototypes.

All four operations work on grayscale canvases. Pixels are mapped back to
energy (via the inverse grayscale mapping) whenever patches have to be
combined, so overlaps add in linear power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .boxes import Annotation, BoundingBox
from .errors import OutOfCanvas, ValidationError
from .spectral import MappingConfig, map_grayscale, pixel_to_db
from .synth import EmissionClass

CANVAS = (512, 512)


@dataclass(frozen=True)
class EmissionPrototype:
    patch: np.ndarray  # (rows, cols) uint8
    cls: EmissionClass
    native_box: BoundingBox
    canvas_shape: tuple[int, int] = CANVAS
    snr_db: float | None = None

    def __post_init__(self):
        p = np.asarray(self.patch)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValidationError("prototype patch must be a non-empty 2-D array")
        object.__setattr__(self, "patch", p.astype(np.uint8, copy=False))

    @property
    def origin(self) -> tuple[int, int]:
        """(row, col) of the patch's top-left corner on its native canvas."""
        H, W = self.canvas_shape
        x0, y0, _, _ = self.native_box.edges
        return int(round(y0 * H)), int(round(x0 * W))

    def annotation(self) -> Annotation:
        return Annotation(self.cls, self.native_box, self.snr_db)


def _pixel_box(r0, c0, rows, cols, shape) -> BoundingBox:
    H, W = shape
    return BoundingBox.from_edges(c0 / W, r0 / H, (c0 + cols) / W, (r0 + rows) / H)


def extract_prototype(img, ann: Annotation) -> EmissionPrototype:
    """Crop the pixel-aligned hull of ``ann.box`` out of a grayscale image."""
    img = np.asarray(img)
    if img.ndim == 3:
        img = img[..., 2]
    H, W = img.shape
    x0, y0, x1, y1 = ann.box.edges
    c0, c1 = max(0, math.floor(x0 * W + 1e-9)), min(W, math.ceil(x1 * W - 1e-9))
    r0, r1 = max(0, math.floor(y0 * H + 1e-9)), min(H, math.ceil(y1 * H - 1e-9))
    if c1 <= c0 or r1 <= r0:
        raise OutOfCanvas("annotation box covers no pixels")
    patch = img[r0:r1, c0:c1].copy()
    return EmissionPrototype(patch, ann.cls, _pixel_box(r0, c0, r1 - r0, c1 - c0, (H, W)),
                             (H, W), ann.snr_db)


def background(shape=CANVAS, seed=0, mapping: MappingConfig = MappingConfig()) -> np.ndarray:
    """Noise-only canvas: exponential bin energies (Rayleigh magnitudes) at the floor."""
    rng = np.random.default_rng(seed)
    e = rng.exponential(1.0, size=shape)
    with np.errstate(divide="ignore"):
        return map_grayscale(10 * np.log10(e), mapping)


def _to_energy(p, mapping):
    return 10.0 ** (pixel_to_db(p, mapping) / 10.0)


def _to_pixels(e, mapping):
    with np.errstate(divide="ignore"):
        return map_grayscale(10 * np.log10(e), mapping)


def _place(proto: EmissionPrototype, dx: int, dy: int, shape):
    r0, c0 = proto.origin
    r0, c0 = r0 + int(dy), c0 + int(dx)
    rows, cols = proto.patch.shape
    H, W = shape
    if r0 < 0 or c0 < 0 or r0 + rows > H or c0 + cols > W:
        raise OutOfCanvas(f"patch at row {r0}, col {c0} ({rows}x{cols}) leaves the {H}x{W} canvas")
    return r0, c0


def augment_collide(protos: Sequence[EmissionPrototype], placements: Sequence[tuple[int, int]],
                    canvas=None, seed=0, mapping: MappingConfig = MappingConfig()):
    """Overlay prototypes shifted by (dx, dy) pixels; overlaps add in linear power.

    Covered pixels take the summed patch energies (each patch already carries
    its own noise), uncovered ones keep the background.
    Returns (image, annotations).
    """
    if len(protos) != len(placements):
        raise ValidationError("need one placement per prototype")
    if canvas is None:
        shape = protos[0].canvas_shape if protos else CANVAS
        canvas = background(shape, seed, mapping)
    canvas = np.asarray(canvas, dtype=np.uint8)
    shape = canvas.shape
    acc = np.zeros(shape)
    covered = np.zeros(shape, dtype=bool)
    anns = []
    for proto, (dx, dy) in zip(protos, placements):
        r0, c0 = _place(proto, dx, dy, shape)
        rows, cols = proto.patch.shape
        acc[r0:r0 + rows, c0:c0 + cols] += _to_energy(proto.patch, mapping)
        covered[r0:r0 + rows, c0:c0 + cols] = True
        box = _pixel_box(r0, c0, rows, cols, shape)
        anns.append(Annotation(proto.cls, box, proto.snr_db))
    out = canvas.copy()
    out[covered] = _to_pixels(acc[covered], mapping)
    return out, anns


def augment_move(proto: EmissionPrototype, dx: int, dy: int, canvas=None, seed=0,
                 mapping: MappingConfig = MappingConfig()):
    img, anns = augment_collide([proto], [(dx, dy)], canvas, seed, mapping)
    return img, anns[0]


def augment_length(proto: EmissionPrototype, new_len_rows: int, canvas=None, seed=0,
                   mapping: MappingConfig = MappingConfig()):
    """Crop or tile the patch along time, keeping its top edge where it fits."""
    new_len_rows = int(new_len_rows)
    H = proto.canvas_shape[0]
    if not 1 <= new_len_rows <= H:
        raise ValidationError(f"new length must lie in [1, {H}] rows")
    reps = -(-new_len_rows // proto.patch.shape[0])
    patch = np.tile(proto.patch, (reps, 1))[:new_len_rows]
    r0, c0 = proto.origin
    r0 = min(r0, H - new_len_rows)
    box = _pixel_box(r0, c0, new_len_rows, patch.shape[1], proto.canvas_shape)
    return augment_move(replace(proto, patch=patch, native_box=box), 0, 0, canvas, seed, mapping)


def brighten(proto: EmissionPrototype, delta_db: float,
             mapping: MappingConfig = MappingConfig()) -> EmissionPrototype:
    """Prototype with every nonzero pixel shifted by ``gamma * delta_db`` (clamped)."""
    p = proto.patch.astype(np.float64)
    shifted = np.clip(np.floor(p + mapping.gamma * delta_db + 0.5), 0, 255)
    patch = np.where(proto.patch > 0, shifted, 0).astype(np.uint8)
    snr = None if proto.snr_db is None else proto.snr_db + delta_db
    return replace(proto, patch=patch, snr_db=snr)


def augment_brightness(proto: EmissionPrototype, delta_db: float, canvas=None, seed=0,
                       mapping: MappingConfig = MappingConfig()):
    img, ann = augment_move(brighten(proto, delta_db, mapping), 0, 0, canvas, seed, mapping)
    return img, ann
