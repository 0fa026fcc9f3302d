"""Detection-side machinery: anchors, NMS, prediction tensors, a classical detector."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .boxes import BoundingBox, Detection, iou
from .errors import LengthMismatch, TooFewBoxes
from .spectral import FrameGeometry, MappingConfig
from .synth import NUM_CLASSES, PROFILES, EmissionClass


# -- anchors ------------------------------------------------------------------------

@dataclass(frozen=True)
class AnchorSet:
    anchors: tuple[tuple[float, float], ...]
    k: int
    objective: float = math.nan
    history: tuple[float, ...] = ()

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.anchors, dtype=np.float64).reshape(-1, 2)

    def mean_iou(self, boxes) -> float:
        return float(shape_iou(np.asarray(boxes, dtype=np.float64), self.array).max(axis=1).mean())

    def to_json(self) -> list:
        return [[w, h] for w, h in self.anchors]


def shape_iou(boxes: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """IoU of (w, h) shapes sharing a common centre; (n, 2) x (k, 2) -> (n, k)."""
    iw = np.minimum(boxes[:, None, 0], centroids[None, :, 0])
    ih = np.minimum(boxes[:, None, 1], centroids[None, :, 1])
    inter = iw * ih
    union = (boxes[:, 0] * boxes[:, 1])[:, None] + (centroids[:, 0] * centroids[:, 1])[None] - inter
    return inter / union


def anchor_objective(boxes, centroids) -> float:
    """Sum over boxes of 1 - IoU with the nearest centroid."""
    return float((1.0 - shape_iou(boxes, centroids).max(axis=1)).sum())


def _means(boxes, labels, k):
    return np.array([boxes[labels == j].mean(axis=0) for j in range(k)])


def _kmeanspp(boxes, k, rng):
    centroids = [boxes[rng.integers(len(boxes))]]
    for _ in range(1, k):
        d = 1.0 - shape_iou(boxes, np.array(centroids)).max(axis=1)
        total = d.sum()
        if total <= 0:
            centroids.append(boxes[rng.integers(len(boxes))])
        else:
            centroids.append(boxes[rng.choice(len(boxes), p=d / total)])
    return np.array(centroids)


def _initial_means(boxes, seeds):
    """Means of the partition induced by the seeds, so every candidate is a partition mean.

    If a seed captures no box (duplicate shapes), fall back to splitting the
    boxes into k area-ordered chunks.
    """
    k = len(seeds)
    labels = shape_iou(boxes, seeds).argmax(axis=1)
    if (np.bincount(labels, minlength=k) == 0).any():
        order = np.argsort(boxes[:, 0] * boxes[:, 1], kind="stable")
        labels = np.empty(len(boxes), dtype=np.intp)
        for j, chunk in enumerate(np.array_split(order, k)):
            labels[chunk] = j
    return _means(boxes, labels, k)


def _lloyd(boxes, centroids, max_iter, history):
    k = len(centroids)
    best = anchor_objective(boxes, centroids)
    history.append(best)
    labels = shape_iou(boxes, centroids).argmax(axis=1)
    for _ in range(max_iter):
        counts = np.bincount(labels, minlength=k)
        if (counts == 0).any():
            break
        new = _means(boxes, labels, k)
        obj = anchor_objective(boxes, new)
        # the mean is not the 1-IoU minimiser, so only accept descending steps
        if obj >= best - 1e-15:
            break
        centroids, best = new, obj
        history.append(best)
        new_labels = shape_iou(boxes, centroids).argmax(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return centroids, labels, best


def _single_moves(boxes, centroids, labels, best, history):
    """Hartigan-style refinement: move one box at a time while it helps."""
    k = len(centroids)
    labels = labels.copy()
    improved = True
    while improved:
        improved = False
        for i in range(len(boxes)):
            src = labels[i]
            if (labels == src).sum() == 1:
                continue
            for dst in range(k):
                if dst == src:
                    continue
                labels[i] = dst
                cand = _means(boxes, labels, k)
                obj = anchor_objective(boxes, cand)
                if obj < best - 1e-12:
                    best, centroids = obj, cand
                    history.append(best)
                    improved = True
                    src = dst
                else:
                    labels[i] = src
    return centroids, labels, best


def _exact_partition_search(boxes, k):
    """Best partition-mean centroids over every labelling (small inputs only)."""
    n = len(boxes)
    # box 0 is pinned to cluster 0, which removes most relabelling symmetry
    rest = list(itertools.product(range(k), repeat=n - 1))
    labels = np.array(rest, dtype=np.intp).reshape(len(rest), n - 1)
    labels = np.hstack([np.zeros((len(labels), 1), dtype=np.intp), labels])
    onehot = labels[:, :, None] == np.arange(k)
    counts = onehot.sum(axis=1)
    full = (counts > 0).all(axis=1)
    onehot, counts = onehot[full], counts[full]
    cents = np.einsum("pnk,nd->pkd", onehot, boxes) / counts[:, :, None]
    iw = np.minimum(boxes[None, :, None, 0], cents[:, None, :, 0])
    ih = np.minimum(boxes[None, :, None, 1], cents[:, None, :, 1])
    inter = iw * ih
    union = (boxes[:, 0] * boxes[:, 1])[None, :, None] + (cents[..., 0] * cents[..., 1])[:, None, :] - inter
    obj = (1.0 - (inter / union).max(axis=2)).sum(axis=1)
    running = np.minimum.accumulate(obj)
    history = tuple(float(v) for v in running[np.r_[True, np.diff(running) < 0]])
    best = int(np.argmin(obj))
    return cents[best], float(obj[best]), history


def kmeans_anchors(boxes, k: int, seed: int = 0, restarts: int = 10,
                   max_iter: int = 300, refine_limit: int = 400,
                   exact_limit: int = 20_000) -> AnchorSet:
    """k-means over box shapes with distance 1 - IoU; best of ``restarts`` seeded runs.

    Lloyd iterations are followed by single-box moves (only for up to
    ``refine_limit`` boxes, the move search is quadratic). When there are at
    most ``exact_limit`` labellings, every partition is scored instead and
    the result is the global optimum.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 2)
    if k < 1 or len(boxes) < k:
        raise TooFewBoxes(f"need at least {k} boxes, have {len(boxes)}")
    if (boxes <= 0).any():
        raise ValueError("box shapes must be positive")
    if k ** (len(boxes) - 1) <= exact_limit:
        centroids, obj, history = _exact_partition_search(boxes, k)
        order = np.argsort(centroids[:, 0] * centroids[:, 1], kind="stable")
        return AnchorSet(tuple((float(w), float(h)) for w, h in centroids[order]), k, obj, history)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        history: list[float] = []
        centroids = _initial_means(boxes, _kmeanspp(boxes, k, rng))
        centroids, labels, obj = _lloyd(boxes, centroids, max_iter, history)
        if len(boxes) <= refine_limit and (np.bincount(labels, minlength=k) > 0).all():
            while True:
                centroids, labels, _ = _single_moves(boxes, centroids, labels, obj, history)
                centroids, labels, new = _lloyd(boxes, centroids, max_iter, history)
                done = new >= obj - 1e-12
                obj = new
                if done:
                    break
        if best is None or obj < best[0] - 1e-12:
            best = (obj, centroids, tuple(history))
    obj, centroids, history = best
    order = np.argsort(centroids[:, 0] * centroids[:, 1], kind="stable")
    anchors = tuple((float(w), float(h)) for w, h in centroids[order])
    return AnchorSet(anchors, k, obj, history)


# -- NMS -----------------------------------------------------------------------------

def nms(dets, threshold: float = 0.5) -> list[Detection]:
    """Greedy same-class suppression of boxes with IoU > threshold."""
    order = sorted(dets, key=lambda d: -d.confidence)
    kept: list[Detection] = []
    for d in order:
        if all(k.cls != d.cls or iou(k.box, d.box) <= threshold for k in kept):
            kept.append(d)
    return kept


# -- prediction tensors --------------------------------------------------------------

@dataclass(frozen=True)
class TensorLayout:
    """Per scale: S x S cells x B boxes x (confidence, x, y, w, h, C class probs)."""

    grid_sizes: tuple[int, ...] = (13, 26, 52)
    boxes_per_cell: int = 3
    num_classes: int = NUM_CLASSES

    @property
    def slots(self) -> int:
        return 1 + 4 + self.num_classes

    def scale_length(self, s: int) -> int:
        return s * s * self.boxes_per_cell * self.slots

    @property
    def total_length(self) -> int:
        return sum(self.scale_length(s) for s in self.grid_sizes)


def decode_tensor(raw, layout: TensorLayout = TensorLayout(), anchors=None,
                  conf_cutoff: float = 0.25) -> list[Detection]:
    """Flat prediction vector -> detections.

    Scales are concatenated in ``layout.grid_sizes`` order, each laid out as
    ``[cell_y][cell_x][box][slot]``. Box centres are cell-relative, w/h are
    image-relative unless ``anchors`` (one (w, h) list per scale) is given, in
    which case w/h scale the matching anchor.
    """
    raw = np.asarray(raw, dtype=np.float64).ravel()
    if raw.size != layout.total_length:
        raise LengthMismatch(f"expected {layout.total_length} values, got {raw.size}")
    out = []
    pos = 0
    for si, s in enumerate(layout.grid_sizes):
        n = layout.scale_length(s)
        t = raw[pos:pos + n].reshape(s, s, layout.boxes_per_cell, layout.slots)
        pos += n
        for cy, cx, b in zip(*np.nonzero(t[..., 0] >= conf_cutoff)):
            v = t[cy, cx, b]
            w, h = v[3], v[4]
            if anchors is not None:
                aw, ah = anchors[si][b]
                w, h = w * aw, h * ah
            if w <= 0 or h <= 0:
                continue
            xc = (cx + v[1]) / s
            yc = (cy + v[2]) / s
            box = BoundingBox.clipped(xc - w / 2, yc - h / 2, xc + w / 2, yc + h / 2)
            if box is None:
                continue
            probs = np.clip(v[5:], 0.0, None)
            total = probs.sum()
            probs = probs / total if total > 0 else np.full(layout.num_classes, 1.0 / layout.num_classes)
            cls = EmissionClass(int(np.argmax(probs)))
            out.append(Detection(cls, box, float(min(max(v[0], 0.0), 1.0)), tuple(float(p) for p in probs)))
    return out


# -- filter schedule -----------------------------------------------------------------

@dataclass(frozen=True)
class FilterSchedule:
    base_volume: int
    sigma: float
    stop_stage: int
    volumes: tuple[int, ...]
    exact_volumes: tuple[float, ...] = ()

    @property
    def total_reduction(self) -> float:
        return 1.0 - self.volumes[-1] / self.base_volume


def filter_schedule(base_volume: int, sigma: float, stop_stage: int) -> FilterSchedule:
    """U_i = round(U_{i-1} * (1 - sigma**i)) for i = 1..stop_stage."""
    if base_volume < 1:
        raise ValueError("base volume must be >= 1")
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    vols = [int(base_volume)]
    exact = [float(base_volume)]
    for i in range(1, stop_stage + 1):
        exact.append(exact[-1] * (1 - sigma ** i))
        vols.append(int(math.floor(vols[-1] * (1 - sigma ** i) + 0.5)))
    return FilterSchedule(int(base_volume), sigma, stop_stage, tuple(vols), tuple(exact))


# -- classical baseline detector -------------------------------------------------------

@dataclass(frozen=True)
class BaselineConfig:
    tau_db: float = 10.0
    smooth_rows: int = 5
    min_pixels: int = 30
    freq_trim_db: float = 6.0
    time_trim_db: float = 3.0
    nms_threshold: float = 0.5
    bandwidth_spread: float = 0.35  # log-bandwidth std for the class scores
    unresolved_cols: int = 3


def _pixels_to_energy(p, mapping):
    return 10.0 ** ((np.asarray(p, dtype=np.float64) / mapping.gamma + mapping.a_min_db) / 10.0)


def _class_scores(width_cols, duration_s, continuity, clipped_in_time, geometry, spread):
    """Soft class scores from measured width (in bins) and duration.

    A rendered emission spreads over about ``bw / bin_width + 1`` columns once
    rectangular-window leakage is counted, so widths are compared on that scale.
    """
    scores = np.empty(NUM_CLASSES)
    for c in EmissionClass:
        prof = PROFILES[c]
        expected = prof.bandwidth_hz / geometry.hz_per_column + 1.0
        d = math.log(max(width_cols, 0.5) / expected) / spread
        s = -0.5 * d * d
        lo, hi = prof.duration_range_s
        if duration_s > hi * 1.25:
            s -= 0.5 * (math.log(duration_s / hi) / 0.4) ** 2
        elif duration_s < lo * 0.75 and not clipped_in_time:
            s -= 0.5 * (math.log(lo / duration_s) / 0.4) ** 2
        if prof.continuous:
            s += continuity - 0.5
        scores[int(c)] = s
    p = np.exp(scores - scores.max())
    return p / p.sum()


def _peak_offset(profile, k) -> float:
    """Sub-bin offset of a narrow peak from neighbour magnitudes (rectangular window)."""
    mag = np.sqrt(profile)
    left = mag[k - 1] if k > 0 else 0.0
    right = mag[k + 1] if k + 1 < len(mag) else 0.0
    if right >= left:
        return float(right / (mag[k] + right)) if mag[k] + right > 0 else 0.0
    return -float(left / (mag[k] + left))


def baseline_detect(img, tau_db: float | None = None, geometry: FrameGeometry | None = None,
                    mapping: MappingConfig = MappingConfig(),
                    config: BaselineConfig = BaselineConfig()) -> list[Detection]:
    """Threshold + connected components detector over the B (average) channel.

    Grayscale images are treated as their own B channel. Pixels are mapped
    back to dB, smoothed along time, thresholded at ``tau_db``, and each
    8-connected component becomes one box whose edges are trimmed against the
    component's own level. Classes come from the measured bandwidth.
    """
    img = np.asarray(img)
    tau = config.tau_db if tau_db is None else tau_db
    chan = img[..., 2] if img.ndim == 3 else img
    rows, cols = chan.shape
    if geometry is None:
        geometry = FrameGeometry(100e6, cols, rows)
    energy = _pixels_to_energy(chan, mapping)
    smooth = ndimage.uniform_filter1d(energy, config.smooth_rows, axis=0, mode="nearest") \
        if config.smooth_rows > 1 else energy
    mask = smooth >= 10 ** (tau / 10)
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return []
    spread_map = None
    if img.ndim == 3:
        spread_map = (img[..., 0].astype(np.float64) - img[..., 1]) / mapping.gamma
    dets = []
    for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        comp = labels[sl] == idx
        npx = int(comp.sum())
        if npx < config.min_pixels:
            continue
        r0, c0 = sl[0].start, sl[1].start
        # frequency extent from the raw column profile inside the component rows
        col_prof = energy[sl].mean(axis=0)
        ref = np.percentile(col_prof, 90)
        keep_c = np.nonzero(col_prof >= ref * 10 ** (-config.freq_trim_db / 10))[0]
        k0, k1 = keep_c[0], keep_c[-1]
        # time extent from the smoothed row profile over the kept columns
        row_prof = smooth[sl][:, k0:k1 + 1].mean(axis=1)
        rref = np.percentile(row_prof, 90)
        keep_r = np.nonzero(row_prof >= rref * 10 ** (-config.time_trim_db / 10))[0]
        j0, j1 = keep_r[0], keep_r[-1]

        span_cols = k1 - k0 + 1
        span_rows = j1 - j0 + 1
        width = float(span_cols)
        duration = span_rows * geometry.seconds_per_row
        clipped = r0 + j0 == 0 or r0 + j1 + 1 == rows
        row_on = mask[sl][j0:j1 + 1, k0:k1 + 1].any(axis=1)
        continuity = float(row_on.mean())
        if spread_map is not None:
            sp = float(spread_map[sl][comp].mean())
            continuity = 0.5 * continuity + 0.5 * math.exp(-sp / 6.0)
        probs = _class_scores(width, duration, continuity, clipped, geometry, config.bandwidth_spread)
        cls = EmissionClass(int(np.argmax(probs)))

        x0 = (c0 + k0) / cols
        x1 = (c0 + k1 + 1) / cols
        if span_cols <= config.unresolved_cols:
            # below the bin resolution: interpolate the peak, use the class width
            peak = c0 + k0 + int(np.argmax(col_prof[k0:k1 + 1]))
            centre = (peak + _peak_offset(energy[sl[0]].mean(axis=0), peak) + 0.5) / cols
            half = max(PROFILES[cls].bandwidth_hz / geometry.sample_rate_hz, 1e-3) / 2
            x0, x1 = centre - half, centre + half
        y0 = (r0 + j0) / rows
        y1 = (r0 + j1 + 1) / rows
        box = BoundingBox.clipped(x0, y0, x1, y1)
        if box is None:
            continue
        conf = float(chan[sl][comp].mean()) / 255.0
        dets.append(Detection(cls, box, min(max(conf, 0.0), 1.0), tuple(float(p) for p in probs)))
    return nms(dets, config.nms_threshold)
