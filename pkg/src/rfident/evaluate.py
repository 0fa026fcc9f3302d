"""Detection scoring: greedy IoU matching, all-points AP, mAP per IoU threshold and SNR bucket."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .boxes import Annotation, Detection, iou_matrix
from .errors import NoGroundTruth
from .synth import EmissionClass, SnrBucket

DEFAULT_THRESHOLDS = (0.25, 0.5, 0.75)
UNBUCKETED = "unbucketed"


@dataclass
class MatchEvent:
    confidence: float
    tp: bool
    cls: EmissionClass
    bucket: object = None


@dataclass
class MatchResult:
    events: list[MatchEvent] = field(default_factory=list)
    gt_count: dict = field(default_factory=dict)

    def extend(self, other: "MatchResult") -> None:
        self.events.extend(other.events)
        for c, n in other.gt_count.items():
            self.gt_count[c] = self.gt_count.get(c, 0) + n

    def ranked(self, cls) -> list[MatchEvent]:
        ev = [e for e in self.events if e.cls == cls]
        ev.sort(key=lambda e: -e.confidence)
        return ev

    def true_positives(self, cls) -> list[float]:
        return [e.confidence for e in self.ranked(cls) if e.tp]

    def false_positives(self, cls) -> list[float]:
        return [e.confidence for e in self.ranked(cls) if not e.tp]


def _box_rows(items):
    return np.array([[a.box.x_c, a.box.y_c, a.box.w, a.box.h] for a in items]).reshape(-1, 4)


def match_detections(dets: Sequence[Detection], truths: Sequence[Annotation],
                     iou_threshold: float) -> MatchResult:
    """Match one image's detections to its truths.

    Detections are visited by descending confidence; each claims the unmatched
    same-class truth with the highest IoU if that IoU reaches the threshold.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].confidence)
    ious = iou_matrix(_box_rows(dets), _box_rows(truths)) if dets and truths else None
    t_cls = np.array([int(t.cls) for t in truths])
    taken = np.zeros(len(truths), dtype=bool)
    buckets = [SnrBucket.of(t.snr_db) for t in truths]
    dominant = None
    snrs = [(t.snr_db, j) for j, t in enumerate(truths) if t.snr_db is not None]
    if snrs:
        dominant = buckets[max(snrs)[1]]
    res = MatchResult()
    for t in truths:
        res.gt_count[t.cls] = res.gt_count.get(t.cls, 0) + 1
    for i in order:
        d = dets[i]
        tp = False
        bucket = dominant
        if ious is not None:
            row = ious[i]
            cand = np.where((t_cls == int(d.cls)) & ~taken, row, -1.0)
            j = int(np.argmax(cand))
            if cand[j] >= iou_threshold and cand[j] > 0:
                taken[j] = True
                tp = True
                bucket = buckets[j]
            elif row.max() > 0:
                bucket = buckets[int(np.argmax(row))]
        res.events.append(MatchEvent(d.confidence, tp, d.cls, bucket if bucket is not None else UNBUCKETED))
    return res


def average_precision(match: MatchResult, cls) -> float:
    """Area under the monotone precision envelope (all-points interpolation)."""
    n_gt = match.gt_count.get(cls, 0)
    if n_gt < 1:
        raise NoGroundTruth(f"no ground truth for {cls}")
    return ap_from_outcomes([e.tp for e in match.ranked(cls)], n_gt)


def ap_from_outcomes(outcomes: Sequence[bool], n_gt: int) -> float:
    if n_gt < 1:
        raise NoGroundTruth("no ground truth")
    if not len(outcomes):
        return 0.0
    tp = np.cumsum(np.asarray(outcomes, dtype=np.float64))
    fp = np.cumsum(1.0 - np.asarray(outcomes, dtype=np.float64))
    recall = np.concatenate([[0.0], tp / n_gt])
    precision = np.concatenate([[0.0], tp / (tp + fp)])
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.nonzero(recall[1:] != recall[:-1])[0] + 1
    return float(np.sum((recall[steps] - recall[steps - 1]) * envelope[steps]))


@dataclass
class EvalReport:
    thresholds: tuple[float, ...]
    per_class_ap: dict = field(default_factory=dict)  # class -> {thr: AP}
    map_at: dict = field(default_factory=dict)  # thr -> mAP
    per_bucket: dict = field(default_factory=dict)  # bucket -> {"per_class_ap", "map_at"}
    gt_count: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def classes(d):
            return {c.label: {str(t): v for t, v in aps.items()} for c, aps in d.items()}

        return {
            "thresholds": list(self.thresholds),
            "map_at": {str(t): v for t, v in self.map_at.items()},
            "per_class_ap": classes(self.per_class_ap),
            "gt_count": {c.label: n for c, n in self.gt_count.items()},
            "per_bucket": {
                _bucket_name(b): {
                    "map_at": {str(t): v for t, v in sub["map_at"].items()},
                    "per_class_ap": classes(sub["per_class_ap"]),
                }
                for b, sub in self.per_bucket.items()
            },
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def table(self) -> str:
        """Plain-text grid: class rows x (bucket, IoU) columns, values in percent."""
        cols = [("All", None)] + [(_bucket_name(b), b) for b in self.per_bucket]
        head = ["class"] + [f"{name}@{t:g}" for name, _ in cols for t in self.thresholds]
        lines = []
        classes = sorted(self.per_class_ap, key=int)
        for c in classes + ["mAP"]:
            row = [c if isinstance(c, str) else c.label]
            for _, b in cols:
                for t in self.thresholds:
                    if b is None:
                        v = self.map_at.get(t) if c == "mAP" else self.per_class_ap.get(c, {}).get(t)
                    else:
                        sub = self.per_bucket[b]
                        v = sub["map_at"].get(t) if c == "mAP" else sub["per_class_ap"].get(c, {}).get(t)
                    row.append("-" if v is None else f"{100 * v:.2f}")
            lines.append(row)
        widths = [max(len(r[i]) for r in [head] + lines) for i in range(len(head))]
        fmt = lambda r: "  ".join(x.rjust(w) if i else x.ljust(w) for i, (x, w) in enumerate(zip(r, widths)))
        return "\n".join([fmt(head), fmt(["-" * w for w in widths])] + [fmt(r) for r in lines])


def _bucket_name(b):
    return b.title if isinstance(b, SnrBucket) else str(b)


def _scores(match: MatchResult, bucket=None):
    per_class = {}
    events = match.events if bucket is None else [e for e in match.events if e.bucket == bucket]
    gt = match.gt_count
    for c in sorted(gt, key=int):
        if gt[c] < 1:
            continue
        ranked = sorted((e for e in events if e.cls == c), key=lambda e: -e.confidence)
        per_class[c] = ap_from_outcomes([e.tp for e in ranked], gt[c])
    return per_class


def evaluate(images: Iterable[tuple[Sequence[Detection], Sequence[Annotation]]],
             thresholds: Sequence[float] = DEFAULT_THRESHOLDS, by_bucket: bool = True) -> EvalReport:
    """Score per-image (detections, truths) pairs pooled by class.

    Classes without ground truth are left out of the mean. With ``by_bucket``
    each truth's SNR bucket gets its own breakdown; a detection is charged to
    the bucket of the truth it matched (or overlaps most), else to the image's
    strongest truth.
    """
    images = list(images)
    thresholds = tuple(thresholds)
    report = EvalReport(thresholds)
    bucket_gt: dict = {}
    for _, truths in images:
        for t in truths:
            report.gt_count[t.cls] = report.gt_count.get(t.cls, 0) + 1
            b = SnrBucket.of(t.snr_db)
            if by_bucket and b is not None:
                bucket_gt.setdefault(b, {})
                bucket_gt[b][t.cls] = bucket_gt[b].get(t.cls, 0) + 1
    for thr in thresholds:
        pooled = MatchResult()
        for dets, truths in images:
            pooled.extend(match_detections(list(dets), list(truths), thr))
        aps = _scores(pooled)
        for c, ap in aps.items():
            report.per_class_ap.setdefault(c, {})[thr] = ap
        report.map_at[thr] = float(np.mean(list(aps.values()))) if aps else 0.0
        for b in sorted(bucket_gt, key=lambda b: b.lo):
            sub_match = MatchResult(pooled.events, bucket_gt[b])
            sub = _scores(sub_match, bucket=b)
            entry = report.per_bucket.setdefault(b, {"per_class_ap": {}, "map_at": {}})
            for c, ap in sub.items():
                entry["per_class_ap"].setdefault(c, {})[thr] = ap
            entry["map_at"][thr] = float(np.mean(list(sub.values()))) if sub else 0.0
    return report
