"""Dataset layout, annotation/metadata files, splits and the synthetic builder.

Layout under a dataset root::

    recordings/rec_00000.iq    raw interleaved float32 I/Q
    recordings/rec_00000.json  metadata
    pictures/img_00000.pgm     8-bit image (pgm gray, ppm/png RGB)
    pictures/img_00000.txt     one "<class> <x_c> <y_c> <w> <h> [snr_db]" line per emission
    global.json                pipeline settings, scenario, table of contents, splits
"""

from __future__ import annotations

import datetime as _dt
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .boxes import Annotation, BoundingBox, Detection
from .errors import BadRatios, IoFailure, MalformedLine
from .spectral import (CompressionConfig, FrameGeometry, MappingConfig, PipelineConfig,
                       fft_noise_floor_db, load_image, render_image, save_image)
from .synth import (DEFAULT_SAMPLE_RATE, NUM_CLASSES, PROFILES, EmissionClass, EmissionSpec,
                    IqRecording, SnrBucket, add_awgn, combine_recordings, synthesize_emission,
                    read_iq, write_iq)

COLLECTING_METHODS = ("recorded", "rf_manipulation", "image_manipulation")
METADATA_KEYS = ("date", "duration_s", "rf_categories", "channels", "center_frequency_hz",
                 "sample_rate_hz", "snr_db", "noise_power_db", "file_name", "file_size_bytes",
                 "collecting_method")
IMAGE_SUFFIXES = (".pgm", ".ppm", ".png")


# -- annotation files -------------------------------------------------------------------

def format_annotation(a: Annotation) -> str:
    b = a.box
    line = f"{int(a.cls)} {b.x_c:.6f} {b.y_c:.6f} {b.w:.6f} {b.h:.6f}"
    if a.snr_db is not None:
        line += f" {a.snr_db:.3f}"
    return line


def write_annotation(path, annotations: Sequence[Annotation]) -> None:
    text = "".join(format_annotation(a) + "\n" for a in annotations)
    Path(path).write_text(text)


def _parse_line(line: str, line_no: int):
    parts = line.split()
    if len(parts) not in (5, 6):
        raise MalformedLine(line_no, f"expected 5 or 6 fields, got {len(parts)}")
    try:
        cid = int(parts[0])
    except ValueError:
        raise MalformedLine(line_no, f"class id {parts[0]!r} is not an integer") from None
    if not 0 <= cid < NUM_CLASSES:
        raise MalformedLine(line_no, f"class id {cid} out of range")
    try:
        vals = [float(p) for p in parts[1:]]
    except ValueError:
        raise MalformedLine(line_no, "non-numeric field") from None
    if not all(math.isfinite(v) for v in vals):
        raise MalformedLine(line_no, "non-finite field")
    x, y, w, h = vals[:4]
    tol = 1e-6
    if not (w > 0 and h > 0):
        raise MalformedLine(line_no, "box width and height must be positive")
    if x - w / 2 < -tol or x + w / 2 > 1 + tol or y - h / 2 < -tol or y + h / 2 > 1 + tol:
        raise MalformedLine(line_no, "box extends outside the image")
    extra = vals[4] if len(vals) == 5 else None
    return EmissionClass(cid), BoundingBox(x, y, w, h), extra


def read_annotation(path) -> list[Annotation]:
    out = []
    for no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        cls, box, snr = _parse_line(line, no)
        out.append(Annotation(cls, box, snr))
    return out


def write_detections(path, dets: Sequence[Detection]) -> None:
    lines = []
    for d in dets:
        b = d.box
        lines.append(f"{int(d.cls)} {b.x_c:.6f} {b.y_c:.6f} {b.w:.6f} {b.h:.6f} {d.confidence:.6f}\n")
    Path(path).write_text("".join(lines))


def read_detections(path) -> list[Detection]:
    out = []
    for no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        cls, box, conf = _parse_line(line, no)
        if conf is None or not 0 <= conf <= 1:
            raise MalformedLine(no, "detection lines need a confidence in [0, 1]")
        out.append(Detection(cls, box, conf))
    return out


# -- metadata ------------------------------------------------------------------------------

def write_metadata(rec: IqRecording, extra: dict | None = None, file_name: str | None = None,
                   path=None, collecting_method: str = "rf_manipulation",
                   date: str | None = None) -> dict:
    if collecting_method not in COLLECTING_METHODS:
        raise ValueError(f"collecting_method must be one of {COLLECTING_METHODS}")
    channels = [
        {"class": g.cls.label,
         "center_frequency_hz": rec.center_frequency_hz + g.center_offset_hz,
         "bandwidth_hz": g.bandwidth_hz}
        for g in rec.ground_truth
    ]
    meta = {
        "date": date or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "duration_s": rec.duration_s,
        "rf_categories": [c.label for c in rec.classes],
        "channels": channels,
        "center_frequency_hz": rec.center_frequency_hz,
        "sample_rate_hz": rec.sample_rate_hz,
        "snr_db": [g.snr_db for g in rec.ground_truth],
        "noise_power_db": rec.noise_power_db,
        "file_name": file_name,
        "file_size_bytes": 8 * len(rec.samples),
        "collecting_method": collecting_method,
    }
    if extra:
        meta.update(extra)
    if path is not None:
        Path(path).write_text(json.dumps(meta, indent=2))
    return meta


def read_metadata(path) -> dict:
    return json.loads(Path(path).read_text())


def save_recording(rec: IqRecording, iq_path, extra: dict | None = None,
                   collecting_method: str = "rf_manipulation") -> dict:
    """Write ``rec`` as raw samples plus a JSON sidecar that can rebuild it."""
    iq_path = Path(iq_path)
    try:
        write_iq(iq_path, rec.samples)
        return write_metadata(rec, {"ground_truth": [g.to_dict() for g in rec.ground_truth],
                                    "noise_added": rec.noise_added, **(extra or {})},
                              file_name=iq_path.name, path=iq_path.with_suffix(".json"),
                              collecting_method=collecting_method)
    except OSError as e:
        raise IoFailure(str(e)) from e


def load_recording(iq_path) -> IqRecording:
    """Inverse of :func:`save_recording`; a missing sidecar yields bare defaults."""
    iq_path = Path(iq_path)
    try:
        samples = read_iq(iq_path)
        meta_path = iq_path.with_suffix(".json")
        meta = read_metadata(meta_path) if meta_path.exists() else {}
    except OSError as e:
        raise IoFailure(str(e)) from e
    kw = {}
    if "sample_rate_hz" in meta:
        kw["sample_rate_hz"] = float(meta["sample_rate_hz"])
    if "center_frequency_hz" in meta:
        kw["center_frequency_hz"] = float(meta["center_frequency_hz"])
    if "noise_power_db" in meta:
        kw["noise_power_db"] = float(meta["noise_power_db"])
    gt = tuple(EmissionSpec.from_dict(d) for d in meta.get("ground_truth", ()))
    return IqRecording(samples, ground_truth=gt, noise_added=bool(meta.get("noise_added", False)), **kw)


# -- manifest --------------------------------------------------------------------------------

@dataclass
class DatasetManifest:
    root: Path
    recordings: list = field(default_factory=list)  # (iq path, json path)
    pictures: list = field(default_factory=list)  # (image path, annotation path)
    global_config: dict = field(default_factory=dict)

    @property
    def global_path(self) -> Path:
        return self.root / "global.json"

    def annotations(self) -> list[list[Annotation]]:
        return [read_annotation(txt) for _, txt in self.pictures]

    def validate(self) -> list[str]:
        """Problems found in the tree (empty list when consistent)."""
        problems = []
        pics = self.root / "pictures"
        recs = self.root / "recordings"
        if pics.is_dir():
            for p in sorted(pics.iterdir()):
                if p.suffix in IMAGE_SUFFIXES and not p.with_suffix(".txt").exists():
                    problems.append(f"{p.name}: missing annotation file")
                if p.suffix == ".txt" and not any(p.with_suffix(s).exists() for s in IMAGE_SUFFIXES):
                    problems.append(f"{p.name}: annotation without image")
        if recs.is_dir():
            for p in sorted(recs.iterdir()):
                if p.suffix == ".iq" and not p.with_suffix(".json").exists():
                    problems.append(f"{p.name}: missing metadata file")
        for img, txt in self.pictures:
            if not Path(txt).exists():
                continue
            try:
                read_annotation(txt)
            except MalformedLine as e:
                problems.append(f"{Path(txt).name}: {e}")
        if not self.global_path.exists():
            problems.append("global.json missing")
        return problems


def load_manifest(root) -> DatasetManifest:
    root = Path(root)
    if not root.is_dir():
        raise IoFailure(f"{root} is not a directory")
    man = DatasetManifest(root)
    pics = root / "pictures"
    if pics.is_dir():
        for p in sorted(pics.iterdir()):
            if p.suffix in IMAGE_SUFFIXES:
                man.pictures.append((p, p.with_suffix(".txt")))
    recs = root / "recordings"
    if recs.is_dir():
        for p in sorted(recs.glob("*.json")):
            iq = p.with_suffix(".iq")
            man.recordings.append((iq if iq.exists() else None, p))
    if man.global_path.exists():
        man.global_config = json.loads(man.global_path.read_text())
    return man


# -- splits ------------------------------------------------------------------------------------

def split_counts(n: int, ratios: Sequence[float]) -> list[int]:
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"ratios {tuple(ratios)} must be non-negative and sum to 1")
    raw = [n * r for r in ratios]
    counts = [int(math.floor(x + 1e-9)) for x in raw]
    rest = n - sum(counts)
    # remainder goes to the largest fractional parts, earlier splits first on ties
    order = sorted(range(len(ratios)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:rest]:
        counts[i] += 1
    return counts


def split_dataset(items, ratios: Sequence[float] = (0.64, 0.16, 0.2), seed: int = 0):
    """Deterministic shuffle then cut into len(ratios) disjoint parts."""
    if isinstance(items, DatasetManifest):
        items = items.pictures
    items = list(items)
    counts = split_counts(len(items), ratios)
    perm = np.random.default_rng(seed).permutation(len(items))
    parts, pos = [], 0
    for c in counts:
        parts.append([items[i] for i in perm[pos:pos + c]])
        pos += c
    return tuple(parts)


# -- auto-labelling ------------------------------------------------------------------------------

def label_for(spec: EmissionSpec, geometry: FrameGeometry, t0_s: float = 0.0) -> Annotation | None:
    """Ground-truth box of an emission inside a frame starting at ``t0_s``."""
    bw = spec.bandwidth_hz
    x0 = geometry.freq_to_u(spec.center_offset_hz - bw / 2)
    x1 = geometry.freq_to_u(spec.center_offset_hz + bw / 2)
    y0 = geometry.time_to_v(spec.start_s - t0_s)
    y1 = geometry.time_to_v(spec.stop_s - t0_s)
    box = BoundingBox.clipped(x0, y0, x1, y1)
    if box is None:
        return None
    return Annotation(spec.cls, box, spec.snr_db)


def labels_for(rec: IqRecording, geometry: FrameGeometry, t0_s: float = 0.0) -> list[Annotation]:
    out = []
    for g in rec.ground_truth:
        a = label_for(g, geometry, t0_s)
        if a is not None:
            out.append(a)
    return out


# -- builder ------------------------------------------------------------------------------------

SNR_SAMPLING = {
    SnrBucket.LOW: (5.0, 15.0),
    SnrBucket.MID: (15.0, 25.0),
    SnrBucket.HIGH: (25.0, 35.0),
}


@dataclass(frozen=True)
class ScenarioConfig:
    n_images: int = 10
    classes: tuple = tuple(EmissionClass)
    snr_buckets: tuple = (SnrBucket.LOW, SnrBucket.MID, SnrBucket.HIGH)
    collision_fraction: float = 0.0
    compress: bool = False
    pipeline: PipelineConfig = field(default_factory=lambda: PipelineConfig(compression=None))
    noise_power_db: float = 0.0
    band_margin_hz: float = 1e6
    seed: int = 0
    image_format: str | None = None
    save_recordings: bool = True

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(EmissionClass.parse(c) for c in self.classes))
        object.__setattr__(self, "snr_buckets", tuple(SnrBucket.parse(b) for b in self.snr_buckets))
        if not 0.0 <= self.collision_fraction <= 1.0:
            raise ValueError("collision_fraction must lie in [0, 1]")
        if self.n_images < 0:
            raise ValueError("n_images must be >= 0")
        if self.compress and self.pipeline.compression is None:
            object.__setattr__(self, "pipeline", replace(self.pipeline, compression=CompressionConfig()))
        if not self.compress and self.pipeline.compression is not None:
            object.__setattr__(self, "pipeline", replace(self.pipeline, compression=None))

    @property
    def suffix(self) -> str:
        if self.image_format:
            return "." + self.image_format.lstrip(".")
        return ".ppm" if self.compress else ".pgm"

    def to_dict(self) -> dict:
        return {
            "n_images": self.n_images,
            "classes": [c.label for c in self.classes],
            "snr_buckets": [b.title for b in self.snr_buckets],
            "collision_fraction": self.collision_fraction,
            "compress": self.compress,
            "noise_power_db": self.noise_power_db,
            "seed": self.seed,
        }


def _draw_spec(cls, rng, scenario: ScenarioConfig, span_s: float, anchor=None) -> EmissionSpec:
    fs = scenario.pipeline.sample_rate_hz
    prof = PROFILES[cls]
    bucket = scenario.snr_buckets[rng.integers(len(scenario.snr_buckets))]
    snr = float(rng.uniform(*SNR_SAMPLING[bucket]))
    lo, hi = prof.duration_range_s
    dur = float(min(rng.uniform(lo, hi), span_s))
    half = fs / 2 - prof.bandwidth_hz / 2 - scenario.band_margin_hz
    offset = float(rng.uniform(-half, half))
    if anchor is None:
        start = float(rng.uniform(0.0, span_s - dur))
    else:
        # collision: force overlap in time with the anchor emission
        lo_t = max(0.0, anchor.start_s - dur * 0.9)
        hi_t = min(span_s - dur, anchor.stop_s - dur * 0.1)
        start = float(rng.uniform(lo_t, max(lo_t, hi_t)))
    return EmissionSpec(cls, offset, start, dur, snr)


def draw_scene(index: int, scenario: ScenarioConfig, collide: bool) -> list[EmissionSpec]:
    rng = np.random.default_rng([scenario.seed, index])
    span = scenario.pipeline.geometry().span_s
    first_cls = scenario.classes[index % len(scenario.classes)]
    specs = [_draw_spec(first_cls, rng, scenario, span)]
    if collide:
        other = scenario.classes[rng.integers(len(scenario.classes))]
        specs.append(_draw_spec(other, rng, scenario, span, anchor=specs[0]))
    return specs


def render_scene(specs: Sequence[EmissionSpec], scenario: ScenarioConfig, seed) -> tuple:
    """Synthesize, combine, add noise, render. Returns (image, annotations, recording)."""
    cfg = scenario.pipeline
    n = cfg.samples_per_image
    ss = np.random.SeedSequence(seed)
    seeds = ss.generate_state(len(specs) + 1)
    parts = [synthesize_emission(s, cfg.sample_rate_hz, int(sd), num_samples=n,
                                 noise_power_db=scenario.noise_power_db)
             for s, sd in zip(specs, seeds)]
    rec = combine_recordings(parts)
    rec = add_awgn(rec, scenario.noise_power_db, int(seeds[-1]))
    cfg = replace(cfg, noise_floor_db=fft_noise_floor_db(scenario.noise_power_db, cfg.fft_size))
    img, geom = render_image(rec, cfg)
    return img, labels_for(rec, geom), rec


def colliding_indices(scenario: ScenarioConfig) -> set[int]:
    """Indices of the images that carry a second, time-overlapping emission."""
    n = scenario.n_images
    n_coll = int(math.ceil(scenario.collision_fraction * n - 1e-9))
    return set(np.random.default_rng([scenario.seed, 2**31]).permutation(n)[:n_coll].tolist())


def iter_scenes(scenario: ScenarioConfig):
    """Yield (index, image, annotations, recording) for every image of the scenario."""
    colliding = colliding_indices(scenario)
    for i in range(scenario.n_images):
        specs = draw_scene(i, scenario, i in colliding)
        img, labels, rec = render_scene(specs, scenario, [scenario.seed, i, 1])
        yield i, img, labels, rec


def build_dataset(scenario: ScenarioConfig, root) -> DatasetManifest:
    root = Path(root)
    try:
        (root / "pictures").mkdir(parents=True, exist_ok=True)
        (root / "recordings").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoFailure(str(e)) from e
    man = DatasetManifest(root)
    date = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    try:
        for i, img, labels, rec in iter_scenes(scenario):
            stem = f"{i:05d}"
            img_path = root / "pictures" / f"img_{stem}{scenario.suffix}"
            txt_path = img_path.with_suffix(".txt")
            save_image(img_path, img)
            write_annotation(txt_path, labels)
            man.pictures.append((img_path, txt_path))
            iq_name = f"rec_{stem}.iq"
            iq_path = root / "recordings" / iq_name
            json_path = iq_path.with_suffix(".json")
            if scenario.save_recordings:
                write_iq(iq_path, rec.samples)
            write_metadata(rec, {"ground_truth": [g.to_dict() for g in rec.ground_truth],
                                 "picture": img_path.name},
                           file_name=iq_name, path=json_path, date=date)
            man.recordings.append((iq_path if scenario.save_recordings else None, json_path))
        man.global_config = {
            "pipeline": scenario.pipeline.to_dict(),
            "scenario": scenario.to_dict(),
            "class_ids": {c.label: int(c) for c in EmissionClass},
            "contents": {
                "pictures": [p.name for p, _ in man.pictures],
                "recordings": [j.name for _, j in man.recordings],
            },
        }
        man.global_path.write_text(json.dumps(man.global_config, indent=2))
    except OSError as e:
        raise IoFailure(str(e)) from e
    return man


def write_splits(man: DatasetManifest, ratios=(0.64, 0.16, 0.2), seed: int = 0) -> dict:
    names = ("train", "val", "test")
    parts = split_dataset(man, ratios, seed)
    splits = {name: [p.name for p, _ in part] for name, part in zip(names, parts)}
    man.global_config = dict(man.global_config)
    man.global_config["splits"] = {"ratios": list(ratios), "seed": seed, **splits}
    man.global_path.write_text(json.dumps(man.global_config, indent=2))
    return splits


def load_pictures(man: DatasetManifest):
    """Yield (image array, annotations) for every picture."""
    for img, txt in man.pictures:
        yield load_image(img), read_annotation(txt)
