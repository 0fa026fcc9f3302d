"""Command-line interface.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import augment as aug
from .bench import MODULES, bench
from .dataset import (ScenarioConfig, build_dataset, load_manifest, load_recording,
                      read_annotation, read_detections, save_recording, write_annotation,
                      write_detections, write_splits, labels_for)
from .detect import BaselineConfig, baseline_detect, kmeans_anchors
from .errors import IoFailure, ValidationError
from .evaluate import evaluate
from .spectral import (CompressionConfig, FrameGeometry, MappingConfig, PipelineConfig,
                       fft_noise_floor_db, load_image, render_image, save_image)
from .stream import NoiseSource, run_stream
from .synth import (EmissionClass, EmissionSpec, SnrBucket, add_awgn, combine_recordings,
                    synthesize_emission)


def pipeline_from_args(args, gray: bool = False) -> PipelineConfig:
    comp = None if gray or getattr(args, "gray", False) else CompressionConfig(args.m1, args.m2)
    return PipelineConfig(fft_size=args.fft_size, rows=args.rows,
                          mapping=MappingConfig(args.a_min, args.a_max), compression=comp,
                          sample_rate_hz=args.sample_rate)


def _geometry_for(img, args) -> FrameGeometry:
    per_row = 1 if img.ndim == 2 else args.m1 * args.m2
    return FrameGeometry(args.sample_rate, img.shape[1], img.shape[0], per_row)


def _print_json(obj):
    print(json.dumps(obj, indent=2))


# -- commands -----------------------------------------------------------------------

def cmd_synth(args):
    cfg = pipeline_from_args(args)
    spec = EmissionSpec(EmissionClass.parse(args.cls), args.offset_hz, args.start_s,
                        args.duration_s, args.snr_db)
    n = args.num_samples or cfg.samples_per_image
    rec = synthesize_emission(spec, args.sample_rate, args.seed, num_samples=n,
                              noise_power_db=args.noise_db)
    if not args.no_noise:
        rec = add_awgn(rec, args.noise_db, args.seed + 1)
    save_recording(rec, args.out)
    print(f"wrote {args.out} ({len(rec)} samples)")


def cmd_combine(args):
    recs = [load_recording(p) for p in args.inputs]
    rec = combine_recordings(recs)
    if args.add_noise is not None:
        rec = add_awgn(rec, args.add_noise, args.seed)
    save_recording(rec, args.out)
    print(f"wrote {args.out} ({len(rec)} samples, {len(rec.ground_truth)} emissions)")


def cmd_render(args):
    rec = load_recording(args.input)
    cfg = replace(pipeline_from_args(args), sample_rate_hz=rec.sample_rate_hz)
    if args.noise_floor_db is not None:
        cfg = replace(cfg, noise_floor_db=args.noise_floor_db)
    elif rec.noise_added:
        cfg = replace(cfg, noise_floor_db=fft_noise_floor_db(rec.noise_power_db, cfg.fft_size))
    img, geom = render_image(rec, cfg)
    out = Path(args.out)
    try:
        save_image(out, img)
    except OSError as e:
        raise IoFailure(str(e)) from e
    labels = labels_for(rec, geom)
    write_annotation(out.with_suffix(".txt"), labels)
    print(f"wrote {out} {img.shape} span {geom.span_s * 1e3:.4f} ms, {len(labels)} labels")


def cmd_dataset(args):
    if args.action == "build":
        pipe = pipeline_from_args(args, gray=not args.compress)
        sc = ScenarioConfig(n_images=args.n, classes=tuple(args.classes),
                            snr_buckets=tuple(args.snr_buckets),
                            collision_fraction=args.collision_fraction, compress=args.compress,
                            pipeline=pipe, seed=args.seed, save_recordings=not args.no_recordings)
        man = build_dataset(sc, args.root)
        print(f"built {len(man.pictures)} pictures under {man.root}")
    elif args.action == "split":
        man = load_manifest(args.root)
        splits = write_splits(man, tuple(args.ratios), args.seed)
        print(" ".join(f"{k}={len(v)}" for k, v in splits.items()))
    else:
        man = load_manifest(args.root)
        problems = man.validate()
        for p in problems:
            print(p)
        if problems:
            raise ValidationError(f"{len(problems)} problem(s) in {args.root}")
        print(f"ok: {len(man.pictures)} pictures, {len(man.recordings)} recordings")


def cmd_augment(args):
    img = load_image(args.image)
    anns = read_annotation(Path(args.image).with_suffix(".txt"))
    if not 0 <= args.index < len(anns):
        raise ValidationError(f"annotation index {args.index} out of range ({len(anns)} labels)")
    proto = aug.extract_prototype(img, anns[args.index])
    mapping = MappingConfig(args.a_min, args.a_max)
    if args.op == "move":
        out, ann = aug.augment_move(proto, args.dx, args.dy, seed=args.seed, mapping=mapping)
    elif args.op == "length":
        out, ann = aug.augment_length(proto, args.rows_new or proto.patch.shape[0],
                                      seed=args.seed, mapping=mapping)
    else:
        out, ann = aug.augment_brightness(proto, args.delta_db, seed=args.seed, mapping=mapping)
    save_image(args.out, out)
    write_annotation(Path(args.out).with_suffix(".txt"), [ann])
    print(f"wrote {args.out}")


def _annotation_files(paths):
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            sub = p / "pictures" if (p / "pictures").is_dir() else p
            files.extend(sorted(sub.glob("*.txt")))
        else:
            files.append(p)
    return files


def cmd_anchors(args):
    shapes = [(a.box.w, a.box.h) for f in _annotation_files(args.inputs) for a in read_annotation(f)]
    res = kmeans_anchors(np.array(shapes), args.k, seed=args.seed)
    _print_json({"anchors": res.to_json(), "mean_iou": res.mean_iou(np.array(shapes)),
                 "boxes": len(shapes)})


def _image_files(paths):
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            sub = p / "pictures" if (p / "pictures").is_dir() else p
            out.extend(sorted(q for q in sub.iterdir() if q.suffix in (".pgm", ".ppm", ".png")))
        else:
            out.append(p)
    return out


def cmd_detect(args):
    mapping = MappingConfig(args.a_min, args.a_max)
    det_cfg = BaselineConfig(tau_db=args.tau_db)
    out_dir = Path(args.out) if args.out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    total = 0
    for path in _image_files(args.inputs):
        img = load_image(path)
        dets = baseline_detect(img, geometry=_geometry_for(img, args), mapping=mapping, config=det_cfg)
        total += len(dets)
        if out_dir:
            write_detections(out_dir / (path.stem + ".txt"), dets)
        else:
            for d in dets:
                print(f"{path.name} {d.cls.label} {d.box.x_c:.6f} {d.box.y_c:.6f} "
                      f"{d.box.w:.6f} {d.box.h:.6f} {d.confidence:.4f}")
    print(f"{total} detections", file=sys.stderr)


def cmd_eval(args):
    truth_files = _annotation_files([args.truths])
    det_dir = Path(args.detections)
    pairs = []
    for tf in truth_files:
        df = det_dir / tf.name
        dets = read_detections(df) if df.exists() else []
        pairs.append((dets, read_annotation(tf)))
    report = evaluate(pairs, tuple(args.iou), by_bucket=not args.no_buckets)
    print(report.table())
    if args.json:
        Path(args.json).write_text(report.to_json(indent=2))


def cmd_stream(args):
    cfg = pipeline_from_args(args)
    if args.source:
        source = args.source
        noise_db = None if args.estimate_floor else args.noise_db
    else:
        source = NoiseSource(args.seed, max_samples=args.frames * cfg.samples_per_image,
                             sample_rate_hz=args.sample_rate)
        noise_db = args.noise_db
    sink_fh = open(args.detections_out, "w") if args.detections_out else None

    def sink(msg, dets):
        if sink_fh:
            sink_fh.write(json.dumps({
                "frame": msg.frame_index, "t0_ns": msg.t0_ns,
                "detections": [[int(d.cls), d.box.x_c, d.box.y_c, d.box.w, d.box.h, d.confidence]
                               for d in dets]}) + "\n")

    try:
        stats = run_stream(source, cfg, sink, queue_depth=args.queue_depth, policy=args.policy,
                           max_frames=args.max_frames, noise_power_db=noise_db)
    finally:
        if sink_fh:
            sink_fh.close()
    _print_json(stats.to_dict())


def cmd_bench(args):
    cfg = pipeline_from_args(args)
    modules = MODULES if args.module == "all" else (args.module,)
    for m in modules:
        _print_json(bench(m, args.duration, cfg, args.seed).to_dict())


# -- parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfident", description=__doc__.splitlines()[0])
    p.add_argument("--fft-size", type=int, default=512)
    p.add_argument("--rows", type=int, default=512)
    p.add_argument("--m1", type=int, default=3)
    p.add_argument("--m2", type=int, default=4)
    p.add_argument("--a-min", type=float, default=0.0)
    p.add_argument("--a-max", type=float, default=50.0)
    p.add_argument("--sample-rate", type=float, default=100e6)
    p.add_argument("--seed", type=int, default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="synthesize one emission into an .iq file")
    s.add_argument("cls", help="wifi | bluetooth | zigbee | lightbridge | xpd")
    s.add_argument("-o", "--out", required=True)
    s.add_argument("--offset-hz", type=float, default=0.0)
    s.add_argument("--start-s", type=float, default=0.0)
    s.add_argument("--duration-s", type=float, default=1e-3)
    s.add_argument("--snr-db", type=float, default=30.0)
    s.add_argument("--noise-db", type=float, default=0.0)
    s.add_argument("--no-noise", action="store_true")
    s.add_argument("--num-samples", type=int)
    s.add_argument("--gray", action="store_true", help="size the default length for a gray image")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("combine", help="sum recordings in the time domain")
    s.add_argument("inputs", nargs="+")
    s.add_argument("-o", "--out", required=True)
    s.add_argument("--add-noise", type=float, metavar="DB")
    s.set_defaults(func=cmd_combine)

    s = sub.add_parser("render", help="render an .iq file to an image plus labels")
    s.add_argument("input")
    s.add_argument("-o", "--out", required=True)
    s.add_argument("--gray", action="store_true")
    s.add_argument("--noise-floor-db", type=float)
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("dataset", help="build, split or validate a dataset tree")
    s.add_argument("action", choices=("build", "split", "validate"))
    s.add_argument("root")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--classes", nargs="+", default=[c.label for c in EmissionClass])
    s.add_argument("--snr-buckets", nargs="+", default=[b.title for b in SnrBucket])
    s.add_argument("--collision-fraction", type=float, default=0.0)
    s.add_argument("--compress", action="store_true")
    s.add_argument("--no-recordings", action="store_true")
    s.add_argument("--ratios", type=float, nargs="+", default=[0.64, 0.16, 0.2])
    s.set_defaults(func=cmd_dataset)

    s = sub.add_parser("augment", help="move, stretch or brighten one labelled emission")
    s.add_argument("image")
    s.add_argument("op", choices=("move", "length", "brightness"))
    s.add_argument("-o", "--out", required=True)
    s.add_argument("--index", type=int, default=0)
    s.add_argument("--dx", type=int, default=0)
    s.add_argument("--dy", type=int, default=0)
    s.add_argument("--rows-new", type=int)
    s.add_argument("--delta-db", type=float, default=0.0)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("anchors", help="k-means anchor shapes from annotation files")
    s.add_argument("inputs", nargs="+")
    s.add_argument("-k", type=int, default=9)
    s.set_defaults(func=cmd_anchors)

    s = sub.add_parser("detect", help="run the baseline detector over images")
    s.add_argument("inputs", nargs="+")
    s.add_argument("-o", "--out", help="directory for per-image detection files")
    s.add_argument("--tau-db", type=float, default=10.0)
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("eval", help="score detection files against annotation files")
    s.add_argument("truths")
    s.add_argument("detections")
    s.add_argument("--iou", type=float, nargs="+", default=[0.25, 0.5, 0.75])
    s.add_argument("--no-buckets", action="store_true")
    s.add_argument("--json")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("stream", help="two-stage streaming run over a file or generated noise")
    s.add_argument("--source", help=".iq file; omit for generated noise")
    s.add_argument("--frames", type=int, default=8, help="frames of generated noise")
    s.add_argument("--max-frames", type=int)
    s.add_argument("--queue-depth", type=int, default=4)
    s.add_argument("--policy", choices=("block", "drop"), default="block")
    s.add_argument("--noise-db", type=float, default=0.0)
    s.add_argument("--estimate-floor", action="store_true")
    s.add_argument("--gray", action="store_true")
    s.add_argument("--detections-out")
    s.set_defaults(func=cmd_stream)

    s = sub.add_parser("bench", help="throughput microbenchmarks")
    s.add_argument("module", choices=MODULES + ("all",))
    s.add_argument("--duration", type=float, default=1.0)
    s.add_argument("--gray", action="store_true")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
