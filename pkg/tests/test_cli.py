import json

import pytest

from rfident.cli import main
from rfident.dataset import read_annotation
from rfident.spectral import load_image

SMALL = ["--fft-size", "64", "--rows", "64"]


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_synth_render_detect_eval(tmp_path, capsys):
    iq = tmp_path / "wifi.iq"
    code, _ = run(capsys, "synth", "wifi", "-o", str(iq), "--offset-hz=-20e6",
                  "--start-s", "0.2e-3", "--duration-s", "1e-3", "--snr-db", "30", "--gray")
    assert code == 0 and iq.exists() and iq.with_suffix(".json").exists()

    img = tmp_path / "pics" / "wifi.pgm"
    img.parent.mkdir()
    code, out = run(capsys, "render", str(iq), "-o", str(img), "--gray")
    assert code == 0 and "2.6214 ms" in out.out
    (ann,) = read_annotation(img.with_suffix(".txt"))
    assert 0.18 <= ann.box.w <= 0.22
    assert load_image(img).shape == (512, 512)

    dets = tmp_path / "dets"
    code, _ = run(capsys, "detect", str(img.parent), "-o", str(dets))
    assert code == 0 and (dets / "wifi.txt").exists()

    report = tmp_path / "r.json"
    code, out = run(capsys, "eval", str(img.parent), str(dets), "--json", str(report))
    assert code == 0 and "mAP" in out.out
    assert json.loads(report.read_text())["map_at"]["0.5"] == 1.0


def test_combine(tmp_path, capsys):
    paths = []
    for i, cls in enumerate(["zigbee", "bluetooth"]):
        p = tmp_path / f"{cls}.iq"
        assert main(SMALL + ["synth", cls, "-o", str(p), "--no-noise", f"--offset-hz={10e6 * i}"]) == 0
        paths.append(str(p))
    out = tmp_path / "both.iq"
    code, res = run(capsys, "combine", *paths, "-o", str(out), "--add-noise", "0")
    assert code == 0 and "2 emissions" in res.out


def test_dataset_build_split_validate_anchors(tmp_path, capsys):
    root = tmp_path / "ds"
    assert run(capsys, *SMALL, "dataset", "build", str(root), "--n", "10", "--no-recordings")[0] == 0
    code, out = run(capsys, "dataset", "split", str(root))
    counts = dict(tok.split("=") for tok in out.out.split())
    assert code == 0 and sum(map(int, counts.values())) == 10
    assert run(capsys, "dataset", "validate", str(root))[0] == 0
    code, out = run(capsys, "anchors", str(root), "-k", "3")
    assert code == 0 and len(json.loads(out.out)["anchors"]) == 3


def test_augment(tmp_path, capsys):
    iq, img = tmp_path / "z.iq", tmp_path / "z.pgm"
    main(["synth", "zigbee", "-o", str(iq), "--gray", "--start-s", "1e-3"])
    main(["render", str(iq), "-o", str(img), "--gray"])
    out = tmp_path / "moved.pgm"
    code, _ = run(capsys, "augment", str(img), "move", "-o", str(out), "--dx", "10", "--dy=-5")
    assert code == 0
    (a,) = read_annotation(out.with_suffix(".txt"))
    (b,) = read_annotation(img.with_suffix(".txt"))
    assert a.box.x_c > b.box.x_c


def test_stream_and_bench(tmp_path, capsys):
    det_out = tmp_path / "d.jsonl"
    code, out = run(capsys, *SMALL, "stream", "--frames", "3", "--detections-out", str(det_out))
    assert code == 0 and json.loads(out.out)["frames_detected"] == 3
    assert len(det_out.read_text().splitlines()) == 3
    code, out = run(capsys, *SMALL, "bench", "fft", "--duration", "0.05")
    assert code == 0 and json.loads(out.out)["module"] == "fft"


def test_validation_error_exit_code(capsys):
    code, res = run(capsys, "synth", "wifi", "-o", "/tmp/x.iq", "--duration-s", "-1")
    assert code == 1 and res.err
    assert run(capsys, "synth", "rocket", "-o", "/tmp/x.iq")[0] == 1
    assert run(capsys, "--fft-size", "100", "bench", "fft")[0] == 1


def test_io_error_exit_code(tmp_path, capsys):
    assert run(capsys, "render", str(tmp_path / "missing.iq"), "-o", str(tmp_path / "o.pgm"))[0] == 2
    assert run(capsys, "dataset", "validate", str(tmp_path / "nowhere"))[0] == 2


def test_invalid_dataset_exit_code(tmp_path, capsys):
    root = tmp_path / "ds"
    main(SMALL + ["dataset", "build", str(root), "--n", "2", "--no-recordings"])
    next((root / "pictures").glob("*.txt")).write_text("nonsense line\n")
    assert run(capsys, "dataset", "validate", str(root))[0] == 1
