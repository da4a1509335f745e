import json

import numpy as np
import pytest

from scaleattack.cli import main
from scaleattack.harness.corpus import synth_image
from scaleattack.image import Image, load_image, save_image
from scaleattack.resize import ScaleSpec, resize


def _records(capsys):
    return [json.loads(line) for line in capsys.readouterr().out.splitlines() if line.strip()]


@pytest.fixture
def files(tmp_path):
    rng = np.random.default_rng(21)
    carrier = resize(synth_image(rng, 160, 120), ScaleSpec(600, 600))
    small = synth_image(rng, 100, 100)
    save_image(carrier, tmp_path / "carrier.png")
    save_image(small, tmp_path / "small.png")
    return tmp_path


def test_attack_verify_roundtrip(files, capsys):
    out = files / "combined.png"
    assert main(["attack", "--carrier", str(files / "carrier.png"), "--embed", f"{files / 'small.png'}:100x100",
                 "--out", str(out), "--report", str(files / "rep.json")]) == 0
    rec = _records(capsys)[0]
    assert rec["type"] == "embed_report" and rec["collisions"] == 0
    assert json.loads((files / "rep.json").read_text())["fraction_perturbed"] == rec["fraction_perturbed"]
    assert main(["verify", "--combined", str(out), "--small", str(files / "small.png"), "--size", "100x100"]) == 0
    assert _records(capsys)[0]["exact"] is True


def test_attack_resizes_small(files, capsys):
    out = files / "combined.png"
    assert main(["attack", "--carrier", str(files / "carrier.png"), "--embed", f"{files / 'small.png'}:60x50",
                 "--out", str(out)]) == 0
    assert load_image(out).size == (600, 600)
    assert "resizing" in capsys.readouterr().err


def test_verify_mismatch(files, capsys):
    # the clean carrier does not reveal the small image
    assert main(["verify", "--combined", str(files / "carrier.png"), "--small", str(files / "small.png"),
                 "--size", "100x100"]) == 5
    assert _records(capsys)[0]["exact"] is False


def test_verify_fails_after_antialiased_reencode(files, capsys):
    combined = files / "combined.png"
    main(["attack", "--carrier", str(files / "carrier.png"), "--embed", f"{files / 'small.png'}:100x100",
          "--out", str(combined)])
    blurred = files / "blurred.png"
    assert main(["resize", "--in", str(combined), "--size", "300x300", "--policy", "antialias", "--out", str(blurred)]) == 0
    assert main(["verify", "--combined", str(blurred), "--small", str(files / "small.png"), "--size", "100x100"]) == 5


def test_verify_wrong_size_is_usage_error(files):
    assert main(["verify", "--combined", str(files / "carrier.png"), "--small", str(files / "small.png"),
                 "--size", "90x90"]) == 1


def test_plan_violation(files, capsys):
    code = main(["attack", "--carrier", str(files / "small.png"), "--embed", f"{files / 'carrier.png'}:600x600",
                 "--out", str(files / "x.png")])
    assert code == 3
    assert "plan" in capsys.readouterr().err


def test_io_errors(files):
    assert main(["resize", "--in", str(files / "missing.png"), "--size", "4x4", "--out", str(files / "o.png")]) == 2
    (files / "bad.png").write_bytes(b"\x89PNG\r\n\x1a\nxx")
    assert main(["detect", "--in", str(files / "bad.png")]) == 2
    assert main(["resize", "--in", str(files / "small.png"), "--size", "4x4", "--out", str(files / "o.jpg")]) == 2


def test_usage_errors(files):
    assert main(["resize", "--in", str(files / "small.png"), "--size", "4by4", "--out", str(files / "o.png")]) == 1
    assert main(["resize", "--in", str(files / "small.png"), "--size", "4x4", "--out", str(files / "small.png")]) == 1
    assert main(["resize", "--in", str(files / "small.png"), "--size", "4x4", "--policy", "multistep",
                 "--step-limit", "1", "--out", str(files / "o.png")]) == 1
    assert main(["detect", "--in", str(files / "small.png"), "--threshold", "x"]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["attack", "--carrier", str(files / "carrier.png"), "--embed", f"{files / 'small.png'}:100x100"]) == 1
    assert main(["--version"]) == 0


def test_detect_too_small(tmp_path):
    save_image(Image.filled(32, 32, 1), tmp_path / "tiny.png")
    assert main(["detect", "--in", str(tmp_path / "tiny.png")]) == 1


def test_detect_verdicts(files, capsys):
    combined = files / "combined.png"
    main(["attack", "--carrier", str(files / "carrier.png"), "--embed", f"{files / 'small.png'}:100x100",
          "--out", str(combined)])
    capsys.readouterr()
    assert main(["detect", "--in", str(files / "carrier.png")]) == 0
    assert _records(capsys)[0]["verdict"] == "clean"
    spec_png = files / "spectrum.png"
    assert main(["detect", "--in", str(combined), "--spectrum-out", str(spec_png)]) == 4
    rec = _records(capsys)[0]
    assert rec["verdict"] == "attacked"
    assert set(rec) == {"path", "verdict", "score", "threshold", "peaks", "inferred_scales"}
    assert load_image(spec_png).size == (600, 600)


def test_resize_command(files, capsys):
    for policy in ("vulnerable", "antialias", "multistep"):
        out = files / f"r_{policy}.pgm"
        assert main(["resize", "--in", str(files / "small.png"), "--size", "33x17", "--policy", policy,
                     "--out", str(out)]) == 0
        assert load_image(out).size == (33, 17)


def test_probe(tmp_path, capsys):
    out = tmp_path / "probe.png"
    assert main(["probe", "--size", "100x100", "--target", "5x5", "--pixel", "2,2", "--out", str(out)]) == 0
    rec = _records(capsys)[0]
    assert rec["support"] == 4 and rec["max_weight"] == pytest.approx(0.25)
    assert main(["probe", "--size", "100x100", "--target", "5x5", "--pixel", "2,2", "--policy", "antialias",
                 "--out", str(out)]) == 0
    rec = _records(capsys)[0]
    assert rec["support"] > 4 and rec["max_weight"] < 0.25 and abs(rec["total"] - 1) < 1e-6
    img = load_image(out)
    assert img.size == (100, 100) and img.pixels.max() == 255
    assert main(["probe", "--size", "100x100", "--target", "5x5", "--pixel", "5,0", "--out", str(out)]) == 1


def test_bench_deterministic(tmp_path, capsys):
    cfg = tmp_path / "bench.cfg"
    cfg.write_text("corpus_dir = corpus\ncarrier_scale = 160x160\nattack_scale = 23x23\noff_scale = 17x17\n")
    args = ["bench", "--config", str(cfg), "--seed", "5", "--synthesize", "5"]
    assert main(args + ["--out", str(tmp_path / "run1")]) == 0
    first = capsys.readouterr()
    assert "Antialiased" in first.err
    assert main(args + ["--out", str(tmp_path / "run2")]) == 0
    second = capsys.readouterr()
    assert first.out == second.out
    a = (tmp_path / "run1" / "records.jsonl").read_bytes()
    assert a == (tmp_path / "run2" / "records.jsonl").read_bytes()
    pairs = [json.loads(line) for line in a.splitlines()]
    assert len({r["pair"] for r in pairs if r["type"] == "pair"}) == 5
    assert main(["bench", "--config", str(cfg), "--corpus", str(tmp_path / "nowhere")]) == 2
