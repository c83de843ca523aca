import json
import subprocess
import sys

import numpy as np
import pytest

from tactile_strain import cli, io, synth
from tactile_strain.synth import DisplacementField, GridSpec


def files_of(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.fixture(scope="module")
def pair_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("pair")
    spec = GridSpec()
    ox, oy = spec.origin
    f = DisplacementField("point", (ox + 200, oy + 180), 5.0, 60.0)
    pair = synth.make_pair(spec, f)
    io.write_image(d / "ref.png", pair.reference)
    io.write_image(d / "tgt.png", pair.target)
    io.write_json(d / "truth.json", pair.sidecar)
    return d


def test_extract_outputs_and_json(pair_dir, tmp_path, capsys):
    assert cli.main(["extract", str(pair_dir / "ref.png"), "--out-dir", str(tmp_path), "--json"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["quads"] == 100 and (summary["rows"], summary["cols"]) == (9, 9)
    assert {"grid.csv", "grid.json", "overlay.png"} <= set(files_of(tmp_path))
    grid = json.loads((tmp_path / "grid.json").read_text())
    assert grid["rows"] == 9 and all(c["valid"] for c in grid["cells"])


def test_extract_blank_is_no_detection(tmp_path):
    io.write_image(tmp_path / "blank.png", np.zeros((60, 80, 3), np.uint8))
    assert cli.main(["extract", str(tmp_path / "blank.png"), "--out-dir", str(tmp_path / "o")]) == 3


def test_unreadable_inputs_exit_2(tmp_path, pair_dir):
    (tmp_path / "corrupt.png").write_bytes(b"\x89PNG\r\n\x1a\nnot really")
    assert cli.main(["extract", str(tmp_path / "corrupt.png"), "--out-dir", str(tmp_path)]) == 2
    assert cli.main(["strain", str(tmp_path / "nope.png"), str(pair_dir / "tgt.png"),
                     "--out-dir", str(tmp_path)]) == 2
    (tmp_path / "cfg.json").write_text('{"bogus": 1}')
    assert cli.main(["extract", str(pair_dir / "ref.png"), "--config", str(tmp_path / "cfg.json"),
                     "--out-dir", str(tmp_path)]) == 2


def test_unwritable_out_dir_exit_2(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["synth", "--out-dir", str(blocker / "sub"), "--count", "1"]) == 2


def test_grid_mismatch_exit_4(tmp_path):
    io.write_image(tmp_path / "a.png", synth.render_grid(GridSpec(rows=5, cols=5)))
    io.write_image(tmp_path / "b.png", synth.render_grid(GridSpec(rows=6, cols=5)))
    assert cli.main(["strain", str(tmp_path / "a.png"), str(tmp_path / "b.png"),
                     "--out-dir", str(tmp_path)]) == 4


def test_strain_identical_and_synthetic(pair_dir, tmp_path):
    same = tmp_path / "same"
    assert cli.main(["strain", str(pair_dir / "ref.png"), str(pair_dir / "ref.png"), "--out-dir", str(same)]) == 0
    report = json.loads((same / "report.json").read_text())
    assert report["strain"]["gamma_ss"] == 0.0 and report["force"]["in_range"] is False
    out = tmp_path / "pair"
    assert cli.main(["strain", str(pair_dir / "ref.png"), str(pair_dir / "tgt.png"), "--out-dir", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    truth = json.loads((pair_dir / "truth.json").read_text())["ground_truth_gamma"]
    assert abs(report["strain"]["gamma_ss"] - truth) <= 0.15 * truth
    assert {"field.csv", "field.png"} <= set(files_of(out))


def test_synth_five_samples_monotone(tmp_path):
    assert cli.main(["synth", "--out-dir", str(tmp_path), "--seed", "3"]) == 0
    names = set(files_of(tmp_path))
    assert {f"sample_{i:03d}.png" for i in range(5)} <= names
    assert {f"sample_{i:03d}.json" for i in range(5)} <= names
    # amplitude sweep with the contact held fixed
    spec_doc = {"grid": GridSpec(rows=6, cols=6).to_dict(),
                "samples": [DisplacementField("point", (120, 120), a, 50.0).to_dict()
                            for a in (0.0, 1.0, 2.0, 4.0, 6.0)],
                "K_u": 20, "K_v": 20}
    (tmp_path / "spec.json").write_text(json.dumps(spec_doc))
    out = tmp_path / "sweep"
    assert cli.main(["synth", str(tmp_path / "spec.json"), "--out-dir", str(out)]) == 0
    gammas = [json.loads((out / f"sample_{i:03d}.json").read_text())["ground_truth_gamma"] for i in range(5)]
    assert np.all(np.diff(gammas) >= 0)


def test_calibrate(tmp_path, capsys):
    g = np.linspace(0.5, 3, 6)
    rows = "\n".join(f"{a!r},{3.09 * a - 1.14!r}" for a in g.tolist())
    (tmp_path / "pairs.csv").write_text("gamma,force\n" + rows + "\n")
    assert cli.main(["calibrate", str(tmp_path / "pairs.csv"), "--out-dir", str(tmp_path), "--json"]) == 0
    model = json.loads(capsys.readouterr().out)
    assert model["slope"] == pytest.approx(3.09, abs=1e-9)
    assert model["intercept"] == pytest.approx(-1.14, abs=1e-9)
    (tmp_path / "two.csv").write_text("1,2\n2,5\n")
    assert cli.main(["calibrate", str(tmp_path / "two.csv"), "--out-dir", str(tmp_path / "t")]) == 0
    two = json.loads((tmp_path / "t" / "calibration.json").read_text())
    assert two["slope"] == pytest.approx(3.0) and two["intercept"] == pytest.approx(-1.0)
    (tmp_path / "one.csv").write_text("1,2\n1,3\n")
    assert cli.main(["calibrate", str(tmp_path / "one.csv"), "--out-dir", str(tmp_path)]) == 2


def test_undistort(pair_dir, tmp_path):
    cfg = {"camera": {"fx": 300, "fy": 300, "cx": 239.5, "cy": 219.5, "dist": [0.05, 0, 0, 0]}}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert cli.main(["undistort", str(pair_dir / "ref.png"), "--config", str(tmp_path / "cfg.json"),
                     "--out-dir", str(tmp_path)]) == 0
    out = io.read_image(tmp_path / "ref_undistorted.png")
    assert out.shape == io.read_image(pair_dir / "ref.png").shape


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "tactile_strain.cli", "synth", "--count", "1",
                        "--out-dir", str(tmp_path), "--json"], capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)["samples"][0]["image"] == "sample_000.png"
