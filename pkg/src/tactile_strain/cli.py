"""Command-line front end.

Subcommands::

    tactile-strain undistort IMAGE [--config C] [--out-dir D]
    tactile-strain extract IMAGE [--config C] [--out-dir D]
    tactile-strain strain REF TARGET [--config C] [--out-dir D]
    tactile-strain synth [SPEC] [--out-dir D] [--seed N] [--count N]
    tactile-strain calibrate PAIRS_CSV [--out-dir D]

``--json`` prints a machine-readable summary on stdout. Exit codes: 0
success, 2 unreadable/unwritable files or invalid input, 3 nothing
detected, 4 inputs that do not correspond.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import io, pipeline, synth
from .errors import (DegenerateError, ImageIOError, IncompatibleInputsError, InvalidInputError,
                     NoDetectionError)
from .imaging import CameraModel
from .strain import DEFAULT_ALPHA, field_to_csv, field_to_rgb, fit_calibration

EXIT_OK = 0
EXIT_IO = 2
EXIT_NO_DETECTION = 3
EXIT_INCOMPATIBLE = 4

log = logging.getLogger("tactile_strain")


def _out_dir(path) -> Path:
    d = Path(path)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ImageIOError(f"cannot create output directory {d}: {exc}") from exc
    return d


def _emit(args, payload: dict) -> None:
    if args.json:
        sys.stdout.write(io.dumps(payload))


def _config(args) -> pipeline.PipelineConfig:
    if args.config is None:
        return pipeline.PipelineConfig()
    return pipeline.PipelineConfig.from_dict(io.read_json(args.config))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_undistort(args) -> int:
    config = _config(args)
    img = io.read_image(args.image)
    out = pipeline.undistort(img, config)
    d = _out_dir(args.out_dir)
    path = d / f"{Path(args.image).stem}_undistorted.png"
    io.write_image(path, out)
    _emit(args, {"output": path.name, "width": int(out.shape[1]), "height": int(out.shape[0])})
    return EXIT_OK


def cmd_extract(args) -> int:
    config = _config(args)
    img = io.read_image(args.image)
    ext = pipeline.extract(img, config)
    d = _out_dir(args.out_dir)
    ext.grid.to_csv(d / "grid.csv")
    io.write_json(d / "grid.json", ext.grid.to_dict())
    io.write_image(d / "overlay.png", pipeline.draw_overlay(ext))
    _emit(args, {"quads": len(ext.quads), "junctions": int(len(ext.junctions)),
                 "rows": ext.grid.rows, "cols": ext.grid.cols,
                 "valid": int(ext.grid.valid.sum())})
    return EXIT_OK


def cmd_strain(args) -> int:
    config = _config(args)
    ref = io.read_image(args.reference)
    tgt = io.read_image(args.target)
    result = pipeline.strain_between(ref, tgt, config)
    field_ = result.pop("_field")
    d = _out_dir(args.out_dir)
    io.write_json(d / "report.json", result)
    field_to_csv(field_, d / "field.csv")
    io.write_image(d / "field.png", field_to_rgb(field_))
    _emit(args, result)
    return EXIT_OK


def _synth_plan(spec_doc: dict, seed: int, count: int):
    """Grid, camera, noise and the list of displacement fields to render."""
    grid = synth.GridSpec.from_dict(spec_doc.get("grid", {"size": [640, 480]}))
    cam = spec_doc.get("camera")
    cam = None if cam is None else CameraModel.from_dict(cam)
    noise = synth.NoiseSpec(float(spec_doc.get("noise_sigma", 0.0)), seed)
    if "samples" in spec_doc:
        fields = [synth.DisplacementField.from_dict(f) for f in spec_doc["samples"]]
        return grid, cam, noise, fields
    kind = spec_doc.get("kind", "point")
    lo, hi = spec_doc.get("amplitude", [0.05, 0.3])
    eps = float(spec_doc.get("epsilon", 1.5)) * grid.pitch
    rng = np.random.default_rng(seed)
    ox, oy = grid.origin
    w, h = grid.extent
    fields = []
    for i in range(count):
        a = lo if count == 1 else lo + (hi - lo) * i / (count - 1)
        cx = ox + w * rng.uniform(0.3, 0.7)
        cy = oy + h * rng.uniform(0.3, 0.7)
        angle = float(rng.uniform(0.0, 180.0)) if kind == "edge" else 0.0
        fields.append(synth.DisplacementField(kind, (cx, cy), a * grid.cell, eps, angle))
    return grid, cam, noise, fields


def cmd_synth(args) -> int:
    spec_doc = io.read_json(args.spec) if args.spec else {}
    grid, cam, noise, fields = _synth_plan(spec_doc, args.seed, args.count)
    alpha = float(spec_doc.get("alpha", DEFAULT_ALPHA))
    K_u = int(spec_doc.get("K_u", 100))
    K_v = int(spec_doc.get("K_v", 100))
    d = _out_dir(args.out_dir)
    listing = []
    for i, f in enumerate(fields):
        pair = synth.make_pair(grid, f, cam, noise, alpha, K_u, K_v, target_seed=noise.seed + 1 + i)
        if i == 0:
            io.write_image(d / "reference.png", pair.reference)
        name = f"sample_{i:03d}"
        io.write_image(d / f"{name}.png", pair.target)
        pair.sidecar["reference_image"] = "reference.png"
        pair.sidecar["image"] = f"{name}.png"
        io.write_json(d / f"{name}.json", pair.sidecar)
        listing.append({"image": f"{name}.png", "ground_truth_gamma": pair.sidecar["ground_truth_gamma"]})
    _emit(args, {"samples": listing})
    return EXIT_OK


def read_pairs(path) -> np.ndarray:
    """``gamma,force`` rows; a non-numeric first row is taken as a header."""
    rows = []
    try:
        with open(path, newline="") as fh:
            for k, rec in enumerate(csv.reader(fh)):
                if not rec or all(not c.strip() for c in rec):
                    continue
                try:
                    rows.append((float(rec[0]), float(rec[1])))
                except (ValueError, IndexError):
                    if k == 0:
                        continue
                    raise InvalidInputError(f"{path}: bad row {k + 1}: {rec}")
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc
    return np.array(rows, dtype=np.float64).reshape(-1, 2)


def cmd_calibrate(args) -> int:
    model = fit_calibration(read_pairs(args.pairs))
    d = _out_dir(args.out_dir)
    io.write_json(d / "calibration.json", model.to_dict())
    _emit(args, model.to_dict())
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline configuration (JSON)")
    common.add_argument("--out-dir", default=".", help="directory for output files")
    common.add_argument("--json", action="store_true", help="print a JSON summary on stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="tactile-strain", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("undistort", parents=[common], help="remove lens distortion from an image")
    s.add_argument("image")
    s.set_defaults(func=cmd_undistort)

    s = sub.add_parser("extract", parents=[common], help="extract the control grid from an image")
    s.add_argument("image")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("strain", parents=[common], help="strain, force, contact and edge between two images")
    s.add_argument("reference")
    s.add_argument("target")
    s.set_defaults(func=cmd_strain)

    s = sub.add_parser("synth", parents=[common], help="render synthetic image pairs with ground truth")
    s.add_argument("spec", nargs="?", help="dataset description (JSON)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=int, default=5, help="samples when SPEC lists none")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("calibrate", parents=[common], help="fit force = slope * gamma + intercept")
    s.add_argument("pairs", help="CSV of gamma,force rows")
    s.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NoDetectionError as exc:
        log.error("nothing detected: %s", exc)
        return EXIT_NO_DETECTION
    except IncompatibleInputsError as exc:
        log.error("incompatible inputs: %s", exc)
        return EXIT_INCOMPATIBLE
    except (OSError, InvalidInputError, DegenerateError) as exc:
        log.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
