"""Reading and writing images and JSON documents."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageIOError, InvalidInputError


def read_image(path) -> np.ndarray:
    """Load PNG/PGM/PPM (or anything Pillow reads) as uint8.

    8-bit grayscale files come back as ``(H, W)``; everything else is
    converted to ``(H, W, 3)`` RGB. Palette and alpha images are flattened;
    16-bit and float images are rejected rather than silently rescaled.
    """
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I", "I;16", "I;16B", "I;16L", "F"):
                raise ImageIOError(f"{path}: {mode} images are not supported, use 8-bit")
            if mode in ("L", "1"):
                return np.array(im.convert("L"), dtype=np.uint8)
            return np.array(im.convert("RGB"), dtype=np.uint8)
    except ImageIOError:
        raise
    except (OSError, UnidentifiedImageError, ValueError, SyntaxError) as exc:
        raise ImageIOError(f"cannot read image {path}: {exc}") from exc


def write_image(path, img) -> None:
    """Write a gray, RGB or boolean array as PNG (or PGM/PPM by suffix)."""
    a = np.asarray(img)
    if a.dtype == bool:
        a = a.astype(np.uint8) * 255
    if a.dtype != np.uint8 or a.ndim not in (2, 3) or (a.ndim == 3 and a.shape[2] != 3):
        raise InvalidInputError(f"cannot write array of shape {a.shape} and dtype {a.dtype}")
    try:
        Image.fromarray(a).save(path)
    except (OSError, ValueError, KeyError) as exc:
        raise ImageIOError(f"cannot write image {path}: {exc}") from exc


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise ImageIOError(f"cannot read JSON {path}: {exc}") from exc


def dumps(payload) -> str:
    """Stable JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, payload) -> None:
    try:
        Path(path).write_text(dumps(payload))
    except OSError as exc:
        raise ImageIOError(f"cannot write JSON {path}: {exc}") from exc
