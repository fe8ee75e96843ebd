"""8-bit image file IO (PNG and binary PPM/PGM) via Pillow."""

from __future__ import annotations

import numpy as np
from PIL import Image

_FORMATS = {".png": "PNG", ".ppm": "PPM", ".pgm": "PPM", ".pbm": "PPM"}


def read_image(path: str) -> np.ndarray:
    """Load an image as uint8; RGB images come back (H, W, 3), gray (H, W)."""
    with Image.open(path) as im:
        if im.mode in ("L", "I;16"):
            return np.asarray(im.convert("L"), dtype=np.uint8)
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def write_image(path: str, array: np.ndarray) -> None:
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise ValueError("expected a uint8 array")
    mode = "RGB" if array.ndim == 3 else "L"
    ext = "." + path.rsplit(".", 1)[-1].lower() if "." in path else ".png"
    if ext not in _FORMATS:
        raise ValueError(f"unsupported image extension {ext!r}")
    Image.fromarray(array, mode=mode).save(path, format=_FORMATS[ext])
