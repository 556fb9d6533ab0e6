"""8-bit PNG encode/decode shared by the CLI, service and generators."""

from __future__ import annotations

import io

import numpy as np
from PIL import Image


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(np.asarray(img, dtype=float), 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_png(img: np.ndarray) -> bytes:
    """Deterministic PNG bytes for a float [0,1] or uint8 HxWx3 image."""
    arr = img if img.dtype == np.uint8 else to_uint8(img)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def write_png(img: np.ndarray, path) -> None:
    with open(path, "wb") as f:
        f.write(encode_png(img))


def read_png(path) -> np.ndarray:
    """Float [0,1] HxWx3 array from an image file."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=float) / 255.0
