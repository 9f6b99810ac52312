"""Portable float map (PFM) read/write.

Color maps only ("PF" header): width, height, negative scale for
little-endian data, rows stored bottom-to-top, three f32 per texel.
Arrays passed in and out are top-down (row 0 = top).
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np


def write_pfm(path_or_buf, image: np.ndarray) -> None:
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) array, got shape {img.shape}")
    h, w, _ = img.shape
    header = f"PF\n{w} {h}\n-1.0\n".encode("ascii")
    body = np.ascontiguousarray(img[::-1], dtype="<f4").tobytes()
    if isinstance(path_or_buf, (str, Path)):
        with open(path_or_buf, "wb") as f:
            f.write(header)
            f.write(body)
    else:
        path_or_buf.write(header)
        path_or_buf.write(body)


def pfm_bytes(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    write_pfm(buf, image)
    return buf.getvalue()


def _read_token(f) -> bytes:
    tok = b""
    while True:
        c = f.read(1)
        if c == b"":
            raise ValueError("truncated PFM header")
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def read_pfm(path_or_buf) -> np.ndarray:
    """Read a color PFM into an (H, W, 3) float32 array, top-down."""
    if isinstance(path_or_buf, (str, Path)):
        with open(path_or_buf, "rb") as f:
            return read_pfm(f)
    f = path_or_buf
    magic = _read_token(f)
    if magic != b"PF":
        raise ValueError(f"not a color PFM (magic {magic!r})")
    w = int(_read_token(f))
    h = int(_read_token(f))
    scale = float(_read_token(f))
    if w <= 0 or h <= 0:
        raise ValueError(f"invalid PFM dimensions {w}x{h}")
    dtype = "<f4" if scale < 0 else ">f4"
    body = f.read(w * h * 3 * 4)
    if len(body) != w * h * 3 * 4:
        raise ValueError("PFM payload shorter than header promises")
    data = np.frombuffer(body, dtype=dtype)
    img = data.reshape(h, w, 3)[::-1].astype(np.float32)
    if scale not in (-1.0, 1.0):
        img = img * abs(scale)
    return np.ascontiguousarray(img)
