"""Binary PGM (P5) reading/writing, plus PNG through Pillow."""
import os

import numpy as np

from .errors import DataError


def write_pgm(path, pixels):
    px = np.asarray(pixels, dtype=np.uint8)
    if px.ndim != 2:
        raise DataError(f"PGM needs a 2-D raster, got shape {px.shape}")
    h, w = px.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(px).tobytes())


def _tokens(data):
    """Yield (token, end offset) for header fields, skipping ``#`` comments."""
    i = 0
    n = len(data)
    while True:
        while i < n and (data[i:i + 1].isspace() or data[i:i + 1] == b"#"):
            if data[i:i + 1] == b"#":
                while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                    i += 1
            else:
                i += 1
        j = i
        while j < n and not data[j:j + 1].isspace():
            j += 1
        yield data[i:j], j
        i = j


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    tok = _tokens(data)
    magic, _ = next(tok)
    if magic != b"P5":
        raise DataError(f"{path}: not a binary PGM (magic {magic!r})")
    w = int(next(tok)[0])
    h = int(next(tok)[0])
    maxval, end = next(tok)
    if int(maxval) != 255:
        raise DataError(f"{path}: only maxval 255 is supported")
    body = data[end + 1:end + 1 + w * h]
    if len(body) != w * h:
        raise DataError(f"{path}: truncated raster")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


def write_png(path, pixels):
    from PIL import Image

    Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8)).save(path, format="PNG")


def read_png(path):
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8).copy()


def write_image(path, pixels):
    ext = os.path.splitext(path)[1].lower()
    if ext == ".png":
        write_png(path, pixels)
    else:
        write_pgm(path, pixels)


def read_image(path):
    ext = os.path.splitext(path)[1].lower()
    return read_png(path) if ext == ".png" else read_pgm(path)
