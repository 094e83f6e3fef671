"""Binary PGM (P5) export for image grids.

PGM needs no external imaging dependency and is bit-exact: pixel values in
[0, 1] map to bytes 0..255 by rounding.
"""

import numpy as np


def write_pgm(path, image):
    """Write a single grayscale image with values in [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("write_pgm expects a 2-d image")
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path):
    """Read a binary P5 file back to floats in [0, 1] (for round-trip tests)."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ValueError(f"not a binary PGM file: magic {magic!r}")
        line = fh.readline()
        while line.startswith(b"#"):
            line = fh.readline()
        width, height = (int(tok) for tok in line.split())
        maxval = int(fh.readline())
        raw = np.frombuffer(fh.read(width * height), dtype=np.uint8)
    return raw.reshape(height, width).astype(np.float64) / maxval


def tile_grid(images, columns, pad=2, pad_value=0.0):
    """Arrange equally sized images into a padded grid, row major."""
    images = [np.asarray(im, dtype=np.float64) for im in images]
    h, w = images[0].shape
    rows = (len(images) + columns - 1) // columns
    grid = np.full((rows * (h + pad) + pad, columns * (w + pad) + pad), pad_value)
    for k, im in enumerate(images):
        if im.shape != (h, w):
            raise ValueError("all grid images must share one shape")
        r, c = divmod(k, columns)
        top, left = pad + r * (h + pad), pad + c * (w + pad)
        grid[top:top + h, left:left + w] = im
    return grid
