"""Procedural 28x28 digit corpus in MNIST layout.

Each class is a fixed stroke skeleton (lines and elliptic arcs in a unit
box) rendered with per-image random similarity distortion, stroke wobble,
thickness and brightness.  The corpus serves as a deterministic stand-in
wherever MNIST-format files are expected: same shapes, same value range,
same IDX export.  Thickness and scale draws are log-normal, so the corpus
keeps a naturally heavy tail of unusual images.
"""

import os

import numpy as np

from .autodiff import make_rng
from .data import Dataset, write_idx

SIDE = 28


def _line(x0, y0, x1, y1):
    return ("line", (x0, y0, x1, y1))


def _arc(cx, cy, rx, ry, deg0, deg1):
    return ("arc", (cx, cy, rx, ry, np.deg2rad(deg0), np.deg2rad(deg1)))


# unit box, x right, y down
_SKELETONS = {
    0: [_arc(0.50, 0.50, 0.26, 0.36, 0, 360)],
    1: [_line(0.36, 0.30, 0.54, 0.12), _line(0.54, 0.12, 0.54, 0.88)],
    2: [_arc(0.48, 0.33, 0.24, 0.20, 170, 368),
        _line(0.70, 0.40, 0.28, 0.84), _line(0.28, 0.84, 0.76, 0.84)],
    3: [_arc(0.46, 0.32, 0.24, 0.19, 190, 390),
        _arc(0.46, 0.68, 0.26, 0.21, 330, 530)],
    4: [_line(0.60, 0.12, 0.22, 0.58), _line(0.22, 0.58, 0.80, 0.58),
        _line(0.62, 0.32, 0.62, 0.90)],
    5: [_line(0.72, 0.12, 0.34, 0.12), _line(0.34, 0.12, 0.31, 0.45),
        _arc(0.49, 0.64, 0.26, 0.23, 230, 470)],
    6: [_line(0.64, 0.10, 0.40, 0.36), _line(0.40, 0.36, 0.30, 0.62),
        _arc(0.50, 0.68, 0.21, 0.19, 0, 360)],
    7: [_line(0.24, 0.14, 0.78, 0.14), _line(0.78, 0.14, 0.42, 0.88)],
    8: [_arc(0.50, 0.31, 0.19, 0.17, 0, 360),
        _arc(0.50, 0.69, 0.23, 0.20, 0, 360)],
    9: [_arc(0.48, 0.34, 0.21, 0.19, 0, 360),
        _line(0.69, 0.36, 0.66, 0.64), _line(0.66, 0.64, 0.54, 0.88)],
}


def _sample_stroke(kind, params, samples_per_unit=120):
    if kind == "line":
        x0, y0, x1, y1 = params
        length = np.hypot(x1 - x0, y1 - y0)
        n = max(2, int(length * samples_per_unit))
        t = np.linspace(0.0, 1.0, n)
        return np.column_stack([x0 + (x1 - x0) * t, y0 + (y1 - y0) * t])
    cx, cy, rx, ry, a0, a1 = params
    span = abs(a1 - a0) * max(rx, ry)
    n = max(4, int(span * samples_per_unit))
    t = np.linspace(a0, a1, n)
    return np.column_stack([cx + rx * np.cos(t), cy + ry * np.sin(t)])


def _render(points, thickness, amplitude):
    """Splat stroke points onto the pixel grid with a Gaussian pen."""
    img = np.zeros((SIDE, SIDE))
    v_grid, h_grid = np.mgrid[0:SIDE, 0:SIDE]
    sig2 = 2.0 * thickness * thickness
    for x, y in points:
        img += np.exp(-((h_grid - x) ** 2 + (v_grid - y) ** 2) / sig2)
    peak = img.max()
    if peak > 0:
        # saturate stroke cores so digits look inked rather than ghostly
        img = amplitude * np.minimum(img / (0.35 * peak), 1.0)
    return np.clip(img, 0.0, 1.0)


def _distort(points, rng):
    """Random similarity transform plus low-frequency wobble, in pixels."""
    angle = rng.normal(0.0, 0.10)
    scale = 18.0 * np.exp(rng.normal(0.0, 0.09))
    shear = rng.normal(0.0, 0.06)
    cx, cy = 13.5 + rng.normal(0.0, 1.0), 13.5 + rng.normal(0.0, 1.0)
    cos, sin = np.cos(angle), np.sin(angle)
    centered = points - 0.5
    x = centered[:, 0] + shear * centered[:, 1]
    y = centered[:, 1]
    xr = scale * (x * cos - y * sin) + cx
    yr = scale * (x * sin + y * cos) + cy
    # smooth wobble along the stroke
    phase = rng.uniform(0, 2 * np.pi, size=2)
    amp = abs(rng.normal(0.0, 0.35))
    t = np.linspace(0, 2 * np.pi, len(points))
    xr = xr + amp * np.sin(2 * t + phase[0])
    yr = yr + amp * np.sin(3 * t + phase[1])
    return np.column_stack([xr, yr])


def digit_image(klass, rng):
    points = np.vstack([_sample_stroke(kind, params)
                        for kind, params in _SKELETONS[klass]])
    points = _distort(points, rng)
    thickness = 0.9 * np.exp(rng.normal(0.0, 0.22))
    amplitude = rng.uniform(0.85, 1.0)
    return _render(points, thickness, amplitude)


def make_corpus(count, seed, split=""):
    """Deterministic labeled corpus of ``count`` digit images."""
    rng = make_rng(seed, stream=4)
    labels = rng.integers(0, 10, size=count)
    images = np.empty((count, SIDE * SIDE))
    for i, klass in enumerate(labels):
        images[i] = digit_image(int(klass), rng).ravel()
    return Dataset(images, labels.astype(np.int64), split)


def ensure_idx_corpus(data_dir, train_count=12_000, test_count=2_000, seed=99):
    """Write the corpus as MNIST-layout IDX files under ``data_dir`` once."""
    os.makedirs(data_dir, exist_ok=True)
    stems = [("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
              train_count, seed, "train"),
             ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte",
              test_count, seed + 1, "test")]
    for image_stem, label_stem, count, sub_seed, split in stems:
        image_path = os.path.join(data_dir, image_stem)
        label_path = os.path.join(data_dir, label_stem)
        if os.path.exists(image_path) and os.path.exists(label_path):
            continue
        ds = make_corpus(count, sub_seed, split)
        write_idx(image_path, ds.images.reshape(count, SIDE, SIDE))
        write_idx(label_path, ds.labels)
    return data_dir
