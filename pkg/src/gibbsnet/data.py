"""IDX-format ingestion, binarization and batch scheduling.

The IDX layout (big-endian): a 32-bit magic (0x00000803 for uint8 image
cubes, 0x00000801 for uint8 label vectors), one 32-bit extent per
dimension, then raw unsigned bytes.  Gzip-compressed files are accepted
transparently.  Pixels are scaled to [0, 1] on read; labels stay integers.
"""

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import make_rng

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IdxParseError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray   # [P x N] floats in [0, 1]
    labels: np.ndarray   # [P] int class ids
    split: str = ""

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError("images and labels must pair up")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise ValueError("pixels must lie in [0, 1]")

    @property
    def count(self):
        return self.images.shape[0]

    def subset(self, count, seed=None):
        """First ``count`` rows, or a seeded random subset."""
        if seed is None:
            idx = np.arange(min(count, self.count))
        else:
            idx = make_rng(seed, stream=9).permutation(self.count)[:count]
        return Dataset(self.images[idx], self.labels[idx], self.split)


def _open_maybe_gzip(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx(path):
    """Parse one IDX file; images come back scaled to [0,1], labels as ints."""
    with _open_maybe_gzip(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise IdxParseError(f"{path}: truncated header at byte {len(raw)}")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic == IMAGE_MAGIC:
        ndim = 3
    elif magic == LABEL_MAGIC:
        ndim = 1
    else:
        raise IdxParseError(f"{path}: bad magic 0x{magic:08x} at byte 0")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxParseError(f"{path}: truncated dimensions at byte {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = header + int(np.prod(dims))
    if len(raw) != expected:
        raise IdxParseError(
            f"{path}: expected {expected} bytes, file ends at byte {len(raw)}")
    data = np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)
    if magic == IMAGE_MAGIC:
        return data.astype(np.float64) / 255.0
    return data.astype(np.int64)


def write_idx(path, array):
    """Write an IDX file; float arrays are treated as [0,1] images."""
    array = np.asarray(array)
    if array.dtype.kind == "f":
        if array.ndim != 3:
            raise ValueError("image tensors must be [P x rows x cols]")
        payload = np.rint(np.clip(array, 0.0, 1.0) * 255.0).astype(np.uint8)
        magic = IMAGE_MAGIC
    else:
        if array.ndim != 1:
            raise ValueError("label tensors must be 1-d")
        payload = array.astype(np.uint8)
        magic = LABEL_MAGIC
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{payload.ndim}I", *payload.shape))
        fh.write(payload.tobytes())


def binarize(images, mode="threshold", seed=0):
    """Map [0,1] pixels to {0,1}.

    ``threshold`` cuts at 0.5; ``stochastic`` draws Bernoulli(pixel) once,
    deterministically for a given seed, and the result is fixed thereafter.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.min() < 0 or images.max() > 1:
        raise ValueError("pixels must lie in [0, 1] before binarization")
    if mode == "threshold":
        return (images >= 0.5).astype(np.float64)
    if mode == "stochastic":
        rng = make_rng(seed, stream=7)
        return (rng.uniform(size=images.shape) < images).astype(np.float64)
    raise ValueError(f"unknown binarization mode {mode!r}")


def batches(dataset, size, seed, epoch):
    """Yield (images, labels) batches in a seeded per-epoch shuffle order.

    Every observation appears exactly once per epoch; the final short batch
    is kept.
    """
    if size < 1:
        raise ValueError("batch size must be >= 1")
    order = make_rng(seed, stream=1000 + epoch).permutation(dataset.count)
    for start in range(0, dataset.count, size):
        take = order[start:start + size]
        yield dataset.images[take], dataset.labels[take]


_SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _find_file(data_dir, stem):
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
        path = os.path.join(data_dir, name)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"no {stem}[.gz] under {data_dir}")


def load_split(data_dir, split):
    """Load an MNIST-format split ('train' or 'test') from a directory."""
    image_stem, label_stem = _SPLIT_FILES[split]
    images = read_idx(_find_file(data_dir, image_stem))
    labels = read_idx(_find_file(data_dir, label_stem))
    if images.ndim != 3:
        raise IdxParseError("image file did not contain a [P x rows x cols] cube")
    flat = images.reshape(images.shape[0], -1)
    return Dataset(flat, labels, split)


def resolve_data_dir(explicit=None):
    """Explicit path, else the GIBBS_DATA_DIR environment variable."""
    if explicit:
        return explicit
    env = os.environ.get("GIBBS_DATA_DIR")
    if env:
        return env
    raise FileNotFoundError(
        "no data directory given and GIBBS_DATA_DIR is not set")
