"""Corpus ingestion and batching.

IDX container layout (big-endian): image files start with magic 0x00000803
and three u32 dims (count, rows, cols) followed by count*rows*cols unsigned
bytes; label files start with magic 0x00000801 and one u32 count followed by
count bytes. Pixels map to floats via x/127.5 - 1, so the canonical image
domain is [-1, 1].
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import IdxCountError, IdxMagicError, IdxTruncatedError, ShapeError, UsageError
from .tensor import Tensor

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    images: Tensor  # [M, 1, H, W] floats in [-1, 1]
    labels: np.ndarray  # [M] integer class ids
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        m = self.images.data.shape[0]
        if self.labels.shape != (m,):
            raise UsageError(f"{m} images but {self.labels.shape[0]} labels")
        if m and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise UsageError(f"labels outside [0, {self.num_classes})")

    def __len__(self):
        return self.images.data.shape[0]

    @property
    def resolution(self):
        return self.images.data.shape[-1]


@dataclass
class Batch:
    images: Tensor  # [n, 1, res, res]
    labels: np.ndarray

    def __len__(self):
        return self.images.data.shape[0]

    @property
    def resolution(self):
        return self.images.data.shape[-1]


def _read_exact(f, n, path):
    buf = f.read(n)
    if len(buf) != n:
        raise IdxTruncatedError(f"{path}: expected {n} more bytes, got {len(buf)}")
    return buf


def read_idx_images(path):
    with open(path, "rb") as f:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, path))
        if magic != IMAGE_MAGIC:
            raise IdxMagicError(f"{path}: bad image magic 0x{magic:08x}")
        raw = _read_exact(f, count * rows * cols, path)
    return np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path):
    with open(path, "rb") as f:
        magic, count = struct.unpack(">II", _read_exact(f, 8, path))
        if magic != LABEL_MAGIC:
            raise IdxMagicError(f"{path}: bad label magic 0x{magic:08x}")
        raw = _read_exact(f, count, path)
    return np.frombuffer(raw, dtype=np.uint8)


def write_idx_images(path, pixels):
    """pixels: uint8 array [M, H, W]."""
    m, h, w = pixels.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, m, h, w))
        f.write(np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", LABEL_MAGIC, labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


def pixels_to_floats(pixels):
    return (pixels.astype(np.float32) / np.float32(127.5)) - np.float32(1.0)


def floats_to_pixels(imgs):
    b = np.rint((np.asarray(imgs, dtype=np.float32) + 1.0) * 127.5)
    return np.clip(b, 0, 255).astype(np.uint8)


def load_idx(image_path, label_path, num_classes=None, split="train"):
    """Read a paired IDX corpus into a Dataset of [-1, 1] floats."""
    pixels = read_idx_images(image_path)
    labels = read_idx_labels(label_path)
    if pixels.shape[0] != labels.shape[0]:
        raise IdxCountError(
            f"{image_path} has {pixels.shape[0]} images but {label_path} has {labels.shape[0]} labels"
        )
    m, h, w = pixels.shape
    if h != w or h not in (28, 32):
        raise ShapeError(f"{image_path}: expected square 28 or 32 pixel images, got {h}x{w}")
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if m else 1
    imgs = pixels_to_floats(pixels).reshape(m, 1, h, w)
    return Dataset(Tensor(imgs), labels.astype(np.int64), num_classes, split)


def resize_to_28(img):
    """Bilinear, corner-aligned resample of trailing 32x32 axes to 28x28.

    Already-28 inputs pass through unchanged.
    """
    arr = img.data if isinstance(img, Tensor) else np.asarray(img)
    h, w = arr.shape[-2:]
    if (h, w) == (28, 28):
        return img
    if (h, w) != (32, 32):
        raise ShapeError(f"resize_to_28 expects 32x32 or 28x28 input, got {h}x{w}")
    src = np.linspace(0.0, h - 1.0, 28)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, h - 1)
    frac = (src - i0).astype(arr.dtype)
    rows = arr[..., i0, :] * (1 - frac)[:, None] + arr[..., i1, :] * frac[:, None]
    out = rows[..., :, i0] * (1 - frac) + rows[..., :, i1] * frac
    out = out.astype(arr.dtype)
    return Tensor(out) if isinstance(img, Tensor) else out


def canonicalize(ds):
    """Resize a freshly ingested dataset to the 28x28 working resolution."""
    if ds.resolution == 28:
        return ds
    return Dataset(resize_to_28(ds.images), ds.labels, ds.num_classes, ds.split)


def downscale(img, res):
    """Mean-pool trailing 28x28 axes down to res in {7, 14} (28 passes through)."""
    arr = img.data if isinstance(img, Tensor) else np.asarray(img)
    h, w = arr.shape[-2:]
    if res not in (7, 14, 28):
        raise UsageError(f"downscale target must be 7, 14 or 28, got {res}")
    if (h, w) != (28, 28):
        raise ShapeError(f"downscale expects 28x28 input, got {h}x{w}")
    if res == 28:
        return img
    k = 28 // res
    lead = arr.shape[:-2]
    pooled = arr.reshape(lead + (res, k, res, k)).mean(axis=(-3, -1)).astype(arr.dtype)
    return Tensor(pooled) if isinstance(img, Tensor) else pooled


def batches(ds, n, res, shuffle_seed):
    """One epoch: a seeded permutation cut into floor(M/n) full batches,
    images mean-pooled to ``res`` on emission. Remainder samples drop."""
    m = len(ds)
    if n > m:
        raise UsageError(f"batch size {n} exceeds dataset size {m}")
    rng = np.random.default_rng(shuffle_seed)
    perm = rng.permutation(m)
    imgs = ds.images.data
    for b in range(m // n):
        idx = perm[b * n : (b + 1) * n]
        x = downscale(imgs[idx], res)
        yield Batch(Tensor(x), ds.labels[idx])
