"""Synthetic rotation dataset, IDX ingestion and stratified splitting."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

ORIENTATIONS = 4

IDX_UBYTE = 0x08
IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

CONTAINER_MAGIC = b"GMI1"


class IdxFormatError(ValueError):
    """Base class for malformed IDX files."""


class IdxMagicError(IdxFormatError):
    pass


class IdxTruncatedError(IdxFormatError):
    pass


class IdxCountMismatchError(IdxFormatError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    side: int = 32
    count: int = 512
    noise_variance: float = 1.0
    noise_mean_mode: str = "mean-of-base-image"
    # peak-to-peak range of the base image; it spans [0, contrast]
    contrast: float = 6.0
    base_seed: int = 0
    sample_seed: int = 1
    # orientation id -> class
    label_map: tuple[int, ...] = (0, 0, 1, 1)

    @property
    def num_classes(self) -> int:
        return 2

    def validate(self, *, allow_zero_noise: bool = True) -> None:
        if self.side < 2:
            raise ValueError(f"side must be >= 2, got {self.side}")
        if self.count <= 0 or self.count % ORIENTATIONS:
            raise ValueError(f"count must be a positive multiple of 4, got {self.count}")
        if self.count % (2 * self.num_classes):
            raise ValueError(
                f"count must be divisible by {2 * self.num_classes}, got {self.count}"
            )
        if self.noise_variance < 0 or (self.noise_variance == 0 and not allow_zero_noise):
            raise ValueError(f"noise_variance must be positive, got {self.noise_variance}")
        if self.contrast <= 0:
            raise ValueError(f"contrast must be positive, got {self.contrast}")
        if self.noise_mean_mode not in ("mean-of-base-image", "zero"):
            raise ValueError(f"unknown noise_mean_mode {self.noise_mean_mode!r}")
        if len(self.label_map) != ORIENTATIONS:
            raise ValueError("label_map needs one class per orientation (4 entries)")
        if sorted(set(self.label_map)) != list(range(self.num_classes)):
            raise ValueError(
                f"label_map {self.label_map} is not surjective onto "
                f"{{0..{self.num_classes - 1}}}"
            )


@dataclass
class Dataset:
    """J samples (rows of ``data``) with integer labels in ``[0, num_classes)``."""

    data: np.ndarray
    labels: np.ndarray
    num_classes: int
    source: str = "synthetic"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.data.ndim != 2 or self.data.shape[0] == 0:
            raise ValueError(f"data must be a non-empty 2-D array, got {self.data.shape}")
        if self.labels.shape != (self.data.shape[0],):
            raise ValueError("labels must have one entry per row of data")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("data contains non-finite entries")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        missing = np.setdiff1d(np.arange(self.num_classes), self.labels)
        if missing.size:
            raise ValueError(f"classes {missing.tolist()} have no samples")

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def take(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        meta = {
            k: np.asarray(v)[indices] if isinstance(v, np.ndarray) else v
            for k, v in self.meta.items()
        }
        return Dataset(self.data[indices], self.labels[indices], self.num_classes, self.source, meta)


def orient(image: np.ndarray, orientation: int) -> np.ndarray:
    """Return one of the four orientations of a square image.

    0 is the identity, 1 the transpose about the secondary (anti-)diagonal,
    2 the mirror about the vertical axis and 3 the mirror about the
    horizontal axis. Every orientation is an involution.
    """
    image = np.asarray(image)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ValueError(f"orient expects a square matrix, got shape {image.shape}")
    if orientation == 0:
        return image.copy()
    if orientation == 1:
        return image[::-1, ::-1].T.copy()
    if orientation == 2:
        return image[:, ::-1].copy()
    if orientation == 3:
        return image[::-1, :].copy()
    raise ValueError(f"orientation must be in 0..3, got {orientation}")


def _orientations_distinct(image: np.ndarray) -> bool:
    views = [orient(image, k) for k in range(ORIENTATIONS)]
    return all(
        not np.array_equal(views[a], views[b])
        for a in range(ORIENTATIONS)
        for b in range(a + 1, ORIENTATIONS)
    )


def generate_base_image(config: SynthConfig) -> np.ndarray:
    """Deterministic smooth random field spanning [0, contrast].

    The field is redrawn until all four orientations differ, so the
    orientation of a sample carries two bits.
    """
    if config.side < 2:
        raise ValueError(f"side must be >= 2, got {config.side}")
    rng = np.random.default_rng(config.base_seed)
    # redraws are deterministic and essentially never needed
    for _ in range(100):
        field_ = rng.standard_normal((config.side, config.side))
        smooth = gaussian_filter(field_, sigma=max(config.side / 16.0, 0.5), mode="reflect")
        lo, hi = smooth.min(), smooth.max()
        if hi - lo <= 0:
            continue
        image = config.contrast * (smooth - lo) / (hi - lo)
        if _orientations_distinct(image):
            return image
    raise RuntimeError("could not draw an orientation-asymmetric base image")


def generate_synthetic(config: SynthConfig = SynthConfig()) -> Dataset:
    """Noisy oriented copies of the base image, evenly spread over orientations."""
    config.validate()
    base = generate_base_image(config)
    views = np.stack([orient(base, k).ravel() for k in range(ORIENTATIONS)])
    orientation = np.tile(np.arange(ORIENTATIONS), config.count // ORIENTATIONS)
    mean = base.mean() if config.noise_mean_mode == "mean-of-base-image" else 0.0
    rng = np.random.default_rng(config.sample_seed)
    noise = rng.normal(mean, np.sqrt(config.noise_variance), size=(config.count, base.size))
    if config.noise_variance == 0:
        noise[:] = 0.0
    data = views[orientation] + noise
    labels = np.asarray(config.label_map, dtype=np.int64)[orientation]
    return Dataset(
        data,
        labels,
        config.num_classes,
        source="synthetic",
        meta={"orientation": orientation, "side": config.side},
    )


# --- IDX ------------------------------------------------------------------


def _open(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def parse_idx(raw: bytes, expected_magic: int | None = None) -> np.ndarray:
    """Decode an unsigned-byte IDX payload into an ndarray."""
    if len(raw) < 4:
        raise IdxTruncatedError("file shorter than the 4-byte magic number")
    (magic,) = struct.unpack(">I", raw[:4])
    ndim = magic & 0xFF
    if magic >> 16 != 0 or (magic >> 8) & 0xFF != IDX_UBYTE or ndim == 0:
        raise IdxMagicError(f"bad IDX magic number 0x{magic:08x}")
    if expected_magic is not None and magic != expected_magic:
        raise IdxMagicError(f"expected magic 0x{expected_magic:08x}, found 0x{magic:08x}")
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise IdxTruncatedError("file ends inside the dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:header_len])
    size = int(np.prod(dims, dtype=np.int64))
    payload = raw[header_len:]
    if len(payload) < size:
        raise IdxTruncatedError(f"expected {size} payload bytes, found {len(payload)}")
    if len(payload) > size:
        raise IdxFormatError(f"{len(payload) - size} trailing bytes after payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path, num_classes: int | None = None) -> Dataset:
    """Read an IDX image/label pair; pixels are scaled to [0, 1]."""
    with _open(images_path) as fh:
        images = parse_idx(fh.read(), IMAGES_MAGIC)
    with _open(labels_path) as fh:
        labels = parse_idx(fh.read(), LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise IdxCountMismatchError(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    data = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(
        data,
        labels.astype(np.int64),
        num_classes,
        source="idx",
        meta={"image_shape": tuple(images.shape[1:])},
    )


def encode_idx(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise ValueError("only unsigned-byte IDX payloads are supported")
    header = struct.pack(">I", (IDX_UBYTE << 8) | array.ndim)
    header += struct.pack(f">{array.ndim}I", *array.shape)
    return header + np.ascontiguousarray(array).tobytes()


def write_idx(dataset: Dataset, images_path, labels_path, image_shape=None) -> None:
    """Write a dataset with pixels in [0, 1] back to an IDX pair."""
    if image_shape is None:
        image_shape = dataset.meta.get("image_shape", (dataset.dim,))
    pixels = np.rint(dataset.data * 255.0)
    if pixels.min() < 0 or pixels.max() > 255:
        raise ValueError("pixel values must lie in [0, 1] for IDX export")
    images = pixels.astype(np.uint8).reshape((dataset.count, *image_shape))
    Path(images_path).write_bytes(encode_idx(images))
    Path(labels_path).write_bytes(encode_idx(dataset.labels.astype(np.uint8)))


# --- flat binary container ------------------------------------------------


def save_dataset(dataset: Dataset, path) -> None:
    """Header "GMI1" + J, M, L (little-endian u32), float64 rows, one byte per label."""
    if dataset.num_classes > 256:
        raise ValueError("container stores labels as single bytes")
    header = CONTAINER_MAGIC + struct.pack("<III", dataset.count, dataset.dim, dataset.num_classes)
    body = dataset.data.astype("<f8").tobytes(order="C")
    labels = dataset.labels.astype(np.uint8).tobytes()
    Path(path).write_bytes(header + body + labels)


def load_dataset(path) -> Dataset:
    raw = Path(path).read_bytes()
    if raw[:4] != CONTAINER_MAGIC:
        raise ValueError(f"{path}: not a GMI1 dataset container")
    if len(raw) < 16:
        raise ValueError(f"{path}: truncated header")
    count, dim, num_classes = struct.unpack("<III", raw[4:16])
    n_float = count * dim * 8
    if len(raw) != 16 + n_float + count:
        raise ValueError(f"{path}: payload size does not match header ({count}x{dim})")
    data = np.frombuffer(raw[16 : 16 + n_float], dtype="<f8").reshape(count, dim)
    labels = np.frombuffer(raw[16 + n_float :], dtype=np.uint8)
    return Dataset(data.astype(np.float64), labels, num_classes, source="container")


def load_any(path, labels_path=None) -> Dataset:
    """Load a GMI1 container, or an IDX pair when ``labels_path`` is given."""
    if labels_path is not None:
        return load_idx(path, labels_path)
    return load_dataset(path)


# --- splitting ------------------------------------------------------------


def _stratified_indices(labels, num_classes, first_count, seed):
    rng = np.random.default_rng(seed)
    first, second = [], []
    for c in range(num_classes):
        members = np.flatnonzero(labels == c)
        members = members[rng.permutation(members.size)]
        n_first = first_count(members.size)
        first.append(members[:n_first])
        second.append(members[n_first:])
    return np.sort(np.concatenate(first)), np.sort(np.concatenate(second))


def split(dataset: Dataset, train_fraction: float = 0.5, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified split; each class contributes floor(n_c * train_fraction) to train."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    train_idx, test_idx = _stratified_indices(
        dataset.labels, dataset.num_classes, lambda n: int(np.floor(n * train_fraction)), seed
    )
    train_counts = np.bincount(dataset.labels[train_idx], minlength=dataset.num_classes)
    test_counts = np.bincount(dataset.labels[test_idx], minlength=dataset.num_classes)
    if np.any(train_counts == 0) or np.any(test_counts == 0):
        raise ValueError(f"split at fraction {train_fraction} leaves an empty class")
    return dataset.take(train_idx), dataset.take(test_idx)


def stratified_subset(dataset: Dataset, size: int, seed: int = 0) -> Dataset:
    """Class-balanced subset of roughly ``size`` samples (floor per class)."""
    if size >= dataset.count:
        return dataset
    total = dataset.count
    idx, _ = _stratified_indices(
        dataset.labels, dataset.num_classes, lambda n: n * size // total, seed
    )
    counts = np.bincount(dataset.labels[idx], minlength=dataset.num_classes)
    if np.any(counts == 0):
        raise ValueError(f"subset of size {size} leaves an empty class")
    return dataset.take(idx)
