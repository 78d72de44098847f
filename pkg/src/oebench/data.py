"""Datasets, one-vs-rest task construction, outlier-exposure sampling, image ops."""

from __future__ import annotations

import gzip
import math
import os
import struct
import zlib
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD_PIXELS = 3 * 32 * 32
BLUR_SIGMAS = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0)


class DataError(Exception):
    """Malformed or missing dataset files."""


class ProtocolError(ValueError):
    """A benchmark construction that would leak test anomaly classes into OE."""


def make_rng(seed: int, tag: str) -> np.random.Generator:
    """Independent RNG stream per (seed, purpose)."""
    return np.random.default_rng([int(seed), zlib.crc32(tag.encode())])


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64
    name: str = "dataset"
    split: str = "train"
    num_classes: int | None = None
    # class ids are only comparable between datasets sharing a namespace
    namespace: str = ""

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.images.ndim != 4 and self.images.size == 0:
            self.images = self.images.reshape(0, 1, 1, 1)
        if self.images.ndim != 4:
            raise DataError(f"{self.name}: images must be (N, C, H, W), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DataError(f"{self.name}: {len(self.images)} images but {len(self.labels)} labels")
        if not self.namespace:
            self.namespace = self.name
        if self.num_classes is not None and self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= self.num_classes
        ):
            raise DataError(f"{self.name}: labels outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_shape(self) -> tuple[int, ...]:
        return tuple(self.images.shape[1:])

    def classes(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.labels))

    def subset(self, indices) -> Dataset:
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[idx], self.labels[idx], self.name, self.split, self.num_classes, self.namespace)

    def with_classes(self, classes: Sequence[int]) -> Dataset:
        return self.subset(np.flatnonzero(np.isin(self.labels, list(classes))))


# -- IDX ---------------------------------------------------------------------------
def _read_bytes(path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    raw = path.read_bytes()
    return gzip.decompress(raw) if path.suffix == ".gz" else raw


def _parse_idx(buf: bytes, expected_magic: int, path) -> np.ndarray:
    if len(buf) < 4:
        raise DataError(f"{path}: truncated header")
    (magic,) = struct.unpack(">I", buf[:4])
    if magic != expected_magic:
        raise DataError(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise DataError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", buf[4:header])
    count = int(np.prod(dims))
    if len(buf) - header < count:
        raise DataError(f"{path}: truncated data ({len(buf) - header} of {count} bytes)")
    return np.frombuffer(buf, dtype=np.uint8, count=count, offset=header).reshape(dims)


def load_idx(path_images, path_labels, name: str = "idx", split: str = "train",
             transpose: bool = False, label_offset: int = 0, num_classes: int | None = None) -> Dataset:
    """Read an IDX image/label pair (optionally gzipped); pixels scaled to [0, 1].

    ``transpose`` swaps the two spatial axes (EMNIST stores images transposed).
    ``label_offset`` is subtracted from every label.
    """
    imgs = _parse_idx(_read_bytes(path_images), IDX_IMAGES_MAGIC, path_images)
    labels = _parse_idx(_read_bytes(path_labels), IDX_LABELS_MAGIC, path_labels)
    if len(imgs) != len(labels):
        raise DataError(f"{path_images}: {len(imgs)} images vs {len(labels)} labels in {path_labels}")
    if transpose:
        imgs = imgs.transpose(0, 2, 1)
    images = imgs[:, None, :, :].astype(np.float64) / 255.0
    return Dataset(images, labels.astype(np.int64) - label_offset, name, split, num_classes)


def write_idx(path_images, path_labels, images: np.ndarray, labels: np.ndarray) -> None:
    """Write uint8 images (N, H, W) and labels (N,) as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    head = struct.pack(">I", IDX_IMAGES_MAGIC) + struct.pack(">3I", *images.shape)
    Path(path_images).write_bytes(head + images.tobytes())
    Path(path_labels).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())


# -- CIFAR binary ------------------------------------------------------------------------
def load_cifar_binary(paths, name: str = "cifar10", split: str = "train", label_bytes: int = 1,
                      num_classes: int | None = 10) -> Dataset:
    """Read CIFAR binary batches: per record ``label_bytes`` then 3072 channel-major pixels.

    With two label bytes (CIFAR-100) the second (fine) label is used.
    """
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    rec = label_bytes + CIFAR_RECORD_PIXELS
    chunks = []
    for p in paths:
        buf = _read_bytes(p)
        if len(buf) % rec:
            raise DataError(f"{p}: size {len(buf)} is not a multiple of record size {rec}")
        chunks.append(np.frombuffer(buf, dtype=np.uint8).reshape(-1, rec))
    arr = np.concatenate(chunks) if chunks else np.zeros((0, rec), np.uint8)
    labels = arr[:, label_bytes - 1].astype(np.int64)
    images = arr[:, label_bytes:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0
    return Dataset(images, labels, name, split, num_classes)


def write_cifar_binary(path, images: np.ndarray, labels, label_bytes: int = 1) -> None:
    images = np.asarray(images, dtype=np.uint8).reshape(len(images), -1)
    lab = np.asarray(labels, dtype=np.uint8).reshape(-1, 1)
    lab = np.repeat(lab, label_bytes, axis=1)
    Path(path).write_bytes(np.concatenate([lab, images], axis=1).tobytes())


# -- synthetic multiscale images ---------------------------------------------------------
MULTISCALE_KINDS = {"nominal": 0, "coarse-anomaly": 1, "fine-anomaly": 2, "outlier": 3}
MS_SIZE = 32
MS_BACKGROUND = 0.25
MS_BLOB_AMP = 0.45
MS_BLOB_SIGMA = 6.0
MS_BLOB_JITTER = 3.0
MS_TEXTURE_AMP = 0.1
MS_NOISE_STD = 0.02
# elongated anomaly blob; axes multiply to MS_BLOB_SIGMA**2 so mass and energy match the nominal blob
MS_COARSE_SIGMAS = (10.8, MS_BLOB_SIGMA**2 / 10.8)
# gratings: nominal and fine-anomaly orientation bands share the period range
MS_TEXTURE_PERIOD = (2.5, 4.0)
MS_NOMINAL_ORIENT = math.pi / 4
MS_ANOMALY_ORIENT = 3 * math.pi / 4
MS_ORIENT_HALFWIDTH = math.pi / 8
MS_OUTLIER_PERIOD = (2.0, 5.0)
# outlier images keep the nominal blob, or the nominal texture, with these probabilities (never both)
MS_OUTLIER_KEEP_BLOB_P = 0.25
MS_OUTLIER_KEEP_TEXTURE_P = 0.5
MS_OUTLIER_SINGLE_BLOB_P = 0.5


def _grid():
    yy, xx = np.mgrid[0:MS_SIZE, 0:MS_SIZE].astype(np.float64)
    return yy, xx


def _blob(cy, cx, s_major, s_minor, theta):
    yy, xx = _grid()
    dy, dx = yy - cy, xx - cx
    u = dx * math.cos(theta) + dy * math.sin(theta)
    v = -dx * math.sin(theta) + dy * math.cos(theta)
    return np.exp(-0.5 * ((u / s_major) ** 2 + (v / s_minor) ** 2))


def _grating(rng, theta_center: float | None) -> np.ndarray:
    yy, xx = _grid()
    if theta_center is None:
        theta = rng.uniform(0, math.pi)
        period = rng.uniform(*MS_OUTLIER_PERIOD)
    else:
        theta = theta_center + rng.uniform(-MS_ORIENT_HALFWIDTH, MS_ORIENT_HALFWIDTH)
        period = rng.uniform(*MS_TEXTURE_PERIOD)
    phase = rng.uniform(0, 2 * math.pi)
    return np.cos(2 * math.pi / period * (xx * math.cos(theta) + yy * math.sin(theta)) + phase)


def nominal_texture(rng) -> np.ndarray:
    return _grating(rng, MS_NOMINAL_ORIENT)


def fine_anomaly_texture(rng) -> np.ndarray:
    return _grating(rng, MS_ANOMALY_ORIENT)


def _random_texture(rng):
    return _grating(rng, None)


def _nominal_blob(rng):
    cy, cx = MS_SIZE / 2 - 0.5 + rng.uniform(-MS_BLOB_JITTER, MS_BLOB_JITTER, size=2)
    return _blob(cy, cx, MS_BLOB_SIGMA, MS_BLOB_SIGMA, 0.0)


def _random_blobs(rng):
    if rng.random() < MS_OUTLIER_SINGLE_BLOB_P:
        # one centred blob of random shape: the coarse scale varies on its own
        cy, cx = MS_SIZE / 2 - 0.5 + rng.uniform(-MS_BLOB_JITTER, MS_BLOB_JITTER, size=2)
        s1, s2 = rng.uniform(2.0, 10.0, size=2)
        return _blob(cy, cx, s1, s2, rng.uniform(0, math.pi))
    img = np.zeros((MS_SIZE, MS_SIZE))
    for _ in range(rng.integers(1, 4)):
        cy, cx = rng.uniform(6, MS_SIZE - 6, size=2)
        s1, s2 = rng.uniform(2.0, 8.0, size=2)
        img += rng.uniform(0.5, 1.0) * _blob(cy, cx, s1, s2, rng.uniform(0, math.pi))
    return np.minimum(img, 1.2)


def generate_multiscale(n: int, class_kind: str, seed: int = 0) -> Dataset:
    """Synthetic 1x32x32 images with information at a coarse and a fine scale.

    * ``nominal``: one round Gaussian blob near the centre plus a fine
      grating oriented near 45 degrees (random phase and period).
    * ``coarse-anomaly``: elongated, randomly oriented blob of the same mass as
      the nominal one; nominal texture.
    * ``fine-anomaly``: nominal blob; grating oriented near 135 degrees.
    * ``outlier``: OE source. Random blob configurations and random gratings,
      with the blob kept nominal w.p. 1/4 or the texture w.p. 1/2 (never both).

    For a fixed seed, ``nominal`` and ``fine-anomaly`` consume the same random
    stream, so they differ only in grating orientation.
    """
    if class_kind not in MULTISCALE_KINDS:
        raise ValueError(f"unknown class_kind {class_kind!r}; expected one of {sorted(MULTISCALE_KINDS)}")
    stream = "nominal" if class_kind == "fine-anomaly" else class_kind
    rng = make_rng(seed, f"multiscale/{stream}")
    images = np.empty((n, 1, MS_SIZE, MS_SIZE))
    for i in range(n):
        if class_kind in ("nominal", "fine-anomaly"):
            blob = _nominal_blob(rng)
            tex = nominal_texture(rng) if class_kind == "nominal" else fine_anomaly_texture(rng)
        elif class_kind == "coarse-anomaly":
            cy, cx = MS_SIZE / 2 - 0.5 + rng.uniform(-MS_BLOB_JITTER, MS_BLOB_JITTER, size=2)
            blob = _blob(cy, cx, *MS_COARSE_SIGMAS, rng.uniform(0, math.pi))
            tex = nominal_texture(rng)
        else:
            u = rng.random()
            keep_blob = u < MS_OUTLIER_KEEP_BLOB_P
            keep_tex = MS_OUTLIER_KEEP_BLOB_P <= u < MS_OUTLIER_KEEP_BLOB_P + MS_OUTLIER_KEEP_TEXTURE_P
            blob = _nominal_blob(rng) if keep_blob else _random_blobs(rng)
            tex = nominal_texture(rng) if keep_tex else _random_texture(rng)
            tex = tex * rng.uniform(0.6, 1.4)
        img = MS_BACKGROUND + MS_BLOB_AMP * blob + MS_TEXTURE_AMP * tex
        img += rng.normal(0.0, MS_NOISE_STD, size=img.shape)
        images[i, 0] = np.clip(img, 0.0, 1.0)
    labels = np.full(n, MULTISCALE_KINDS[class_kind])
    return Dataset(images, labels, "multiscale", "synthetic", len(MULTISCALE_KINDS), "multiscale")


# -- Gaussian blur ---------------------------------------------------------------------------
def gaussian_kernel1d(sigma: float) -> np.ndarray:
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return np.ones(1)
    r = math.ceil(3 * sigma)
    x = np.arange(-r, r + 1, dtype=np.float64)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def _correlate_axis(x: np.ndarray, w: np.ndarray, axis: int) -> np.ndarray:
    r = len(w) // 2
    pad = [(0, 0)] * x.ndim
    pad[axis] = (r, r)
    xp = np.pad(x, pad, mode="reflect")
    n = x.shape[axis]
    out = np.zeros_like(x)
    for k, wk in enumerate(w):
        out += wk * np.take(xp, np.arange(k, k + n), axis=axis)
    return out


def gaussian_blur(images: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur over the last two axes, reflect padding."""
    w = gaussian_kernel1d(sigma)
    images = np.asarray(images, dtype=np.float64)
    if len(w) == 1:
        return images.copy()
    out = _correlate_axis(images, w, images.ndim - 2)
    out = _correlate_axis(out, w, images.ndim - 1)
    return np.clip(out, 0.0, 1.0)


# -- augmentation ----------------------------------------------------------------------------
@dataclass(frozen=True)
class AugmentSpec:
    jitter: bool = False
    jitter_strength: float = 0.2
    crop: bool = False
    crop_padding: int = 4
    flip: bool = False
    flip_prob: float = 0.5
    noise: bool = False
    noise_std: float = 0.05

    @classmethod
    def preset(cls, name: str) -> AugmentSpec:
        if name == "none":
            return cls()
        if name in ("mnist", "emnist-letters"):
            return cls(jitter=True, crop=True, crop_padding=2, noise=True)
        if name in ("cifar10", "cifar100"):
            return cls(jitter=True, crop=True, flip=True, noise=True)
        if name == "multiscale":
            return cls(jitter=True, crop=True, crop_padding=2, noise=True)
        raise ValueError(f"no augmentation preset {name!r}")


def hflip(images: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = images.copy()
    out[mask] = out[mask][..., ::-1]
    return out


def augment(images: np.ndarray, spec: AugmentSpec, rng: np.random.Generator) -> np.ndarray:
    """Color jitter -> random crop -> horizontal flip -> pixel noise, then clamp."""
    x = np.asarray(images, dtype=np.float64)
    n = len(x)
    if n == 0 or spec == AugmentSpec():
        return x.copy()
    x = x.copy()
    if spec.jitter:
        s = spec.jitter_strength
        b = rng.uniform(1 - s, 1 + s, size=(n, 1, 1, 1))
        c = rng.uniform(1 - s, 1 + s, size=(n, 1, 1, 1))
        x = x * b
        m = x.mean(axis=(1, 2, 3), keepdims=True)
        x = np.clip((x - m) * c + m, 0.0, 1.0)
    if spec.crop and spec.crop_padding > 0:
        p = spec.crop_padding
        H, W = x.shape[2:]
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        offs = rng.integers(0, 2 * p + 1, size=(n, 2))
        for i, (oy, ox) in enumerate(offs):
            x[i] = xp[i, :, oy : oy + H, ox : ox + W]
    if spec.flip:
        x = hflip(x, rng.random(n) < spec.flip_prob)
    if spec.noise and spec.noise_std > 0:
        x = x + rng.normal(0.0, spec.noise_std, size=x.shape)
    return np.clip(x, 0.0, 1.0)


# -- one-vs-rest construction ---------------------------------------------------------------
@dataclass(frozen=True)
class OeSpec:
    size: int | None = None  # None means the whole pool
    diversity_k: int | None = None
    blur_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.size is not None and self.size < 0:
            raise ValueError("OE size must be >= 0")
        if self.diversity_k is not None and self.diversity_k < 1:
            raise ValueError("diversity_k must be >= 1")
        if self.blur_sigma < 0:
            raise ValueError("blur_sigma must be >= 0")


@dataclass
class BenchmarkTask:
    nominal_class: int
    nominal_train: Dataset
    oe_train: Dataset
    test: Dataset
    test_targets: np.ndarray = field(repr=False)  # 1 nominal, 0 anomalous


def _class_keys(ds: Dataset | None, exclude: int | None = None) -> set[tuple[str, int]]:
    if ds is None or len(ds) == 0:
        return set()
    return {(ds.namespace, c) for c in ds.classes() if c != exclude}


def select_oe(pool: Dataset | None, spec: OeSpec) -> Dataset:
    """Pick the OE training subset; prefixes of one permutation, so sizes nest."""
    if pool is None or len(pool) == 0 or spec.size == 0:
        empty = np.zeros((0, 1, 1, 1)) if pool is None else pool.images[:0]
        name = "none" if pool is None else pool.name
        return Dataset(empty, np.zeros(0, np.int64), name, "oe")
    if spec.diversity_k is not None:
        classes = pool.classes()
        if spec.diversity_k > len(classes):
            raise ValueError(f"diversity_k={spec.diversity_k} exceeds {len(classes)} OE classes")
        chosen = make_rng(spec.seed, "oe-diversity").choice(classes, spec.diversity_k, replace=False)
        pool = pool.with_classes(sorted(int(c) for c in chosen))
    order = make_rng(spec.seed, "oe-subset").permutation(len(pool))
    if spec.size is not None:
        if spec.size > len(pool):
            raise ValueError(f"OE size {spec.size} exceeds pool of {len(pool)}")
        order = order[: spec.size]
    oe = pool.subset(order)
    if spec.blur_sigma > 0:
        oe.images = gaussian_blur(oe.images, spec.blur_sigma)
    return oe


def make_one_vs_rest(train: Dataset, test: Dataset, oe_pool: Dataset | None, nominal_class: int,
                     oe_spec: OeSpec = OeSpec()) -> BenchmarkTask:
    clash = _class_keys(oe_pool) & _class_keys(test, exclude=nominal_class)
    if clash:
        raise ProtocolError(f"OE pool shares test anomaly classes {sorted(clash)}")
    nominal_train = train.with_classes([nominal_class])
    if len(nominal_train) == 0:
        raise DataError(f"no training images of class {nominal_class} in {train.name}")
    targets = (test.labels == nominal_class).astype(np.float64)
    return BenchmarkTask(nominal_class, nominal_train, select_oe(oe_pool, oe_spec), test, targets)


class OeSampler:
    """Draws OE batch indices.

    Pools at least as large as the batch are walked through reshuffled
    permutations (no repeats within a pass); smaller pools are sampled with
    replacement. An empty pool yields empty batches.
    """

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self._perm = np.zeros(0, dtype=np.int64)
        self._pos = 0

    def draw(self) -> np.ndarray:
        if self.n == 0:
            return np.zeros(0, dtype=np.int64)
        if self.n < self.batch_size:
            return self.rng.integers(0, self.n, size=self.batch_size)
        if self._pos + self.batch_size > len(self._perm):
            self._perm = self.rng.permutation(self.n)
            self._pos = 0
        out = self._perm[self._pos : self._pos + self.batch_size]
        self._pos += self.batch_size
        return out


def sample_oe_batch(oe_train: Dataset, sampler: OeSampler) -> np.ndarray:
    return oe_train.images[sampler.draw()]


# -- dataset catalog ------------------------------------------------------------------------------
DATASETS = ("mnist", "emnist-letters", "cifar10", "cifar100", "multiscale", "multiscale-outlier")
MS_TRAIN_PER_CLASS = 256
MS_TEST_PER_CLASS = 300
MS_OUTLIER_POOL = 2048
MS_DATA_SEED = 1234


def _first_existing(root: Path, names: Sequence[str]) -> Path:
    for name in names:
        for cand in (root / name, root / (name + ".gz")):
            if cand.exists():
                return cand
    raise DataError(f"missing dataset file {root / names[0]} (looked for {', '.join(names)} [.gz])")


def _multiscale_split(split: str, test_kinds: tuple[str, ...]) -> Dataset:
    if split == "train":
        parts = [generate_multiscale(MS_TRAIN_PER_CLASS, "nominal", MS_DATA_SEED)]
    else:
        parts = [generate_multiscale(MS_TEST_PER_CLASS, "nominal", MS_DATA_SEED + 1)]
        per = MS_TEST_PER_CLASS // max(len(test_kinds), 1)
        parts += [generate_multiscale(per, k, MS_DATA_SEED + 3 + i) for i, k in enumerate(test_kinds)]
    ds = Dataset(np.concatenate([p.images for p in parts]), np.concatenate([p.labels for p in parts]),
                 "multiscale", split, len(MULTISCALE_KINDS), "multiscale")
    return ds


@lru_cache(maxsize=16)
def load_dataset(name: str, split: str, data_root: str | None = None,
                 test_kinds: tuple[str, ...] = ("coarse-anomaly", "fine-anomaly")) -> Dataset:
    """Load a named dataset split from ``data_root/<name>/``.

    Synthetic datasets (``multiscale``, ``multiscale-outlier``) need no files.
    """
    if name == "multiscale":
        return _multiscale_split(split, test_kinds)
    if name == "multiscale-outlier":
        return generate_multiscale(MS_OUTLIER_POOL, "outlier", MS_DATA_SEED + 2)
    if data_root is None:
        raise DataError(f"dataset {name!r} needs a data root (--data-root or OEBENCH_DATA_ROOT)")
    root = Path(data_root)
    train = split == "train"
    if name == "mnist":
        d = root / "mnist"
        pre = "train" if train else "t10k"
        ds = load_idx(_first_existing(d, [f"{pre}-images-idx3-ubyte", f"{pre}-images.idx3-ubyte"]),
                      _first_existing(d, [f"{pre}-labels-idx1-ubyte", f"{pre}-labels.idx1-ubyte"]),
                      "mnist", split, num_classes=10)
    elif name == "emnist-letters":
        d = root / "emnist"
        pre = "train" if train else "test"
        ds = load_idx(_first_existing(d, [f"emnist-letters-{pre}-images-idx3-ubyte"]),
                      _first_existing(d, [f"emnist-letters-{pre}-labels-idx1-ubyte"]),
                      "emnist-letters", split, transpose=True, label_offset=1, num_classes=26)
    elif name == "cifar10":
        d = root / "cifar10"
        if (d / "cifar-10-batches-bin").is_dir():
            d = d / "cifar-10-batches-bin"
        files = [f"data_batch_{i}.bin" for i in range(1, 6)] if train else ["test_batch.bin"]
        ds = load_cifar_binary([_first_existing(d, [f]) for f in files], "cifar10", split)
    elif name == "cifar100":
        d = root / "cifar100"
        if (d / "cifar-100-binary").is_dir():
            d = d / "cifar-100-binary"
        f = _first_existing(d, ["train.bin" if train else "test.bin"])
        ds = load_cifar_binary([f], "cifar100", split, label_bytes=2, num_classes=100)
    else:
        raise DataError(f"unknown dataset {name!r}; known: {', '.join(DATASETS)}")
    return ds


def check_dataset_available(name: str, data_root: str | None) -> None:
    """Raise DataError early if a dataset's files are absent."""
    if name in ("multiscale", "multiscale-outlier", "none"):
        return
    load_dataset(name, "train", data_root)


def save_dataset(path, ds: Dataset) -> None:
    from .nn import save_tensors

    save_tensors(path, {"images": ds.images, "labels": ds.labels.astype(np.float64)})


def load_saved_dataset(path, name: str = "saved", split: str = "train") -> Dataset:
    from .nn import load_tensors

    t = load_tensors(path)
    return Dataset(t["images"], t["labels"].astype(np.int64), name, split)
