"""Bit-exact loaders for the MNIST and CIFAR-10 binary distributions.

MNIST ships as IDX files (big endian):

    images  0000  int32   magic = 2051
            0004  int32   image count
            0008  int32   rows (28)
            0012  int32   cols (28)
            0016  uint8[] pixels, row-major per image
    labels  0000  int32   magic = 2049
            0004  int32   label count
            0008  uint8[] labels 0..9

CIFAR-10 ships as binary batches of fixed 3073-byte records: one label
byte (0..9) followed by 3072 pixel bytes in channel-planar order
(1024 red, 1024 green, 1024 blue). Loaders keep that storage order.

Pixels are scaled by 1/255 into [0, 1] float64. Files may be plain or
gzip-compressed (``.gz`` suffix); payload bytes are identical either way.

Files are read from user-supplied local paths; ``ATRAS_DATA_DIR`` is the
default search root. :func:`fetch` can download the canonical archives
when the machine has network access, but nothing here requires it.
"""

from __future__ import annotations

import gzip
import os
import struct
import sys
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InsufficientData, InvalidConfig
from .matops import make_rng

MNIST_IMAGE_MAGIC = 2051
MNIST_LABEL_MAGIC = 2049
CIFAR_RECORD_BYTES = 3073  # 1 label byte + 32*32*3 pixel bytes

DATA_DIR_ENV = "ATRAS_DATA_DIR"

# Canonical download locations for the fetch helper. Mirrors of the
# original hosting that serve the unmodified files.
MNIST_URLS = {
    "train-images-idx3-ubyte.gz": "https://storage.googleapis.com/cvdf-datasets/mnist/train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz": "https://storage.googleapis.com/cvdf-datasets/mnist/train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz": "https://storage.googleapis.com/cvdf-datasets/mnist/t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz": "https://storage.googleapis.com/cvdf-datasets/mnist/t10k-labels-idx1-ubyte.gz",
}
CIFAR10_URL = "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz"
CIFAR10_BATCHES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR10_TEST_BATCH = "test_batch.bin"


@dataclass(frozen=True)
class Dataset:
    """Flattened images in [0, 1] with integer class labels 0..9.

    ``features`` is n x d float64 (d == 784 for MNIST, 3072 for
    CIFAR-10); ``labels`` is an int64 vector of equal length. Arrays are
    marked read-only so datasets can be shared freely across threads.
    """

    name: str
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.name not in ("mnist", "cifar10"):
            raise FormatError(f"dataset name must be 'mnist' or 'cifar10', got {self.name!r}")
        if self.features.ndim != 2:
            raise FormatError(f"features must be 2-D, got ndim={self.features.ndim}")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise FormatError(
                f"label count {self.labels.shape[0]} does not match {self.features.shape[0]} feature rows"
            )
        if self.features.size and (self.features.min() < 0.0 or self.features.max() > 1.0):
            raise FormatError("features must lie in [0, 1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > 9):
            raise FormatError("labels must lie in 0..9")
        self.features.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    """Deterministic train/test carve-out of a source dataset."""

    train_count: int
    test_count: int
    seed: int = 0

    def __post_init__(self):
        if self.train_count <= 0 or self.test_count <= 0:
            raise InvalidConfig("split counts must both be positive")


def _read_bytes(path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def load_mnist(images_path, labels_path) -> Dataset:
    """Parse an IDX image/label file pair into a Dataset.

    Raises FormatError on a wrong magic number, a truncated payload, or
    an image/label count mismatch; OSError if a file is unreadable.
    """
    img = _read_bytes(images_path)
    if len(img) < 16:
        raise FormatError(f"{images_path}: IDX image header needs 16 bytes, file has {len(img)}")
    magic, count, rows, cols = struct.unpack(">iiii", img[:16])
    if magic != MNIST_IMAGE_MAGIC:
        raise FormatError(f"{images_path}: image magic {magic} != {MNIST_IMAGE_MAGIC}")
    expected = 16 + count * rows * cols
    if len(img) != expected:
        raise FormatError(f"{images_path}: expected {expected} bytes for {count} images, got {len(img)}")

    lab = _read_bytes(labels_path)
    if len(lab) < 8:
        raise FormatError(f"{labels_path}: IDX label header needs 8 bytes, file has {len(lab)}")
    lmagic, lcount = struct.unpack(">ii", lab[:8])
    if lmagic != MNIST_LABEL_MAGIC:
        raise FormatError(f"{labels_path}: label magic {lmagic} != {MNIST_LABEL_MAGIC}")
    if len(lab) != 8 + lcount:
        raise FormatError(f"{labels_path}: expected {8 + lcount} bytes for {lcount} labels, got {len(lab)}")
    if lcount != count:
        raise FormatError(f"image count {count} != label count {lcount}")

    pixels = np.frombuffer(img, dtype=np.uint8, offset=16).reshape(count, rows * cols)
    labels = np.frombuffer(lab, dtype=np.uint8, offset=8).astype(np.int64)
    if labels.size and labels.max() > 9:
        raise FormatError(f"{labels_path}: label byte {labels.max()} > 9")
    return Dataset(name="mnist", features=pixels.astype(np.float64) / 255.0, labels=labels)


def load_cifar10(batch_paths) -> Dataset:
    """Parse one or more CIFAR-10 binary batches into a Dataset.

    Each file must be a whole number of 3073-byte records; the pixel
    bytes keep their stored channel-planar order.
    """
    if isinstance(batch_paths, (str, Path)):
        batch_paths = [batch_paths]
    features = []
    labels = []
    for path in batch_paths:
        raw = _read_bytes(path)
        if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES != 0:
            raise FormatError(
                f"{path}: size {len(raw)} is not a positive multiple of {CIFAR_RECORD_BYTES}-byte records"
            )
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        batch_labels = records[:, 0]
        if batch_labels.max() > 9:
            raise FormatError(f"{path}: label byte {int(batch_labels.max())} > 9")
        labels.append(batch_labels.astype(np.int64))
        features.append(records[:, 1:].astype(np.float64) / 255.0)
    return Dataset(name="cifar10", features=np.concatenate(features), labels=np.concatenate(labels))


def split_indices(source_n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """The index bookkeeping behind subset_split, exposed for tests.

    Shuffles 0..n-1 with the seeded RNG; the first train_count indices
    form the train set, the next test_count the test set.
    """
    if spec.train_count + spec.test_count > source_n:
        raise InsufficientData(
            f"split needs {spec.train_count}+{spec.test_count} examples, source has {source_n}"
        )
    perm = make_rng(spec.seed).permutation(source_n)
    return perm[: spec.train_count], perm[spec.train_count : spec.train_count + spec.test_count]


def subset_split(source: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Draw disjoint train/test subsets, deterministic in spec.seed."""
    train_idx, test_idx = split_indices(source.n, spec)
    train = Dataset(source.name, source.features[train_idx].copy(), source.labels[train_idx].copy())
    test = Dataset(source.name, source.features[test_idx].copy(), source.labels[test_idx].copy())
    return train, test


def data_dir(override=None) -> Path:
    """Dataset search root: explicit override, else $ATRAS_DATA_DIR, else cwd."""
    if override:
        return Path(override)
    return Path(os.environ.get(DATA_DIR_ENV, "."))


def mnist_paths(root, train: bool = True) -> tuple[Path, Path]:
    """Locate the IDX pair under root, accepting .gz or decompressed names."""
    stem_img = "train-images-idx3-ubyte" if train else "t10k-images-idx3-ubyte"
    stem_lab = "train-labels-idx1-ubyte" if train else "t10k-labels-idx1-ubyte"
    return _find_file(root, stem_img), _find_file(root, stem_lab)


def cifar10_paths(root, train: bool = True) -> list[Path]:
    """Locate the binary batches under root (also inside cifar-10-batches-bin/)."""
    names = CIFAR10_BATCHES if train else [CIFAR10_TEST_BATCH]
    return [_find_file(root, name, exact=True) for name in names]


def _find_file(root, stem: str, exact: bool = False) -> Path:
    root = Path(root)
    candidates = [stem] if exact else [stem, stem + ".gz"]
    subdirs = [root, root / "mnist", root / "MNIST" / "raw", root / "cifar-10-batches-bin", root / "cifar10"]
    for d in subdirs:
        for name in candidates:
            p = d / name
            if p.exists():
                return p
    raise FileNotFoundError(
        f"{stem} not found under {root} (set {DATA_DIR_ENV} or pass explicit paths; "
        f"see the fetch helper for canonical download URLs)"
    )


def load_named(name: str, root=None, train: bool = True) -> Dataset:
    """Load 'mnist' or 'cifar10' from the conventional file names under root."""
    root = data_dir(root)
    if name == "mnist":
        images, labels = mnist_paths(root, train=train)
        return load_mnist(images, labels)
    if name == "cifar10":
        return load_cifar10(cifar10_paths(root, train=train))
    raise InvalidConfig(f"unknown dataset {name!r}; expected 'mnist' or 'cifar10'")


def fetch(name: str, root=None, quiet: bool = False) -> list[Path]:
    """Download the canonical archives for a dataset into root.

    MNIST arrives as four .gz IDX files; CIFAR-10 as one tar.gz that is
    unpacked into cifar-10-batches-bin/. Requires network access; every
    loader works from pre-placed local files without ever calling this.
    """
    root = data_dir(root)
    root.mkdir(parents=True, exist_ok=True)
    written = []
    if name == "mnist":
        for fname, url in MNIST_URLS.items():
            dest = root / fname
            if not dest.exists():
                _download(url, dest, quiet)
            written.append(dest)
    elif name == "cifar10":
        import tarfile

        archive = root / "cifar-10-binary.tar.gz"
        if not archive.exists():
            _download(CIFAR10_URL, archive, quiet)
        with tarfile.open(archive) as tar:
            tar.extractall(root)
        written = [root / "cifar-10-batches-bin" / b for b in CIFAR10_BATCHES + [CIFAR10_TEST_BATCH]]
    else:
        raise InvalidConfig(f"unknown dataset {name!r}")
    return written


def _download(url: str, dest: Path, quiet: bool) -> None:
    if not quiet:
        print(f"fetching {url} -> {dest}", file=sys.stderr)
    tmp = dest.with_suffix(dest.suffix + ".part")
    with urllib.request.urlopen(url) as resp, open(tmp, "wb") as out:
        while chunk := resp.read(1 << 20):
            out.write(chunk)
    tmp.rename(dest)
