"""Shared test helpers: synthetic learnable datasets, writers for the
real binary file formats, and discovery of locally staged MNIST/CIFAR
files for the full-scale checks."""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np
import pytest

from atras.datasets import DATA_DIR_ENV, Dataset
from atras.matops import make_rng


def synth_pair(n_train: int, n_test: int, dim: int = 40, seed: int = 0, noise: float = 0.15,
               name: str = "mnist") -> tuple[Dataset, Dataset]:
    """Learnable 10-class toy data: shared class prototypes plus noise."""
    rng = make_rng(seed, 1000)
    protos = rng.uniform(0.1, 0.9, size=(10, dim))

    def draw(n):
        y = rng.integers(0, 10, size=n).astype(np.int64)
        x = np.clip(protos[y] + rng.normal(0.0, noise, size=(n, dim)), 0.0, 1.0)
        return Dataset(name, x, y)

    return draw(n_train), draw(n_test)


def write_idx_images(path: Path, images: np.ndarray) -> None:
    """images: uint8 array (n, rows, cols)."""
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", 2051, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path: Path, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", 2049, len(labels)))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


def write_cifar_batch(path: Path, labels: np.ndarray, pixels: np.ndarray) -> None:
    """labels: (n,) uint8; pixels: (n, 3072) uint8."""
    records = np.concatenate([np.asarray(labels, np.uint8)[:, None], pixels.astype(np.uint8)], axis=1)
    path.write_bytes(records.tobytes())


def make_synthetic_mnist_dir(root: Path, n: int = 400, side: int = 12, seed: int = 3) -> Path:
    """A data dir with IDX files under the standard MNIST names.

    Images are small (side x side) class-prototype blobs so training on
    them is fast and actually learnable.
    """
    rng = make_rng(seed, 2000)
    protos = rng.integers(30, 225, size=(10, side, side))
    root.mkdir(parents=True, exist_ok=True)
    for stem_img, stem_lab, count in [
        ("train-images-idx3-ubyte", "train-labels-idx1-ubyte", n),
        ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", max(40, n // 4)),
    ]:
        y = rng.integers(0, 10, size=count)
        imgs = np.clip(protos[y] + rng.normal(0, 25, size=(count, side, side)), 0, 255).astype(np.uint8)
        write_idx_images(root / stem_img, imgs)
        write_idx_labels(root / stem_lab, y)
    return root


def real_data_root() -> Path | None:
    env = os.environ.get(DATA_DIR_ENV)
    return Path(env) if env else None


def find_real_mnist() -> tuple[Path, Path] | None:
    root = real_data_root()
    if root is None:
        return None
    try:
        from atras.datasets import mnist_paths

        return mnist_paths(root, train=True)
    except FileNotFoundError:
        return None


def find_real_cifar10() -> list[Path] | None:
    root = real_data_root()
    if root is None:
        return None
    try:
        from atras.datasets import cifar10_paths

        return cifar10_paths(root, train=True)
    except FileNotFoundError:
        return None


def skip_without_real_data(kind: str) -> None:
    found = find_real_mnist() if kind == "mnist" else find_real_cifar10()
    if found is None:
        pytest.skip(
            f"real {kind} files not found (set {DATA_DIR_ENV}; run `atras fetch --list` for canonical URLs)"
        )


@pytest.fixture
def tiny_data():
    return synth_pair(300, 200, dim=30, seed=11)


@pytest.fixture
def mnist_files_dir(tmp_path):
    return make_synthetic_mnist_dir(tmp_path / "data")
