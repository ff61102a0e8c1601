"""Checks that only make sense against the official dataset files.

These skip unless the full distributions are staged under
$ATRAS_DATA_DIR (see `atras fetch --list` for canonical URLs).
"""

import numpy as np
import pytest

from atras.datasets import load_cifar10, load_mnist

from conftest import find_real_cifar10, find_real_mnist


def _official_mnist():
    paths = find_real_mnist()
    if paths is None:
        pytest.skip("official MNIST files not staged under $ATRAS_DATA_DIR")
    source = load_mnist(*paths)
    if source.n != 60000:
        pytest.skip(f"staged MNIST has {source.n} examples, not the official 60000-image train file")
    return source


def _official_cifar10():
    paths = find_real_cifar10()
    if paths is None:
        pytest.skip("official CIFAR-10 batches not staged under $ATRAS_DATA_DIR")
    source = load_cifar10(paths)
    if source.n != 50000:
        pytest.skip(f"staged CIFAR-10 has {source.n} examples, not the official 50000-record batches")
    return source


class TestOfficialMnist:
    def test_header_counts_and_range(self):
        source = _official_mnist()
        assert source.n == 60000
        assert source.dim == 784
        assert source.features.min() >= 0.0 and source.features.max() <= 1.0
        assert set(np.unique(source.labels)) == set(range(10))


class TestOfficialCifar10:
    def test_batches_and_range(self):
        source = _official_cifar10()
        assert source.n == 50000
        assert source.dim == 3072
        assert source.features.min() >= 0.0 and source.features.max() <= 1.0
        assert set(np.unique(source.labels)) == set(range(10))
