"""Shared fixtures: a default key and small on-disk corpora."""

import os

import pytest

from coprguard.manifest import DatasetManifest, ManifestEntry
from coprguard.image import save_image
from coprguard.synth import natural_image, watermark_pattern
from coprguard.watermark import WatermarkKey


@pytest.fixture(scope="session")
def default_key():
    return WatermarkKey(watermark=watermark_pattern(7), seed=42)


def write_corpus(dirpath, count, first_seed=0, label=None, height=128):
    """Small natural corpus on disk plus an in-memory manifest."""
    os.makedirs(dirpath, exist_ok=True)
    entries = []
    for i in range(count):
        name = f"img_{i:04d}.png"
        save_image(natural_image(first_seed + i, height), os.path.join(dirpath, name))
        entries.append(ManifestEntry(id=f"img_{i:04d}", path=name, label=label))
    return DatasetManifest(entries=entries, root=None, base_dir=str(dirpath))


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """12 images, enough for embedding and extraction checks."""
    d = tmp_path_factory.mktemp("tiny-corpus")
    return write_corpus(str(d), 12, first_seed=300)


@pytest.fixture(scope="session")
def calib_corpus(tmp_path_factory):
    """100 clean images, the minimum calibrate() accepts."""
    d = tmp_path_factory.mktemp("calib-corpus")
    return write_corpus(str(d), 100, first_seed=40_000, label="clean")
