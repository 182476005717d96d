"""Seeded demo corpora cut from the photographs bundled with scikit-image.

Each category is a pool of non-overlapping square tiles taken from a few
source photographs; a seeded shuffle decides which tiles are written and
which of them are held out for testing.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from skimage import data as skdata

from .dataset import write_manifest
from .image_core import save_image

CATEGORIES = {
    "texture": ("brick", "grass", "gravel"),
    "photo": ("astronaut", "coffee", "chelsea", "rocket"),
    "microscopy": ("immunohistochemistry", "cell"),
    "astro": ("hubble_deep_field",),
    "grayscale": ("camera", "moon", "coins", "clock"),
    "retina": ("retina",),
}


def _source(name):
    img = getattr(skdata, name)()
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    return img[:, :, :3].astype(np.float64) / 255.0


def category_tiles(category, tile=256):
    """All non-overlapping ``tile`` x ``tile`` crops of a category's sources.

    Returns a list of ``(name, image)`` in a fixed order.
    """
    tiles = []
    for name in CATEGORIES[category]:
        img = _source(name)
        h, w, _ = img.shape
        for r in range(h // tile):
            for c in range(w // tile):
                tiles.append((f"{name}_{r}_{c}", img[r * tile : (r + 1) * tile, c * tile : (c + 1) * tile]))
    return tiles


def build_demo_corpus(out_dir, seed=0, categories=None, per_category=6, n_test=1, tile=256):
    """Write tiles and ``train.tsv`` / ``test.tsv`` manifests under ``out_dir``.

    ``per_category`` tiles are drawn for each category; the first ``n_test``
    of them (after the seeded shuffle) go to the test manifest.
    Returns ``(train_entries, test_entries)``.
    """
    out_dir = Path(out_dir)
    categories = list(categories or CATEGORIES)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for category in categories:
        tiles = category_tiles(category, tile)
        if len(tiles) < per_category:
            raise ValueError(f"category {category!r} has only {len(tiles)} tiles of size {tile}")
        order = rng.permutation(len(tiles))[:per_category]
        (out_dir / category).mkdir(parents=True, exist_ok=True)
        for rank, i in enumerate(order):
            name, img = tiles[i]
            path = out_dir / category / f"{name}.png"
            save_image(img, path)
            (test if rank < n_test else train).append((category, path))
    write_manifest(out_dir / "train.tsv", train)
    write_manifest(out_dir / "test.tsv", test)
    return train, test
