"""Patch datasets: 3x3 LR neighbourhood -> 2x2 HR block, pooled over channels.

Samples are stored column-wise in a :class:`PatchSet` (one row per sample)
rather than as millions of small objects; indexing a set yields a
:class:`PatchSample`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagicError, TrailingBytesError, TruncatedFileError, UnsupportedVersionError
from .image_core import ImageShapeError, check_rgb, crop_even, downsample_2x, load_image, pad_replicate

CACHE_MAGIC = b"SRDS"
CACHE_VERSION = 1
# magic, version, record count, seed, reserved -> 32 bytes
_CACHE_HEADER = struct.Struct("<4sIQqQ")
_RECORD_WIDTH = 13


class DatasetError(Exception):
    pass


@dataclass(frozen=True)
class PatchSample:
    input: np.ndarray
    target: np.ndarray
    image_id: str
    channel: int
    x: int
    y: int


@dataclass
class PatchSet:
    inputs: np.ndarray  # (n, 9)
    targets: np.ndarray  # (n, 4)
    image_index: np.ndarray  # (n,) index into image_ids
    channel: np.ndarray
    x: np.ndarray
    y: np.ndarray
    image_ids: tuple = ()

    def __len__(self):
        return self.inputs.shape[0]

    def __getitem__(self, i) -> PatchSample:
        return PatchSample(
            self.inputs[i], self.targets[i], self.image_ids[self.image_index[i]],
            int(self.channel[i]), int(self.x[i]), int(self.y[i]),
        )

    def take(self, idx) -> "PatchSet":
        idx = np.asarray(idx, dtype=np.int64)
        return PatchSet(
            self.inputs[idx], self.targets[idx], self.image_index[idx],
            self.channel[idx], self.x[idx], self.y[idx], self.image_ids,
        )

    @staticmethod
    def concat(sets) -> "PatchSet":
        sets = list(sets)
        ids, index = [], []
        for s in sets:
            index.append(s.image_index + len(ids))
            ids.extend(s.image_ids)
        return PatchSet(
            np.concatenate([s.inputs for s in sets]),
            np.concatenate([s.targets for s in sets]),
            np.concatenate(index),
            np.concatenate([s.channel for s in sets]),
            np.concatenate([s.x for s in sets]),
            np.concatenate([s.y for s in sets]),
            tuple(ids),
        )


@dataclass
class DatasetSplit:
    train: PatchSet
    validation: PatchSet
    test: PatchSet
    rng_seed: int

    def sizes(self):
        return len(self.train), len(self.validation), len(self.test)


@dataclass(frozen=True)
class CorpusSpec:
    """Images to pool for one training run.

    ``entries`` holds ``(category, path)`` pairs. In ``"specific"`` mode all
    entries must share one category.
    """

    entries: tuple
    mode: str = "general"

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((str(c), Path(p)) for c, p in self.entries))
        if not self.entries:
            raise DatasetError("a corpus needs at least one image")
        if self.mode not in ("general", "specific"):
            raise DatasetError(f"unknown corpus mode {self.mode!r}")
        if self.mode == "specific" and len(self.categories) != 1:
            raise DatasetError(f"specific corpus mixes categories: {sorted(self.categories)}")

    @property
    def categories(self):
        return {c for c, _ in self.entries}

    @property
    def category(self):
        return next(iter(self.categories)) if len(self.categories) == 1 else "general"

    @property
    def paths(self):
        return [p for _, p in self.entries]


def neighbourhoods(plane: np.ndarray) -> np.ndarray:
    """Replicate-padded 3x3 neighbourhood of every pixel, shape (h*w, 9), row-major."""
    h, w = plane.shape
    padded = pad_replicate(plane, 1)
    cols = [padded[dy : dy + h, dx : dx + w].reshape(-1) for dy in range(3) for dx in range(3)]
    return np.stack(cols, axis=1)


def hr_blocks(plane: np.ndarray) -> np.ndarray:
    """2x2 HR blocks in (2x,2y), (2x+1,2y), (2x,2y+1), (2x+1,2y+1) order, shape (h*w, 4)."""
    h2, w2 = plane.shape
    h, w = h2 // 2, w2 // 2
    cols = [plane[dy::2, dx::2].reshape(h * w) for dy, dx in ((0, 0), (0, 1), (1, 0), (1, 1))]
    return np.stack(cols, axis=1)


def extract_samples(hr: np.ndarray, image_id: str = "") -> PatchSet:
    """All training samples of one HR image, ordered by (channel, y, x)."""
    hr = check_rgb(hr)
    h2, w2, _ = hr.shape
    if h2 % 2 or w2 % 2:
        raise ImageShapeError(f"{image_id or 'image'}: odd dimensions {w2}x{h2}")
    lr = downsample_2x(hr)
    h, w = h2 // 2, w2 // 2
    ys, xs = np.divmod(np.arange(h * w), w)
    inputs, targets = [], []
    for c in range(3):
        inputs.append(neighbourhoods(lr[:, :, c]))
        targets.append(hr_blocks(hr[:, :, c]))
    n = 3 * h * w
    return PatchSet(
        inputs=np.concatenate(inputs),
        targets=np.concatenate(targets),
        image_index=np.zeros(n, dtype=np.int64),
        channel=np.repeat(np.arange(3), h * w),
        x=np.tile(xs, 3),
        y=np.tile(ys, 3),
        image_ids=(image_id,),
    )


def build_split(samples: PatchSet, rng_seed: int) -> DatasetSplit:
    """Seeded shuffle, then a 6:2:2 train/validation/test cut."""
    n = len(samples)
    if n < 5:
        raise DatasetError(f"need at least 5 samples to split, got {n}")
    order = np.random.default_rng(rng_seed).permutation(n)
    n_train = (6 * n) // 10
    n_val = (2 * n) // 10
    return DatasetSplit(
        train=samples.take(order[:n_train]),
        validation=samples.take(order[n_train : n_train + n_val]),
        test=samples.take(order[n_train + n_val :]),
        rng_seed=rng_seed,
    )


def pool_corpus(spec: CorpusSpec, *, crop_to_even=False, max_samples=None, rng_seed=0) -> PatchSet:
    """Extract and pool samples from every corpus image in sorted path order.

    With ``max_samples`` a seeded subset of that size is kept (in pooled order).
    """
    sets = []
    for category, path in sorted(spec.entries, key=lambda e: str(e[1])):
        try:
            img = load_image(path)
            if crop_to_even:
                img = crop_even(img)
            sets.append(extract_samples(img, str(path)))
        except Exception as exc:
            raise DatasetError(f"failed to load corpus image {path}: {exc}") from exc
    pooled = PatchSet.concat(sets)
    if max_samples is not None and len(pooled) > max_samples:
        keep = np.random.default_rng([rng_seed, 1]).choice(len(pooled), size=max_samples, replace=False)
        pooled = pooled.take(np.sort(keep))
    return pooled


def build_corpus(spec: CorpusSpec, rng_seed: int, *, crop_to_even=False, max_samples=None) -> DatasetSplit:
    pooled = pool_corpus(spec, crop_to_even=crop_to_even, max_samples=max_samples, rng_seed=rng_seed)
    return build_split(pooled, rng_seed)


def read_manifest(path) -> list:
    """Parse ``category<TAB>path`` lines; relative paths resolve against the manifest."""
    path = Path(path)
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DatasetError(f"{path}:{lineno}: expected 'category<TAB>path'")
        category, image = parts[0].strip(), Path(parts[1].strip())
        if not image.is_absolute():
            image = path.parent / image
        entries.append((category, image))
    return entries


def write_manifest(path, entries) -> None:
    lines = [f"{category}\t{image}" for category, image in entries]
    Path(path).write_text("\n".join(lines) + "\n")


def scan_directory(root) -> list:
    """Treat each image's parent directory name as its category."""
    root = Path(root)
    files = sorted(p for p in root.rglob("*") if p.suffix.lower() in (".png", ".ppm"))
    return [(p.parent.name, p) for p in files]


# -------------------------------------------------------------- cache file


def save_cache(samples: PatchSet, path, rng_seed: int) -> None:
    """Write samples as a header plus (9 inputs + 4 targets) float64 records."""
    header = _CACHE_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, len(samples), rng_seed, 0)
    records = np.hstack([samples.inputs, samples.targets]).astype("<f8")
    Path(path).write_bytes(header + records.tobytes())


def load_cache(path):
    """Return ``(PatchSet, rng_seed)``; provenance is not stored in the cache."""
    data = Path(path).read_bytes()
    if data[:4] != CACHE_MAGIC:
        raise BadMagicError(f"{path}: not a dataset cache (bad magic)")
    if len(data) < _CACHE_HEADER.size:
        raise TruncatedFileError(f"{path}: truncated header")
    _, version, count, seed, _ = _CACHE_HEADER.unpack_from(data)
    if version != CACHE_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")
    expected = _CACHE_HEADER.size + count * _RECORD_WIDTH * 8
    if len(data) < expected:
        raise TruncatedFileError(f"{path}: truncated, expected {expected} bytes")
    if len(data) > expected:
        raise TrailingBytesError(f"{path}: trailing bytes")
    records = np.frombuffer(data, dtype="<f8", offset=_CACHE_HEADER.size).reshape(count, _RECORD_WIDTH)
    records = records.astype(np.float64)
    minus_one = -np.ones(count, dtype=np.int64)
    samples = PatchSet(
        records[:, :9].copy(), records[:, 9:].copy(), np.zeros(count, dtype=np.int64),
        minus_one, minus_one.copy(), minus_one.copy(), (str(path),),
    )
    return samples, seed
