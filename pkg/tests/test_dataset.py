import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srlab.dataset import (
    CorpusSpec,
    DatasetError,
    PatchSet,
    build_corpus,
    build_split,
    extract_samples,
    load_cache,
    pool_corpus,
    read_manifest,
    save_cache,
    scan_directory,
    write_manifest,
)
from srlab.errors import BadMagicError, TrailingBytesError, TruncatedFileError
from srlab.image_core import ImageShapeError, downsample_2x, save_image


def dummy_samples(n):
    z = np.zeros(n, dtype=np.int64)
    return PatchSet(np.arange(n * 9, dtype=float).reshape(n, 9), np.zeros((n, 4)), z, z, np.arange(n), z, ("d",))


def test_constant_image_samples():
    s = extract_samples(np.full((2, 2, 3), 0.25), "c")
    assert len(s) == 3
    np.testing.assert_array_equal(s.inputs, np.full((3, 9), 0.25))
    np.testing.assert_array_equal(s.targets, np.full((3, 4), 0.25))
    assert list(s.channel) == [0, 1, 2]


def test_sample_count_for_full_size_image():
    s = extract_samples(np.zeros((512, 512, 3)), "big")
    assert len(s) == 3 * 256 * 256 == 196_608


def test_samples_match_direct_indexing(rng):
    hr = rng.random((8, 12, 3))
    lr = downsample_2x(hr)
    s = extract_samples(hr, "img")
    assert len(s) == 3 * 4 * 6
    for i in rng.choice(len(s), 25, replace=False):
        p = s[i]
        x, y, c = p.x, p.y, p.channel
        assert p.image_id == "img"
        expected_target = [hr[2 * y, 2 * x, c], hr[2 * y, 2 * x + 1, c], hr[2 * y + 1, 2 * x, c], hr[2 * y + 1, 2 * x + 1, c]]
        np.testing.assert_array_equal(p.target, expected_target)
        expected_input = [
            lr[min(max(y + dy, 0), 3), min(max(x + dx, 0), 5), c] for dy in (-1, 0, 1) for dx in (-1, 0, 1)
        ]
        np.testing.assert_array_equal(p.input, expected_input)
        assert p.input[4] == lr[y, x, c]


def test_samples_tile_back_to_hr(rng):
    hr = rng.random((6, 10, 3))
    s = extract_samples(hr, "t")
    rebuilt = np.full(hr.shape, np.nan)
    for k, (dy, dx) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        rebuilt[2 * s.y + dy, 2 * s.x + dx, s.channel] = s.targets[:, k]
    np.testing.assert_array_equal(rebuilt, hr)


def test_odd_image_rejected():
    with pytest.raises(ImageShapeError):
        extract_samples(np.zeros((3, 4, 3)))


@pytest.mark.parametrize("n, sizes", [(10, (6, 2, 2)), (11, (6, 2, 3)), (5, (3, 1, 1))])
def test_split_sizes(n, sizes):
    assert build_split(dummy_samples(n), 0).sizes() == sizes


def test_split_too_small():
    with pytest.raises(DatasetError):
        build_split(dummy_samples(4), 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(5, 400), st.integers(0, 2**32 - 1))
def test_split_is_exact_partition(n, seed):
    split = build_split(dummy_samples(n), seed)
    ids = np.concatenate([split.train.x, split.validation.x, split.test.x])
    assert sorted(ids) == list(range(n))
    assert len(split.train) == (6 * n) // 10
    assert len(split.validation) == (2 * n) // 10


def test_split_determinism():
    a, b = build_split(dummy_samples(50), 3), build_split(dummy_samples(50), 3)
    np.testing.assert_array_equal(a.train.x, b.train.x)
    c = build_split(dummy_samples(50), 4)
    assert not np.array_equal(a.train.x, c.train.x)


def make_images(tmp_path, specs, rng):
    entries = []
    for category, name in specs:
        (tmp_path / category).mkdir(exist_ok=True)
        path = tmp_path / category / f"{name}.png"
        save_image(rng.random((8, 8, 3)), path)
        entries.append((category, path))
    return entries


def test_corpus_spec_validation(tmp_path):
    with pytest.raises(DatasetError):
        CorpusSpec([])
    with pytest.raises(DatasetError):
        CorpusSpec([("a", "x.png"), ("b", "y.png")], mode="specific")
    with pytest.raises(DatasetError):
        CorpusSpec([("a", "x.png")], mode="other")
    assert CorpusSpec([("a", "x.png")], mode="specific").category == "a"


def test_single_tiny_image_corpus_too_small(tmp_path, rng):
    path = tmp_path / "tiny.png"
    save_image(rng.random((2, 2, 3)), path)
    with pytest.raises(DatasetError):
        build_corpus(CorpusSpec([("a", path)]), 0)


def test_general_corpus_pools_categories(tmp_path, rng):
    entries = make_images(tmp_path, [("flowers", "f1"), ("flowers", "f2"), ("animal", "a1")], rng)
    split = build_corpus(CorpusSpec(entries), 0)
    train_ids = {split.train.image_ids[i] for i in split.train.image_index}
    assert any("flowers" in i for i in train_ids) and any("animal" in i for i in train_ids)
    assert sum(split.sizes()) == 3 * 3 * 16


def test_corpus_pooling_order_is_sorted(tmp_path, rng):
    entries = make_images(tmp_path, [("b", "z"), ("a", "y")], rng)
    pooled = pool_corpus(CorpusSpec(entries))
    reversed_pooled = pool_corpus(CorpusSpec(entries[::-1]))
    np.testing.assert_array_equal(pooled.inputs, reversed_pooled.inputs)
    assert pooled.image_ids == tuple(sorted(str(p) for _, p in entries))


def test_corpus_budget(tmp_path, rng):
    entries = make_images(tmp_path, [("a", "1"), ("a", "2")], rng)
    pooled = pool_corpus(CorpusSpec(entries), max_samples=50, rng_seed=1)
    assert len(pooled) == 50
    again = pool_corpus(CorpusSpec(entries), max_samples=50, rng_seed=1)
    np.testing.assert_array_equal(pooled.inputs, again.inputs)


def test_corpus_load_failure_names_path(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"junk")
    with pytest.raises(DatasetError, match="bad.png"):
        build_corpus(CorpusSpec([("a", bad)]), 0)


def test_crop_even_option(tmp_path, rng):
    path = tmp_path / "odd.png"
    save_image(rng.random((5, 7, 3)), path)
    with pytest.raises(DatasetError):
        pool_corpus(CorpusSpec([("a", path)]))
    assert len(pool_corpus(CorpusSpec([("a", path)]), crop_to_even=True)) == 3 * 2 * 3


def test_manifest_round_trip(tmp_path, rng):
    entries = make_images(tmp_path, [("flowers", "f1"), ("animal", "a1")], rng)
    write_manifest(tmp_path / "m.tsv", entries)
    assert read_manifest(tmp_path / "m.tsv") == entries
    (tmp_path / "rel.tsv").write_text("# comment\n\nflowers\tflowers/f1.png\n")
    assert read_manifest(tmp_path / "rel.tsv") == [("flowers", tmp_path / "flowers" / "f1.png")]
    (tmp_path / "bad.tsv").write_text("no tab here\n")
    with pytest.raises(DatasetError):
        read_manifest(tmp_path / "bad.tsv")
    assert sorted(scan_directory(tmp_path)) == sorted(entries)


def test_cache_round_trip_and_errors(tmp_path, rng):
    s = extract_samples(rng.random((6, 4, 3)), "x")
    path = tmp_path / "d.srds"
    save_cache(s, path, rng_seed=42)
    raw = path.read_bytes()
    assert raw[:4] == b"SRDS" and len(raw) == 32 + len(s) * 13 * 8
    back, seed = load_cache(path)
    assert seed == 42
    assert back.inputs.tobytes() == s.inputs.tobytes()
    assert back.targets.tobytes() == s.targets.tobytes()

    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(BadMagicError):
        load_cache(path)
    path.write_bytes(raw[:-8])
    with pytest.raises(TruncatedFileError):
        load_cache(path)
    path.write_bytes(raw[:20])
    with pytest.raises(TruncatedFileError):
        load_cache(path)
    path.write_bytes(raw + b"\x00")
    with pytest.raises(TrailingBytesError):
        load_cache(path)
