import os
from collections import Counter

import numpy as np
import pytest

from ts2img.augment import AugmentConfig
from ts2img.dataset import (
    BalanceConfig,
    LabeledImageSet,
    SyntheticSpec,
    augment_set,
    balance,
    build_image_set,
    default_corpus,
    generate_synthetic,
    leakage_pairs,
    load_corpus,
    load_set,
    replay,
    save_corpus,
    save_set,
    split,
)
from ts2img.encoder import EncodingConfig, TimeSeries
from ts2img.errors import ConfigError, EmptyClass, FractionOutOfRange


def counts_set(counts, edge=8, seed=0):
    """Set with one source series per class and one image per timestep window."""
    rng = np.random.default_rng(seed)
    images, labels, manifest = [], [], []
    for c, n in counts.items():
        for w in range(n):
            images.append(rng.integers(1, 256, (edge, edge)).astype(np.uint8))
            labels.append(c)
            manifest.append({"label": c, "source_id": c, "series_id": c, "window_start": w,
                             "source_range": [w, w + 4], "lineage": []})
    return LabeledImageSet(np.stack(images), labels, manifest)


def small_corpus(seed=0):
    rng = np.random.default_rng(seed)
    return [TimeSeries(rng.normal(size=n).cumsum(), c, c) for c, n in (("a", 60), ("b", 30), ("c", 25))]


# --- synthetic ----------------------------------------------------------------

def test_synthetic_examples():
    s = generate_synthetic(SyntheticSpec("x", 5, base_level=-80.0))
    np.testing.assert_array_equal(s.samples, [-80.0] * 5)
    s = generate_synthetic(SyntheticSpec("x", 8, base_level=0.0, sinusoids=[(1.0, 4.0)]))
    np.testing.assert_allclose(s.samples, [0, 1, 0, -1, 0, 1, 0, -1], atol=1e-12)
    spec = SyntheticSpec("x", 50, noise_std=1.0, rng_seed=9)
    np.testing.assert_array_equal(generate_synthetic(spec).samples, generate_synthetic(spec).samples)


def test_synthetic_validation():
    with pytest.raises(ConfigError):
        SyntheticSpec("x", 0)
    with pytest.raises(ConfigError):
        SyntheticSpec("x", 5, noise_std=-1.0)


def test_default_corpus_shape(tmp_path):
    corpus = default_corpus()
    assert [len(s) for s in corpus] == [962, 137, 122]
    assert len({s.label for s in corpus}) == 3
    path = tmp_path / "corpus.json"
    save_corpus(path, corpus)
    back = load_corpus(path)
    for a, b in zip(corpus, back):
        np.testing.assert_array_equal(a.samples, b.samples)
        assert (a.label, a.id) == (b.label, b.id)


# --- build / replay --------------------------------------------------------------

def test_build_image_set_counts_and_replay():
    corpus = small_corpus()
    cfg = EncodingConfig(16, 10, 3)
    ds = build_image_set(corpus, cfg, ma_window=3)
    # raw: T - 9 windows, smoothed: T - 2 - 9
    assert len(ds) == sum((len(s) - 9) + (len(s) - 11) for s in corpus)
    sources = {s.id: s for s in corpus}
    for i in range(0, len(ds), 7):
        np.testing.assert_array_equal(replay(ds.manifest[i], sources), ds.images[i])
    smooth = [r for r in ds.manifest if r["series_id"].endswith("_ma3")]
    assert all(r["source_range"][1] - r["source_range"][0] == 11 for r in smooth)


# --- balance ---------------------------------------------------------------------

def test_balance_majority_and_minorities():
    ds = counts_set({"a": 950, "b": 125, "c": 110})
    out = balance(ds, BalanceConfig(400, rng_seed=3))
    assert out.class_counts() == {"a": 400, "b": 400, "c": 400}
    # every minority original survives
    kept = Counter((r["label"], r["window_start"]) for r in out.manifest if not r.get("aug_index"))
    assert sum(1 for k in kept if k[0] == "b") == 125
    assert sum(1 for k in kept if k[0] == "c") == 110


def test_balance_fixed_point():
    ds = counts_set({"a": 100, "b": 100, "c": 100})
    out = balance(ds, BalanceConfig(100, rng_seed=1))
    np.testing.assert_array_equal(out.images, ds.images)
    assert out.labels == ds.labels


def test_balance_fill_retains_originals_and_replays():
    corpus = small_corpus(1)
    ds = build_image_set(corpus, EncodingConfig(16, 15, 3))
    counts = ds.class_counts()
    target = max(counts.values()) + 5
    out = balance(ds, BalanceConfig(target, rng_seed=11, augment=AugmentConfig()))
    assert set(out.class_counts().values()) == {target}
    originals = [r for r in out.manifest if not r.get("aug_index")]
    assert len(originals) == len(ds)
    sources = {s.id: s for s in corpus}
    for i in range(len(out)):
        np.testing.assert_array_equal(replay(out.manifest[i], sources), out.images[i])
    variants = [i for i, r in enumerate(out.manifest) if r.get("aug_index")]
    assert len(variants) == 3 * target - len(ds)


def test_balance_ten_each_to_thirty():
    ds = counts_set({"a": 10, "b": 10, "c": 10})
    out = balance(ds, BalanceConfig(30, rng_seed=4))
    assert out.class_counts() == {"a": 30, "b": 30, "c": 30}
    np.testing.assert_array_equal(out.images[:30], ds.images)
    per_class = Counter(r["label"] for r in out.manifest if r.get("aug_index"))
    assert per_class == {"a": 20, "b": 20, "c": 20}
    # round-robin: each original reused exactly twice
    assert set(Counter((r["label"], r["window_start"]) for r in out.manifest if r.get("aug_index")).values()) == {2}


def test_balance_is_deterministic_and_seed_sensitive():
    ds = counts_set({"a": 50, "b": 12, "c": 7})
    a = balance(ds, BalanceConfig(20, rng_seed=5))
    b = balance(ds, BalanceConfig(20, rng_seed=5))
    c = balance(ds, BalanceConfig(20, rng_seed=6))
    np.testing.assert_array_equal(a.images, b.images)
    assert a.manifest == b.manifest
    assert not np.array_equal(a.images, c.images)


def test_balance_errors():
    ds = counts_set({"a": 5, "b": 5})
    with pytest.raises(EmptyClass):
        balance(ds, BalanceConfig(5), classes=["a", "b", "c"])
    with pytest.raises(ConfigError):
        BalanceConfig(0)


# --- split -----------------------------------------------------------------------

def test_split_fraction_per_class():
    ds = counts_set({"a": 100, "b": 100, "c": 100})
    train, test = split(ds, 0.2, rng_seed=0)
    for c in "abc":
        assert test.class_counts()[c] == 20
        # purge drops at most the window overlap at the boundary
        assert 76 <= train.class_counts()[c] <= 80
    assert not leakage_pairs(train, test)


def test_split_keeps_augmented_variants_with_their_source():
    ds = counts_set({"a": 40, "b": 40, "c": 40})
    full = LabeledImageSet.concat([ds, augment_set(ds, AugmentConfig(re_probability=1.0), copies=2)])
    train, test = split(full, 0.25, rng_seed=2)
    train_keys = {(r["label"], r["window_start"]) for r in train.manifest}
    test_keys = {(r["label"], r["window_start"]) for r in test.manifest}
    assert not train_keys & test_keys
    assert not leakage_pairs(train, test)


def test_split_leakage_exhaustive_on_encoded_set():
    corpus = small_corpus(2)
    ds = build_image_set(corpus, EncodingConfig(16, 8, 3), ma_window=3)
    ds = balance(ds, BalanceConfig(50, rng_seed=1))
    for seed in range(4):
        train, test = split(ds, 0.2, rng_seed=seed)
        assert len(train) and len(test)
        assert set(test.classes()) == {"a", "b", "c"}
        # brute force over every pair
        for r in train.manifest:
            for q in test.manifest:
                if r["source_id"] == q["source_id"]:
                    lo1, hi1 = r["source_range"]
                    lo2, hi2 = q["source_range"]
                    assert hi1 < lo2 or hi2 < lo1


def test_split_bad_fraction():
    ds = counts_set({"a": 5})
    for f in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(FractionOutOfRange):
            split(ds, f)


# --- persistence ---------------------------------------------------------------

@pytest.mark.parametrize("fmt", ["pgm", "png"])
def test_save_load_round_trip(tmp_path, fmt):
    corpus = small_corpus(3)
    ds = build_image_set(corpus, EncodingConfig(16, 20, 3))
    ds = LabeledImageSet.concat([ds, augment_set(ds.subset(range(5)), AugmentConfig(re_probability=1.0))])
    path = save_set(ds, tmp_path / "out", fmt=fmt)
    back = load_set(path)
    np.testing.assert_array_equal(back.images, ds.images)
    assert back.labels == ds.labels
    assert all(os.path.isabs(r["image_path"]) and r["image_path"].endswith(fmt) for r in back.manifest)
    for key in ("label", "source_id", "window_start", "lineage"):
        assert all(key in r for r in back.manifest)
    sources = {s.id: s for s in corpus}
    for r, img in zip(back.manifest, back.images):
        np.testing.assert_array_equal(replay(r, sources), img)
