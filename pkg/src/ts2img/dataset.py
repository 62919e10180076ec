"""Labeled image sets: synthetic corpora, encoding, balancing, leakage-free splits.

Every image carries a manifest record whose ``lineage`` lists the operations
that produced it, starting from a root time series::

    [["moving_average", {"ma_window": 3}, null],
     ["encode", {"image_edge": 64, "window_length": 40, "stencil_points": 3,
                 "pixel_max": 255, "window_start": 17}, null],
     ["flip_vertical", {}, null],
     ["random_erase_black", {...AugmentConfig...}, [seed, index]]]

``replay(record, sources)`` re-runs that recipe and reproduces the image
bit-exactly. ``source_range`` holds the inclusive span of root timesteps the
image depends on; ``split`` uses it to keep overlapping windows on one side.
"""
from __future__ import annotations

import json
import logging
import os
from collections import Counter
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import imageio
from .augment import AugmentConfig, apply_op, image_rng, moving_average
from .encoder import EncodingConfig, GrayImage, TimeSeries, derive, encode_array, map_window_to_image, polar_remap
from .errors import ConfigError, DataError, EmptyClass, FractionOutOfRange

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# synthetic corpus


@dataclass(frozen=True)
class SyntheticSpec:
    class_name: str
    length: int
    base_level: float = -90.0
    trend: float = 0.0
    sinusoids: tuple = ()
    noise_std: float = 0.0
    rng_seed: int = 0
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "sinusoids", tuple((float(a), float(p)) for a, p in self.sinusoids))
        if self.length < 1:
            raise ConfigError(f"length must be >= 1, got {self.length}")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        if any(p == 0 for _, p in self.sinusoids):
            raise ConfigError("sinusoid periods must be non-zero")

    def to_dict(self):
        d = asdict(self)
        d["sinusoids"] = [list(s) for s in self.sinusoids]
        return d

    @classmethod
    def from_dict(cls, d):
        names = ("class_name", "length", "base_level", "trend", "sinusoids", "noise_std", "rng_seed", "id")
        return cls(**{k: d[k] for k in names if k in d})


def generate_synthetic(spec):
    t = np.arange(spec.length, dtype=np.float64)
    x = spec.base_level + spec.trend * t
    for amp, period in spec.sinusoids:
        x = x + amp * np.sin(2.0 * np.pi * t / period)
    if spec.noise_std > 0:
        rng = np.random.Generator(np.random.PCG64(spec.rng_seed))
        x = x + rng.normal(0.0, spec.noise_std, spec.length)
    return TimeSeries(x, spec.class_name, spec.id or spec.class_name)


# Stand-ins loosely shaped like the three weather classes; not a model of real RSL.
CLASS_NAMES = ("changeable", "weak_rain", "moderate_rain")


def default_specs(seed=2024, lengths=(962, 137, 122)):
    """Three class presets with deliberately different derivative signatures.

    changeable: wandering level, slow swing plus strong noise.
    weak_rain: mild downward drift under a smooth medium-period swing.
    moderate_rain: stronger drift and a fast oscillation on top of the swing.
    """
    changeable, weak, moderate = lengths
    return [
        SyntheticSpec("changeable", changeable, base_level=-85.0, trend=0.0,
                      sinusoids=((3.0, 61.0),), noise_std=0.8, rng_seed=seed),
        SyntheticSpec("weak_rain", weak, base_level=-92.0, trend=-0.004,
                      sinusoids=((1.5, 29.3),), noise_std=0.003, rng_seed=seed + 1),
        SyntheticSpec("moderate_rain", moderate, base_level=-97.0, trend=-0.01,
                      sinusoids=((3.0, 9.5), (1.5, 29.3)), noise_std=0.006, rng_seed=seed + 2),
    ]


def default_corpus(seed=2024, lengths=(962, 137, 122)):
    return [generate_synthetic(s) for s in default_specs(seed, lengths)]


def save_corpus(path, corpus):
    with open(path, "w") as fh:
        json.dump([s.to_dict() for s in corpus], fh)


def load_corpus(path):
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data.get("series", [])
    return [TimeSeries.from_dict(d) for d in data]


# --------------------------------------------------------------------------
# labeled image sets


@dataclass(eq=False)
class LabeledImageSet:
    images: np.ndarray
    labels: list
    manifest: list = field(default_factory=list)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.uint8)
        if self.images.ndim != 3:
            self.images = self.images.reshape((-1,) + self.images.shape[-2:]) if self.images.size else \
                np.zeros((0, 1, 1), dtype=np.uint8)
        self.labels = list(self.labels)
        if len(self.labels) != self.images.shape[0]:
            raise DataError(f"{self.images.shape[0]} images but {len(self.labels)} labels")
        if not self.manifest:
            self.manifest = [{"label": lab} for lab in self.labels]
        if len(self.manifest) != len(self.labels):
            raise DataError("manifest length differs from image count")

    def __len__(self):
        return len(self.labels)

    @property
    def edge(self):
        return self.images.shape[-1]

    def class_counts(self):
        return dict(sorted(Counter(self.labels).items()))

    def classes(self):
        return sorted(set(self.labels))

    def subset(self, indices):
        indices = list(indices)
        return LabeledImageSet(self.images[indices] if indices else self.images[:0],
                               [self.labels[i] for i in indices],
                               [dict(self.manifest[i]) for i in indices])

    def image(self, i):
        return GrayImage(self.images[i], self.labels[i], dict(self.manifest[i]))

    @classmethod
    def concat(cls, parts):
        parts = [p for p in parts if len(p)]
        if not parts:
            raise DataError("nothing to concatenate")
        return cls(np.concatenate([p.images for p in parts]),
                   [lab for p in parts for lab in p.labels],
                   [dict(r) for p in parts for r in p.manifest])


def _encode_record(series_id, root_id, label, start, config, lineage_prefix, span_extra):
    params = dict(config.to_dict(), window_start=int(start))
    return {
        "label": label,
        "source_id": root_id,
        "series_id": series_id,
        "window_start": int(start),
        "source_range": [int(start), int(start + config.window_length - 1 + span_extra)],
        "lineage": list(lineage_prefix) + [["encode", params, None]],
    }


def build_image_set(corpus, config, ma_window=None):
    """Encode every series of ``corpus``; with ``ma_window`` also its moving average.

    Raw and smoothed series both contribute images. Smoothed windows record
    the root timesteps they depend on, which reach ``ma_window - 1`` further.
    """
    stacks, labels, manifest = [], [], []
    for series in corpus:
        variants = [(series, series.id, [], 0)]
        if ma_window:
            smooth = TimeSeries(moving_average(series.samples, ma_window), series.label,
                                f"{series.id}_ma{ma_window}")
            variants.append((smooth, smooth.id, [["moving_average", {"ma_window": ma_window}, None]],
                             ma_window - 1))
        for s, sid, prefix, extra in variants:
            stack = encode_array(s, config)
            stacks.append(stack)
            labels.extend([series.label] * stack.shape[0])
            manifest.extend(_encode_record(sid, series.id, series.label, w, config, prefix, extra)
                            for w in range(stack.shape[0]))
    if not stacks:
        raise DataError("empty corpus")
    return LabeledImageSet(np.concatenate(stacks), labels, manifest)


def replay(record, sources):
    """Rebuild one image from its manifest record and the root series."""
    try:
        series = sources[record["source_id"]]
    except KeyError:
        raise DataError(f"unknown source series {record['source_id']!r}") from None
    image = None
    for op, params, seed in record["lineage"]:
        if op == "moving_average":
            series = TimeSeries(moving_average(series.samples, params["ma_window"]), series.label, series.id)
        elif op == "encode":
            config = EncodingConfig.from_dict(params)
            derived = derive(series, config)
            image = map_window_to_image(derived, polar_remap(derived, config), params["window_start"],
                                        config, series.label)
        else:
            if image is None:
                raise DataError(f"image op {op!r} before encode in lineage")
            image = apply_op(image, op, params, seed)
    if image is None:
        raise DataError("lineage has no encode step")
    return image.pixels


def _augment_record(record, ops, k):
    rec = dict(record)
    rec["lineage"] = [list(step) for step in record["lineage"]] + ops
    rec["aug_index"] = k
    rec.pop("image_path", None)
    return rec


def augment_set(dataset, config, copies=1, ops=("random_erase_black",), seed_offset=0):
    """``copies`` augmented variants of every image, RNG keyed per variant.

    ``ops`` may contain ``random_erase_black``, ``flip_horizontal`` and
    ``flip_vertical``; they run in that order.
    """
    images, labels, manifest = [], [], []
    counter = seed_offset
    for i in range(len(dataset)):
        for k in range(copies):
            img = dataset.image(i)
            applied = []
            for op in ("flip_horizontal", "flip_vertical", "random_erase_black"):
                if op not in ops:
                    continue
                params = config.to_dict() if op == "random_erase_black" else {}
                seed = [config.rng_seed, counter] if op == "random_erase_black" else None
                img = apply_op(img, op, params, seed)
                applied.append([op, params, seed])
            counter += 1
            images.append(img.pixels)
            labels.append(dataset.labels[i])
            manifest.append(_augment_record(dataset.manifest[i], applied, k + 1))
    return LabeledImageSet(np.stack(images) if images else dataset.images[:0], labels, manifest)


# --------------------------------------------------------------------------
# balancing


@dataclass(frozen=True)
class BalanceConfig:
    target_per_class: int
    rng_seed: int = 0
    augment: AugmentConfig = AugmentConfig()
    flip_probability: float = 0.5

    def __post_init__(self):
        if not isinstance(self.target_per_class, int) or self.target_per_class < 1:
            raise ConfigError(f"target_per_class must be a positive integer, got {self.target_per_class!r}")

    @classmethod
    def from_dict(cls, d):
        aug = AugmentConfig.from_dict(d.get("augment", {}))
        return cls(int(d["target_per_class"]), int(d.get("rng_seed", 0)), aug,
                   float(d.get("flip_probability", 0.5)))


def _fill_variant(dataset, src, rng, config, counter):
    img = dataset.image(src)
    ops = []
    for op in ("flip_horizontal", "flip_vertical"):
        if rng.random() < config.flip_probability:
            img = apply_op(img, op, {}, None)
            ops.append([op, {}, None])
    # filling always erases, so every variant differs from its source
    params = replace(config.augment, re_probability=1.0).to_dict()
    seed = [config.rng_seed, counter]
    img = apply_op(img, "random_erase_black", params, seed)
    ops.append(["random_erase_black", params, seed])
    return img.pixels, ops


def balance(dataset, config, classes=None):
    """Resize every class to exactly ``target_per_class`` images.

    Larger classes are subsampled uniformly without replacement. Smaller ones
    keep every image and are topped up with augmented variants (optional
    flips, then a black-patch erase), cycling through a seeded permutation of
    the originals so each source is reused evenly.
    """
    classes = list(classes) if classes is not None else dataset.classes()
    counts = Counter(dataset.labels)
    for c in classes:
        if counts.get(c, 0) == 0:
            raise EmptyClass(f"class {c!r} has no samples")
    target = config.target_per_class
    keep, extra_images, extra_labels, extra_manifest = [], [], [], []
    counter = 0
    for ci, c in enumerate(classes):
        idx = np.array([i for i, lab in enumerate(dataset.labels) if lab == c])
        rng = image_rng(config.rng_seed, ci)
        if len(idx) >= target:
            chosen = np.sort(rng.choice(idx, size=target, replace=False))
            keep.extend(int(i) for i in chosen)
            continue
        keep.extend(int(i) for i in idx)
        order = rng.permutation(idx)
        variants = Counter()
        for k in range(target - len(idx)):
            src = int(order[k % len(order)])
            px, ops = _fill_variant(dataset, src, rng, config, counter)
            counter += 1
            variants[src] += 1
            extra_images.append(px)
            extra_labels.append(c)
            extra_manifest.append(_augment_record(dataset.manifest[src], ops, variants[src]))
    base = dataset.subset(keep)
    if not extra_images:
        return base
    return LabeledImageSet.concat([base, LabeledImageSet(np.stack(extra_images), extra_labels, extra_manifest)])


# --------------------------------------------------------------------------
# splitting


def _span(record, i):
    span = record.get("source_range")
    if span is None:
        # no provenance: treat the image as its own isolated source
        return f"__image{i}", i, i
    return record.get("source_id", ""), int(span[0]), int(span[1])


def split(dataset, test_fraction, rng_seed=0):
    """Stratified train/test split by contiguous time blocks.

    For every (class, source series) group the test side takes a block of
    about ``test_fraction`` of the images at the head or the tail of the
    timeline; the seed picks which end. Images whose source span crosses the
    block boundary are dropped, so no train image shares a root timestep with
    a test image. Augmented variants carry their source's span and follow it.
    """
    if not 0.0 < test_fraction < 1.0:
        raise FractionOutOfRange(f"test_fraction must lie in (0, 1), got {test_fraction}")
    groups = {}
    for i, (lab, rec) in enumerate(zip(dataset.labels, dataset.manifest)):
        src, lo, hi = _span(rec, i)
        groups.setdefault((lab, src), []).append((i, lo, hi))
    rng = image_rng(rng_seed, 0)
    train, test, dropped = [], [], 0
    for key in sorted(groups):
        items = groups[key]
        n_test = min(len(items), max(1, int(round(test_fraction * len(items)))))
        tail = bool(rng.integers(0, 2))
        if tail:
            los = sorted(lo for _, lo, _ in items)
            cut = los[len(items) - n_test]
            for i, lo, hi in items:
                if lo >= cut:
                    test.append(i)
                elif hi < cut:
                    train.append(i)
                else:
                    dropped += 1
        else:
            his = sorted(hi for _, _, hi in items)
            cut = his[n_test - 1]
            for i, lo, hi in items:
                if hi <= cut:
                    test.append(i)
                elif lo > cut:
                    train.append(i)
                else:
                    dropped += 1
    if dropped:
        log.info("split dropped %d images straddling the train/test boundary", dropped)
    return dataset.subset(sorted(train)), dataset.subset(sorted(test))


def leakage_pairs(train, test):
    """(train index, test index) pairs whose root timestep spans overlap."""
    bad = []
    by_source = {}
    for j, rec in enumerate(test.manifest):
        src, lo, hi = _span(rec, -1 - j)
        by_source.setdefault(src, []).append((j, lo, hi))
    for i, rec in enumerate(train.manifest):
        src, lo, hi = _span(rec, i)
        for j, tlo, thi in by_source.get(src, ()):
            if lo <= thi and tlo <= hi:
                bad.append((i, j))
    return bad


# --------------------------------------------------------------------------
# persistence


def image_filename(record, ext="pgm"):
    series_id = record.get("series_id", record.get("source_id", "image"))
    name = f"{series_id}_{record.get('window_start', 0)}"
    if record.get("aug_index"):
        name += f"_aug{record['aug_index']}"
    return f"{name}.{ext}"


def save_set(dataset, out_dir, manifest_name="manifest.jsonl", fmt="pgm"):
    """Write images plus a JSON-lines manifest; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    used = Counter()
    path = os.path.join(out_dir, manifest_name)
    with open(path, "w") as fh:
        for i in range(len(dataset)):
            rec = dict(dataset.manifest[i])
            rec["label"] = dataset.labels[i]
            name = image_filename(rec, fmt)
            used[name] += 1
            if used[name] > 1:
                # the same window can be drawn into a set twice (e.g. after merging)
                stem, ext = os.path.splitext(name)
                name = f"{stem}_dup{used[name] - 1}{ext}"
            imageio.write_image(os.path.join(out_dir, name), dataset.images[i])
            rec["image_path"] = name
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def read_manifest(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_set(manifest_path):
    records = read_manifest(manifest_path)
    if not records:
        raise DataError(f"{manifest_path}: empty manifest")
    root = os.path.dirname(os.path.abspath(manifest_path))
    images = []
    for rec in records:
        p = rec["image_path"]
        images.append(imageio.read_image(p if os.path.isabs(p) else os.path.join(root, p)))
    for rec in records:
        rec["image_path"] = os.path.join(root, rec["image_path"]) if not os.path.isabs(rec["image_path"]) \
            else rec["image_path"]
    return LabeledImageSet(np.stack(images), [r["label"] for r in records], records)
