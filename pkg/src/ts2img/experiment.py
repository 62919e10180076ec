"""Experiment runner: corpus -> images -> balance -> split -> train -> eval.

One ``ExperimentSpec`` is one row of the results table (window length,
augmentation tags, image edge). Each row runs ``repetitions`` times with
seeds derived from ``(master_seed, row_index, repetition)``; the row reports
mean and standard deviation of test accuracy and macro F1.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .augment import AugmentConfig
from .classifier import NetworkSpec, TrainConfig, default_layers, evaluate, init_network, save_checkpoint, train
from .dataset import BalanceConfig, balance, build_image_set, default_corpus, split
from .encoder import EncodingConfig
from .errors import ConfigError, DataError, EmptyHistory

log = logging.getLogger(__name__)

RESULT_COLUMNS = ["experiment", "window_length", "data_augmentation", "image_edge",
                  "accuracy", "f1", "accuracy_std", "f1_std", "repetitions"]
ACCURACY_COLUMNS = ["epoch", "loss", "accuracy", "eval_accuracy"]
SCORE_COLUMNS = ["epoch", "precision", "recall", "macro_f1"]

# window length, (ma, re), image edge for each of the fourteen default grid rows
DEFAULT_GRID = [
    (5, False, 64), (5, True, 64), (10, False, 64), (10, True, 64),
    (15, False, 64), (15, True, 64), (30, False, 64), (30, True, 64),
    (40, False, 64), (40, True, 64), (50, False, 64), (50, True, 64),
    (50, False, 128), (50, True, 128),
]


def derive_seed(master, *keys):
    """63-bit seed from a master seed and integer keys; distinct keys give unrelated streams."""
    state = np.random.SeedSequence([int(master), *map(int, keys)]).generate_state(2, np.uint32)
    return int((int(state[0]) << 32 | int(state[1])) & ((1 << 63) - 1))


@dataclass
class ExperimentSpec:
    experiment: str = "1"
    window_length: int = 40
    image_edge: int = 64
    stencil_points: int = 3
    ma: bool = False
    re: bool = False
    master_seed: int = 0
    row_index: int = 0
    repetitions: int = 3
    test_fraction: float = 0.2
    target_per_class: object = "auto"
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = TrainConfig.from_dict(self.train)
        if isinstance(self.augment, dict):
            self.augment = AugmentConfig.from_dict(self.augment)
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if not (self.target_per_class == "auto" or
                (isinstance(self.target_per_class, int) and self.target_per_class >= 1)):
            raise ConfigError(f"target_per_class must be 'auto' or a positive integer, got {self.target_per_class!r}")
        self.encoding()

    def encoding(self):
        return EncodingConfig(self.image_edge, self.window_length, self.stencil_points)

    @property
    def augmentation_tag(self):
        tags = [t for t, on in (("MA", self.ma), ("RE", self.re)) if on]
        return ", ".join(tags) if tags else "-"


def resolve_target(counts, target):
    """``auto`` keeps every image of the second largest class."""
    if target != "auto":
        return int(target)
    ordered = sorted(counts.values(), reverse=True)
    return ordered[1] if len(ordered) > 1 else ordered[0]


def run_once(spec, corpus, repetition, out_dir=None):
    """One repetition of one row; returns ``(report, history)``."""
    seed = derive_seed(spec.master_seed, spec.row_index, repetition)
    images = build_image_set(corpus, spec.encoding(), ma_window=spec.augment.ma_window if spec.ma else None)
    classes = sorted({s.label for s in corpus})
    target = resolve_target(images.class_counts(), spec.target_per_class)
    aug = replace(spec.augment, rng_seed=derive_seed(seed, 1))
    balanced = balance(images, BalanceConfig(target, derive_seed(seed, 2), aug), classes)
    train_set, test_set = split(balanced, spec.test_fraction, derive_seed(seed, 3))
    if len(train_set) == 0 or len(test_set) == 0:
        raise DataError(f"experiment {spec.experiment}: split left an empty side "
                        f"({len(train_set)} train / {len(test_set)} test)")
    net_spec = NetworkSpec(default_layers(len(classes)), spec.image_edge, len(classes))
    net = init_network(net_spec, derive_seed(seed, 4), classes)
    tcfg = replace(spec.train, rng_seed=derive_seed(seed, 5), random_erase=spec.re,
                   augment=replace(spec.augment, rng_seed=derive_seed(seed, 6)))
    net, history = train(net, train_set, tcfg, eval_set=test_set)
    report = evaluate(net, test_set)
    report.update(train_size=len(train_set), test_size=len(test_set), target_per_class=target)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        stem = f"exp{spec.experiment}_rep{repetition}"
        save_checkpoint(os.path.join(out_dir, f"{stem}_model.bin"), net)
        emit_plots(history, out_dir, prefix=f"{stem}_")
        with open(os.path.join(out_dir, f"{stem}_report.json"), "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    return report, history


def run_experiment(spec, corpus, out_dir=None):
    """All repetitions of one row. Returns ``(row, reports, histories)``."""
    if not corpus:
        raise DataError("empty corpus")
    for s in corpus:
        if len(s) < spec.window_length:
            raise DataError(f"series {s.id!r} ({len(s)} samples) shorter than window {spec.window_length}")
    reports, histories = [], []
    for rep in range(spec.repetitions):
        try:
            report, history = run_once(spec, corpus, rep, out_dir)
        except (ConfigError, DataError) as exc:
            raise type(exc)(f"experiment {spec.experiment}, repetition {rep}: {exc}") from exc
        log.info("experiment %s rep %d: accuracy %.3f macro F1 %.3f", spec.experiment, rep,
                 report["accuracy"], report["macro_f1"])
        reports.append(report)
        histories.append(history)
    acc = np.array([r["accuracy"] for r in reports])
    f1 = np.array([r["macro_f1"] for r in reports])
    row = {
        "experiment": spec.experiment,
        "window_length": spec.window_length,
        "data_augmentation": spec.augmentation_tag,
        "image_edge": spec.image_edge,
        "accuracy": float(acc.mean()),
        "f1": float(f1.mean()),
        "accuracy_std": float(acc.std()),
        "f1_std": float(f1.std()),
        "repetitions": spec.repetitions,
    }
    return row, reports, histories


def _fmt(v):
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def write_rows(path, rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c, "")) for c in columns])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def emit_plots(history, out_dir, prefix=""):
    """Per-epoch CSVs: ``accuracy.csv`` and ``scores.csv`` (precision/recall/macro F1)."""
    if not history:
        raise EmptyHistory("no training history to plot")
    os.makedirs(out_dir, exist_ok=True)
    paths = (os.path.join(out_dir, f"{prefix}accuracy.csv"), os.path.join(out_dir, f"{prefix}scores.csv"))
    write_rows(paths[0], history, ACCURACY_COLUMNS)
    write_rows(paths[1], history, SCORE_COLUMNS)
    return paths


def grid_specs(master_seed=0, base=None, rows=None):
    """ExperimentSpecs for the fourteen default grid rows; ``base`` supplies shared settings."""
    base = dict(base or {})
    specs = []
    for idx, (lw, aug, edge) in enumerate(DEFAULT_GRID):
        if rows and idx + 1 not in rows:
            continue
        specs.append(ExperimentSpec(**dict(base, experiment=str(idx + 1), window_length=lw, image_edge=edge,
                                           ma=aug, re=aug, master_seed=master_seed, row_index=idx)))
    return specs


def specs_from_config(cfg, master_seed, rows=None):
    exp = dict(cfg.get("experiment", {}))
    enc = cfg.get("encoding", {})
    base = {
        "stencil_points": enc.get("stencil_points", 3),
        "repetitions": exp.get("repetitions", 3),
        "test_fraction": exp.get("test_fraction", 0.2),
        "target_per_class": cfg.get("balance", {}).get("target_per_class", "auto"),
        "train": TrainConfig.from_dict(cfg.get("train", {})),
        "augment": AugmentConfig.from_dict(cfg.get("augment", {})),
    }
    grid = exp.get("grid", "default")
    if grid == "default":
        return grid_specs(master_seed, base, rows)
    if not isinstance(grid, list):
        raise ConfigError("experiment.grid must be 'default' or a list of rows")
    specs = []
    for idx, row in enumerate(grid):
        if rows and idx + 1 not in rows:
            continue
        fields = dict(base)
        fields.update({k: v for k, v in row.items() if k in ExperimentSpec.__dataclass_fields__})
        fields.setdefault("experiment", str(idx + 1))
        fields.update(master_seed=master_seed, row_index=idx)
        if "image_edge" not in row and "image_edge" in enc:
            fields["image_edge"] = enc["image_edge"]
        specs.append(ExperimentSpec(**fields))
    return specs


def corpus_from_config(cfg):
    from .dataset import SyntheticSpec, generate_synthetic, load_corpus

    syn = cfg.get("synthetic", {})
    if "corpus" in syn:
        return load_corpus(syn["corpus"])
    if "specs" in syn:
        return [generate_synthetic(SyntheticSpec.from_dict(d)) for d in syn["specs"]]
    return default_corpus(syn.get("seed", 2024), tuple(syn.get("lengths", (962, 137, 122))))


def run_grid(specs, corpus, out_dir):
    """Run every row, writing ``results.csv`` plus per-repetition artefacts."""
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for spec in specs:
        row, _, _ = run_experiment(spec, corpus, os.path.join(out_dir, f"exp{spec.experiment}"))
        rows.append(row)
        write_rows(os.path.join(out_dir, "results.csv"), rows, RESULT_COLUMNS)
    return rows
