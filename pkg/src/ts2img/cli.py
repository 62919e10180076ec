"""``ts2img`` command line.

Every subcommand accepts ``--config FILE``: one JSON document with optional
sections ``synthetic``, ``encoding``, ``augment``, ``balance``, ``train`` and
``experiment``. Command-line flags override the file. The master seed is
taken from ``--seed``, else the ``TS2IMG_SEED`` environment variable, else
the config.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 anything else.
"""
import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from . import __version__
from .augment import AugmentConfig
from .classifier import (
    NetworkSpec,
    TrainConfig,
    default_layers,
    evaluate,
    init_network,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .dataset import (
    BalanceConfig,
    LabeledImageSet,
    SyntheticSpec,
    augment_set,
    balance,
    build_image_set,
    default_specs,
    generate_synthetic,
    load_corpus,
    load_set,
    save_corpus,
    save_set,
    split,
)
from .encoder import EncodingConfig
from .errors import ConfigError, DataError
from .experiment import (
    RESULT_COLUMNS,
    corpus_from_config,
    derive_seed,
    emit_plots,
    resolve_target,
    run_grid,
    specs_from_config,
    write_rows,
)

log = logging.getLogger("ts2img")

SECTIONS = ("synthetic", "encoding", "augment", "balance", "train", "experiment")
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4


def load_config(path):
    if not path:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(cfg) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}; expected {list(SECTIONS)}")
    for name, section in cfg.items():
        if not isinstance(section, dict):
            raise ConfigError(f"{path}: section {name!r} must be an object")
    return cfg


def master_seed(args, cfg, section="experiment", key="master_seed", default=0):
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("TS2IMG_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"TS2IMG_SEED must be an integer, got {env!r}") from None
    return int(cfg.get(section, {}).get(key, default))


def _overlay(section, **flags):
    out = dict(section)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _encoding(args, cfg):
    d = _overlay(cfg.get("encoding", {}), image_edge=args.image_edge, window_length=args.window_length,
                 stencil_points=args.stencil_points)
    return EncodingConfig.from_dict(d)


def _augment(args, cfg, seed):
    d = _overlay(cfg.get("augment", {}), ma_window=getattr(args, "ma_window", None),
                 re_probability=getattr(args, "re_probability", None))
    return replace(AugmentConfig.from_dict(d), rng_seed=seed)


def _parse_target(value):
    if value is None or value == "auto":
        return value
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"target must be a positive integer or 'auto', got {value!r}") from None


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(args, cfg):
    syn = dict(cfg.get("synthetic", {}))
    if args.spec:
        with open(args.spec) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.spec}: invalid JSON ({exc})") from None
        syn["specs"] = data.get("specs", data) if isinstance(data, dict) else data
    if "specs" in syn:
        specs = [SyntheticSpec.from_dict(d) for d in syn["specs"]]
    else:
        lengths = tuple(args.lengths or syn.get("lengths", (962, 137, 122)))
        if len(lengths) != 3:
            raise ConfigError("--lengths needs three values (one per default class)")
        specs = default_specs(master_seed(args, cfg, "synthetic", "seed", 2024), lengths)
    corpus = [generate_synthetic(s) for s in specs]
    save_corpus(args.out, corpus)
    log.info("wrote %d series to %s", len(corpus), args.out)


def cmd_encode(args, cfg):
    config = _encoding(args, cfg)
    corpus = load_corpus(args.corpus)
    ma = args.ma_window if args.ma_window is not None else (
        cfg.get("augment", {}).get("ma_window", 3) if args.ma else None)
    ds = build_image_set(corpus, config, ma_window=ma)
    path = save_set(ds, args.out, fmt="png" if args.png else "pgm")
    log.info("encoded %d images into %s", len(ds), path)


def cmd_augment(args, cfg):
    ds = load_set(args.data)
    seed = master_seed(args, cfg, "augment", "rng_seed")
    variants = augment_set(ds, _augment(args, cfg, seed), copies=args.copies, ops=tuple(args.ops))
    out = LabeledImageSet.concat([ds, variants]) if args.keep_originals else variants
    path = save_set(out, args.out, fmt="png" if args.png else "pgm")
    log.info("wrote %d images (%d variants) to %s", len(out), len(variants), path)


def cmd_balance(args, cfg):
    ds = load_set(args.data)
    bal = cfg.get("balance", {})
    target = _parse_target(args.target) or bal.get("target_per_class", "auto")
    target = resolve_target(ds.class_counts(), target)
    seed = master_seed(args, cfg, "balance", "rng_seed")
    aug = _augment(args, cfg, derive_seed(seed, 1))
    config = BalanceConfig(target, seed, aug, float(bal.get("flip_probability", 0.5)))
    out = balance(ds, config)
    path = save_set(out, args.out, fmt="png" if args.png else "pgm")
    log.info("balanced to %d per class: %s", target, path)


def _write_manifest(path, dataset):
    with open(path, "w") as fh:
        for rec, lab in zip(dataset.manifest, dataset.labels):
            fh.write(json.dumps(dict(rec, label=lab), sort_keys=True) + "\n")


def cmd_split(args, cfg):
    ds = load_set(args.data)
    frac = args.test_fraction if args.test_fraction is not None else \
        float(cfg.get("experiment", {}).get("test_fraction", 0.2))
    train_set, test_set = split(ds, frac, master_seed(args, cfg))
    os.makedirs(args.out, exist_ok=True)
    for name, part in (("train.jsonl", train_set), ("test.jsonl", test_set)):
        _write_manifest(os.path.join(args.out, name), part)
    log.info("split %d images: %d train, %d test (%d dropped at block edges)",
             len(ds), len(train_set), len(test_set), len(ds) - len(train_set) - len(test_set))


def cmd_train(args, cfg):
    ds = load_set(args.data)
    tc = _overlay(cfg.get("train", {}), epochs=args.epochs, batch_size=args.batch_size,
                  learning_rate=args.learning_rate)
    seed = master_seed(args, cfg, "train", "rng_seed")
    config = replace(TrainConfig.from_dict(tc), rng_seed=derive_seed(seed, 5))
    if args.random_erase:
        config = replace(config, random_erase=True, augment=_augment(args, cfg, derive_seed(seed, 6)))
    classes = sorted(set(ds.labels))
    spec = NetworkSpec(default_layers(len(classes)), ds.edge, len(classes))
    net = init_network(spec, derive_seed(seed, 4), classes)
    eval_set = load_set(args.eval) if args.eval else None

    def progress(row):
        log.info("epoch %d loss %.4f accuracy %.3f", row["epoch"], row["loss"], row["accuracy"])

    net, history = train(net, ds, config, eval_set=eval_set, progress=progress)
    save_checkpoint(args.out, net)
    if args.history:
        with open(args.history, "w") as fh:
            json.dump(history, fh, indent=1)
    log.info("saved model to %s", args.out)


def _row_fields(dataset):
    """Window length, augmentation tag and edge as recorded in the manifest."""
    lengths, ops = set(), set()
    for rec in dataset.manifest:
        for op, params, _ in rec.get("lineage", []):
            ops.add(op)
            if op == "encode":
                lengths.add(params["window_length"])
    tags = [t for t, op in (("MA", "moving_average"), ("RE", "random_erase_black")) if op in ops]
    return {
        "window_length": lengths.pop() if len(lengths) == 1 else "",
        "data_augmentation": ", ".join(tags) if tags else "-",
        "image_edge": dataset.edge,
    }


def cmd_eval(args, cfg):
    net = load_checkpoint(args.model)
    ds = load_set(args.data)
    report = evaluate(net, ds)
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    if args.row_csv:
        row = dict(_row_fields(ds), experiment=args.experiment, accuracy=report["accuracy"],
                   f1=report["macro_f1"], accuracy_std=0.0, f1_std=0.0, repetitions=1)
        write_rows(args.row_csv, [row], RESULT_COLUMNS)
    print(f"accuracy {report['accuracy']:.4f}  macro F1 {report['macro_f1']:.4f}")


def cmd_experiment(args, cfg):
    seed = master_seed(args, cfg)
    exp = dict(cfg.get("experiment", {}))
    if args.repetitions is not None:
        exp["repetitions"] = args.repetitions
    if args.epochs is not None:
        cfg = dict(cfg, train=dict(cfg.get("train", {}), epochs=args.epochs))
    cfg = dict(cfg, experiment=exp)
    specs = specs_from_config(cfg, seed, rows=set(args.rows) if args.rows else None)
    if not specs:
        raise ConfigError("no experiment rows selected")
    corpus = load_corpus(args.corpus) if args.corpus else corpus_from_config(cfg)
    rows = run_grid(specs, corpus, args.out)
    for row in rows:
        print(f"{row['experiment']:>3}  lw={row['window_length']:<3} {row['data_augmentation']:<7} "
              f"edge={row['image_edge']:<4} acc={row['accuracy']:.3f}±{row['accuracy_std']:.3f} "
              f"f1={row['f1']:.3f}")


def cmd_plot_data(args, cfg):
    try:
        with open(args.history) as fh:
            history = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.history}: invalid JSON ({exc})") from None
    if isinstance(history, dict):
        history = history.get("history", [])
    for p in emit_plots(history, args.out, args.prefix):
        print(p)


# --------------------------------------------------------------------------
# parser


def build_parser():
    p = argparse.ArgumentParser(prog="ts2img", description="Encode time series as images and classify them.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="master seed (overrides TS2IMG_SEED and the config)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def enc_flags(sp):
        sp.add_argument("--image-edge", type=int)
        sp.add_argument("--window-length", type=int)
        sp.add_argument("--stencil-points", type=int, choices=(3, 5, 7))

    def aug_flags(sp):
        sp.add_argument("--ma-window", type=int)
        sp.add_argument("--re-probability", type=float)

    sp = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    sp.add_argument("--spec", help="JSON list of synthetic series specs")
    sp.add_argument("--lengths", type=int, nargs=3, metavar="N")
    sp.add_argument("--out", required=True, help="corpus JSON to write")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("encode", parents=[common], help="encode a corpus into images + manifest")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True, help="output directory")
    enc_flags(sp)
    sp.add_argument("--ma", action="store_true", help="also encode the moving-averaged series")
    sp.add_argument("--ma-window", type=int, help="moving-average window (implies --ma)")
    sp.add_argument("--png", action="store_true", help="write PNG instead of PGM")
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("augment", parents=[common], help="write augmented variants of a set")
    sp.add_argument("--data", required=True, help="input manifest")
    sp.add_argument("--out", required=True)
    sp.add_argument("--copies", type=int, default=1)
    sp.add_argument("--ops", nargs="+", default=["random_erase_black"],
                    choices=("random_erase_black", "flip_horizontal", "flip_vertical"))
    sp.add_argument("--keep-originals", action="store_true")
    aug_flags(sp)
    sp.add_argument("--png", action="store_true")
    sp.set_defaults(func=cmd_augment)

    sp = sub.add_parser("balance", parents=[common], help="resize every class to a target count")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--target", help="images per class, or 'auto' (second largest class)")
    aug_flags(sp)
    sp.add_argument("--png", action="store_true")
    sp.set_defaults(func=cmd_balance)

    sp = sub.add_parser("split", parents=[common], help="leakage-free train/test split")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True, help="directory for train.jsonl and test.jsonl")
    sp.add_argument("--test-fraction", type=float)
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("train", parents=[common], help="train the CNN on a manifest")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True, help="checkpoint to write")
    sp.add_argument("--eval", help="manifest evaluated after every epoch")
    sp.add_argument("--history", help="write per-epoch history JSON here")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--learning-rate", type=float)
    sp.add_argument("--random-erase", action="store_true", help="erase patches in the training loader")
    sp.add_argument("--re-probability", type=float)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", parents=[common], help="score a checkpoint on a manifest")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True, help="report JSON")
    sp.add_argument("--row-csv", help="also write a one-row results CSV")
    sp.add_argument("--experiment", default="1", help="experiment label for --row-csv")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("experiment", parents=[common], help="run the results grid")
    sp.add_argument("--out", required=True)
    sp.add_argument("--corpus", help="corpus JSON (default: synthetic section of the config)")
    sp.add_argument("--rows", type=int, nargs="+", help="1-based grid rows to run")
    sp.add_argument("--repetitions", type=int)
    sp.add_argument("--epochs", type=int)
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("plot-data", parents=[common], help="history JSON -> per-epoch CSVs")
    sp.add_argument("--history", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--prefix", default="")
    sp.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        args.func(args, cfg)
    except ConfigError as exc:
        print(f"ts2img: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"ts2img: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the runtime exit code
        log.debug("unhandled error", exc_info=True)
        print(f"ts2img: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
