"""Command-line front end.

Subcommands: transform-plot, gradcheck, train, noise-bench, bounds, lemma2-mc.
Values from ``--config FILE`` (JSON) override flags. Exit codes: 0 success,
1 a check failed, 2 bad configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from .data import ParseError
from .experiments import (ConfigError, GradcheckConfig, DeviationCheckConfig, NoiseBenchConfig,
                          TrainCmdConfig, TransformPlotConfig, build_config, dumps, merge,
                          run_bounds, run_gradcheck, run_deviation_check, run_noise_bench, run_train,
                          transform_plot_rows)
from .model import save_checkpoint
from .optim import TrainingDiverged

log = logging.getLogger("expoloss")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2


def _common(p, multi_e=True):
    p.add_argument("--loss", choices=["logistic", "hinge", "softmax"])
    if multi_e:
        p.add_argument("--e", type=float, action="append", help="exponent (repeatable)")
    else:
        p.add_argument("--e", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--out", type=Path)
    p.add_argument("--config", type=Path, help="JSON document overriding flags")


def _data_flags(p):
    p.add_argument("--dataset", choices=["gaussians", "outlier-gaussians", "blobs", "mnist", "csv"])
    p.add_argument("--data-path")
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--separation", type=float)
    p.add_argument("--classes", type=int)
    p.add_argument("--normalize", action="store_true", default=None)
    p.add_argument("--data-seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--warmup-frac", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--optimizer", choices=["sgd", "adam"])
    p.add_argument("--hidden", type=int, action="append", help="hidden layer width (repeatable)")
    p.add_argument("--seeds", type=int, help="number of seeds")
    p.add_argument("--seed", type=int, help="first seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expoloss", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform-plot", help="CSV of transformed logistic/hinge loss curves")
    _common(p)
    p.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--steps", type=int)

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference loss gradients")
    _common(p)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="train one configuration, metrics as JSON lines on stdout")
    _common(p, multi_e=False)
    _data_flags(p)
    p.add_argument("--noise-rate", type=float)
    p.add_argument("--save-model", type=Path)

    p = sub.add_parser("noise-bench", help="accuracy grid over e, noise rate and seed")
    _common(p)
    _data_flags(p)
    p.add_argument("--noise-rate", type=float, action="append", help="noise rate (repeatable)")
    p.add_argument("--reference", help="attach published reference rows for this dataset")

    p = sub.add_parser("bounds", help="confidence of both uniform-convergence bounds")
    p.add_argument("query", nargs="?", type=Path, help="JSON query (object or list)")
    p.add_argument("--config", type=Path, help="alias for the query file")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("lemma2-mc", help="Monte-Carlo check of the risk-difference deviation bound")
    _common(p, multi_e=False)
    p.add_argument("--N", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--n-reference", type=int)
    p.add_argument("--seed", type=int)
    return parser


def _pick(args, mapping: dict) -> dict:
    """Flag values that were actually given, placed at their config paths."""
    out: dict = {}
    for flag, path in mapping.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        node = out
        *parents, leaf = path.split(".")
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    return out


_TRAIN_FLAGS = {
    "loss": "loss", "e": "e", "c": "c", "noise_rate": "noise_rate", "seeds": "seeds", "seed": "seed",
    "dataset": "data.name", "data_path": "data.path", "n_train": "data.n_train", "n_test": "data.n_test",
    "dim": "data.d", "separation": "data.separation", "classes": "data.n_classes",
    "normalize": "data.normalize", "data_seed": "data.seed",
    "epochs": "train.epochs", "warmup_frac": "train.warmup_fraction", "lr": "train.lr",
    "batch_size": "train.batch_size", "optimizer": "train.optimizer", "hidden": "train.hidden",
}


def _resolve(cls, args, mapping, extra=None):
    doc = merge(_pick(args, mapping), extra or {})
    if getattr(args, "config", None) is not None:
        try:
            doc = merge(doc, json.loads(args.config.read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    return build_config(cls, doc)


def _write(path: Path | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None


def cmd_transform_plot(args) -> int:
    extra = {"lo": args.range[0], "hi": args.range[1]} if args.range else None
    cfg = _resolve(TransformPlotConfig, args, {"e": "e", "c": "c", "steps": "steps"}, extra)
    header, rows = transform_plot_rows(cfg)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows([[repr(float(v)) for v in r] for r in rows])
    _write(args.out, buf.getvalue())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = _resolve(GradcheckConfig, args, {"loss": "loss", "e": "e", "c": "c",
                                           "samples": "samples", "seed": "seed"})
    doc = run_gradcheck(cfg)
    _write(args.out, dumps(doc))
    return EXIT_OK if doc["passed"] else EXIT_CHECK


def cmd_train(args) -> int:
    cfg = _resolve(TrainCmdConfig, args, _TRAIN_FLAGS)
    stream = sys.stdout if args.out is not None else sys.stderr

    def emit(m):
        rec = {k: getattr(m, k) for k in ("epoch", "train_loss", "train_acc", "test_acc", "effective_e")}
        stream.write(json.dumps(rec) + "\n")
        stream.flush()

    doc, model = run_train(cfg, on_epoch=emit)
    _write(args.out, dumps(doc))
    if args.save_model is not None:
        save_checkpoint(model, args.save_model)
    return EXIT_OK


def cmd_noise_bench(args) -> int:
    mapping = dict(_TRAIN_FLAGS, reference="reference")
    cfg = _resolve(NoiseBenchConfig, args, mapping)
    doc = run_noise_bench(cfg)
    _write(args.out, dumps(doc))
    return EXIT_OK


def cmd_bounds(args) -> int:
    path = args.query or args.config
    if path is None:
        raise ConfigError("bounds needs a query file")
    try:
        query = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read query {path}: {exc}") from None
    doc = run_bounds(query)
    _write(args.out, dumps(doc))
    return EXIT_OK if doc["passed"] else EXIT_CHECK


def cmd_deviation_check(args) -> int:
    mapping = {"loss": "loss", "e": "e", "c": "c", "N": "N", "epsilon": "epsilon", "rho": "rho",
               "trials": "trials", "n_reference": "n_reference", "seed": "seed"}
    cfg = _resolve(DeviationCheckConfig, args, mapping)
    doc = run_deviation_check(cfg)
    _write(args.out, dumps(doc))
    return EXIT_OK if doc["passed"] else EXIT_CHECK


COMMANDS = {
    "transform-plot": cmd_transform_plot,
    "gradcheck": cmd_gradcheck,
    "train": cmd_train,
    "noise-bench": cmd_noise_bench,
    "bounds": cmd_bounds,
    "lemma2-mc": cmd_deviation_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ParseError) as exc:
        log.error("%s", exc)
        print(json.dumps({"error": "configuration", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(json.dumps({"error": "diverged", "message": str(exc)}), file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
