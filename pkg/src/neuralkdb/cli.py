"""Command-line front end: ``train``, ``predict``, ``eval``, ``sweep``, ``inspect``.

Exit codes: 0 success, 1 usage error, 2 data or model error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .classifiers import K_KINDS, fit, load_model, normalize_kind, predict_tokens, save_model
from .embeddings import TrainConfig
from .errors import DataError, ModelFormatError
from .evalharness import SWEEP_PARAMETERS, SplitSpec, evaluate, parse_classifiers, sweep
from .infotheory import cmi_matrix, mi_vector
from .structure import build_empty_structure, build_kdb_structure, build_tan_structure
from .tabular import PreprocessSpec, load_csv, prepare, read_csv_rows

log = logging.getLogger("neuralkdb")

DEFAULT_SEED = 0
EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n\n{self.format_help()}")


def _data_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--data", required=True, help="CSV file with a header row")
    g.add_argument("--label-col", default=None,
                   help="label column name (default: last column)")
    g.add_argument("--bins", type=int, default=5,
                   help="equal-frequency bins for numeric columns (default: %(default)s)")
    g.add_argument("--drop-columns", default="",
                   help="comma-separated columns to drop before training (default: none)")


def _train_flags(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    g = p.add_argument_group("training")
    g.add_argument("--k", type=int, default=2, help="dependence order for kdb/neuralkdb (default: %(default)s)")
    g.add_argument("--dim", type=int, default=d.dim, help="embedding dimension (default: %(default)s)")
    g.add_argument("--batch", type=int, default=d.batch_size, help="mini-batch size (default: %(default)s)")
    g.add_argument("--epochs", type=int, default=d.epochs, help="training epochs (default: %(default)s)")
    g.add_argument("--lr", type=float, default=d.learning_rate, help="SGD step size (default: %(default)s)")
    g.add_argument("--init-scale", type=float, default=d.init_scale,
                   help="embeddings start uniform in [-s, s] (default: %(default)s)")
    g.add_argument("--seed", type=int, default=DEFAULT_SEED,
                   help="seed for initialization, shuffling and splits (default: %(default)s)")


def _split_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("holdout")
    g.add_argument("--repeats", type=int, default=5, help="holdout repetitions (default: %(default)s)")
    g.add_argument("--test-frac", type=float, default=0.3, help="test fraction (default: %(default)s)")
    g.add_argument("--no-stratify", action="store_true", help="plain random splits (default: stratified)")
    g.add_argument("--out", default="-", help="per-repeat CSV report path (default: stdout)")
    g.add_argument("--json", default=None,
                   help="aggregate JSON path (default: next to --out with a .json suffix)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="neuralkdb", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="errors only")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    p = sub.add_parser("train", help="fit one classifier on a CSV and save it as JSON")
    _data_flags(p)
    p.add_argument("--classifier", default="neuralkdb",
                   help="neuralkdb, neuralnb, nn, kdb, tan or nb (default: %(default)s)")
    _train_flags(p)
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--print-nll", action="store_true",
                   help="print 'epoch,mean_nll' CSV lines while training (neural kinds)")

    p = sub.add_parser("predict", help="label the rows of a CSV with a saved model")
    p.add_argument("--model", required=True, help="model JSON written by train")
    p.add_argument("--data", required=True, help="CSV with the training feature columns")
    p.add_argument("--out", default="-", help="prediction CSV path (default: stdout)")

    p = sub.add_parser("eval", help="repeated holdout accuracy of several classifiers")
    _data_flags(p)
    p.add_argument("--classifiers", default="nb,kdb:2,neuralkdb:2",
                   help="comma list, kind[:k] (default: %(default)s)")
    _train_flags(p)
    _split_flags(p)

    p = sub.add_parser("sweep", help="evaluate a classifier over values of one parameter")
    _data_flags(p)
    p.add_argument("--classifiers", "--classifier", dest="classifiers", default="neuralkdb",
                   help="comma list of kinds to sweep (default: %(default)s)")
    p.add_argument("--param", required=True, choices=SWEEP_PARAMETERS, help="parameter to vary")
    p.add_argument("--values", required=True, help="comma-separated integer values")
    _train_flags(p)
    _split_flags(p)

    p = sub.add_parser("inspect", help="print MI / CMI tables and the learned structure")
    _data_flags(p)
    p.add_argument("--structure", action="store_true", help="print the dependence DAG as well")
    p.add_argument("--classifier", default="kdb", help="structure family: kdb, tan or nb (default: %(default)s)")
    p.add_argument("--k", type=int, default=2, help="dependence order for kdb (default: %(default)s)")
    return parser


def _config(args) -> TrainConfig:
    return TrainConfig(dim=args.dim, batch_size=args.batch, epochs=args.epochs,
                       learning_rate=args.lr, seed=args.seed, init_scale=args.init_scale)


def _preprocess_spec(args) -> PreprocessSpec:
    dropped = tuple(c.strip() for c in args.drop_columns.split(",") if c.strip())
    return PreprocessSpec(num_bins=args.bins, dropped_columns=dropped)


def _load_table(args):
    label = args.label_col
    if label is None:
        header, _ = read_csv_rows(args.data)
        label = header[-1]
    return load_csv(args.data, label)


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _cmd_train(args) -> None:
    kind = normalize_kind(args.classifier)
    config = _config(args)
    spec = _preprocess_spec(args)
    dataset, pre = prepare(_load_table(args), spec)
    log.info("training %s on %d rows, %d features", kind, dataset.n, dataset.m)

    def show(epoch, nll):
        print(f"{epoch},{nll!r}", flush=True)

    if args.print_nll:
        print("epoch,mean_nll")
    model = fit(dataset, kind, args.k, config, on_epoch=show if args.print_nll else None)
    model.preprocessor = pre
    save_model(model, args.model)
    log.info("model written to %s", args.model)


def _cmd_predict(args) -> None:
    model = load_model(args.model)
    header, rows = read_csv_rows(args.data)
    if model.preprocessor is not None:
        tokens = [model.preprocessor.feature_tokens(header, r) for r in rows]
    else:
        pos = {c: j for j, c in enumerate(header)}
        missing = [n for n in model.feature_names if n not in pos]
        if missing:
            raise DataError(f"{args.data}: missing feature columns {missing}")
        tokens = [tuple(r[pos[n]] or "" for n in model.feature_names) for r in rows]
    labels, post = predict_tokens(model, tokens)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row_index", "predicted_label"] + [f"p_{c}" for c in model.label_alphabet])
    for r, (lab, p) in enumerate(zip(labels, post)):
        w.writerow([r, lab] + [repr(float(v)) for v in p])
    _write(args.out, buf.getvalue())


def _write_report(args, report) -> None:
    _write(args.out, report.to_csv())
    json_path = args.json
    if json_path is None and args.out != "-":
        json_path = str(Path(args.out).with_suffix(".json"))
    if json_path is not None:
        _write(json_path, report.to_json())
    log.info("summary\n%s", report.summary())


def _split_spec(args) -> SplitSpec:
    return SplitSpec(repeats=args.repeats, test_fraction=args.test_frac, seed=args.seed,
                     stratified=not args.no_stratify)


def _cmd_eval(args) -> None:
    classifiers = parse_classifiers(args.classifiers, args.k, _config(args))
    table = _load_table(args)
    report = evaluate(table, classifiers, _split_spec(args), _preprocess_spec(args),
                      name=Path(args.data).stem)
    _write_report(args, report)


def _cmd_sweep(args) -> None:
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"--values must be integers, got {args.values!r}") from None
    if not values:
        raise ValueError("--values is empty")
    kinds = [normalize_kind(c.split(":")[0]) for c in args.classifiers.split(",") if c.strip()]
    table = _load_table(args)
    report = None
    for kind in kinds:
        part = sweep(table, kind, args.param, values, _split_spec(args), args.k, _config(args),
                     _preprocess_spec(args), name=Path(args.data).stem)
        if report is None:
            report = part
        else:
            report.records.extend(part.records)
            report.metadata["classifiers"].extend(part.metadata["classifiers"])
    _write_report(args, report)


def _cmd_inspect(args) -> None:
    dataset, _ = prepare(_load_table(args), _preprocess_spec(args))
    names = dataset.feature_names
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["feature", "mi"])
    for n, v in zip(names, mi_vector(dataset)):
        w.writerow([n, repr(float(v))])
    out.write("\n")
    w.writerow(["cmi"] + list(names))
    for n, row in zip(names, cmi_matrix(dataset)):
        w.writerow([n] + [repr(float(v)) for v in row])
    if args.structure:
        kind = normalize_kind(args.classifier)
        if kind in K_KINDS:
            s = build_kdb_structure(dataset, args.k)
        elif kind == "tan":
            s = build_tan_structure(dataset)
        else:
            s = build_empty_structure(dataset.m)
        out.write("\n" + s.describe(names) + "\n\n" + s.adjacency_json(names) + "\n")
    sys.stdout.write(out.getvalue())


COMMANDS = {"train": _cmd_train, "predict": _cmd_predict, "eval": _cmd_eval,
            "sweep": _cmd_sweep, "inspect": _cmd_inspect}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    level = logging.ERROR if args.quiet else (logging.DEBUG if args.verbose else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr,
                        force=True)
    resolved = {k: v for k, v in sorted(vars(args).items())}
    log.info("%s config: %s", args.command, json.dumps(resolved, sort_keys=True))
    try:
        COMMANDS[args.command](args)
    except (DataError, ModelFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main() -> None:
    sys.exit(run())
