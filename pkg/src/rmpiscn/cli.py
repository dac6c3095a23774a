"""Command-line entry point: ``rmpiscn {gen-data,train,compare,predict}``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure,
3 training stopped because no candidate passed the supervisory test.

Wall-clock times are left out of every output file unless ``--timing`` is
given, so that repeated runs produce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import gen_db1, gen_db2, write_csv
from .experiment import ConfigError, ExperimentConfig, compare, run_one
from .metrics import rmse
from .trainers import TRAINERS, SCNModel, Status, TrainingError, predict

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_STALLED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; 2 is reserved for runtime errors here.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _json(doc) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v
    return json.dumps(clean(doc), indent=2, sort_keys=True) + "\n"


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig().validate()
    if getattr(args, "algorithm", None):
        if args.algorithm not in TRAINERS:
            raise UsageError(f"unknown algorithm {args.algorithm!r}; valid names: {', '.join(TRAINERS)}")
        cfg = replace(cfg, algorithms=(args.algorithm,))
    return cfg


def _err(msg: str) -> None:
    print(f"rmpiscn: {msg}", file=sys.stderr)


# --- subcommands -----------------------------------------------------------

def cmd_gen_data(args) -> int:
    out = Path(args.out)
    if args.dataset == "db1":
        n = 1500 if args.n is None else args.n
        if n < 2:
            raise UsageError(f"db1 needs --n >= 2, got {n}")
        ds = gen_db1(n)
        targets = [(out / "db1.csv", ds)]
    else:
        trainval, test = gen_db2(seed=args.seed if args.seed is not None else 0)
        targets = [(out / "db2_trainval.csv", trainval), (out / "db2_test.csv", test)]
    for path, ds in targets:
        out.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f".{path.name}.tmp")
        write_csv(ds, tmp)
        os.replace(tmp, path)
        print(f"wrote {path} ({ds.n} rows)")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    algorithm = cfg.algorithms[0]
    result = run_one(cfg, algorithm, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "model.json", json.dumps(result.model.to_dict(), indent=1) + "\n")
    tmp = out / ".trace.csv.tmp"
    result.trace.write_csv(tmp, timing=args.timing)
    os.replace(tmp, out / "trace.csv")
    summary = {"config": cfg.to_dict(), "run": result.record(args.timing)}
    _atomic_write(out / "summary.json", _json(summary))
    s = result.summary
    print(f"{algorithm} seed={seed}: {result.trace.status.value}, {result.model.n_nodes} nodes, "
          f"train RMSE {s.train_rmse:.6g}, test RMSE {s.test_rmse:.6g}")
    if result.trace.status is Status.STALLED:
        _err("stalled: no candidate passed the supervisory test after all retries")
        return EXIT_STALLED
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    seeds = [args.seed] if args.seed is not None else None

    def progress(r):
        print(f"  {r.algorithm} seed={r.seed}: {r.trace.status.value}, {r.model.n_nodes} nodes, "
              f"train RMSE {r.summary.train_rmse:.6g}", file=sys.stderr)

    comp = compare(cfg, seeds=seeds, progress=None if args.quiet else progress)
    table = comp.table(args.timing)
    out = Path(args.out)
    _atomic_write(out / "compare.txt", table + "\n")
    _atomic_write(out / "compare.json", _json({"config": cfg.to_dict(), **comp.record(args.timing)}))
    print(table)
    return EXIT_OK


def _read_features(path: Path, d: int, m: int):
    """Inputs (and targets, when present) from a CSV with an optional header row."""
    with path.open(encoding="utf-8") as fh:
        first = fh.readline().split(",")
    try:
        [float(c) for c in first]
        header = 0
    except ValueError:
        header = 1
    A = np.loadtxt(path, delimiter=",", skiprows=header, ndmin=2)
    if A.shape[1] == d:
        return A, None
    if A.shape[1] == d + m:
        return A[:, :d], A[:, d:]
    raise UsageError(f"{path}: {A.shape[1]} columns; model expects {d} inputs "
                     f"(optionally followed by {m} targets)")


def cmd_predict(args) -> int:
    model = SCNModel.load(args.model)
    X, Y = _read_features(Path(args.input), model.d, model.m)
    Y_hat = predict(model, X)
    lines = [",".join(f"y{j + 1}" for j in range(model.m))]
    lines += [",".join(repr(float(v)) for v in row) for row in Y_hat]
    text = "\n".join(lines) + "\n"
    if args.out:
        _atomic_write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    if Y is not None:
        print(f"RMSE {rmse(Y_hat, Y):.6g} over {len(Y)} rows", file=sys.stderr)
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rmpiscn", description="Incremental random-basis regression networks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a synthetic benchmark dataset as CSV")
    g.add_argument("dataset", choices=["db1", "db2"])
    g.add_argument("--n", type=int, help="db1 grid size (default 1500)")
    g.add_argument("--seed", type=int, help="db2 excitation seed (default 0)")
    g.add_argument("--out", default=".", help="output directory")
    g.set_defaults(func=cmd_gen_data)

    for name, func, help_ in (("train", cmd_train, "train one model"),
                              ("compare", cmd_compare, "run every algorithm over every seed")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="JSON experiment config (defaults apply when omitted)")
        s.add_argument("--seed", type=int, help="run seed (train: default first config seed; "
                                                "compare: restrict to this seed)")
        s.add_argument("--algorithm", help=f"override the algorithm list: {', '.join(TRAINERS)}")
        s.add_argument("--out", default="out", help="output directory")
        s.add_argument("--timing", action="store_true",
                       help="record wall-clock times (outputs are then no longer reproducible)")
        if name == "compare":
            s.add_argument("--quiet", action="store_true", help="no per-run progress on stderr")
        s.set_defaults(func=func)

    q = sub.add_parser("predict", help="evaluate a saved model on a CSV of inputs")
    q.add_argument("--model", required=True, help="model.json written by train")
    q.add_argument("--input", required=True, help="CSV of inputs, optionally followed by targets")
    q.add_argument("--out", help="output CSV (stdout when omitted)")
    q.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    except (TrainingError, OSError, ValueError) as exc:
        _err(str(exc))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
