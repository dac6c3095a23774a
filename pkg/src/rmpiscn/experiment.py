"""Experiment configuration and the run/compare loops behind the CLI.

A config is a JSON document with three optional sections::

    {"dataset": {"source": "db1", "n": 1500},
     "trainer": {"L_max": 100, "Lambda": [0.5, 1, 5]},
     "experiment": {"algorithms": ["rmpi_scn", "scn3"], "seeds": [0, 1, 2]}}

Missing keys take the defaults below; unknown keys are rejected so typos
do not silently fall back to defaults.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .data import (
    Dataset,
    Method,
    apply_normalization,
    fit_normalization,
    gen_db1,
    gen_db2,
    load_csv,
    split_622,
    split_ratio,
)
from .metrics import RunSummary, corr_r, format_mean_std, rmse, summarize
from .trainers import SCNModel, TRAINERS, Status, TrainerConfig, TrainingTrace, predict


class ConfigError(ValueError):
    """Problem with a user-supplied configuration (reported as a usage error)."""


@dataclass(frozen=True)
class DatasetSpec:
    source: str = "db1"
    n: int = 1500
    seed: int = 0
    variant: str = "classic"
    n_trainval: int = 2400
    n_test: int = 600
    path: str | None = None
    test_path: str | None = None
    n_outputs: int = 1
    has_header: bool = False
    normalization: str = "minmax"

    def validate(self) -> DatasetSpec:
        if self.source not in ("db1", "db2", "csv"):
            raise ConfigError(f"dataset.source must be db1, db2 or csv, got {self.source!r}")
        if self.source == "csv" and not self.path:
            raise ConfigError("dataset.path is required when dataset.source is csv")
        try:
            Method(self.normalization)
        except ValueError:
            raise ConfigError(f"unknown normalization {self.normalization!r}") from None
        return self


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    algorithms: tuple[str, ...] = ("rmpi_scn",)
    seeds: tuple[int, ...] = tuple(range(10))

    def validate(self) -> ExperimentConfig:
        self.dataset.validate()
        try:
            self.trainer.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.algorithms:
            raise ConfigError("experiment.algorithms must list at least one algorithm")
        bad = [a for a in self.algorithms if a not in TRAINERS]
        if bad:
            raise ConfigError(f"unknown algorithm {bad[0]!r}; valid names: {', '.join(TRAINERS)}")
        if not self.seeds:
            raise ConfigError("experiment.seeds must be non-empty")
        return self

    def to_dict(self) -> dict:
        return {
            "dataset": asdict(self.dataset),
            "trainer": self.trainer.to_dict(),
            "experiment": {"algorithms": list(self.algorithms), "seeds": list(self.seeds)},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentConfig:
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        _reject_unknown(doc, {"dataset", "trainer", "experiment"}, "config")
        ds_doc = doc.get("dataset", {})
        _reject_unknown(ds_doc, {f.name for f in fields(DatasetSpec)}, "dataset")
        tr_doc = doc.get("trainer", {})
        _reject_unknown(tr_doc, {f.name for f in fields(TrainerConfig)}, "trainer")
        ex_doc = doc.get("experiment", {})
        _reject_unknown(ex_doc, {"algorithms", "seeds"}, "experiment")
        seeds = ex_doc.get("seeds", list(range(10)))
        if isinstance(seeds, int):
            seeds = list(range(seeds))
        algorithms = ex_doc.get("algorithms", ["rmpi_scn"])
        if isinstance(algorithms, str):
            algorithms = [algorithms]
        try:
            cfg = cls(DatasetSpec(**ds_doc), TrainerConfig(**tr_doc),
                      tuple(algorithms), tuple(int(s) for s in seeds))
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        return cfg.validate()

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        return cls.from_dict(doc)


def _reject_unknown(doc, known: set[str], section: str) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{section} section must be a JSON object")
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown {section} keys: {unknown}; valid keys: {sorted(known)}")


@dataclass(frozen=True)
class Splits:
    """Normalized train/validation/test sets plus the raw test set."""

    train: Dataset
    val: Dataset
    test: Dataset
    raw_train: Dataset
    raw_test: Dataset


def load_source(spec: DatasetSpec) -> tuple[Dataset, Dataset | None]:
    """(data, held-out test set or None) for a dataset spec."""
    if spec.source == "db1":
        return gen_db1(spec.n), None
    if spec.source == "db2":
        return gen_db2(spec.n_trainval, spec.n_test, spec.seed, spec.variant)
    data = load_csv(spec.path, spec.n_outputs, spec.has_header)
    test = load_csv(spec.test_path, spec.n_outputs, spec.has_header) if spec.test_path else None
    return data, test


def prepare(spec: DatasetSpec, seed: int, source=None) -> Splits:
    """Split by ``seed`` and normalize with parameters fitted on the training rows.

    Without a held-out test set the data is split 6:2:2; with one, the data
    is split 3:1 into training and validation.
    """
    data, test = source or load_source(spec)
    if test is None:
        sp = split_622(data, seed)
        tr_idx, va_idx = sp.train, sp.validation
        test = data.subset(sp.test)
    else:
        tr_idx, va_idx = split_ratio(data.n, 0.75, seed)
    raw_train = data.subset(tr_idx)
    params = fit_normalization(raw_train, method=spec.normalization)
    return Splits(
        train=apply_normalization(raw_train, params),
        val=apply_normalization(data.subset(va_idx), params),
        test=apply_normalization(test, params),
        raw_train=raw_train,
        raw_test=test,
    )


@dataclass
class RunResult:
    algorithm: str
    seed: int
    model: SCNModel
    trace: TrainingTrace
    summary: RunSummary

    def record(self, timing: bool) -> dict:
        doc = {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "status": self.trace.status.value,
            "nodes": self.model.n_nodes,
            "nodes_explored": self.trace.nodes_explored,
            "train_rmse": self.summary.train_rmse,
            "test_rmse": self.summary.test_rmse,
            "train_r": self.summary.train_r,
            "test_r": self.summary.test_r,
            "time_s": self.summary.time_s if timing else None,
            "pinv_violation": self.trace.pinv_violation,
        }
        return doc


def _safe_r(Y_hat, Y) -> float:
    try:
        return corr_r(Y_hat, Y)
    except ValueError:
        return float("nan")


def run_one(cfg: ExperimentConfig, algorithm: str, seed: int, source=None) -> RunResult:
    """Train ``algorithm`` on the split for ``seed`` and evaluate it on train and test."""
    splits = prepare(cfg.dataset, seed, source)
    tcfg = replace(cfg.trainer, seed=seed)
    t0 = time.perf_counter()
    model, trace = TRAINERS[algorithm](splits.train, splits.val, tcfg)
    elapsed = time.perf_counter() - t0
    fit_train = predict(model, splits.raw_train.X)
    fit_test = predict(model, splits.raw_test.X)
    summary = RunSummary(
        train_rmse=rmse(fit_train, splits.raw_train.Y),
        test_rmse=rmse(fit_test, splits.raw_test.Y),
        train_r=_safe_r(fit_train, splits.raw_train.Y),
        test_r=_safe_r(fit_test, splits.raw_test.Y),
        time_s=elapsed,
        nodes=float(model.n_nodes),
    )
    return RunResult(algorithm, seed, model, trace, summary)


@dataclass
class Comparison:
    runs: list[RunResult]
    algorithms: tuple[str, ...]

    def by_algorithm(self, name: str) -> list[RunResult]:
        return [r for r in self.runs if r.algorithm == name]

    def aggregate(self, name: str) -> dict[str, tuple[float, float]]:
        runs = [r.summary for r in self.by_algorithm(name)]
        if len(runs) == 1:
            return {k: (v, float("nan")) for k, v in runs[0].to_dict().items()}
        return summarize(runs)

    def median(self, name: str, metric: str) -> float:
        return float(np.median([getattr(r.summary, metric) for r in self.by_algorithm(name)]))

    def record(self, timing: bool) -> dict:
        rows = {}
        for name in self.algorithms:
            agg = self.aggregate(name)
            if not timing:
                agg["time_s"] = (None, None)
            rows[name] = {
                "mean": {k: v[0] for k, v in agg.items()},
                "std": {k: v[1] for k, v in agg.items()},
                "median_train_rmse": self.median(name, "train_rmse"),
                "median_test_rmse": self.median(name, "test_rmse"),
                "stalled": sum(r.trace.status is Status.STALLED for r in self.by_algorithm(name)),
            }
        return {"summary": rows, "runs": [r.record(timing) for r in self.runs]}

    def table(self, timing: bool) -> str:
        cols = ("train_rmse", "test_rmse", "train_r", "test_r", "time_s", "nodes")
        head = ("Algorithm", "Train RMSE", "Test RMSE", "Train R", "Test R", "Time (s)", "Nodes")
        lines = []
        for name in self.algorithms:
            agg = self.aggregate(name)
            cells = [name]
            for c in cols:
                if c == "time_s" and not timing:
                    cells.append("n/a")
                else:
                    cells.append(format_mean_std(*agg[c], digits=1 if c == "nodes" else 4))
            lines.append(cells)
        widths = [max(len(row[i]) for row in [head, *lines]) for i in range(len(head))]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        out = [fmt.format(*head), fmt.format(*("-" * w for w in widths))]
        out += [fmt.format(*row) for row in lines]
        return "\n".join(out)


def compare(cfg: ExperimentConfig, algorithms=None, seeds=None, progress=None) -> Comparison:
    algorithms = tuple(algorithms or cfg.algorithms)
    seeds = tuple(cfg.seeds if seeds is None else seeds)
    source = load_source(cfg.dataset)
    runs = []
    for name in algorithms:
        for seed in seeds:
            result = run_one(cfg, name, seed, source)
            if progress:
                progress(result)
            runs.append(result)
    return Comparison(runs, algorithms)
