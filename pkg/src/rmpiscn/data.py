"""Datasets: the DB1 / DB2 generators, CSV I/O, normalization and splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np


class Source(str, Enum):
    DB1 = "DB1"
    DB2 = "DB2"
    CSV = "Csv"


class Method(str, Enum):
    MINMAX = "minmax"
    ZSCORE = "zscore"
    NONE = "none"


@dataclass(frozen=True)
class NormalizationParams:
    """Affine maps ``z = (v - offset) / scale`` for inputs and outputs.

    For min-max, ``offset`` is the training minimum and ``scale`` the range;
    constant columns get ``scale = 1`` so they map to 0.
    """

    method: Method
    x_offset: np.ndarray
    x_scale: np.ndarray
    y_offset: np.ndarray
    y_scale: np.ndarray

    @classmethod
    def identity(cls, d: int, m: int) -> NormalizationParams:
        return cls(Method.NONE, np.zeros(d), np.ones(d), np.zeros(m), np.ones(m))

    def transform_x(self, X: np.ndarray) -> np.ndarray:
        return (X - self.x_offset) / self.x_scale

    def transform_y(self, Y: np.ndarray) -> np.ndarray:
        return (Y - self.y_offset) / self.y_scale

    def inverse_x(self, Z: np.ndarray) -> np.ndarray:
        return Z * self.x_scale + self.x_offset

    def inverse_y(self, Z: np.ndarray) -> np.ndarray:
        return Z * self.y_scale + self.y_offset

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "x_offset": self.x_offset.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_offset": self.y_offset.tolist(),
            "y_scale": self.y_scale.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> NormalizationParams:
        return cls(
            Method(doc["method"]),
            *(np.asarray(doc[k], dtype=np.float64)
              for k in ("x_offset", "x_scale", "y_offset", "y_scale")),
        )


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    source: Source = Source.CSV
    feature_names: tuple[str, ...] | None = None
    norm: NormalizationParams | None = field(default=None, compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        Y = np.asarray(self.Y, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim != 2 or Y.ndim != 2:
            raise ValueError("X and Y must be 2-D")
        if X.shape[0] == 0 or X.shape[0] != Y.shape[0]:
            raise ValueError(f"row mismatch: X has {X.shape[0]} rows, Y has {Y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("dataset contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.Y.shape[1]

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=np.intp)
        return replace(self, X=self.X[idx], Y=self.Y[idx])


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray


# --- generators ------------------------------------------------------------

def db1_target(x):
    x = np.asarray(x, dtype=np.float64)
    return (0.2 * np.exp(-(10 * x - 4) ** 2)
            + 0.5 * np.exp(-(80 * x - 40) ** 2)
            + 0.3 * np.exp(-(80 * x - 20) ** 2))


def gen_db1(n: int = 1500) -> Dataset:
    """``n`` grid points on [0, 1] (endpoints included) of the three-bump target."""
    if n < 2:
        raise ValueError(f"gen_db1 needs n >= 2, got {n}")
    x = np.linspace(0.0, 1.0, n)
    return Dataset(x[:, None], db1_target(x)[:, None], Source.DB1, ("x",))


def plant(x1, x2, x3, x4, x5, variant: str = "classic"):
    """One step of the third-order nonlinear plant.

    ``classic`` is the Narendra-Parthasarathy form
    ``(x1 x2 x3 x5 (x3 - 1) + x4) / (1 + x2^2 + x3^2)``. ``degenerate`` drops the
    ``+ x4`` input term and uses ``(x4 - 1)``; started from rest it never
    leaves zero, so it exists only for comparison.
    """
    denom = 1.0 + x2 * x2 + x3 * x3
    if variant == "classic":
        return (x1 * x2 * x3 * x5 * (x3 - 1.0) + x4) / denom
    if variant == "degenerate":
        return x1 * x2 * x3 * x5 * (x4 - 1.0) / denom
    raise ValueError(f"unknown plant variant {variant!r}")


def db2_test_input(k):
    k = np.asarray(k, dtype=np.float64)
    slow = np.sin(2 * np.pi * k / 250)
    return np.where(k <= 250, slow, 0.8 * slow + 0.2 * np.sin(2 * np.pi * k / 25))


def simulate_plant(u: np.ndarray, variant: str = "classic") -> tuple[np.ndarray, np.ndarray]:
    """Drive the plant with ``u`` from rest; return regressor rows and targets.

    Row k is ``[y(k), y(k-1), y(k-2), u(k), u(k-1)]`` with target ``y(k+1)``.
    """
    u = np.asarray(u, dtype=np.float64)
    X = np.empty((u.size, 5))
    Y = np.empty(u.size)
    y0 = y1 = y2 = 0.0
    u_prev = 0.0
    for k, uk in enumerate(u):
        X[k] = (y0, y1, y2, uk, u_prev)
        y_next = plant(y0, y1, y2, uk, u_prev, variant)
        Y[k] = y_next
        y0, y1, y2 = y_next, y0, y1
        u_prev = uk
    return X, Y[:, None]


DB2_NAMES = ("y_k", "y_k-1", "y_k-2", "u_k", "u_k-1")


def gen_db2(n_trainval: int = 2400, n_test: int = 600, seed: int = 0,
            variant: str = "classic") -> tuple[Dataset, Dataset]:
    """Random-excitation samples for train/validation and a sinusoidal test run."""
    if n_trainval < 10 or n_test < 10:
        raise ValueError("gen_db2 needs at least 10 samples per segment")
    rng = np.random.default_rng(seed)
    u_train = rng.uniform(-1.0, 1.0, n_trainval)
    Xa, Ya = simulate_plant(u_train, variant)
    Xt, Yt = simulate_plant(db2_test_input(np.arange(1, n_test + 1)), variant)
    return (Dataset(Xa, Ya, Source.DB2, DB2_NAMES),
            Dataset(Xt, Yt, Source.DB2, DB2_NAMES))


# --- CSV -------------------------------------------------------------------

def load_csv(path, n_outputs: int = 1, has_header: bool = False) -> Dataset:
    """Read a numeric CSV whose trailing ``n_outputs`` columns are targets."""
    if n_outputs < 1:
        raise ValueError("n_outputs must be >= 1")
    path = Path(path)
    rows: list[list[float]] = []
    names = None
    width = None
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, raw in enumerate(csv.reader(fh), start=1):
            if not raw or all(not c.strip() for c in raw):
                continue
            if has_header and names is None:
                names = tuple(c.strip() for c in raw)
                width = len(names)
                continue
            if width is None:
                width = len(raw)
            if len(raw) != width:
                raise ValueError(f"{path}:{lineno}: expected {width} fields, got {len(raw)}")
            vals = []
            for col, cell in enumerate(raw, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise ValueError(
                        f"{path}:{lineno}: column {col}: cannot parse {cell.strip()!r}") from None
                if not math.isfinite(v):
                    raise ValueError(f"{path}:{lineno}: column {col}: non-finite value")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    if width < n_outputs + 1:
        raise ValueError(f"{path}: {width} columns cannot hold {n_outputs} outputs plus inputs")
    A = np.array(rows)
    d = width - n_outputs
    return Dataset(A[:, :d], A[:, d:], Source.CSV, names[:d] if names else None)


def write_csv(ds: Dataset, path) -> None:
    """Write inputs then outputs with a generated header, round-trip exact."""
    names = list(ds.feature_names) if ds.feature_names else [f"x{i + 1}" for i in range(ds.d)]
    names += [f"y{j + 1}" for j in range(ds.m)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for x, y in zip(ds.X, ds.Y):
            w.writerow([repr(float(v)) for v in x] + [repr(float(v)) for v in y])


# --- normalization and splitting ---------------------------------------------

def _affine(A: np.ndarray, method: Method) -> tuple[np.ndarray, np.ndarray]:
    k = A.shape[1]
    if method is Method.NONE:
        return np.zeros(k), np.ones(k)
    if method is Method.MINMAX:
        lo, hi = A.min(axis=0), A.max(axis=0)
        scale = hi - lo
    else:
        lo, scale = A.mean(axis=0), A.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return lo, scale


def fit_normalization(ds: Dataset, split: SplitIndices | None = None,
                      method: Method | str = Method.MINMAX) -> NormalizationParams:
    """Fit on the training rows of ``split`` (all rows when ``split`` is None)."""
    method = Method(method)
    rows = slice(None) if split is None else split.train
    xo, xs = _affine(ds.X[rows], method)
    yo, ys = _affine(ds.Y[rows], method)
    return NormalizationParams(method, xo, xs, yo, ys)


def apply_normalization(ds: Dataset, params: NormalizationParams) -> Dataset:
    return replace(ds, X=params.transform_x(ds.X), Y=params.transform_y(ds.Y), norm=params)


def split_622(ds: Dataset | int, seed: int = 0, shuffled: bool = True) -> SplitIndices:
    """6:2:2 split: floor(0.6 N) / floor(0.2 N) / remainder."""
    n = ds if isinstance(ds, int) else ds.n
    if n < 5:
        raise ValueError(f"split_622 needs N >= 5, got {n}")
    n_train = (6 * n) // 10
    n_val = (2 * n) // 10
    order = np.random.default_rng(seed).permutation(n) if shuffled else np.arange(n)
    return SplitIndices(order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])


def split_ratio(n: int, train_fraction: float, seed: int = 0,
                shuffled: bool = True) -> tuple[np.ndarray, np.ndarray]:
    n_train = int(math.floor(train_fraction * n))
    order = np.random.default_rng(seed).permutation(n) if shuffled else np.arange(n)
    return order[:n_train], order[n_train:]
