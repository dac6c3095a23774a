"""Incremental trainers (RMPI-SCN, SCN-III, SCN-I, IRVFL), one-shot RVFL, prediction.

All trainers expect datasets already normalized with
:func:`rmpiscn.data.apply_normalization`; the parameters travel with the
dataset into the model so that :func:`predict` takes raw inputs. Trace RMSE
values are on the original output scale.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path

import numpy as np

from .candidates import RngSpec, get_activation, hidden_output, sample_pool
from .data import Dataset, NormalizationParams
from .linalg import TAU_RANK, greville_append, penrose_violation, pinv_direct
from .metrics import rmse
from .supervisor import (
    ResidualState,
    classic_gain,
    omega_pool,
    r_schedule,
    scn1_step_residual,
    score_pool_rmpi,
)


class TrainingError(RuntimeError):
    pass


class Status(str, Enum):
    CONVERGED = "Converged"
    MAX_NODES = "MaxNodes"
    EARLY_STOPPED = "EarlyStopped"
    STALLED = "Stalled"


# Stream tags keep candidate draws of different trainers apart where they
# should not coincide (one-shot RVFL vs. incremental pools).
_RVFL_STREAM = 1_000_003
_IRVFL_STREAM = 1_000_033

# Absolute tolerance on the realised contraction ||e_L||^2 <= r_L ||e_{L-1}||^2.
DECAY_SLACK = 1e-12


@dataclass(frozen=True)
class TrainerConfig:
    L_max: int = 100
    epsilon: float = 1e-4
    T_max: int = 100
    Lambda: tuple[float, ...] = (0.5, 1, 5, 10, 30, 50, 100, 150, 200)
    r: float = 0.9
    alpha: float = 0.7
    r_grid: tuple[float, ...] = (0.9, 0.99, 0.999, 0.9999, 0.99999)
    patience: int = 20
    tau_rank: float = 1e-4
    refresh_interval: int | None = None
    seed: int = 0
    stall_retries: int = 3
    rvfl_lambda: float = 1.0
    activation: str = "sigmoid"
    literal_schedule: bool = False

    def __post_init__(self):
        object.__setattr__(self, "Lambda", tuple(float(v) for v in self.Lambda))
        object.__setattr__(self, "r_grid", tuple(float(v) for v in self.r_grid))

    def validate(self) -> TrainerConfig:
        problems = []
        if self.L_max < 1:
            problems.append("L_max must be >= 1")
        if self.T_max < 1:
            problems.append("T_max must be >= 1")
        if self.epsilon < 0:
            problems.append("epsilon must be >= 0")
        if not self.Lambda or any(v <= 0 for v in self.Lambda):
            problems.append("Lambda must be a non-empty list of positive values")
        elif any(a >= b for a, b in zip(self.Lambda, self.Lambda[1:])):
            problems.append("Lambda must be strictly increasing")
        if not 0 < self.r < 1:
            problems.append("r must be in (0, 1)")
        if not self.alpha > 0:
            problems.append("alpha must be > 0")
        if not self.r_grid or any(not 0 < v < 1 for v in self.r_grid):
            problems.append("r_grid values must lie in (0, 1)")
        elif any(a >= b for a, b in zip(self.r_grid, self.r_grid[1:])):
            problems.append("r_grid must be strictly increasing")
        if self.patience < 0:
            problems.append("patience must be >= 0 (0 disables early stopping)")
        if self.tau_rank <= 0:
            problems.append("tau_rank must be > 0")
        if self.refresh_interval is not None and self.refresh_interval < 1:
            problems.append("refresh_interval must be >= 1 or null")
        if self.stall_retries < 0:
            problems.append("stall_retries must be >= 0")
        if self.rvfl_lambda <= 0:
            problems.append("rvfl_lambda must be > 0")
        try:
            get_activation(self.activation)
        except ValueError as exc:
            problems.append(str(exc))
        if problems:
            raise ValueError("invalid trainer config: " + "; ".join(problems))
        return self

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["Lambda"] = list(self.Lambda)
        doc["r_grid"] = list(self.r_grid)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> TrainerConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValueError(f"unknown trainer config keys: {unknown}")
        return cls(**doc)


@dataclass(frozen=True)
class TraceRow:
    L: int
    lam: float
    r_L: float
    xi: float
    residual_norm: float
    train_rmse: float
    val_rmse: float
    candidates: int
    elapsed_s: float


TRACE_HEADER = ("L", "lambda", "r_L", "xi", "train_rmse", "val_rmse", "candidates", "elapsed_s")


def _fmt(v: float) -> str:
    return repr(float(v))


@dataclass
class TrainingTrace:
    algorithm: str
    rows: list[TraceRow] = field(default_factory=list)
    status: Status = Status.MAX_NODES
    nodes_explored: int = 0
    pinv_violation: float = math.nan

    @property
    def residual_norms(self) -> np.ndarray:
        return np.array([r.residual_norm for r in self.rows])

    @property
    def train_rmse(self) -> np.ndarray:
        return np.array([r.train_rmse for r in self.rows])

    def write_csv(self, path, timing: bool = True) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for r in self.rows:
                w.writerow([r.L, _fmt(r.lam), _fmt(r.r_L), _fmt(r.xi), _fmt(r.train_rmse),
                            _fmt(r.val_rmse), r.candidates,
                            f"{r.elapsed_s:.6f}" if timing else ""])


@dataclass
class SCNModel:
    W: np.ndarray       # (L, d)
    b: np.ndarray       # (L,)
    Beta: np.ndarray    # (L, m)
    activation: str
    norm: NormalizationParams
    algorithm: str
    config: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.norm.x_offset.shape[0]

    @property
    def m(self) -> int:
        return self.norm.y_offset.shape[0]

    def to_dict(self) -> dict:
        return {
            "format": "rmpiscn-model/1",
            "algorithm": self.algorithm,
            "activation": self.activation,
            "d": self.d,
            "m": self.m,
            "nodes": self.n_nodes,
            "W": self.W.tolist(),
            "b": self.b.tolist(),
            "Beta": self.Beta.tolist(),
            "normalization": self.norm.to_dict(),
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> SCNModel:
        d, m = int(doc["d"]), int(doc["m"])
        return cls(
            W=np.asarray(doc["W"], dtype=np.float64).reshape(-1, d),
            b=np.asarray(doc["b"], dtype=np.float64).reshape(-1),
            Beta=np.asarray(doc["Beta"], dtype=np.float64).reshape(-1, m),
            activation=doc["activation"],
            norm=NormalizationParams.from_dict(doc["normalization"]),
            algorithm=doc["algorithm"],
            config=doc.get("config", {}),
        )

    def save(self, path) -> None:
        # json writes floats with repr(), which round-trips every double exactly.
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> SCNModel:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def predict(model: SCNModel, X) -> np.ndarray:
    """Raw inputs in, raw-scale outputs out."""
    if model.n_nodes == 0:
        raise ValueError("untrained model")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != model.d:
        raise ValueError(f"X has {X.shape[1]} columns, model expects {model.d}")
    H = hidden_output(model.norm.transform_x(X), model.W, model.b, model.activation)
    return model.norm.inverse_y(H @ model.Beta)


class _Network:
    """Mutable training-time state shared by the incremental trainers."""

    def __init__(self, algorithm: str, ds_train: Dataset, ds_val: Dataset | None,
                 cfg: TrainerConfig, full_ls: bool):
        self.algorithm = algorithm
        self.cfg = cfg
        self.full_ls = full_ls
        self.X = ds_train.X
        self.Y = ds_train.Y
        N, d = self.X.shape
        m = self.Y.shape[1]
        self.norm = ds_train.norm or NormalizationParams.identity(d, m)
        self.y_scale = self.norm.y_scale
        self.W = np.zeros((0, d))
        self.b = np.zeros(0)
        self.H = np.zeros((N, 0))
        self.H_pinv = np.zeros((0, N))
        self.Beta = np.zeros((0, m))
        self.e = self.Y.copy()
        self.val = ds_val
        if ds_val is not None:
            self.Hv = np.zeros((ds_val.n, 0))
            self.Yv_raw = self.norm.inverse_y(ds_val.Y)
        self.trace = TrainingTrace(algorithm)
        self.best_val = math.inf
        self.best: tuple[int, np.ndarray] | None = None
        self.since_best = 0
        self.t0 = time.perf_counter()

    @property
    def L(self) -> int:
        return self.W.shape[0]

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.e))

    def state(self) -> ResidualState:
        return ResidualState(self.H, self.H_pinv, self.e, np.sum(self.e * self.e, axis=0))

    def propose(self, h: np.ndarray):
        """Least-squares update for appending ``h``, not yet committed."""
        res = greville_append(self.H_pinv, self.H, h, self.cfg.tau_rank)
        H, H_pinv = res.H, res.H_pinv
        k = self.cfg.refresh_interval
        if k and H.shape[1] % k == 0:
            H_pinv = pinv_direct(H)
        Beta = H_pinv @ self.Y
        e = self.Y - H @ Beta
        prev = float(np.sum(self.e * self.e)) + DECAY_SLACK
        if np.sum(e * e) > prev:
            # Recursive drift made the fit worse than before the append, which
            # exact least squares never does. Recompute, and failing that keep
            # the old weights with zero on the new node.
            H_pinv = pinv_direct(H)
            Beta = H_pinv @ self.Y
            e = self.Y - H @ Beta
            if np.sum(e * e) > prev:
                # Same function as before; reuse e rather than recompute it,
                # since large weights make Y - H @ Beta cancellation-noisy.
                Beta = np.vstack([self.Beta, np.zeros((1, self.Y.shape[1]))])
                e = self.e.copy()
        return H, H_pinv, Beta, e

    def add(self, w: np.ndarray, bias: float, h: np.ndarray, proposal=None) -> None:
        if self.full_ls:
            self.H, self.H_pinv, self.Beta, self.e = proposal or self.propose(h)
        else:
            beta, self.e = scn1_step_residual(self.e, h)
            self.H = np.column_stack([self.H, h])
            self.Beta = np.vstack([self.Beta, beta[None, :]])
        self.W = np.vstack([self.W, w[None, :]])
        self.b = np.append(self.b, bias)
        if self.val is not None:
            hv = hidden_output(self.val.X, w[None, :], np.array([bias]), self.cfg.activation)
            self.Hv = np.column_stack([self.Hv, hv[:, 0]])
        if not (np.all(np.isfinite(self.Beta)) and np.all(np.isfinite(self.e))):
            raise TrainingError(f"{self.algorithm}: non-finite weights after adding node {self.L}")

    def record(self, lam: float, r_L: float, xi: float, candidates: int) -> bool:
        """Append a trace row; True when early-stopping patience is exhausted."""
        scaled = self.e * self.y_scale
        train = float(np.sqrt(np.sum(scaled * scaled) / self.e.shape[0]))
        val = math.nan
        if self.val is not None:
            val = rmse(self.norm.inverse_y(self.Hv @ self.Beta), self.Yv_raw)
        self.trace.rows.append(TraceRow(
            self.L, lam, r_L, xi, self.residual_norm, train, val, candidates,
            time.perf_counter() - self.t0))
        if self.val is None or self.cfg.patience == 0:
            return False
        if val < self.best_val:
            self.best_val = val
            self.best = (self.L, self.Beta.copy())
            self.since_best = 0
        else:
            self.since_best += 1
        return self.since_best >= self.cfg.patience

    def stop_reason(self, patience_hit: bool) -> Status | None:
        if self.residual_norm <= self.cfg.epsilon:
            return Status.CONVERGED
        if self.L >= self.cfg.L_max:
            return Status.MAX_NODES
        if patience_hit:
            return Status.EARLY_STOPPED
        return None

    def finish(self, status: Status) -> tuple[SCNModel, TrainingTrace]:
        trace = self.trace
        trace.status = status
        trace.nodes_explored = self.L
        if self.full_ls and self.L:
            trace.pinv_violation = penrose_violation(self.H, self.H_pinv)
        W, b, Beta = self.W, self.b, self.Beta
        if status is Status.EARLY_STOPPED and self.best is not None:
            keep, Beta = self.best
            W, b = W[:keep], b[:keep]
            trace.rows = trace.rows[:keep]
        model = SCNModel(W.copy(), b.copy(), Beta.copy(), self.cfg.activation, self.norm,
                         self.algorithm, self.cfg.to_dict())
        return model, trace


def _first_node_rmpi(net: _Network) -> bool:
    cfg = net.cfg
    evaluated = 0
    lam = cfg.Lambda[0]
    for attempt in range(cfg.stall_retries + 1):
        pool = sample_pool(net.X, cfg.T_max, lam, RngSpec(cfg.seed, (1, attempt, 0)), cfg.activation)
        evaluated += pool.size
        omega = omega_pool(pool.H, net.Y)
        j = int(np.argmin(omega))
        if np.isfinite(omega[j]):
            net.add(pool.W[j], pool.b[j], pool.H[:, j])
            return net.record(lam, math.nan, float(omega[j]), evaluated)
    return None


def train_rmpi_scn(ds_train: Dataset, ds_val: Dataset | None = None,
                   cfg: TrainerConfig | None = None) -> tuple[SCNModel, TrainingTrace]:
    """Greedy network growth scored by the exact post-append least-squares residual.

    The first node minimises the one-node residual over a pool at the
    smallest support. Afterwards each support level in ``cfg.Lambda`` is
    tried in turn; the first pool holding a candidate with
    ``||e_L||^2 <= r_L ||e_{L-1}||^2`` contributes its best candidate.
    """
    cfg = (cfg or TrainerConfig()).validate()
    net = _Network("rmpi_scn", ds_train, ds_val, cfg, full_ls=True)
    patience_hit = _first_node_rmpi(net)
    if patience_hit is None:
        return net.finish(Status.STALLED)
    while (status := net.stop_reason(patience_hit)) is None:
        L = net.L
        r_star = r_schedule(cfg.r, cfg.alpha, L, cfg.literal_schedule)
        state = net.state()
        evaluated = 0
        chosen = None
        budget = r_star * state.residual_sq + DECAY_SLACK
        for attempt in range(cfg.stall_retries + 1):
            for k, lam in enumerate(cfg.Lambda):
                pool = sample_pool(net.X, cfg.T_max, lam, RngSpec(cfg.seed, (L + 1, attempt, k)),
                                   cfg.activation)
                evaluated += pool.size
                scores = score_pool_rmpi(state, pool.H, net.Y, r_star, cfg.tau_rank)
                # The score is exact only in exact arithmetic, so the realised
                # residual is checked before a candidate is committed.
                for j in np.argsort(scores.xi, kind="stable"):
                    if not scores.xi[j] <= 0:
                        break
                    proposal = net.propose(pool.H[:, j])
                    if np.sum(proposal[3] * proposal[3]) <= budget:
                        chosen = (pool, int(j), float(scores.xi[j]), proposal)
                        break
                if chosen:
                    break
            if chosen:
                break
        if chosen is None:
            status = Status.STALLED
            break
        pool, j, xi, proposal = chosen
        net.add(pool.W[j], pool.b[j], pool.H[:, j], proposal)
        patience_hit = net.record(pool.lam, r_star, xi, evaluated)
    return net.finish(status)


def _train_classic(name: str, ds_train, ds_val, cfg, full_ls: bool):
    cfg = (cfg or TrainerConfig()).validate()
    net = _Network(name, ds_train, ds_val, cfg, full_ls=full_ls)
    patience_hit = False
    status = None
    while True:
        if net.L:
            status = net.stop_reason(patience_hit)
            if status is not None:
                break
        L = net.L
        e_sq = float(np.sum(net.e * net.e))
        evaluated = 0
        chosen = None
        for attempt in range(cfg.stall_retries + 1):
            for k, lam in enumerate(cfg.Lambda):
                pool = sample_pool(net.X, cfg.T_max, lam, RngSpec(cfg.seed, (L + 1, attempt, k)),
                                   cfg.activation)
                evaluated += pool.size
                gain = classic_gain(net.e, pool.H)
                j = int(np.argmax(gain))
                for r in cfg.r_grid:
                    xi = gain[j] - (1.0 - r) * e_sq
                    if xi >= 0:
                        chosen = (pool, j, r, float(xi))
                        break
                if chosen:
                    break
            if chosen:
                break
        if chosen is None:
            status = Status.STALLED
            break
        pool, j, r, xi = chosen
        net.add(pool.W[j], pool.b[j], pool.H[:, j])
        patience_hit = net.record(pool.lam, r, xi, evaluated)
    return net.finish(status)


def train_scn3(ds_train: Dataset, ds_val: Dataset | None = None,
               cfg: TrainerConfig | None = None) -> tuple[SCNModel, TrainingTrace]:
    """Classic supervisory test with all output weights refit by least squares.

    For each support level a pool is drawn and ``r`` walks up ``cfg.r_grid``
    until the best candidate by ``<e, h>^2 / ||h||^2`` passes.
    """
    return _train_classic("scn3", ds_train, ds_val, cfg, full_ls=True)


def train_scn1(ds_train: Dataset, ds_val: Dataset | None = None,
               cfg: TrainerConfig | None = None) -> tuple[SCNModel, TrainingTrace]:
    """Classic supervisory test; only the new node's output weight is fitted."""
    return _train_classic("scn1", ds_train, ds_val, cfg, full_ls=False)


def train_irvfl(ds_train: Dataset, ds_val: Dataset | None = None,
                cfg: TrainerConfig | None = None) -> tuple[SCNModel, TrainingTrace]:
    """Unsupervised incremental baseline: one random node per step at ``rvfl_lambda``."""
    cfg = (cfg or TrainerConfig()).validate()
    net = _Network("irvfl", ds_train, ds_val, cfg, full_ls=True)
    patience_hit = False
    while True:
        if net.L:
            status = net.stop_reason(patience_hit)
            if status is not None:
                break
        spec = RngSpec(cfg.seed, (net.L + 1, 0, _IRVFL_STREAM))
        pool = sample_pool(net.X, 1, cfg.rvfl_lambda, spec, cfg.activation)
        net.add(pool.W[0], pool.b[0], pool.H[:, 0])
        patience_hit = net.record(pool.lam, math.nan, math.nan, 1)
    return net.finish(status)


def fit_rvfl(ds_train: Dataset, ds_val: Dataset | None = None,
             cfg: TrainerConfig | None = None) -> tuple[SCNModel, TrainingTrace]:
    """One-shot RVFL with a single trace row, for uniform handling in the CLI."""
    cfg = (cfg or TrainerConfig()).validate()
    t0 = time.perf_counter()
    norm = ds_train.norm or NormalizationParams.identity(ds_train.d, ds_train.m)
    pool = sample_pool(ds_train.X, cfg.L_max, cfg.rvfl_lambda, RngSpec(cfg.seed, (_RVFL_STREAM,)),
                       cfg.activation)
    H_pinv = pinv_direct(pool.H)
    Beta = H_pinv @ ds_train.Y
    if not np.all(np.isfinite(Beta)):
        raise TrainingError("rvfl: non-finite output weights")
    model = SCNModel(pool.W, pool.b, Beta, cfg.activation, norm, "rvfl", cfg.to_dict())
    e = (ds_train.Y - pool.H @ Beta) * norm.y_scale
    val = math.nan
    if ds_val is not None:
        val = rmse(predict(model, norm.inverse_x(ds_val.X)), norm.inverse_y(ds_val.Y))
    trace = TrainingTrace("rvfl", status=Status.MAX_NODES, nodes_explored=cfg.L_max,
                          pinv_violation=penrose_violation(pool.H, H_pinv))
    trace.rows.append(TraceRow(
        cfg.L_max, pool.lam, math.nan, math.nan,
        float(np.linalg.norm(ds_train.Y - pool.H @ Beta)),
        float(np.sqrt(np.sum(e * e) / e.shape[0])), val, cfg.L_max,
        time.perf_counter() - t0))
    return model, trace


def train_rvfl(ds_train: Dataset, cfg: TrainerConfig | None = None) -> SCNModel:
    """Random hidden layer of ``L_max`` nodes, output weights by pseudoinverse."""
    return fit_rvfl(ds_train, None, cfg)[0]


TRAINERS = {
    "rmpi_scn": train_rmpi_scn,
    "scn3": train_scn3,
    "scn1": train_scn1,
    "irvfl": train_irvfl,
    "rvfl": fit_rvfl,
}


def get_trainer(name: str):
    try:
        return TRAINERS[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; valid names: {', '.join(TRAINERS)}") from None
