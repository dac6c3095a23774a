"""Evaluation metrics and multi-run aggregation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np


def _pair(Y_hat, Y) -> tuple[np.ndarray, np.ndarray]:
    Y_hat = np.asarray(Y_hat, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y_hat.shape != Y.shape:
        raise ValueError(f"shape mismatch: {Y_hat.shape} vs {Y.shape}")
    if Y.size == 0:
        raise ValueError("no samples")
    if Y.ndim == 1:
        Y_hat, Y = Y_hat[:, None], Y[:, None]
    return Y_hat, Y


def rmse(Y_hat, Y) -> float:
    """sqrt(mean over samples of the squared row error norm)."""
    Y_hat, Y = _pair(Y_hat, Y)
    diff = Y_hat - Y
    return float(np.sqrt(np.sum(diff * diff) / Y.shape[0]))


def corr_r(Y_hat, Y) -> float:
    """Pearson correlation over all (prediction, target) pairs pooled together."""
    Y_hat, Y = _pair(Y_hat, Y)
    a = Y.ravel() - Y.mean()
    b = Y_hat.ravel() - Y_hat.mean()
    va, vb = a @ a, b @ b
    if va <= 0 or vb <= 0:
        raise ValueError("degenerate correlation: zero variance")
    return float(np.clip((a @ b) / np.sqrt(va * vb), -1.0, 1.0))


@dataclass(frozen=True)
class RunSummary:
    train_rmse: float
    test_rmse: float
    train_r: float
    test_r: float
    time_s: float
    nodes: float

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(runs: list[RunSummary]) -> dict[str, tuple[float, float]]:
    """Mean and sample (n-1) standard deviation of each field."""
    if len(runs) < 2:
        raise ValueError("summarize needs at least 2 runs")
    out = {}
    for f in fields(RunSummary):
        vals = np.array([getattr(r, f.name) for r in runs], dtype=np.float64)
        out[f.name] = (float(vals.mean()), float(vals.std(ddof=1)))
    return out


def format_mean_std(mean: float, std: float, digits: int = 4) -> str:
    if not np.isfinite(mean):
        return "n/a"
    return f"{mean:.{digits}f}±{std:.{digits}f}"
