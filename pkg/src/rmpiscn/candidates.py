"""Random candidate basis functions and their hidden outputs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


def sigmoid(z):
    """Logistic function, evaluated on ``exp(-|z|)`` so it never overflows."""
    z = np.asarray(z, dtype=np.float64)
    ez = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))
    return out if out.ndim else float(out)


def tanh(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.tanh(z)
    return out if out.ndim else float(out)


ACTIVATIONS: dict[str, Callable] = {"sigmoid": sigmoid, "tanh": tanh}


def get_activation(name: str) -> Callable:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}") from None


@dataclass(frozen=True)
class RngSpec:
    """Seed for one candidate batch.

    ``stream`` identifies the batch (e.g. node index, retry, support level);
    equal specs give equal draws no matter what happened before.
    """

    master_seed: int
    stream: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=tuple(self.stream))
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class CandidatePool:
    W: np.ndarray        # (T, d)
    b: np.ndarray        # (T,)
    H: np.ndarray        # (N, T), column j is activation(X @ W[j] + b[j])
    lam: float

    @property
    def size(self) -> int:
        return self.W.shape[0]


def hidden_output(X: np.ndarray, W: np.ndarray, b: np.ndarray, activation: str = "sigmoid") -> np.ndarray:
    return get_activation(activation)(X @ W.T + b)


def sample_pool(X, T_max: int, lam: float, rng: RngSpec,
                activation: str = "sigmoid") -> CandidatePool:
    """Draw ``T_max`` (w, b) pairs uniformly from [-lam, lam] and evaluate them on X."""
    if T_max < 1:
        raise ValueError(f"T_max must be >= 1, got {T_max}")
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    X = np.asarray(X, dtype=np.float64)
    gen = rng.generator()
    W = gen.uniform(-lam, lam, size=(T_max, X.shape[1]))
    b = gen.uniform(-lam, lam, size=T_max)
    return CandidatePool(W, b, hidden_output(X, W, b, activation), float(lam))
