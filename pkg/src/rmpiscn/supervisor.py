"""Acceptance tests and scores for candidate basis functions.

Residuals follow ``e = Y - H H^+ Y``. The recursive score works on the part
``p`` of a candidate output that is orthogonal to the current hidden
columns: the least-squares residual after appending ``h`` is
``sum_q ||e_q - (<Y_q, p> / ||p||^2) p||^2`` and needs only ``H^+``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import TAU_RANK, project_out


def _col(v) -> np.ndarray:
    return np.asarray(v, dtype=np.float64).reshape(-1)


def _mat(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=np.float64)
    return Y[:, None] if Y.ndim == 1 else Y


@dataclass(frozen=True)
class ResidualState:
    H: np.ndarray         # (N, L-1)
    H_pinv: np.ndarray    # (L-1, N)
    e: np.ndarray         # (N, m)
    e_sq_norms: np.ndarray

    @classmethod
    def from_pinv(cls, H, H_pinv, Y) -> ResidualState:
        Y = _mat(Y)
        H = np.asarray(H, dtype=np.float64)
        H_pinv = np.asarray(H_pinv, dtype=np.float64)
        e = Y - H @ (H_pinv @ Y)
        return cls(H, H_pinv, e, np.sum(e * e, axis=0))

    @classmethod
    def empty(cls, Y) -> ResidualState:
        Y = _mat(Y)
        N = Y.shape[0]
        return cls(np.zeros((N, 0)), np.zeros((0, N)), Y.copy(), np.sum(Y * Y, axis=0))

    @property
    def n_nodes(self) -> int:
        return self.H.shape[1]

    @property
    def residual_sq(self) -> float:
        return float(np.sum(self.e_sq_norms))


@dataclass(frozen=True)
class CandidateScore:
    p: np.ndarray
    tau: np.ndarray
    delta: np.ndarray
    xi: float
    new_residual_sq: float
    feasible: bool
    omega: float | None = None


def _is_null(p: np.ndarray, h: np.ndarray, tau_rank: float) -> bool:
    return np.linalg.norm(p) <= tau_rank * max(1.0, np.linalg.norm(h))


def project_p(h, state: ResidualState) -> np.ndarray:
    """Component of ``h`` orthogonal to the span of the current hidden columns."""
    h = _col(h)
    if h.shape[0] != state.H.shape[0]:
        raise ValueError(f"h has length {h.shape[0]}, expected {state.H.shape[0]}")
    if state.n_nodes == 0:
        return h.copy()
    return project_out(state.H, state.H_pinv, h)[1]


def fast_residual_sq(state: ResidualState, p, Y) -> float:
    """``||Y - H_L H_L^+ Y||_F^2`` for ``H_L = [H, h]`` without forming ``H_L^+``."""
    p = _col(p)
    Y = _mat(Y)
    pp = p @ p
    if pp == 0.0:
        raise ValueError("candidate adds no new direction")
    tau = (Y.T @ p) / pp
    r = state.e - np.outer(p, tau)
    return float(np.sum(r * r))


def xi_rmpi(state: ResidualState, p, Y, r_star: float) -> float:
    """Recursive score; ``<= 0`` means the residual contracts by ``r_star`` or better."""
    if not 0.0 < r_star < 1.0:
        raise ValueError(f"r_star must be in (0, 1), got {r_star}")
    return fast_residual_sq(state, p, Y) - r_star * state.residual_sq


def xi_classic(e, h, r: float) -> float:
    """Classic score ``sum_q <e_q, h>^2 / ||h||^2 - (1 - r) ||e||^2``; ``>= 0`` accepts."""
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must be in (0, 1), got {r}")
    e = _mat(e)
    h = _col(h)
    hh = h @ h
    if hh == 0.0:
        raise ValueError("h must be nonzero")
    eh = e.T @ h
    return float(np.sum(eh * eh) / hh - (1.0 - r) * np.sum(e * e))


def scn1_step_residual(e, h) -> tuple[np.ndarray, np.ndarray]:
    """Fit only the new node's weight against the current residual."""
    e = _mat(e)
    h = _col(h)
    hh = h @ h
    if hh == 0.0:
        raise ValueError("h must be nonzero")
    beta = (e.T @ h) / hh
    return beta, e - np.outer(h, beta)


@dataclass(frozen=True)
class PerOutputCheck:
    p_nonzero: bool
    energy: np.ndarray      # per output: <e_q, p>^2 / ||p||^2 >= (1 - r_L) ||e_q||^2
    interval: np.ndarray    # per output: |<Y_q - e_q, p>| <= sqrt(delta_q)
    delta: np.ndarray

    @property
    def feasible(self) -> bool:
        return bool(self.p_nonzero and np.all(self.energy) and np.all(self.interval))


def check_per_output(state: ResidualState, p, Y, r_L: float, h=None,
                     tau_rank: float = TAU_RANK) -> PerOutputCheck:
    """Per-output necessary-and-sufficient conditions for ``||e_q'||^2 <= r_L ||e_q||^2``.

    ``p`` counts as zero when ``||p|| <= tau_rank * max(1, ||h||)``; ``h``
    defaults to ``p`` itself.
    """
    p = _col(p)
    Y = _mat(Y)
    m = Y.shape[1]
    if _is_null(p, p if h is None else _col(h), tau_rank):
        false = np.zeros(m, dtype=bool)
        return PerOutputCheck(False, false, false, np.full(m, -np.inf))
    pp = p @ p
    ep = state.e.T @ p
    delta = ep * ep - (1.0 - r_L) * pp * state.e_sq_norms
    energy = ep * ep / pp >= (1.0 - r_L) * state.e_sq_norms
    fitted_p = (Y - state.e).T @ p
    with np.errstate(invalid="ignore"):
        interval = (delta >= 0) & (np.abs(fitted_p) <= np.sqrt(np.maximum(delta, 0.0)))
    return PerOutputCheck(True, energy, interval, delta)


def r_schedule(r: float, alpha: float, L: int, literal: bool = False) -> float:
    """Contraction target for a network that currently has ``L`` nodes.

    Default is ``r ** (alpha * (1 + 1/L))``, increasing in L towards
    ``r ** alpha``. ``literal=True`` gives ``r ** ((1 + 1/L) ** alpha)``,
    which tends to ``r`` instead.
    """
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must be in (0, 1), got {r}")
    if not alpha > 0.0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    exponent = (1.0 + 1.0 / L) ** alpha if literal else alpha * (1.0 + 1.0 / L)
    return math.exp(exponent * math.log(r))


def omega_init(h, Y) -> float:
    """Sum over outputs of the best one-node least-squares residual norm."""
    h = _col(h)
    Y = _mat(Y)
    hh = h @ h
    if hh == 0.0:
        raise ValueError("h must be nonzero")
    coef = (Y.T @ h) / hh
    return float(np.sum(np.linalg.norm(np.outer(h, coef) - Y, axis=0)))


def score_candidate(h, state: ResidualState, Y, r_star: float,
                    tau_rank: float = TAU_RANK) -> CandidateScore:
    """Full recursive score of one candidate (reference path for the pool scorer)."""
    h = _col(h)
    Y = _mat(Y)
    p = project_p(h, state)
    if _is_null(p, h, tau_rank):
        nan = np.full(Y.shape[1], np.nan)
        return CandidateScore(p, nan, nan, math.inf, state.residual_sq, False)
    pp = p @ p
    ep = state.e.T @ p
    tau = (Y.T @ p) / pp
    delta = ep * ep - (1.0 - r_star) * pp * state.e_sq_norms
    new_sq = fast_residual_sq(state, p, Y)
    return CandidateScore(p, tau, delta, new_sq - r_star * state.residual_sq, new_sq, True)


# --- vectorised pool scoring used by the trainers ---------------------------

@dataclass(frozen=True)
class PoolScores:
    xi: np.ndarray               # (T,), +inf where infeasible
    new_residual_sq: np.ndarray  # (T,)
    feasible: np.ndarray         # (T,) bool


def score_pool_rmpi(state: ResidualState, Hc: np.ndarray, Y, r_star: float,
                    tau_rank: float = TAU_RANK) -> PoolScores:
    Y = _mat(Y)
    P = project_out(state.H, state.H_pinv, Hc)[1] if state.n_nodes else Hc
    p_norm = np.sqrt(np.sum(P * P, axis=0))
    feasible = p_norm > tau_rank * np.maximum(1.0, np.sqrt(np.sum(Hc * Hc, axis=0)))
    pp = np.where(feasible, p_norm * p_norm, 1.0)
    tau = (Y.T @ P) / pp                                 # (m, T)
    R = state.e[:, :, None] - P[:, None, :] * tau[None, :, :]
    new_sq = np.sum(R * R, axis=(0, 1))
    new_sq = np.where(feasible, new_sq, state.residual_sq)
    xi = np.where(feasible, new_sq - r_star * state.residual_sq, np.inf)
    return PoolScores(xi, new_sq, feasible)


def classic_gain(e, Hc: np.ndarray) -> np.ndarray:
    """``sum_q <e_q, h>^2 / ||h||^2`` per candidate column (0 for null columns)."""
    e = _mat(e)
    hh = np.sum(Hc * Hc, axis=0)
    eh = e.T @ Hc
    with np.errstate(invalid="ignore", divide="ignore"):
        gain = np.sum(eh * eh, axis=0) / hh
    return np.where(hh > 0, gain, -np.inf)


def omega_pool(Hc: np.ndarray, Y) -> np.ndarray:
    Y = _mat(Y)
    hh = np.sum(Hc * Hc, axis=0)
    safe = np.where(hh > 0, hh, 1.0)
    coef = (Y.T @ Hc) / safe                              # (m, T)
    R = Hc[:, None, :] * coef[None, :, :] - Y[:, :, None]
    omega = np.sum(np.sqrt(np.sum(R * R, axis=0)), axis=0)
    return np.where(hh > 0, omega, np.inf)
