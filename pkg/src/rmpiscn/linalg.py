"""Dense pseudoinverse routines.

``pinv_direct`` is the SVD reference used as an oracle; ``greville_append``
updates a known pseudoinverse when one column is appended to the matrix.
Matrices are plain 2-D float64 numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

TAU_RANK = 1e-10


class Branch(str, Enum):
    IN_COLUMN_SPACE = "InColumnSpace"
    NEW_DIRECTION = "NewDirection"


@dataclass(frozen=True)
class AppendResult:
    """Outcome of one Greville column append.

    ``H`` is ``[H_prev, h]`` and ``H_pinv`` its pseudoinverse. ``p`` is the
    part of ``h`` orthogonal to the previous column space, ``d`` the
    coordinates of ``h`` in the previous basis and ``b`` the new last row.
    """

    H: np.ndarray
    H_pinv: np.ndarray
    p: np.ndarray
    d: np.ndarray
    b: np.ndarray
    branch: Branch


def _as_matrix(A, name: str) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


def pinv_direct(A, tol: float | None = None) -> np.ndarray:
    """Moore-Penrose inverse via a thin SVD.

    Singular values below ``tol * sigma_max`` are treated as zero. The
    default ``tol`` is ``max(A.shape) * eps``.
    """
    A = _as_matrix(A, "A")
    if A.size == 0:
        raise ValueError("empty matrix")
    if tol is None:
        tol = max(A.shape) * np.finfo(np.float64).eps
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    cutoff = tol * s[0] if s.size else 0.0
    keep = s > cutoff
    if not np.any(keep):
        return np.zeros((A.shape[1], A.shape[0]))
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def penrose_violation(A, G) -> float:
    """Largest elementwise residual across the four Penrose conditions."""
    A = _as_matrix(A, "A")
    G = _as_matrix(G, "G")
    if G.shape != (A.shape[1], A.shape[0]):
        raise ValueError(f"G has shape {G.shape}, expected {(A.shape[1], A.shape[0])}")
    AG = A @ G
    GA = G @ A
    return float(max(
        np.max(np.abs(AG @ A - A)),
        np.max(np.abs(GA @ G - G)),
        np.max(np.abs(AG - AG.T)),
        np.max(np.abs(GA - GA.T)),
    ))


def project_out(H, H_pinv, h, refine: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Return ``d = H^+ h`` and ``p = h - H d``.

    With ``refine`` the projection is applied a second time to the
    remainder (``d += H^+ p``, ``p -= H H^+ p``). The extra pass is zero in
    exact arithmetic; in floating point it keeps ``p`` orthogonal to
    ``col(H)`` when ``H`` is ill-conditioned, which the recursion below
    depends on. ``h`` may be a vector or a matrix of columns.
    """
    d = H_pinv @ h
    p = h - H @ d
    if refine and H.shape[1]:
        d2 = H_pinv @ p
        p = p - H @ d2
        d = d + d2
    return d, p


def greville_append(H_pinv, H, h, tau_rank: float = TAU_RANK,
                    refine: bool = True) -> AppendResult:
    """Pseudoinverse of ``[H, h]`` from the pseudoinverse of ``H``.

    ``H`` may have zero columns, in which case ``h`` is the first column and
    the result is ``h.T / ||h||^2`` (or zero when ``h`` vanishes). Costs
    O(N * L) given ``H_pinv``. See :func:`project_out` for ``refine``.
    """
    H = np.asarray(H, dtype=np.float64)
    H_pinv = np.asarray(H_pinv, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64).reshape(-1)
    N = h.shape[0]
    if H.ndim != 2 or H.shape[0] != N:
        raise ValueError(f"h has length {N} but H has shape {H.shape}")
    if H_pinv.shape != (H.shape[1], N):
        raise ValueError(f"H_pinv has shape {H_pinv.shape}, expected {(H.shape[1], N)}")
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(H)) and np.all(np.isfinite(H_pinv))):
        raise ValueError("non-finite input to greville_append")

    d, p = project_out(H, H_pinv, h, refine)
    p_norm = np.linalg.norm(p)
    if p_norm <= tau_rank * max(1.0, np.linalg.norm(h)):
        branch = Branch.IN_COLUMN_SPACE
        b = (d @ H_pinv) / (1.0 + d @ d)
    else:
        branch = Branch.NEW_DIRECTION
        b = p / (p_norm * p_norm)
    new_pinv = np.vstack([H_pinv - np.outer(d, b), b[None, :]])
    return AppendResult(
        H=np.column_stack([H, h]),
        H_pinv=new_pinv,
        p=p,
        d=d,
        b=b,
        branch=branch,
    )
