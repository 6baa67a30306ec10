"""Row-space projections used by the oblique-projection stage of N4SID.

All operands share the column count ``j``; projections act on row spaces.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch

EPS = np.finfo(np.float64).eps


def rank_tolerance(shape, sigma_max: float) -> float:
    """Numerical-rank cutoff ``max(rows, cols) * eps * sigma_max``."""
    return max(shape) * EPS * sigma_max


def pinv(M, tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse through the thin SVD.

    ``tol`` is relative to the largest singular value; singular values below
    ``tol * sigma_max`` are treated as zero. The default is the standard
    ``max(rows, cols) * eps`` cutoff.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.size == 0:
        return np.zeros(M.shape[::-1])
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros(M.shape[::-1])
    cutoff = s[0] * (max(M.shape) * EPS if tol is None else tol)
    keep = s >= cutoff
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def _same_cols(*mats):
    cols = {M.shape[1] for M in mats}
    if len(cols) != 1:
        raise DimensionMismatch(f"operands must share a column count, got {[M.shape for M in mats]}")


def orth_project(A, B) -> np.ndarray:
    """``A/B = A B^+ B``: rows of ``A`` projected onto the row space of ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    _same_cols(A, B)
    return (A @ pinv(B)) @ B


def orth_complement_project(A, B) -> np.ndarray:
    """``A/B^perp = A - A/B``."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    return A - orth_project(A, B)


def oblique_project(A, B, C) -> np.ndarray:
    """Project the row space of ``A`` along ``B`` onto the row space of ``C``.

    Computed literally as ``(A/B^perp) (C/B^perp)^+ C``. When the row spaces of
    ``B`` and ``C`` intersect non-trivially the pseudo-inverse cutoff decides
    what survives; no error is raised.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    _same_cols(A, B, C)
    return (orth_complement_project(A, B) @ pinv(orth_complement_project(C, B))) @ C
