"""Block-Hankel data matrices for past/future subspace identification.

Block row ``r`` of a Hankel matrix holds all channels of one sample
(sample-major), so for a ``dim``-channel series the entry at
``(r*dim + c, col)`` is ``series[start + r + col, c]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData, InvalidShape
from .plantsim import IoRecord


def build_block_hankel(series, start: int, block_rows: int, j: int) -> np.ndarray:
    s = np.asarray(series, dtype=np.float64)
    if s.ndim == 1:
        s = s[:, None]
    if block_rows < 1 or j < 1 or start < 0:
        raise InvalidShape(f"bad Hankel shape start={start} block_rows={block_rows} j={j}")
    need = start + block_rows + j - 1
    if s.shape[0] < need:
        raise InsufficientData(f"series has {s.shape[0]} samples, Hankel needs {need}")
    dim = s.shape[1]
    window = s[start:need]
    H = np.empty((block_rows * dim, j))
    for r in range(block_rows):
        H[r * dim:(r + 1) * dim] = window[r:r + j].T
    return H


@dataclass(frozen=True)
class HankelSet:
    Up: np.ndarray
    Uf: np.ndarray
    UpPlus: np.ndarray
    UfMinus: np.ndarray
    Yp: np.ndarray
    Yf: np.ndarray
    YpPlus: np.ndarray
    YfMinus: np.ndarray
    Wp: np.ndarray
    WpPlus: np.ndarray
    N: int
    j: int
    m: int
    l: int  # noqa: E741

    MATRICES = ("Up", "Uf", "UpPlus", "UfMinus", "Yp", "Yf", "YpPlus", "YfMinus", "Wp", "WpPlus")

    def matrices(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.MATRICES}


def _check_scale(N: int, j: int) -> None:
    if N < 2:
        raise InvalidShape(f"N must be >= 2 so the shifted future block is non-empty, got {N}")
    if j <= N:
        raise InvalidShape(f"j must exceed N (got N={N}, j={j})")


def _hankels(series, N, j):
    """(past, future, past+, future-) for one signal."""
    past = build_block_hankel(series, 0, N, j)
    future = build_block_hankel(series, N, N, j)
    past_plus = build_block_hankel(series, 0, N + 1, j)
    future_minus = build_block_hankel(series, N + 1, N - 1, j)
    return past, future, past_plus, future_minus


def build_hankel_set(rec: IoRecord, N: int, j: int) -> HankelSet:
    _check_scale(N, j)
    rec.require(N, j)
    Up, Uf, UpPlus, UfMinus = _hankels(rec.u, N, j)
    Yp, Yf, YpPlus, YfMinus = _hankels(rec.y, N, j)
    mats = dict(Up=Up, Uf=Uf, UpPlus=UpPlus, UfMinus=UfMinus,
                Yp=Yp, Yf=Yf, YpPlus=YpPlus, YfMinus=YfMinus,
                Wp=np.vstack([Yp, Up]), WpPlus=np.vstack([YpPlus, UpPlus]))
    for M in mats.values():
        M.setflags(write=False)
    return HankelSet(**mats, N=N, j=j, m=rec.m, l=rec.l)


def extract_YiUi(rec: IoRecord, N: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Single-row blocks ``Yi = [y(N) .. y(N+j-1)]`` and the matching ``Ui``."""
    if len(rec) < N + j:
        raise InsufficientData(f"need {N + j} samples, record has {len(rec)}")
    return rec.y[N:N + j].T.copy(), rec.u[N:N + j].T.copy()
