"""Discrete-time deterministic state-space plants and excitation records."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, InsufficientData
from .matstore import as_matrix


@dataclass(frozen=True)
class StateSpaceModel:
    """``x(k+1) = A x(k) + B u(k)``, ``y(k) = C x(k) + D u(k)``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A, B, C, D = (as_matrix(M, copy=True) for M in (self.A, self.B, self.C, self.D))
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {n}")
        if C.shape[1] != n:
            raise DimensionMismatch(f"C has {C.shape[1]} columns, expected {n}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionMismatch(f"D must be {(C.shape[0], B.shape[1])}, got {D.shape}")
        for name, M in zip("ABCD", (A, B, C, D)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def l(self) -> int:  # noqa: E743
        return self.C.shape[0]

    def markov_parameters(self, count: int) -> np.ndarray:
        """Return ``[D, CB, CAB, ..., CA^(count-2)B]`` stacked as ``(count, l, m)``."""
        out = np.empty((count, self.l, self.m))
        if count == 0:
            return out
        out[0] = self.D
        AkB = self.B
        for k in range(1, count):
            out[k] = self.C @ AkB
            AkB = self.A @ AkB
        return out

    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.A)


@dataclass(frozen=True)
class IoRecord:
    """Input/output samples, time along axis 0: ``u`` is (L, m), ``y`` is (L, l)."""

    u: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        u = as_matrix(self.u, copy=True)
        y = as_matrix(self.y, copy=True)
        if u.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"u has {u.shape[0]} samples but y has {y.shape[0]}")
        u.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.u.shape[0]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def l(self) -> int:  # noqa: E743
        return self.y.shape[1]

    def require(self, N: int, j: int) -> None:
        need = 2 * N + j - 1
        if len(self) < need:
            raise InsufficientData(f"need {need} samples for N={N}, j={j}; record has {len(self)}")


def ball_beam() -> StateSpaceModel:
    """The ball-beam plant used throughout the experiments (double pole at 1)."""
    return StateSpaceModel(
        A=[[2.0, -1.0], [1.0, 0.0]],
        B=[[1.0], [0.0]],
        C=[[0.00014, 0.00014]],
        D=[[0.0]],
    )


def simulate(model: StateSpaceModel, u, x0=None) -> IoRecord:
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 1:
        u = u[:, None]
    if u.ndim != 2 or u.shape[1] != model.m:
        raise DimensionMismatch(f"input must be (L, {model.m}), got {u.shape}")
    x = np.zeros(model.n) if x0 is None else np.asarray(x0, dtype=np.float64).reshape(-1)
    if x.shape != (model.n,):
        raise DimensionMismatch(f"x0 must have {model.n} entries, got {x.shape}")

    A, B, C, D = model.A, model.B, model.C, model.D
    L = u.shape[0]
    # the state recursion is inherently serial; the output map is vectorised afterwards
    X = np.empty((L, model.n))
    for k in range(L):
        X[k] = x
        x = A @ x + B @ u[k]
    y = X @ C.T + u @ D.T
    return IoRecord(u=u, y=y)


def gen_excitation(L: int, m: int = 1, seed: int = 0) -> np.ndarray:
    """Zero-mean, unit-variance Gaussian white noise of shape ``(L, m)``."""
    if L < 1:
        raise ValueError("excitation length must be >= 1")
    return np.random.default_rng(seed).standard_normal((L, m))


def write_csv(rec: IoRecord, path) -> None:
    header = [f"u{i + 1}" for i in range(rec.m)] + [f"y{i + 1}" for i in range(rec.l)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in np.hstack([rec.u, rec.y]):
            w.writerow([repr(float(v)) for v in row])


def read_csv(path) -> IoRecord:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InsufficientData(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    ucols = [i for i, h in enumerate(header) if h.startswith("u")]
    ycols = [i for i, h in enumerate(header) if h.startswith("y")]
    if not ucols or not ycols or len(ucols) + len(ycols) != len(header):
        raise ValueError(f"header must be u1..um,y1..yl, got {header}")
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64)
    data = data.reshape(-1, len(header))
    return IoRecord(u=data[:, ucols], y=data[:, ycols])
