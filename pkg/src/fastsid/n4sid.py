"""Deterministic N4SID: oblique projections, SVD, state estimation, least squares.

Both weighting matrices of the weighted-SVD step are the identity, so the
decomposition acts on the oblique projection itself.
"""
from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, IllConditionedRegressor, InvalidShape, OrderZero, RankDeficientGamma
from .hankel import HankelSet, build_hankel_set, extract_YiUi
from .plantsim import IoRecord, StateSpaceModel
from .projection import oblique_project, pinv, rank_tolerance
from .tsvd import SvdTriple, parallel_svd_by_cols

STAGES = ("oblique", "svd", "estimation")

# regressors worse than this are reported through IllConditionedRegressor
COND_WARN = 1e12


@dataclass(frozen=True)
class SidConfig:
    """Scale and tuning parameters for one identification run.

    ``svd_block_width=None`` decomposes the projection as a single block.
    ``svd_complete`` selects the full LAPACK SVD (square factors) for every
    block, which is how a plain ``numpy.linalg.svd`` call behaves; switching it
    off gives identical factors at thin-SVD cost.
    """

    N: int
    j: int
    order: int | None = None
    order_tol: float = 1e-6
    svd_block_width: int | None = None
    svd_complete: bool = True

    def __post_init__(self):
        if self.N < 2:
            raise InvalidShape(f"N must be >= 2, got {self.N}")
        if self.j <= self.N:
            raise InvalidShape(f"j must exceed N (N={self.N}, j={self.j})")
        if not 0.0 < self.order_tol < 1.0:
            raise ValueError(f"order_tol must lie in (0, 1), got {self.order_tol}")
        if self.svd_block_width is not None and self.svd_block_width < 1:
            raise ValueError("svd_block_width must be >= 1")
        if self.order is not None and self.order < 1:
            raise ValueError("forced order must be >= 1")

    @property
    def block_width(self) -> int:
        return self.j if self.svd_block_width is None else self.svd_block_width


@dataclass(frozen=True)
class SidIntermediate:
    Oi: np.ndarray
    Oim1: np.ndarray
    U1: np.ndarray
    S1: np.ndarray
    Gamma: np.ndarray
    GammaUnder: np.ndarray
    Xi: np.ndarray
    Xip1: np.ndarray


@dataclass(frozen=True)
class SvdStageResult:
    U1: np.ndarray
    S1: np.ndarray
    order: int
    triple: SvdTriple


@dataclass
class Diagnostics:
    stage_times: dict[str, float] = field(default_factory=dict)
    total_time: float = 0.0
    singular_values: np.ndarray | None = None
    residual: float = float("nan")
    condition: float = float("nan")


@dataclass(frozen=True)
class IdentificationResult:
    model: StateSpaceModel
    order: int
    diagnostics: Diagnostics

    def to_dict(self) -> dict:
        m = self.model
        d = self.diagnostics
        return {
            "n": m.n, "m": m.m, "l": m.l,
            "A": m.A.tolist(), "B": m.B.tolist(), "C": m.C.tolist(), "D": m.D.tolist(),
            "order": self.order,
            "singular_values": [] if d.singular_values is None else d.singular_values.tolist(),
            "stage_times_ms": {k: v * 1e3 for k, v in d.stage_times.items()},
            "residual": d.residual,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def model_from_dict(doc: dict) -> StateSpaceModel:
    return StateSpaceModel(A=doc["A"], B=doc["B"], C=doc["C"], D=doc["D"])


def oblique_stage(h: HankelSet) -> tuple[np.ndarray, np.ndarray]:
    Oi = oblique_project(h.Yf, h.Uf, h.Wp)
    Oim1 = oblique_project(h.YfMinus, h.UfMinus, h.WpPlus)
    return Oi, Oim1


def select_order(S: np.ndarray, cfg: SidConfig) -> int:
    if cfg.order is not None:
        if cfg.order > S.shape[0]:
            raise OrderZero(f"forced order {cfg.order} exceeds the {S.shape[0]} retained singular values")
        return cfg.order
    if S.shape[0] == 0 or S[0] == 0.0:
        raise OrderZero("projection has no non-zero singular values")
    n = int(np.count_nonzero(S >= cfg.order_tol * S[0]))
    return n


def svd_stage(Oi, cfg: SidConfig, parallel: int = 1) -> SvdStageResult:
    Oi = np.asarray(Oi, dtype=np.float64)
    if Oi.size == 0:
        raise InvalidShape("empty oblique projection")
    triple = parallel_svd_by_cols(Oi, cfg.block_width, parallel=parallel, complete=cfg.svd_complete)
    return svd_stage_from_triple(triple, cfg)


def svd_stage_from_triple(triple: SvdTriple, cfg: SidConfig) -> SvdStageResult:
    n = select_order(triple.S, cfg)
    return SvdStageResult(U1=triple.U[:, :n], S1=triple.S[:n], order=n, triple=triple)


def estimate_states(U1, S1, Oi, Oim1, N: int, l: int) -> SidIntermediate:  # noqa: E741
    U1 = np.asarray(U1, dtype=np.float64)
    S1 = np.asarray(S1, dtype=np.float64)
    n = S1.shape[0]
    if U1.shape != (l * N, n):
        raise DimensionMismatch(f"U1 is {U1.shape}, expected {(l * N, n)}")
    Gamma = U1 * np.sqrt(S1)
    GammaUnder = Gamma[:-l]
    for name, G in (("Gamma", Gamma), ("GammaUnder", GammaUnder)):
        s = np.linalg.svd(G, compute_uv=False)
        if s.shape[0] < n or s[0] == 0.0 or s[-1] < rank_tolerance(G.shape, s[0]):
            raise RankDeficientGamma(f"{name} {G.shape} has numerical rank below the order {n}")
    Xi = pinv(Gamma) @ Oi
    Xip1 = pinv(GammaUnder) @ Oim1
    return SidIntermediate(Oi=Oi, Oim1=Oim1, U1=U1, S1=S1, Gamma=Gamma,
                           GammaUnder=GammaUnder, Xi=Xi, Xip1=Xip1)


def _least_squares(Xi, Xip1, Yi, Ui):
    Xi, Xip1, Yi, Ui = (np.atleast_2d(np.asarray(M, dtype=np.float64)) for M in (Xi, Xip1, Yi, Ui))
    n = Xi.shape[0]
    cols = {M.shape[1] for M in (Xi, Xip1, Yi, Ui)}
    if len(cols) != 1 or Xip1.shape[0] != n:
        raise DimensionMismatch(
            f"incompatible shapes Xi{Xi.shape} Xip1{Xip1.shape} Yi{Yi.shape} Ui{Ui.shape}")
    lhs = np.vstack([Xip1, Yi])
    reg = np.vstack([Xi, Ui])
    s = np.linalg.svd(reg, compute_uv=False)
    positive = s[s > 0]
    cond = float(positive[0] / positive[-1]) if positive.size else float("inf")
    if cond > COND_WARN:
        warnings.warn(f"least-squares regressor condition number {cond:.3g}",
                      IllConditionedRegressor, stacklevel=3)
    theta = lhs @ pinv(reg)
    residual = float(np.linalg.norm(lhs - theta @ reg))
    model = StateSpaceModel(A=theta[:n, :n], B=theta[:n, n:], C=theta[n:, :n], D=theta[n:, n:])
    return model, residual, cond


def solve_system(Xi, Xip1, Yi, Ui) -> tuple[StateSpaceModel, float]:
    """Least-squares fit of ``[X_{i+1}; Y_i] = [[A, B], [C, D]] [X_i; U_i]``."""
    model, residual, _ = _least_squares(Xi, Xip1, Yi, Ui)
    return model, residual


def finish_identification(rec: IoRecord, cfg: SidConfig, stage: SvdStageResult, Oi, Oim1):
    """Estimation stage: states, then the least-squares model."""
    inter = estimate_states(stage.U1, stage.S1, Oi, Oim1, cfg.N, rec.l)
    Yi, Ui = extract_YiUi(rec, cfg.N, cfg.j)
    model, residual, cond = _least_squares(inter.Xi, inter.Xip1, Yi, Ui)
    return model, residual, cond, inter


def identify(rec: IoRecord, cfg: SidConfig, parallel: int = 1) -> IdentificationResult:
    clock = time.perf_counter
    diag = Diagnostics()
    t_start = clock()

    t0 = clock()
    h = build_hankel_set(rec, cfg.N, cfg.j)
    Oi, Oim1 = oblique_stage(h)
    t1 = clock()
    stage = svd_stage(Oi, cfg, parallel=parallel)
    t2 = clock()
    model, residual, cond, _ = finish_identification(rec, cfg, stage, Oi, Oim1)
    t3 = clock()

    diag.stage_times = {"oblique": t1 - t0, "svd": t2 - t1, "estimation": t3 - t2}
    diag.total_time = t3 - t_start
    diag.singular_values = stage.triple.S.copy()
    diag.residual = residual
    diag.condition = cond
    return IdentificationResult(model=model, order=stage.order, diagnostics=diag)
