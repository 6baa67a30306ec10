"""Experiment harness: stage profiling, baseline vs workflow timing, flop model."""
from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidPartition, InvalidShape, ZeroParallelTime
from .executor import identify_workflow
from .n4sid import STAGES, IdentificationResult, SidConfig, identify
from .plantsim import StateSpaceModel, ball_beam, gen_excitation, simulate

DEFAULT_GRID = [(10, 300), (20, 300), (10, 1000), (20, 1000),
                (10, 10000), (20, 10000), (50, 10000), (50, 20000)]

# how many Markov parameters the accuracy comparison looks at
MARKOV_TERMS = 10


@dataclass
class ExperimentConfig:
    scale_params: list[tuple[int, int]] = field(default_factory=lambda: list(DEFAULT_GRID))
    repeats: int = 20
    mpt: int = 10
    nodes: int = 4
    cpus_per_node: int = 16
    seed: int = 0
    latency_ms: float = 0.0
    svd_complete: bool = True

    _KEYS = {"scaleParams": "scale_params", "cpusPerNode": "cpus_per_node",
             "latencyMs": "latency_ms", "svdComplete": "svd_complete"}

    def __post_init__(self):
        self.scale_params = [(int(N), int(j)) for N, j in self.scale_params]
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.mpt < 1 or self.nodes < 1 or self.cpus_per_node < 1:
            raise ValueError("mpt, nodes and cpusPerNode must be >= 1")
        for N, j in self.scale_params:
            if j < 10 * N:
                raise InvalidShape(f"(N={N}, j={j}) violates the j >= 10N guard")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        kw = {cls._KEYS.get(k, k): v for k, v in doc.items()}
        unknown = set(kw) - {f for f in cls.__dataclass_fields__ if not f.startswith("_")}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def record_for(model: StateSpaceModel, N: int, j: int, seed: int):
    L = 2 * N + j - 1
    return simulate(model, gen_excitation(L, model.m, seed))


# --- cost model ------------------------------------------------------------

def flops_model(m: int, n: int, N: int, k: int) -> float:
    """Flop estimate for the column-blocked truncated SVD of an ``m x n`` matrix.

    ``N`` blocks of width ``s = n/N`` each cost a complete SVD
    ``6 m s^2 + 16 s^3``; each of the ``N - 1`` merges of rank-``k`` pieces
    costs ``6 m k^2 + 176 k^3``. ``N = 1`` is the plain ``6 m n^2 + 16 n^3``.
    """
    if N < 1 or N > n:
        raise InvalidPartition(f"cannot split {n} columns into {N} blocks")
    s = n / N
    if k < 0 or k > s:
        raise InvalidPartition(f"rank {k} exceeds block width {s}")
    if N == 1:
        return 6 * m * n**2 + 16 * n**3
    return N * (6 * m * s**2 + 16 * s**3) + (N - 1) * (6 * m * k**2 + 176 * k**3)


def flops_upper_bound(m: int, n: int, N: int) -> float:
    return 12 * m * n**2 / N + 192 * n**3 / N**2


def speedup(ts: float, tp: float) -> float:
    if tp <= 0:
        raise ZeroParallelTime(f"parallel time must be positive, got {tp}")
    return ts / tp


# --- stage profiling -------------------------------------------------------

@dataclass
class StageRow:
    N: int
    j: int
    mean: dict[str, float]
    std: dict[str, float]
    percent: dict[str, float]
    total: float
    repeats: int

    @property
    def major_stage(self) -> str:
        return max(self.percent, key=self.percent.get)


def profile_stages(cfg: ExperimentConfig, model: StateSpaceModel | None = None) -> list[StageRow]:
    """Average sequential per-stage wall time over ``cfg.repeats`` fresh records."""
    model = ball_beam() if model is None else model
    rows = []
    for N, j in cfg.scale_params:
        sid = SidConfig(N, j, svd_complete=cfg.svd_complete)
        samples = {s: [] for s in STAGES}
        # first call pays one-off LAPACK/allocator warm-up; keep it out of the averages
        identify(record_for(model, N, j, cfg.seed), sid)
        for r in range(cfg.repeats):
            res = identify(record_for(model, N, j, cfg.seed + r), sid)
            for s in STAGES:
                samples[s].append(res.diagnostics.stage_times[s])
        mean = {s: float(np.mean(v)) for s, v in samples.items()}
        std = {s: float(np.std(v)) for s, v in samples.items()}
        total = sum(mean.values())
        percent = {s: 100.0 * mean[s] / total for s in STAGES}
        rows.append(StageRow(N, j, mean, std, percent, total, cfg.repeats))
    return rows


def format_stage_table(rows: list[StageRow]) -> str:
    head = f"{'params':>16} | " + " | ".join(f"{s:>18}" for s in STAGES) + f" | {'total (s)':>9} | major"
    lines = [head, "-" * len(head)]
    for r in rows:
        cells = " | ".join(f"{r.mean[s]:9.4f} {r.percent[s]:6.1f}% " for s in STAGES)
        lines.append(f"{f'N={r.N}, j={r.j}':>16} | {cells} | {r.total:9.4f} | {r.major_stage}")
    return "\n".join(lines)


# --- baseline vs workflow --------------------------------------------------

def _relative_sv_gap(a: IdentificationResult, b: IdentificationResult) -> float:
    n = min(a.order, b.order)
    sa, sb = a.diagnostics.singular_values[:n], b.diagnostics.singular_values[:n]
    return float(np.max(np.abs(sa - sb)) / sa[0])


def _relative_markov_gap(a: StateSpaceModel, b: StateSpaceModel, terms: int = MARKOV_TERMS) -> float:
    ha, hb = a.markov_parameters(terms), b.markov_parameters(terms)
    scale = np.max(np.abs(ha))
    return float(np.max(np.abs(ha - hb)) / scale) if scale > 0 else float(np.max(np.abs(hb)))


@dataclass
class ComparisonRow:
    N: int
    j: int
    mpt: int
    baseline_mean: float
    baseline_std: float
    workflow_mean: float
    workflow_std: float
    baseline_stage_means: dict[str, float]
    max_sv_gap: float
    max_markov_gap: float
    repeats: int

    @property
    def reduction(self) -> float:
        return 1.0 - self.workflow_mean / self.baseline_mean

    @property
    def speedup(self) -> float:
        return speedup(self.baseline_mean, self.workflow_mean)


@dataclass
class BenchReport:
    config: ExperimentConfig
    rows: list[ComparisonRow]

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        return {
            "config": cfg,
            "rows": [{**asdict(r), "reduction": r.reduction, "speedup": r.speedup} for r in self.rows],
        }


def compare_once(N: int, j: int, cfg: ExperimentConfig, seed: int, model: StateSpaceModel | None = None):
    """One baseline run and one workflow run on the same record.

    Returns ``(baseline_seconds, workflow_seconds, baseline_result, workflow_result)``.
    """
    model = ball_beam() if model is None else model
    rec = record_for(model, N, j, seed)
    sid = SidConfig(N, j, svd_complete=cfg.svd_complete)
    t0 = time.perf_counter()
    base = identify(rec, sid)
    t1 = time.perf_counter()
    flow, _ = identify_workflow(rec, sid, cfg.mpt, nodes=cfg.nodes, cpus=cfg.cpus_per_node,
                                latency_ms=cfg.latency_ms)
    t2 = time.perf_counter()
    return t1 - t0, t2 - t1, base, flow


def time_workflow(N: int, j: int, P: int, cfg: ExperimentConfig,
                  model: StateSpaceModel | None = None) -> list[float]:
    """Wall times of ``cfg.repeats`` workflow runs with parallelism ``P`` (no baseline)."""
    model = ball_beam() if model is None else model
    sid = SidConfig(N, j, svd_complete=cfg.svd_complete)
    times = []
    for r in range(cfg.repeats):
        rec = record_for(model, N, j, cfg.seed + r)
        t0 = time.perf_counter()
        identify_workflow(rec, sid, P, nodes=cfg.nodes, cpus=cfg.cpus_per_node, latency_ms=cfg.latency_ms)
        times.append(time.perf_counter() - t0)
    return times


def run_comparison(cfg: ExperimentConfig, model: StateSpaceModel | None = None) -> BenchReport:
    rows = []
    for N, j in cfg.scale_params:
        tb, tw, sv_gap, mk_gap = [], [], 0.0, 0.0
        stage_sum = {s: 0.0 for s in STAGES}
        for r in range(cfg.repeats):
            b, w, base, flow = compare_once(N, j, cfg, cfg.seed + r, model)
            tb.append(b)
            tw.append(w)
            for s in STAGES:
                stage_sum[s] += base.diagnostics.stage_times[s]
            sv_gap = max(sv_gap, _relative_sv_gap(base, flow))
            mk_gap = max(mk_gap, _relative_markov_gap(base.model, flow.model))
        rows.append(ComparisonRow(
            N=N, j=j, mpt=cfg.mpt,
            baseline_mean=float(np.mean(tb)), baseline_std=float(np.std(tb)),
            workflow_mean=float(np.mean(tw)), workflow_std=float(np.std(tw)),
            baseline_stage_means={s: v / cfg.repeats for s, v in stage_sum.items()},
            max_sv_gap=sv_gap, max_markov_gap=mk_gap, repeats=cfg.repeats))
    return BenchReport(cfg, rows)


def format_comparison(report: BenchReport) -> str:
    cols = [f"N={r.N},j={r.j}" for r in report.rows]
    width = max([14] + [len(c) for c in cols])
    lines = [" " * 22 + "".join(f"{c:>{width + 2}}" for c in cols)]
    fields = [
        ("Baseline time (s)", lambda r: f"{r.baseline_mean:.4f}"),
        (f"MPT={report.config.mpt} time (s)", lambda r: f"{r.workflow_mean:.4f}"),
        ("Reduction", lambda r: f"{100 * r.reduction:.1f}%"),
        ("Speedup", lambda r: f"{r.speedup:.2f}"),
    ]
    for label, fmt in fields:
        lines.append(f"{label:<22}" + "".join(f"{fmt(r):>{width + 2}}" for r in report.rows))
    return "\n".join(lines)


def write_report(report: BenchReport, outdir) -> dict[str, Path]:
    """Write ``report.json`` and a wide-format ``comparison.csv`` (one column per scale)."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"json": out / "report.json", "csv": out / "comparison.csv"}
    paths["json"].write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    with open(paths["csv"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["group", "metric"] + [f"N={r.N} j={r.j}" for r in report.rows])
        w.writerow(["Baseline", "Time (s)"] + [f"{r.baseline_mean:.4f}" for r in report.rows])
        label = f"MPT={report.config.mpt} nodes={report.config.nodes}x{report.config.cpus_per_node}CPU"
        w.writerow([label, "Time (s)"] + [f"{r.workflow_mean:.4f}" for r in report.rows])
        w.writerow([label, "Reduction"] + [f"{100 * r.reduction:.1f}%" for r in report.rows])
        w.writerow([label, "Speedup"] + [f"{r.speedup:.4f}" for r in report.rows])
    return paths


def logical_cpus() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1
