import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fastsid.bench import (DEFAULT_GRID, ExperimentConfig, compare_once, flops_model, flops_upper_bound,
                           format_comparison, format_stage_table, profile_stages, run_comparison,
                           speedup, write_report)
from fastsid.errors import InvalidPartition, InvalidShape, ZeroParallelTime


def test_flops_worked_examples():
    assert flops_model(10, 10, 1, 0) == 22000
    assert flops_model(100, 1000, 10, 10) == 222_124_000


def test_flops_guards():
    with pytest.raises(InvalidPartition):
        flops_model(10, 10, 11, 0)
    with pytest.raises(InvalidPartition):
        flops_model(10, 100, 10, 11)


def random_tuples(count, seed):
    r = np.random.default_rng(seed)
    for _ in range(count):
        n = int(r.integers(2, 5000))
        N = int(r.integers(1, n + 1))
        yield int(r.integers(1, 5000)), n, N, int(r.integers(0, n // N + 1))


def test_upper_bound_holds_on_100_tuples():
    for m, n, N, k in random_tuples(100, 0):
        assert flops_model(m, n, N, k) < flops_upper_bound(m, n, N)


@given(st.integers(1, 200), st.integers(1, 40), st.integers(1, 20))
def test_flops_non_increasing_in_provable_range(m, k, ratio):
    n = 2 * k * ratio
    prev = math.inf
    for N in range(1, n // (2 * k) + 1):
        cur = flops_model(m, n, N, k)
        assert cur <= prev
        prev = cur


def test_flops_monotonicity_fails_near_full_split():
    # merges dominate once blocks are as narrow as the rank
    assert flops_model(100, 1000, 100, 10) > flops_model(100, 1000, 50, 10)


def test_speedup():
    assert speedup(1.0, 1.0) == 1.0
    assert round(speedup(18.1912, 1.7625), 2) == 10.32
    with pytest.raises(ZeroParallelTime):
        speedup(2.0, 0)


def test_config():
    cfg = ExperimentConfig()
    assert cfg.scale_params == DEFAULT_GRID and cfg.repeats == 20
    cfg = ExperimentConfig.from_dict({"scaleParams": [[10, 300]], "repeats": 2, "cpusPerNode": 8, "latencyMs": 5})
    assert cfg.scale_params == [(10, 300)] and cfg.cpus_per_node == 8 and cfg.latency_ms == 5
    with pytest.raises(InvalidShape):
        ExperimentConfig(scale_params=[(10, 50)])
    with pytest.raises(ValueError):
        ExperimentConfig(repeats=0)
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"bogus": 1})


def test_profile_percentages():
    rows = profile_stages(ExperimentConfig(scale_params=[(10, 300)], repeats=2))
    row = rows[0]
    assert abs(sum(row.percent.values()) - 100.0) <= 0.2
    assert row.major_stage in row.percent
    assert "N=10, j=300" in format_stage_table(rows)


def test_comparison_report(tmp_path):
    cfg = ExperimentConfig(scale_params=[(10, 300)], repeats=1, mpt=2)
    rep = run_comparison(cfg)
    row = rep.rows[0]
    assert row.reduction == 1.0 - row.workflow_mean / row.baseline_mean
    assert row.speedup == row.baseline_mean / row.workflow_mean
    assert row.baseline_std == 0.0 and row.workflow_std == 0.0
    assert row.max_sv_gap <= 1e-9 and row.max_markov_gap <= 1e-9
    paths = write_report(rep, tmp_path)
    doc = json.loads(paths["json"].read_text())
    assert doc["rows"][0]["speedup"] == pytest.approx(row.speedup)
    rows = list(csv.reader(paths["csv"].open()))
    assert rows[0][2] == "N=10 j=300"
    assert "Speedup" in format_comparison(rep)


def test_compare_once_models_agree():
    cfg = ExperimentConfig(scale_params=[(10, 300)], repeats=1, mpt=5)
    tb, tw, base, flow = compare_once(10, 300, cfg, seed=3)
    assert tb > 0 and tw > 0
    assert base.order == flow.order == 2
