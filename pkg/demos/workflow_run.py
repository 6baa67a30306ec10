"""Run identification as a task graph on a simulated four-node cluster.

Run with ``python demos/workflow_run.py``.
"""
import json

import numpy as np

from fastsid import SidConfig, ball_beam, build_sid_workflow, emit_template, gen_excitation, identify, simulate
from fastsid.dagflow import Image
from fastsid.executor import identify_workflow

N, j, P = 20, 10_000, 10
w = build_sid_workflow(P, SidConfig(N, j))
print(f"P={P}: {w.task_count()} tasks (+1 Ini), mpt={w.mpt}")
for image in Image:
    print(f"  {image.value:>3}: {[t.id for t in w.by_image(image)]}")
print("template head:", emit_template(w)[:120].replace("\n", " "), "...")

rec = simulate(ball_beam(), gen_excitation(2 * N + j - 1, 1, seed=0))
base = identify(rec, SidConfig(N, j))
flow, report = identify_workflow(rec, SidConfig(N, j), P, nodes=4, cpus=16)

print(f"sequential: {base.diagnostics.total_time:.3f} s, workflow makespan: {report.makespan:.3f} s")
gap = np.abs(base.diagnostics.singular_values[:2] - flow.diagnostics.singular_values[:2]).max()
print("singular value gap between the two runs:", gap)
print(json.dumps(report.to_dict()["per_stage_s"], indent=2))
print("placement:", json.dumps(report.schedule))
