"""Identify the ball-beam plant from a simulated white-noise experiment.

Run with ``python demos/identify_ball_beam.py``.
"""
import numpy as np

from fastsid import SidConfig, ball_beam, gen_excitation, identify, simulate

truth = ball_beam()
N, j = 10, 1000

# The record must hold 2N + j - 1 samples for the past/future Hankel matrices.
u = gen_excitation(2 * N + j - 1, m=1, seed=0)
rec = simulate(truth, u)
print(f"record: {len(rec)} samples, output range [{rec.y.min():.3g}, {rec.y.max():.3g}]")

res = identify(rec, SidConfig(N, j))
print("leading singular values of the projection:", np.array2string(res.diagnostics.singular_values[:4], precision=3))
print("identified order:", res.order)

# State coordinates are arbitrary, so compare basis-free quantities.
h_true = truth.markov_parameters(10)[:, 0, 0]
h_hat = res.model.markov_parameters(10)[:, 0, 0]
print("Markov parameters (truth):", np.array2string(h_true, precision=6))
print("Markov parameters (fit):  ", np.array2string(h_hat, precision=6))
print("eigenvalues of identified A:", np.linalg.eigvals(res.model.A))

for stage, seconds in res.diagnostics.stage_times.items():
    print(f"{stage:>10}: {1e3 * seconds:7.2f} ms")
