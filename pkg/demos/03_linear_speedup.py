"""
Noise floor versus number of clients
====================================

With a small constant stepsize, the method settles at a noise floor.
When every client holds the same objective, averaging n independent
noisy gradients divides the variance by n, so the floor should drop
roughly like 1/n.
"""

import numpy as np

from compoda import experiment
from compoda.config import load_config
from pathlib import Path

base = load_config(Path(__file__).parents[1] / "configs" / "linear_speedup.toml")
T = base["algorithm"]["T"]

plateau = {}
for n in (2, 8, 32):
    cfg = {**base, "clients": {**base["clients"], "n": n}}
    trace = experiment.run_setup(experiment.build(cfg))
    F = trace.column("F_real")
    plateau[n] = F[int(0.8 * T):].mean()
    print(f"n={n:>2}: plateau {plateau[n]:.5f}")

print("ratio n=2 / n=32:", round(plateau[2] / plateau[32], 1), "(ideal 16)")
