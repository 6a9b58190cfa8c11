"""
EControl against proximal EF and EF21 on sparse logistic regression
===================================================================

Ten clients each hold examples of a single class of a synthetic
ten-class dataset (one-vs-rest labels, l1 penalty). All three methods
get the same per-client communication budget: uncompressed transfers
cost m each, so EControl (two of them) and EF21 (one) run fewer
compressed rounds than plain EF (none).
"""

import dataclasses
from pathlib import Path

from compoda import experiment
from compoda.config import load_config

configs = Path(__file__).parents[1] / "configs"
budget = 1000

first = None
for kind in ("econtrol_da", "prox_ef", "prox_ef21"):
    cfg = load_config(configs / f"logistic_{kind}.toml")
    setup = experiment.build(cfg) if first is None else dataclasses.replace(first, cfg=cfg)
    first = first or setup
    extra = {"econtrol_da": 2, "prox_ef": 0, "prox_ef21": 1}[kind]
    T = budget - int(extra * setup.m)
    grid = cfg["algorithm"]["stepsize"]["grid"]
    losses = []
    for v in grid:
        trace = experiment.run_setup(setup, value=v, T=T)
        losses.append(trace.records[-1].F_real)
    best = min(range(len(grid)), key=losses.__getitem__)
    print(f"{kind:>12}: T={T:4d}  best grid value {grid[best]:<7g} final F - F* = {losses[best]:.5f}")
