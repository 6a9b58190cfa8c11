"""Compressed distributed composite optimization.

EControl error feedback combined with dual averaging, proximal EF and EF21
baselines, and diagnostics for checking the deterministic inequalities that
hold along every run.
"""

from .algorithms import (RunTrace, StepsizeParams, StepsizeSchedule, gamma_fixed, gamma_real,
                         gamma_variable, reference_solve, run_econtrol_da, run_exact_da, run_prox_ef,
                         run_prox_ef21)
from .composite import CompositePart, composite_prox
from .compressors import Compressor, identity, top_k, verify_contraction
from .feedback import EControlClient, EF21Client, EFClient, eta_default

__version__ = "0.1.0"
