"""
Building blocks: compressors and proximal steps
===============================================

Top-K keeps the k largest coordinates of a vector. It is a contractive
compressor with delta = k/d, and a dual-averaging step with a simple
regularizer has a closed form.
"""

import numpy as np

from compoda import composite, compressors, diagnostics

rng = np.random.default_rng(0)

# Top-K on a small vector: ties go to the lower index
C = compressors.top_k(2, 5)
s = np.array([0.5, -3.0, 1.0, 3.0, 0.2])
print("s      =", s)
print("C(s)   =", C(s))
print("delta  =", C.delta)

# the worst observed ||C(s) - s||^2 / ||s||^2 stays below 1 - k/d
for d, k in [(10, 1), (10, 5), (200, 20)]:
    rep = compressors.verify_contraction(compressors.top_k(k, d), 2000, rng)
    print(f"top_{k}/{d}: worst ratio {rep.max_ratio:.4f}  (bound {rep.bound:.4f})")

# One dual-averaging step: argmin <S, x> + A psi(x) + gamma/2 ||x - x0||^2
S = np.array([2.0, -0.1, 0.4])
x0 = np.zeros(3)
for psi in (composite.zero(), composite.l1(0.3), composite.ball(0.5)):
    x = composite.composite_prox(psi, S, 1.0, 2.0, x0)
    brute = diagnostics.brute_force_prox(psi, S, 1.0, 2.0, x0)
    print(f"{psi.kind:>5}: x = {np.round(x, 6)}   golden-section gap {np.max(np.abs(x - brute)):.1e}")
