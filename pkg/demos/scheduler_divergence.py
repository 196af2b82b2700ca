#!/usr/bin/env python3
"""
The discrete schedulers never drift from the continuous weights they
track.  Feeding each policy a long stream of random simplex vectors
shows the cumulative divergence staying inside its closed-form bound.
"""

import numpy as np

from dualsched import (divergence_bound, run_amortized_random,
                       run_block_chain_random, run_myopic_random)

STEPS = 200_000
BLOCKS = 500
SEED = 42

print("myopic rule, one action per step")
for V in (2, 3, 5, 8):
    stats = run_myopic_random(V, STEPS, seed=SEED)
    bound = divergence_bound(V)
    print(f"  V = {V}: worst ||s||_2 = {stats.max_norm2:.4f}  "
          f"bound sqrt(V)(V-1) = {bound:.4f}  "
          f"components in [{stats.min_component:.3f}, "
          f"{stats.max_component:.3f}]")

print("\namortized rule, action updated every tau steps (V = 3)")
for tau in (2, 3, 5):
    stats = run_amortized_random(3, STEPS, tau, seed=SEED)
    print(f"  tau = {tau}: worst ||s||_2 = {stats.max_norm2:.4f}  "
          f"bound tau*C = {tau * divergence_bound(3):.4f}")

print("\nblock rule, T*V actions chosen at once")
for V, T in ((2, 3), (3, 3)):
    stats = run_block_chain_random(V, T, BLOCKS, seed=SEED)
    print(f"  V = {V}, T = {T}: carried residual inf-norm "
          f"{stats.max_carried_inf:.4f} (must stay <= 1), "
          f"in-block inf-norm {stats.max_intra_inf:.4f} "
          f"(bound {1 + 2 * V})")
    assert abs(stats.carried.sum()) < 1e-9
