#!/usr/bin/env python3
"""
Step size trades accuracy against convergence time.  A larger alpha
reaches its accuracy floor quickly; a smaller alpha has a tighter
floor but its multiplier ramp is ten times longer, so over a 50k-slot
horizon its running average still carries the transient.

The second multiplier must climb to lambda*_2 = 9, and while the
iterate is interior the inner solution gives x_2 = mu_2 / 18, so the
ramp follows d(mu_2)/dk = alpha (0.5 - mu_2 / 18): time constant
18 / alpha slots.  At alpha = 1e-3 that is 18000 slots, and the
printed gaps below show the from-slot-1 average cannot overtake the
larger step size inside this horizon.
"""

import numpy as np

from dualsched import (ActionSet, AdmissibilityRule, ArrivalProcess,
                       BlockPolicy, DiagonalQuadratic, PerturbationStream,
                       ProblemSpec, fluid_oracle, run_network_sim)

SLOTS = 50_000
SEED = 1
CHECKPOINTS = (1_000, 10_000, 20_000, 50_000)

spec = ProblemSpec(
    objective=DiagonalQuadratic([1.0, 3.0]),
    A=[[-1, 0], [0, -1], [1, 0], [0, 1]],
    delta=[0.25, 0.5, -1.0, -1.0],
    actions=ActionSet([[0, 0], [1, 0], [0, 1]]),
    scale=7.0 / 9.0,
    slater_point=[0.26, 0.51],
    name="access-point")
stream = PerturbationStream([("bernoulli", 0.25), ("bernoulli", 0.5),
                             ("constant", -1.0), ("constant", -1.0)])
rule = AdmissibilityRule.from_pairs(3, [(0, 0), (0, 1), (0, 2), (1, 0),
                                        (1, 1), (2, 0), (2, 2)])

oracle = fluid_oracle(spec)
print(f"f* = {oracle.f_star:.4f}, lambda* = {oracle.lambda_star.tolist()}\n")

for alpha in (1e-2, 1e-3):
    sim = run_network_sim(spec, ArrivalProcess(stream), alpha, SLOTS,
                          policy=BlockPolicy(3, rule), seed=SEED)
    gaps = "  ".join(f"k={k}: {abs(sim.f_xbar[k - 1] - oracle.f_star):.4f}"
                     for k in CHECKPOINTS)
    lam_dist = np.linalg.norm(alpha * sim.queues[-1] - oracle.lambda_star)
    print(f"alpha = {alpha!r}")
    print(f"  |f(xbar_k) - f*|: {gaps}")
    print(f"  final ||alpha Q - lambda*|| = {lam_dist:.4f} "
          f"(ramp time constant {int(18 / alpha)} slots)\n")
