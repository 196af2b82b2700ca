"""Shared builders for the two-queue access-point instance.

Most tests exercise the same small network: two transmit actions plus
an idle action, lower bounds from Bernoulli arrival rates, and upper
bounds of one packet per slot.  The builders return fresh objects so
tests can mutate nothing shared.
"""

import numpy as np
import pytest

from dualsched import (ActionSet, AdmissibilityRule, DiagonalQuadratic,
                       PerturbationStream, ProblemSpec, fluid_oracle)

AP_PAIRS = [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0), (2, 2)]
AP_A = [[-1.0, 0.0], [0.0, -1.0], [1.0, 0.0], [0.0, 1.0]]
AP_POINTS = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
AP_SCALE = 7.0 / 9.0


def make_ap_spec(weights=(1.0, 3.0), mean=(0.25, 0.5, -1.0, -1.0),
                 scale=AP_SCALE, slater=(0.26, 0.51)):
    return ProblemSpec(
        objective=DiagonalQuadratic(weights),
        A=np.array(AP_A),
        delta=np.array(mean, dtype=float),
        actions=ActionSet(AP_POINTS),
        scale=scale,
        slater_point=None if slater is None
        else np.array(slater, dtype=float),
        name="access-point")


def make_ap_stream(b1=0.25, b2=0.5):
    return PerturbationStream([("bernoulli", b1), ("bernoulli", b2),
                               ("constant", -1.0), ("constant", -1.0)])


def make_ap_rule():
    return AdmissibilityRule.from_pairs(3, AP_PAIRS)


@pytest.fixture
def ap_spec():
    return make_ap_spec()


@pytest.fixture
def ap_stream():
    return make_ap_stream()


@pytest.fixture
def ap_rule():
    return make_ap_rule()


@pytest.fixture(scope="session")
def ap_oracle():
    """Certified fluid optimum of the access-point instance."""
    result = fluid_oracle(make_ap_spec(), reference_dual=[2.0, 1.0])
    assert result.certified
    return result
