import numpy as np
import pytest

from blowlab.params import make_params
from blowlab.hermite import gauss_rule

# frozen before the main build: adaptive quadrature (scipy + mpmath agree to
# 1e-11 relative) of the curvature source against the 2k-th basis function,
# at p=3, k=2, b=1, s=20
P4_R0_ORACLE = 3.7100733086375630e-07

# consistency-state ensemble: sharp enough that the 4th-order truncation
# dominates roundoff at 4096 nodes, smooth enough to stay below 1e-6
BUMP_WIDTHS = (0.009, 0.016)
BUMP_AMP = 0.25


@pytest.fixture(scope="session")
def params3():
    return make_params(3.0, 2)


@pytest.fixture(scope="session")
def quad96():
    return gauss_rule(96)


def random_bumps(nodes, rng, n=3, widths=BUMP_WIDTHS, amp=BUMP_AMP):
    out = np.zeros_like(nodes)
    for _ in range(n):
        a = rng.uniform(-amp, amp)
        c = rng.uniform(-0.4, 0.4)
        w = rng.uniform(*widths)
        out += a * np.exp(-(((nodes - c) / w) ** 2))
    return out
