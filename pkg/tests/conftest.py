from __future__ import annotations

import numpy as np
import pytest

from tanglefluid.fluid_dde import DdeInit


def random_inits(n: int, seed: int, pieces=(1, 2, 4, 5, 10), hs=(0.5, 1.0, 2.0)) -> list[DdeInit]:
    """Random valid initial conditions: a_h in [h/4, 4h], u piecewise constant in [0, 2].

    Piece counts divide 100, so the kinks of b fall on solver nodes for dt = h/100, h/200, h/1000.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        h = float(rng.choice(hs))
        a_h = float(rng.uniform(h / 4, 4 * h))
        K = int(rng.choice(pieces))
        u = tuple(float(x) for x in rng.uniform(0.0, 2.0, K))
        out.append(DdeInit(a_h, u, h))
    return out


@pytest.fixture(scope="session")
def init_suite() -> list[DdeInit]:
    return random_inits(20, seed=20240611)
