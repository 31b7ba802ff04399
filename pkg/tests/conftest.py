import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mulane import build_network, make_layer  # noqa: E402


def cycle_layer(name="cyc", a="a", b="b", alpha="fixed-node", cap=3):
    return make_layer(name, [(a, b, 1.0), (b, a, 1.0)], alpha, cap)


def path_layer(alpha="fixed-node", cap=5):
    return make_layer("p3", [("u", "v", 1), ("v", "u", 1), ("v", "w", 1), ("w", "v", 1)], alpha, cap)


@pytest.fixture
def two_cycles():
    """Disjoint a<->b and c<->d, walkers start on a and c, unit weights."""
    net = build_network([cycle_layer("L1", "a", "b", cap=2), cycle_layer("L2", "c", "d", cap=2)],
                        default_weight=1.0)
    return net


@pytest.fixture
def p3():
    return build_network([path_layer()], default_weight=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
