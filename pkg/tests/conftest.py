import numpy as np
import pytest

from beaconsim import propagation, scenario


class ForcedRng:
    """Deterministic rng stub: integers() pops from a script, random() likewise."""

    def __init__(self, ints=(), floats=()):
        self._ints = list(ints)
        self._floats = list(floats)

    def integers(self, low, high=None, size=None):
        if size is not None:
            return np.array([self._ints.pop(0) for _ in range(size)])
        return self._ints.pop(0)

    def random(self, size=None):
        if size is None:
            return self._floats.pop(0)
        return np.array([self._floats.pop(0) for _ in range(size)])


@pytest.fixture
def forced_rng():
    return ForcedRng


def make_channel(gains_dbm_at_unit_power, n):
    """Channel whose link gains produce the given rx powers at 0 dBm tx power."""
    g = np.full((n, n), -np.inf)
    for (a, b), val in gains_dbm_at_unit_power.items():
        g[a, b] = val
        g[b, a] = val
    return propagation.ChannelRealization(gain_db=g, seed=0)


@pytest.fixture
def line_scenario():
    def make(positions, length_m=2000.0, wraparound=True):
        return scenario.scenario_from_positions(positions, length_m, wraparound)
    return make
