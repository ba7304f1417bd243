import numpy as np
import pytest


class ScriptedRng:
    """Replays a fixed sequence of draws; used to enumerate randomness exactly.

    Each scheduled draw is either a bare value (accepted for any range) or a
    (bound, value) pair asserting the range the code under test requested.
    """

    def __init__(self, draws):
        self.draws = list(draws)
        self.pos = 0

    def randrange(self, n):
        assert self.pos < len(self.draws), "script exhausted"
        item = self.draws[self.pos]
        self.pos += 1
        if isinstance(item, tuple):
            bound, value = item
            assert bound == n, f"draw {self.pos}: expected bound {bound}, got {n}"
        else:
            value = item
        assert 0 <= value < n
        return value

    def random(self):
        return self.randrange(2**53) / 2**53

    @property
    def exhausted(self):
        return self.pos == len(self.draws)


class ConstantRandom:
    """random() always returns the same u (for quantile-at-median style tests)."""

    def __init__(self, u):
        self.u = u

    def random(self):
        return self.u


@pytest.fixture
def scripted():
    return ScriptedRng


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)
