import collections

import numpy as np
import pytest


class ScriptedRNG:
    """Stand-in generator that replays fixed values for the three primitives the engine draws."""

    def __init__(self, random=(), normal=(), cauchy=()):
        self.queues = {
            "random": collections.deque(float(v) for v in random),
            "normal": collections.deque(float(v) for v in normal),
            "cauchy": collections.deque(float(v) for v in cauchy),
        }
        self.log = []

    def _take(self, kind, size):
        shape = () if size is None else (size if isinstance(size, tuple) else (int(size),))
        n = int(np.prod(shape)) if shape else 1
        q = self.queues[kind]
        if len(q) < n:
            raise AssertionError(f"script ran out of {kind} draws (wanted {n}, have {len(q)})")
        vals = np.array([q.popleft() for _ in range(n)])
        self.log.append((kind, shape))
        return float(vals[0]) if not shape else vals.reshape(shape)

    def random(self, size=None):
        return self._take("random", size)

    def standard_normal(self, size=None):
        return self._take("normal", size)

    def standard_cauchy(self, size=None):
        return self._take("cauchy", size)

    def exhausted(self):
        return all(not q for q in self.queues.values())


@pytest.fixture
def scripted():
    return ScriptedRNG
