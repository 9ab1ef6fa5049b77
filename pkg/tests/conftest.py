import math

import numpy as np
import pytest
from hypothesis import settings

from pathkac.paths import GridPath

settings.register_profile("pkg", max_examples=25, deadline=None)
settings.load_profile("pkg")


def random_walk(seed, m=1, T=1.0, dt=1e-3, scale=1.0):
    rng = np.random.default_rng(seed)
    n = round(T / dt)
    inc = rng.normal(0.0, scale * math.sqrt(dt), (n, m))
    return GridPath(np.vstack([np.zeros((1, m)), inc]).cumsum(axis=0), dt)


@pytest.fixture
def walk():
    return random_walk


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
