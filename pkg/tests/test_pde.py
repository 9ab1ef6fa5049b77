import math

import numpy as np
import pytest

from pathkac.diffusion import brownian, ornstein_uhlenbeck
from pathkac.errors import SolverError
from pathkac.pde import default_domain, pde_reference, smooth_cutoff

density = lambda x, v=1.0: np.exp(-x * x / (2 * v)) / math.sqrt(2 * math.pi * v)  # noqa: E731
zero = lambda x: np.zeros_like(x)  # noqa: E731


def test_heat_flow_matches_convolved_gaussian():
    g = pde_reference(zero, brownian(1), density, 0.5, -8.0, 8.0, nx=3201, dt=5e-4)
    inner = np.abs(g.x) < 4
    assert np.max(np.abs(g.values[-1][inner] - density(g.x[inner], 1.5))) <= 1e-6


def test_constant_potential_factors():
    base = pde_reference(zero, brownian(1), density, 1.0, -8.0, 8.0, nx=401, dt=1e-3)
    lam = pde_reference(lambda x: np.full_like(x, 0.3), brownian(1), density, 1.0, -8.0, 8.0, nx=401, dt=1e-3)
    assert np.max(np.abs(lam.values[-1] - math.exp(0.3) * base.values[-1])) <= 1e-8


def test_cameron_martin_value():
    g = pde_reference(lambda x: -0.5 * x * x, brownian(1), smooth_cutoff(-8, 8), 1.0, -8.0, 8.0)
    assert abs(g.at(0.0) - 1 / math.sqrt(math.cosh(1.0))) <= 1e-3


def test_semigroup_property():
    spec = ornstein_uhlenbeck(1.0, 1.0)
    vbar = lambda x: -0.2 * x * x  # noqa: E731
    f = lambda x: np.exp(-((x - 0.5) ** 2))  # noqa: E731
    full = pde_reference(vbar, spec, f, 1.0, -6, 6, nx=301, dt=1e-2)
    half = pde_reference(vbar, spec, f, 0.5, -6, 6, nx=301, dt=1e-2)
    again = pde_reference(vbar, spec, lambda x: np.interp(x, half.x, half.values[-1]), 0.5, -6, 6, nx=301, dt=1e-2)
    np.testing.assert_allclose(again.values[-1], full.values[-1], atol=1e-13)


def test_second_order_in_space():
    errs = []
    for nx in (201, 401):
        g = pde_reference(zero, brownian(1), density, 0.5, -8.0, 8.0, nx=nx, dt=1e-4)
        errs.append(abs(g.at(0.0) - density(0.0, 1.5)))
    assert errs[0] / errs[1] > 3.5


def test_errors_and_domain():
    with pytest.raises(SolverError):
        pde_reference(zero, brownian(1), lambda x: np.where(np.abs(x) < 1, np.nan, 0.0), 0.1, -2, 2, nx=11, dt=0.05)
    with pytest.raises(ValueError):
        pde_reference(zero, brownian(1), density, 0.1, nx=2)
    lo, hi = default_domain(brownian(1), 1.0, 0.5)
    assert (lo, hi) == pytest.approx((-7.5, 8.5))
    cut = smooth_cutoff(-4, 4)
    assert cut(np.array([0.0, 2.9, 4.0]))[[0, 2]].tolist() == [1.0, 0.0]
