import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_walk
from pathkac.errors import ShapeError
from pathkac.hermite import HermiteState, delta_coeffs, project
from pathkac.paths import GridPath
from pathkac.potential import (
    check_prefix_determinism,
    make_constant,
    make_linear_functional,
    make_norm_potential,
    make_path_integral_norm,
    make_quadratic_potential,
    make_state_potential,
    make_time_potential,
    parse_potential,
    potential_from_params,
    validate_potential,
)


def test_constant_potential():
    c = make_constant(-2.5)
    y = random_walk(0)
    assert c(0.5, y) == -2.5
    assert c.bound(10.0, 3.0) == 2.5
    assert make_constant(1.0)(0.3, y) == 1.0


def test_linear_functional_on_delta_zero():
    V = HermiteState(np.r_[2.0, np.zeros(4)], 4)
    y = GridPath.constant(delta_coeffs(0.0, 4).coeffs, 1.0, 0.5)
    assert V.coeffs[0] * math.pi**-0.25 == pytest.approx(make_linear_functional(V)(0.5, y))
    assert make_linear_functional(HermiteState.zeros(4))(0.5, y) == 0.0


def test_linear_functional_evaluates_projected_function():
    vbar = lambda x: np.exp(-0.5 * (x - 0.3) ** 2)  # noqa: E731
    c = make_linear_functional(project(vbar, 64))
    xs = np.linspace(-1.5, 1.5, 31)
    y = GridPath(np.stack([delta_coeffs(x, 64).coeffs for x in xs]), 0.1)
    np.testing.assert_allclose(c.values(y), vbar(xs), atol=1e-8)


def test_linear_functional_dimension_check():
    c = make_linear_functional(HermiteState(np.ones(3), 2))
    with pytest.raises(ShapeError):
        c(0.0, GridPath.constant([1.0, 2.0], 1.0, 0.5))


def test_state_potentials():
    y = GridPath.constant([3.0, 4.0], 1.0, 0.5)
    assert make_norm_potential()(0.5, y) == 5.0
    q = make_quadratic_potential(-0.5, radius=2.0)
    assert q.bound(2.0, 1.0) == 2.0
    seven = make_state_potential(lambda v: np.full(v.shape[:-1], 7.0), 0.0, lambda a, T: 7.0)
    assert seven(0.5, y) == make_constant(7)(0.5, y)


def test_time_potential_values():
    c = make_time_potential(lambda t: t, lambda a, T: T)
    y = GridPath.constant([0.0], 1.0, 0.25)
    np.testing.assert_array_equal(c.values(y), y.times)


def test_validator_passes_true_declarations():
    r = validate_potential(make_constant(3.0), 2.0, 1.0, 30, 0)
    assert r.passed and r.max_ratio == 0.0 and r.max_abs == 3.0
    r = validate_potential(make_norm_potential(), 2.0, 1.0, 50, 1, m=3)
    assert r.passed and r.max_ratio <= 1.0 + 1e-12
    r = validate_potential(make_path_integral_norm(), 2.0, 1.0, 50, 2, m=2)
    assert r.passed


def test_validator_catches_false_beta():
    norm = make_norm_potential()
    lying = norm.__class__(norm.eval, lambda T: 0.5, norm.bound, "norm", norm.eval_path)
    r = validate_potential(lying, 2.0, 1.0, 5, 0)
    assert not r.passed and r.max_ratio > 0.5


def test_validator_catches_anticipation():
    def peeking(t, y):
        return float(y.values[-1, 0])

    c = make_constant(0.0).__class__(peeking, lambda T: 1.0, lambda a, T: a, "peek")
    r = validate_potential(c, 1.0, 1.0, 20, 0)
    assert r.anticipation_violations > 0 and not r.passed


@pytest.mark.parametrize("factory", [lambda: make_constant(1.5), make_norm_potential, make_path_integral_norm])
def test_negation_closure(factory):
    r = validate_potential(factory().negate(), 1.5, 1.0, 30, 4, m=2)
    assert r.passed


@given(st.integers(0, 2**31), st.floats(0.1, 0.9))
def test_prefix_determinism(seed, frac):
    y1 = random_walk(seed, 2, T=1.0, dt=0.01)
    k = int(frac * 100)
    v = y1.values.copy()
    v[k + 1 :] += 1.0
    y2 = GridPath(v, 0.01)
    for c in (make_norm_potential(), make_path_integral_norm()):
        assert check_prefix_determinism(c, y1, y2, k * 0.01)


def test_parse_and_build():
    p = parse_potential("kind=state,name=quadratic,a=-0.5")
    assert p == {"kind": "state", "name": "quadratic", "a": "-0.5"}
    assert potential_from_params(p).label == "quadratic"
    with pytest.raises(ValueError):
        potential_from_params({"kind": "nope"})
    with pytest.raises(ValueError):
        parse_potential("oops")
