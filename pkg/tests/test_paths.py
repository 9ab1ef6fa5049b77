import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_walk
from pathkac.errors import LifetimeError, PathRangeError, ShapeError
from pathkac.paths import GridPath, concat, grid_steps, restrict, sup_norm


def test_sup_norm_of_zero_path():
    assert sup_norm(GridPath.constant([0.0], 1.0, 0.1), 1.0) == 0.0


def test_sup_norm_monotone_path_attains_endpoint():
    y = GridPath.from_function(lambda t: t, 1.0, 0.5)
    assert sup_norm(y, 1.0) == 1.0


def test_sup_norm_sine_matches_dense_grid():
    y = GridPath.from_function(lambda t: np.sin(3 * t), 2.0, 1e-3)
    assert abs(sup_norm(y, 2.0) - 1.0) <= 5e-6


def test_sup_norm_out_of_range():
    y = GridPath.constant([1.0], 1.0, 0.1)
    with pytest.raises(PathRangeError):
        sup_norm(y, 1.5)


def test_concat_constants():
    a = GridPath.constant([2.0], 1.0, 0.1)
    b = GridPath.constant([-5.0], 1.0, 0.1)
    out = concat(a, b, 3.0)
    assert np.all(out.values == 2.0)
    assert out.n_points == 31


def test_concat_three_branches():
    dt = 0.25
    y1 = GridPath.from_function(lambda t: t, 1.0, dt)
    y2 = GridPath.from_function(lambda t: 2 * t, 1.0, dt)
    out = concat(y1, y2, 3.0)
    t = out.times
    expected = np.where(t <= 1, t, np.where(t <= 2, 2 * (t - 1) + 1, 3.0))
    np.testing.assert_allclose(out.values[:, 0], expected, atol=1e-15)
    # shared grid point is copied bitwise
    assert out.values[4, 0] == y1.values[-1, 0]


def test_concat_with_zero_path_extends_constantly():
    y = random_walk(1, T=0.5, dt=0.01)
    out = concat(y, GridPath.constant([0.0], 0.2, 0.01), 1.0)
    np.testing.assert_array_equal(out.values[: y.n_points], y.values)
    assert np.all(out.values[y.n_points :] == y.values[-1])


def test_concat_errors():
    a = GridPath.constant([0.0], 1.0, 0.1)
    with pytest.raises(PathRangeError):
        concat(a, a, 2.0)
    with pytest.raises(ShapeError):
        concat(a, GridPath.constant([0.0, 1.0], 1.0, 0.1), 3.0)
    with pytest.raises(ShapeError):
        concat(a, GridPath.constant([0.0], 1.0, 0.05), 3.0)


def test_restrict_identities():
    y = random_walk(2, T=1.0, dt=0.01)
    assert np.array_equal(restrict(y, 1.0).values, y.values)
    assert restrict(y, 0.0).n_points == 1
    np.testing.assert_array_equal(restrict(restrict(y, 0.7), 0.3).values, restrict(y, 0.3).values)
    with pytest.raises(PathRangeError):
        restrict(y, 0.3333)


def test_nonfinite_rows_set_lifetime():
    v = np.zeros((11, 1))
    v[6] = np.nan
    y = GridPath(v, 0.1)
    assert y.lifetime == 6 and not y.alive
    with pytest.raises(LifetimeError):
        sup_norm(y, 1.0)
    assert sup_norm(y, 0.5) == 0.0


def test_values_are_read_only():
    y = GridPath.constant([1.0], 1.0, 0.5)
    with pytest.raises(ValueError):
        y.values[0, 0] = 3.0


def test_at_interpolates_linearly():
    y = GridPath.from_function(lambda t: 2 * t, 1.0, 0.5)
    assert y.at(0.25)[0] == pytest.approx(0.5)


def test_grid_steps_rejects_off_grid():
    assert grid_steps(1.0, 1e-3) == 1000
    with pytest.raises(PathRangeError):
        grid_steps(1.0, 0.3)


def test_csv_round_trip(tmp_path):
    y = random_walk(3, m=2, T=0.1, dt=0.01)
    f = tmp_path / "y.csv"
    y.to_csv(f)
    back = GridPath.from_csv(f)
    np.testing.assert_array_equal(back.values, y.values)
    assert math.isclose(back.dt, y.dt)


seeds = st.integers(0, 2**32 - 1)


@given(seeds, seeds, st.integers(1, 3))
def test_concat_triangle_bound(s1, s2, m):
    y1 = random_walk(s1, m, T=0.3, dt=0.01)
    y2 = random_walk(s2, m, T=0.4, dt=0.01)
    out = concat(y1, y2, 1.0)
    assert sup_norm(out, 1.0) <= sup_norm(y1, 0.3) + 2 * sup_norm(y2, 0.4) + 1e-12


@given(seeds, st.integers(0, 100))
def test_restrict_commutes_with_sup_norm(seed, k):
    y = random_walk(seed, 2, T=1.0, dt=0.01)
    s = k / 100
    assert sup_norm(y, s) == sup_norm(restrict(y, s), s)
