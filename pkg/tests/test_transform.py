import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_walk
from pathkac.errors import ConvergenceError, KacOverflowError, LifetimeError, PartitionError
from pathkac.hermite import HermiteState
from pathkac.paths import GridPath, restrict, sup_norm
from pathkac.potential import (
    make_constant,
    make_identity_potential,
    make_linear_functional,
    make_norm_potential,
    make_path_integral_norm,
    make_time_potential,
)
from pathkac.transform import (
    forward_map,
    kac_integral,
    roundtrip_error,
    roundtrip_errors,
    solve_hat,
    stability_bound,
)

seeds = st.integers(0, 2**32 - 1)


def linear(m, scale=0.5, seed=0):
    v = np.random.default_rng(seed).normal(size=m)
    return make_linear_functional(HermiteState(scale * v / np.linalg.norm(v), m - 1))


# kac_integral / forward_map


def test_kac_integral_closed_forms():
    y = GridPath.from_function(lambda t: t, 1.0, 1e-3)
    assert kac_integral(make_constant(1.7), y, 0.6) == pytest.approx(1.7 * 0.6, abs=1e-15)
    assert abs(kac_integral(make_time_potential(lambda t: t, lambda a, T: T), y, 1.0) - 0.5) <= 1e-12
    assert abs(kac_integral(make_norm_potential(), y, 1.0) - 0.5) <= 1e-12


def test_kac_integral_dead_path():
    v = np.zeros((11, 1))
    v[5] = np.inf
    with pytest.raises(LifetimeError):
        kac_integral(make_constant(1.0), GridPath(v, 0.1), 0.8)


def test_forward_map_examples():
    y = random_walk(0, 2)
    assert np.array_equal(forward_map(y, make_constant(0.0)).values, y.values)
    out = forward_map(y, make_constant(0.7))
    np.testing.assert_allclose(out.values, y.values * np.exp(0.7 * y.times)[:, None], rtol=1e-14)
    one = GridPath.constant([1.0], 1.0, 1e-3)
    assert forward_map(one, make_norm_potential()).values[-1, 0] == pytest.approx(math.e, rel=1e-14)


def test_forward_map_overflow_names_time():
    y = GridPath.constant([1.0], 1.0, 1e-3)
    with pytest.raises(KacOverflowError) as err:
        forward_map(y, make_constant(1000.0))
    assert 0.69 < err.value.time < 0.71


# solve_hat


def test_solve_hat_constant_potential_closed_form():
    y = random_walk(1, 3)
    yh, diag = solve_hat(y, make_constant(-1.3))
    np.testing.assert_allclose(yh.values, y.values * np.exp(1.3 * y.times)[:, None], rtol=1e-14, atol=1e-15)
    assert diag.final_residual <= 1e-12


def test_solve_hat_zero_potential_is_bitwise_identity():
    y = random_walk(2, 2)
    yh, _ = solve_hat(y, make_constant(0.0))
    assert np.array_equal(yh.values, y.values)
    assert roundtrip_error(y, make_constant(0.0)) == 0.0


def test_fixed_point_closed_form_and_order():
    c = make_identity_potential()
    errs = []
    for dt in (1e-3, 5e-4, 2.5e-4):
        yh, diag = solve_hat(GridPath.constant([1.0], 1.0, dt), c)
        errs.append(np.max(np.abs(yh.values[:, 0] - 1 / (1 + yh.times))))
        assert all(K < 1 for K in diag.contraction_constants)
    assert errs[0] <= 5e-4
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5


def test_solve_hat_converges_to_continuum_on_smooth_input():
    # error against a fine reference shrinks by at least 1/0.3 per halving
    fn = lambda t: np.stack([1 + 0.5 * np.sin(3 * t), np.cos(2 * t)], axis=1)  # noqa: E731
    c = make_path_integral_norm()
    ref, _ = solve_hat(GridPath.from_function(fn, 1.0, 1 / 1280), c)
    errs = []
    for n in (40, 80, 160):
        yh, _ = solve_hat(GridPath.from_function(fn, 1.0, 1 / n), c)
        errs.append(np.max(np.abs(yh.values - ref.values[:: 1280 // n])))
    assert errs[1] <= 0.3 * errs[0] and errs[2] <= 0.3 * errs[1]


def test_proof_partition_too_fine_raises():
    with pytest.raises(PartitionError):
        solve_hat(random_walk(3), make_norm_potential(), strategy="proof")


def test_proof_partition_agrees_with_adaptive_when_feasible():
    y = random_walk(4, T=0.5, dt=1e-3, scale=0.3)
    c = make_norm_potential(0.5)
    a, _ = solve_hat(y, c)
    b, diag = solve_hat(y, c, strategy="proof")
    assert len(diag.partition) > 5
    np.testing.assert_allclose(a.values, b.values, atol=1e-12)


def test_max_subintervals_limit():
    with pytest.raises(PartitionError):
        solve_hat(random_walk(5), make_norm_potential(), max_subintervals=3)


def test_picard_iteration_limit():
    with pytest.raises(ConvergenceError) as err:
        solve_hat(random_walk(6), make_norm_potential(), max_iter=1)
    assert err.value.diagnostics is not None


def test_finite_time_blow_up_is_reported():
    # c(s, y) = -y(s) on y = 1 blows up at t = 1
    y = GridPath.constant([1.0], 1.5, 1e-3)
    with pytest.raises((KacOverflowError, ConvergenceError)):
        solve_hat(y, make_identity_potential().negate())


def test_dead_input_rejected():
    v = np.zeros((11, 1))
    v[4] = np.nan
    with pytest.raises(LifetimeError):
        solve_hat(GridPath(v, 0.1), make_constant(1.0))


# stability


def test_stability_trivial_cases():
    y = random_walk(7)
    c = make_norm_potential()
    yh, _ = solve_hat(y, c)
    assert stability_bound(y, y, yh, yh, c) == (0.0, 0.0)
    z = random_walk(8)
    zero = make_constant(0.0)
    lhs, rhs = stability_bound(y, z, y, z, zero)
    assert lhs == rhs == sup_norm(y - z, 1.0)


@given(seeds, st.sampled_from([1, 3]), st.sampled_from(["norm", "path", "linear"]))
def test_stability_bound_holds(seed, m, kind):
    c = {"norm": make_norm_potential(), "path": make_path_integral_norm(), "linear": linear(m, seed=seed)}[kind]
    y1 = random_walk(seed, m, dt=1e-2)
    rng = np.random.default_rng(seed + 1)
    y2 = y1.with_values(y1.values + 0.05 * rng.normal(size=(1, m)) * np.sin(np.pi * y1.times)[:, None])
    h1, _ = solve_hat(y1, c)
    h2, _ = solve_hat(y2, c)
    lhs, rhs = stability_bound(y1, y2, h1, h2, c)
    assert lhs <= rhs


def test_continuity_on_shrinking_perturbations():
    c = make_norm_potential()
    y1 = random_walk(9, 2)
    h1, _ = solve_hat(y1, c)
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        y2 = y1.with_values(y1.values + eps)
        h2, _ = solve_hat(y2, c)
        lhs, rhs = stability_bound(y1, y2, h1, h2, c)
        assert lhs <= rhs
        assert lhs <= 10 * eps


# round trips and causality


@given(seeds, st.sampled_from([1, 3]), st.sampled_from(["const", "norm", "linear", "path"]))
def test_roundtrip_bijection(seed, m, kind):
    c = {"const": make_constant(1.5), "norm": make_norm_potential(), "linear": linear(m, seed=seed),
         "path": make_path_integral_norm()}[kind]
    fwd, rev = roundtrip_errors(random_walk(seed, m), c)
    assert fwd <= 1e-9 and rev <= 1e-9


@given(seeds)
def test_roundtrip_with_negated_potential(seed):
    assert roundtrip_error(random_walk(seed, 2), make_norm_potential(0.3).negate()) <= 1e-9


def test_constant_roundtrip_machine_precision():
    assert roundtrip_error(random_walk(10, 3), make_constant(1.5)) <= 1e-12


@given(seeds, st.integers(100, 900), st.sampled_from(["norm", "path"]))
def test_causality(seed, k, kind):
    c = make_norm_potential() if kind == "norm" else make_path_integral_norm()
    y = random_walk(seed, 2)
    s = k / 1000
    full, _ = solve_hat(y, c)
    pre, _ = solve_hat(restrict(y, s), c)
    np.testing.assert_allclose(full.values[: k + 1], pre.values, atol=1e-10, rtol=0)


def test_diagnostics_serializable():
    _, diag = solve_hat(random_walk(11), make_norm_potential())
    d = diag.to_dict()
    assert d["strategy"] == "adaptive" and d["partition"][0] == 0.0 and d["partition"][-1] == pytest.approx(1.0)
    assert max(d["contraction_constants"]) < 1
