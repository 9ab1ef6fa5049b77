"""Potential functionals ``c(t, y)`` on path prefixes.

A potential carries declared regularity constants: a Lipschitz constant
``beta(T)`` with respect to the running sup norm, and a bound ``M(alpha, T)``
on the ball of radius ``alpha``.  :func:`validate_potential` samples paths
to check the declarations and non-anticipativity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ShapeError
from .hermite import HermiteState, sobolev_norm
from .paths import GridPath


@dataclass(frozen=True)
class PotentialSpec:
    """A potential with its declared constants.

    ``eval(t, y)`` may only read ``y`` on ``[0, t]``; ``y`` can extend past
    ``t``.  ``eval_path(y)``, when given, returns ``c(t_k, y)`` for every
    readable grid index in one vectorized call and must agree with ``eval``.
    """

    eval: Callable[[float, GridPath], float]
    beta: Callable[[float], float]
    bound: Callable[[float, float], float]
    label: str
    eval_path: Callable[[GridPath], np.ndarray] | None = None
    dim: int | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, t, y):
        return self.eval(t, y)

    def values(self, y: GridPath, upto: int | None = None) -> np.ndarray:
        """``c(t_k, y)`` for ``k = 0..upto`` (default: all readable points)."""
        n = y.n_alive if upto is None else upto + 1
        if self.eval_path is not None:
            return np.asarray(self.eval_path(y), dtype=float)[:n]
        ts = y.times
        return np.array([self.eval(ts[k], y) for k in range(n)])

    def negate(self) -> PotentialSpec:
        ev, evp = self.eval, self.eval_path
        return PotentialSpec(
            eval=lambda t, y: -ev(t, y),
            beta=self.beta,
            bound=self.bound,
            label=f"-({self.label})",
            eval_path=None if evp is None else (lambda y: -np.asarray(evp(y))),
            dim=self.dim,
            params=dict(self.params, negated=not self.params.get("negated", False)),
        )


def _check_dim(y, dim):
    if dim is not None and y.m != dim:
        raise ShapeError(f"potential expects paths of dimension {dim}, got {y.m}")


def make_constant(lam: float) -> PotentialSpec:
    lam = float(lam)
    if not math.isfinite(lam):
        raise ValueError("constant potential must be finite")
    return PotentialSpec(
        eval=lambda t, y: lam,
        beta=lambda T: 0.0,
        bound=lambda alpha, T: abs(lam),
        label=f"constant({lam:g})",
        eval_path=lambda y: np.full(y.n_alive, lam),
        params={"kind": "constant", "lambda": lam},
    )


def make_time_potential(g, bound_decl) -> PotentialSpec:
    """Potential depending on time only, ``c(t, y) = g(t)``; ``g`` vectorized."""
    return PotentialSpec(
        eval=lambda t, y: float(g(np.asarray(t))),
        beta=lambda T: 0.0,
        bound=bound_decl,
        label="time",
        eval_path=lambda y: np.asarray(g(y.times[: y.n_alive]), dtype=float) * np.ones(y.n_alive),
        params={"kind": "time"},
    )


def make_state_potential(vbar, beta_decl: float, bound_decl, label: str = "state") -> PotentialSpec:
    """``c(t, y) = vbar(y(t))``.

    ``vbar`` maps an array of shape ``(..., m)`` to shape ``(...)``.
    ``bound_decl(alpha, T)`` is the declared ball bound.
    """
    beta_decl = float(beta_decl)

    def ev(t, y):
        k = y.index_of(t)
        return float(vbar(y.value_at_index(k)))

    return PotentialSpec(
        eval=ev,
        beta=lambda T: beta_decl,
        bound=bound_decl,
        label=label,
        eval_path=lambda y: np.asarray(vbar(y.values[: y.n_alive]), dtype=float),
        params={"kind": "state", "name": label},
    )


def make_norm_potential(scale: float = 1.0) -> PotentialSpec:
    """``c(t, y) = scale * ||y(t)||``."""
    s = float(scale)
    spec = make_state_potential(
        lambda v: s * np.linalg.norm(v, axis=-1), abs(s), lambda alpha, T: abs(s) * alpha, label="norm"
    )
    return _with_params(spec, kind="state", name="norm", scale=s)


def make_identity_potential() -> PotentialSpec:
    """Scalar ``c(t, y) = y(t)``; admissible on positive paths."""
    spec = make_state_potential(lambda v: v[..., 0], 1.0, lambda alpha, T: alpha, label="identity")
    return _with_params(spec, kind="state", name="identity")


def make_quadratic_potential(a: float = -0.5, radius: float = 1.0) -> PotentialSpec:
    """``c(t, y) = a ||y(t)||^2``.

    The Lipschitz constant ``2 |a| radius`` is only valid for paths inside the
    ball of radius ``radius``.
    """
    a = float(a)
    spec = make_state_potential(
        lambda v: a * np.sum(v * v, axis=-1),
        2.0 * abs(a) * radius,
        lambda alpha, T: abs(a) * alpha * alpha,
        label="quadratic",
    )
    return _with_params(spec, kind="state", name="quadratic", a=a, radius=radius)


def make_linear_functional(V: HermiteState) -> PotentialSpec:
    """``c(t, y) = <V, y(t)>`` on coefficient paths.

    The Lipschitz constant is ``||V||_p`` (``p = V.p``); since the weights are
    at least one for ``p >= 0`` this also bounds the Euclidean dual norm.
    """
    vc = V.coeffs
    beta = sobolev_norm(V, max(V.p, 0.0))

    def ev(t, y):
        _check_dim(y, vc.size)
        return float(vc @ y.value_at_index(y.index_of(t)))

    def evp(y):
        _check_dim(y, vc.size)
        return y.values[: y.n_alive] @ vc

    return PotentialSpec(
        eval=ev,
        beta=lambda T: beta,
        bound=lambda alpha, T: beta * alpha,
        label="linear",
        eval_path=evp,
        dim=vc.size,
        params={"kind": "linear", "N": V.N, "d": V.d},
    )


def make_path_integral_norm() -> PotentialSpec:
    """Genuinely path-dependent ``c(t, y) = int_0^t ||y(s)|| ds / (1 + t)``.

    Trapezoid weights are positive and sum to ``t``, so ``beta(T) = T/(1+T)``
    holds exactly on the grid.
    """

    def evp(y):
        nrm = y.norms()
        cum = np.concatenate(([0.0], np.cumsum(0.5 * y.dt * (nrm[1:] + nrm[:-1]))))
        return cum / (1.0 + y.times[: y.n_alive])

    def ev(t, y):
        k = y.index_of(t)
        y.require_alive(k)
        nrm = np.linalg.norm(y.values[: k + 1], axis=1)
        integral = 0.5 * y.dt * float(np.sum(nrm[1:] + nrm[:-1])) if k > 0 else 0.0
        return integral / (1.0 + y.t0 + k * y.dt)

    return PotentialSpec(
        eval=ev,
        beta=lambda T: T / (1.0 + T),
        bound=lambda alpha, T: alpha * T / (1.0 + T),
        label="path_integral_norm",
        eval_path=evp,
        params={"kind": "path_integral_norm"},
    )


def _with_params(spec, **params):
    return PotentialSpec(spec.eval, spec.beta, spec.bound, spec.label, spec.eval_path, spec.dim, params)


@dataclass
class PotentialReport:
    max_ratio: float
    declared_beta: float
    max_abs: float
    declared_bound: float
    anticipation_violations: int
    vectorized_mismatch: float
    n_samples: int
    passed: bool
    failures: list = field(default_factory=list)


def _sample_path(rng, alpha, n, m, dt):
    kind = rng.integers(3)
    if kind == 0:
        v = np.tile(rng.normal(size=m), (n + 1, 1))
    elif kind == 1:
        v = np.cumsum(rng.normal(size=(n + 1, m)) * math.sqrt(dt), axis=0)
        v += rng.normal(size=m)
    else:
        t = np.arange(n + 1)[:, None] * dt
        v = np.sin(rng.uniform(0.5, 6.0, size=m) * t + rng.uniform(0, 2 * math.pi, size=m))
    peak = float(np.max(np.linalg.norm(v, axis=1)))
    if peak > 0:
        v = v * (alpha * rng.uniform(0.05, 1.0) / peak)
    return v


def validate_potential(spec: PotentialSpec, alpha: float, T: float, n_samples: int, seed: int,
                       m: int | None = None, n_steps: int = 50) -> PotentialReport:
    """Sample paths in the ball of radius ``alpha`` and compare with declarations.

    The sampler always includes the pair ``(0, constant)``.  Failures are
    recorded in the report; nothing is raised.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    m = m or spec.dim or 1
    dt = T / n_steps
    rng = np.random.default_rng(seed)
    beta = float(spec.beta(T))
    bound = float(spec.bound(alpha, T))
    max_ratio = 0.0
    max_abs = 0.0
    violations = 0
    mismatch = 0.0
    for i in range(n_samples):
        if i == 0:
            v1 = np.zeros((n_steps + 1, m))
            direction = rng.normal(size=m)
            v2 = np.tile(alpha * direction / np.linalg.norm(direction), (n_steps + 1, 1))
        else:
            v1 = _sample_path(rng, alpha, n_steps, m, dt)
            if rng.random() < 0.5:
                v2 = _sample_path(rng, alpha, n_steps, m, dt)
            else:
                v2 = v1 + rng.normal(size=v1.shape) * rng.choice([1e-6, 1e-3, 1e-1]) * alpha
                v2 *= min(1.0, alpha / np.max(np.linalg.norm(v2, axis=1)))
        y1, y2 = GridPath(v1, dt), GridPath(v2, dt)
        c1 = spec.values(y1)
        c2 = spec.values(y2)
        max_abs = max(max_abs, float(np.max(np.abs(c1))), float(np.max(np.abs(c2))))
        diff = y1 - y2
        dn = np.maximum.accumulate(diff.norms())
        ok = dn > 0
        if ok.any():
            max_ratio = max(max_ratio, float(np.max(np.abs(c1 - c2)[ok] / dn[ok])))

        k = int(rng.integers(0, n_steps))
        t = k * dt
        tail = v1.copy()
        tail[k + 1 :] += rng.normal(size=tail[k + 1 :].shape) * alpha
        if spec.eval(t, y1) != spec.eval(t, GridPath(tail, dt)):
            violations += 1
        mismatch = max(mismatch, abs(float(spec.eval(t, y1)) - float(c1[k])))

    slack = 1e-12
    failures = []
    if max_ratio > beta + slack:
        failures.append(f"Lipschitz ratio {max_ratio:.6g} exceeds declared beta {beta:.6g}")
    if max_abs > bound + slack:
        failures.append(f"|c| reached {max_abs:.6g} above declared bound {bound:.6g}")
    if violations:
        failures.append(f"{violations} non-anticipativity violations")
    if mismatch > 1e-12 * max(1.0, max_abs):
        failures.append(f"vectorized evaluation differs from pointwise by {mismatch:.3g}")
    return PotentialReport(max_ratio, beta, max_abs, bound, violations, mismatch, n_samples, not failures, failures)


def check_prefix_determinism(spec: PotentialSpec, y1: GridPath, y2: GridPath, s: float) -> bool:
    """True when ``y1 = y2`` on ``[0, s]`` bitwise implies equal ``c(s, .)``."""
    k = y1.index_of(s)
    if not np.array_equal(y1.values[: k + 1], y2.values[: k + 1]):
        raise ValueError("paths differ before s")
    return spec.eval(s, y1) == spec.eval(s, y2)


def potential_from_params(params: dict, V: HermiteState | None = None) -> PotentialSpec:
    """Build a built-in potential from a flat parameter map (CLI helper)."""
    kind = params.get("kind", "constant")
    if kind == "constant":
        return make_constant(float(params.get("lambda", 0.0)))
    if kind == "linear":
        if V is None:
            raise ValueError("linear potential needs a coefficient file")
        return make_linear_functional(V)
    if kind == "path_integral_norm":
        return make_path_integral_norm()
    if kind == "state":
        name = params.get("name", "norm")
        if name == "norm":
            return make_norm_potential(float(params.get("scale", 1.0)))
        if name == "identity":
            return make_identity_potential()
        if name == "quadratic":
            return make_quadratic_potential(float(params.get("a", -0.5)), float(params.get("radius", 1.0)))
        raise ValueError(f"unknown state potential {name!r}")
    raise ValueError(f"unknown potential kind {kind!r}")


def parse_potential(text: str) -> dict:
    """Parse ``kind=state,name=quadratic,a=-0.5`` into a dict."""
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise ValueError(f"malformed potential field {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out

