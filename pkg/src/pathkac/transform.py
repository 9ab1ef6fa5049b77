"""The path transformation ``y -> y_hat`` with ``y_hat = y exp(-int c(s, y_hat) ds)``.

:func:`solve_hat` builds the solution subinterval by subinterval.  On each
piece of a partition ``0 = T_0 < ... < T_m = T`` the increment
``y_hat(T_n + .) - y_hat(T_n)`` is the fixed point of a contraction ``S_n``,
found by Picard iteration; the solved prefix is glued to each iterate by
concatenation.  :func:`forward_map` is the closed-form inverse.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConvergenceError, KacOverflowError, LifetimeError, PartitionError
from .paths import GridPath, concat_values, sup_norm
from .potential import PotentialSpec

EXP_LIMIT = 700.0


def cumulative_trapezoid(values: np.ndarray, dt: float) -> np.ndarray:
    """Running trapezoid integral along the last axis, starting at zero."""
    out = np.zeros_like(values, dtype=float)
    np.cumsum(0.5 * dt * (values[..., 1:] + values[..., :-1]), axis=-1, out=out[..., 1:])
    return out


def kac_cumulative(c: PotentialSpec, y: GridPath) -> np.ndarray:
    """``int_0^{t_k} c(s, y) ds`` for every readable grid index."""
    return cumulative_trapezoid(c.values(y), y.dt)


def kac_integral(c: PotentialSpec, y: GridPath, t: float) -> float:
    """Trapezoid approximation of ``int_0^t c(s, y|[0,s]) ds``."""
    k = y.index_of(t)
    y.require_alive(k)
    vals = c.values(y, upto=k)
    if k == 0:
        return 0.0
    return float(np.sum(0.5 * y.dt * (vals[1:] + vals[:-1])))


def _check_exponent(expo, y):
    bad = np.abs(expo) > EXP_LIMIT
    if bad.any():
        k = int(np.argmax(bad))
        t = y.t0 + k * y.dt
        raise KacOverflowError(f"Kac exponent {expo[k]:.4g} overflows at t={t:.6g}", time=t)


def _apply_weight(y: GridPath, expo: np.ndarray) -> GridPath:
    _check_exponent(expo, y)
    n = y.n_alive
    out = np.full(y.values.shape, np.nan)
    out[:n] = y.values[:n] * np.exp(expo)[:, None]
    return GridPath(out, y.dt, y.t0, y.lifetime)


def forward_map(y: GridPath, c: PotentialSpec) -> GridPath:
    """``y(t) exp(+int_0^t c(s, y) ds)``, the inverse of :func:`solve_hat`.

    A killed path is transformed on its lifetime and stays dead afterwards.
    """
    return _apply_weight(y, kac_cumulative(c, y))


@dataclass
class SolveDiagnostics:
    partition: list
    picard_iters: list
    contraction_constants: list
    final_residual: float
    alpha: float
    beta: float
    bound_3alpha: float
    delta: float
    strategy: str
    max_norm_hat: float = 0.0
    tol: float = 0.0
    epsilon: list = field(default_factory=list)
    unverified_steps: int = 0

    def to_dict(self):
        return asdict(self)


def _max_steps(h_max, dt):
    if not math.isfinite(h_max):
        return None
    k = math.floor(h_max / dt)
    if k * dt >= h_max:
        k -= 1
    return k


def _proof_partition(Y, dt, alpha, beta, M3, T, delta, max_sub):
    """Partition from the global constants of the existence argument."""
    growth = math.exp(min(M3 * T + delta, EXP_LIMIT))
    eps = 0.5 * (alpha / 2.0) / math.exp(min(M3 * T, EXP_LIMIT))
    limits = [math.inf]
    if M3 > 0:
        limits += [1.0 / (2.0 * M3 * growth), delta / (2.0 * M3)]
    if beta > 0:
        limits.append(1.0 / (2.0 * alpha * beta * growth))
    h_max = min(limits)
    needed = T / h_max if math.isfinite(h_max) else 1.0
    if needed > max_sub:
        raise PartitionError(
            f"contraction partition needs about {needed:.3g} subintervals (limit {max_sub})"
        )
    k_max = _max_steps(h_max, dt)
    if k_max is not None and k_max < 1:
        raise PartitionError(f"grid step {dt} exceeds admissible subinterval length {h_max:.3g}")
    n = Y.shape[0] - 1
    cuts, Ks, epss = [0], [], []
    i0 = 0
    while i0 < n:
        i1 = i0
        lim = n if k_max is None else min(n, i0 + k_max)
        while i1 < lim and np.linalg.norm(Y[i1 + 1] - Y[i0]) <= eps:
            i1 += 1
        if i1 == i0:
            raise PartitionError(f"path moves more than epsilon={eps:.3g} in one grid step at index {i0}")
        Ks.append(2.0 * alpha * beta * growth * (i1 - i0) * dt)
        epss.append(eps)
        cuts.append(i1)
        i0 = i1
        if len(cuts) - 1 > max_sub:
            raise PartitionError(f"partition exceeds {max_sub} subintervals")
    return cuts, Ks, epss


def _adaptive_extent(Y, i0, dt, A, alpha, beta, M3, delta, n):
    """Longest admissible subinterval from ``i0``; returns ``(i1, K_n, eps)``.

    Same four inequalities as the global construction, with the factor
    ``exp(M(3 alpha) T)`` replaced by the known ``alpha(T_n, y_hat) = A`` times
    the local growth ``exp(M(3 alpha) h)``.
    """
    i1 = i0
    K = 0.0
    osc = 0.0
    while i1 < n:
        h = (i1 + 1 - i0) * dt
        g = A * math.exp(min(M3 * h, EXP_LIMIT))
        osc_next = max(osc, float(np.linalg.norm(Y[i1 + 1] - Y[i0])))
        K_next = 2.0 * alpha * beta * g * math.exp(delta) * h
        ok = (
            osc_next * g < alpha / 2.0
            and alpha * g * math.exp(delta) * M3 * h < alpha / 2.0
            and K_next < 1.0
            and 2.0 * M3 * h < delta
        )
        if not ok:
            break
        i1 += 1
        K, osc = K_next, osc_next
    return i1, K, osc


def solve_hat(y: GridPath, c: PotentialSpec, tol: float = 1e-12, *, max_subintervals: int = 10**6,
              max_iter: int = 200, strategy: str = "adaptive", delta: float = 0.5):
    """Solve ``y_hat(t) = y(t) exp(-int_0^t c(s, y_hat) ds)`` on the grid of ``y``.

    ``strategy="proof"`` sizes the partition from the global worst-case
    constants; ``"adaptive"`` checks the same inequalities with the solved
    prefix's actual Kac factor, which allows far longer subintervals.
    Returns ``(y_hat, SolveDiagnostics)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not y.alive:
        raise LifetimeError("solve_hat needs a path alive on the whole grid", index=y.lifetime)
    Y = y.values
    n = y.n_points - 1
    dt, T = y.dt, y.T - y.t0
    alpha = 2.0 * sup_norm(y, y.T) + 1.0
    beta = float(c.beta(T))
    M3 = float(c.bound(3.0 * alpha, T))

    diag = SolveDiagnostics([y.t0], [], [], math.nan, alpha, beta, M3, delta, strategy, tol=tol)
    hat = np.empty_like(Y)
    hat[0] = Y[0]
    expo = np.zeros(n + 1)

    if strategy == "proof":
        cuts, Ks, epss = _proof_partition(Y, dt, alpha, beta, M3, T, delta, max_subintervals)
        plan = iter(zip(cuts[1:], Ks, epss))
    elif strategy != "adaptive":
        raise ValueError(f"unknown strategy {strategy!r}")

    i0 = 0
    while i0 < n:
        if strategy == "proof":
            i1, K, eps = next(plan)
        else:
            A = math.exp(-expo[i0]) if abs(expo[i0]) < EXP_LIMIT else math.inf
            i1, K, eps = _adaptive_extent(Y, i0, dt, A, alpha, beta, M3, delta, n)
            if i1 == i0:
                # the a priori inequalities reject even one step: iterate there anyway and
                # let the final residual check vouch for the result
                i1, K, eps = i0 + 1, math.nan, float(np.linalg.norm(Y[i0 + 1] - Y[i0]))
                diag.unverified_steps += 1
            if len(diag.partition) > max_subintervals:
                raise PartitionError(f"partition exceeds {max_subintervals} subintervals")
        z, its, J = _picard(Y, hat, expo, c, y, i0, i1, K, tol, max_iter, diag)
        A = math.exp(-expo[i0])
        # y_hat(t) = y(t) alpha(T_n, y_hat) alpha_n(t - T_n, z)
        hat[i0 + 1 : i1 + 1] = Y[i0 + 1 : i1 + 1] * (A * np.exp(-J[1:]))[:, None]
        expo[i0 + 1 : i1 + 1] = expo[i0] + J[1:]
        diag.partition.append(y.t0 + i1 * dt)
        diag.picard_iters.append(its)
        diag.contraction_constants.append(K)
        diag.epsilon.append(eps)
        i0 = i1

    y_hat = GridPath(hat, dt, y.t0)
    check = kac_cumulative(c, y_hat)
    _check_exponent(check, y)
    resid = hat - Y * np.exp(-check)[:, None]
    diag.final_residual = float(np.max(np.linalg.norm(resid, axis=1)))
    diag.max_norm_hat = float(np.max(np.linalg.norm(hat, axis=1)))
    if not diag.final_residual <= tol:
        raise ConvergenceError(
            f"final residual {diag.final_residual:.3g} exceeds tol {tol:.3g}", diagnostics=diag
        )
    return y_hat, diag


def _picard(Y, hat, expo, c, y, i0, i1, K, tol, max_iter, diag):
    """Fixed point of ``S_n`` on ``[T_n, T_{n+1}]`` in increment coordinates."""
    dt = y.dt
    _check_exponent(expo[i0 : i0 + 1], y)
    A = math.exp(-expo[i0])
    local = Y[i0 : i1 + 1]
    a_n = -Y[i0] * A
    y_n = local * A
    z = y_n + a_n  # S_n applied with alpha_n = 1
    stop = tol * (1.0 - K) if K < 1.0 else tol * 1e-3  # nan K lands here too
    prefix = hat[: i0 + 1]
    J = np.zeros(i1 - i0 + 1)
    for it in range(1, max_iter + 1):
        glued = GridPath(concat_values(prefix, z, i1 + 1), dt, y.t0)
        cv = c.values(glued)[i0 : i1 + 1]
        J = cumulative_trapezoid(cv, dt)
        if np.any(np.abs(expo[i0] + J) > EXP_LIMIT):
            raise KacOverflowError("Kac exponent overflow during Picard iteration", time=y.t0 + i1 * dt)
        z_new = y_n * np.exp(-J)[:, None] + a_n
        change = float(np.max(np.linalg.norm(z_new - z, axis=1)))
        z = z_new
        if change <= stop:
            glued = GridPath(concat_values(prefix, z, i1 + 1), dt, y.t0)
            J = cumulative_trapezoid(c.values(glued)[i0 : i1 + 1], dt)
            return z, it, J
    diag.picard_iters.append(max_iter)
    raise ConvergenceError(
        f"Picard iteration did not converge on [{y.t0 + i0 * dt:.6g}, {y.t0 + i1 * dt:.6g}] "
        f"within {max_iter} iterations",
        diagnostics=diag,
    )


def stability_bound(y1: GridPath, y2: GridPath, yh1: GridPath, yh2: GridPath, c: PotentialSpec):
    """Both sides of the a priori estimate between two solutions.

    ``rhs = M ||y1 - y2||_T exp(T M ||y2||_T beta e^delta)`` with
    ``M = exp(int_0^T |c(s, y_hat_1)| ds)`` and the smallest admissible
    ``delta`` inflated by ``1e-9``.  Returns ``(lhs, rhs)``.
    """
    T = y1.T - y1.t0
    lhs = sup_norm(yh1 - yh2, yh1.T)
    beta = float(c.beta(T))
    M = math.exp(min(float(cumulative_trapezoid(np.abs(c.values(yh1)), yh1.dt)[-1]), EXP_LIMIT))
    delta = beta * T * lhs * (1.0 + 1e-9)
    dy = sup_norm(y1 - y2, y1.T)
    ex = T * M * sup_norm(y2, y2.T) * beta * math.exp(delta)
    growth = math.exp(ex) if ex < EXP_LIMIT else math.inf
    rhs = M * dy * growth if dy > 0 else 0.0
    return lhs, rhs


def roundtrip_errors(y: GridPath, c: PotentialSpec, tol: float = 1e-12, **solve_kw):
    """Sup-norm errors of ``S(R(y)) - y`` and ``R(S(y)) - y``."""
    y_hat, _ = solve_hat(y, c, tol, **solve_kw)
    fwd = sup_norm(forward_map(y_hat, c) - y, y.T)
    y_bar = forward_map(y, c)
    back, _ = solve_hat(y_bar, c, tol, **solve_kw)
    rev = sup_norm(back - y, y.T)
    return fwd, rev


def roundtrip_error(y: GridPath, c: PotentialSpec, tol: float = 1e-12, **solve_kw) -> float:
    """Larger of the two composition errors from :func:`roundtrip_errors`."""
    return max(roundtrip_errors(y, c, tol, **solve_kw))
