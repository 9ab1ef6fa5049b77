"""Monte Carlo Feynman-Kac estimators and the checks that tie them together.

All operations here are one-dimensional: ``f`` and ``vbar`` are functions of
a 1-D array of positions.  Estimators stream path blocks generated with the
keyed generator of :mod:`pathkac.diffusion`, so two estimators called with
the same configuration see the same paths (common random numbers).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .diffusion import DiffusionSpec, McConfig, euler_block, map_blocks, z_block
from .errors import WindowError
from .hermite import (
    HermiteState,
    adjoint_L_on_delta,
    delta_coeffs_many,
    project,
    translate_many,
    translation_window,
)
from .paths import GridPath
from .pde import pde_reference, smooth_cutoff
from .potential import PotentialSpec, make_linear_functional
from .transform import cumulative_trapezoid, forward_map, kac_integral, solve_hat


@dataclass
class SemigroupEstimate:
    value: float | HermiteState
    std_error: float | np.ndarray
    n_paths: int
    alive_fraction: float
    warnings: list = field(default_factory=list)


def _mean_se(samples):
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, samples.std(axis=0, ddof=1) / math.sqrt(n)


def _d1(spec):
    if spec.d != 1:
        raise ValueError("this operation supports d = 1 only")


def _weighted_endpoints(spec, cfg, x, vbar, t, fn, workers=None):
    """Run ``fn(X_t, weight, alive)`` on every block; concatenate results in order."""
    _d1(spec)
    k = cfg.index(t)
    x = spec.x0 if x is None else np.atleast_1d(np.asarray(x, dtype=float))

    def block(b, start, size):
        X, life = euler_block(spec, cfg, b, start, size, x0=x)
        path = X[:, : k + 1, 0]
        v = np.asarray(vbar(path), dtype=float) * np.ones(path.shape)
        K = cumulative_trapezoid(v, cfg.dt)[:, -1]
        alive = life > k
        return fn(path[:, -1], np.exp(K), alive)

    parts = map_blocks(block, cfg.n_paths, workers)
    return [np.concatenate(p) for p in zip(*parts)]


def _finish(samples, alive, min_alive, cfg):
    frac = float(alive.mean())
    notes = []
    if frac < min_alive:
        notes.append(f"alive fraction {frac:.4f} below {min_alive}")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=3)
    kept = samples[alive]
    if kept.shape[0] == 0:
        nan = np.full(samples.shape[1:], np.nan)
        return nan, nan, frac, notes
    mean, se = _mean_se(kept)
    return mean, se, frac, notes


def pt_v_f(f, x, vbar, spec: DiffusionSpec, cfg: McConfig, t: float, min_alive: float = 0.99) -> SemigroupEstimate:
    """``E[exp(int_0^t V(X_s) ds) f(X_t)]`` over paths alive at ``t``."""

    def fn(xt, w, alive):
        return w * np.asarray(f(xt), dtype=float) * np.ones_like(xt), alive

    vals, alive = _weighted_endpoints(spec, cfg, x, vbar, t, fn)
    mean, se, frac, notes = _finish(vals, alive, min_alive, cfg)
    return SemigroupEstimate(float(mean), float(se), cfg.n_paths, frac, notes)


def pt_v_star(x, vbar, spec: DiffusionSpec, cfg: McConfig, t: float, N: int, min_alive: float = 0.99) -> SemigroupEstimate:
    """Coefficient-wise ``E[exp(int_0^t V(X_s) ds) delta_{X_t}]``."""

    def fn(xt, w, alive):
        return w[:, None] * delta_coeffs_many(xt, N), alive

    vals, alive = _weighted_endpoints(spec, cfg, x, vbar, t, fn)
    mean, se, frac, notes = _finish(vals, alive, min_alive, cfg)
    return SemigroupEstimate(HermiteState(mean, N), se, cfg.n_paths, frac, notes)


def transition_kernel(x, spec, cfg, t, N, min_alive=0.99) -> SemigroupEstimate:
    """``E delta_{X_t}`` (the transition law as a coefficient vector)."""
    return pt_v_star(x, lambda p: np.zeros_like(p), spec, cfg, t, N, min_alive)


def transform_lifted(Y: GridPath, V) -> GridPath:
    """``Y_t exp(int_0^t c(s, Y) ds)`` with ``c(s, y) = <V, y_s>`` (or a given potential)."""
    c = V if isinstance(V, PotentialSpec) else make_linear_functional(V)
    return forward_map(Y, c)


@dataclass
class ResidualReport:
    times: list
    mean: list
    std_error: list
    corrected_mean: list
    corrected_std_error: list
    tolerance: list
    passed: list
    n_paths: int
    alive_fraction: float
    dt: float

    def to_dict(self):
        return asdict(self)


def _residual_setup(f, spec, cfg, x, N, exact_start):
    _d1(spec)
    x = spec.x0 if x is None else np.atleast_1d(np.asarray(x, dtype=float))
    Pf = project(f, N).coeffs
    pair0 = float(np.asarray(f(x))[0]) if exact_start else float(delta_coeffs_many(x, N)[0] @ Pf)
    return x, Pf, pair0


def _fd12(f, p, h=1e-4):
    s = h * (1.0 + np.abs(p))
    fp, f0, fm = f(p + s), f(p), f(p - s)
    return (fp - fm) / (2 * s), (fp - 2 * f0 + fm) / (s * s)


def _residual_on_grid(P, life, dt, ks, f, vbar, spec, N, Pf, pair0, stride=1):
    """Per-path ``D`` and martingale-corrected ``D`` at grid indices ``ks``.

    ``P`` is an ``(n, m)`` block of positions; with ``stride > 1`` every
    ``stride``-th point is used, giving the same paths on a coarser grid.
    """
    P = P[:, ::stride]
    h = dt * stride
    sig, drift = spec.scalar_coefficients(P.reshape(-1))
    a = (sig * sig).reshape(P.shape)
    bb = drift.reshape(P.shape)
    V = np.asarray(vbar(P), dtype=float) * np.ones(P.shape)
    w = np.exp(cumulative_trapezoid(V, h))
    Lf = adjoint_L_on_delta(P, a, bb, f)
    fv = np.asarray(f(P), dtype=float)
    integral = cumulative_trapezoid(w * (Lf + V * fv), h)
    mart = np.zeros_like(P)
    dX = np.diff(P, axis=1) - bb[:, :-1] * h
    g1, g2 = _fd12(f, P[:, :-1])
    np.cumsum(w[:, :-1] * (g1 * dX + 0.5 * g2 * (dX * dX - a[:, :-1] * h)), axis=1, out=mart[:, 1:])
    D = np.empty((P.shape[0], len(ks)))
    C = np.empty_like(D)
    alive = np.empty(D.shape, dtype=bool)
    for j, k in enumerate(ks):
        kc = k // stride
        D[:, j] = w[:, kc] * (delta_coeffs_many(P[:, kc], N) @ Pf) - pair0 - integral[:, kc]
        C[:, j] = D[:, j] - mart[:, kc]
        alive[:, j] = life > k
    return D, C, alive


def spde_weak_residual(f, spec: DiffusionSpec, vbar, cfg: McConfig, times, N: int = 64, x=None,
                       slack_per_dt: float = 5.0, exact_start: bool = False) -> ResidualReport:
    """Weak-form residual of the transformed SPDE along simulated paths.

    Per path, ``D(t) = <f, Yhat_t> - <f, Yhat_0> - int_0^t e^{K_s} (Lbar f + V f)(X_s) ds``
    with ``Yhat_t = e^{K_t} delta_{X_t}`` paired through the Hermite
    projection of ``f``.  ``D`` has mean zero up to time-discretization bias.
    ``corrected_*`` also subtracts the mean-zero sums
    ``e^{K} [f'(X) dM + 1/2 f''(X) (dM^2 - a dt)]`` with ``dM = dX - b dt``
    built from the same increments; that difference has the same mean and
    a much smaller variance.
    """
    times = [float(t) for t in np.atleast_1d(times)]
    ks = [cfg.index(t) for t in times]
    kmax = max(ks)
    x, Pf, pair0 = _residual_setup(f, spec, cfg, x, N, exact_start)

    def block(b, start, size):
        X, life = euler_block(spec, cfg, b, start, size, x0=x)
        return _residual_on_grid(X[:, : kmax + 1, 0], life, cfg.dt, ks, f, vbar, spec, N, Pf, pair0)

    parts = map_blocks(block, cfg.n_paths)
    D, C, A = (np.concatenate([p[i] for p in parts]) for i in range(3))
    rep = ResidualReport(times, [], [], [], [], [], [], cfg.n_paths, float(A[:, -1].mean()), cfg.dt)
    for j in range(len(times)):
        m, se = _mean_se(D[A[:, j], j])
        cm, cse = _mean_se(C[A[:, j], j])
        tol = 3.0 * float(se) + slack_per_dt * cfg.dt
        rep.mean.append(float(m))
        rep.std_error.append(float(se))
        rep.corrected_mean.append(float(cm))
        rep.corrected_std_error.append(float(cse))
        rep.tolerance.append(tol)
        rep.passed.append(abs(float(m)) <= tol)
    return rep


@dataclass
class ResidualRefinement:
    t: float
    dts: list
    corrected_mean: list
    corrected_std_error: list
    step_differences: list
    step_difference_se: list
    shrinks: bool

    def to_dict(self):
        return asdict(self)


def residual_refinement(f, spec: DiffusionSpec, vbar, cfg: McConfig, t: float, strides=(4, 2, 1), N: int = 64,
                        x=None, exact_start: bool = False) -> ResidualRefinement:
    """Corrected residual at ``t`` on coarsened grids of one path batch.

    Strides are applied to the ``cfg.dt`` paths, so the grids share their
    randomness and the differences between consecutive grids have small
    variance.  With a first-order bias the differences halve with each
    halving of the step (quarter with a second-order bias); ``shrinks`` is
    true when every difference is smaller in magnitude than its predecessor
    and the drop exceeds three standard errors of the per-path second
    difference.
    """
    strides = sorted(strides, reverse=True)
    k = cfg.index(t)
    for s in strides:
        if k % s:
            raise ValueError(f"t={t} is not on the grid coarsened by {s}")
    x, Pf, pair0 = _residual_setup(f, spec, cfg, x, N, exact_start)

    def block(b, start, size):
        X, life = euler_block(spec, cfg, b, start, size, x0=x)
        P = X[:, : k + 1, 0]
        cols = [_residual_on_grid(P, life, cfg.dt, [k], f, vbar, spec, N, Pf, pair0, s)[1][:, 0] for s in strides]
        return np.stack(cols, 1), life > k

    parts = map_blocks(block, cfg.n_paths)
    C = np.concatenate([p[0] for p in parts])
    C = C[np.concatenate([p[1] for p in parts])]
    m, se = _mean_se(C)
    steps = np.diff(C, axis=1)
    diffs, dse = _mean_se(steps)
    shrinks = True
    for i in range(len(diffs) - 1):
        # drop in magnitude, with the standard error of the per-path second difference
        sign = np.sign(diffs[i]) or 1.0
        drop, drop_se = _mean_se(sign * (steps[:, i] - steps[:, i + 1]))
        shrinks &= bool(abs(diffs[i + 1]) < abs(diffs[i]) and drop > 3 * drop_se)
    return ResidualRefinement(t, [cfg.dt * s for s in strides], m.tolist(), se.tolist(), diffs.tolist(),
                              dse.tolist(), shrinks)


@dataclass
class DualityReport:
    mc_scalar: float
    mc_scalar_se: float
    mc_dual: float
    mc_dual_se: float
    pde_value: float
    gap_mc_dual: float
    gap_mc_dual_se: float
    tol_mc_dual: float
    gap_mc_pde: float
    tol_mc_pde: float
    gap_dual_pde: float
    tol_dual_pde: float
    alive_fraction: float
    passed: bool

    def to_dict(self):
        return asdict(self)


def fk_duality_check(f, x, vbar, spec: DiffusionSpec, cfg: McConfig, t: float, N: int = 64,
                     pde: dict | None = None, truncation_budget: float = 1e-5,
                     pde_budget: float = 1e-3, taper: bool = False) -> DualityReport:
    """Scalar MC, paired-coefficient MC and PDE values of ``P_t^V f(x)``.

    The two MC numbers come from the same paths; their gap is tested against
    three standard errors of the per-path difference plus the truncation
    budget.  The PDE comparisons add ``pde_budget``.  With ``taper`` the PDE
    initial datum is ``f`` times a smooth cutoff vanishing at the boundary.
    """
    Pf = project(f, N).coeffs

    def fn(xt, w, alive):
        a = w * np.asarray(f(xt), dtype=float) * np.ones_like(xt)
        b = w * (delta_coeffs_many(xt, N) @ Pf)
        return a, b, alive

    a, b, alive = _weighted_endpoints(spec, cfg, x, vbar, t, fn)
    a, b = a[alive], b[alive]
    ma, sa = _mean_se(a)
    mb, sb = _mean_se(b)
    gap, sgap = _mean_se(a - b)
    x0 = float(np.atleast_1d(spec.x0 if x is None else x)[0])
    opts = dict(pde or {})
    g = f
    if taper:
        from .pde import default_domain

        lo, hi = opts.get("x_min"), opts.get("x_max")
        if lo is None or hi is None:
            lo, hi = default_domain(spec, t, x0)
            opts.setdefault("x_min", lo)
            opts.setdefault("x_max", hi)
        cut = smooth_cutoff(opts["x_min"], opts["x_max"])
        g = lambda p: np.asarray(f(p), dtype=float) * cut(p)  # noqa: E731
    grid = pde_reference(vbar, spec, g, t, x0=x0, **opts)
    pv = grid.at(x0)
    tol_md = 3.0 * float(sgap) + truncation_budget
    tol_mp = 3.0 * float(sa) + pde_budget
    tol_dp = 3.0 * float(sb) + pde_budget + truncation_budget
    ok = abs(gap) <= tol_md and abs(ma - pv) <= tol_mp and abs(mb - pv) <= tol_dp
    return DualityReport(float(ma), float(sa), float(mb), float(sb), pv, float(gap), float(sgap), tol_md,
                         float(ma - pv), tol_mp, float(mb - pv), tol_dp, float(alive.mean()), bool(ok))


@dataclass
class IdentityReport:
    lhs: list
    rhs: list
    coeff_gap: list
    coeff_se: list
    max_gap: float
    max_gap_se: float
    scalar_lhs: float
    scalar_rhs: float
    scalar_gap: float
    scalar_se: float
    constant_potential: bool
    passed: bool | None
    tolerance: float | None

    def to_dict(self):
        return asdict(self)


def section5_identity_comparator(x, vbar, spec: DiffusionSpec, cfg: McConfig, t: float, N: int,
                                 f=None, constant: bool | None = None) -> IdentityReport:
    """Compare ``E[e^{int V(X)} delta_{X_t}]`` with ``e^{t V(x)} E[delta_{X_t}]``.

    Both sides use the same paths.  A verdict is given only for constant
    potentials (detected by sampling ``vbar`` unless ``constant`` is given);
    otherwise the gap is reported as observed.
    """
    x0 = float(np.atleast_1d(spec.x0 if x is None else x)[0])
    factor = math.exp(t * float(np.asarray(vbar(np.array([x0])))[0]))
    f = f or (lambda p: np.exp(-0.5 * p * p))
    Pf = project(f, N).coeffs
    if constant is None:
        probe = np.asarray(vbar(np.linspace(-10, 10, 101)), dtype=float) * np.ones(101)
        constant = bool(np.all(probe == probe[0]))

    def fn(xt, w, alive):
        H = delta_coeffs_many(xt, N)
        return w[:, None] * H, factor * H, alive

    L, R, alive = _weighted_endpoints(spec, cfg, x, vbar, t, fn)
    L, R = L[alive], R[alive]
    lm, _ = _mean_se(L)
    rm, _ = _mean_se(R)
    gm, gse = _mean_se(L - R)
    sl, sr = L @ Pf, R @ Pf
    sg, sgse = _mean_se(sl - sr)
    max_i = int(np.argmax(np.abs(gm)))
    passed = tol = None
    if constant:
        # floating-point floor: the trapezoid sum of a constant differs from t V by rounding
        floor = 1e-12 * max(1.0, float(np.max(np.abs(lm))))
        tol = float(3.0 * np.max(gse) + floor)
        passed = bool(np.max(np.abs(gm)) <= tol)
    return IdentityReport(lm.tolist(), rm.tolist(), gm.tolist(), gse.tolist(), float(gm[max_i]), float(gse[max_i]),
                          float(sl.mean()), float(sr.mean()), float(sg), float(sgse), constant, passed, tol)


def _z_endpoint_blocks(sigma_x, b_x, cfg, ks, workers=None):
    def block(b, start, size):
        Z = z_block(sigma_x, b_x, cfg, b, size)
        return Z[:, ks, 0]

    return map_blocks(block, cfg.n_paths, workers)


def translation_semigroup_u(u0: HermiteState, x, sigma_x, b_x, cfg: McConfig, t: float,
                            potential: PotentialSpec | None = None, max_rejected: float = 0.01):
    """``E tau_{Z_t} u0`` with ``Z_t = sigma(x) B_t + b(x) t``.

    Shifts outside the reliable translation window are rejected; more than
    ``max_rejected`` of them raises :class:`WindowError`.  With a potential
    (already specialised at ``x``) the mean state is multiplied by
    ``exp(int_0^t c(s, EY) ds)``, where ``EY`` is the estimated mean path on
    the grid up to ``t``.  Returns ``(estimate, mean_path)``; ``mean_path`` is
    None when no potential is given.
    """
    k = cfg.index(t)
    window = translation_window(u0.N)
    ks = list(range(k + 1)) if potential is not None else [k]
    blocks = _z_endpoint_blocks(sigma_x, b_x, cfg, ks)
    Z = np.concatenate(blocks)  # (n, len(ks))
    ok = np.all(np.abs(Z) <= window, axis=1)
    rejected = 1.0 - float(ok.mean())
    if rejected > max_rejected:
        raise WindowError(f"{rejected:.2%} of shifts outside |z| <= {window:.3g}")
    Zk = Z[ok]
    final = translate_many(u0, Zk[:, -1])
    mean, se = _mean_se(final)
    notes = [f"rejected fraction {rejected:.4g}"] if rejected else []
    est = SemigroupEstimate(HermiteState(mean, u0.N, u0.p), se, cfg.n_paths, 1.0 - rejected, notes)
    if potential is None:
        return est, None
    means = np.empty((k + 1, u0.N + 1))
    for j in range(k):
        means[j] = translate_many(u0, Zk[:, j]).mean(axis=0)
    means[k] = mean
    path = GridPath(means, cfg.dt)
    expo = kac_integral(potential, path, t)
    scale = math.exp(expo)
    est.value = HermiteState(mean * scale, u0.N, u0.p)
    est.std_error = se * scale
    return est, path


def hat_u_transform(u_path: GridPath, c: PotentialSpec, x=None) -> GridPath:
    """``u(t, x) exp(int_0^t c(s, x, u(., x)) ds)`` for a coefficient path at fixed ``x``.

    ``c`` is the member of the potential family at this ``x``.
    """
    return forward_map(u_path, c)


def hat_u_weak_residual(u_hat: GridPath, c: PotentialSpec, sigma_x, b_x, f, N: int, tol: float = 1e-12):
    """Weak residual of the transformed linear equation at a fixed ``x``.

    ``R(t) = <f, uhat_t> - <f, uhat_0> - int_0^t (<Lbar f, uhat_s> + chat(s) <f, uhat_s>) ds``
    where ``Lbar f = 1/2 sigma^2 f'' + b f'`` and ``chat(s)`` evaluates ``c``
    on the inverse-transformed path (which reproduces ``u``).
    """
    a = float(np.asarray(sigma_x).reshape(-1)[0]) ** 2
    b = float(np.asarray(b_x).reshape(-1)[0])
    Lf = project(lambda p: adjoint_L_on_delta(p, a, b, f), N).coeffs
    Pf = project(f, N).coeffs
    u_back, _ = solve_hat(u_hat, c, tol)
    chat = c.values(u_back)
    vals = u_hat.values
    pf = vals @ Pf
    integrand = vals @ Lf + chat * pf
    return pf - pf[0] - cumulative_trapezoid(integrand, u_hat.dt)



def forward_equation_residual(f, spec: DiffusionSpec, vbar, cfg: McConfig, times, N: int = 64, x=None,
                              slack_per_dt: float = 5.0) -> ResidualReport:
    """``<f, P_t^{V*}(x)> - f(x) - int_0^t P_s^V((Lbar + V) f)(x) ds`` with shared paths.

    Both estimators read the same paths, so the per-path difference is the
    weak residual started from the exact value ``f(x)``.
    """
    return spde_weak_residual(f, spec, vbar, cfg, times, N, x, slack_per_dt, exact_start=True)
