"""Crank-Nicolson reference solver for the backward Kolmogorov equation with potential.

Solves ``u_t = 1/2 sigma(x)^2 u_xx + b(x) u_x + V(x) u`` with ``u(0) = f`` and
homogeneous Dirichlet conditions at both ends of the interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import SolverError
from .paths import grid_steps


@dataclass(frozen=True, eq=False)
class PdeGrid:
    x_min: float
    x_max: float
    nx: int
    dt: float
    values: np.ndarray  # (n_slices, nx), slice k at time k * dt

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def t_final(self):
        return (self.values.shape[0] - 1) * self.dt

    def at(self, x, k=-1):
        """Linear interpolation of slice ``k`` at ``x``."""
        return float(np.interp(x, self.x, self.values[k]))


def default_domain(spec, t, x0, width=8.0):
    """``x0 -/+ width sqrt(t) max|sigma|`` with ``max|sigma|`` sampled on a provisional window."""
    s0 = abs(float(spec.scalar_coefficients([x0])[0][0]))
    half = width * math.sqrt(t) * max(1.0, s0)
    probe = np.linspace(x0 - half, x0 + half, 401)
    smax = float(np.max(np.abs(spec.scalar_coefficients(probe)[0])))
    half = width * math.sqrt(t) * max(smax, 1e-12)
    return x0 - half, x0 + half


def smooth_cutoff(x_min, x_max, inner=0.75):
    """C-infinity function equal to 1 on the central ``inner`` fraction and 0 at the ends."""
    mid = 0.5 * (x_min + x_max)
    half = 0.5 * (x_max - x_min)
    a = inner * half

    def bump(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out

    def g(x):
        r = np.abs(np.asarray(x, dtype=float) - mid)
        s = (half - r) / (half - a)
        num = bump(s)
        return num / (num + bump(1.0 - s))

    return g


def pde_reference(vbar, spec, f, t, x_min=None, x_max=None, nx=801, dt=1e-3, x0=None) -> PdeGrid:
    """Crank-Nicolson solution on a uniform grid up to time ``t``.

    ``vbar`` and ``f`` act on 1-D arrays of positions; ``spec`` supplies the
    scalar coefficients.  Second order in ``dx`` and ``dt``.
    """
    if nx < 3:
        raise ValueError("nx must be at least 3")
    if x_min is None or x_max is None:
        centre = float(spec.x0[0]) if x0 is None else float(x0)
        lo, hi = default_domain(spec, t, centre)
        x_min = lo if x_min is None else x_min
        x_max = hi if x_max is None else x_max
    steps = grid_steps(t, dt)
    x = np.linspace(x_min, x_max, nx)
    dx = x[1] - x[0]
    sig, drift = spec.scalar_coefficients(x)
    a = 0.5 * sig**2
    V = np.asarray(vbar(x), dtype=float) * np.ones(nx)
    lower = a / dx**2 - drift / (2 * dx)
    diag = -2 * a / dx**2 + V
    upper = a / dx**2 + drift / (2 * dx)
    li, di, ui = lower[1:-1], diag[1:-1], upper[1:-1]

    ab = np.zeros((3, nx - 2))
    ab[0, 1:] = -0.5 * dt * ui[:-1]
    ab[1] = 1.0 - 0.5 * dt * di
    ab[2, :-1] = -0.5 * dt * li[1:]

    u = np.asarray(f(x), dtype=float) * np.ones(nx)
    u[0] = u[-1] = 0.0
    if not np.all(np.isfinite(u)) or not np.all(np.isfinite(V)):
        raise SolverError("non-finite initial data or potential")
    out = np.empty((steps + 1, nx))
    out[0] = u
    for k in range(steps):
        inner = u[1:-1]
        rhs = inner + 0.5 * dt * (di * inner + li * u[:-2] + ui * u[2:])
        u = np.zeros(nx)
        u[1:-1] = solve_banded((1, 1), ab, rhs)
        if not np.all(np.isfinite(u)):
            raise SolverError(f"non-finite solution at step {k + 1}")
        out[k + 1] = u
    return PdeGrid(float(x_min), float(x_max), nx, dt, out)
