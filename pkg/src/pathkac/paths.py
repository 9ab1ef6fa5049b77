"""Discretized Hilbert-space valued paths on uniform time grids.

A :class:`GridPath` stores one vector per grid point.  The ambient space is
either ``R^d`` or a truncated Hermite coefficient space; both look the same
here (a vector of length ``m``).  Killed paths carry a lifetime index, the
first grid index that may not be read.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import LifetimeError, PathRangeError, ShapeError

# relative slack when snapping a time onto the grid
GRID_SNAP = 1e-9


def _readonly(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GridPath:
    """Path ``y : [t0, T] -> R^m`` sampled on a uniform grid.

    ``values`` has shape ``(n_points, m)``.  ``lifetime`` is the first dead
    grid index (``None`` when the path is alive on the whole grid).  Rows
    with non-finite entries kill the path at the first such row.
    """

    values: np.ndarray
    dt: float
    t0: float = 0.0
    lifetime: int | None = None
    m: int = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] == 0 or v.shape[1] == 0:
            raise ShapeError(f"values must be a non-empty (n, m) array, got shape {v.shape}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise PathRangeError(f"dt must be positive and finite, got {self.dt}")
        if not math.isfinite(self.t0):
            raise PathRangeError("t0 must be finite")
        life = self.lifetime
        if life is not None:
            life = int(life)
            if life < 0:
                raise PathRangeError("lifetime index must be non-negative")
            if life >= v.shape[0]:
                life = None
        bad = ~np.all(np.isfinite(v), axis=1)
        if bad.any():
            first_bad = int(np.argmax(bad))
            life = first_bad if life is None else min(life, first_bad)
        object.__setattr__(self, "values", _readonly(v))
        object.__setattr__(self, "lifetime", life)
        object.__setattr__(self, "m", v.shape[1])
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))

    @classmethod
    def from_function(cls, fn, T, dt, t0=0.0):
        """Sample ``fn(t)`` (vectorized over a 1-D time array) on the grid."""
        n = grid_steps(T - t0, dt)
        t = t0 + dt * np.arange(n + 1)
        v = np.asarray(fn(t), dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        elif v.shape[0] != n + 1 and v.shape[-1] == n + 1:
            v = v.T
        return cls(v, dt, t0)

    @classmethod
    def constant(cls, vector, T, dt, t0=0.0):
        vec = np.atleast_1d(np.asarray(vector, dtype=float))
        n = grid_steps(T - t0, dt)
        return cls(np.tile(vec, (n + 1, 1)), dt, t0)

    @property
    def n_points(self):
        return self.values.shape[0]

    @property
    def T(self):
        return self.t0 + (self.n_points - 1) * self.dt

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n_points)

    @property
    def alive(self):
        return self.lifetime is None

    @property
    def n_alive(self):
        """Number of readable grid points."""
        return self.n_points if self.lifetime is None else self.lifetime

    def index_at_or_below(self, s):
        """Grid index of the last grid time ``<= s``."""
        k = self._check_range(s)
        return int(math.floor(k + GRID_SNAP))

    def index_of(self, s):
        """Grid index of ``s``; raises if ``s`` is not a grid time."""
        k = self._check_range(s)
        j = int(round(k))
        if abs(k - j) > GRID_SNAP * max(1.0, abs(k)):
            raise PathRangeError(f"time {s} is not on the grid (t0={self.t0}, dt={self.dt})")
        return j

    def _check_range(self, s):
        k = (s - self.t0) / self.dt
        last = self.n_points - 1
        slack = GRID_SNAP * max(1.0, last)
        if not (-slack <= k <= last + slack):
            raise PathRangeError(f"time {s} outside [{self.t0}, {self.T}]")
        return min(max(k, 0.0), float(last))

    def require_alive(self, index):
        if self.lifetime is not None and index >= self.lifetime:
            raise LifetimeError(
                f"path is dead from index {self.lifetime} (t={self.t0 + self.lifetime * self.dt}); "
                f"index {index} requested",
                index=self.lifetime,
            )

    def value_at_index(self, k):
        self.require_alive(k)
        return self.values[k]

    def at(self, t):
        """Value at time ``t``, linearly interpolated between grid points."""
        k = self._check_range(t)
        lo = int(math.floor(k))
        hi = min(lo + 1, self.n_points - 1)
        w = k - lo
        if w <= GRID_SNAP:
            self.require_alive(lo)
            return self.values[lo].copy()
        self.require_alive(hi)
        return (1.0 - w) * self.values[lo] + w * self.values[hi]

    def with_values(self, values, lifetime=None):
        return GridPath(values, self.dt, self.t0, lifetime)

    def __sub__(self, other):
        _check_compatible(self, other)
        life = _min_life(self.lifetime, other.lifetime)
        n = min(self.n_points, other.n_points)
        return GridPath(self.values[:n] - other.values[:n], self.dt, self.t0, life)

    def norms(self):
        """Euclidean norm of every readable grid vector."""
        return np.linalg.norm(self.values[: self.n_alive], axis=1)

    def to_csv(self, target=None):
        """Write ``t,v0,...`` rows with 17 significant digits.

        Dead rows are written as ``nan`` so the lifetime survives a round trip.
        Returns the CSV text when ``target`` is None.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"v{i}" for i in range(self.m)])
        for k, t in enumerate(self.times):
            if self.lifetime is not None and k >= self.lifetime:
                row = ["nan"] * self.m
            else:
                row = [f"{x:.17g}" for x in self.values[k]]
            w.writerow([f"{t:.17g}"] + row)
        text = buf.getvalue()
        if target is None:
            return text
        Path(target).write_text(text)
        return None

    @classmethod
    def from_csv(cls, source):
        """Read a path written by :meth:`to_csv` (path or CSV text)."""
        if isinstance(source, (str, Path)) and "\n" not in str(source):
            text = Path(source).read_text()
        else:
            text = str(source)
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        if not header or header[0] != "t" or len(body) == 0:
            raise ShapeError("CSV must have header t,v0,... and at least one row")
        data = np.array([[float(x) for x in r] for r in body])
        t = data[:, 0]
        dt = (t[-1] - t[0]) / (len(t) - 1) if len(t) > 1 else 1.0
        if len(t) > 1 and not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12):
            raise PathRangeError("CSV time column is not a uniform grid")
        return cls(data[:, 1:], dt, t[0])


def grid_steps(length, dt):
    """Number of ``dt`` steps in ``length``; raises if not a whole number."""
    if dt <= 0:
        raise PathRangeError("dt must be positive")
    q = length / dt
    n = int(round(q))
    if n < 0 or abs(q - n) > GRID_SNAP * max(1.0, q):
        raise PathRangeError(f"length {length} is not a multiple of dt={dt}")
    return n


def _min_life(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


def _check_compatible(y1, y2):
    if y1.m != y2.m:
        raise ShapeError(f"dimension mismatch: {y1.m} vs {y2.m}")
    if not math.isclose(y1.dt, y2.dt, rel_tol=1e-12):
        raise ShapeError(f"grid step mismatch: {y1.dt} vs {y2.dt}")


def sup_norm(y: GridPath, s: float) -> float:
    """``max_{u <= s} ||y(u)||`` over grid points, ``s`` snapped downward."""
    k = y.index_at_or_below(s)
    y.require_alive(k)
    return float(np.max(np.linalg.norm(y.values[: k + 1], axis=1)))


def restrict(y: GridPath, s: float) -> GridPath:
    """Prefix of ``y`` on ``[t0, s]``; ``s`` must be a grid time."""
    k = y.index_of(s)
    life = y.lifetime if (y.lifetime is not None and y.lifetime <= k) else None
    return GridPath(y.values[: k + 1], y.dt, y.t0, life)


def concat_values(v1, v2, n_total):
    """Array form of the concatenation on ``n_total`` grid points.

    ``v1`` covers indices ``0..k1`` and ``v2`` covers ``0..k2`` of its own
    grid; requires ``k1 + k2 <= n_total - 1``.
    """
    k1 = v1.shape[0] - 1
    k2 = v2.shape[0] - 1
    out = np.empty((n_total, v1.shape[1]))
    out[: k1 + 1] = v1
    shift = v1[k1] - v2[0]
    out[k1 + 1 : k1 + k2 + 1] = v2[1:] + shift
    out[k1 + k2 + 1 :] = v2[k2] + shift
    return out


def concat(y1: GridPath, y2: GridPath, T: float) -> GridPath:
    """Continuous pasting of ``y2`` onto the end of ``y1`` on ``[0, T]``.

    ``y1`` lives on ``[0, t1]``, ``y2`` on ``[0, t2]`` and ``t1 + t2 < T``.
    After ``t1 + t2`` the result stays at ``y2(t2) - y2(0) + y1(t1)``.
    """
    _check_compatible(y1, y2)
    if y1.t0 != 0.0 or y2.t0 != 0.0:
        raise PathRangeError("concatenation operands must start at t=0")
    y1.require_alive(y1.n_points - 1)
    y2.require_alive(y2.n_points - 1)
    n = grid_steps(T, y1.dt)
    k1, k2 = y1.n_points - 1, y2.n_points - 1
    if k2 < 1:
        raise PathRangeError("second operand must span at least one grid step")
    if not k1 + k2 < n:
        raise PathRangeError(f"t1 + t2 = {(k1 + k2) * y1.dt} must be < T = {T}")
    return GridPath(concat_values(y1.values, y2.values, n + 1), y1.dt, 0.0)
