"""Euler-Maruyama simulation of the driving diffusions.

Noise comes from Philox, a counter-based generator.  The key is
``(seed, block)`` and the counter carries the step index, so the increment
of path ``p`` at step ``k`` depends only on ``(seed, p, k)``: batches are
reproducible bit for bit whatever the number of worker threads, and
estimators that share a seed see common random numbers.
"""

from __future__ import annotations

import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import LifetimeError
from .hermite import delta_coeffs_many, hermite_basis_nd
from .paths import GridPath, grid_steps
from .transform import cumulative_trapezoid

BLOCK = 2048
MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class DiffusionSpec:
    """``dX = sigma(X) dB + drift(X) dt`` started at ``x0``.

    ``sigma`` maps states of shape ``(n, d)`` to ``(n, d, r)`` and ``drift``
    maps them to ``(n, d)``.  Paths leaving the ball of radius
    ``lifetime_radius`` are killed.
    """

    sigma: Callable[[np.ndarray], np.ndarray]
    drift: Callable[[np.ndarray], np.ndarray]
    x0: np.ndarray
    noise_dim: int = 1
    lifetime_radius: float = math.inf
    label: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def d(self):
        return int(np.asarray(self.x0).size)

    def started_at(self, x):
        return DiffusionSpec(self.sigma, self.drift, np.atleast_1d(np.asarray(x, dtype=float)),
                             self.noise_dim, self.lifetime_radius, self.label, self.params)

    def with_radius(self, radius):
        return DiffusionSpec(self.sigma, self.drift, self.x0, self.noise_dim, radius, self.label, self.params)

    def scalar_coefficients(self, x):
        """``(sigma(x), drift(x))`` on a 1-D array of points (d = r = 1)."""
        pts = np.asarray(x, dtype=float).reshape(-1, 1)
        return self.sigma(pts)[:, 0, 0], self.drift(pts)[:, 0]


def brownian(d: int = 1, x0=None, scale: float = 1.0) -> DiffusionSpec:
    x0 = np.zeros(d) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    eye = scale * np.eye(d)
    return DiffusionSpec(
        sigma=lambda X: np.broadcast_to(eye, (X.shape[0], d, d)),
        drift=lambda X: np.zeros_like(X),
        x0=x0,
        noise_dim=d,
        label="brownian",
        params={"kind": "brownian", "d": d, "scale": scale},
    )


def ornstein_uhlenbeck(theta: float = 1.0, sigma: float = 1.0, x0=0.0) -> DiffusionSpec:
    """Scalar OU process ``dX = -theta X dt + sigma dB``."""
    return DiffusionSpec(
        sigma=lambda X: np.full((X.shape[0], 1, 1), sigma),
        drift=lambda X: -theta * X,
        x0=np.atleast_1d(np.asarray(x0, dtype=float)),
        label="ou",
        params={"kind": "ou", "theta": theta, "sigma": sigma},
    )


def constant_coefficients(sigma_matrix, drift_vector, x0) -> DiffusionSpec:
    S = np.atleast_2d(np.asarray(sigma_matrix, dtype=float))
    b = np.atleast_1d(np.asarray(drift_vector, dtype=float))
    return DiffusionSpec(
        sigma=lambda X: np.broadcast_to(S, (X.shape[0],) + S.shape),
        drift=lambda X: np.broadcast_to(b, X.shape),
        x0=np.atleast_1d(np.asarray(x0, dtype=float)),
        noise_dim=S.shape[1],
        label="constant",
        params={"kind": "constant", "sigma": S.tolist(), "drift": b.tolist()},
    )


def scalar_diffusion(sigma_fn, drift_fn, x0=0.0, label="scalar") -> DiffusionSpec:
    """1-D diffusion from vectorized scalar coefficient functions."""
    return DiffusionSpec(
        sigma=lambda X: np.asarray(sigma_fn(X[:, 0]), dtype=float).reshape(-1, 1, 1) * np.ones((X.shape[0], 1, 1)),
        drift=lambda X: np.asarray(drift_fn(X[:, 0]), dtype=float).reshape(-1, 1) * np.ones((X.shape[0], 1)),
        x0=np.atleast_1d(np.asarray(x0, dtype=float)),
        label=label,
        params={"kind": label},
    )


def spec_from_dict(obj: dict) -> DiffusionSpec:
    """Build a built-in diffusion from JSON-style parameters."""
    kind = obj.get("kind", "brownian")
    x0 = obj.get("x0", 0.0)
    if kind == "brownian":
        d = int(obj.get("d", np.atleast_1d(x0).size))
        spec = brownian(d, np.broadcast_to(np.asarray(x0, dtype=float), (d,)), float(obj.get("scale", 1.0)))
    elif kind == "ou":
        spec = ornstein_uhlenbeck(float(obj.get("theta", 1.0)), float(obj.get("sigma", 1.0)), x0)
    elif kind == "constant":
        spec = constant_coefficients(obj["sigma"], obj["drift"], x0)
    else:
        raise ValueError(f"unknown diffusion kind {kind!r}")
    radius = obj.get("lifetime_radius")
    return spec if radius is None else spec.with_radius(float(radius))


@dataclass(frozen=True)
class McConfig:
    n_paths: int
    dt: float
    T: float
    seed: int = 0

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        grid_steps(self.T, self.dt)

    @property
    def steps(self):
        return grid_steps(self.T, self.dt)

    def index(self, t):
        if t < -1e-12 or t > self.T * (1 + 1e-12) + 1e-12:
            raise ValueError(f"t={t} outside [0, {self.T}]")
        return grid_steps(t, self.dt)


def worker_count():
    env = os.environ.get("PATHKAC_THREADS")
    n = os.cpu_count() or 1
    if env:
        n = max(1, min(n, int(env)))
    return n


def map_blocks(fn, n_paths, workers=None):
    """Apply ``fn(block_index, start, size)`` to every path block, in order."""
    blocks = [(b, b * BLOCK, min(BLOCK, n_paths - b * BLOCK)) for b in range((n_paths + BLOCK - 1) // BLOCK)]
    workers = workers or worker_count()
    if workers <= 1 or len(blocks) == 1:
        return [fn(*blk) for blk in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda blk: fn(*blk), blocks))


def step_normals(seed: int, block: int, step: int, size: int, r: int) -> np.ndarray:
    """Standard normals of step ``step`` for the paths of block ``block``.

    A full block is always drawn, so a path's noise does not depend on the
    batch size.
    """
    bitgen = np.random.Philox(key=[seed & MASK64, block], counter=[0, step, 0, 0])
    z = np.random.Generator(bitgen).standard_normal((BLOCK, r))
    return z[:size]


@dataclass(frozen=True, eq=False)
class PathBatch:
    """``n`` grid paths sharing a grid; ``lifetime[i] == n_points`` means alive."""

    values: np.ndarray  # (n, n_points, d)
    dt: float
    lifetime: np.ndarray
    seed: int = 0

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def n_points(self):
        return self.values.shape[1]

    @property
    def d(self):
        return self.values.shape[2]

    def path(self, i) -> GridPath:
        life = int(self.lifetime[i])
        return GridPath(self.values[i], self.dt, 0.0, None if life >= self.n_points else life)

    def alive_at(self, k):
        return self.lifetime > k

    def to_bytes(self) -> bytes:
        """Header ``(n, steps, d, dt, seed)``, row-major doubles, then int64 lifetimes."""
        head = struct.pack("<qqqdQ", self.n, self.n_points - 1, self.d, self.dt, self.seed & MASK64)
        body = np.ascontiguousarray(self.values, dtype="<f8").tobytes()
        tail = np.ascontiguousarray(self.lifetime, dtype="<i8").tobytes()
        return head + body + tail

    @classmethod
    def from_bytes(cls, raw: bytes) -> PathBatch:
        n, steps, d, dt, seed = struct.unpack_from("<qqqdQ", raw)
        off = struct.calcsize("<qqqdQ")
        count = n * (steps + 1) * d
        vals = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(n, steps + 1, d)
        off += 8 * count
        if len(raw) >= off + 8 * n:
            life = np.frombuffer(raw, dtype="<i8", count=n, offset=off).copy()
        else:
            life = np.full(n, steps + 1)
        return cls(vals.copy(), dt, life, seed)

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path):
        return cls.from_bytes(Path(path).read_bytes())


def euler_block(spec: DiffusionSpec, cfg: McConfig, block: int, start: int, size: int, x0=None):
    """Euler-Maruyama paths for one block; returns ``(values, lifetime)``."""
    steps = cfg.steps
    d, r = spec.d, spec.noise_dim
    x0 = spec.x0 if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    X = np.empty((size, steps + 1, d))
    X[:, 0] = x0
    life = np.full(size, steps + 1, dtype=np.int64)
    radius = spec.lifetime_radius
    if np.linalg.norm(x0) > radius:
        X[:] = x0
        life[:] = 0
        return X, life
    sq = math.sqrt(cfg.dt)
    alive = np.ones(size, dtype=bool)
    any_dead = False
    x = X[:, 0].copy()
    for k in range(steps):
        dB = step_normals(cfg.seed, block, k, size, r) * sq
        sig = spec.sigma(x)
        noise = sig[:, :, 0] * dB[:, 0:1] if r == 1 else np.matmul(sig, dB[:, :, None])[:, :, 0]
        x_new = x + spec.drift(x) * cfg.dt + noise
        if any_dead:
            x_new[~alive] = x[~alive]
        finite = np.isfinite(x_new).all()
        if not finite or radius < math.inf:
            bad = ~np.all(np.isfinite(x_new), axis=1)
            x_new[bad] = x[bad]
            nrm = np.abs(x_new[:, 0]) if d == 1 else np.linalg.norm(x_new, axis=1)
            out = alive & (bad | (nrm > radius))
            if out.any():
                life[out] = k + 1
                alive &= ~out
                any_dead = True
        X[:, k + 1] = x_new
        x = x_new
    return X, life


def simulate_sde(spec: DiffusionSpec, cfg: McConfig, workers=None) -> PathBatch:
    """Simulate ``cfg.n_paths`` Euler-Maruyama paths; dead paths freeze."""
    parts = map_blocks(lambda b, s, n: euler_block(spec, cfg, b, s, n), cfg.n_paths, workers)
    vals = np.concatenate([p[0] for p in parts])
    life = np.concatenate([p[1] for p in parts])
    return PathBatch(vals, cfg.dt, life, cfg.seed)


def z_block(sigma_x, b_x, cfg: McConfig, block: int, size: int):
    """Exact Gaussian paths ``sigma B_t + b t`` for one block; shape ``(size, steps+1, d)``."""
    S = np.atleast_2d(np.asarray(sigma_x, dtype=float))
    b = np.atleast_1d(np.asarray(b_x, dtype=float))
    steps = cfg.steps
    r = S.shape[1]
    sq = math.sqrt(cfg.dt)
    B = np.zeros((size, steps + 1, r))
    if steps:
        dB = np.stack([step_normals(cfg.seed, block, k, size, r) for k in range(steps)], axis=1)
        np.cumsum(dB * sq, axis=1, out=B[:, 1:])
    t = cfg.dt * np.arange(steps + 1)
    return B @ S.T + t[None, :, None] * b


def gaussian_Z(x, sigma_x, b_x, cfg: McConfig, workers=None) -> PathBatch:
    """Batch of ``Z_t = sigma(x) B_t + b(x) t`` with exact increments.

    ``x`` only labels the external parameter; the coefficients are already
    evaluated there.
    """
    parts = map_blocks(lambda blk, s, n: z_block(sigma_x, b_x, cfg, blk, n), cfg.n_paths, workers)
    vals = np.concatenate(parts)
    return PathBatch(vals, cfg.dt, np.full(cfg.n_paths, cfg.steps + 1, dtype=np.int64), cfg.seed)


@dataclass(frozen=True, eq=False)
class KacIntegral:
    """Cumulative ``int_0^{t_k} V(X_s) ds`` on the grid, times a sign."""

    values: np.ndarray
    dt: float
    lifetime: int | None = None

    def at(self, t):
        k = grid_steps(t, self.dt)
        if self.lifetime is not None and k >= self.lifetime:
            raise LifetimeError(f"path dead from index {self.lifetime}; t={t} requested", index=self.lifetime)
        return float(self.values[k])


def kac_along(X: GridPath, vbar, sign: int = 1) -> KacIntegral:
    """Trapezoid Kac functional of ``vbar`` along a single path.

    ``vbar`` maps states of shape ``(..., d)`` to ``(...)``.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    n = X.n_alive
    vals = np.full(X.n_points, np.nan)
    if n > 0:
        v = np.asarray(vbar(X.values[:n]), dtype=float) * np.ones(n)
        vals[:n] = sign * cumulative_trapezoid(v, X.dt)
    return KacIntegral(vals, X.dt, X.lifetime)


def kac_batch(values: np.ndarray, vbar, dt: float) -> np.ndarray:
    """Kac functional along every path of a ``(n, n_points, d)`` array."""
    v = np.asarray(vbar(values), dtype=float) * np.ones(values.shape[:2])
    return cumulative_trapezoid(v, dt)


def lift_path(X: GridPath, N: int) -> GridPath:
    """Pointwise Dirac lift ``t -> delta_{X_t}`` as Hermite coefficients."""
    if X.m == 1:
        coeffs = delta_coeffs_many(X.values[:, 0], N)
    else:
        coeffs = hermite_basis_nd(N, X.values)
    return GridPath(coeffs, X.dt, X.t0, X.lifetime)
