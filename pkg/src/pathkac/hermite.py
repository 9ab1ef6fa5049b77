"""Truncated Hermite-Sobolev calculus.

States are coefficient vectors in the orthonormal Hermite-function basis
``h_0, ..., h_N``.  In ``d > 1`` dimensions the basis is the full tensor
product, flattened in C order, so a state has ``(N+1)**d`` coefficients.
Norms use the Hermite-operator eigenvalue weights ``(2|k| + d)**(2q)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

from .errors import PathRangeError, ProjectionError, ShapeError

PI_QUARTER = math.pi ** -0.25


@dataclass(frozen=True, eq=False)
class HermiteState:
    """Truncated Hermite coefficient vector of order ``N`` in ``d`` dimensions.

    ``p`` records the regularity index of the space the state is meant to
    live in; it is metadata and does not change the stored coefficients.
    """

    coeffs: np.ndarray
    N: int
    p: float = 0.0
    d: int = 1

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float, copy=True).reshape(-1)
        if self.N < 0 or self.d < 1:
            raise ShapeError("need N >= 0 and d >= 1")
        if c.size != (self.N + 1) ** self.d:
            raise ShapeError(f"expected {(self.N + 1) ** self.d} coefficients, got {c.size}")
        if not np.all(np.isfinite(c)):
            raise ProjectionError("Hermite coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, N, d=1, p=0.0):
        return cls(np.zeros((N + 1) ** d), N, p, d)

    @classmethod
    def basis_vector(cls, j, N, p=0.0):
        e = np.zeros(N + 1)
        e[j] = 1.0
        return cls(e, N, p)

    def __add__(self, other):
        _check_same_space(self, other)
        return HermiteState(self.coeffs + other.coeffs, self.N, self.p, self.d)

    def __sub__(self, other):
        _check_same_space(self, other)
        return HermiteState(self.coeffs - other.coeffs, self.N, self.p, self.d)

    def scaled(self, factor):
        return HermiteState(factor * self.coeffs, self.N, self.p, self.d)

    def evaluate(self, x):
        """Reconstructed function ``sum_k c_k h_k`` at points ``x`` (d=1)."""
        _require_1d(self)
        return hermite_basis(self.N, x) @ self.coeffs

    def to_json(self):
        return json.dumps(
            {"N": self.N, "d": self.d, "p": self.p, "coeffs": [float(c) for c in self.coeffs]}
        )

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        return cls(np.array(obj["coeffs"], dtype=float), int(obj["N"]), float(obj.get("p", 0.0)), int(obj.get("d", 1)))

    def to_csv(self):
        lines = ["k,coeff"] + [f"{k},{c:.17g}" for k, c in enumerate(self.coeffs)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text, p=0.0, d=1):
        rows = [r.split(",") for r in text.strip().splitlines()[1:]]
        coeffs = np.array([float(r[1]) for r in rows])
        N = round(coeffs.size ** (1.0 / d)) - 1
        return cls(coeffs, N, p, d)


def _check_same_space(a, b):
    if a.N != b.N or a.d != b.d:
        raise ShapeError(f"state spaces differ: (N={a.N}, d={a.d}) vs (N={b.N}, d={b.d})")


def _require_1d(u):
    if u.d != 1:
        raise ShapeError("operation is implemented for d=1 only")


def _recurrence(N, x):
    """Orthonormal Hermite functions by the three-term recurrence.

    ``x`` is any float array; the result has shape ``x.shape + (N+1,)``.
    """
    out = np.empty((N + 1,) + x.shape)
    out[0] = PI_QUARTER * np.exp(-0.5 * x * x)
    if N >= 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for k in range(1, N):
        nxt = out[k + 1, ...]
        np.multiply(x, math.sqrt(2.0 / (k + 1)), out=nxt)
        nxt *= out[k]
        nxt -= math.sqrt(k / (k + 1)) * out[k - 1]
    out = np.moveaxis(out, 0, -1)
    return out


def hermite_basis(N: int, x) -> np.ndarray:
    """Values ``h_0(x), ..., h_N(x)`` for scalar or array ``x``."""
    if N < 0:
        raise ShapeError("N must be non-negative")
    x = np.asarray(x, dtype=float)
    return _recurrence(N, x)


def hermite_basis_nd(N: int, points) -> np.ndarray:
    """Tensor-product basis at points of shape ``(..., d)``, flattened in C order."""
    pts = np.asarray(points, dtype=float)
    d = pts.shape[-1]
    vals = _recurrence(N, pts)  # (..., d, N+1)
    out = vals[..., 0, :]
    for i in range(1, d):
        out = (out[..., :, None] * vals[..., i, None, :]).reshape(pts.shape[:-1] + (-1,))
    return out


def hermite_derivatives(N: int, x):
    """First and second derivatives of ``h_0..h_N`` at ``x``.

    Uses ``h_k' = sqrt(k/2) h_{k-1} - sqrt((k+1)/2) h_{k+1}`` applied twice.
    """
    x = np.asarray(x, dtype=float)
    h = hermite_basis(N + 2, x)

    def diff(v, n):
        k = np.arange(n + 1)
        lower = np.zeros(v.shape[:-1] + (n + 1,))
        lower[..., 1:] = np.sqrt(k[1:] / 2.0) * v[..., : n]
        return lower - np.sqrt((k + 1) / 2.0) * v[..., 1 : n + 2]

    d1_ext = diff(h, N + 1)
    d1 = d1_ext[..., : N + 1]
    d2 = diff(d1_ext, N)
    return d1, d2


@lru_cache(maxsize=32)
def gauss_hermite(n: int):
    """Nodes and full-line weights ``w_i e^{x_i^2}`` of an n-point rule.

    The returned weights integrate ``g`` directly: ``int g ~ sum W_i g(x_i)``.
    """
    x, w = np.polynomial.hermite.hermgauss(n)
    with np.errstate(divide="ignore"):
        W = np.exp(np.log(w) + x * x)
    x.setflags(write=False)
    W.setflags(write=False)
    return x, W


@lru_cache(maxsize=32)
def _projection_matrix(N, n_nodes):
    x, W = gauss_hermite(n_nodes)
    A = W[:, None] * hermite_basis(N, x)
    A.setflags(write=False)
    return x, A


def project(f, N: int, p: float = 0.0, n_nodes: int | None = None) -> HermiteState:
    """Coefficients ``<f, h_k>`` by Gauss-Hermite quadrature.

    ``f`` must accept a 1-D array of points.  The default rule has
    ``2(N+1)`` nodes.
    """
    n_nodes = n_nodes or 2 * (N + 1)
    x, A = _projection_matrix(N, n_nodes)
    with np.errstate(over="ignore", invalid="ignore"):
        fx = np.asarray(f(x), dtype=float) * np.ones_like(x)
        coeffs = A.T @ fx
    if not np.all(np.isfinite(coeffs)):
        raise ProjectionError("quadrature produced non-finite coefficients")
    return HermiteState(coeffs, N, p)


def delta_coeffs(x, N: int, p: float = 0.0) -> HermiteState:
    """Coefficients of the Dirac mass at ``x``: entry ``k`` is ``h_k(x)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size == 1:
        return HermiteState(hermite_basis(N, x[0]), N, p)
    return HermiteState(hermite_basis_nd(N, x), N, p, x.size)


def delta_coeffs_many(xs, N: int) -> np.ndarray:
    """Delta coefficients for an array of 1-D positions; shape ``(n, N+1)``."""
    return hermite_basis(N, np.asarray(xs, dtype=float))


@lru_cache(maxsize=64)
def _degree(N, d):
    if d == 1:
        return np.arange(N + 1)
    return np.array([sum(k) for k in product(range(N + 1), repeat=d)])


def sobolev_weights(N: int, d: int, q: float) -> np.ndarray:
    return (2.0 * _degree(N, d) + d) ** (2.0 * q)


def sobolev_norm(u: HermiteState, q: float) -> float:
    """``sqrt(sum_k (2|k| + d)^{2q} c_k^2)``."""
    w = sobolev_weights(u.N, u.d, q)
    return float(np.sqrt(np.sum(w * u.coeffs**2)))


def delta_norm_partial_sum(x, N: int, p: float) -> float:
    """Squared ``-p`` norm of the order-``N`` truncation of ``delta_x`` (d=1)."""
    h = hermite_basis(N, float(x))
    return float(np.sum((2.0 * np.arange(N + 1) + 1.0) ** (-2.0 * p) * h * h))


def pair(f: HermiteState, u: HermiteState) -> float:
    """Duality pairing ``sum_k f_k u_k``."""
    _check_same_space(f, u)
    return float(f.coeffs @ u.coeffs)


def translation_window(N: int) -> float:
    """Largest shift accepted by :func:`translate`."""
    return math.sqrt(2.0 * N) / 2.0


def translate_many(u: HermiteState, shifts, n_nodes: int | None = None) -> np.ndarray:
    """Coefficients of ``xi -> u(xi - z)`` for every ``z`` in ``shifts``.

    Returns an array of shape ``(len(shifts), N+1)``.
    """
    _require_1d(u)
    z = np.atleast_1d(np.asarray(shifts, dtype=float))
    window = translation_window(u.N)
    if np.any(np.abs(z) > window + 1e-12):
        raise PathRangeError(f"shift outside reliable window |z| <= {window:.4g}")
    n_nodes = n_nodes or 2 * (u.N + 1)
    x, A = _projection_matrix(u.N, n_nodes)
    out = np.empty((z.size, u.N + 1))
    chunk = 512
    for start in range(0, z.size, chunk):
        zz = z[start : start + chunk]
        g = hermite_basis(u.N, x[None, :] - zz[:, None]) @ u.coeffs  # (chunk, nodes)
        out[start : start + chunk] = g @ A
    return out


def translate(u: HermiteState, z, n_nodes: int | None = None) -> HermiteState:
    """Translation ``tau_z u = u(. - z)`` by re-projection (d=1)."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.size != 1:
        raise ShapeError("translate is implemented for d=1 only")
    c = translate_many(u, z, n_nodes)[0]
    return HermiteState(c, u.N, u.p, u.d)


def _fd_derivatives(f, x, h):
    fp = f(x + h)
    fm = f(x - h)
    f0 = f(x)
    return (fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h)


def adjoint_L_on_delta(x, a, b, f, df=None, d2f=None):
    """``<f, L delta_x> = 1/2 sum a_ij d_ij f(x) + sum b_i d_i f(x)``.

    ``a`` is the diffusion matrix ``sigma sigma^T`` at ``x`` and ``b`` the
    drift.  Works for scalar ``x`` (d=1) and vectorizes over arrays of
    scalar positions, where ``a``, ``b`` broadcast against ``x``.  For
    ``d > 1`` pass ``x`` of shape ``(d,)`` and ``a`` of shape ``(d, d)``.
    Derivatives use centred differences with step ``1e-4 (1 + |x|)``
    unless ``df`` / ``d2f`` are supplied.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    if a.ndim == 2 and a.shape[0] > 1 and a.shape == (x.size, x.size):
        return _adjoint_L_nd(x, a, b, f)
    a = a.reshape(()) if a.size == 1 else a
    b = b.reshape(()) if b.size == 1 else b
    if df is None or d2f is None:
        # balances truncation against roundoff for the second difference
        h = 1e-4 * (1.0 + np.abs(x))
        g1, g2 = _fd_derivatives(f, x, h)
    g1 = df(x) if df is not None else g1
    g2 = d2f(x) if d2f is not None else g2
    return 0.5 * a * g2 + b * g1


def _adjoint_L_nd(x, a, b, f):
    d = x.shape[-1]
    h = 1e-4 * (1.0 + np.linalg.norm(x))
    eye = np.eye(d) * h
    f0 = f(x)
    grad = np.array([(f(x + eye[i]) - f(x - eye[i])) / (2 * h) for i in range(d)])
    hess = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            if i == j:
                hess[i, i] = (f(x + eye[i]) - 2 * f0 + f(x - eye[i])) / (h * h)
            else:
                hess[i, j] = (
                    f(x + eye[i] + eye[j]) - f(x + eye[i] - eye[j]) - f(x - eye[i] + eye[j]) + f(x - eye[i] - eye[j])
                ) / (4 * h * h)
    return float(0.5 * np.sum(a * hess) + b @ grad)


def L_on_delta_coeffs(x: float, a: float, b: float, N: int) -> HermiteState:
    """Hermite coefficients of ``L(delta_x) = 1/2 a delta_x'' - b delta_x'`` (d=1).

    Pairing the result with ``project(f, N)`` gives the truncated analogue
    of :func:`adjoint_L_on_delta`.
    """
    d1, d2 = hermite_derivatives(N, float(x))
    # <delta_x', h_k> = -h_k'(x) and <delta_x'', h_k> = h_k''(x)
    return HermiteState(0.5 * a * d2 + b * d1, N)
