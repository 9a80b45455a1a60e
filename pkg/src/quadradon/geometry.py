"""Quadric forms, paraboloid families and center surfaces.

A center surface is the graph ``y_n = q(y')`` over a box-shaped domain in
``R^{n-1}`` (optionally cut down further by a membership predicate). Every
built-in surface carries exact gradient and Hessian suppliers.
"""
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .errors import (BadDomain, BadParaboloid, EmptySurface, NotSymmetric,
                     Singular, UnknownKind)

EIG_TOL = 1e-12


class SurfaceKind(str, Enum):
    PLANE = "plane"
    HEMISPHERE = "hemisphere"
    HALF_CYLINDER = "half_cylinder"
    GRAPH_POLY = "graph_poly"


@dataclass(frozen=True, eq=False)
class QuadricForm:
    """Symmetric invertible matrix defining the level sets ``x_T^T A x_T = t``."""
    n: int
    A: np.ndarray
    A_inv: np.ndarray
    signature: tuple

    @property
    def is_definite(self):
        return 0 in self.signature

    @property
    def is_positive_definite(self):
        return self.signature[1] == 0


def make_quadric(A):
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("quadric matrix must be square")
    n = A.shape[0]
    if n < 2:
        raise ValueError("dimension must be at least 2")
    if np.any(A != A.T):
        raise NotSymmetric("matrix is not symmetric")
    evals = np.linalg.eigvalsh(A)
    scale = np.max(np.abs(evals))
    if scale == 0 or np.any(np.abs(evals) <= EIG_TOL * scale):
        raise Singular("matrix has an eigenvalue below tolerance")
    A_inv = np.linalg.inv(A)
    A_inv = 0.5 * (A_inv + A_inv.T)
    A.setflags(write=False)
    A_inv.setflags(write=False)
    k_pos = int(np.sum(evals > 0))
    return QuadricForm(n=n, A=A, A_inv=A_inv, signature=(k_pos, n - k_pos))


@dataclass(frozen=True, eq=False)
class CenterSurface:
    n: int
    lo: np.ndarray
    hi: np.ndarray
    q: Callable
    grad_q: Callable
    hess_q: Callable
    kind: SurfaceKind
    params: dict = field(default_factory=dict)
    predicate: Callable = None

    def contains(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y < self.lo) or np.any(y > self.hi):
            return False
        return True if self.predicate is None else bool(self.predicate(y))

    def center(self, y):
        """The point ``s = (y', q(y'))`` of the surface."""
        y = np.asarray(y, dtype=float)
        return np.append(y, self.q(y))

    @property
    def scale(self):
        return float(max(1.0, np.max(np.abs(self.lo)), np.max(np.abs(self.hi))))

    @property
    def hessian_vanishes(self):
        if self.kind is SurfaceKind.PLANE:
            return True
        if self.kind is SurfaceKind.GRAPH_POLY:
            return all(sum(e) <= 1 for e, c in self.params["terms"] if c != 0)
        return False


def _box(lo, hi, dim):
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (dim,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (dim,)).copy()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise BadDomain("domain bounds must be finite")
    if np.any(lo >= hi):
        raise BadDomain("empty or inverted domain box")
    return lo, hi


def _plane(n, params):
    h = float(params.get("height", 0.0))
    m = n - 1
    lo, hi = _box(params.get("lo", -2.0), params.get("hi", 2.0), m)
    return CenterSurface(
        n=n, lo=lo, hi=hi,
        q=lambda y: h,
        grad_q=lambda y: np.zeros(m),
        hess_q=lambda y: np.zeros((m, m)),
        kind=SurfaceKind.PLANE, params={"height": h})


def _hemisphere(n, params):
    margin = float(params.get("margin", 0.05))
    if not 0 <= margin < 1:
        raise BadDomain("margin must lie in [0, 1)")
    m = n - 1
    rmax = 1.0 - margin
    lo, hi = _box(-rmax, rmax, m)

    def q(y):
        return np.sqrt(1.0 - y @ y)

    def grad_q(y):
        return -y / q(y)

    def hess_q(y):
        s = q(y)
        return -(np.eye(m) / s + np.outer(y, y) / s**3)

    return CenterSurface(
        n=n, lo=lo, hi=hi, q=q, grad_q=grad_q, hess_q=hess_q,
        kind=SurfaceKind.HEMISPHERE, params={"margin": margin},
        predicate=lambda y: y @ y <= rmax * rmax)


def _half_cylinder(n, params):
    if n < 3:
        raise BadDomain("half cylinder needs n >= 3")
    margin = float(params.get("margin", 0.05))
    half_length = float(params.get("half_length", 10.0))
    if not 0 <= margin < 1:
        raise BadDomain("margin must lie in [0, 1)")
    m = n - 1
    rmax = 1.0 - margin
    lo, hi = _box([-half_length] + [-rmax] * (m - 1),
                  [half_length] + [rmax] * (m - 1), m)

    def q(y):
        z = y[1:]
        return np.sqrt(1.0 - z @ z)

    def grad_q(y):
        g = np.zeros(m)
        g[1:] = -y[1:] / q(y)
        return g

    def hess_q(y):
        z = y[1:]
        s = q(y)
        H = np.zeros((m, m))
        H[1:, 1:] = -(np.eye(m - 1) / s + np.outer(z, z) / s**3)
        return H

    return CenterSurface(
        n=n, lo=lo, hi=hi, q=q, grad_q=grad_q, hess_q=hess_q,
        kind=SurfaceKind.HALF_CYLINDER,
        params={"margin": margin, "half_length": half_length},
        predicate=lambda y: y[1:] @ y[1:] <= rmax * rmax)


def _graph_poly(n, params):
    m = n - 1
    terms = []
    for exps, coeff in params.get("terms", []):
        exps = tuple(int(e) for e in exps)
        if len(exps) != m or any(e < 0 for e in exps):
            raise BadDomain(f"monomial exponents must be {m} nonnegative integers")
        if sum(exps) > 4:
            raise BadDomain("polynomial degree is capped at 4")
        terms.append((exps, float(coeff)))
    lo, hi = _box(params.get("lo", -1.0), params.get("hi", 1.0), m)
    E = np.array([e for e, _ in terms], dtype=float).reshape(-1, m)
    C = np.array([c for _, c in terms], dtype=float)

    def _powers(y, shift):
        # y_i ** (e_i - shift_i), zero where the exponent goes negative
        e = E - shift
        out = np.where(e < 0, 0.0, np.power(y, np.maximum(e, 0)))
        return np.prod(out, axis=1)

    def q(y):
        return float(C @ _powers(y, np.zeros(m)))

    def grad_q(y):
        g = np.empty(m)
        for i in range(m):
            d = np.zeros(m)
            d[i] = 1
            g[i] = (C * E[:, i]) @ _powers(y, d)
        return g

    def hess_q(y):
        H = np.empty((m, m))
        for i, j in product(range(m), repeat=2):
            d = np.zeros(m)
            d[i] += 1
            d[j] += 1
            fac = E[:, i] * (E[:, j] - (1 if i == j else 0))
            H[i, j] = (C * fac) @ _powers(y, d)
        return H

    return CenterSurface(
        n=n, lo=lo, hi=hi, q=q, grad_q=grad_q, hess_q=hess_q,
        kind=SurfaceKind.GRAPH_POLY, params={"terms": terms})


_BUILDERS = {
    SurfaceKind.PLANE: _plane,
    SurfaceKind.HEMISPHERE: _hemisphere,
    SurfaceKind.HALF_CYLINDER: _half_cylinder,
    SurfaceKind.GRAPH_POLY: _graph_poly,
}


def builtin_surface(kind, n, params=None):
    """Build one of the built-in center surfaces.

    ``params`` by kind: PLANE takes ``height``, ``lo``, ``hi``; HEMISPHERE
    takes ``margin``; HALF_CYLINDER takes ``margin`` and ``half_length`` (the
    extent along the free ``y_1`` axis); GRAPH_POLY takes ``terms`` as a list
    of ``(exponents, coefficient)`` pairs plus ``lo``/``hi``.
    """
    try:
        kind = SurfaceKind(kind.lower() if isinstance(kind, str) else kind)
    except ValueError:
        raise UnknownKind(f"unknown surface kind {kind!r}") from None
    if n < 2:
        raise BadDomain("dimension must be at least 2")
    return _BUILDERS[kind](int(n), dict(params or {}))


@dataclass(frozen=True, eq=False)
class ParaboloidFamily:
    """Surfaces ``t = x_T'^T A' x_T' + b . x_T''`` split at index ``k``."""
    n: int
    k: int
    A_prime: np.ndarray
    A_prime_inv: np.ndarray
    b: np.ndarray


def make_paraboloid(n, k, A_prime, b):
    n, k = int(n), int(k)
    if not 1 <= k <= n - 1:
        raise BadParaboloid("k must lie in 1..n-1")
    Q = make_quadric(A_prime) if k > 1 else None
    A_prime = np.array(A_prime, dtype=float).reshape(k, k)
    if k == 1:
        if A_prime[0, 0] == 0:
            raise Singular("A' is singular")
        A_inv = 1.0 / A_prime
    else:
        A_inv = Q.A_inv
    b = np.array(b, dtype=float).reshape(-1)
    if b.shape != (n - k,):
        raise BadParaboloid(f"b must have {n - k} entries")
    if not np.any(b != 0):
        raise BadParaboloid("b required, nonzero")
    return ParaboloidFamily(n=n, k=k, A_prime=A_prime, A_prime_inv=A_inv, b=b)


def tangent_clearance(Q, S, y, t, box, n_samples=2**13, seed=0):
    """Smallest ``|(-grad q(y'), 1) . x_T|`` over sampled points of ``T(y', t)`` in ``box``.

    Points are produced by radially rescaling low-discrepancy samples (drawn
    both in ``box`` and on the unit sphere) onto the level set. A positive
    result certifies, up to sampling density, that the level set misses the
    tangent plane of ``S`` at the center.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    y = np.asarray(y, dtype=float)
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    s = S.center(y)
    n = Q.n
    sob = qmc.Sobol(d=n, scramble=True, seed=seed)
    u = sob.random(n_samples)
    dirs_box = lo + (hi - lo) * u - s
    gauss = qmc.MultivariateNormalQMC(mean=np.zeros(n), seed=seed + 1).random(n_samples)
    dirs = np.vstack([dirs_box, gauss])
    m = np.einsum("ij,jk,ik->i", dirs, Q.A, dirs)
    good = m > 0
    pts = s + dirs[good] * np.sqrt(t / m[good])[:, None]
    inside = np.all((pts >= lo) & (pts <= hi), axis=1)
    pts = pts[inside]
    if len(pts) == 0:
        raise EmptySurface("no point of the level set found in the box")
    normal = np.append(-S.grad_q(y), 1.0)
    return float(np.min(np.abs((pts - s) @ normal)))
