"""Phase function, canonical relation and its projections.

Points of the canonical relation are parameterized by ``(y', x, omega)``.
Jacobians use the variable order ``(y'_1..y'_{n-1}, x_1..x_n, omega)`` and
the output orders ``(y', t, eta, tau)`` for the left projection and
``(x, xi)`` for the right projection.
"""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import NoneFound, NotOnSigma
from .rng import stream

SIGMA_TOL = 1e-9
ROOT_TOL = 1e-10
MIN_OMEGA = 0.1


@dataclass(frozen=True, eq=False)
class CanonicalPoint:
    y: np.ndarray
    x: np.ndarray
    omega: float

    def as_vector(self):
        return np.concatenate([self.y, self.x, [self.omega]])


@dataclass(frozen=True, eq=False)
class LeftImage:
    y: np.ndarray
    t: float
    eta: np.ndarray
    tau: float

    def as_vector(self):
        return np.concatenate([self.y, [self.t], self.eta, [self.tau]])


@dataclass(frozen=True, eq=False)
class RightImage:
    x: np.ndarray
    xi: np.ndarray

    def as_vector(self):
        return np.concatenate([self.x, self.xi])


def canonical_point(y, x, omega, S):
    """Validated constructor for :class:`CanonicalPoint`."""
    y = np.array(y, dtype=float).reshape(-1)
    x = np.array(x, dtype=float).reshape(-1)
    if y.shape != (S.n - 1,) or x.shape != (S.n,):
        raise ValueError("dimension mismatch between point and surface")
    if omega == 0:
        raise ValueError("omega must be nonzero")
    if not S.contains(y):
        raise ValueError("y' lies outside the surface domain")
    if np.linalg.norm(x - S.center(y)) <= 1e-10:
        raise ValueError("x lies on the center surface")
    return CanonicalPoint(y=y, x=x, omega=float(omega))


def from_vector(z, n):
    z = np.asarray(z, dtype=float)
    return CanonicalPoint(y=z[:n - 1], x=z[n - 1:2 * n - 1], omega=float(z[-1]))


def offset(y, x, S):
    """``x_T = x - (y', q(y'))``."""
    return np.asarray(x, dtype=float) - S.center(y)


def point_scale(cp):
    return 1.0 + np.linalg.norm(cp.x) + np.linalg.norm(cp.y)


def phase(y, t, x, omega, Q, S):
    xT = offset(y, x, S)
    return omega * (t - xT @ Q.A @ xT)


def matrix_B(S, y):
    y = np.asarray(y, dtype=float)
    return np.hstack([np.eye(S.n - 1), S.grad_q(y)[:, None]])


def project_left(cp, Q, S):
    xT = offset(cp.y, cp.x, S)
    AxT = Q.A @ xT
    eta = 2.0 * cp.omega * (matrix_B(S, cp.y) @ AxT)
    return LeftImage(y=cp.y.copy(), t=float(xT @ AxT), eta=eta, tau=cp.omega)


def project_right(cp, Q, S):
    xT = offset(cp.y, cp.x, S)
    return RightImage(x=cp.x.copy(), xi=2.0 * cp.omega * (Q.A @ xT))


def jacobian_left(cp, Q, S):
    n = S.n
    m = n - 1
    w = cp.omega
    xT = offset(cp.y, cp.x, S)
    AxT = Q.A @ xT
    B = matrix_B(S, cp.y)
    H = S.hess_q(cp.y)
    J = np.zeros((2 * n, 2 * n))
    J[:m, :m] = np.eye(m)
    J[m, :m] = -2.0 * B @ AxT
    J[m, m:m + n] = 2.0 * AxT
    # eta_i = 2w B_i . A x_T, and dB_i/dy_j only touches the last column
    J[n:n + m, :m] = 2.0 * w * (H * AxT[-1] - B @ Q.A @ B.T)
    J[n:n + m, m:m + n] = 2.0 * w * B @ Q.A
    J[n:n + m, -1] = 2.0 * B @ AxT
    J[-1, -1] = 1.0
    return J


def jacobian_right(cp, Q, S):
    n = S.n
    m = n - 1
    xT = offset(cp.y, cp.x, S)
    B = matrix_B(S, cp.y)
    J = np.zeros((2 * n, 2 * n))
    J[:n, m:m + n] = np.eye(n)
    J[n:, :m] = -2.0 * cp.omega * Q.A @ B.T
    J[n:, m:m + n] = 2.0 * cp.omega * Q.A
    J[n:, -1] = 2.0 * Q.A @ xT
    return J


def sigma_K(y, x, S):
    """Defining function of the fold set: ``(-grad q(y'), 1) . x_T``."""
    y = np.asarray(y, dtype=float)
    return float(np.append(-S.grad_q(y), 1.0) @ offset(y, x, S))


def grad_sigma_K(cp, S):
    """Gradient of ``sigma_K`` over ``(y', x, omega)``."""
    xT = offset(cp.y, cp.x, S)
    H = S.hess_q(cp.y)
    return np.concatenate([-H @ xT[:-1], -S.grad_q(cp.y), [1.0], [0.0]])


def det_left_closed(cp, Q, S):
    return 2.0 * cp.omega * sigma_K(cp.y, cp.x, S) * np.linalg.det(Q.A)


def _require_sigma(cp, S):
    K = sigma_K(cp.y, cp.x, S)
    if abs(K) >= SIGMA_TOL * point_scale(cp):
        raise NotOnSigma(f"|K| = {abs(K):.3e} exceeds the fold-set tolerance")
    return K


def kernel_left(cp, Q, S, rn=1.0):
    """Kernel of the left Jacobian on the fold set as a full ``2n`` vector."""
    _require_sigma(cp, S)
    n = S.n
    r = rn * np.append(-S.grad_q(cp.y), 1.0)
    v = Q.A_inv @ r
    out = np.concatenate([np.zeros(n - 1), v, [0.0]])
    J = jacobian_left(cp, Q, S)
    res = np.linalg.norm(J @ out)
    if res > 1e-8 * np.linalg.norm(J) * np.linalg.norm(v):
        raise NotOnSigma(f"kernel residual {res:.3e} too large")
    return out


def kernel_right(cp, Q, S, domega=1.0):
    """Kernel of the right Jacobian on the fold set: ``dy_i = (x_i - y_i) dw / w``."""
    _require_sigma(cp, S)
    n = S.n
    dy = (cp.x[:-1] - cp.y) / cp.omega * domega
    out = np.concatenate([dy, np.zeros(n), [domega]])
    J = jacobian_right(cp, Q, S)
    res = np.linalg.norm(J @ out)
    if res > 1e-8 * np.linalg.norm(J) * np.linalg.norm(out):
        raise NotOnSigma(f"kernel residual {res:.3e} too large")
    return out


def draw_omega(rng, index):
    """``+1``, ``-1`` or a random value with ``0.1 <= |omega| <= 3``."""
    r = index % 3
    if r == 0:
        return 1.0
    if r == 1:
        return -1.0
    sign = 1.0 if rng.random() < 0.5 else -1.0
    return sign * rng.uniform(MIN_OMEGA, 3.0)


def draw_domain_point(rng, S, tries=64):
    for _ in range(tries):
        y = np.array(rng.uniform_vec(S.lo, S.hi))
        if S.contains(y):
            return y
    return None


def solve_sigma_xn(y, xprime, S, lo, hi, maxiter=80):
    """Root of ``K`` along the ``x_n`` coordinate within ``[lo, hi]``.

    Bracketed bisection (Brent) followed by Newton polish; ``dK/dx_n = 1``.
    Returns ``None`` when the bracket holds no sign change.
    """
    def K(xn):
        return sigma_K(y, np.append(xprime, xn), S)

    ka, kb = K(lo), K(hi)
    if ka == 0:
        return lo
    if kb == 0:
        return hi
    if ka * kb > 0:
        return None
    xn = brentq(K, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=maxiter)
    for _ in range(3):
        k = K(xn)
        if k == 0:
            break
        xn -= k
    return xn


def find_sigma_points(Q, S, region, t_min, N, seed, max_attempts=None):
    """Sample up to ``N`` points of the fold set with ``t >= t_min``.

    Each attempt ``i`` draws from its own stream ``(seed, i)``: a center in
    the surface domain, the first ``n-1`` coordinates of ``x`` in ``region``
    and ``omega``; ``x_n`` then comes from 1-D root finding of ``K``.
    """
    if N < 1:
        raise ValueError("N must be positive")
    lo, hi = (np.asarray(b, dtype=float) for b in region)
    n = S.n
    max_attempts = max_attempts or 200 * N
    points = []
    for i in range(max_attempts):
        if len(points) >= N:
            break
        rng = stream(seed, i)
        y = draw_domain_point(rng, S)
        if y is None:
            continue
        xp = np.array(rng.uniform_vec(lo[:-1], hi[:-1]))
        omega = draw_omega(rng, i)
        xn = solve_sigma_xn(y, xp, S, lo[-1], hi[-1])
        if xn is None:
            continue
        x = np.append(xp, xn)
        xT = offset(y, x, S)
        if np.linalg.norm(xT) <= 1e-10:
            continue
        if xT @ Q.A @ xT < t_min:
            continue
        cp = CanonicalPoint(y=y, x=x, omega=omega)
        if abs(sigma_K(y, x, S)) > ROOT_TOL * point_scale(cp):
            continue
        points.append(cp)
    if not points:
        raise NoneFound("root finding found no fold-set point in the region")
    return points


# ---------------------------------------------------------------------------
# paraboloid families: t = x_T'^T A' x_T' + b . x_T''


def project_left_paraboloid(cp, P, S):
    k = P.k
    xT = offset(cp.y, cp.x, S)
    a = xT[:k]
    t = a @ P.A_prime @ a + P.b @ xT[k:]
    w = np.concatenate([2.0 * P.A_prime @ a, P.b[:-1]])
    z = cp.omega * (w + P.b[-1] * S.grad_q(cp.y))
    return LeftImage(y=cp.y.copy(), t=float(t), eta=z, tau=cp.omega)


def project_right_paraboloid(cp, P, S):
    k = P.k
    xT = offset(cp.y, cp.x, S)
    xi = cp.omega * np.concatenate([2.0 * P.A_prime @ xT[:k], P.b])
    return RightImage(x=cp.x.copy(), xi=xi)


def jacobian_left_paraboloid(cp, P, S):
    n, k = S.n, P.k
    m = n - 1
    w = cp.omega
    xT = offset(cp.y, cp.x, S)
    a = xT[:k]
    g = S.grad_q(cp.y)
    H = S.hess_q(cp.y)
    bn = P.b[-1]
    # d x_T / d y' = -B^T ; d x_T / d x = I
    B = matrix_B(S, cp.y)
    dt_dxT = np.concatenate([2.0 * P.A_prime @ a, P.b])
    J = np.zeros((2 * n, 2 * n))
    J[:m, :m] = np.eye(m)
    J[m, :m] = -B @ dt_dxT
    J[m, m:m + n] = dt_dxT
    Dz_dxT = np.zeros((m, n))
    Dz_dxT[:k, :k] = 2.0 * w * P.A_prime
    J[n:n + m, :m] = -Dz_dxT @ B.T + w * bn * H
    J[n:n + m, m:m + n] = Dz_dxT
    J[n:n + m, -1] = np.concatenate([2.0 * P.A_prime @ a, P.b[:-1]]) + bn * g
    J[-1, -1] = 1.0
    return J
