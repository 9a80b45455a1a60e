"""Fold / cusp / blowdown classification of the left and right projections.

On the fold set ``K = 0`` both projections drop rank by one. Write ``k`` for
a kernel field of the projection's Jacobian and ``G = dK(k)``:

* ``G != 0``: the kernel is transversal to the fold set, a fold;
* ``G = 0`` with ``dG`` nonzero along the fold set: a cusp;
* ``G = 0`` persistently on a neighborhood: a blowdown.
"""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .canonical import (CanonicalPoint, draw_domain_point, draw_omega,
                        from_vector, grad_sigma_K,
                        matrix_B, offset, point_scale,
                        project_left_paraboloid, sigma_K, _require_sigma)
from .errors import ZeroTau
from .geometry import SurfaceKind
from .rng import stream

TOL_F = 1e-7
TOL_G = 1e-6
FD_STEP = 1e-5
NEIGHBORS = 20
NEIGHBOR_RADIUS = 1e-2


class SingularityClass(str, Enum):
    REGULAR = "REGULAR"
    FOLD = "FOLD"
    CUSP = "CUSP"
    BLOWDOWN = "BLOWDOWN"
    UNDETERMINED = "UNDETERMINED"


class BolkerVerdict(str, Enum):
    BOLKER = "BOLKER"
    RANK_DROP = "RANK_DROP"


@dataclass
class SingularityReport:
    point: CanonicalPoint
    K: float
    F: float
    dKv: float
    right_val: float
    gradG_norm: float = None
    right_gradG_norm: float = None
    left_class: SingularityClass = SingularityClass.UNDETERMINED
    right_class: SingularityClass = SingularityClass.UNDETERMINED


@dataclass
class BolkerReport:
    roundtrip_max_err: float
    min_singular_value: float
    rank_drop: int
    verdict: BolkerVerdict
    samples: int = 0
    # min over samples of sigma_min * (1 + |Hess q|), i.e. relative to the chart curvature scale
    min_scaled_singular_value: float = None


@dataclass
class Sigma1Result:
    points: list = field(default_factory=list)
    starts: int = 0
    converged: int = 0
    max_t: float = float("-inf")

    @property
    def empty(self):
        return not self.points


def normal_vector(S, y):
    return np.append(-S.grad_q(y), 1.0)


def fold_functional(y, Q, S):
    """``F = (-grad q, 1) A^{-1} (-grad q, 1)^T``, a function of ``y'`` only."""
    p = normal_vector(S, np.asarray(y, dtype=float))
    return float(p @ Q.A_inv @ p)


def fold_functional_grad(y, Q, S):
    """Closed-form ``grad F = -2 Hess(q) (A^{-1} p)'`` with ``p = (-grad q, 1)``."""
    y = np.asarray(y, dtype=float)
    p = normal_vector(S, y)
    return -2.0 * S.hess_q(y) @ (Q.A_inv @ p)[:-1]


def _fold_scale(y, Q, S):
    p = normal_vector(S, y)
    return float(p @ p * np.linalg.norm(Q.A_inv, 2))


# --- kernel fields and G = dK(kernel) as functions on (y', x, omega)

def _left_G(Q, S, rn):
    def G(z):
        cp = from_vector(z, S.n)
        v = Q.A_inv @ (rn * normal_vector(S, cp.y))
        k = np.concatenate([np.zeros(S.n - 1), v, [0.0]])
        return grad_sigma_K(cp, S) @ k
    return G


def _right_G(S, domega):
    def G(z):
        cp = from_vector(z, S.n)
        k = np.concatenate([(cp.x[:-1] - cp.y) / cp.omega * domega,
                            np.zeros(S.n), [domega]])
        return grad_sigma_K(cp, S) @ k
    return G


def _fd_gradient(f, z, h):
    g = np.empty_like(z)
    for i in range(len(z)):
        e = np.zeros_like(z)
        e[i] = h
        g[i] = (f(z + e) - f(z - e)) / (2 * h)
    return g


def tangential_gradient(G, cp, S):
    """Finite-difference ``grad G`` projected onto the tangent space of the fold set."""
    z = cp.as_vector()
    g = _fd_gradient(G, z, FD_STEP * point_scale(cp))
    nK = grad_sigma_K(cp, S)
    nK = nK / np.linalg.norm(nK)
    return g - (g @ nK) * nK


def sigma_neighbors(cp, S, count=NEIGHBORS, radius=NEIGHBOR_RADIUS, seed=0):
    """Fold-set points within ``radius`` of ``cp``, obtained by perturbing
    ``(y', x', omega)`` and re-solving ``K = 0`` for ``x_n`` (``K`` is affine in it)."""
    out = []
    i = 0
    while len(out) < count and i < 20 * count:
        rng = stream(seed, i)
        i += 1
        dy = radius * np.array([rng.uniform(-1, 1) for _ in cp.y]) / np.sqrt(2 * len(cp.y))
        dx = radius * np.array([rng.uniform(-1, 1) for _ in cp.x[:-1]]) / np.sqrt(2 * len(cp.y))
        y = cp.y + dy
        if not S.contains(y):
            continue
        xp = cp.x[:-1] + dx
        xn = cp.x[-1] - sigma_K(y, np.append(xp, cp.x[-1]), S)
        out.append(CanonicalPoint(y=y, x=np.append(xp, xn), omega=cp.omega))
    return out


def _classify(G, cp, S, tol_val, persistence_seed=0):
    g = G(cp.as_vector())
    if abs(g) > tol_val:
        return SingularityClass.FOLD, g, None
    tg = tangential_gradient(G, cp, S)
    gn = float(np.linalg.norm(tg))
    if gn > TOL_G * point_scale(cp):
        return SingularityClass.CUSP, g, gn
    nbrs = sigma_neighbors(cp, S, seed=persistence_seed)
    if nbrs and all(abs(G(p.as_vector())) <= tol_val for p in nbrs):
        return SingularityClass.BLOWDOWN, g, gn
    return SingularityClass.UNDETERMINED, g, gn


def classify_left(cp, Q, S, rn=1.0):
    """Classify the left projection at a fold-set point.

    Returns ``(class, G, tangential |grad G| or None)``; ``rn`` is the
    normalization of the kernel field ``A^{-1} rn (-grad q, 1)``.
    """
    _require_sigma(cp, S)
    tol = TOL_F * _fold_scale(cp.y, Q, S) * abs(rn)
    return _classify(_left_G(Q, S, rn), cp, S, tol)


def right_value(cp, S):
    """``x_T'^T Hess(q) x_T'``; on the half cylinder the (identically zero)
    first row and column of the Hessian are dropped."""
    xTp = offset(cp.y, cp.x, S)[:-1]
    H = S.hess_q(cp.y)
    if S.kind is SurfaceKind.HALF_CYLINDER:
        return float(xTp[1:] @ H[1:, 1:] @ xTp[1:])
    return float(xTp @ H @ xTp)


def classify_right(cp, Q, S, domega=1.0):
    _require_sigma(cp, S)
    if S.hessian_vanishes:
        # Hess(q) == 0 identically: dK(kernel) vanishes on all of the fold set
        return SingularityClass.BLOWDOWN, 0.0, 0.0
    H = S.hess_q(cp.y)
    tol = TOL_F * (1.0 + np.linalg.norm(H, 2)) * point_scale(cp) ** 2 * abs(domega / cp.omega)
    return _classify(_right_G(S, domega), cp, S, tol)


def classify(cp, Q, S):
    K = sigma_K(cp.y, cp.x, S)
    F = fold_functional(cp.y, Q, S)
    rv = right_value(cp, S)
    report = SingularityReport(point=cp, K=K, F=F, dKv=F, right_val=rv)
    if abs(K) >= 1e-9 * point_scale(cp):
        report.left_class = report.right_class = SingularityClass.REGULAR
        return report
    report.left_class, report.dKv, report.gradG_norm = classify_left(cp, Q, S)
    report.right_class, _, report.right_gradG_norm = classify_right(cp, Q, S)
    return report


# --- the cusp stratum {K = 0, F = 0}

def _newton_fold_functional(y, Q, S, maxiter=60):
    """Minimal-norm Newton iteration for ``F(y') = 0``; gives up on stalls."""
    best = np.inf
    stall = 0
    for _ in range(maxiter):
        if not S.contains(y):
            return None
        F = fold_functional(y, Q, S)
        if abs(F) <= 1e-14 * max(1.0, _fold_scale(y, Q, S)):
            return y
        if abs(F) < 0.9 * best:
            best, stall = abs(F), 0
        else:
            stall += 1
            if stall >= 8:
                return None
        g = fold_functional_grad(y, Q, S)
        gg = g @ g
        if gg == 0:
            return None
        step = F * g / gg
        lam = 1.0
        while not S.contains(y - lam * step):
            lam *= 0.5
            if lam < 1e-4:
                return None
        y = y - lam * step
    return None


def sigma1_scan(Q, S, region, t_min, starts=10_000, seed=0, max_points=None):
    """Multistart search for points of ``{K = 0, F = 0}`` with ``t >= t_min``.

    Per start: Newton on ``F(y') = 0`` from a random center, then on the
    tangent plane ``x_T = B^T d`` the value ``t = d^T (B A B^T) d`` is probed
    at a random offset and along the top eigenvector of ``B A B^T``. The
    largest ``t`` seen among in-region near-solutions is recorded; an empty
    result is sampling evidence, not a proof.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in region)
    n = S.n
    out = Sigma1Result()
    reach = float(np.linalg.norm(hi - lo))
    for i in range(starts):
        out.starts += 1
        rng = stream(seed, i)
        y0 = draw_domain_point(rng, S)
        if y0 is None:
            continue
        y = _newton_fold_functional(y0, Q, S)
        if y is None:
            continue
        out.converged += 1
        B = matrix_B(S, y)
        s = S.center(y)
        M = B @ Q.A @ B.T
        lam, V = np.linalg.eigh(M)
        d_rand = np.array(rng.uniform_vec(lo[:-1], hi[:-1])) - y
        cands = [d_rand]
        v = V[:, -1]
        for frac in (1e-3, 1e-2, 0.1, 0.3, 1.0):
            cands += [v * frac * reach, -v * frac * reach]
        if lam[-1] > 0:
            rho = np.sqrt(max(t_min, 1e-300) / lam[-1]) * (1 + 1e-9)
            cands += [v * rho, -v * rho]
        omega = draw_omega(rng, i)
        for d in cands:
            x = s + B.T @ d
            if np.any(x < lo) or np.any(x > hi):
                continue
            xT = x - s
            if np.linalg.norm(xT) <= 1e-10:
                continue
            t = float(xT @ Q.A @ xT)
            out.max_t = max(out.max_t, t)
            if t >= t_min:
                out.points.append(CanonicalPoint(y=y, x=x, omega=omega))
                break
        if max_points and len(out.points) >= max_points:
            break
    return out


# --- paraboloid families and the Bolker condition

def invert_left_paraboloid(image, P, S):
    """Closed-form inverse of the left projection for a paraboloid family.

    For ``k = n-1`` this is the exact inverse. For ``k < n-1`` the ``x''``
    block is underdetermined and the minimum-norm solution of
    ``b . x_T'' = t - x_T'^T A' x_T'`` is returned.
    """
    if image.tau == 0:
        raise ZeroTau("tau must be nonzero")
    k, n = P.k, S.n
    y = np.asarray(image.y, dtype=float)
    omega = float(image.tau)
    g = S.grad_q(y)
    z = np.asarray(image.eta, dtype=float) / omega - P.b[-1] * g
    a = 0.5 * (P.A_prime_inv @ z[:k])
    rest = image.t - a @ P.A_prime @ a
    xT_tail = P.b * rest / (P.b @ P.b)
    x = S.center(y) + np.concatenate([a, xT_tail])
    return CanonicalPoint(y=y, x=x, omega=omega)


def _fd_jacobian(f, z, h):
    cols = []
    for i in range(len(z)):
        e = np.zeros_like(z)
        e[i] = h
        cols.append((f(z + e) - f(z - e)) / (2 * h))
    return np.array(cols).T


def random_paraboloid_point(rng, P, S, index, spread=1.0):
    y = draw_domain_point(rng, S)
    if y is None:
        return None
    xT = np.array([rng.uniform(-spread, spread) for _ in range(S.n)])
    omega = draw_omega(rng, index)
    if abs(omega) < 0.5:
        omega = np.sign(omega) * 0.5
    return CanonicalPoint(y=y, x=S.center(y) + xT, omega=float(omega))


def bolker_check(P, S, N=1000, seed=0, rank_tol=1e-6):
    """Roundtrip and rank test of the left projection over ``N`` random points.

    The Jacobian is taken by central finite differences of the left
    projection; the rank drop counts singular values below
    ``rank_tol * sigma_max``.
    """
    n = S.n
    max_err = 0.0
    min_sv = np.inf
    min_scaled = np.inf
    drop = 0
    done = 0
    i = 0
    while done < N:
        rng = stream(seed, i)
        cp = random_paraboloid_point(rng, P, S, i)
        i += 1
        if cp is None:
            continue
        img = project_left_paraboloid(cp, P, S)
        back = invert_left_paraboloid(img, P, S)
        err = np.linalg.norm(back.as_vector() - cp.as_vector()) / point_scale(cp)
        max_err = max(max_err, err)

        def f(z):
            return project_left_paraboloid(from_vector(z, n), P, S).as_vector()

        J = _fd_jacobian(f, cp.as_vector(), FD_STEP)
        sv = np.linalg.svd(J, compute_uv=False)
        min_sv = min(min_sv, sv[-1])
        min_scaled = min(min_scaled, sv[-1] * (1.0 + np.linalg.norm(S.hess_q(cp.y), 2)))
        drop = max(drop, int(np.sum(sv < rank_tol * sv[0])))
        done += 1
    ok = drop == 0 and max_err <= 1e-9
    return BolkerReport(roundtrip_max_err=float(max_err), min_singular_value=float(min_sv),
                        rank_drop=drop,
                        verdict=BolkerVerdict.BOLKER if ok else BolkerVerdict.RANK_DROP,
                        samples=done, min_scaled_singular_value=float(min_scaled))

