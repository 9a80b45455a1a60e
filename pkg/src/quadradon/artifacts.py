"""Artifact prediction by composing fibers of the canonical relation.

A visible image covector is pulled back through the right projection, pushed
to data space by the left projection, and every other point of the left
fiber over that data point is mapped back to image space. Those images are
the predicted mirror singularities of the normal operator.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter
from scipy.optimize import brentq

from .canonical import (CanonicalPoint, LeftImage, matrix_B, offset,
                        project_left, project_left_paraboloid, project_right,
                        project_right_paraboloid)
from .classifier import invert_left_paraboloid
from .errors import NoSolution, ZeroTau
from .geometry import ParaboloidFamily

DEDUP_TOL = 1e-8
SEEDS = 256


@dataclass
class CovectorPoint:
    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        if not np.linalg.norm(self.xi) > 0:
            raise ValueError("covector must be nonzero")

    @property
    def direction(self):
        return self.xi / np.linalg.norm(self.xi)


@dataclass
class ArtifactPrediction:
    source: CovectorPoint
    data_points: list = field(default_factory=list)
    mirrors: list = field(default_factory=list)
    residuals: list = field(default_factory=list)


def _is_paraboloid(family):
    return isinstance(family, ParaboloidFamily)


def _left(cp, family, S):
    if _is_paraboloid(family):
        return project_left_paraboloid(cp, family, S)
    return project_left(cp, family, S)


def _right(cp, family, S):
    if _is_paraboloid(family):
        return project_right_paraboloid(cp, family, S)
    return project_right(cp, family, S)


def _dedup(items, key, tol):
    out = []
    for it in items:
        k = key(it)
        if all(np.linalg.norm(k - key(o)) > tol * (1 + np.linalg.norm(k)) for o in out):
            out.append(it)
    return out


def _cp_key(cp):
    return np.concatenate([cp.y, [cp.omega], cp.x])


def right_fiber(source, family, S, seeds=SEEDS):
    """All canonical points whose right image is ``(x, xi)``.

    For a quadric, ``2 omega A x_T = xi`` puts the center on the line
    ``s(mu) = x - mu A^{-1} xi`` with ``omega = 1 / (2 mu)``; the roots of
    ``h(mu) = s_n(mu) - q(s'(mu))`` are bracketed on ``seeds`` sample points
    and refined with Brent's method.
    """
    x, xi = source.x, source.xi
    if _is_paraboloid(family):
        return _right_fiber_paraboloid(source, family, S)
    d = family.A_inv @ xi
    dp = d[:-1]
    # mu range keeping s' inside the domain box
    lo_mu, hi_mu = -np.inf, np.inf
    for i in range(S.n - 1):
        if dp[i] != 0:
            a = (x[i] - S.lo[i]) / dp[i]
            b = (x[i] - S.hi[i]) / dp[i]
            lo_mu, hi_mu = max(lo_mu, min(a, b)), min(hi_mu, max(a, b))
        elif not S.lo[i] <= x[i] <= S.hi[i]:
            raise NoSolution("covector not visible from the center surface")
    if not np.isfinite(lo_mu):
        # s' is fixed; the line is vertical, solve s_n = q linearly
        yv = x[:-1]
        if not S.contains(yv) or d[-1] == 0:
            raise NoSolution("covector not visible from the center surface")
        mus = [(x[-1] - S.q(yv)) / d[-1]]
    else:
        def h(mu):
            s = x - mu * d
            return s[-1] - S.q(s[:-1])

        def inside(m):
            return S.contains(x[:-1] - m * dp)

        base = np.linspace(lo_mu, hi_mu, seeds)
        valid = [inside(m) for m in base]
        grid = [base[0]]
        for j in range(seeds - 1):
            if valid[j] != valid[j + 1]:
                # pin the domain edge so roots next to it stay bracketed
                a, b = base[j], base[j + 1]
                for _ in range(60):
                    mid = 0.5 * (a + b)
                    if inside(mid) == valid[j]:
                        a = mid
                    else:
                        b = mid
                grid.append(a if valid[j] else b)
            grid.append(base[j + 1])
        grid = np.array(grid)
        vals = [h(m) if inside(m) else np.nan for m in grid]
        seeds = len(grid)
        mus = []
        for j in range(seeds - 1):
            a, b = vals[j], vals[j + 1]
            if np.isnan(a) or np.isnan(b):
                continue
            if a == 0:
                mus.append(grid[j])
            elif a * b < 0:
                mus.append(brentq(h, grid[j], grid[j + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps))
        if vals[-1] == 0:
            mus.append(grid[-1])
    out = []
    for mu in mus:
        if mu == 0:
            continue
        y = x[:-1] - mu * dp
        if not S.contains(y):
            continue
        cp = CanonicalPoint(y=y, x=x.copy(), omega=1.0 / (2.0 * mu))
        out.append(cp)
    out = _dedup(out, _cp_key, DEDUP_TOL)
    if not out:
        raise NoSolution("covector not visible from the center surface")
    return out


def _right_fiber_paraboloid(source, P, S):
    x, xi = source.x, source.xi
    k = P.k
    # xi = omega (2 A' x_T', b); omega from the last entry
    if P.b[-1] == 0 or xi[-1] == 0:
        raise NoSolution("covector not visible from the center surface")
    omega = xi[-1] / P.b[-1]
    if not np.allclose(xi[k:], omega * P.b, rtol=1e-10, atol=1e-12 * np.linalg.norm(xi)):
        raise NoSolution("covector not in the range of the right projection")
    a = P.A_prime_inv @ xi[:k] / (2.0 * omega)
    y = x[:-1].copy()
    y[:k] = x[:k] - a
    if k < S.n - 1:
        raise NoSolution("right fiber is not discrete for k < n-1")
    if not S.contains(y):
        raise NoSolution("covector not visible from the center surface")
    return [CanonicalPoint(y=y, x=x.copy(), omega=float(omega))]


def left_fiber(d, family, S):
    """All canonical points whose left image is ``d``.

    With ``u = A x_T`` the eta equations read ``B u = eta / (2 omega)``, so
    ``u = u0 + alpha p`` with ``p = (-grad q, 1)`` spanning ``ker B``; the t
    equation is then a quadratic in ``alpha`` solved in closed form.
    """
    if d.tau == 0:
        raise ZeroTau("tau must be nonzero")
    if _is_paraboloid(family):
        if family.k != S.n - 1:
            raise NoSolution("left fiber is not discrete for k < n-1")
        return [invert_left_paraboloid(d, family, S)]
    y = np.asarray(d.y, dtype=float)
    omega = float(d.tau)
    B = matrix_B(S, y)
    e = np.asarray(d.eta, dtype=float) / (2.0 * omega)
    u0 = B.T @ np.linalg.solve(B @ B.T, e)
    p = np.append(-S.grad_q(y), 1.0)
    Ai = family.A_inv
    a2 = p @ Ai @ p
    a1 = 2.0 * (p @ Ai @ u0)
    a0 = u0 @ Ai @ u0 - d.t
    scale = max(abs(a2), abs(a1), abs(a0), 1e-300)
    if abs(a2) <= 1e-14 * scale:
        if abs(a1) <= 1e-14 * scale:
            raise NoSolution("degenerate left fiber")
        alphas = [-a0 / a1]
    else:
        disc = a1 * a1 - 4 * a2 * a0
        if disc < -1e-12 * scale * scale:
            raise NoSolution("no real point over this data point")
        r = np.sqrt(max(disc, 0.0))
        # numerically stable pair of roots
        qq = -0.5 * (a1 + np.copysign(r, a1)) if a1 != 0 else 0.5 * r
        alphas = [qq / a2, a0 / qq] if qq != 0 else [0.0]
    s = S.center(y)
    out = []
    for al in alphas:
        xT = Ai @ (u0 + al * p)
        if np.linalg.norm(xT) <= 1e-10:
            continue
        out.append(CanonicalPoint(y=y.copy(), x=s + xT, omega=omega))
    out = _dedup(out, _cp_key, DEDUP_TOL)
    if not out:
        raise NoSolution("no point over this data point")
    return out


def _image_residual(cp, target, family, S):
    img = _left(cp, family, S).as_vector()
    return float(np.linalg.norm(img - target.as_vector()) / (1 + np.linalg.norm(target.as_vector())))


def predict_artifacts(source, family, S, seeds=SEEDS):
    """Mirror covectors of ``source`` under the composition of the fibers."""
    pred = ArtifactPrediction(source=source)
    mirrors = []
    for cp in right_fiber(source, family, S, seeds):
        d = _left(cp, family, S)
        pred.data_points.append(d)
        for m in left_fiber(d, family, S):
            pred.residuals.append(_image_residual(m, d, family, S))
            r = _right(m, family, S)
            mirrors.append(CovectorPoint(r.x, r.xi))
    src = CovectorPoint(source.x, source.xi)
    mirrors = _dedup([src] + mirrors, lambda c: np.concatenate([c.x, c.direction]), DEDUP_TOL)
    pred.mirrors = mirrors
    return pred


def local_maxima(image, threshold):
    """Indices of local maxima of ``|image|`` above ``threshold * max``."""
    a = np.abs(image.values)
    peak = a.max()
    if peak == 0:
        return np.zeros((0, image.n), dtype=int)
    is_max = (a == maximum_filter(a, size=3, mode="constant")) & (a >= threshold * peak)
    return np.argwhere(is_max)


def overlay_psf(pred, psf, threshold=0.5, hit_radius=2.0):
    """Per-mirror distance (in cells) to the nearest strong local maximum."""
    peaks = local_maxima(psf, threshold)
    rows = []
    for m in pred.mirrors:
        cell = (m.x - psf.origin) / psf.spacing
        if len(peaks):
            dist = float(np.min(np.linalg.norm(peaks - cell, axis=1)))
        else:
            dist = float("inf")
        rows.append({"x": m.x, "distance_cells": dist, "hit": dist <= hit_radius})
    return rows


def off_source_maxima(psf, source_x, threshold=0.5, exclusion=2.0):
    """Strong local maxima farther than ``exclusion`` cells from the source."""
    peaks = local_maxima(psf, threshold)
    cell = (np.asarray(source_x, dtype=float) - psf.origin) / psf.spacing
    far = np.linalg.norm(peaks - cell, axis=1) > exclusion
    return psf.origin + peaks[far] * psf.spacing
