"""Discrete generalized Radon transform over quadric and paraboloid surfaces.

Two forward maps live here. :func:`forward` integrates an analytic
:class:`Phantom` over each surface ``T(y', t)`` against surface measure.
:func:`forward_grid` integrates a gridded image, sampled by multilinear
interpolation at the same quadrature nodes; :func:`adjoint` is its exact
transpose, so the dot test holds to rounding.

Gridded operators support ``n`` in {2, 3}.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import (EmptyIntersection, GridMismatch, SupportIntersectsSurface,
                     UnboundedWithoutBox)
from .geometry import ParaboloidFamily, QuadricForm

GAUSS_TRUNC = 5.0
SUPPORT_MARGIN = 1e-3


# ---------------------------------------------------------------------------
# data objects

@dataclass
class Blob:
    kind: str  # "gaussian" or "disk"
    center: np.ndarray
    size: float  # sigma or radius
    amplitude: float = 1.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.kind not in ("gaussian", "disk"):
            raise ValueError(f"unknown blob kind {self.kind!r}")
        if not self.size > 0:
            raise ValueError("blob size must be positive")

    @property
    def radius(self):
        return GAUSS_TRUNC * self.size if self.kind == "gaussian" else self.size

    def evaluate(self, pts, spacing=None):
        r = np.linalg.norm(pts - self.center, axis=-1)
        if self.kind == "gaussian":
            v = np.exp(-0.5 * (r / self.size) ** 2)
            return self.amplitude * np.where(r <= self.radius, v, 0.0)
        if spacing is None:
            return self.amplitude * (r < self.size).astype(float)
        # linear ramp one node spacing wide, centered on the boundary
        return self.amplitude * np.clip(0.5 - (r - self.size) / spacing, 0.0, 1.0)


@dataclass
class Phantom:
    blobs: list = field(default_factory=list)

    @property
    def n(self):
        return len(self.blobs[0].center) if self.blobs else None

    def evaluate(self, pts, spacing=None):
        pts = np.asarray(pts, dtype=float)
        out = np.zeros(pts.shape[:-1])
        for b in self.blobs:
            out += b.evaluate(pts, spacing)
        return out

    def bounding_box(self, pad=0.0):
        if not self.blobs:
            return None
        lo = np.min([b.center - b.radius for b in self.blobs], axis=0) - pad
        hi = np.max([b.center + b.radius for b in self.blobs], axis=0) + pad
        return lo, hi

    def check_disjoint(self, S, samples_per_axis=None):
        """Raise if the surface passes within ``SUPPORT_MARGIN`` of the support."""
        if not self.blobs:
            return
        m = S.n - 1
        k = samples_per_axis or (513 if m == 1 else 129)
        axes = [np.linspace(a, b, k) for a, b in zip(S.lo, S.hi)]
        Y = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m)
        Y = Y[[S.contains(y) for y in Y]]
        pts = np.array([S.center(y) for y in Y])
        for b in self.blobs:
            d = np.linalg.norm(pts - b.center, axis=1)
            if np.any(d <= b.radius + SUPPORT_MARGIN):
                raise SupportIntersectsSurface("phantom support meets the center surface")


@dataclass
class Sinogram:
    centers: np.ndarray
    ts: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.ts = np.asarray(self.ts, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.ts) <= 0):
            raise ValueError("ts must be strictly increasing")
        if self.values.shape != (len(self.centers), len(self.ts)):
            raise ValueError("values must have shape (centers, ts)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("sinogram values must be finite")


@dataclass
class ImageGrid:
    """Values on the lattice ``origin + i * spacing``, ``values[i_1, ..., i_n]``."""
    origin: np.ndarray
    spacing: np.ndarray
    dims: tuple
    values: np.ndarray = None

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.dims = tuple(int(d) for d in self.dims)
        self.spacing = np.broadcast_to(np.asarray(self.spacing, dtype=float),
                                       (len(self.dims),)).copy()
        if len(self.origin) != len(self.dims):
            raise GridMismatch("origin and dims disagree in dimension")
        if len(self.dims) not in (2, 3):
            raise GridMismatch("gridded operators support n in {2, 3}")
        if any(d < 2 for d in self.dims) or np.any(self.spacing <= 0):
            raise GridMismatch("need dims >= 2 and positive spacing")
        if self.values is None:
            self.values = np.zeros(self.dims)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.dims:
            raise GridMismatch("values shape does not match dims")

    @property
    def n(self):
        return len(self.dims)

    @property
    def box(self):
        return self.origin, self.origin + (np.array(self.dims) - 1) * self.spacing

    def points(self):
        axes = [self.origin[i] + self.spacing[i] * np.arange(d) for i, d in enumerate(self.dims)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def like(self, values):
        return ImageGrid(self.origin, self.spacing, self.dims, values)

    def nearest_index(self, x):
        idx = np.rint((np.asarray(x, dtype=float) - self.origin) / self.spacing).astype(int)
        return tuple(np.clip(idx, 0, np.array(self.dims) - 1))


def rasterize(phantom, grid):
    return grid.like(phantom.evaluate(grid.points()))


def one_hot(grid, x0):
    g = grid.like(np.zeros(grid.dims))
    g.values[grid.nearest_index(x0)] = 1.0
    return g


# ---------------------------------------------------------------------------
# quadrature on T(y', t)

@dataclass
class Quadrature:
    points: np.ndarray
    weights: np.ndarray
    spacing: np.ndarray

    def __len__(self):
        return len(self.weights)


def _empty(n):
    return Quadrature(np.zeros((0, n)), np.zeros(0), np.zeros(0))


def _box_distance(pts, lo, hi):
    """Signed distance-like margin: nonnegative exactly inside the box."""
    return np.min(np.minimum(pts - lo, hi - pts), axis=-1)


def _curve_nodes(point_fn, tangent_fn, a, b, count, box):
    """Midpoint rule on a parameterized curve, clipped to ``box``.

    Cells crossing the box boundary are trimmed by bisection on the
    parameter; the node moves to the middle of the retained piece.
    """
    h = (b - a) / count
    left = a + h * np.arange(count)
    right = left + h
    mid = left + 0.5 * h
    if box is None:
        lo_p, hi_p = left, right
    else:
        lo_b, hi_b = box
        inl = _box_distance(point_fn(left), lo_b, hi_b) >= 0
        inr = _box_distance(point_fn(right), lo_b, hi_b) >= 0
        inm = _box_distance(point_fn(mid), lo_b, hi_b) >= 0
        keep = inl | inr | inm
        lo_p, hi_p = left.copy(), right.copy()
        cut = keep & (inl != inr)
        if np.any(cut):
            # bisection towards the crossing between the cell ends
            p_in = np.where(inl, left, right)[cut]
            p_out = np.where(inl, right, left)[cut]
            for _ in range(60):
                pm = 0.5 * (p_in + p_out)
                ok = _box_distance(point_fn(pm), lo_b, hi_b) >= 0
                p_in = np.where(ok, pm, p_in)
                p_out = np.where(ok, p_out, pm)
            cross = 0.5 * (p_in + p_out)
            lo_p[cut] = np.where(inl[cut], left[cut], cross)
            hi_p[cut] = np.where(inl[cut], cross, right[cut])
        lo_p, hi_p = lo_p[keep], hi_p[keep]
    mid = 0.5 * (lo_p + hi_p)
    speed = np.linalg.norm(tangent_fn(mid), axis=-1)
    w = speed * (hi_p - lo_p)
    return Quadrature(point_fn(mid), w, speed * h)


def _surface_nodes(points, du, dv, cell_area, box):
    """Nodes of a 2-parameter chart; weights from the Gram determinant."""
    g11 = np.einsum("ij,ij->i", du, du)
    g22 = np.einsum("ij,ij->i", dv, dv)
    g12 = np.einsum("ij,ij->i", du, dv)
    w = np.sqrt(np.maximum(g11 * g22 - g12 ** 2, 0.0)) * cell_area
    if box is not None:
        keep = _box_distance(points, *box) >= 0
        points, w = points[keep], w[keep]
    return Quadrature(points, w, np.sqrt(w))


def _as_box(box):
    if box is None:
        return None
    lo, hi = box
    return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)


def _max_reach(s, box):
    lo, hi = box
    corners = np.array(list(product(*zip(lo, hi))))
    return float(np.max(np.linalg.norm(corners - s, axis=1)))


def _definite_nodes(Q, s, t, box, density):
    evals, V = np.linalg.eigh(Q.A)
    M = V @ np.diag(np.sqrt(t / evals)) @ V.T  # sqrt(t) A^{-1/2}
    n = Q.n
    if n == 2:
        return _curve_nodes(
            lambda th: s + np.stack([np.cos(th), np.sin(th)], -1) @ M.T,
            lambda th: np.stack([-np.sin(th), np.cos(th)], -1) @ M.T,
            0.0, 2 * np.pi, density, box)
    n_mu = max(2, density // 2)
    mu, w_mu = leggauss(n_mu)
    h_phi = 2 * np.pi / density
    phi = h_phi * (np.arange(density) + 0.5)
    MU, PHI = np.meshgrid(mu, phi, indexing="ij")
    W = np.outer(w_mu, np.full(density, h_phi)).ravel()
    rho = np.sqrt(1 - MU ** 2)
    u = np.stack([rho * np.cos(PHI), rho * np.sin(PHI), MU], -1).reshape(-1, 3)
    Minv = np.linalg.inv(M)
    w = abs(np.linalg.det(M)) * np.linalg.norm(u @ Minv.T, axis=1) * W
    pts = s + u @ M.T
    if box is not None:
        keep = _box_distance(pts, *box) >= 0
        pts, w = pts[keep], w[keep]
    return Quadrature(pts, w, np.sqrt(w))


def _indefinite_nodes(Q, s, t, box, density):
    evals, V = np.linalg.eigh(Q.A)
    pos = np.flatnonzero(evals > 0)
    neg = np.flatnonzero(evals < 0)
    L = V / np.sqrt(np.abs(evals))  # x_T = L w, with |w_P|^2 - |w_N|^2 = t
    rt = np.sqrt(t)
    reach = _max_reach(s, box)
    s_max = float(np.arcsinh(np.sqrt(np.max(np.abs(evals[neg]))) * reach / rt))
    n = Q.n

    def embed(wp, wn):
        w = np.zeros(wp.shape[:-1] + (n,))
        w[..., pos] = wp
        w[..., neg] = wn
        return w @ L.T

    if n == 2:
        parts = []
        for sign in (1.0, -1.0):
            parts.append(_curve_nodes(
                lambda u, sg=sign: s + embed(sg * rt * np.cosh(u)[:, None], rt * np.sinh(u)[:, None]),
                lambda u, sg=sign: embed(sg * rt * np.sinh(u)[:, None], rt * np.cosh(u)[:, None]),
                -s_max, s_max, density, box))
        return Quadrature(*(np.concatenate([getattr(p, f) for p in parts])
                            for f in ("points", "weights", "spacing")))
    n_phi = density
    h_phi = 2 * np.pi / n_phi
    phi = h_phi * (np.arange(n_phi) + 0.5)
    circ = np.stack([np.cos(phi), np.sin(phi)], -1)
    dcirc = np.stack([-np.sin(phi), np.cos(phi)], -1)
    parts = []
    if len(pos) == 1:
        n_s = max(2, density // 2)
        h_s = s_max / n_s
        u = h_s * (np.arange(n_s) + 0.5)
        U = np.repeat(u, n_phi)[:, None]
        C = np.tile(circ, (n_s, 1))
        D = np.tile(dcirc, (n_s, 1))
        for sign in (1.0, -1.0):
            pts = s + embed(sign * rt * np.cosh(U), rt * np.sinh(U) * C)
            du = embed(sign * rt * np.sinh(U), rt * np.cosh(U) * C)
            dv = embed(0 * U, rt * np.sinh(U) * D)
            parts.append(_surface_nodes(pts, du, dv, h_s * h_phi, box))
    else:
        n_s = density
        h_s = 2 * s_max / n_s
        u = -s_max + h_s * (np.arange(n_s) + 0.5)
        U = np.repeat(u, n_phi)[:, None]
        C = np.tile(circ, (n_s, 1))
        D = np.tile(dcirc, (n_s, 1))
        pts = s + embed(rt * np.cosh(U) * C, rt * np.sinh(U))
        du = embed(rt * np.sinh(U) * C, rt * np.cosh(U))
        dv = embed(rt * np.cosh(U) * D, 0 * U)
        parts.append(_surface_nodes(pts, du, dv, h_s * h_phi, box))
    return Quadrature(*(np.concatenate([getattr(p, f) for p in parts])
                        for f in ("points", "weights", "spacing")))


def _paraboloid_nodes(P, S, y, t, box, density):
    if box is None:
        raise UnboundedWithoutBox("paraboloid surfaces need a bounding box")
    n, k = P.n, P.k
    bn = P.b[-1]
    if bn == 0:
        raise ValueError("quadrature charts need a nonzero last entry of b")
    s = S.center(y)
    lo, hi = box

    def height(a):
        # a = x_T' (first n-1 offsets); solve t = a_k A' a_k + b . x_T'' for x_T,n
        ak = a[..., :k]
        quad = np.einsum("...i,ij,...j->...", ak, P.A_prime, ak)
        lin = a[..., k:] @ P.b[:-1] if k < n - 1 else 0.0
        return (t - quad - lin) / bn

    def slope(a):
        g = np.zeros_like(a)
        g[..., :k] = -2.0 * (a[..., :k] @ P.A_prime) / bn
        if k < n - 1:
            g[..., k:] = -P.b[:-1] / bn
        return g

    if n == 2:
        def pt(u):
            a = (u - s[0])[:, None]
            return np.stack([u, s[1] + height(a)], -1)

        def tan(u):
            a = (u - s[0])[:, None]
            return np.stack([np.ones_like(u), slope(a)[:, 0]], -1)

        return _curve_nodes(pt, tan, lo[0], hi[0], density, box)
    h1 = (hi[0] - lo[0]) / density
    h2 = (hi[1] - lo[1]) / density
    u1 = lo[0] + h1 * (np.arange(density) + 0.5)
    u2 = lo[1] + h2 * (np.arange(density) + 0.5)
    X = np.stack(np.meshgrid(u1, u2, indexing="ij"), -1).reshape(-1, 2)
    a = X - s[:2]
    pts = np.column_stack([X, s[2] + height(a)])
    g = slope(a)
    du = np.column_stack([np.ones(len(X)), np.zeros(len(X)), g[:, 0]])
    dv = np.column_stack([np.zeros(len(X)), np.ones(len(X)), g[:, 1]])
    return _surface_nodes(pts, du, dv, h1 * h2, box)


def surface_quadrature(family, S, y, t, box=None, density=512):
    """Nodes and surface-measure weights on ``T(y', t)`` (clipped to ``box``).

    ``family`` is a :class:`QuadricForm` or a :class:`ParaboloidFamily`.
    ``density`` is the node count per chart coordinate (angle, hyperbolic
    parameter or graph coordinate).
    """
    n = family.n
    if n not in (2, 3):
        raise ValueError("surface quadrature supports n in {2, 3}")
    y = np.asarray(y, dtype=float)
    box = _as_box(box)
    if isinstance(family, ParaboloidFamily):
        q = _paraboloid_nodes(family, S, y, t, box, density)
    else:
        if t <= 0:
            raise ValueError("t must be positive")
        s = S.center(y)
        k_pos, k_neg = family.signature
        if k_pos == 0:
            raise EmptyIntersection("negative definite form has no level set at t > 0")
        if k_neg == 0:
            q = _definite_nodes(family, s, t, box, density)
        else:
            if box is None:
                raise UnboundedWithoutBox("indefinite forms need a bounding box")
            q = _indefinite_nodes(family, s, t, box, density)
    if len(q) == 0 and box is not None:
        raise EmptyIntersection("level set misses the box")
    return q


def _nodes_or_empty(family, S, y, t, box, density):
    try:
        return surface_quadrature(family, S, y, t, box, density)
    except EmptyIntersection:
        return _empty(family.n)


# ---------------------------------------------------------------------------
# operators

def _check_family(family, S):
    if family.n != S.n:
        raise GridMismatch("family and surface dimensions differ")


def forward(phantom, family, S, centers, ts, density=512, check_support=True):
    """Integrate ``phantom`` over ``T(y'_i, t_j)`` for all centers and ts."""
    _check_family(family, S)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    ts = np.asarray(ts, dtype=float)
    values = np.zeros((len(centers), len(ts)))
    if not phantom.blobs:
        return Sinogram(centers, ts, values)
    if check_support:
        phantom.check_disjoint(S)
    box = phantom.bounding_box(pad=1e-9)
    for i, y in enumerate(centers):
        for j, t in enumerate(ts):
            q = _nodes_or_empty(family, S, y, t, box, density)
            if len(q):
                values[i, j] = np.sum(phantom.evaluate(q.points, q.spacing) * q.weights)
    return Sinogram(centers, ts, values)


def forward_paraboloid(phantom, P, S, centers, ts, density=512, check_support=True):
    return forward(phantom, P, S, centers, ts, density, check_support)


def _stencil(grid, pts):
    """Flat corner indices and multilinear coefficients for in-grid points."""
    u = (pts - grid.origin) / grid.spacing
    i0 = np.floor(u).astype(np.int64)
    ok = np.all((i0 >= 0) & (i0 <= np.array(grid.dims) - 2), axis=1)
    rows = np.flatnonzero(ok)
    i0, fr = i0[ok], u[ok] - i0[ok]
    idx, coef = [], []
    strides = np.array([int(np.prod(grid.dims[d + 1:])) for d in range(grid.n)])
    for corner in product((0, 1), repeat=grid.n):
        c = np.array(corner)
        idx.append((i0 + c) @ strides)
        coef.append(np.prod(np.where(c == 1, fr, 1 - fr), axis=1))
    return rows, np.stack(idx, 1), np.stack(coef, 1)


def _support_ball(grid, values):
    """Center and radius of a ball holding every cell that touches a nonzero node."""
    nz = np.argwhere(values != 0)
    if len(nz) == 0:
        return None
    lo = grid.origin + (np.maximum(nz.min(axis=0) - 1, 0)) * grid.spacing
    hi = grid.origin + (np.minimum(nz.max(axis=0) + 1, np.array(grid.dims) - 1)) * grid.spacing
    return 0.5 * (lo + hi), 0.5 * float(np.linalg.norm(hi - lo))


def _level_bounds(family, S, y, c, r):
    """Interval holding the level value ``t`` over the ball ``|x - c| <= r``.

    Exact Taylor bound for a quadratic: value at ``c`` plus gradient and
    Hessian terms.
    """
    xT = c - S.center(y)
    if isinstance(family, ParaboloidFamily):
        a = xT[:family.k]
        f = a @ family.A_prime @ a + family.b @ xT[family.k:]
        g = np.concatenate([2.0 * family.A_prime @ a, family.b])
        h = np.linalg.norm(family.A_prime, 2)
    else:
        f = xT @ family.A @ xT
        g = 2.0 * family.A @ xT
        h = np.linalg.norm(family.A, 2)
    slack = np.linalg.norm(g) * r + h * r * r
    slack += 1e-12 * (abs(f) + slack + 1.0)
    return f - slack, f + slack


def _center_rows(grid, family, S, y, ts, density, support=None):
    """Per-``t`` sparse rows ``(flat indices, coefficients)`` of the grid operator.

    With ``support`` (a ball from :func:`_support_ball`) rows whose level set
    provably misses the ball are returned empty; their entries would only
    multiply zeros.
    """
    box = grid.box
    out = []
    if support is not None:
        lo_t, hi_t = _level_bounds(family, S, y, *support)
    for t in ts:
        if support is not None and not lo_t <= t <= hi_t:
            out.append((np.zeros(0, dtype=np.int64), np.zeros(0)))
            continue
        q = _nodes_or_empty(family, S, y, t, box, density)
        rows, idx, coef = _stencil(grid, q.points)
        out.append((idx.ravel(), (coef * q.weights[rows, None]).ravel()))
    return out


def _map_centers(fn, centers, threads):
    if threads is None or threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            yield from ex.map(fn, centers)
    else:
        yield from map(fn, centers)


def forward_grid(image, family, S, centers, ts, density=512, threads=1):
    _check_family(family, S)
    if image.n != S.n:
        raise GridMismatch("grid and surface dimensions differ")
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    ts = np.asarray(ts, dtype=float)
    flat = image.values.ravel()
    support = _support_ball(image, image.values)
    if support is None:
        return Sinogram(centers, ts, np.zeros((len(centers), len(ts))))

    def one(y):
        rows = _center_rows(image, family, S, y, ts, density, support)
        return [np.sum(flat[i] * c) if len(i) else 0.0 for i, c in rows]

    values = np.array(list(_map_centers(one, centers, threads)), dtype=float)
    return Sinogram(centers, ts, values.reshape(len(centers), len(ts)))


def adjoint(sino, grid, family, S, density=512, threads=1):
    """Exact transpose of :func:`forward_grid` for the same nodes."""
    _check_family(family, S)
    if grid.n != S.n or sino.centers.shape[1] != S.n - 1:
        raise GridMismatch("sinogram, grid and surface dimensions differ")
    size = int(np.prod(grid.dims))

    def one(args):
        y, vals = args
        acc = np.zeros(size)
        live = vals != 0
        if not np.any(live):
            return acc
        rows = _center_rows(grid, family, S, y, sino.ts[live], density)
        for (i, c), v in zip(rows, vals[live]):
            if len(i):
                acc += np.bincount(i, weights=c * v, minlength=size)
        return acc

    total = np.zeros(size)
    # partial images are merged in center order regardless of thread count
    for part in _map_centers(one, list(zip(sino.centers, sino.values)), threads):
        total += part
    return grid.like(total.reshape(grid.dims))


def normal_op(image, family, S, centers, ts, density=512, threads=1):
    sino = forward_grid(image, family, S, centers, ts, density, threads)
    return adjoint(sino, image, family, S, density, threads)


def psf(x0, grid, family, S, centers, ts, density=512, threads=1):
    """Normal operator applied to the one-hot image at the node nearest ``x0``."""
    return normal_op(one_hot(grid, x0), family, S, centers, ts, density, threads)
