import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import ellipe

from quadradon.errors import EmptyIntersection, GridMismatch, SupportIntersectsSurface, UnboundedWithoutBox
from quadradon.geometry import builtin_surface, make_paraboloid, make_quadric
from quadradon.radon import (Blob, ImageGrid, Phantom, Sinogram, adjoint, forward,
                             forward_grid, normal_op, one_hot, psf, rasterize,
                             surface_quadrature)


def hyperbola_length():
    # x1 = +-cosh s, x2 = sinh s, |x1| <= 2; four symmetric arcs
    f = lambda s: np.sqrt(np.cosh(s) ** 2 + np.sinh(s) ** 2)
    return 4 * quad(f, 0.0, np.arccosh(2.0), epsabs=1e-13, epsrel=1e-12)[0]


# --- quadrature ------------------------------------------------------------------------

def test_circle_total_weight(plane2, eye2):
    q = surface_quadrature(eye2, plane2, [0.0], 0.25, density=2048)
    assert q.weights.sum() == pytest.approx(np.pi, abs=1e-6)
    assert np.allclose(np.linalg.norm(q.points, axis=1), 0.5, atol=1e-14)


def test_ellipse_perimeter(plane2):
    q = surface_quadrature(make_quadric(np.diag([4.0, 1.0])), plane2, [0.0], 1.0, density=2048)
    # semi-axes 0.5 and 1
    assert q.weights.sum() == pytest.approx(4 * ellipe(0.75), abs=1e-6)
    assert 4 * ellipe(0.75) == pytest.approx(4.84422, abs=1e-5)


def test_hyperbola_length(plane2):
    q = surface_quadrature(make_quadric(np.diag([1.0, -1.0])), plane2, [0.0], 1.0,
                           box=([-2, -2], [2, 2]), density=2048)
    assert q.weights.sum() == pytest.approx(hyperbola_length(), rel=1e-5)
    assert np.allclose(q.points[:, 0] ** 2 - q.points[:, 1] ** 2, 1.0, atol=1e-12)


def test_convergence_rate(plane2, eye2):
    H = make_quadric(np.diag([1.0, -1.0]))
    L = hyperbola_length()
    errs = [abs(surface_quadrature(H, plane2, [0.0], 1.0, ([-2, -2], [2, 2]), d).weights.sum() - L)
            for d in (512, 1024, 2048)]
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5
    # the periodic circle chart is already at rounding level: floor instead of ratio
    for d in (512, 1024, 2048):
        err = abs(surface_quadrature(eye2, plane2, [0.0], 0.25, density=d).weights.sum() - np.pi)
        assert err <= 1e-12


def test_sphere_area(hemi3):
    Q = make_quadric(np.diag([1.0, 1.0, 1.0]))
    q = surface_quadrature(Q, hemi3, [0.1, 0.2], 0.09, density=256)
    assert q.weights.sum() == pytest.approx(4 * np.pi * 0.09, rel=1e-4)


def test_quadrature_errors(plane2, eye2):
    with pytest.raises(UnboundedWithoutBox):
        surface_quadrature(make_quadric(np.diag([1.0, -1.0])), plane2, [0.0], 1.0)
    with pytest.raises(EmptyIntersection):
        surface_quadrature(eye2, plane2, [0.0], 0.25, box=([3, 3], [4, 4]))
    with pytest.raises(EmptyIntersection):
        surface_quadrature(make_quadric(-np.eye(2)), plane2, [0.0], 1.0)
    with pytest.raises(ValueError):
        surface_quadrature(eye2, plane2, [0.0], -1.0)


def test_paraboloid_parabola_nodes(plane2):
    P = make_paraboloid(2, 1, [[1.0]], [-1.0])
    t = 0.5
    q = surface_quadrature(P, plane2, [0.0], t, box=([-1, -1], [1, 1]), density=1024)
    assert len(q) > 0
    assert np.allclose(q.points[:, 1], q.points[:, 0] ** 2 - t, atol=1e-13)
    # arc length of x2 = x1^2 - t for |x1| <= 1 (x2 stays inside the box)
    L = quad(lambda a: np.sqrt(1 + 4 * a * a), -1, 1)[0]
    assert q.weights.sum() == pytest.approx(L, rel=1e-4)


@pytest.mark.parametrize("c", [0.3, 2.0, 7.5])
def test_scaling_node_identity(plane2, hemi3, c):
    A = np.diag([1.0, -2.0])
    a = surface_quadrature(make_quadric(A), plane2, [0.1], 0.4, ([-2, -2], [2, 2]), 256)
    b = surface_quadrature(make_quadric(c * A), plane2, [0.1], c * 0.4, ([-2, -2], [2, 2]), 256)
    assert np.allclose(a.points, b.points, rtol=0, atol=1e-12)
    a = surface_quadrature(make_quadric(np.eye(3)), hemi3, [0.0, 0.1], 0.2, None, 64)
    b = surface_quadrature(make_quadric(c * np.eye(3)), hemi3, [0.0, 0.1], c * 0.2, None, 64)
    assert np.allclose(a.points, b.points, rtol=0, atol=1e-12)


# --- forward -----------------------------------------------------------------------

def test_disk_arc_length(plane2, eye2):
    ph = Phantom([Blob("disk", [0.0, 1.0], 0.2)])
    s = forward(ph, eye2, plane2, [[0.0]], [1.0], density=2048)
    # chord 0.2 on the unit circle subtends 2 arcsin(0.1) on each side
    oracle = 4 * np.arcsin(0.1)
    assert oracle == pytest.approx(np.pi - 2 * np.arcsin(0.98), abs=1e-12)
    assert s.values[0, 0] == pytest.approx(oracle, rel=5e-3)


def test_empty_phantom(plane2, eye2):
    s = forward(Phantom([]), eye2, plane2, [[0.0], [0.3]], [0.5, 1.0])
    assert np.array_equal(s.values, np.zeros((2, 2)))


def test_support_must_avoid_surface(plane2, eye2):
    with pytest.raises(SupportIntersectsSurface):
        forward(Phantom([Blob("disk", [0.0, 0.1], 0.2)]), eye2, plane2, [[0.0]], [1.0])


def test_half_cylinder_translation():
    S = builtin_surface("half_cylinder", 3)
    Q = make_quadric(np.diag([1.0, 2.0, 1.5]))
    ts = np.linspace(0.5, 2.0, 4)
    base = Phantom([Blob("gaussian", [0.2, 0.1, 2.0], 0.1)])
    centers = np.array([[0.0, 0.0], [0.4, 0.2]])
    ref = forward(base, Q, S, centers, ts, density=96)
    for d in (0.5, -1.25):
        moved = Phantom([Blob("gaussian", [0.2 + d, 0.1, 2.0], 0.1)])
        got = forward(moved, Q, S, centers + [d, 0.0], ts, density=96)
        assert np.allclose(got.values, ref.values, rtol=0, atol=1e-10)
    assert np.abs(ref.values).max() > 1e-3


# --- grid operators ----------------------------------------------------------------------

def grid2():
    return ImageGrid([-1.0, 0.2], 2.0 / 31, (32, 32))


def geometries():
    plane2 = builtin_surface("plane", 2)
    hemi3 = builtin_surface("hemisphere", 3)
    return [
        ("circle", make_quadric(np.eye(2)), plane2, grid2(), np.linspace(-1, 1, 5)[:, None],
         np.linspace(0.05, 2.5, 9)),
        ("hyperbola", make_quadric(np.diag([1.0, -1.0])), plane2, grid2(), np.linspace(-1, 1, 5)[:, None],
         np.linspace(0.05, 1.0, 7)),
        ("parabola", make_paraboloid(2, 1, [[1.0]], [-1.0]), plane2, grid2(), np.linspace(-1, 1, 5)[:, None],
         np.linspace(-1.0, 0.5, 7)),
        ("sphere", make_quadric(np.eye(3)), hemi3, ImageGrid([-0.5, -0.5, 1.2], 1.0 / 11, (12, 12, 12)),
         np.array([[0.0, 0.0], [0.3, -0.2]]), np.linspace(0.1, 1.0, 4)),
    ]


@pytest.mark.parametrize("name, fam, S, grid, centers, ts", geometries())
def test_dot_test(name, fam, S, grid, centers, ts):
    rng = np.random.default_rng(0)
    density = 64 if S.n == 3 else 256
    for _ in range(3):
        f = grid.like(rng.normal(size=grid.dims))
        g = Sinogram(centers, ts, rng.normal(size=(len(centers), len(ts))))
        lhs = np.sum(forward_grid(f, fam, S, centers, ts, density).values * g.values)
        rhs = np.sum(f.values * adjoint(g, grid, fam, S, density).values)
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs))


def test_dot_test_sparse_image():
    # support pruning in the forward map must not break the transpose identity
    name, fam, S, grid, centers, ts = geometries()[0]
    rng = np.random.default_rng(1)
    v = np.zeros(grid.dims)
    v[10:13, 20:22] = rng.normal(size=(3, 2))
    f = grid.like(v)
    g = Sinogram(centers, ts, rng.normal(size=(len(centers), len(ts))))
    lhs = np.sum(forward_grid(f, fam, S, centers, ts, 256).values * g.values)
    rhs = np.sum(v * adjoint(g, grid, fam, S, 256).values)
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs))


def test_adjoint_linearity():
    name, fam, S, grid, centers, ts = geometries()[1]
    rng = np.random.default_rng(2)
    g1 = Sinogram(centers, ts, rng.normal(size=(len(centers), len(ts))))
    g2 = Sinogram(centers, ts, rng.normal(size=(len(centers), len(ts))))
    a = 1.7
    lhs = adjoint(Sinogram(centers, ts, a * g1.values + g2.values), grid, fam, S, 256).values
    rhs = a * adjoint(g1, grid, fam, S, 256).values + adjoint(g2, grid, fam, S, 256).values
    assert np.allclose(lhs, rhs, rtol=1e-13, atol=1e-13 * np.abs(rhs).max())


def test_adjoint_one_hot_paints_band():
    name, fam, S, grid, centers, ts = geometries()[0]
    vals = np.zeros((len(centers), len(ts)))
    vals[2, 4] = 1.0
    img = adjoint(Sinogram(centers, ts, vals), grid, fam, S, 512).values
    pts = grid.points()[img > 0]
    r = np.sqrt(((pts - [centers[2, 0], 0.0]) ** 2).sum(axis=1))
    h = grid.spacing.max()
    assert len(pts) > 0
    assert np.all(np.abs(r - np.sqrt(ts[4])) <= np.sqrt(2) * h + 1e-12)


def test_normal_symmetric_and_zero():
    name, fam, S, grid, centers, ts = geometries()[1]
    rng = np.random.default_rng(3)
    f, g = grid.like(rng.normal(size=grid.dims)), grid.like(rng.normal(size=grid.dims))
    a = np.sum(normal_op(f, fam, S, centers, ts, 256).values * g.values)
    b = np.sum(f.values * normal_op(g, fam, S, centers, ts, 256).values)
    assert abs(a - b) <= 1e-10 * abs(a)
    z = normal_op(grid.like(np.zeros(grid.dims)), fam, S, centers, ts, 256)
    assert not np.any(z.values)


def test_psf_peak_at_source(plane2, eye2):
    grid = ImageGrid([-1.0, -1.0], 2.0 / 63, (64, 64))
    centers = np.linspace(-2, 2, 64)[:, None]
    ts = np.linspace(0.01, 2.0, 64)
    x0 = np.array([0.3, 0.5])
    img = psf(x0, grid, eye2, plane2, centers, ts, density=256).values
    peak = np.array(np.unravel_index(np.argmax(img), img.shape))
    assert np.max(np.abs(peak - np.array(grid.nearest_index(x0)))) <= 1


def test_thread_determinism():
    name, fam, S, grid, centers, ts = geometries()[0]
    rng = np.random.default_rng(4)
    f = grid.like(rng.normal(size=grid.dims))
    a = forward_grid(f, fam, S, centers, ts, 256, threads=1).values
    b = forward_grid(f, fam, S, centers, ts, 256, threads=4).values
    assert np.array_equal(a, b)
    g = Sinogram(centers, ts, a)
    assert np.array_equal(adjoint(g, grid, fam, S, 256, threads=1).values,
                          adjoint(g, grid, fam, S, 256, threads=4).values)


def test_grid_validation():
    with pytest.raises(GridMismatch):
        ImageGrid([0.0], 1.0, (4,))
    with pytest.raises(GridMismatch):
        ImageGrid([0.0, 0.0], 1.0, (1, 4))
    with pytest.raises(GridMismatch):
        ImageGrid([0.0, 0.0], 1.0, (4, 4), np.zeros((3, 4)))
    with pytest.raises(ValueError):
        Sinogram([[0.0]], [1.0, 0.5], [[0.0, 0.0]])
    with pytest.raises(ValueError):
        Sinogram([[0.0]], [0.5, 1.0], [[0.0, np.nan]])


def test_rasterize_and_one_hot():
    grid = ImageGrid([0.0, 0.0], 0.5, (5, 5))
    img = rasterize(Phantom([Blob("disk", [1.0, 1.0], 0.3)]), grid)
    assert img.values[2, 2] == 1.0 and img.values.sum() == 1.0
    oh = one_hot(grid, [0.74, 1.26])
    assert oh.values[1, 3] == 1.0 and oh.values.sum() == 1.0
