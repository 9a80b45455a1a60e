import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import rand_point, sigma_point_at
from quadradon.artifacts import (CovectorPoint, left_fiber, local_maxima,
                                 off_source_maxima, overlay_psf, predict_artifacts,
                                 right_fiber)
from quadradon.canonical import (CanonicalPoint, LeftImage, project_left,
                                 project_left_paraboloid, project_right,
                                 project_right_paraboloid, sigma_K)
from quadradon.errors import NoSolution, ZeroTau
from quadradon.geometry import builtin_surface, make_paraboloid, make_quadric
from quadradon.radon import ImageGrid


def circle_fiber_oracle(d, samples=400_001):
    """Brute-force left fiber for A = I on the line x2 = 0: scan the circle of
    radius sqrt(t) about (y, 0) for points with 2 omega (x1 - y) = eta."""
    r = np.sqrt(d.t)
    th = np.linspace(-np.pi, np.pi, samples)
    res = np.abs(2 * d.tau * r * np.cos(th) - d.eta[0])
    # local minima of the residual along the circle
    idx = np.flatnonzero((res[1:-1] <= res[:-2]) & (res[1:-1] <= res[2:])) + 1
    idx = idx[res[idx] < 1e-3 * (1 + abs(d.eta[0]))]
    pts = np.column_stack([d.y[0] + r * np.cos(th[idx]), r * np.sin(th[idx])])
    return pts


# --- right fiber ------------------------------------------------------------------------

def test_right_fiber_plane_example(plane2, eye2):
    src = CovectorPoint([0.3, 0.5], [0.0, 1.0])
    fib = right_fiber(src, eye2, plane2)
    assert len(fib) == 1
    cp = fib[0]
    assert cp.y[0] == pytest.approx(0.3, abs=1e-14)
    # 2 omega x_T = xi with x_T = (0, 0.5)
    assert cp.omega == pytest.approx(1.0, abs=1e-14)


def test_right_fiber_invisible(plane2, eye2):
    with pytest.raises(NoSolution):
        right_fiber(CovectorPoint([0.3, 0.5], [1.0, 0.0]), eye2, plane2)


@pytest.mark.parametrize("kind, A", [("hemisphere", np.diag([1.0, 2.0, 3.0])),
                                     ("hemisphere", np.diag([1.0, 1.0, -1.0])),
                                     ("half_cylinder", np.diag([1.0, 2.0, 0.5])),
                                     ("plane", np.diag([1.0, -1.0, 2.0]))])
def test_right_fiber_residual(kind, A):
    S, Q = builtin_surface(kind, 3), make_quadric(A)
    rng = np.random.default_rng(0)
    for _ in range(40):
        cp = rand_point(Q, S, rng)
        r = project_right(cp, Q, S)
        fib = right_fiber(CovectorPoint(r.x, r.xi), Q, S)
        for f in fib:
            xT = f.x - S.center(f.y)
            assert np.linalg.norm(2 * f.omega * Q.A @ xT - r.xi) <= 1e-8 * (1 + np.linalg.norm(r.xi))
        # the generating point is recovered
        assert min(np.linalg.norm(f.y - cp.y) + abs(f.omega - cp.omega) for f in fib) <= 1e-8 * (1 + abs(cp.omega))


# --- left fiber -------------------------------------------------------------------------

def test_left_fiber_circle_matches_brute_force(plane2, eye2):
    rng = np.random.default_rng(1)
    for _ in range(20):
        cp = rand_point(eye2, plane2, rng)
        d = project_left(cp, eye2, plane2)
        fib = left_fiber(d, eye2, plane2)
        assert len(fib) == 2
        a, b = sorted((f.x for f in fib), key=lambda x: x[1])
        # mirror images across x2 = 0
        assert np.allclose(a, b * [1, -1], atol=1e-12)
        oracle = circle_fiber_oracle(d)
        assert len(oracle) == 2
        for x in (a, b):
            assert np.min(np.linalg.norm(oracle - x, axis=1)) < 1e-4
        assert min(np.linalg.norm(f.x - cp.x) for f in fib) <= 1e-12 * (1 + np.linalg.norm(cp.x))


@pytest.mark.parametrize("kind, A", [("hemisphere", np.diag([1.0, 2.0, 3.0])),
                                     ("hemisphere", np.diag([1.0, 1.0, -1.0])),
                                     ("half_cylinder", np.diag([-1.0, -1.0, 1.0]))])
def test_left_fiber_residuals_and_roundtrip(kind, A):
    S, Q = builtin_surface(kind, 3), make_quadric(A)
    rng = np.random.default_rng(2)
    for _ in range(100):
        cp = rand_point(Q, S, rng)
        d = project_left(cp, Q, S)
        fib = left_fiber(d, Q, S)
        assert 1 <= len(fib) <= 2
        for f in fib:
            img = project_left(f, Q, S).as_vector()
            assert np.linalg.norm(img - d.as_vector()) <= 1e-8 * (1 + np.linalg.norm(d.as_vector()))
        assert min(np.linalg.norm(f.x - cp.x) for f in fib) <= 1e-8 * (1 + np.linalg.norm(cp.x))


def test_left_fiber_on_sigma_is_single(hemi3):
    # on the fold set the two fiber points coalesce
    Q = make_quadric(np.diag([1.0, 2.0, 3.0]))
    cp = sigma_point_at(hemi3, [0.2, -0.3], [0.5, 0.4], 1.5)
    assert abs(sigma_K(cp.y, cp.x, hemi3)) < 1e-14
    fib = left_fiber(project_left(cp, Q, hemi3), Q, hemi3)
    assert len(fib) == 1
    assert np.allclose(fib[0].x, cp.x, atol=1e-6)
    r = project_right(fib[0], Q, hemi3)
    r0 = project_right(cp, Q, hemi3)
    assert np.allclose(r.xi / np.linalg.norm(r.xi), r0.xi / np.linalg.norm(r0.xi), atol=1e-6)


def test_left_fiber_zero_tau(plane2, eye2):
    with pytest.raises(ZeroTau):
        left_fiber(LeftImage(np.zeros(1), 1.0, np.zeros(1), 0.0), eye2, plane2)


def test_left_fiber_paraboloid_single(hemi3):
    P = make_paraboloid(3, 2, np.eye(2), [-1.0])
    cp = CanonicalPoint(np.array([0.1, 0.2]), np.array([0.4, -0.3, 0.5]), 1.2)
    fib = left_fiber(project_left_paraboloid(cp, P, hemi3), P, hemi3)
    assert len(fib) == 1 and np.allclose(fib[0].x, cp.x, atol=1e-12)


# --- predictions --------------------------------------------------------------------------

def test_plane_mirror_example(plane2, eye2):
    pred = predict_artifacts(CovectorPoint([0.3, 0.5], [0.0, 1.0]), eye2, plane2)
    xs = sorted((tuple(np.round(m.x, 12)) for m in pred.mirrors))
    assert xs == [(0.3, -0.5), (0.3, 0.5)]
    mirror = [m for m in pred.mirrors if m.x[1] < 0][0]
    assert np.allclose(mirror.direction, [0.0, -1.0], atol=1e-14)
    assert max(pred.residuals) <= 1e-8
    # one non-diagonal mirror per data point
    assert len(pred.mirrors) == 1 + len(pred.data_points)


def test_paraboloid_no_mirrors(hemi3):
    P = make_paraboloid(3, 2, np.eye(2), [-1.0])
    cp = CanonicalPoint(np.array([0.1, 0.2]), np.array([0.4, -0.3, 0.5]), 1.2)
    r = project_right_paraboloid(cp, P, hemi3)
    pred = predict_artifacts(CovectorPoint(r.x, r.xi), P, hemi3)
    assert len(pred.mirrors) == 1
    assert np.allclose(pred.mirrors[0].x, r.x)


@given(st.floats(0.05, 50.0), st.integers(0, 10_000))
def test_conic_invariance(lam, seed):
    S, Q = builtin_surface("hemisphere", 3), make_quadric(np.diag([1.0, 2.0, 3.0]))
    cp = rand_point(Q, S, np.random.default_rng(seed))
    r = project_right(cp, Q, S)
    a = predict_artifacts(CovectorPoint(r.x, r.xi), Q, S)
    b = predict_artifacts(CovectorPoint(r.x, lam * r.xi), Q, S)
    key = lambda m: np.concatenate([m.x, m.direction])
    ka = sorted(map(tuple, np.round([key(m) for m in a.mirrors], 7)))
    kb = sorted(map(tuple, np.round([key(m) for m in b.mirrors], 7)))
    assert len(ka) == len(kb)
    assert np.allclose(ka, kb, atol=1e-6)


@pytest.mark.parametrize("kind, A", [("hemisphere", np.diag([1.0, 2.0, 3.0])), ("plane", np.eye(3))])
def test_involution(kind, A):
    S, Q = builtin_surface(kind, 3), make_quadric(A)
    rng = np.random.default_rng(3)
    for _ in range(20):
        cp = rand_point(Q, S, rng)
        r = project_right(cp, Q, S)
        src = CovectorPoint(r.x, r.xi)
        pred = predict_artifacts(src, Q, S)
        assert max(pred.residuals) <= 1e-8
        for m in pred.mirrors[1:]:
            back = predict_artifacts(m, Q, S)
            d = [np.linalg.norm(b.x - src.x) + np.linalg.norm(b.direction - src.direction) for b in back.mirrors]
            assert min(d) <= 1e-7 * (1 + np.linalg.norm(src.x))


# --- PSF overlay -----------------------------------------------------------------------------

def test_overlay_and_maxima():
    grid = ImageGrid([0.0, 0.0], 0.1, (21, 21))
    v = np.zeros(grid.dims)
    v[5, 5] = 1.0
    v[5, 15] = 0.7
    v[15, 10] = 0.3
    psf = grid.like(v)
    assert sorted(map(tuple, local_maxima(psf, 0.5))) == [(5, 5), (5, 15)]
    pred = predict_artifacts(CovectorPoint([0.5, 0.5], [0.0, 1.0]), make_quadric(np.eye(2)),
                             builtin_surface("plane", 2, {"height": -0.5}))
    rows = overlay_psf(pred, psf)
    assert rows[0]["hit"] and rows[0]["distance_cells"] == pytest.approx(0.0, abs=1e-12)
    far = off_source_maxima(psf, [0.5, 0.5])
    assert np.allclose(far, [[0.5, 1.5]])
    assert len(off_source_maxima(grid.like(np.zeros(grid.dims)), [0.5, 0.5])) == 0
