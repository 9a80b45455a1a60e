import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from quadradon.canonical import CanonicalPoint
from quadradon.geometry import builtin_surface, make_quadric

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# one verdict line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


def central_jacobian(f, z, h):
    """Independent central-difference Jacobian oracle; ``h`` scalar or per axis."""
    z = np.asarray(z, dtype=float)
    f0 = np.asarray(f(z))
    h = np.broadcast_to(np.asarray(h, dtype=float), z.shape)
    J = np.empty((f0.size, z.size))
    for j in range(z.size):
        e = np.zeros_like(z)
        e[j] = h[j]
        J[:, j] = (np.asarray(f(z + e)) - np.asarray(f(z - e))) / (2 * h[j])
    return J


def fd_steps(cp, S, rel=1e-5):
    """Per-variable steps over ``(y', x, omega)``: domain half-widths for ``y'``,
    magnitude-relative elsewhere."""
    hy = rel * 0.5 * (S.hi - S.lo)
    hx = rel * np.maximum(1.0, np.abs(cp.x))
    return np.concatenate([hy, hx, [rel * max(1.0, abs(cp.omega))]])


def rand_point(Q, S, rng, on_sigma=False):
    """Random canonical point; ``on_sigma`` puts ``x_T`` in the tangent plane of S."""
    while True:
        y = rng.uniform(S.lo, S.hi)
        if S.contains(y):
            break
    s = np.append(y, S.q(y))
    if on_sigma:
        # x_T = B^T d lies in the tangent plane, so K vanishes identically
        B = np.hstack([np.eye(S.n - 1), S.grad_q(y)[:, None]])
        xT = B.T @ rng.normal(size=S.n - 1)
    else:
        xT = rng.normal(size=S.n)
    omega = rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 3.0)
    return CanonicalPoint(y=y, x=s + xT, omega=omega)


def sigma_point_at(S, y, d, omega=1.0):
    """Fold-set point over center ``y`` with tangent-plane offset ``B^T d``."""
    y = np.asarray(y, dtype=float)
    B = np.hstack([np.eye(S.n - 1), S.grad_q(y)[:, None]])
    return CanonicalPoint(y=y, x=np.append(y, S.q(y)) + B.T @ np.asarray(d, dtype=float), omega=omega)


def random_spd(n, rng):
    M = rng.normal(size=(n, n))
    A = M @ M.T + n * np.eye(n)
    return 0.5 * (A + A.T)


def random_indefinite(n, rng, k_pos=None):
    k_pos = k_pos if k_pos is not None else max(1, n // 2)
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    d = np.concatenate([rng.uniform(0.5, 2.0, k_pos), -rng.uniform(0.5, 2.0, n - k_pos)])
    A = Q @ np.diag(d) @ Q.T
    return 0.5 * (A + A.T)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def hemi3():
    return builtin_surface("hemisphere", 3)


@pytest.fixture
def plane2():
    return builtin_surface("plane", 2)


@pytest.fixture
def eye2():
    return make_quadric(np.eye(2))
