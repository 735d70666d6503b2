"""Shared fixtures and finite-difference helpers for the test suite."""

import numpy as np
import pytest

SEED = 20260816


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


def random_triangle(rng, nen: int, scale: float = 1.0) -> np.ndarray:
    """Random well-shaped triangle (positive Jacobian, no slivers)."""
    while True:
        base = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        amat = np.eye(2) + 0.4 * rng.uniform(-1.0, 1.0, (2, 2))
        if np.linalg.det(amat) > 0.35:
            break
    corners = base @ amat.T + rng.uniform(-0.2, 0.2, 2)
    corners *= scale
    if nen == 3:
        return corners
    mids = 0.5 * (corners + np.roll(corners, -1, axis=0))
    mids += 0.03 * scale * rng.uniform(-1.0, 1.0, (3, 2))
    return np.vstack([corners, mids])


def fd_gradient(fun, x, h):
    """Central finite differences of a scalar function of a flat array.

    ``h`` may be an array to give mixed-unit components their own step.
    """
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        hi = h if np.isscalar(h) else np.asarray(h).flat[i]
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += hi
        xm.flat[i] -= hi
        grad.flat[i] = (fun(xp) - fun(xm)) / (2.0 * hi)
    return grad


def fd_jacobian(fun, x, h):
    """Central finite differences of a vector function of a flat array."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x), dtype=float)
    jac = np.zeros((f0.size, x.size))
    for i in range(x.size):
        hi = h if np.isscalar(h) else np.asarray(h).flat[i]
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += hi
        xm.flat[i] -= hi
        jac[:, i] = (np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2.0 * hi)
    return jac


def rel_err(approx, exact, floor=1e-30):
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    scale = max(np.abs(exact).max(), floor)
    return np.abs(approx - exact).max() / scale
