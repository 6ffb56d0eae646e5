import numpy as np
import pytest


def naive_matvec(U, x):
    n, d = U.shape
    out = [0.0] * n
    for i in range(n):
        acc = 0.0
        for j in range(d):
            acc += U[i, j] * x[j]
        out[i] = acc
    return np.array(out)


def grid_prox(v_i, lam, half_width=None, step=1e-4):
    """Minimiser of 0.5 (z - v_i)^2 + lam |z| by a fine grid, then a local refinement."""
    hw = abs(v_i) + 1.0 if half_width is None else half_width
    z = np.arange(-hw, hw + step, step)
    f = 0.5 * (z - v_i) ** 2 + lam * np.abs(z)
    z0 = z[np.argmin(f)]
    fine = np.linspace(z0 - step, z0 + step, 2001)
    ff = 0.5 * (fine - v_i) ** 2 + lam * np.abs(fine)
    return float(fine[np.argmin(ff)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
