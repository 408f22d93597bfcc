"""Pure-numpy versions of the simulation kernels.

Mirrors ``_kernels.pyx`` operation for operation; used when the compiled
extension is missing or ``STOCHREG_PURE_PYTHON=1``.
"""
import numpy as np

from .linalg import _pade6, squarings


def expm_pade(a):
    """``exp(a)`` for a square float64 array (no scaling by t)."""
    a = np.ascontiguousarray(a, dtype=float)
    s = squarings(float(np.abs(a).sum(axis=0).max())) if a.size else 0
    r = _pade6(a / (2.0 ** s))
    for _ in range(s):
        r = r @ r
    return r


def propagate(F, J, x0, jumps, grid, phi_dt, dt):
    """Exact flow/jump propagation sampled on ``grid``.

    Between events the state moves by ``exp(F tau)``; at each jump time the
    left limit is mapped through ``J``. A jump that coincides with a grid
    time is applied before that time is recorded. Steps of length ``dt``
    reuse ``phi_dt``.

    Returns
    -------
    states : (len(grid), d) array
    counts : (len(grid),) int array, jumps in ``(grid[i-1], grid[i]]``
    """
    F = np.asarray(F, dtype=float)
    J = np.asarray(J, dtype=float)
    grid = np.asarray(grid, dtype=float)
    jumps = np.asarray(jumps, dtype=float)
    m = grid.size
    states = np.empty((m, F.shape[0]))
    counts = np.zeros(m, dtype=np.int64)
    x = np.array(x0, dtype=float)
    states[0] = x
    k = 0
    nj = jumps.size
    while k < nj and jumps[k] <= grid[0]:
        k += 1
    for i in range(1, m):
        t = grid[i - 1]
        t1 = grid[i]
        if k < nj and jumps[k] <= t1:
            while k < nj and jumps[k] <= t1:
                tau = jumps[k] - t
                if tau > 0.0:
                    x = expm_pade(F * tau) @ x
                x = J @ x
                t = jumps[k]
                counts[i] += 1
                k += 1
            tau = t1 - t
            if tau > 0.0:
                x = expm_pade(F * tau) @ x
        elif abs((t1 - t) - dt) <= 1e-12 * max(1.0, dt):
            x = phi_dt @ x
        else:
            x = expm_pade(F * (t1 - t)) @ x
        states[i] = x
    return states, counts
