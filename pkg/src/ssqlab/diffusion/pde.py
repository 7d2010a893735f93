"""Crank-Nicolson solve of the survival probability of the reflected process
below a threshold: no-flux condition at zero, absorption at the threshold."""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_banded

from ..errors import NonConvergedPDE


def _march(b: float, sigma: float, eps: float, s: float, nx: int) -> np.ndarray:
    """Return the grid values ``v(x_j, s)`` on ``x_j = j * eps / nx``.

    Unknowns are ``j = 0 .. nx-1``; the absorbing node ``x = eps`` is
    eliminated.  The no-flux condition at zero enters through a ghost node,
    which also cancels the drift term in the boundary row.
    """
    dx = eps / nx
    nt = max(int(math.ceil(s / dx)), 2)
    dt = s / nt

    diff = 0.5 * sigma * sigma / (dx * dx)
    drift = 0.5 * b / dx
    # generator rows: A[j, j-1] = lower[j-1], A[j, j] = main[j], A[j, j+1] = upper[j]
    main = np.full(nx, -2.0 * diff)
    upper = np.full(nx - 1, diff + drift)
    lower = np.full(nx - 1, diff - drift)
    upper[0] = 2.0 * diff  # ghost node v_{-1} = v_1

    def banded(coef):
        # (I - coef * A) in solve_banded storage
        ab = np.zeros((3, nx))
        ab[0, 1:] = -coef * upper
        ab[1, :] = 1.0 - coef * main
        ab[2, :-1] = -coef * lower
        return ab

    def apply_a(v):
        out = main * v
        out[:-1] += upper * v[1:]
        out[1:] += lower * v[:-1]
        return out

    v = np.ones(nx)
    # two damped implicit half steps before Crank-Nicolson marching
    half = banded(0.5 * dt)
    for _ in range(2):
        v = solve_banded((1, 1), half, v)
    cn = banded(0.5 * dt)
    for _ in range(nt - 1):
        rhs = v + 0.5 * dt * apply_a(v)
        v = solve_banded((1, 1), cn, rhs)
    return v


def rbm_survival(b: float, sigma: float, eps: float, x: float, s: float,
                 *, nx: int = 512, tol: float = 1e-6) -> float:
    """Probability that the reflected process from ``x`` stays below ``eps``
    up to time ``s``.

    Solved by Crank-Nicolson with spatial grid ``nx`` and time step at most
    the grid spacing; the answer is accepted only if a half-step refinement
    agrees within ``tol``.
    """
    if sigma <= 0 or eps <= 0:
        raise ValueError("need sigma > 0 and eps > 0")
    if not 0.0 <= x <= eps:
        raise ValueError(f"need 0 <= x <= eps, got x={x}, eps={eps}")
    if s < 0:
        raise ValueError(f"need s >= 0, got {s}")
    if x == eps:
        return 0.0
    if s == 0.0:
        return 1.0

    coarse = _march(b, sigma, eps, s, nx)
    fine = _march(b, sigma, eps, s, 2 * nx)

    def at(v: np.ndarray, n: int) -> float:
        grid = np.append(np.arange(n) * (eps / n), eps)
        vals = np.append(v, 0.0)
        return float(np.interp(x, grid, vals))

    v1, v2 = at(coarse, nx), at(fine, 2 * nx)
    if abs(v2 - v1) > tol * max(1.0, abs(v2)):
        raise NonConvergedPDE(
            f"half-step comparison {abs(v2 - v1):.2e} exceeds tolerance {tol:.2e}")
    return min(max(v2, 0.0), 1.0)
