"""Grid-sampled paths: Skorohod reflection, RBM, and the axis process."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Union

import numpy as np

from ..model import WbmParams


@dataclass(frozen=True)
class GridPath:
    """Uniformly sampled path; ``values`` is ``(n,)`` or ``(n, N)``."""

    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.values))

    def to_csv(self, dest: Union[str, IO[str]]) -> None:
        """Write ``t,v1..vN`` rows."""
        v = self.values if self.values.ndim == 2 else self.values[:, None]
        header = "t," + ",".join(f"v{i + 1}" for i in range(v.shape[1]))
        np.savetxt(dest, np.column_stack([self.times, v]),
                   delimiter=",", header=header, comments="")


def _reflect(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    low = np.minimum.accumulate(np.minimum(values, 0.0))
    g2 = -low
    g1 = values + g2
    return g1, g2


def skorohod(phi: GridPath) -> tuple[GridPath, GridPath]:
    """One-sided reflection at zero, exact at grid points.

    Returns ``(gamma1, gamma2)`` with ``gamma1 = phi + gamma2`` and
    ``gamma2(t) = -min(0, inf_{s<=t} phi(s))`` computed by a running minimum.
    """
    if phi.values.ndim != 1:
        raise ValueError("skorohod expects a scalar path")
    g1, g2 = _reflect(phi.values)
    return GridPath(phi.t0, phi.dt, g1), GridPath(phi.t0, phi.dt, g2)


def rbm_path(b: float, sigma: float, x0: float, horizon: float, dt: float,
             rng: np.random.Generator) -> GridPath:
    """Reflected Brownian path from ``x0 >= 0`` on a uniform grid.

    Gaussian increments ``N(b dt, sigma^2 dt)`` are accumulated and pushed
    through the reflection map, so the marginal law converges to the RBM law
    as ``dt -> 0``.
    """
    if sigma <= 0 or x0 < 0 or dt <= 0:
        raise ValueError("need sigma > 0, x0 >= 0, dt > 0")
    nsteps = int(round(horizon / dt))
    incr = rng.normal(b * dt, sigma * math.sqrt(dt), size=nsteps)
    phi = np.empty(nsteps + 1)
    phi[0] = x0
    phi[1:] = x0 + np.cumsum(incr)
    g1, _ = _reflect(phi)
    return GridPath(0.0, dt, g1)


def wbm_path(params: WbmParams, x0: np.ndarray, horizon: float, dt: float,
             rng: np.random.Generator) -> GridPath:
    """Sample the axis-valued limit process started from a point on an axis.

    The radial part is an RBM; the active axis is constant on each discrete
    excursion (an excursion starts at the first grid point where the radial
    part leaves an exact zero) and successive excursion axes are i.i.d. with
    distribution ``params.q``.
    """
    x0 = np.asarray(x0, dtype=float)
    n = params.n
    if x0.shape != (n,) or np.count_nonzero(x0) > 1 or np.any(x0 < 0):
        raise ValueError(f"x0 must lie on a coordinate axis, got {x0}")
    rho0 = float(np.sum(x0))
    radial = rbm_path(params.b, params.sigma, rho0, horizon, dt, rng).values

    starts = np.flatnonzero((radial[1:] > 0.0) & (radial[:-1] == 0.0)) + 1
    axis0 = int(np.argmax(x0)) if rho0 > 0 else 0
    draws = rng.choice(n, size=len(starts), p=np.asarray(params.q))
    seg = np.zeros(len(radial), dtype=np.int64)
    seg[starts] = 1
    seg = np.cumsum(seg)
    seg_axis = np.concatenate([[axis0], draws]).astype(np.int64)
    axes = seg_axis[seg]

    values = np.zeros((len(radial), n))
    values[np.arange(len(radial)), axes] = radial
    return GridPath(0.0, dt, values)


def excursion_axes(path: GridPath) -> np.ndarray:
    """Axis labels of the completed excursions of an axis-valued path.

    An excursion is an interval between exact zeros of the radial part on
    which the path is positive; the label is the axis carrying the mass.
    """
    v = path.values
    if v.ndim != 2:
        raise ValueError("excursion_axes expects an axis-valued path")
    radial = v.sum(axis=1)
    starts = np.flatnonzero((radial[1:] > 0.0) & (radial[:-1] == 0.0)) + 1
    return np.argmax(v[starts], axis=1)
