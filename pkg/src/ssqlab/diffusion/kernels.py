"""Transition kernels of drifted Brownian motion killed or reflected at zero,
and quadrature evaluation of the axis-process semigroup.

The killed kernel is closed-form (image method with a drift tilt).  The
reflected kernel from an interior point is assembled as killed kernel plus a
boundary renewal integral against the from-zero reflected density; the
from-zero density and CDF are closed-form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import log_ndtr, ndtr

from ..errors import QuadratureTolerance
from ..model import WbmParams


@dataclass(frozen=True)
class KernelQuery:
    """Arguments of one kernel evaluation."""

    b: float
    sigma: float
    t: float
    x: float
    y: float

    def __post_init__(self):
        if self.t <= 0 or self.sigma <= 0:
            raise ValueError(f"need t > 0 and sigma > 0, got t={self.t}, sigma={self.sigma}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"need x, y >= 0, got x={self.x}, y={self.y}")


def _gauss(z, v):
    return np.exp(-z * z / (2.0 * v)) / math.sqrt(2.0 * math.pi * v)


def killed_kernel(query: KernelQuery) -> float:
    """Density at ``y`` of the drifted BM from ``x`` killed at zero.

    Equals ``phi_v(y - x - bt) - exp(-2bx/sigma^2) phi_v(y + x - bt)`` with
    ``v = sigma^2 t``; this is the image-method kernel with the drift tilt
    folded into the exponents for numerical stability.
    """
    b, sig, t, x, y = query.b, query.sigma, query.t, query.x, query.y
    v = sig * sig * t
    direct = _gauss(y - x - b * t, v)
    image = math.exp(-2.0 * b * x / (sig * sig)) * _gauss(y + x - b * t, v)
    return float(max(direct - image, 0.0))


def first_hit_density(b: float, sigma: float, x: float, s) -> np.ndarray:
    """Density of the first hitting time of zero from ``x > 0``."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    sp = s[pos]
    out[pos] = x / (sigma * np.sqrt(2.0 * math.pi * sp ** 3)) * np.exp(
        -((x + b * sp) ** 2) / (2.0 * sigma * sigma * sp))
    return out


def rbm_density_from_zero(b: float, sigma: float, t: float, y) -> np.ndarray:
    """Marginal density of the reflected process started at zero."""
    y = np.asarray(y, dtype=float)
    v = sigma * sigma * t
    root = sigma * math.sqrt(t)
    base = 2.0 * _gauss(y - b * t, v)
    if b == 0.0:
        dens = base
    else:
        tail = np.exp(2.0 * b * y / (sigma * sigma) + log_ndtr(-(y + b * t) / root))
        dens = base - (2.0 * b / (sigma * sigma)) * tail
    return np.maximum(dens, 0.0)


def rbm_cdf_from_zero(b: float, sigma: float, t: float, y) -> np.ndarray:
    """Marginal CDF of the reflected process started at zero."""
    y = np.asarray(y, dtype=float)
    root = sigma * math.sqrt(t)
    main = ndtr((y - b * t) / root)
    tail = np.exp(2.0 * b * y / (sigma * sigma) + log_ndtr(-(y + b * t) / root))
    return np.clip(main - tail, 0.0, 1.0)


def reflected_kernel(b: float, sigma: float, t: float, x: float, y: float,
                     *, tol: float = 1e-9) -> float:
    """Density at ``y`` of the reflected process from ``x >= 0``.

    For interior starts this is the killed kernel plus the renewal integral
    ``int_0^t l_x(s) p0+(t - s, y) ds`` over the first zero-hitting time.
    """
    if x == 0.0:
        return float(rbm_density_from_zero(b, sigma, t, y))
    killed = killed_kernel(KernelQuery(b=b, sigma=sigma, t=t, x=x, y=y))

    def integrand(s):
        u = t - s
        if u <= 0.0:
            return 0.0
        return float(first_hit_density(b, sigma, x, s) * rbm_density_from_zero(b, sigma, u, y))

    renewal, err = integrate.quad(integrand, 0.0, t, epsabs=tol, epsrel=tol, limit=200)
    if err > max(50.0 * tol, 1e-6 * max(abs(renewal), 1.0)):
        raise QuadratureTolerance(f"boundary renewal integral error {err:.2e}")
    return killed + renewal


def _h_bar(f_bar: Callable[[float], float], b: float, sigma: float, u: float,
           support: float, tol: float) -> float:
    """Expectation of ``f_bar`` under the from-zero reflected marginal."""
    if u <= 0.0:
        return f_bar(0.0)
    val, err = integrate.quad(
        lambda y: f_bar(y) * float(rbm_density_from_zero(b, sigma, u, y)),
        0.0, support, epsabs=tol, epsrel=tol, limit=200)
    if err > max(50.0 * tol, 1e-6 * max(abs(val), 1.0)):
        raise QuadratureTolerance(f"from-zero expectation error {err:.2e}")
    return val


def wbm_semigroup(f: Callable[[np.ndarray], float], t: float, x0: np.ndarray,
                  params: WbmParams, *, support: float | None = None,
                  tol: float = 1e-8) -> float:
    """Expected value of ``f`` at time ``t`` for the axis process from ``x0``.

    Evaluates the killed-plus-renewal decomposition by quadrature: the term
    before the first zero keeps the initial axis, afterwards the axis is
    averaged by the angular weights.  Independent of any path sampling.
    """
    x0 = np.asarray(x0, dtype=float)
    n = params.n
    if x0.shape != (n,) or np.count_nonzero(x0) > 1 or np.any(x0 < 0):
        raise ValueError(f"x0 must lie on a coordinate axis, got {x0}")
    if t <= 0:
        raise ValueError(f"need t > 0, got {t}")
    rho0 = float(np.sum(x0))
    axis0 = int(np.argmax(x0)) if rho0 > 0 else 0
    b, sig, q = params.b, params.sigma, np.asarray(params.q)
    if support is None:
        support = rho0 + abs(b) * t + 12.0 * sig * math.sqrt(t) + 1.0

    basis = np.eye(n)

    def f_axis(rho: float, i: int) -> float:
        return float(f(rho * basis[i]))

    def f_bar(rho: float) -> float:
        return float(sum(q[i] * f_axis(rho, i) for i in range(n)))

    if rho0 == 0.0:
        return _h_bar(f_bar, b, sig, t, support, tol)

    killed_term, err = integrate.quad(
        lambda y: f_axis(y, axis0) * killed_kernel(
            KernelQuery(b=b, sigma=sig, t=t, x=rho0, y=y)),
        0.0, support, epsabs=tol, epsrel=tol, limit=200)
    if err > max(50.0 * tol, 1e-6 * max(abs(killed_term), 1.0)):
        raise QuadratureTolerance(f"killed-term quadrature error {err:.2e}")

    def renewal_integrand(s):
        dens = float(first_hit_density(b, sig, rho0, s))
        if dens == 0.0:
            return 0.0
        return dens * _h_bar(f_bar, b, sig, t - s, support, tol)

    renewal, err = integrate.quad(renewal_integrand, 0.0, t,
                                  epsabs=tol, epsrel=tol, limit=200)
    if err > max(50.0 * tol, 1e-6 * max(abs(renewal), 1.0)):
        raise QuadratureTolerance(f"renewal quadrature error {err:.2e}")
    return killed_term + renewal
