"""Reference numerics for the limit objects: Skorohod reflection, reflected
and killed Brownian kernels, axis-process sampling and semigroup, and the
mixed-boundary survival probability."""

from .paths import GridPath, skorohod, rbm_path, wbm_path
from .kernels import (
    KernelQuery,
    killed_kernel,
    first_hit_density,
    rbm_density_from_zero,
    rbm_cdf_from_zero,
    reflected_kernel,
    wbm_semigroup,
)
from .pde import rbm_survival

__all__ = [
    "GridPath",
    "skorohod",
    "rbm_path",
    "wbm_path",
    "KernelQuery",
    "killed_kernel",
    "first_hit_density",
    "rbm_density_from_zero",
    "rbm_cdf_from_zero",
    "reflected_kernel",
    "wbm_semigroup",
    "rbm_survival",
]
