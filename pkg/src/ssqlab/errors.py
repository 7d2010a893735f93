"""Exception types shared across the package."""


class SsqError(Exception):
    """Base class for all ssqlab errors."""


class NonCritical(SsqError):
    """Traffic intensity is not 1 within tolerance."""


class BadRate(SsqError):
    """A first- or scaled-order rate is nonpositive or malformed."""


class BadTieBreak(SsqError):
    """A tie-break probability vector is malformed."""


class LatticeMismatch(SsqError):
    """A state is off the scaled workload lattice beyond tolerance."""


class AmbiguousBall(SsqError):
    """Classification balls overlap for the given (eps, r) pair."""


class RateMismatch(SsqError):
    """Incompatible models passed to the likelihood reweighter."""


class DegenerateChain(SsqError):
    """Star chain admits no absorption."""


class NonConvergedPDE(SsqError):
    """Grid refinement of the survival PDE failed its tolerance."""


class QuadratureTolerance(SsqError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class InfeasiblePoint(SsqError):
    """A sweep value breaks positivity or criticality."""
