"""Exception types shared across the engines."""


class CurvePullError(Exception):
    """Base class for all errors raised by this package."""


class NotEventuallyPeriodic(CurvePullError):
    """An orbit failed to close up within the iteration budget."""

    def __init__(self, point, max_iter):
        self.point = point
        self.max_iter = max_iter
        super().__init__(
            f"orbit of {point!r} not eventually periodic within {max_iter} iterations"
        )


class NoSuchMoebius(CurvePullError):
    """The requested double transposition is not realizable on the given points."""


class RootFindingError(CurvePullError):
    """Root finder failed to converge; carries residual diagnostics."""

    def __init__(self, message, residuals=None):
        self.residuals = residuals
        super().__init__(message)


class PrecisionLoss(CurvePullError):
    """A half-plane point was too close to the boundary for reliable evaluation."""


class NoConvergence(CurvePullError):
    """A Newton solve did not converge."""

    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"no convergence after {iterations} iterations (residual {residual})")


class LiftBroken(CurvePullError):
    """Path lifting hit the refinement floor without closing the defect."""


class BranchCollision(CurvePullError):
    """Two tracked preimages approached each other; the path runs too close to a critical value."""


class SnapAmbiguous(CurvePullError):
    """A float multiplier estimate is within tolerance of two admissible exact values."""

    def __init__(self, estimate, candidates):
        self.estimate = estimate
        self.candidates = candidates
        super().__init__(f"multiplier estimate {estimate} ambiguous between {candidates}")
