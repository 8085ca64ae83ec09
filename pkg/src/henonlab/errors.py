"""Exception types shared across the package."""


class HenonLabError(Exception):
    """Base class for all package errors."""


class Escaped(HenonLabError):
    """An orbit left the overflow guard |coordinate| > 1e150.

    ``index`` is the last iterate that was still finite; ``partial`` may
    carry whatever was computed before the blow-up.
    """

    def __init__(self, index, partial=None):
        super().__init__(f"orbit escaped the overflow guard after step {index}")
        self.index = index
        self.partial = partial


class DomainError(HenonLabError):
    """A parameter lies outside the family's declared disk."""


class SingularJacobian(HenonLabError):
    """Newton's linear system is singular (multiplier 1, near-parabolic)."""


class Diverged(HenonLabError):
    """Newton iteration left the search box."""


class NewtonFailure(HenonLabError):
    """Step refinement exhausted without convergence."""


class NotInBasin(HenonLabError):
    """Orbit did not converge to the sink within budget."""


class NotInPetal(HenonLabError):
    """Orbit left the attracting sector of a semi-parabolic point."""


class NoStrongStableSplitting(HenonLabError):
    """|kappa_1| = |kappa_2| without resonance: no canonical foliation."""


class NoRootInWindow(HenonLabError):
    """No transit parameter in W_n; carries an estimate of a feasible n."""

    def __init__(self, message, n_estimate=None):
        super().__init__(message)
        self.n_estimate = n_estimate


class ForbiddenRegionViolation(HenonLabError):
    """A transit orbit point entered the forbidden region."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class BackwardNewtonFailure(HenonLabError):
    """A backward transit step failed to converge."""


class FrameViolation(HenonLabError):
    """A curve violates the cone condition required by its frame role."""
