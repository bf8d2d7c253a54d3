"""Exception types raised across the package.

Every error carries enough context in its message to identify the offending
quantity (an eigenvalue gap, a parameter value, a config key path), so callers
can log it without re-deriving state.
"""


class LiouvdynError(Exception):
    """Base class for all package-specific errors."""


class DegenerateSpectrum(LiouvdynError):
    """Two generator eigenvalues are closer than the resolvable gap."""


class NotDiagonalizable(LiouvdynError):
    """The generator has a defective (non-diagonalizable) eigenvalue."""


class AmbiguousMatching(LiouvdynError):
    """Eigenvector continuity tracking cannot pick a unique permutation."""


class DomainExceeded(LiouvdynError):
    """A protocol was evaluated outside its physical parameter domain."""


class IntegratorFailure(LiouvdynError):
    """The underlying ODE integrator did not converge."""


class UnphysicalState(LiouvdynError):
    """A state violates a physical constraint (uncertainty, Bloch norm)."""


class SingularDenominator(LiouvdynError):
    """A closed-form expression hit a vanishing denominator."""


class NotConverged(LiouvdynError):
    """Iterative refinement exhausted its budget without converging."""


class UnsupportedDimension(LiouvdynError):
    """An operation received an object of a dimension it cannot handle."""


class PositivityViolation(LiouvdynError):
    """A density matrix lost positivity beyond tolerance."""


class ConfigInvalid(LiouvdynError):
    """A run configuration is missing keys or holds out-of-range values."""
