"""Exception types raised by the solvers."""


class KronEnergyError(Exception):
    """Base class for solver failures."""


class RiccatiError(KronEnergyError):
    """No stabilizing Riccati solution exists (gamma too small / eta infeasible)."""


class ResonanceError(KronEnergyError):
    """A sum of closed-loop eigenvalues is (numerically) zero."""


class AccuracyError(KronEnergyError):
    """A linear solve finished but missed its residual tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SizeGuardError(KronEnergyError):
    """A dense oracle object would exceed the element-count guard."""
