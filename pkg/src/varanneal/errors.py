"""Exception types raised across the package."""

import math


class VarAnnealError(Exception):
    """Base class for all package errors."""


class NonHermitianError(VarAnnealError, ValueError):
    """An operator that must be Hermitian is not."""

    def __init__(self, residual: float):
        super().__init__(f"operator is not Hermitian (max |H - H^dag| = {residual:.3e})")
        self.residual = residual


class ConvergenceError(VarAnnealError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class FlatSpectrumError(VarAnnealError, ValueError):
    def __init__(self):
        super().__init__("flat spectrum: all eigenvalues coincide within 1e-9")


class PoleError(VarAnnealError, ValueError):
    """The (theta, phi) chart is singular at sin(theta) = 0."""

    def __init__(self, theta: float, s: float | None = None):
        where = "" if s is None else f" at s = {s:.6g}"
        super().__init__(
            f"coordinate singularity of the (theta, phi) chart{where}: "
            f"sin(theta) = {abs(math.sin(theta)):.3e}"
        )
        self.theta = theta
        self.s = s


class NotStationaryError(VarAnnealError, ValueError):
    def __init__(self, residual: float):
        super().__init__(f"point is not stationary for the variational flow (|X| = {residual:.3e})")
        self.residual = residual


class DefectiveError(VarAnnealError, ValueError):
    def __init__(self, condition: float):
        super().__init__(f"non-diagonalizable within tolerance (eigenvector condition {condition:.3e})")
        self.condition = condition


class PseudoHermiticityError(VarAnnealError, ValueError):
    """The candidate pseudo-metric fails (iK)^dag eta = eta (iK) or positivity."""

    def __init__(self, residual: float, min_eig: float):
        super().__init__(
            f"pseudo-metric check failed (relation residual {residual:.3e}, min eigenvalue {min_eig:.3e})"
        )
        self.residual = residual
        self.min_eig = min_eig
