"""Exception types shared across the package."""


class FracpinError(Exception):
    pass


class CalibrationError(FracpinError):
    """Potential/profile calibration residual above tolerance."""


class ConvergenceError(FracpinError):
    """An iterative solve failed to converge or landed on the wrong branch."""


class ConstraintViolation(FracpinError):
    """A field violates the pinning constraint where it is required to vanish."""


class SeparationError(FracpinError):
    """Obstacle configuration violates the separation/density requirements."""


class ValidationError(FracpinError):
    """Bad experiment configuration or CSV schema."""
