"""Exception types shared across the package."""


class ShapeServoError(Exception):
    """Base class for all package-specific errors."""


class KinematicsDomainError(ShapeServoError, ValueError):
    """State outside the validity region of a kinematic mapping."""


class BehindCameraError(ShapeServoError, ValueError):
    """Point at or behind the camera plane (camera-frame z <= 0)."""


class VisibilityError(ShapeServoError, ValueError):
    """A section tip is not visible to the camera."""

    def __init__(self, section: int, message: str = ""):
        self.section = section
        super().__init__(message or f"section {section} not visible")


class DepthTooSmallError(ShapeServoError, ValueError):
    """Feature depth below the minimum allowed for Jacobian evaluation."""


class EstimationError(ShapeServoError, ValueError):
    """Arc fit failed for an observed tip point."""

    def __init__(self, section: int, message: str):
        self.section = section
        self.message = message
        super().__init__(f"section {section}: {message}" if section else message)


class UnreachableTargetError(ShapeServoError, ValueError):
    """No admissible two-arc chain reaches the requested pose."""

    def __init__(self, message: str, residual: float = float("inf")):
        self.residual = residual
        super().__init__(message)


class InfeasibleReferenceError(ShapeServoError, ValueError):
    """Reference optimization found no obstacle-free admissible candidate."""


class EpisodeTooShortError(ShapeServoError, ValueError):
    """Trajectory log too short for the requested metric."""


class ControlStepError(ShapeServoError, RuntimeError):
    """Non-finite values encountered while computing a cable command."""


class SingularityWarning(UserWarning):
    """Configuration close to the straight-pose singularity (kappa ~ 0)."""
