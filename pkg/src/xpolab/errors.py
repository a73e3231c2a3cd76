from __future__ import annotations


class XPOLabError(Exception):
    """Base class for all library errors."""


class ValidationError(XPOLabError, ValueError):
    """An input violates a structural invariant.

    ``path`` locates the offending field (``"next[3]"``, ``"rho"``...) when
    the error comes from a loader or constructor.
    """

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class InadmissibleTrajectoryError(ValidationError):
    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(message, path=f"steps[{step}]")


class EnumerationCapError(XPOLabError):
    """Exhaustive enumeration would exceed the configured cap."""


class MinimizerError(XPOLabError):
    """The policy-class minimiser could not produce a finite objective."""

    def __init__(self, message: str, iteration: int | None = None):
        self.iteration = iteration
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)
