"""Exception types shared across the toolkit."""

from __future__ import annotations


class HopkitError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(HopkitError):
    """Raised when data fails an invariant check.

    Attributes:
        issues: list of human-readable issue strings, each naming the
            offending entry (frame index, grasp index, field path).
    """

    def __init__(self, message: str, issues: list[str] | None = None):
        super().__init__(message)
        self.issues = list(issues) if issues else [message]


class SynthesisError(HopkitError):
    """Raised when a synthesizer exhausts its resample budget or is
    given inputs it cannot work with (e.g. no grasp touches the
    rotatable region)."""


class PlanError(HopkitError):
    """Raised when a plan document cannot be parsed or fails validation.

    Attributes:
        path: dotted/indexed location of the offending field, e.g.
            ``keypoints[3].q``, or ``<document>`` for whole-file problems.
    """

    def __init__(self, message: str, path: str = "<document>"):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.reason = message
