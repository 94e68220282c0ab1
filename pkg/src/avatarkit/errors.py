"""Exception hierarchy.

ValidationError covers malformed inputs (CLI exit code 2, HTTP 422); every
other AvatarError is a runtime failure (CLI exit code 3, HTTP 500).
"""


class AvatarError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(AvatarError):
    """Input failed a precondition or schema check."""


class ProjectionIncompleteError(AvatarError):
    """One or more 2D landmarks failed to hit the surface."""

    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(
            f"{len(self.missing)} landmark(s) did not hit the surface: "
            f"{self.missing}"
        )


class DegeneratePartError(AvatarError):
    """A facial part's landmarks are collinear or otherwise unusable."""

    def __init__(self, part, detail=""):
        self.part = part
        msg = f"degenerate facial part '{part}'"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class AnimateIOError(AvatarError):
    """Frame output failed; records the last frame written successfully."""

    def __init__(self, last_completed, cause):
        self.last_completed = last_completed
        super().__init__(
            f"frame output failed after frame {last_completed}: {cause}"
        )
