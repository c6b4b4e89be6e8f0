"""
Shared exception base.

Kept deliberately small and dependency-free so any module can import it
without risking circular imports. Concrete errors live next to the code that
raises them and subclass LabError so the CLI can map them to exit codes.
"""

# Exit codes returned by `python -m app.main`. 2 is reserved for config
# validation failures, which surface as pydantic ValidationError.
EXIT_GENERIC = 1
EXIT_CONFIG = 2
EXIT_DESIGN_FAILED = 3
EXIT_BLOW_UP = 4
EXIT_RESOLUTION = 5


class LabError(Exception):
    """Base for every domain failure. `user_message` is safe to print."""

    exit_code = EXIT_GENERIC

    def __init__(self, user_message: str):
        """Store a user-facing message alongside the exception."""
        super().__init__(user_message)
        self.user_message = user_message


class GridMismatchError(LabError, ValueError):
    """A field does not live on the grid it is combined with."""

    pass
