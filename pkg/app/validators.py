"""
Input validation helpers.

Kept deliberately small and dependency-free (numpy aside) so any module can
import it without risking circular imports.
"""

import numpy as np

from app.errors import GridMismatchError


def all_finite(values) -> bool:
    """Return True if every entry of `values` is a finite number.

    Args:
        values: Scalar or array-like.

    Returns:
        True when no entry is NaN or +/-Inf.
    """
    return bool(np.all(np.isfinite(np.asarray(values))))


def require_same_grid(expected_nodes: int, *fields: np.ndarray) -> None:
    """Raise GridMismatchError unless every field has `expected_nodes` entries.

    Args:
        expected_nodes: Number of interior nodes of the grid.
        fields: Radial fields to check.

    Raises:
        GridMismatchError: If any field has a different shape.
    """
    for field in fields:
        if np.shape(field) != (expected_nodes,):
            raise GridMismatchError(
                f"Field of shape {np.shape(field)} does not match a grid with "
                f"{expected_nodes} nodes"
            )


def is_open_interval(value: float, low: float, high: float) -> bool:
    """Return True if low < value < high."""
    return low < value < high
