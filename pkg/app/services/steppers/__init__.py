"""
Linear-step backend contract.

A LinearStepper advances a radial field by exp(-i dt A) for a fixed dt, where A
is H0 (eigenbasis backend) or H0 - iW with an absorbing potential W >= 0
(absorbing backend). Backends know nothing about the nonlinearity or the
sampling schedule: the Strang splitting lives in app/services/propagator.py.
"""

from enum import Enum
from typing import Protocol, runtime_checkable

import numpy as np


class StepperKind(Enum):
    """Every available linear-step backend."""

    EIGENBASIS = "eigenbasis"  # exact exp(-i dt H0), norm preserving
    ABSORBING = "absorbing"  # exp(-i dt (H0 - iW)), monotone mass loss


@runtime_checkable
class LinearStepper(Protocol):
    """Contract between the propagator and a linear-flow backend.

    The step matrix is built once in the constructor; advance() is a single
    dense matrix-vector product and must not mutate its argument.
    """

    kind: StepperKind
    dt: float

    def advance(self, psi: np.ndarray) -> np.ndarray:
        """Apply one linear step of length dt.

        Args:
            psi: Radial field on the interior nodes.

        Returns:
            New radial field of the same shape.
        """
        ...
