"""
Linear-step backend factory.

Resolves a StepperKind to a LinearStepper with lazy imports, so the eigenbasis
path never imports the matrix-exponential machinery.
"""

# standard library
import logging
from typing import Optional

import numpy as np

# project imports
from app.services.grid_spectral import LinearSpectrum
from app.services.steppers import LinearStepper, StepperKind

logger = logging.getLogger(__name__)


def create_stepper(
    kind: StepperKind,
    spectrum: LinearSpectrum,
    dt: float,
    absorber: Optional[np.ndarray] = None,
) -> LinearStepper:
    """Instantiate a linear-step backend.

    Args:
        kind: Which backend.
        spectrum: Working-grid spectrum (carries the grid and H0).
        dt: Step length; negative values step backward.
        absorber: W(r) on the nodes, required for ABSORBING.

    Returns:
        The backend with its step matrix built.

    Raises:
        ValueError: If the kind is unknown or the absorber is missing.
    """
    if kind == StepperKind.EIGENBASIS:
        from app.services.steppers.eigenbasis import EigenbasisStepper

        logger.debug(f"Linear step: eigenbasis, dt={dt:g}")
        return EigenbasisStepper(spectrum, dt)
    if kind == StepperKind.ABSORBING:
        if absorber is None:
            raise ValueError("The absorbing stepper needs an absorber field")
        from app.services.steppers.absorbing import AbsorbingStepper

        logger.debug(f"Linear step: absorbing, dt={dt:g}")
        return AbsorbingStepper(spectrum, dt, absorber)
    raise ValueError(f"Unknown stepper kind: {kind}")
