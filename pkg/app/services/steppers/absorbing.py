"""Linear step with a complex absorbing potential: exp(-i dt (H0 - iW))."""

import logging

import numpy as np
from scipy.linalg import expm

from app.services.grid_spectral import LinearSpectrum
from app.services.steppers import StepperKind

logger = logging.getLogger(__name__)


class AbsorbingStepper:
    """Dense matrix exponential of the non-Hermitian generator.

    W >= 0 makes the step a contraction, so mass decreases monotonically.
    """

    kind = StepperKind.ABSORBING

    def __init__(self, spectrum: LinearSpectrum, dt: float, absorber: np.ndarray):
        if np.any(absorber < 0):
            raise ValueError("Absorbing potential must be nonnegative")
        self.dt = dt
        self._sqrt_weights = spectrum.grid.sqrt_weights
        generator = spectrum.hamiltonian.to_dense() - 1j * np.diag(absorber)
        self._matrix = expm(-1j * dt * generator)
        logger.debug(f"Absorbing step matrix built: N={absorber.size}, max W={absorber.max():.3g}")

    def advance(self, psi: np.ndarray) -> np.ndarray:
        return (self._matrix @ (self._sqrt_weights * psi)) / self._sqrt_weights
