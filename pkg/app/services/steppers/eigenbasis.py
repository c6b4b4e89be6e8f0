"""Exact linear step exp(-i dt H0) by eigenbasis synthesis."""

import numpy as np

from app.services.grid_spectral import LinearSpectrum
from app.services.steppers import StepperKind


class EigenbasisStepper:
    """Dense unitary S diag(exp(-i eps dt)) S^T in unitary coordinates."""

    kind = StepperKind.EIGENBASIS

    def __init__(self, spectrum: LinearSpectrum, dt: float):
        self.dt = dt
        self._sqrt_weights = spectrum.grid.sqrt_weights
        vectors = spectrum.vectors
        self._matrix = (vectors * np.exp(-1j * spectrum.energies * dt)) @ vectors.T

    def advance(self, psi: np.ndarray) -> np.ndarray:
        return (self._matrix @ (self._sqrt_weights * psi)) / self._sqrt_weights
