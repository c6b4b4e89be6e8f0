"""
Independent bound-state oracle: Numerov shooting on the radial half-line.

Integrates w'' = (V - E) w outward from w(0) = 0 on [0, r_max] and locates the
k-th Dirichlet level by Sturm node counting followed by Brent root finding on
w(r_max; E). Shares nothing with the finite-difference operator except the
potential.
"""

import logging

import numpy as np
from scipy.optimize import brentq

from app.errors import LabError
from app.services.grid_spectral import Potential, richardson

logger = logging.getLogger(__name__)

_RESCALE = 1e100


class ShootingError(LabError):
    """The shooting bracket could not be established."""

    pass


def mesh_intervals(r_max: float, step: float) -> int:
    """Number of Numerov intervals on [0, r_max] for a requested step."""
    return max(int(round(r_max / step)), 2)


def numerov_solution(potential: Potential, r_max: float, energy: float, step: float):
    """Outward Numerov solution of w'' = (V - E) w with w(0) = 0, w(step) = step.

    Returns:
        (r, w) on the uniform mesh 0, step, ..., r_max. The amplitude is
        rescaled on the fly, so only the shape and sign pattern are meaningful.
    """
    count = mesh_intervals(r_max, step)
    r = np.linspace(0.0, r_max, count + 1)
    h = r[1] - r[0]
    g = (h * h / 12.0) * (potential.evaluate(r) - energy)
    w = np.zeros_like(r)
    w[1] = h
    for i in range(1, count):
        w[i + 1] = (2.0 * (1.0 + 5.0 * g[i]) * w[i] - (1.0 - g[i - 1]) * w[i - 1]) / (1.0 - g[i + 1])
        if abs(w[i + 1]) > _RESCALE:
            w[: i + 2] /= _RESCALE
    return r, w


def count_nodes(potential: Potential, r_max: float, energy: float, step: float) -> int:
    """Sign changes of w(.; E) inside (0, r_max): the number of levels below E."""
    _, w = numerov_solution(potential, r_max, energy, step)
    inner = w[1:-1]
    inner = inner[inner != 0.0]
    return int(np.count_nonzero(np.signbit(inner[1:]) != np.signbit(inner[:-1])))


def _endpoint(potential: Potential, r_max: float, step: float):
    def value(energy: float) -> float:
        _, w = numerov_solution(potential, r_max, energy, step)
        return w[-1] / max(np.max(np.abs(w)), 1e-300)

    return value


def shooting_eigenvalue(
    potential: Potential, r_max: float, level: int, step: float, xtol: float = 1e-13
) -> float:
    """Energy of the `level`-th (0-based) Dirichlet eigenstate.

    Raises:
        ShootingError: If no bracket holding exactly that level is found.
    """
    v = potential.evaluate(np.linspace(0.0, r_max, 2001))
    low = float(np.min(v))
    high = max(1.0, abs(low))
    for _ in range(60):
        if count_nodes(potential, r_max, high, step) > level:
            break
        high *= 2.0
    else:
        raise ShootingError(f"Could not bracket level {level} from above")

    # Shrink until the bracket holds exactly one level.
    for _ in range(200):
        n_low = count_nodes(potential, r_max, low, step)
        n_high = count_nodes(potential, r_max, high, step)
        if n_low == level and n_high == level + 1:
            break
        mid = 0.5 * (low + high)
        if count_nodes(potential, r_max, mid, step) > level:
            high = mid
        else:
            low = mid
    else:
        raise ShootingError(f"Could not isolate level {level}")

    energy = brentq(_endpoint(potential, r_max, step), low, high, xtol=xtol, rtol=4 * np.finfo(float).eps)
    logger.debug(f"Shooting level {level}: E={energy:.12g}")
    return float(energy)


def shooting_eigenvalues(
    potential: Potential, r_max: float, count: int = 2, step: float = 1e-3, refine: bool = True
) -> np.ndarray:
    """The `count` lowest Dirichlet energies on [0, r_max].

    With `refine` the levels are also computed at step / 2 and the O(h**4)
    Numerov error is removed by Richardson extrapolation.
    """
    coarse = np.array([shooting_eigenvalue(potential, r_max, k, step) for k in range(count)])
    if not refine:
        return coarse
    fine = np.array([shooting_eigenvalue(potential, r_max, k, step / 2.0) for k in range(count)])
    steps = [r_max / mesh_intervals(r_max, s) for s in (step, step / 2.0)]
    return np.real(richardson(steps, np.array([coarse, fine]), (4,)))
