"""Grid constants and field builders shared by the test modules."""

import numpy as np

TEST_R_MAX = 30.0
TEST_NODES = 749
TEST_EXTENSION = 8


def random_field(nodes: int, seed: int, r_max: float = TEST_R_MAX) -> np.ndarray:
    """Smooth complex test field, localized near the origin."""
    rng = np.random.Generator(np.random.PCG64(seed))
    dr = r_max / (nodes + 1)
    r = dr * np.arange(1, nodes + 1)
    field = np.zeros(nodes, dtype=complex)
    for _ in range(4):
        center, width = rng.uniform(0.0, 6.0), rng.uniform(0.7, 2.5)
        amplitude = rng.normal() + 1j * rng.normal()
        field += amplitude * np.exp(-(((r - center) / width) ** 2))
    return field
