"""Small field factories shared by the tests."""
import numpy as np

from hartree_mwo.spectral import Field, GridSpec, dealias_mask
from hartree_mwo.data import gaussian  # noqa: F401


def mode(grid: GridSpec, k) -> Field:
    """Plane wave e^{i k . x} for integer lattice index k."""
    dk = grid.frequency_spacing
    return Field.from_function(grid, lambda *x: np.exp(1j * sum(dk * ka * xa for ka, xa in zip(k, x))))


def random_band_limited(grid: GridSpec, rng, kmax_fraction=0.25, mean_zero=False) -> Field:
    """Random smooth field with modes |k_a| < kmax_fraction * N."""
    N = grid.points_per_axis
    c = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    k = np.fft.fftfreq(N, d=1.0 / N)
    keep = np.ones(grid.shape, dtype=bool)
    for a in range(grid.dim):
        shape = [1] * grid.dim
        shape[a] = -1
        keep = keep & (np.abs(k) < kmax_fraction * N).reshape(shape)
    c = np.where(keep & dealias_mask(grid), c, 0)
    if mean_zero:
        c[(0,) * grid.dim] = 0
    return Field(grid, np.fft.ifftn(c) * N)


def power_law_datum(grid, beta, seed=0):
    from hartree_mwo.data import power_law_datum as _p
    return _p(grid, beta, seed=seed)


# acceptance results, printed once more in the terminal summary
CRITERIA = {}


def record(number: int, name: str, ok: bool, detail: str) -> bool:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    CRITERIA[number] = line
    print(line)
    return ok
