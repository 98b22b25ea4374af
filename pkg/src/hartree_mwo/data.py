"""Datum and test-function factories."""
from __future__ import annotations

import numpy as np

from .spectral import Field, GridSpec, dealias_mask, xi_abs


def plane_wave(grid: GridSpec, k) -> Field:
    """e^{i k.x} for an integer lattice index k."""
    dk = grid.frequency_spacing
    return Field.from_function(grid, lambda *x: np.exp(1j * sum(dk * ka * xa for ka, xa in zip(k, x))))


def gaussian(grid: GridSpec, width=1.0, amplitude=1.0, center=None, momentum=None) -> Field:
    center = center or (0.0,) * grid.dim
    momentum = momentum or (0.0,) * grid.dim

    def f(*x):
        r2 = sum((xa - c) ** 2 for xa, c in zip(x, center))
        return amplitude * np.exp(-r2 / (2 * width ** 2) + 1j * sum(p * xa for p, xa in zip(momentum, x)))

    return Field.from_function(grid, f)


def _band_mask(grid, band):
    r = xi_abs(grid)
    lo, hi = band
    return (r >= lo) & (r <= hi) & dealias_mask(grid)


def random_band_limited(grid: GridSpec, rng, band=None, envelope=None, real=False) -> Field:
    """Random field with Fourier support in the annulus ``band`` (defaults to the 2/3 band).

    ``envelope`` is an optional physical-space width; the product is re-projected on the band.
    """
    if band is None:
        band = (0.0, grid.points_per_axis / 3.0 * grid.frequency_spacing)
    c = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    mask = _band_mask(grid, band)
    vals = np.fft.ifftn(np.where(mask, c, 0))
    if envelope is not None:
        vals = vals * np.exp(-grid.radius() ** 2 / (2 * envelope ** 2))
        vals = np.fft.ifftn(np.where(dealias_mask(grid), np.fft.fftn(vals), 0))
    if real:
        vals = vals.real
    scale = np.abs(vals).max()
    return Field(grid, vals / scale if scale > 0 else vals)


def power_law_datum(grid: GridSpec, beta: float, eps: float = 0.5, seed: int = 0) -> Field:
    """1 + eps w with |w^(xi)| ~ |xi|^(-beta - n/2): w sits at the edge of H^beta.

    Used to exercise estimates whose exponents depend on the datum regularity.
    """
    rng = np.random.default_rng(seed)
    r = xi_abs(grid)
    mask = (r > 0) & dealias_mask(grid)
    phase = np.exp(2j * np.pi * rng.random(grid.shape))
    amp = np.where(mask, np.where(r > 0, r, 1.0) ** (-beta - grid.dim / 2), 0.0)
    w = np.fft.ifftn(amp * phase)
    w = w / np.abs(w).max()
    return Field(grid, 1.0 + eps * w)
