"""Free propagator, M D F M factorization, pseudoconformal inversion and reconstruction of u."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, ResolutionError
from .operators import PhaseState
from .spectral import (
    TWO_PI, Field, GridSpec, boundary_mass_fraction, from_fourier, sobolev_norm, spectral_interpolate,
    to_fourier, xi_abs, xi_squared,
)

# amplitude threshold (relative to the max) defining the numerical support of a field
SUPPORT_TOL = 1e-8
LEAK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PropagatorCache:
    """Multiplier exp(-(i + eta) t |xi|^2 / 2) on a lattice."""

    grid: GridSpec
    time: float
    eta: float = 0.0

    def __post_init__(self):
        if self.eta < 0:
            raise DomainError(f"eta must be non-negative, got {self.eta}")
        if self.eta > 0 and self.time < 0:
            raise DomainError("viscous propagator is a forward semigroup only (t >= 0)")
        m = np.exp(-(1j + self.eta) * self.time * xi_squared(self.grid) / 2)
        m.flags.writeable = False
        object.__setattr__(self, "multiplier", m)

    def apply(self, f: Field) -> Field:
        if f.grid != self.grid:
            raise ConfigurationError("field and propagator grids differ")
        return Field(f.grid, np.fft.ifftn(f.coefficients * self.multiplier))

    __call__ = apply


def free_propagate(f: Field, t: float, eta: float = 0.0) -> Field:
    return PropagatorCache(f.grid, float(t), float(eta)).apply(f)


def tilde_profile(w: Field, t: float) -> Field:
    """Interaction-picture profile U(-t) w."""
    return free_propagate(w, -t, 0.0)


def _dilation_factor(t: float, n: int) -> complex:
    # (i t)^(-n/2), principal branch
    return complex(np.exp(-(n / 2) * np.log(1j * t)))


def _chirp(grid: GridSpec, t: float) -> np.ndarray:
    return np.exp(1j * grid.radius() ** 2 / (2 * t))


def _support_radius(f: Field) -> float:
    a = np.abs(f.values)
    m = a.max()
    if m == 0:
        return 0.0
    return float(f.grid.radius()[a >= SUPPORT_TOL * m].max())


def _spectral_radius(f: Field) -> float:
    a = np.abs(f.coefficients)
    m = a.max()
    if m == 0:
        return 0.0
    return float(xi_abs(f.grid)[a >= SUPPORT_TOL * m].max())


def mdfm_factorize(f: Field, t: float) -> Field:
    """U(t) f computed as M(t) D(t) F M(t) f, with F evaluated at the off-lattice points x/t."""
    if t == 0:
        raise DomainError("factorization needs t != 0")
    g = f.grid
    R = _support_radius(f)
    if R / abs(t) >= g.nyquist:
        raise ResolutionError(f"chirp exp(i x^2/2t) unresolved: |x|/|t| reaches {R / abs(t):.3g} "
                              f">= Nyquist {g.nyquist:.3g}")
    mf = f.values * _chirp(g, t)
    x = g.coordinates()
    h = mf
    # the quadrature sum is periodic in xi with period 2 Nyquist: targets beyond it are aliases
    ok = np.abs(x / t) < g.nyquist
    for a in range(g.dim):
        A = np.exp(-1j * np.outer(x / t, x)) * ok[:, None]
        h = np.moveaxis(np.tensordot(A, h, axes=([1], [a])), 0, a)
    h = h * g.cell_volume / TWO_PI ** (g.dim / 2)
    return Field(g, _chirp(g, t) * _dilation_factor(t, g.dim) * h)


def pseudoconformal_invert(w_tilde: Field, t: float) -> Field:
    """w~_c(1/t) from w~(t): the conjugated continuum Fourier transform (lives on the dual grid)."""
    if not t > 0:
        raise DomainError(f"pseudoconformal inversion needs t > 0, got {t}")
    return to_fourier(w_tilde).conj()


def fh_norm(f: Field, rho: float) -> float:
    """Norm in F H^rho: the H^rho norm of the inverse transform."""
    return sobolev_norm(from_fourier(f), rho)


def _dilate(source: Field, t: float, out: GridSpec) -> np.ndarray:
    """source(x/t) on ``out``; targets outside the source box are set to zero."""
    half = source.grid.box_length / 2
    targets = []
    inside = np.ones(out.shape, dtype=bool)
    for a in range(out.dim):
        y = out.coordinates() / t
        ok = (y >= -half) & (y < half)
        shape = [1] * out.dim
        shape[a] = -1
        inside = inside & ok.reshape(shape)
        targets.append(y)
    vals = spectral_interpolate(source, targets)
    return np.where(inside, vals, 0)


def _check_dilation(source: Field, t: float, out: GridSpec, extra_freq: float = 0.0):
    leak = boundary_mass_fraction(source)
    if leak > LEAK_TOL:
        raise ResolutionError(f"source mass near its box boundary is {leak:.2e} > {LEAK_TOL:.0e}")
    cover = out.box_length / 2 / t
    vals = np.abs(source.values) ** 2
    outside = np.zeros(source.grid.shape, dtype=bool)
    for y in source.grid.mesh():
        outside = outside | (np.abs(y) >= cover * 0.75)
    total = vals.sum()
    if total > 0 and vals[outside].sum() / total > LEAK_TOL:
        raise ResolutionError("rescaled points x/t do not cover the support of the source field")
    freq = local_frequency_bound(source, t) + extra_freq
    if freq >= out.nyquist:
        raise ResolutionError(f"dilated field needs frequency {freq:.3g} >= Nyquist {out.nyquist:.3g}")


def local_frequency_bound(source: Field, t: float) -> float:
    """Upper bound on the local frequency of M(t) D(t) source: chirp |y| plus dilated band k/t."""
    return _support_radius(source) + _spectral_radius(source) / t


def auto_output_grid(source: Field, t: float, extra_freq: float = 0.0, max_points: int = 2048) -> GridSpec:
    """Dilated copy of the source box with the smallest power-of-two resolution that passes the Nyquist check."""
    g = source.grid
    L = g.box_length * t
    need = (local_frequency_bound(source, t) + extra_freq) * L / np.pi
    N = max(16, g.points_per_axis)
    while N <= need * 1.05:
        N *= 2
    if N > max_points:
        raise ResolutionError(f"reconstruction at t={t:g} needs {N} points per axis (> {max_points})")
    return GridSpec(g.dim, N, L)


def pseudoconformal_physical(wc: Field, t: float, out_grid: GridSpec | None = None,
                             phase: Field | None = None) -> Field:
    """w(t) = M(t) D(t) conj(w_c(1/t)), optionally times exp(i D0(t) phase)."""
    if not t > 0:
        raise DomainError("t must be positive")
    extra = 0.0
    if phase is not None:
        from .spectral import gradient
        extra = float(np.sqrt(sum(c.values ** 2 for c in gradient(phase)).max())) / t
    if out_grid is None:
        out_grid = auto_output_grid(wc, t, extra)
    _check_dilation(wc, t, out_grid, extra)
    vals = np.conj(_dilate(wc, t, out_grid))
    if phase is not None:
        vals = vals * np.exp(1j * _dilate(phase, t, out_grid))
    vals = vals * _chirp(out_grid, t) * _dilation_factor(t, out_grid.dim)
    return Field(out_grid, vals)


def reconstruct_u(v: Field, phase: PhaseState, t: float, out_grid: GridSpec | None = None) -> Field:
    """u(t) = exp(i D0(t) phi(1/t)) v_c(t) from v(1/t) and the phase built at 1/t."""
    if not t > 0:
        raise DomainError("t must be positive")
    if phase.phi.grid != v.grid:
        raise ConfigurationError("phase and amplitude grids differ")
    if not np.isclose(phase.time * t, 1.0, rtol=1e-12):
        raise ConfigurationError(f"phase must be built at 1/t = {1 / t:g}, got {phase.time:g}")
    return pseudoconformal_physical(v, t, out_grid, phase.phi)
