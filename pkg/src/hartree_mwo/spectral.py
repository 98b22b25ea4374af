"""Periodic grids, continuum-normalized Fourier transforms, multipliers and norms.

Physical samples are stored in centered order: index j on an axis sits at
x_j = (j - N/2) * dx.  Raw FFT coefficients (``Field.coefficients``) use numpy's
FFT ordering, and every frequency array in this module uses that ordering as
well, so Fourier multipliers never need shifting.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property, lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class GridSpec:
    """Periodic box [-L/2, L/2)^n sampled with N points per axis."""

    dim: int = 2
    points_per_axis: int = 128
    box_length: float = 16.0 * np.pi

    def __post_init__(self):
        n, N, L = self.dim, self.points_per_axis, self.box_length
        if int(n) != n or n < 2:
            raise ConfigurationError(f"dim must be an integer >= 2, got {n}")
        if int(N) != N or N < 16 or (int(N) & (int(N) - 1)):
            raise ConfigurationError(f"points_per_axis must be a power of two >= 16, got {N}")
        if not np.isfinite(L) or L <= 0:
            raise ConfigurationError(f"box_length must be positive, got {L}")
        object.__setattr__(self, "dim", int(n))
        object.__setattr__(self, "points_per_axis", int(N))
        object.__setattr__(self, "box_length", float(L))

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis ** self.dim

    @property
    def spacing(self) -> float:
        return self.box_length / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def frequency_spacing(self) -> float:
        return TWO_PI / self.box_length

    @property
    def nyquist(self) -> float:
        return np.pi / self.spacing

    def dual(self) -> "GridSpec":
        """Grid on which continuum Fourier transforms of fields on this grid live."""
        return GridSpec(self.dim, self.points_per_axis, TWO_PI * self.points_per_axis / self.box_length)

    def refined(self, factor: int = 2) -> "GridSpec":
        """Same box, ``factor`` times more points."""
        return GridSpec(self.dim, self.points_per_axis * factor, self.box_length)

    def enlarged(self, factor: int = 2) -> "GridSpec":
        """Same spacing, ``factor`` times longer box."""
        return GridSpec(self.dim, self.points_per_axis * factor, self.box_length * factor)

    def coordinates(self) -> np.ndarray:
        """1D sample positions (centered order)."""
        N = self.points_per_axis
        return (np.arange(N) - N // 2) * self.spacing

    def mesh(self) -> list:
        """Broadcastable coordinate arrays, one per axis."""
        return _mesh(self)

    def radius(self) -> np.ndarray:
        return _radius(self)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "points_per_axis": self.points_per_axis, "box_length": self.box_length}


def _broadcast(vec, axis, dim):
    shape = [1] * dim
    shape[axis] = -1
    out = vec.reshape(shape)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=64)
def _mesh(grid: GridSpec) -> list:
    x = grid.coordinates()
    return [_broadcast(x.copy(), a, grid.dim) for a in range(grid.dim)]


@lru_cache(maxsize=64)
def _radius(grid: GridSpec) -> np.ndarray:
    r2 = sum(x * x for x in _mesh(grid))
    r = np.sqrt(np.broadcast_to(r2, grid.shape).copy())
    r.flags.writeable = False
    return r


@lru_cache(maxsize=64)
def wavenumbers(grid: GridSpec) -> list:
    """Per-axis angular frequencies in FFT order, broadcastable."""
    xi = TWO_PI * np.fft.fftfreq(grid.points_per_axis, d=grid.spacing)
    return [_broadcast(xi.copy(), a, grid.dim) for a in range(grid.dim)]


@lru_cache(maxsize=64)
def xi_squared(grid: GridSpec) -> np.ndarray:
    out = np.broadcast_to(sum(k * k for k in wavenumbers(grid)), grid.shape).copy()
    out.flags.writeable = False
    return out


@lru_cache(maxsize=64)
def xi_abs(grid: GridSpec) -> np.ndarray:
    out = np.sqrt(xi_squared(grid))
    out.flags.writeable = False
    return out


@lru_cache(maxsize=64)
def _derivative_wavenumbers(grid: GridSpec) -> list:
    # Nyquist column dropped so odd derivatives of real fields stay real.
    N = grid.points_per_axis
    xi = TWO_PI * np.fft.fftfreq(N, d=grid.spacing)
    xi[N // 2] = 0.0
    return [_broadcast(xi.copy(), a, grid.dim) for a in range(grid.dim)]


def derivative_wavenumbers(grid: GridSpec) -> list:
    return _derivative_wavenumbers(grid)


@lru_cache(maxsize=64)
def dealias_mask(grid: GridSpec) -> np.ndarray:
    """2/3-rule mask in FFT order: keep integer modes with |k_a| < N/3 on every axis."""
    N = grid.points_per_axis
    k = np.fft.fftfreq(N, d=1.0 / N)
    keep = np.abs(k) < N / 3.0
    mask = np.ones(grid.shape, dtype=bool)
    for a in range(grid.dim):
        mask = mask & _broadcast(keep, a, grid.dim)
    mask.flags.writeable = False
    return mask


@dataclass(frozen=True, eq=False)
class Field:
    """Immutable samples of a function on a periodic grid."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.shape != self.grid.shape:
            raise ConfigurationError(f"values shape {arr.shape} does not match grid shape {self.grid.shape}")
        dtype = np.float64 if np.isrealobj(arr) else np.complex128
        arr = np.array(arr, dtype=dtype, copy=True)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    # constructors
    @classmethod
    def zeros(cls, grid: GridSpec, complex_valued: bool = True) -> "Field":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128 if complex_valued else np.float64))

    @classmethod
    def from_function(cls, grid: GridSpec, func: Callable) -> "Field":
        """Sample ``func(x_1, ..., x_n)`` with broadcastable coordinate arrays."""
        vals = np.broadcast_to(func(*grid.mesh()), grid.shape)
        return cls(grid, vals)

    @classmethod
    def from_coefficients(cls, grid: GridSpec, coeffs: np.ndarray, real: bool = False) -> "Field":
        vals = np.fft.ifftn(coeffs)
        return cls(grid, vals.real if real else vals)

    @cached_property
    def coefficients(self) -> np.ndarray:
        """Raw FFT coefficients, FFT order."""
        c = np.fft.fftn(self.values)
        c.flags.writeable = False
        return c

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values)

    # arithmetic
    def _other(self, other):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise ConfigurationError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return Field(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.grid, self.values / self._other(other))

    def __neg__(self):
        return Field(self.grid, -self.values)

    def conj(self) -> "Field":
        return Field(self.grid, np.conj(self.values))

    def real(self) -> "Field":
        return Field(self.grid, self.values.real)

    def imag(self) -> "Field":
        return Field(self.grid, self.values.imag)

    def abs2(self) -> "Field":
        return Field(self.grid, self.values.real ** 2 + self.values.imag ** 2)

    def norm(self) -> float:
        return lebesgue_norm(self, 2)

    def __repr__(self):
        return f"Field(grid={self.grid}, dtype={self.values.dtype})"


def _check_field(f):
    if not isinstance(f, Field):
        raise ConfigurationError("expected a Field")


def to_fourier(f: Field) -> Field:
    """Continuum-normalized Fourier transform (2pi)^{-n/2} int f e^{-ix.xi} dx.

    The result is sampled on ``f.grid.dual()`` (centered frequency order).
    """
    _check_field(f)
    g = f.grid
    c = np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(f.values)))
    return Field(g.dual(), c * (g.cell_volume / TWO_PI ** (g.dim / 2)))


def from_fourier(F: Field) -> Field:
    """Inverse of ``to_fourier``; returns a field on ``F.grid.dual()``."""
    _check_field(F)
    g = F.grid
    vals = np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(F.values)))
    return Field(g.dual(), vals * (g.size * g.cell_volume / TWO_PI ** (g.dim / 2)))


@dataclass(frozen=True)
class RadialMultiplier:
    """Fourier multiplier m(|xi|); the value at xi = 0 is set explicitly."""

    profile: Callable[[np.ndarray], np.ndarray]
    zero_mode_value: complex = 0.0
    label: str = dc_field(default="", compare=False)

    def symbol(self, grid: GridSpec) -> np.ndarray:
        r = xi_abs(grid)
        safe = np.where(r > 0, r, 1.0)
        out = np.asarray(self.profile(safe))
        out = np.array(np.broadcast_to(out, grid.shape))
        if np.iscomplexobj(out) or np.iscomplexobj(self.zero_mode_value):
            out = out.astype(np.complex128)
        out[(0,) * grid.dim] = self.zero_mode_value
        return out

    def apply(self, f: Field) -> Field:
        _check_field(f)
        return apply_symbol(f, self.symbol(f.grid))

    __call__ = apply

    def compose(self, other: "RadialMultiplier") -> "RadialMultiplier":
        p1, p2 = self.profile, other.profile
        return RadialMultiplier(lambda r: p1(r) * p2(r), self.zero_mode_value * other.zero_mode_value,
                                label=f"{self.label}*{other.label}")


def apply_symbol(f: Field, symbol: np.ndarray) -> Field:
    """Multiply FFT coefficients by ``symbol`` (FFT order); real in, real symbol -> real out."""
    vals = np.fft.ifftn(f.coefficients * symbol)
    if f.is_real and not np.iscomplexobj(symbol):
        vals = vals.real
    return Field(f.grid, vals)


def omega_multiplier(sigma: float, zero_mode_value=None) -> RadialMultiplier:
    """|xi|^sigma.  Zero mode is 0 unless sigma == 0 (then the identity)."""
    if zero_mode_value is None:
        zero_mode_value = 1.0 if sigma == 0 else 0.0
    s = float(sigma)
    return RadialMultiplier(lambda r: r ** s, zero_mode_value, label=f"omega^{s:g}")


def bracket_multiplier(sigma: float) -> RadialMultiplier:
    """<xi>^sigma = (1 + |xi|^2)^(sigma/2)."""
    s = float(sigma)
    return RadialMultiplier(lambda r: (1.0 + r * r) ** (s / 2), 1.0, label=f"<omega>^{s:g}")


def apply_omega_power(f: Field, sigma: float, zero_mode_value=None) -> Field:
    return omega_multiplier(sigma, zero_mode_value).apply(f)


def _omega_weight_sq(grid, sigma, homogeneous):
    r2 = xi_squared(grid)
    if not homogeneous:
        return (1.0 + r2) ** sigma
    if sigma == 0:
        return np.ones(grid.shape)
    safe = np.where(r2 > 0, r2, 1.0)
    w = safe ** sigma
    w[(0,) * grid.dim] = 0.0
    return w


def sobolev_norm(f: Field, sigma: float, homogeneous: bool = False) -> float:
    """||<omega>^sigma f|| (or ||omega^sigma f||), evaluated from FFT coefficients."""
    _check_field(f)
    g = f.grid
    c = f.coefficients
    w = _omega_weight_sq(g, sigma, homogeneous)
    total = np.sum(w * (c.real ** 2 + c.imag ** 2))
    return float(np.sqrt(total * g.cell_volume / g.size))


def lebesgue_norm(f: Field, r: float) -> float:
    _check_field(f)
    if not r >= 1:
        raise DomainError(f"Lebesgue exponent must be >= 1, got {r}")
    a = np.abs(f.values)
    if np.isinf(r):
        return float(a.max())
    if r == 2:
        return float(np.sqrt(np.sum(a * a) * f.grid.cell_volume))
    return float((np.sum(a ** r) * f.grid.cell_volume) ** (1.0 / r))


def gradient(f: Field) -> tuple:
    _check_field(f)
    c = f.coefficients
    out = []
    for k in derivative_wavenumbers(f.grid):
        vals = np.fft.ifftn(1j * k * c)
        out.append(Field(f.grid, vals.real if f.is_real else vals))
    return tuple(out)


def divergence(vec: Sequence[Field]) -> Field:
    if len(vec) == 0:
        raise ConfigurationError("empty vector field")
    grid = vec[0].grid
    if len(vec) != grid.dim:
        raise ConfigurationError("vector field must have one component per axis")
    total = np.zeros(grid.shape, dtype=np.complex128)
    for comp, k in zip(vec, derivative_wavenumbers(grid)):
        if comp.grid != grid:
            raise ConfigurationError("components on different grids")
        total += 1j * k * comp.coefficients
    vals = np.fft.ifftn(total)
    return Field(grid, vals.real if all(c.is_real for c in vec) else vals)


def dealias(f: Field) -> Field:
    return apply_symbol(f, dealias_mask(f.grid).astype(float))


def is_band_limited(f: Field, tol: float = 1e-12) -> bool:
    """True when the modes removed by the 2/3 rule carry at most ``tol`` of the energy."""
    c = f.coefficients
    e = np.abs(c) ** 2
    total = e.sum()
    return bool(total == 0 or e[~dealias_mask(f.grid)].sum() <= tol * total)


def boundary_mass_fraction(f: Field, width_fraction: float = 0.125) -> float:
    """Share of ||f||^2 within ``width_fraction * L`` of the box boundary."""
    g = f.grid
    edge = g.box_length / 2 - width_fraction * g.box_length
    near = np.zeros(g.shape, dtype=bool)
    for x in g.mesh():
        near = near | (np.abs(x) > edge)
    m = np.abs(f.values) ** 2
    total = m.sum()
    return float(m[near].sum() / total) if total > 0 else 0.0


def _interp_matrix(grid: GridSpec, targets: np.ndarray) -> np.ndarray:
    N = grid.points_per_axis
    xi = TWO_PI * np.fft.fftfreq(N, d=grid.spacing)
    shifted = np.asarray(targets, dtype=float)[:, None] + grid.box_length / 2
    E = np.exp(1j * shifted * xi[None, :])
    E[:, N // 2] = np.cos(shifted[:, 0] * xi[N // 2])
    return E / N


def spectral_interpolate(f: Field, targets: Sequence[np.ndarray]) -> np.ndarray:
    """Trigonometric interpolant of ``f`` on the tensor grid ``targets[0] x targets[1] x ...``."""
    _check_field(f)
    if len(targets) != f.grid.dim:
        raise ConfigurationError("need one target coordinate array per axis")
    out = f.coefficients
    for a, t in enumerate(targets):
        E = _interp_matrix(f.grid, t)
        out = np.moveaxis(np.tensordot(E, out, axes=([1], [a])), 0, a)
    return out.real if f.is_real else out


# Smooth cutoff and dyadic machinery ------------------------------------------

def _smooth_exp(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def _smooth_exp_deriv(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos]) / x[pos] ** 2
    return out


def smooth_cutoff(r):
    """C^infinity, non-increasing, 1 on [0, 1], 0 on [2, inf)."""
    r = np.asarray(r, dtype=float)
    a = _smooth_exp(2.0 - r)
    b = _smooth_exp(r - 1.0)
    return a / (a + b)


def smooth_cutoff_derivative(r):
    r = np.asarray(r, dtype=float)
    a = _smooth_exp(2.0 - r)
    b = _smooth_exp(r - 1.0)
    da = -_smooth_exp_deriv(2.0 - r)
    db = _smooth_exp_deriv(r - 1.0)
    return (da * b - a * db) / (a + b) ** 2


def dyadic_range(grid: GridSpec) -> tuple:
    """(j_low, j_high): S_{j_low} keeps only the zero mode, S_{j_high} is the identity."""
    xi_min = grid.frequency_spacing
    xi_max = float(np.sqrt(grid.dim)) * grid.points_per_axis / 2 * grid.frequency_spacing
    j_low = int(np.floor(np.log2(xi_min))) - 1
    j_high = int(np.ceil(np.log2(xi_max)))
    return j_low, j_high


def littlewood_paley_symbol(grid: GridSpec, j: int) -> np.ndarray:
    """phi_j(xi) = psi0(2^-j xi) - psi0(2^{-j+1} xi)."""
    r = xi_abs(grid)
    return smooth_cutoff(r * 2.0 ** (-j)) - smooth_cutoff(r * 2.0 ** (1 - j))


def smoothing_symbol(grid: GridSpec, j: int) -> np.ndarray:
    return smooth_cutoff(xi_abs(grid) * 2.0 ** (-j))


@dataclass(frozen=True, eq=False)
class DyadicDecomposition:
    """Littlewood-Paley blocks u_j and smoothings S_j(u) of a field on a grid."""

    field: Field
    nu: int
    low_index: int
    high_index: int
    blocks: dict
    smoothing_ops: dict

    @property
    def indices(self) -> list:
        return sorted(self.blocks)

    def reconstruct(self) -> Field:
        total = self.smoothing_ops[self.low_index].values.copy()
        for j in self.indices:
            total = total + self.blocks[j].values
        return Field(self.field.grid, total)

    def tilde_block(self, j: int, nu: int | None = None) -> Field:
        """Sum of blocks u_k with |k - j| <= nu."""
        nu = self.nu if nu is None else nu
        total = np.zeros(self.field.grid.shape, dtype=self.field.values.dtype)
        for k in range(j - nu, j + nu + 1):
            if k in self.blocks:
                total = total + self.blocks[k].values
        return Field(self.field.grid, total)

    @property
    def tilde_blocks(self) -> dict:
        return {j: self.tilde_block(j) for j in self.indices}

    def shell_split(self) -> tuple:
        """(included, excluded) shells for Besov sums: drop shells below the box
        scale and shells lying wholly above the dealiasing cutoff."""
        usable = set(usable_shells(self.field.grid))
        inc = [j for j in self.indices if j in usable]
        return inc, [j for j in self.indices if j not in usable]

    def besov_norm(self, sigma: float, r: float = 2, q: float = 2) -> float:
        """Homogeneous B^sigma_{r,q} norm over the included shells."""
        inc, _ = self.shell_split()
        terms = np.array([2.0 ** (j * sigma) * lebesgue_norm(self.blocks[j], r) for j in inc])
        if terms.size == 0:
            return 0.0
        if np.isinf(q):
            return float(terms.max())
        return float(np.sum(terms ** q) ** (1.0 / q))


def dyadic_decompose(f: Field, nu: int = 1) -> DyadicDecomposition:
    _check_field(f)
    if int(nu) != nu or nu < 1:
        raise ConfigurationError("nu must be an integer >= 1")
    g = f.grid
    j_low, j_high = dyadic_range(g)
    if len(usable_shells(g)) < 4:
        raise ConfigurationError("grid resolves fewer than 4 dyadic shells")
    blocks = {j: apply_symbol(f, littlewood_paley_symbol(g, j)) for j in range(j_low + 1, j_high + 1)}
    smooth = {j: apply_symbol(f, smoothing_symbol(g, j)) for j in range(j_low, j_high + 1)}
    return DyadicDecomposition(f, int(nu), j_low, j_high, blocks, smooth)


def usable_shells(grid: GridSpec) -> list:
    """Shells whose lower edge lies between the box scale and the dealiasing cutoff."""
    j_low, j_high = dyadic_range(grid)
    k_cut = (grid.points_per_axis / 3.0) * grid.frequency_spacing
    return [j for j in range(j_low + 1, j_high + 1)
            if grid.frequency_spacing <= 2.0 ** (j - 1) < k_cut]
