"""Hartree nonlinearity, time-dependent frequency cutoffs and the explicit phase."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import ConfigurationError, DomainError
from .spectral import (
    Field, GridSpec, RadialMultiplier, apply_symbol, dealias_mask, derivative_wavenumbers,
    smooth_cutoff, smooth_cutoff_derivative, sobolev_norm, xi_abs,
)

CHI_PROFILE = "smoothstep: e^{-1/(2-l)} / (e^{-1/(2-l)} + e^{-1/(l-1)}) on (1, 2)"


@dataclass(frozen=True)
class HartreeParams:
    gamma: float = 0.7
    kappa: float = 1.0
    dim: int = 2
    rho: float = 0.8
    epsilon_pm: float = 0.05

    def __post_init__(self):
        g, n, r = self.gamma, self.dim, self.rho
        if not 0.5 < g < 1:
            raise ConfigurationError(f"gamma must lie in (1/2, 1), got {g}")
        if int(n) != n or n < 2:
            raise ConfigurationError(f"dim must be an integer >= 2, got {n}")
        if not 1 - g / 2 < r < n / 2:
            raise ConfigurationError(f"rho must lie in (1 - gamma/2, n/2) = ({1 - g / 2}, {n / 2}), got {r}")
        if not self.epsilon_pm > 0:
            raise ConfigurationError("epsilon_pm must be positive")
        if not np.isfinite(self.kappa):
            raise ConfigurationError("kappa must be finite")

    @property
    def delta(self) -> float:
        return self.rho - 1 + self.gamma / 2

    def bracket(self, a: float) -> float:
        """[a]_+ with the convention [0]_+ = epsilon."""
        if abs(a) < 1e-12:
            return self.epsilon_pm
        return max(a, 0.0)

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "kappa": self.kappa, "dim": self.dim, "rho": self.rho,
                "epsilon_pm": self.epsilon_pm}


@dataclass(frozen=True)
class LambdaExponents:
    lambda0: float
    lambda1: float
    lam: float

    @classmethod
    def from_params(cls, params: HartreeParams) -> "LambdaExponents":
        def lam_j(j):
            return params.gamma - 0.5 * params.bracket(1 + j + params.gamma - 2 * params.rho)

        l0, l1 = lam_j(0), lam_j(1)
        return cls(l0, l1, min(l1, 2 * l0 - 1))

    def positive(self) -> bool:
        """Integrability gate: lambda1 > 0 and 2 lambda0 - 1 > 0."""
        return self.lambda1 > 0 and 2 * self.lambda0 - 1 > 0


def riesz_constant(gamma: float, n: int) -> float:
    """Fourier symbol constant: F[|x|^-gamma](xi) = C |xi|^(gamma-n), F f = int f e^{-ix.xi}."""
    if not 0 < gamma < n:
        raise DomainError(f"Riesz identity needs 0 < gamma < n, got gamma={gamma}, n={n}")
    return np.pi ** (n / 2) * 2.0 ** (n - gamma) * gamma_fn((n - gamma) / 2) / gamma_fn(gamma / 2)


def chi(ell):
    return smooth_cutoff(ell)


def chi_tilde(ell):
    """(1/2) l chi'(l)."""
    ell = np.asarray(ell, dtype=float)
    return 0.5 * ell * smooth_cutoff_derivative(ell)


@lru_cache(maxsize=32)
def hartree_symbol(grid: GridSpec, gamma: float, kappa: float) -> np.ndarray:
    """kappa C |xi|^(gamma-n) times the 2/3 mask, zero at xi = 0 (FFT order)."""
    n = grid.dim
    C = riesz_constant(gamma, n)
    r = xi_abs(grid)
    safe = np.where(r > 0, r, 1.0)
    sym = kappa * C * safe ** (gamma - n) * dealias_mask(grid)
    sym[(0,) * n] = 0.0
    sym.flags.writeable = False
    return sym


def _check(u: Field, params: HartreeParams):
    if u.grid.dim != params.dim:
        raise ConfigurationError(f"field dimension {u.grid.dim} != params.dim {params.dim}")
    if params.gamma >= params.dim:
        raise DomainError("gamma must be below the dimension")


def density_coefficients(u: Field) -> np.ndarray:
    vals = u.values
    return np.fft.fftn(vals.real ** 2 + vals.imag ** 2)


def hartree_coefficients(u: Field, params: HartreeParams) -> np.ndarray:
    _check(u, params)
    return hartree_symbol(u.grid, params.gamma, params.kappa) * density_coefficients(u)


def hartree_g_complex(u: Field, params: HartreeParams) -> np.ndarray:
    """Inverse transform of the Hartree coefficients before taking the real part."""
    return np.fft.ifftn(hartree_coefficients(u, params))


def hartree_g(u: Field, params: HartreeParams) -> Field:
    """g(u) = kappa |x|^-gamma * |u|^2, computed as kappa C omega^(gamma-n) |u|^2."""
    return Field(u.grid, hartree_g_complex(u, params).real)


def cutoff_symbols(grid: GridSpec, t: float) -> tuple:
    """(chi_L, chi_tilde_L) evaluated on the FFT-ordered lattice."""
    ell = xi_abs(grid) * np.sqrt(t)
    return chi(ell), chi_tilde(ell)


def chi_cutoffs(t: float, grid: GridSpec) -> tuple:
    if not t > 0:
        raise DomainError(f"cutoffs need t > 0, got {t}")
    if not isinstance(grid, GridSpec):
        raise ConfigurationError("grid must be a GridSpec")
    sq = np.sqrt(t)
    chi_L = RadialMultiplier(lambda r: chi(r * sq), 1.0, label="chi_L")
    chi_S = RadialMultiplier(lambda r: 1.0 - chi(r * sq), 0.0, label="chi_S")
    chi_tL = RadialMultiplier(lambda r: chi_tilde(r * sq), 0.0, label="chi_tilde_L")
    return chi_L, chi_S, chi_tL


def g_split(u: Field, t: float, params: HartreeParams) -> tuple:
    chi_L, chi_S, _ = chi_cutoffs(t, u.grid)
    g_hat = hartree_coefficients(u, params)
    out = []
    for m in (chi_L, chi_S):
        out.append(Field(u.grid, np.fft.ifftn(m.symbol(u.grid) * g_hat).real))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class PhaseState:
    """phi(t), s = grad phi and d_t phi for a fixed datum v0."""

    time: float
    phi: Field
    s: tuple
    dt_phi: Field
    datum: Field | None = None
    params: HartreeParams | None = None


def phase_coefficients(g0_hat: np.ndarray, grid: GridSpec, t: float, gamma: float) -> tuple:
    """FFT coefficients of phi and d_t phi from the coefficients of g(v0)."""
    cl, ct = cutoff_symbols(grid, t)
    phi_hat = (-t ** (gamma - 1) / (1 - gamma)) * cl * g0_hat
    dt_hat = t ** (gamma - 2) * (cl - ct / (1 - gamma)) * g0_hat
    return phi_hat, dt_hat


def build_phase(v0: Field, t: float, params: HartreeParams) -> PhaseState:
    if not t > 0:
        raise DomainError(f"phase needs t > 0, got {t}")
    grid = v0.grid
    g0_hat = hartree_coefficients(v0, params)
    phi_hat, dt_hat = phase_coefficients(g0_hat, grid, t, params.gamma)
    phi = Field(grid, np.fft.ifftn(phi_hat).real)
    s = tuple(Field(grid, np.fft.ifftn(1j * k * phi_hat).real) for k in derivative_wavenumbers(grid))
    dt_phi = Field(grid, np.fft.ifftn(dt_hat).real)
    return PhaseState(float(t), phi, s, dt_phi, v0, params)


@dataclass(frozen=True)
class SNormReport:
    time: float
    lhs: tuple
    rhs_scaling: tuple
    ratio: tuple
    exponents: tuple


def s_norm_estimates(state: PhaseState, params: HartreeParams) -> SNormReport:
    """||grad^j s||_inf + ||omega^{n/2} grad^j s|| for j = 0, 1 against t^{lambda_j - 1} ||v0; H^rho||^2."""
    grid = state.phi.grid
    n = grid.dim
    lam = LambdaExponents.from_params(params)
    a0 = sobolev_norm(state.datum, params.rho) if state.datum is not None else np.nan
    ks = derivative_wavenumbers(grid)
    phi_hat = state.phi.coefficients
    lhs = []
    # j = 0: vector s; j = 1: Hessian of phi
    s_sq = sum(c.values ** 2 for c in state.s)
    sup0 = float(np.sqrt(s_sq.max()))
    hess_sq = np.zeros(grid.shape)
    for a in range(n):
        for b in range(n):
            hess_sq += np.fft.ifftn(-ks[a] * ks[b] * phi_hat).real ** 2
    sup1 = float(np.sqrt(hess_sq.max()))
    for j, sup in ((0, sup0), (1, sup1)):
        lhs.append(sup + sobolev_norm(state.phi, n / 2 + j + 1, homogeneous=True))
    t = state.time
    rhs = tuple(t ** (lj - 1) * a0 ** 2 for lj in (lam.lambda0, lam.lambda1))
    ratio = tuple(l / r if r > 0 else (0.0 if l == 0 else np.inf) for l, r in zip(lhs, rhs))
    return SNormReport(t, tuple(lhs), rhs, ratio, (lam.lambda0 - 1, lam.lambda1 - 1))
