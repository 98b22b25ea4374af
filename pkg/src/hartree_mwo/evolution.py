"""Integration of the linearized amplitude equation, Picard iteration and the full construction."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field as dc_field, replace

import numpy as np

from .errors import ConfigurationError, DomainError, IntegrationError, NonContractionError
from .operators import (
    HartreeParams, PhaseState, build_phase, cutoff_symbols, hartree_coefficients, hartree_symbol,
)
from .spectral import (
    Field, GridSpec, boundary_mass_fraction, dealias, derivative_wavenumbers,
    from_fourier, sobolev_norm, to_fourier, xi_squared,
)
from .transforms import fh_norm, pseudoconformal_invert, reconstruct_u

STEP_TOL = 1e-9        # relative L2 drift allowed per grid interval before substepping
MAX_SUBSTEPS = 64


@dataclass(frozen=True)
class SolverConfig:
    params: HartreeParams = dc_field(default_factory=HartreeParams)
    grid: GridSpec = dc_field(default_factory=GridSpec)
    t_min: float = 1e-3
    T: float = 1.0
    steps_per_decade: int = 100
    eta: float = 0.0
    picard_tol: float = 1e-8
    picard_max: int = 30
    dealias: bool = True

    def __post_init__(self):
        if not self.t_min > 0:
            raise ConfigurationError("t_min must be positive")
        if not self.T > self.t_min:
            raise ConfigurationError("T must exceed t_min")
        if int(self.steps_per_decade) != self.steps_per_decade or self.steps_per_decade < 1:
            raise ConfigurationError("steps_per_decade must be a positive integer")
        if self.eta < 0:
            raise ConfigurationError("eta must be non-negative")
        if not self.picard_tol > 0 or self.picard_max < 1:
            raise ConfigurationError("picard_tol must be positive and picard_max >= 1")
        if self.params.dim != self.grid.dim:
            raise ConfigurationError("params.dim and grid.dim differ")

    def time_grid(self) -> np.ndarray:
        """Geometric grid t_min ... T with steps_per_decade points per decade."""
        n = max(2, math.ceil(self.steps_per_decade * math.log10(self.T / self.t_min)))
        t = self.t_min * (self.T / self.t_min) ** (np.arange(n + 1) / n)
        t[-1] = self.T
        return t

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("params", "grid")}
        d["params"] = self.params.to_dict()
        d["grid"] = self.grid.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        d = dict(d)
        params = HartreeParams(**d.pop("params", {}))
        grid = GridSpec(**d.pop("grid", {}))
        return cls(params=params, grid=grid, **d)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Snapshots v(t_k) stacked along the first axis."""

    grid: GridSpec
    times: np.ndarray
    values: np.ndarray
    datum: Field

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        v = np.asarray(self.values)
        if v.shape != (len(t),) + self.grid.shape:
            raise ConfigurationError("snapshot count or shape does not match the time grid")
        if np.any(np.diff(t) <= 0):
            raise ConfigurationError("times must be increasing")
        t.flags.writeable = False
        object.__setattr__(self, "times", t)
        if v.flags.writeable:
            v = v.copy()
            v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.times)

    def field(self, k: int) -> Field:
        return Field(self.grid, self.values[k])

    @property
    def fields(self) -> list:
        return [self.field(k) for k in range(len(self))]

    def norms(self, sigma: float = 0.0, homogeneous: bool = False) -> np.ndarray:
        return stack_sobolev(self.values, self.grid, sigma, homogeneous)

    def sup_norm(self, sigma: float = 0.0) -> float:
        return float(self.norms(sigma).max())

    def minus(self, other: "Trajectory") -> np.ndarray:
        if other.grid != self.grid or not np.array_equal(other.times, self.times):
            raise ConfigurationError("trajectories live on different grids")
        return self.values - other.values


def stack_sobolev(values: np.ndarray, grid: GridSpec, sigma: float, homogeneous: bool = False) -> np.ndarray:
    """H^sigma norms of each snapshot in a stacked array."""
    out = np.empty(values.shape[0])
    r2 = xi_squared(grid)
    if homogeneous:
        safe = np.where(r2 > 0, r2, 1.0)
        w = safe ** sigma if sigma != 0 else np.ones(grid.shape)
        if sigma != 0:
            w[(0,) * grid.dim] = 0.0
    else:
        w = (1.0 + r2) ** sigma
    scale = grid.cell_volume / grid.size
    for k in range(values.shape[0]):
        c = np.fft.fftn(values[k])
        out[k] = np.sqrt(np.sum(w * (c.real ** 2 + c.imag ** 2)) * scale)
    return out


# ---------------------------------------------------------------------------
# operator assembly

@dataclass(frozen=True, eq=False)
class OperatorData:
    """L(v) = -(1/2) Delta + i s.grad + (i/2) div s + W at one time."""

    time: float
    s: tuple
    div_s: Field
    W: Field

    def apply(self, w: Field) -> Field:
        """L(v) w with the transport part in skew-symmetric form."""
        grid = w.grid
        c = w.coefficients
        ks = derivative_wavenumbers(grid)
        kin = 0.5 * np.fft.ifftn(xi_squared(grid) * c)
        trans = np.zeros(grid.shape, dtype=complex)
        for k, s in zip(ks, self.s):
            trans += s.values * np.fft.ifftn(1j * k * c)
            trans += np.fft.ifftn(1j * k * np.fft.fftn(s.values * w.values))
        return Field(grid, kin + 0.5j * trans + self.W.values * w.values)


class _Potentials:
    """Time-dependent coefficients of L~ for a fixed datum and a fixed g(v) history."""

    def __init__(self, grid: GridSpec, params: HartreeParams, v0: Field, with_potential: bool = True):
        self.grid = grid
        self.params = params
        self.with_potential = with_potential
        self.g0_hat = hartree_coefficients(v0, params)
        self.ks = derivative_wavenumbers(grid)
        self.lap = -sum(k * k for k in self.ks)
        self.zero = not np.any(self.g0_hat)

    def at(self, t: float, g_hat: np.ndarray | None):
        """(s components, div s, f) as real arrays."""
        gam = self.params.gamma
        shape = self.grid.shape
        if self.zero:
            s = [np.zeros(shape) for _ in self.ks]
            divs = np.zeros(shape)
            base = np.zeros(shape, dtype=complex)
        else:
            cl, ct = cutoff_symbols(self.grid, t)
            phi_hat = (-t ** (gam - 1) / (1 - gam)) * cl * self.g0_hat
            s = [np.fft.ifftn(1j * k * phi_hat).real for k in self.ks]
            divs = np.fft.ifftn(self.lap * phi_hat).real
            base = (t ** (gam - 2)) * (ct / (1 - gam) - cl) * self.g0_hat
        f = 0.5 * sum(a * a for a in s)
        if self.with_potential:
            f_hat = base if g_hat is None else base + t ** (gam - 2) * g_hat
            if np.any(f_hat):
                f = f + np.fft.ifftn(f_hat).real
        return s, divs, f


def assemble_L(v_snapshot: Field, v0: Field, t: float, params: HartreeParams) -> OperatorData:
    if not t > 0:
        raise DomainError("operator assembly needs t > 0")
    pot = _Potentials(v0.grid, params, v0)
    s, divs, f = pot.at(t, hartree_coefficients(v_snapshot, params))
    grid = v0.grid
    return OperatorData(float(t), tuple(Field(grid, a) for a in s), Field(grid, divs), Field(grid, f))


class _Stepper:
    """Lawson (integrating-factor) RK4 for i v_t = -(1/2)(1 - i eta) Delta v + P L~ v."""

    def __init__(self, grid: GridSpec, eta: float, pot: _Potentials, g_of_t):
        self.grid = grid
        self.eta = eta
        self.pot = pot
        self.g_of_t = g_of_t
        self.xi2 = xi_squared(grid)
        self._cache = {}

    def potentials(self, t):
        hit = self._cache.get(t)
        if hit is None:
            if len(self._cache) > 6:
                self._cache.clear()
            hit = self.pot.at(t, self.g_of_t(t))
            self._cache[t] = hit
        return hit

    def ltilde_hat(self, V, t):
        s, _, f = self.potentials(t)
        v = np.fft.ifftn(V)
        a = f * v
        out = 0.0
        for k, sa in zip(self.pot.ks, s):
            a = a + 0.5j * sa * np.fft.ifftn(1j * k * V)
            out = out - 0.5 * k * np.fft.fftn(sa * v)
        # no 2/3 truncation here: the coefficients are smooth, and a sharp cut of the
        # resolved output breaks pointwise mass balance and rings at the cutoff
        return np.fft.fftn(a) + out

    def rhs(self, V, t):
        return -1j * self.ltilde_hat(V, t)

    def kinetic(self, h):
        return np.exp(-(1j * h + self.eta * abs(h)) * self.xi2 / 2)

    def step(self, V, ta, tb):
        h = tb - ta
        tm = ta + h / 2
        Eh, Ef = self.kinetic(h / 2), self.kinetic(h)
        k1 = self.rhs(V, ta)
        k2 = self.rhs(Eh * (V + 0.5 * h * k1), tm)
        k3 = self.rhs(Eh * V + 0.5 * h * k2, tm)
        k4 = self.rhs(Ef * V + h * Eh * k3, tb)
        return Ef * V + (h / 6) * (Ef * k1 + 2 * Eh * (k2 + k3) + k4)

    def advance(self, V, ta, tb):
        """Integrate one grid interval, subdividing when the L2 drift exceeds STEP_TOL."""
        n0 = np.linalg.norm(V)
        m = 1
        while True:
            W = V
            ts = np.linspace(ta, tb, m + 1)
            for a, b in zip(ts[:-1], ts[1:]):
                W = self.step(W, a, b)
            n1 = np.linalg.norm(W)
            if not np.all(np.isfinite(W)):
                drift = np.inf
            elif n0 == 0:
                drift = 0.0
            elif self.eta == 0:
                drift = abs(n1 / n0 - 1)
            else:
                drift = max(n1 / n0 - 1, 0.0)
            if drift <= STEP_TOL:
                return W
            m *= 2
            if m > MAX_SUBSTEPS:
                raise IntegrationError(
                    f"step rejection cascade on [{ta:.6g}, {tb:.6g}]",
                    {"t_start": ta, "t_end": tb, "substeps": m // 2, "l2_drift": float(drift)})


def _snapshot_g(values, grid, params):
    sym = hartree_symbol(grid, params.gamma, params.kappa)

    def g_hat(k):
        v = values[k]
        return sym * np.fft.fftn(v.real ** 2 + v.imag ** 2)
    return g_hat


def _interpolator(times, g_hat):
    """Cubic Lagrange interpolation of g(v)^ in t through the four nearest snapshots."""
    cache = {}
    n = len(times)

    def get(k):
        if k not in cache:
            if len(cache) > 6:
                cache.clear()
            cache[k] = g_hat(k)
        return cache[k]

    def g_of_t(t):
        k = int(np.searchsorted(times, t, side="right") - 1)
        k = min(max(k, 0), n - 2)
        if t == times[k]:
            return get(k)
        if t == times[k + 1]:
            return get(k + 1)
        if n < 4:
            th = (t - times[k]) / (times[k + 1] - times[k])
            return (1 - th) * get(k) + th * get(k + 1)
        lo = min(max(k - 1, 0), n - 4)
        nodes = range(lo, lo + 4)
        out = 0.0
        for i in nodes:
            w = 1.0
            for j in nodes:
                if j != i:
                    w *= (t - times[j]) / (times[i] - times[j])
            out = out + w * get(i)
        return out
    return g_of_t


def _integrate(config: SolverConfig, v0: Field, start: Field, times: np.ndarray, k0: int,
               g_of_t=None, with_potential: bool = True) -> np.ndarray:
    grid = config.grid
    pot = _Potentials(grid, config.params, v0, with_potential)
    stepper = _Stepper(grid, config.eta, pot, g_of_t or (lambda t: None))
    out = np.empty((len(times),) + grid.shape, dtype=complex)
    V0 = start.coefficients
    out[k0] = np.fft.ifftn(V0)
    V = V0
    for k in range(k0, len(times) - 1):
        V = stepper.advance(V, times[k], times[k + 1])
        out[k + 1] = np.fft.ifftn(V)
    V = V0
    for k in range(k0, 0, -1):
        V = stepper.advance(V, times[k], times[k - 1])
        out[k - 1] = np.fft.ifftn(V)
    return out


def _grid_index(times, t0):
    k = int(np.argmin(np.abs(times - t0)))
    if not np.isclose(times[k], t0, rtol=1e-12, atol=0):
        raise ConfigurationError(f"t0 = {t0} is not a point of the time grid")
    return k


def linearized_solve(v_traj: Trajectory, v0_prime: Field, t0: float, config: SolverConfig,
                     v0: Field | None = None) -> Trajectory:
    """Solve i d_t v' = L(v) v' with v'(t0) = v0_prime on the time grid of ``v_traj``."""
    times = v_traj.times
    if not times[0] - 1e-15 <= t0 <= times[-1] + 1e-15:
        raise ConfigurationError("t0 outside the trajectory time range")
    if v_traj.grid != config.grid or v0_prime.grid != config.grid:
        raise ConfigurationError("grid mismatch between trajectory, datum and config")
    k0 = _grid_index(times, t0)
    v0 = v_traj.datum if v0 is None else v0
    g_of_t = _interpolator(times, _snapshot_g(v_traj.values, config.grid, config.params))
    vals = _integrate(config, v0, v0_prime, times, k0, g_of_t)
    return Trajectory(config.grid, times, vals, v0)


def free_amplitude_solve(v0: Field, config: SolverConfig) -> Trajectory:
    """The V = 0 solution of i d_t v + (1/2) Delta_s v = 0 with v(t_min) = v0 (Picard seed)."""
    times = config.time_grid()
    vals = _integrate(config, v0, v0, times, 0, None, with_potential=False)
    return Trajectory(config.grid, times, vals, v0)


@dataclass
class PicardLog:
    differences: list = dc_field(default_factory=list)
    ratios: list = dc_field(default_factory=list)
    converged: bool = False
    boundary_mass: float = 0.0
    warnings: list = dc_field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.differences)

    def contraction_ratio(self) -> float:
        """Largest successive-difference ratio once the seed transient (first ratio) is dropped."""
        r = [x for x in self.ratios if np.isfinite(x)]
        if not r:
            return 0.0
        return float(max(r[1:] if len(r) > 1 else r))

    def to_dict(self) -> dict:
        return {"differences": list(map(float, self.differences)), "ratios": list(map(float, self.ratios)),
                "iterations": self.iterations, "converged": self.converged,
                "boundary_mass": self.boundary_mass, "warnings": list(self.warnings)}


def prepare_datum(v0: Field, config: SolverConfig) -> Field:
    if v0.grid != config.grid:
        raise ConfigurationError("datum grid differs from config grid")
    return dealias(v0) if config.dealias else v0


def picard_solve(v0: Field, config: SolverConfig, max_iter: int | None = None, seed: Trajectory | None = None,
                 raise_on_noncontraction: bool = True) -> tuple:
    """Iterate v -> Gamma(v) from the V = 0 seed until sup_t ||dv; H^rho|| < picard_tol."""
    v0 = prepare_datum(v0, config)
    rho = config.params.rho
    current = seed if seed is not None else free_amplitude_solve(v0, config)
    log = PicardLog()
    max_iter = config.picard_max if max_iter is None else max_iter
    bad = 0
    for _ in range(max_iter):
        nxt = linearized_solve(current, v0, config.t_min, config, v0)
        diff = float(stack_sobolev(nxt.values - current.values, config.grid, rho).max())
        if log.differences:
            prev = log.differences[-1]
            ratio = diff / prev if prev > 0 else 0.0
            log.ratios.append(ratio)
            bad = bad + 1 if ratio >= 1 else 0
        log.differences.append(diff)
        current = nxt
        if diff < config.picard_tol:
            log.converged = True
            break
        if bad >= 3 and raise_on_noncontraction:
            raise NonContractionError(
                "Picard iteration is not contracting; shrink T",
                {"differences": log.differences, "ratios": log.ratios, "T": config.T})
    if log.ratios and log.ratios[-1] > 0.9:
        msg = f"measured contraction ratio {log.ratios[-1]:.3g} exceeds 0.9"
        log.warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    log.boundary_mass = max(boundary_mass_fraction(current.field(k)) for k in (0, len(current) - 1))
    if log.boundary_mass > 1e-10:
        msg = f"mass near the box boundary {log.boundary_mass:.2e} exceeds 1e-10"
        log.warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return current, log


def derivative_weights(nodes, at: float) -> np.ndarray:
    """Finite-difference weights for d/dt at ``at`` from samples at ``nodes`` (any spacing)."""
    z = np.asarray(nodes, dtype=float) - at
    h = np.abs(z).max()
    m = len(z)
    A = np.vander(z / h, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[1] = 1.0
    return np.linalg.solve(A, rhs) / h


def residual_series(traj: Trajectory, config: SolverConfig, stencil: int = 5) -> np.ndarray:
    """||i d_t v - L(v) v|| / ||v|| at interior grid times (NaN where the stencil does not fit).

    Evaluated in the interaction picture: the free part is removed exactly by U(-t) and
    d_t of U(-t) v is taken with a centered ``stencil``-point formula on the nonuniform grid.
    """
    if stencil not in (3, 5):
        raise ConfigurationError("stencil must be 3 or 5")
    half = stencil // 2
    grid = config.grid
    times = traj.times
    pot = _Potentials(grid, config.params, traj.datum)
    g_hat = _snapshot_g(traj.values, grid, config.params)
    stepper = _Stepper(grid, 0.0, pot, lambda t: None)
    xi2 = xi_squared(grid)
    out = np.full(len(times), np.nan)
    window = {}

    def tilde(k):
        if k not in window:
            window[k] = np.exp(0.5j * times[k] * xi2) * np.fft.fftn(traj.values[k])
            window.pop(k - stencil, None)
        return window[k]

    for k in range(half, len(times) - half):
        w = derivative_weights(times[k - half:k + half + 1], times[k])
        d = sum(wi * tilde(k - half + i) for i, wi in enumerate(w))
        stepper.g_of_t = lambda t, k=k: g_hat(k)
        stepper._cache.clear()
        V = np.fft.fftn(traj.values[k])
        res = 1j * d - np.exp(0.5j * times[k] * xi2) * stepper.ltilde_hat(V, times[k])
        nv = np.linalg.norm(V)
        out[k] = np.linalg.norm(res) / nv if nv > 0 else np.linalg.norm(res)
    return out


def nonlinear_residual(traj: Trajectory, config: SolverConfig, stencil: int = 5) -> float:
    return float(np.nanmax(residual_series(traj, config, stencil)))


# ---------------------------------------------------------------------------
# full construction

@dataclass(frozen=True, eq=False)
class PipelineResult:
    config: SolverConfig
    u0: Field
    v0: Field
    v: Trajectory
    log: PicardLog
    t: np.ndarray                 # physical times 1/tau, increasing
    u_tilde: np.ndarray           # U(-t) u(t) on the grid of u0, stacked over t
    u_fh: np.ndarray              # ||u~(t); F H^rho||
    uc_h: np.ndarray              # ||u_c(1/t); H^rho||
    vc_gap: np.ndarray            # ||v~_c(t) - u0; F H^rho||
    l2: np.ndarray                # ||u(t)||

    def physical(self, k: int, out_grid: GridSpec | None = None) -> Field:
        """u(t_k) in physical space via the dilation formula."""
        j = len(self.v) - 1 - k
        tau = self.v.times[j]
        phase = build_phase(self.v.datum, tau, self.config.params)
        return reconstruct_u(self.v.field(j), phase, 1.0 / tau, out_grid)

    def series(self) -> dict:
        return {"t": self.t, "l2": self.l2, "u_tilde_fh_rho": self.u_fh, "u_c_h_rho": self.uc_h,
                "v_tilde_c_gap_fh_rho": self.vc_gap}


def datum_from_asymptotic_state(u0: Field) -> Field:
    """v0 = conj(F u0); equivalently u0 = conj(F v0)."""
    return to_fourier(u0).conj()


def construct_mwo_pipeline(u0: Field, config: SolverConfig, picard=None) -> PipelineResult:
    """Asymptotic state u0 -> solution u(t) on [1/T, 1/t_min] with its diagnostic series."""
    if u0.grid != config.grid.dual():
        raise ConfigurationError("u0 must live on the dual of the solver grid")
    v0 = prepare_datum(datum_from_asymptotic_state(u0), config)
    if picard is None:
        v, log = picard_solve(v0, config)
    else:
        v, log = picard
    params = config.params
    rho = params.rho
    pot = _Potentials(config.grid, params, v0)
    xi2 = xi_squared(config.grid)
    n = len(v)
    t_phys = 1.0 / v.times[::-1]
    u_tilde = np.empty((n,) + u0.grid.shape, dtype=complex)
    u_fh, uc_h, gap, l2 = (np.empty(n) for _ in range(4))
    g0_hat = pot.g0_hat
    for i, j in enumerate(range(n - 1, -1, -1)):
        tau = v.times[j]
        cl, _ = cutoff_symbols(config.grid, tau)
        phi = np.fft.ifftn((-tau ** (params.gamma - 1) / (1 - params.gamma)) * cl * g0_hat).real
        vj = v.values[j]
        uc = Field(config.grid, np.exp(-1j * phi) * vj)
        uc_h[i] = sobolev_norm(uc, rho)
        uc_tilde = Field(config.grid, np.fft.ifftn(np.exp(0.5j * tau * xi2) * uc.coefficients))
        ut = pseudoconformal_invert(uc_tilde, 1.0 / tau)
        u_tilde[i] = ut.values
        u_fh[i] = fh_norm(ut, rho)
        v_tilde = Field(config.grid, np.fft.ifftn(np.exp(0.5j * tau * xi2) * np.fft.fftn(vj)))
        vc_tilde = pseudoconformal_invert(v_tilde, 1.0 / tau)
        gap[i] = fh_norm(vc_tilde - u0, rho) if u0.grid == vc_tilde.grid else np.nan
        l2[i] = ut.norm()
    return PipelineResult(config, u0, v0, v, log, t_phys, u_tilde, u_fh, uc_h, gap, l2)


def measure_contraction(v0: Field, config: SolverConfig, iterations: int = 4) -> float:
    """Contraction ratio (PicardLog.contraction_ratio) over a few iterations, no convergence required."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        _, log = picard_solve(v0, config.with_(picard_tol=1e-300), max_iter=iterations,
                              raise_on_noncontraction=False)
    return log.contraction_ratio()


def calibrate_T(v0: Field, config: SolverConfig, target: float = 0.5, T_values=None,
                iterations: int = 4) -> tuple:
    """Pick T so that the measured contraction ratio is close to ``target``.

    Returns (T, table) where table lists (T, ratio); T is log-interpolated between brackets.
    """
    if T_values is None:
        T_values = config.T * np.array([0.25, 0.5, 1.0, 2.0, 4.0])
    table = []
    for T in sorted(T_values):
        r = measure_contraction(v0, config.with_(T=float(T)), iterations)
        table.append((float(T), r))
    Ts = np.array([a for a, _ in table])
    rs = np.array([b for _, b in table])
    order = np.argsort(Ts)
    Ts, rs = Ts[order], rs[order]
    if target <= rs[0]:
        return float(Ts[0]), table
    if target >= rs[-1]:
        return float(Ts[-1]), table
    k = int(np.searchsorted(rs, target))
    lt = np.interp(np.log(target), np.log(rs[k - 1:k + 1]), np.log(Ts[k - 1:k + 1]))
    return float(np.exp(lt)), table
