import numpy as np
import pytest
from scipy.integrate import dblquad
from scipy.special import gamma, hyp1f1

from hartree_mwo.errors import ConfigurationError, DomainError
from hartree_mwo.operators import (
    HartreeParams, LambdaExponents, build_phase, chi, chi_cutoffs, chi_tilde, g_split,
    hartree_g, riesz_constant, s_norm_estimates,
)
from hartree_mwo.spectral import Field, GridSpec, gradient, lebesgue_norm, xi_abs
from helpers import gaussian, random_band_limited, power_law_datum

P = HartreeParams(gamma=0.7, kappa=1.0, dim=2, rho=0.8)
G = GridSpec(2, 128, 16 * np.pi)


def rel(a, b):
    return np.linalg.norm(np.ravel(a - b)) / max(np.linalg.norm(np.ravel(b)), 1e-300)


def test_params_validation():
    for bad in (dict(gamma=0.5), dict(gamma=1.0), dict(rho=0.6), dict(rho=1.0), dict(epsilon_pm=0)):
        with pytest.raises(ConfigurationError):
            HartreeParams(**{**dict(gamma=0.7, rho=0.8), **bad})
    assert np.isclose(P.delta, 0.15)


def test_lambda_exponents():
    lam = LambdaExponents.from_params(P)
    assert np.isclose(lam.lambda0, 0.65) and np.isclose(lam.lambda1, 0.15)
    assert np.isclose(lam.lam, 0.15)
    # lambda1 = gamma ^ delta
    assert np.isclose(lam.lambda1, min(P.gamma, P.delta))
    # equality in the bracket uses epsilon
    q = HartreeParams(gamma=0.7, rho=0.85)
    assert np.isclose(LambdaExponents.from_params(q).lambda0, 0.7 - 0.5 * q.epsilon_pm)


def test_riesz_constant_against_closed_form():
    # (|.|^-g * e^{-|.|^2})(x) = pi^{n/2} G((n-g)/2)/G(n/2) 1F1(g/2; n/2; -|x|^2)
    g = 0.7
    closed = lambda r: np.pi * gamma((2 - g) / 2) / gamma(1.0) * hyp1f1(g / 2, 1.0, -r * r)
    # brute-force quadrature at |x| = 0.5 cross-checks the closed form itself
    x0 = 0.5
    f = lambda r, th: r ** (1 - g) * np.exp(-(r * r + x0 * x0 + 2 * r * x0 * np.cos(th)))
    val, _ = dblquad(f, 0, 2 * np.pi, 0, 12, epsabs=1e-12)
    assert abs(val / closed(x0) - 1) < 1e-8
    q = HartreeParams(gamma=g, kappa=1.0)
    errs = []
    # default box, then doubled box: torus images shrink
    for grid in (G, G.enlarged(2)):
        u = Field.from_function(grid, lambda x, y: np.exp(-(x * x + y * y) / 2))
        out = hartree_g(u, q).values
        r = grid.radius()
        exact = closed(r)
        inner = r <= 3
        # zero mode policy drops a constant
        shift = np.mean((exact - out)[inner])
        errs.append(np.abs(out + shift - exact)[inner].max() / np.abs(exact).max())
    assert errs[1] < 1e-4
    assert errs[0] < 2e-4 and errs[1] < errs[0]
    assert np.isclose(riesz_constant(g, 2), np.pi * 2 ** (2 - g) * gamma((2 - g) / 2) / gamma(g / 2))


def test_hartree_real_and_quadratic():
    rng = np.random.default_rng(0)
    u = random_band_limited(G, rng)
    g1 = hartree_g(u, P)
    assert g1.is_real
    c = 0.3 - 1.2j
    assert rel(hartree_g(c * u, P).values, abs(c) ** 2 * g1.values) < 1e-12
    assert np.all(hartree_g(Field.zeros(G), P).values == 0)
    const = Field(G, np.full(G.shape, 2.0 + 0j))
    assert np.abs(hartree_g(const, P).values).max() < 1e-13


def test_hartree_imaginary_part_before_projection():
    rng = np.random.default_rng(1)
    u = random_band_limited(G, rng)
    from hartree_mwo.operators import hartree_g_complex
    raw = hartree_g_complex(u, P)
    assert np.abs(raw.imag).max() <= 1e-10 * np.abs(raw).max()


def test_hartree_dimension_checks():
    with pytest.raises(ConfigurationError):
        hartree_g(Field.zeros(GridSpec(3, 16, 10.0)), P)


def test_chi_cutoff_properties():
    t = 0.37
    L, S, T = chi_cutoffs(t, G)
    r = xi_abs(G)
    l, s, tt = L.symbol(G), S.symbol(G), T.symbol(G)
    assert np.all(l + s == 1)
    assert np.all(l[r <= t ** -0.5] == 1) and np.all(s[r <= t ** -0.5] == 0)
    assert np.all(tt[r <= t ** -0.5] == 0)
    assert np.all(l[r >= 2 * t ** -0.5] == 0) and np.all(s[r >= 2 * t ** -0.5] == 1)
    assert np.all(tt[r >= 2 * t ** -0.5] == 0)
    assert np.all(tt <= 0)
    with pytest.raises(DomainError):
        chi_cutoffs(0.0, G)
    ell = np.linspace(0, 3, 301)
    h = 1e-6
    fd = 0.5 * ell * (chi(ell + h) - chi(ell - h)) / (2 * h)
    assert np.abs(fd - chi_tilde(ell)).max() < 1e-7


def test_g_split():
    rng = np.random.default_rng(2)
    u = random_band_limited(G, rng)
    gl, gs = g_split(u, 0.5, P)
    assert rel((gl + gs).values, hartree_g(u, P).values) < 1e-12
    assert gl.is_real and gs.is_real
    z1, z2 = g_split(Field.zeros(G), 0.5, P)
    assert np.all(z1.values == 0) and np.all(z2.values == 0)
    t_big = (2.0 / G.frequency_spacing) ** 2 * 1.01
    gl, _ = g_split(u, t_big, P)
    assert np.abs(gl.values).max() == 0


def test_build_phase_basic():
    z = build_phase(Field.zeros(G), 0.3, P)
    assert all(np.all(a.values == 0) for a in (z.phi, z.dt_phi, *z.s))
    v0 = gaussian(G, amplitude=0.5)
    st = build_phase(v0, 0.3, P)
    assert st.phi.is_real and st.dt_phi.is_real
    for a, b in zip(st.s, gradient(st.phi)):
        assert rel(a.values, b.values) < 1e-12
    c = 1.7 - 0.4j
    st2 = build_phase(c * v0, 0.3, P)
    assert rel(st2.phi.values, abs(c) ** 2 * st.phi.values) < 1e-12
    with pytest.raises(DomainError):
        build_phase(v0, -1.0, P)


def test_build_phase_polarization():
    rng = np.random.default_rng(3)
    v = random_band_limited(G, rng)
    w = random_band_limited(G, rng)
    ph = lambda f: build_phase(f, 0.2, P).phi.values
    lhs = ph(v + w) + ph(v - w)
    assert rel(lhs, 2 * ph(v) + 2 * ph(w)) < 1e-10


def test_dt_phi_finite_difference_order():
    v0 = gaussian(G, amplitude=0.7)
    t = 0.25
    exact = build_phase(v0, t, P).dt_phi.values
    errs, hs = [], np.array([4e-2, 2e-2, 1e-2, 5e-3])
    for h in hs:
        fd = (build_phase(v0, t + h, P).phi.values - build_phase(v0, t - h, P).phi.values) / (2 * h)
        errs.append(np.abs(fd - exact).max())
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= 1.9


def test_s_norm_zero_and_report():
    rep = s_norm_estimates(build_phase(Field.zeros(G), 0.5, P), P)
    assert rep.lhs == (0.0, 0.0)
    v0 = gaussian(G, amplitude=0.5)
    rep = s_norm_estimates(build_phase(v0, 0.5, P), P)
    assert all(np.isfinite(rep.ratio)) and all(r > 0 for r in rep.ratio)


def test_s_norm_slopes_match_lambda():
    grid = GridSpec(2, 256, 16 * np.pi)
    v0 = power_law_datum(grid, beta=2 * P.rho - 1, seed=5)
    lam = LambdaExponents.from_params(P)
    ts = np.geomspace(0.04, 4.0, 9)
    lhs = np.array([s_norm_estimates(build_phase(v0, t, P), P).lhs for t in ts])
    for j, target in enumerate((lam.lambda0 - 1, lam.lambda1 - 1)):
        slope = np.polyfit(np.log(ts), np.log(lhs[:, j]), 1)[0]
        assert abs(slope - target) <= 0.1, (j, slope, target)


def test_s_norm_constants_refinement_stable():
    t = 0.5
    base = GridSpec(2, 128, 16 * np.pi)
    ratios = []
    for grid in (base, base.refined(2), base.enlarged(2)):
        v0 = gaussian(grid, amplitude=0.5)
        ratios.append(np.array(s_norm_estimates(build_phase(v0, t, P), P).ratio))
    for r in ratios[1:]:
        assert np.all((r / ratios[0] > 0.5) & (r / ratios[0] < 2))
