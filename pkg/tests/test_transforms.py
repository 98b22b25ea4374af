import numpy as np
import pytest

from hartree_mwo.errors import DomainError, ResolutionError
from hartree_mwo.operators import HartreeParams, build_phase
from hartree_mwo.spectral import Field, GridSpec, lebesgue_norm, sobolev_norm, to_fourier
from hartree_mwo.transforms import (
    PropagatorCache, fh_norm, free_propagate, mdfm_factorize, pseudoconformal_invert,
    pseudoconformal_physical, reconstruct_u, tilde_profile,
)
from helpers import gaussian, mode, random_band_limited

G = GridSpec(2, 128, 16 * np.pi)


def rel(a, b):
    return np.linalg.norm(np.ravel(a - b)) / max(np.linalg.norm(np.ravel(b)), 1e-300)


def test_propagator_cache_unimodular_and_group_law():
    a = PropagatorCache(G, 0.7)
    assert np.abs(np.abs(a.multiplier) - 1).max() <= 1e-14
    b = PropagatorCache(G, -1.9)
    ab = PropagatorCache(G, 0.7 - 1.9)
    assert np.abs(a.multiplier * b.multiplier - ab.multiplier).max() <= 1e-12
    v1, v2 = PropagatorCache(G, 0.3, 0.01), PropagatorCache(G, 0.5, 0.01)
    assert np.abs(v1.multiplier * v2.multiplier - PropagatorCache(G, 0.8, 0.01).multiplier).max() <= 1e-12


def test_free_propagate_examples():
    f = random_band_limited(G, np.random.default_rng(0))
    assert rel(free_propagate(f, 0.0).values, f.values) < 1e-15
    g = free_propagate(f, 2.3)
    assert abs(g.norm() / f.norm() - 1) < 1e-12
    assert rel(free_propagate(g, -2.3).values, f.values) < 1e-12
    with pytest.raises(DomainError):
        free_propagate(f, -1.0, eta=0.1)
    with pytest.raises(DomainError):
        free_propagate(f, 1.0, eta=-0.1)


def test_tilde_profile_of_free_solution_is_constant():
    w0 = gaussian(G)
    a = tilde_profile(free_propagate(w0, 1.5), 1.5)
    b = tilde_profile(free_propagate(w0, 4.0), 4.0)
    assert rel(a.values, b.values) < 1e-12
    assert rel(tilde_profile(w0, 0).values, w0.values) < 1e-15
    w = free_propagate(w0, 0.3)
    assert np.isclose(tilde_profile(w, 0.7).norm(), w.norm(), rtol=1e-12)


def test_mdfm_matches_free_propagation():
    f = gaussian(G)
    assert rel(mdfm_factorize(f, 1.0).values, free_propagate(f, 1.0).values) < 1e-6
    f2 = gaussian(G, width=1.3, center=(0.5, -0.3), momentum=(0.4, 0.0))
    assert rel(mdfm_factorize(f2, 2.5).values, free_propagate(f2, 2.5).values) < 1e-6


def test_mdfm_unitary_pieces():
    f = gaussian(G)
    chirp = np.exp(1j * G.radius() ** 2 / 2)
    assert np.isclose(lebesgue_norm(Field(G, chirp * f.values), 2), f.norm(), rtol=1e-14)
    # dilation (it)^{-n/2} f(x/t) preserves the continuum L2 norm
    t = 2.0
    dil = Field.from_function(G, lambda x, y: np.exp(-((x / t) ** 2 + (y / t) ** 2) / 2) / t)
    assert np.isclose(dil.norm(), f.norm(), rtol=1e-12)


def test_mdfm_nyquist_guard():
    with pytest.raises(ResolutionError):
        mdfm_factorize(gaussian(G), 0.05)
    with pytest.raises(DomainError):
        mdfm_factorize(gaussian(G), 0.0)


def test_pseudoconformal_involution_and_norm_identity():
    rng = np.random.default_rng(1)
    for k in range(10):
        f = random_band_limited(G, rng)
        t = 0.3 + k
        once = pseudoconformal_invert(f, t)
        twice = pseudoconformal_invert(once, 1 / t)
        assert twice.grid == G
        assert rel(twice.values, f.values) <= 1e-12
        for rho in (0.0, 0.8, 1.7):
            a, b = fh_norm(f, rho), sobolev_norm(once, rho)
            assert abs(a - b) / b <= 1e-12
    z = pseudoconformal_invert(Field.zeros(G), 1.0)
    assert np.all(z.values == 0)
    with pytest.raises(DomainError):
        pseudoconformal_invert(z, 0.0)


def test_fh_norm_examples():
    f = to_fourier(mode(G, (3, 1)))
    k = np.array([3, 1]) * G.frequency_spacing
    assert np.isclose(fh_norm(f, 0.8), (1 + k @ k) ** 0.4 * G.box_length, rtol=1e-12)
    gd = GridSpec(2, 128, 16.0)
    g = gaussian(gd)
    # self-dual Gaussian: F^{-1} g = g on the dual grid; also equals ||<x>^rho g||
    direct = sobolev_norm(gaussian(gd.dual()), 0.8)
    weighted = lebesgue_norm(Field(gd, (1 + gd.radius() ** 2) ** 0.4 * g.values), 2)
    assert np.isclose(fh_norm(g, 0.8), direct, rtol=1e-12)
    assert np.isclose(fh_norm(g, 0.8), weighted, rtol=1e-10)


def test_fourier_and_physical_inversions_agree():
    # w(t) = U(t) w0: the Fourier form gives w_c(1/t); the physical form must rebuild w(t)
    w0 = gaussian(G, width=1.0, momentum=(0.3, -0.2))
    t = 4.0
    wc_tilde = pseudoconformal_invert(w0, t)       # w~(t) = w0 for a free solution
    wc = free_propagate(wc_tilde, 1 / t)           # w_c(1/t) on the dual grid
    out = GridSpec(2, 512, 32 * np.pi)
    rebuilt = pseudoconformal_physical(wc, t, out)
    exact = free_propagate(gaussian(out, width=1.0, momentum=(0.3, -0.2)), t)
    assert rel(rebuilt.values, exact.values) < 1e-6


def test_reconstruct_free_case_and_guards():
    p0 = HartreeParams(kappa=0.0)
    v = gaussian(G.dual(), width=1.0)
    t = 3.0
    ph = build_phase(v, 1 / t, p0)
    assert np.all(ph.phi.values == 0)
    u = reconstruct_u(v, ph, t)
    assert rel(u.values, pseudoconformal_physical(v, t, u.grid).values) == 0
    assert np.isclose(u.norm(), v.norm(), rtol=1e-8)
    with pytest.raises(ResolutionError):
        reconstruct_u(v, ph, t, out_grid=GridSpec(2, 64, 8.0))


def test_reconstruct_with_phase_norm():
    p = HartreeParams(kappa=1.0)
    v = gaussian(G.dual(), amplitude=0.3)
    t = 2.0
    ph = build_phase(v, 1 / t, p)
    u = reconstruct_u(v, ph, t)
    assert np.isclose(u.norm(), v.norm(), rtol=1e-8)
