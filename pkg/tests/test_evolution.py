import warnings

import numpy as np
import pytest

from hartree_mwo.checkpoint import read_checkpoint, write_checkpoint
from hartree_mwo.data import gaussian
from hartree_mwo.errors import ConfigurationError, DomainError
from hartree_mwo.evolution import (
    SolverConfig, Trajectory, assemble_L, calibrate_T, construct_mwo_pipeline, derivative_weights,
    free_amplitude_solve, linearized_solve, measure_contraction, nonlinear_residual, picard_solve,
    residual_series,
)
from hartree_mwo.operators import HartreeParams, chi_cutoffs, hartree_coefficients
from hartree_mwo.spectral import Field, GridSpec, to_fourier
from hartree_mwo.transforms import free_propagate

SMALL = GridSpec(2, 64, 16 * np.pi)


def cfg(kappa=1.0, **kw):
    base = dict(params=HartreeParams(kappa=kappa), grid=SMALL, steps_per_decade=20, T=1.0)
    base.update(kw)
    return SolverConfig(**base)


def datum(c, amp=0.3, width=3.0):
    return gaussian(c.grid, width, amp)


@pytest.fixture(scope="module")
def fixed_point():
    c = cfg()
    v, log = picard_solve(datum(c), c)
    return c, v, log


def test_config_validation():
    with pytest.raises(ConfigurationError):
        cfg(t_min=0.0)
    with pytest.raises(ConfigurationError):
        cfg(T=1e-4)
    with pytest.raises(ConfigurationError):
        cfg(eta=-1.0)
    with pytest.raises(ConfigurationError):
        cfg(steps_per_decade=0)
    with pytest.raises(ConfigurationError):
        SolverConfig(params=HartreeParams(dim=3), grid=SMALL)
    c = cfg()
    assert SolverConfig.from_dict(c.to_dict()) == c


def test_time_grid_is_geometric():
    t = cfg().time_grid()
    assert t[0] == 1e-3 and t[-1] == 1.0
    q = t[1:] / t[:-1]
    assert np.allclose(q, q[0], rtol=1e-12)
    assert len(t) == 61


def test_assemble_L_examples():
    c = cfg(kappa=0.0)
    v0 = datum(c)
    op = assemble_L(v0, v0, 0.1, c.params)
    assert all(not np.any(s.values) for s in op.s)
    assert not np.any(op.W.values)

    p = HartreeParams(kappa=1.0)
    op = assemble_L(v0, v0, 0.1, p)
    assert op.W.is_real
    # v = v0: the g_L(v) - g_L(v0) term cancels, leaving g_S(v0) + chi~_L g(v0)/(1-gamma) + |s|^2/2
    t, g = 0.1, p.gamma
    chi_L, chi_S, chi_tL = chi_cutoffs(t, SMALL)
    gh = hartree_coefficients(v0, p)
    expect = t ** (g - 2) * np.fft.ifftn((chi_S.symbol(SMALL) + chi_tL.symbol(SMALL) / (1 - g)) * gh).real
    expect = expect + 0.5 * sum(s.values ** 2 for s in op.s)
    assert np.abs(op.W.values - expect).max() <= 1e-10 * np.abs(expect).max()
    with pytest.raises(DomainError):
        assemble_L(v0, v0, 0.0, p)


def test_operator_apply_matches_stepper_form():
    p = HartreeParams(kappa=1.0)
    v0 = datum(cfg())
    op = assemble_L(v0, v0, 0.05, p)
    w = gaussian(SMALL, 2.0, 1.0, momentum=(0.5, -0.25))
    # self-adjointness of L(v) on the band-limited subspace
    a = np.vdot(w.values, op.apply(v0).values)
    b = np.vdot(op.apply(w).values, v0.values)
    assert abs(a - b) <= 1e-10 * abs(a)


def test_free_exactness_kappa_zero():
    c = cfg(kappa=0.0)
    v0 = datum(c)
    seed = free_amplitude_solve(v0, c)
    out = linearized_solve(seed, v0, c.t_min, c)
    for k in (10, len(out) - 1):
        ref = free_propagate(v0, out.times[k] - c.t_min)
        assert np.linalg.norm(out.values[k] - ref.values) <= 1e-8 * np.linalg.norm(ref.values)
    # backward from an interior start
    k0 = 30
    mid = linearized_solve(seed, seed.field(k0), seed.times[k0], c)
    assert np.linalg.norm(mid.values[0] - v0.values) <= 1e-8 * v0.norm()


def test_l2_conservation_and_reversibility(fixed_point):
    c, v, _ = fixed_point
    n = v.norms()
    assert np.abs(n / n[0] - 1).max() <= 1e-6
    back = linearized_solve(v, v.field(len(v) - 1), c.T, c)
    assert np.linalg.norm(back.values[0] - v.values[0]) <= 1e-6 * n[0]


def test_determinism_bit_identical():
    c = cfg()
    a, _ = picard_solve(datum(c), c, max_iter=2)
    b, _ = picard_solve(datum(c), c, max_iter=2)
    assert np.array_equal(a.values, b.values)


def test_eta_regularization_slope_and_limit(fixed_point):
    c, v, _ = fixed_point
    v0 = v.datum
    base = linearized_solve(v, v0, c.t_min, c).values[-1]
    etas = np.array([1e-2, 1e-3, 1e-4])
    dev = [np.linalg.norm(linearized_solve(v, v0, c.t_min, c.with_(eta=e)).values[-1] - base) for e in etas]
    slope = np.polyfit(np.log(etas), np.log(dev), 1)[0]
    assert abs(slope - 1) <= 0.1
    tiny = linearized_solve(v, v0, c.t_min, c.with_(eta=1e-9)).values[-1]
    assert np.linalg.norm(tiny - base) <= 1e-6 * np.linalg.norm(base)


def test_picard_free_case_one_iteration():
    c = cfg(kappa=0.0)
    v, log = picard_solve(datum(c), c)
    assert log.converged and log.iterations == 1


def test_picard_fixed_point_reapplication(fixed_point):
    c, v, log = fixed_point
    assert log.converged and log.iterations <= c.picard_max
    assert all(r < 1 for r in log.ratios)
    again = linearized_solve(v, v.datum, c.t_min, c)
    from hartree_mwo.evolution import stack_sobolev
    assert stack_sobolev(again.values - v.values, SMALL, c.params.rho).max() < 2 * c.picard_tol


def test_derivative_weights_exact_on_polynomials():
    nodes = np.array([0.1, 0.13, 0.2, 0.31, 0.4])
    w = derivative_weights(nodes, 0.2)
    for p in range(5):
        assert abs(w @ nodes ** p - (p * 0.2 ** (p - 1) if p else 0.0)) <= 1e-9


def test_residual_free_solution_and_seed_contrast(fixed_point):
    c0 = cfg(kappa=0.0)
    free = free_amplitude_solve(datum(c0), c0)
    assert nonlinear_residual(free, c0) <= 1e-10
    c, v, _ = fixed_point
    seed = free_amplitude_solve(v.datum, c)
    assert nonlinear_residual(seed, c) > 10 * nonlinear_residual(v, c)
    r = residual_series(v, c)
    assert np.isnan(r[:2]).all() and np.isnan(r[-2:]).all()
    with pytest.raises(ConfigurationError):
        residual_series(v, c, stencil=4)


def test_residual_order_under_refinement():
    res = []
    for spd in (20, 40):
        c = cfg(steps_per_decade=spd)
        v, _ = picard_solve(datum(c), c)
        res.append(nonlinear_residual(v, c))
    assert np.log2(res[0] / res[1]) >= 2


def test_contraction_measurement_and_calibration():
    c = cfg()
    r_small = measure_contraction(datum(c, 0.15), c, iterations=3)
    r_big = measure_contraction(datum(c, 0.3), c, iterations=3)
    assert 0 < r_small < r_big < 1
    T, table = calibrate_T(datum(c, 0.3), c, target=0.05, T_values=[0.25, 1.0], iterations=3)
    assert len(table) == 2 and 0.25 <= T <= 1.0


def test_pipeline_zero_and_free():
    c = cfg(kappa=0.0, T=0.5)
    zero = Field.zeros(SMALL.dual())
    res = construct_mwo_pipeline(zero, c)
    assert not np.any(res.u_tilde) and not np.any(res.l2)
    u0 = gaussian(SMALL.dual(), 0.5, 1.0)
    res = construct_mwo_pipeline(u0, c)
    # free scattering: v~_c(t) is constant in t
    assert np.ptp(res.vc_gap) <= 1e-8 * sobolev_norm_fh(u0, c)
    assert np.allclose(res.l2, res.l2[0], rtol=1e-10)
    with pytest.raises(ConfigurationError):
        construct_mwo_pipeline(gaussian(SMALL, 1.0), c)


def sobolev_norm_fh(u0, c):
    from hartree_mwo.transforms import fh_norm
    return fh_norm(u0, c.params.rho)


def test_pipeline_gap_decreasing():
    c = cfg(T=0.5)
    u0 = to_fourier(datum(c)).conj()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = construct_mwo_pipeline(u0, c)
    assert np.all(np.diff(res.vc_gap) <= 0)
    assert np.all(np.diff(res.t) > 0)


def test_checkpoint_roundtrip(tmp_path, fixed_point):
    c, v, _ = fixed_point
    p = write_checkpoint(v, tmp_path / "traj.bin", c)
    back, header = read_checkpoint(p)
    assert np.array_equal(back.values, v.values) and np.array_equal(back.times, v.times)
    assert np.array_equal(back.datum.values, v.datum.values)
    assert SolverConfig.from_dict(header["config"]) == c
    raw = bytearray(p.read_bytes())
    raw[-1] ^= 1
    p.write_bytes(bytes(raw))
    with pytest.raises(ConfigurationError):
        read_checkpoint(p)


def test_trajectory_rejects_bad_shapes():
    with pytest.raises(ConfigurationError):
        Trajectory(SMALL, np.array([0.1, 0.2]), np.zeros((3,) + SMALL.shape, complex), Field.zeros(SMALL))
    with pytest.raises(ConfigurationError):
        Trajectory(SMALL, np.array([0.2, 0.1]), np.zeros((2,) + SMALL.shape, complex), Field.zeros(SMALL))
