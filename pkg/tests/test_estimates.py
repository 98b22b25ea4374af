import csv
import json
import math
import warnings

import numpy as np
import pytest

from hartree_mwo.data import gaussian
from hartree_mwo.errors import ConfigurationError
from hartree_mwo.estimates import (
    CommutatorTuple, EstimateReport, TestFunctionFamily, _operator, check_commutator,
    check_conservation_decomposition, check_contraction_bound, check_data_continuity, check_gronwall,
    check_holder_time, check_leibniz, check_phase_besov, check_product_estimate,
    check_sobolev_interpolation, commutator_pairing, commutator_regions, commutator_single_mode_closed_form,
    continuity_envelope, fit_continuity_constant, leibniz_ratio, make_report, product_ratio,
    product_single_mode_closed_form, phase_besov_ratio, single_mode, write_reports_csv, write_reports_json,
)
from hartree_mwo.evolution import SolverConfig, free_amplitude_solve, linearized_solve, picard_solve
from hartree_mwo.operators import HartreeParams
from hartree_mwo.spectral import Field, GridSpec

G = GridSpec(2, 64, 16 * np.pi)
FAM = TestFunctionFamily("gaussian", count=8)


def test_family_reproducible_and_validated():
    a = FAM.members(G)
    b = FAM.members(G)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
    assert FAM.doubled().count == 16
    with pytest.raises(ConfigurationError):
        TestFunctionFamily("sine")
    with pytest.raises(ConfigurationError):
        TestFunctionFamily(band=(0.0, 9.0)).members(G)
    # same continuum function on the refined grid
    fine = FAM.member(G.refined(2), 3).values[::2, ::2]
    assert np.abs(fine - FAM.member(G, 3).values).max() <= 1e-12


def test_report_pass_logic_and_writers(tmp_path):
    r = make_report("x", 1.0, 2.0, 0.6)
    assert r.empirical_constant == 0.5 and r.passed and abs(r.refinement_ratio - 1.2) < 1e-15
    assert not make_report("x", 1.0, 2.0, None).passed
    assert not make_report("x", 1.0, 2.0, 1.5).passed
    assert not make_report("x", math.inf, 2.0, 1.0).passed
    reps = [make_report("a", 1 / 3, 0.7, 1 / 3 / 0.7), make_report("b", 0.0, 0.0, 0.0)]
    write_reports_json(reps, tmp_path / "r.json", {"manifest_hash": "abc"})
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["header"]["manifest_hash"] == "abc" and len(data["reports"]) == 2
    write_reports_csv(reps, tmp_path / "r.csv", "manifest abc")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0][0].startswith("#")
    assert float(rows[2][1]) == 1 / 3
    assert isinstance(reps[0], EstimateReport)


def test_sobolev_interpolation_single_mode_equality():
    fam = TestFunctionFamily("single_mode", count=6)
    r = check_sobolev_interpolation(fam, 0.4, 0.8, 2, 2, 2, 0.5, grid=G, refine=False)
    assert abs(r.empirical_constant - 1) <= 1e-10


def test_sobolev_interpolation_exponent_gates():
    with pytest.raises(ConfigurationError):
        check_sobolev_interpolation(FAM, 0.4, 0.8, 2, 2, 2, 0.3, grid=G)      # theta < sigma/rho
    with pytest.raises(ConfigurationError):
        check_sobolev_interpolation(FAM, 0.4, 0.8, 3, 2, 2, 0.5, grid=G)      # scaling fails
    with pytest.raises(ConfigurationError):
        check_sobolev_interpolation(FAM, 0.9, 0.8, 2, 2, 2, 1.0, grid=G)


def test_sobolev_interpolation_gaussians_stable():
    r = check_sobolev_interpolation(FAM, 0.4, 0.8, 2, 2, 2, 0.5, grid=G)
    assert r.passed and 0 < r.empirical_constant <= 1 + 1e-12


def test_leibniz_limit_cases():
    u = FAM.member(G, 0)
    one = Field(G, np.ones(G.shape, dtype=complex))
    assert abs(leibniz_ratio(u, one, 0.8, 2, 2, math.inf, 2, math.inf) - 1) <= 1e-10
    v = FAM.member(G, 1)
    assert leibniz_ratio(u, v, 0.0, 2, 2, math.inf, 2, math.inf) <= 1 + 1e-12
    with pytest.raises(ConfigurationError):
        check_leibniz(FAM, 0.8, 2, 2, 4, 2, math.inf, grid=G)


def test_leibniz_random_family_stable():
    r = check_leibniz(TestFunctionFamily("random_band_limited", count=8), 0.8, 2, 4, 4, 4, 4, grid=G)
    assert r.passed


def test_product_closed_form_and_gates():
    for p, q in [((3, 1), (2, -5)), ((7, 0), (-1, 4))]:
        lhs, rhs = product_ratio(single_mode(G, p), single_mode(G, q), 0.6, 0.6)
        cf = product_single_mode_closed_form(G, p, q, 0.6, 0.6)
        assert abs(lhs / rhs - cf) <= 1e-10 * cf
    with pytest.raises(ConfigurationError):
        check_product_estimate(FAM, 1.0, 0.5, grid=G)
    assert check_product_estimate(FAM, 0.6, 0.6, grid=G).passed


def test_commutator_tuple_validation():
    t = CommutatorTuple.energy_instance(0.8).validate()
    assert t.sigma0 == pytest.approx(1.4)
    with pytest.raises(ConfigurationError):
        CommutatorTuple(2.0, 1.0, 0.8, 0.8).validate()                     # homogeneity fails
    with pytest.raises(ConfigurationError):
        CommutatorTuple(2.0, 0.2, 1.4, 1.4).validate()                     # sigma0 + min(sigma_i) < lambda
    with pytest.raises(ConfigurationError):
        check_commutator(FAM, CommutatorTuple(1.0, 1.0, 0.5, 0.5), P2=("grad", 0), grid=G)


@pytest.mark.parametrize("P1,P2,a1,a2", [("id", "id", 0, 0), ("id", ("grad", 1), 0, 1), ("omega", "id", 0.5, 0)])
def test_commutator_single_mode_closed_form(P1, P2, a1, a2):
    s1, _ = _operator(P1, a1)
    s2, _ = _operator(P2, a2)
    for k, q in [((3, -2), (5, 4)), ((1, 1), (-6, 2))]:
        p = tuple(a + b for a, b in zip(k, q))
        d = commutator_pairing(single_mode(G, p), single_mode(G, q), single_mode(G, k), 1.5, s1, s2)
        cf = commutator_single_mode_closed_form(G, k, q, 1.5, s1, s2)
        assert abs(d - cf) <= 1e-10 * abs(cf)


def test_commutator_constant_multiplier_and_regions():
    u, v = FAM.member(G, 0), FAM.member(G, 1)
    m = Field(G, np.full(G.shape, 2.0 + 0j))
    assert abs(commutator_pairing(u, v, m, 2.0)) <= 1e-12 * u.norm() * v.norm()
    m = FAM.member(G, 2)
    total = commutator_pairing(u, v, m, 2.0)
    parts = commutator_regions(u, v, m, 2.0)
    assert abs(sum(parts.values()) - total) <= 1e-10 * abs(total)


def test_commutator_energy_instance_stable():
    r = check_commutator(TestFunctionFamily("multi_bump", count=8), CommutatorTuple.energy_instance(0.8), grid=G)
    assert r.passed and np.isfinite(r.empirical_constant)


def test_phase_besov_limits():
    r = check_phase_besov(lambda g: [Field(g, np.zeros(g.shape))], 0.8, grid=G, refine=False)
    assert r.lhs == 0 and r.rhs_scaling == 0 and r.metadata["argmax_member"] == -1
    phi = Field(G, 1e-7 * FAM.member(G, 0).values.real)
    lhs, rhs = phase_besov_ratio(phi, 0.8, 2, 2)
    assert abs(lhs / rhs - 1) <= 1e-6
    assert check_phase_besov(FAM, 0.8, grid=G).passed


G128 = GridSpec()


def small_cfg(kappa=1.0, **kw):
    return SolverConfig(params=HartreeParams(kappa=kappa), grid=G128, steps_per_decade=20, **kw)


@pytest.fixture(scope="module")
def fixed_point():
    c = small_cfg()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        v, _ = picard_solve(gaussian(G128, 3.0, 0.3), c)
    return c, v


def test_conservation_free_single_mode():
    c = small_cfg(kappa=0.0)
    v = free_amplitude_solve(single_mode(G128, (2, 1)), c)
    r = check_conservation_decomposition(v, c.params, v.times[0], v.times[-1], 0.8)
    assert r.lhs <= 1e-10
    assert r.metadata["bounds"]["V2_bound"]["lhs"] == 0
    with pytest.raises(ConfigurationError):
        check_conservation_decomposition(v, c.params, v.times[0], v.times[-1], 0.4)


def test_conservation_identity_on_fixed_point(fixed_point):
    c, v = fixed_point
    r = check_conservation_decomposition(v, c.params, v.times[0], v.times[-1], 0.8)
    assert r.metadata["identity_residual"] <= 1e-5
    assert r.metadata["quadrature_order"] >= 3
    assert all(np.isfinite(b["constant"]) for b in r.metadata["bounds"].values())


def test_gronwall_free_control_and_gate(fixed_point):
    c0 = small_cfg(kappa=0.0)
    s = free_amplitude_solve(gaussian(G128, 3.0, 0.3), c0)
    assert check_gronwall(s, s, c0.params, 0.8).lhs <= 1e-3
    c, v = fixed_point
    assert np.isfinite(check_gronwall(v, v, c.params, 0.8).lhs)
    with pytest.raises(ConfigurationError):
        check_gronwall(v, v, c.params, 1.2)


def test_holder_negative_control(fixed_point):
    c, v = fixed_point
    bad = check_holder_time(v, c.params, 0.8, refined=v, rho=0.6)
    assert bad.metadata["status"] == "out-of-contract" and not bad.passed
    good = check_holder_time(v, c.params, 0.8, refined=v)
    assert good.metadata["threshold"] == pytest.approx(0.4)
    assert good.passed


def test_contraction_identical_drivers(fixed_point):
    c, v = fixed_point
    w = linearized_solve(v, v.datum, c.t_min, c)
    r = check_contraction_bound(v, v, w, w, c.params)
    assert r.lhs == 0
    with pytest.raises(ConfigurationError):
        s = free_amplitude_solve(gaussian(G128, 3.0, 0.2), c)
        check_contraction_bound(v, s, w, w, c.params)


def test_continuity_envelope_fit_recovers_constant():
    t = np.geomspace(1e-3, 1.0, 40)
    y0, lam = 1e-4, 0.15
    y = continuity_envelope(t, y0, 0.7, lam)
    assert fit_continuity_constant(t, y, y0, lam) == pytest.approx(0.7, rel=1e-8)
    assert fit_continuity_constant(t, np.full_like(t, y0), y0, lam) == 0.0


def test_data_continuity_gates_and_identical_data(fixed_point):
    c, v = fixed_point
    v0 = v.datum
    with pytest.raises(ConfigurationError):
        check_data_continuity(v0, v0, 0.5, c)
    with pytest.raises(ConfigurationError):
        check_data_continuity(v0, v0, 0.3, c.with_(params=HartreeParams(rho=0.7)))
    r = check_data_continuity(v0, v0, 0.3, c, picard=(v, v))
    assert r.lhs == 0 and r.metadata["fitted_C"] == 0
