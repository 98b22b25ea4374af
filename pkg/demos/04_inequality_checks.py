"""Empirical constants for the harmonic-analysis inequalities behind the energy estimate.

Small families and a 64^2 grid; the acceptance suite repeats this with 32 members on 128^2.

Run: python3 demos/04_inequality_checks.py
"""
import numpy as np

from hartree_mwo import estimates as est
from hartree_mwo.spectral import GridSpec

grid = GridSpec(2, 64, 16 * np.pi)
rand = est.TestFunctionFamily("random_band_limited", count=8)
gau = est.TestFunctionFamily("gaussian", count=8)
bumps = est.TestFunctionFamily("multi_bump", count=8)

reports = [
    est.check_sobolev_interpolation(gau, 0.4, 0.8, 2, 2, 2, 0.5, grid),
    est.check_leibniz(rand, 0.8, 2, 4, 4, 4, 4, grid),
    est.check_product_estimate(rand, 0.6, 0.6, grid),
    est.check_phase_besov(gau, 0.8, 2, 2, grid),
    est.check_commutator(bumps, est.CommutatorTuple.energy_instance(0.8), grid=grid),
]
print(f"{'check':28s} {'constant':>10s} {'grid x2':>8s} {'family x2':>9s}  passed")
for r in reports:
    fam = r.metadata.get("family_ratio") or float("nan")
    print(f"{r.check_id:28s} {r.empirical_constant:10.4g} {r.refinement_ratio:8.3f} {fam:9.3f}  {r.passed}")

# The single-mode case is where interpolation is an equality.
one = est.check_sobolev_interpolation(est.TestFunctionFamily("single_mode", count=4), 0.4, 0.8, 2, 2, 2, 0.5,
                                      grid, refine=False)
print(f"\nsingle modes: interpolation constant - 1 = {one.empirical_constant - 1:.1e}")
