"""From an asymptotic state u0 to the solution u(t) for large t, and how fast it scatters.

Run: python3 demos/03_wave_operator.py
"""
import numpy as np

from hartree_mwo.data import gaussian
from hartree_mwo.evolution import SolverConfig, construct_mwo_pipeline
from hartree_mwo.spectral import GridSpec

grid = GridSpec(2, 64, 16 * np.pi)
cfg = SolverConfig(grid=grid, steps_per_decade=20, T=1.0)
# u0 on the dual grid: a narrow Gaussian, whose amplitude datum conj(F u0) has width 3
u0 = gaussian(grid.dual(), width=1 / 3, amplitude=0.3 * 9)

res = construct_mwo_pipeline(u0, cfg)
print("      t       ||u(t)||   ||u_c; H^rho||   gap to u0 in FH^rho")
for k in range(0, len(res.t), 10):
    print(f"{res.t[k]:9.2f}   {res.l2[k]:.6f}   {res.uc_h[k]:.6f}         {res.vc_gap[k]:.3e}")
slope = np.polyfit(np.log(res.t[-20:]), np.log(res.vc_gap[-20:]), 1)[0]
print(f"\nthe gap decays like t^{slope:.2f} over the last 20 points")

# u itself spreads over a region of size ~ t, so physical reconstruction is only cheap for moderate t
k = int(np.searchsorted(res.t, 2.0))
u = res.physical(k)
print(f"u(t = {res.t[k]:.2f}) lives on a {u.grid.points_per_axis}^2 grid of side {u.grid.box_length:.0f}; "
      f"||u|| = {u.norm():.6f}")
