"""
From a static plan to a time-dependent one
==========================================

The static optimum says where mass goes and how much it changes.  The
dynamic picture does the transport in two instantaneous jumps, at t = 0 and
t = 1, with each point growing or shrinking along its own cheapest path
in between.
"""

from ubw1 import (
    DiscreteMeasure,
    MetricSpace,
    assemble_dynamic,
    catalog,
    continuity_residual,
    dual_potential,
    dynamic_catalog,
    solve_static,
)

space = MetricSpace.line([0.0, 0.7, 1.6])
rho0 = DiscreteMeasure(space, [1.0, 0.3, 0.0])
rho1 = DiscreteMeasure(space, [0.2, 0.0, 1.4])
sol = solve_static(rho0, rho1, catalog("hellinger"))
dp = dynamic_catalog("hellinger")
opt = assemble_dynamic(sol, dp, steps=64)

print(f"static value  {sol.primal_value:.8f}")
print(f"dynamic cost  {opt.total_cost:.8f}   (discretisation excess <= {opt.excess:.1e})")
print(f"weak continuity residual {continuity_residual(opt):.2e}")

# %%
# Growth paths: Hellinger masses follow squares of straight lines.

for point, traj in zip(opt.points, opt.trajectories):
    samples = traj.masses[::16]
    print(f"point {point}: " + "  ".join(f"{m:.4f}" for m in samples))

# %%
# The static dual potentials extend to a time-dependent potential through the
# flow.  It is feasible for the dynamic dual and certifies the same value.

surf = dual_potential(dp, sol.alpha, sol.beta)
bound = float(surf.beta @ rho1.weights + surf.alpha @ rho0.weights)
print(f"\ndual bound {bound:.8f}, worst feasibility violation {surf.feasibility_violation():.1e}")
for t in (0.0, 0.5, 1.0):
    print(f"  phi(t={t}) = {surf.values(t).round(5)}")
