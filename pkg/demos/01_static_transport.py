"""
Moving mass or changing it
==========================

A unit mass sits at 0 and a unit mass is wanted at distance L.  Each model
decides how much to carry and how much to destroy and recreate.  The flat
norm (tv) never carries anything once L passes 2; Hellinger always carries
some of it, but less and less.
"""

import numpy as np

from ubw1 import DiscreteMeasure, MetricSpace, canonicalize, catalog, solve_static

models = ["tv", "hellinger", "jensen_shannon"]
print(f"{'L':>5} " + " ".join(f"{m:>16}" for m in models) + "   carried (hellinger)")
for L in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0]:
    space = MetricSpace.line([0.0, L])
    rho0 = DiscreteMeasure(space, [1.0, 0.0])
    rho1 = DiscreteMeasure(space, [0.0, 1.0])
    values = []
    for name in models:
        sol = solve_static(rho0, rho1, catalog(name))
        values.append(sol.primal_value)
        if name == "hellinger":
            carried = sol.pi0.matrix[0, 1] + sol.pi1.matrix[0, 1]
    print(f"{L:5.2f} " + " ".join(f"{v:16.6f}" for v in values) + f"   {carried:.4f}")

# %%
# The LP returns a bracket.  Its lower end comes from dual potentials that are
# exactly feasible, so the true value sits between the two numbers.

rng = np.random.default_rng(3)
space = MetricSpace(rng.uniform(0, 2, size=(6, 2)))
rho0 = DiscreteMeasure(space, rng.uniform(0, 1, 6))
rho1 = DiscreteMeasure(space, rng.uniform(0, 1.5, 6))
sol = solve_static(rho0, rho1, catalog("hellinger"))
print(f"\nsix random points: value in [{sol.dual_value:.10f}, {sol.primal_value:.10f}]")
print("growing (plus) / shrinking (minus) / static (equal):", sol.partition)

# %%
# Optimal plans are rarely unique.  canonicalize reroutes a plan into the
# support pattern that the structure results single out, at no extra cost.

canon = canonicalize(sol, catalog("hellinger"))
print(f"after canonicalize: {canon.primal_value:.10f}, notes: {canon.notes or 'none'}")
