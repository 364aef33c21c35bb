"""
Two sites, one Dirac each
=========================

A unit mass at site 0 turns into a mass r at distance L.  Part of the mass
(a) travels before it changes and part (b) travels after.  For Hellinger the
optimum is interior exactly when 1/S(L) < r < S(L), with
S(L) = (L/2 + sqrt(L^2/4 + 1))^2.
"""

import numpy as np

from ubw1 import DiracInstance, catalog, phase_diagram, solve_dirac

hel = catalog("hellinger")
sol = solve_dirac(DiracInstance(1.5, 1.0, 0.0, 0.0, 1.0, hel))
print(f"L = 1.5, unit masses: a = {sol.a:.8f}, b = {sol.b:.8f}, cost = {sol.value:.8f}, {sol.regime}")

# %%
# Phase map: '.' interior, 'b' all mass moved before growing (b = 0),
# 'a' all change done before moving (a = 0).

Ls = np.linspace(0.2, 4.0, 20)
ratios = np.geomspace(0.02, 50, 24)[::-1]
cells = {(L, r): reg for L, r, reg in phase_diagram(hel, Ls, ratios)}
mark = {"interior": ".", "boundary_b0": "b", "boundary_a0": "a", "boundary_other": "o"}
for r in ratios:
    row = "".join(mark[cells[(float(L), float(r))]] for L in Ls)
    print(f"r = {r:8.3f}  {row}")
print(" " * 12 + "L from 0.2 to 4.0")

# %%
# tv, by contrast, carries the mass whenever L < 2 and never beyond.

tv = catalog("tv")
for L in (1.0, 1.99, 2.01, 3.0):
    s = solve_dirac(DiracInstance(L, 1.0, 0.0, 0.0, 1.0, tv))
    print(f"tv, L = {L}: carried {s.a + s.b:.3f}, cost {s.value:.3f}")
