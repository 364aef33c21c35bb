"""
Which static penalties come from a growth rate?
===============================================

Given the static profile h_S, the iterated-composition limit q[h_S] is the
only candidate growth profile.  When it is concave it works, and its flow at
time 1 gives h_S back.
"""

import numpy as np

from ubw1 import catalog, decide_dynamic, flow, no_dynamic_example, reconstruct

z = np.linspace(-0.9, 2.0, 8)
rep = reconstruct(catalog("hellinger"), grid=z)
print("hellinger: q[h_S] next to -z^2")
for zi, qi in zip(rep.z, rep.q_values):
    print(f"  z = {zi:6.3f}   q = {qi:12.8f}   -z^2 = {-zi * zi:12.8f}")

# %%
# The witness drives the growth ODE; one time unit of flow lands back on h_S.

exists, witness = decide_dynamic(rep)
for zi in (0.5, 1.0, 2.0):
    print(f"  F_1({zi}) = {flow(witness, 1.0, zi).value:.8f}   h_S = {zi / (1 + zi):.8f}")

# %%
# A profile with three straight pieces has the right shape for a static
# model but fails: its derivative jumps after the fixed point, and q is not
# concave there.

nd = reconstruct(no_dynamic_example())
exists, _ = decide_dynamic(nd)
print(f"\nmin(z, z/2 + 1/2, z/4 + 1): dynamic model exists = {exists}")
print(f"  {nd.details}")

# %%
# The rows of the catalog that do have growth profiles.

for name in ("jensen_shannon", "chi2", "tv", "pwl(-2,-1,2,1,2,0.5)"):
    r = reconstruct(catalog(name))
    ok, _ = decide_dynamic(r)
    print(f"{name:>22}: exists={ok}  domain of q = [{r.d_lo:.4g}, {r.d_hi:.4g}]")
