"""
Quality factor, finesse and clipping
====================================

Loss budgets for successive air modes, with and without the membrane.
"""

from fpcavity import designs
from fpcavity import gaussian_cavity as gc

lam = designs.MEASUREMENT_WAVELENGTH

# a single budget shows where the round-trip loss goes
row = gc.q_vs_mode_number(designs.diamond_cavity(roughness=0.3), lam, [5])[0]
for key, value in row.budget.as_dict().items():
    print(f"  {key:14s} {value:.6g}")

# Q grows linearly with the air mode until the beam starts to overfill the crater
bare = designs.bare_cavity(tilt=0.27)
for r in gc.q_vs_mode_number(bare, lam, range(3, 13)):
    flag = "" if r.accessible else "  (shallower than crater)"
    print(f"q_air = {r.q_air:2d}: Q = {r.Q:9.0f}, L_clip = {r.budget.L_clip:.2e}{flag}")

# finesse is the slope of Q against q_air over the linear region
for label, cavity in (("bare", designs.bare_cavity()),
                      ("perfect diamond", designs.diamond_cavity()),
                      ("rough diamond", designs.diamond_cavity(roughness=0.3))):
    print(f"{label:16s} finesse = {gc.simulated_finesse(cavity, lam)['finesse']:.0f}")
