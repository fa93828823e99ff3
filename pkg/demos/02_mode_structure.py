"""
Mode structure with a diamond membrane
======================================

Resonance wavelength versus air gap, and how membrane thickness sets the
dispersion at the emitter wavelength.
"""

import numpy as np

from fpcavity import designs
from fpcavity import gaussian_cavity as gc

lam0 = designs.ZPL_WAVELENGTH

# the experimental membrane is 733 nm thick
cavity = designs.diamond_cavity()
c = gc.classify_confinement(designs.MEMBRANE_THICKNESS, designs.N_DIAMOND, lam0)
print(f"t_d = 733 nm is {c['optical_thickness_waves']:.2f} waves thick: {c['class']}")

# sweep the air gap and follow every resonance in the 600 to 660 nm window
mmap = gc.mode_map(cavity, np.linspace(500, 3000, 251), (600, 660))
mmap.to_csv("mode_map.csv")
print(f"{len(mmap)} resonances mapped")

# diamond-like and air-like modes repel: the branch slope dips near the crossings
for crossing in gc.avoided_crossings(mmap):
    print(f"  anticrossing near t_a = {crossing['air_gap']:.0f} nm, lambda = {crossing['wavelength']:.1f} nm")

# compare the two limiting regimes at the fourth air mode
for label, td in (("diamond-confined", designs.DIAMOND_CONFINED_THICKNESS),
                  ("air-confined", designs.AIR_CONFINED_THICKNESS)):
    slope = gc.dispersion_slope(designs.diamond_cavity(thickness=td), lam0, 4)
    print(f"{label:17s} t_d = {td:.1f} nm: dlambda/dt_a = {slope:.3f}")
