"""
Vacuum field and Purcell enhancement
====================================

Quantize the cavity field, then predict what it does to an NV centre.
"""

from fpcavity import designs
from fpcavity import purcell_engine as pe

lam0 = designs.ZPL_WAVELENGTH
cavity = designs.diamond_cavity(roughness=designs.SURFACE_ROUGHNESS)

# one photon in the fourth air mode, normalized over the Gaussian cross-section
mode = pe.quantize_assembly(cavity.tuned(lam0, 4), lam0)
volume = pe.effective_mode_volume(mode)
print(f"E_vac = {mode.E_vac_max_kV_per_m:.1f} kV/m, V_eff = {volume['V_lambda']:.1f} (lambda/n)^3")

# the simulated Q gives the ideal enhancement
report = pe.predict(cavity, lam0, 4)
for key in ("F_P", "tau_cav_ns", "linewidth_MHz", "eta_ZPL_fraction", "eta_ZPL_jc_fraction", "g_over_2pi_MHz"):
    print(f"  {key:20s} {report.as_dict()[key]:.4g}")

# the measured Q is lower, and so is the achievable enhancement
measured = pe.predict(cavity, lam0, 4, Q=121_700)
print(f"with Q = 121700: F_P = {measured.F_P:.0f}")
