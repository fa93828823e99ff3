"""
Fitting measured data
=====================

Linewidth from a sideband-calibrated scan, and the crater radius from a profile.
"""

import numpy as np

from fpcavity import estimation as est

rng = np.random.default_rng(0)

# a cavity-length scan with +-5 GHz sidebands as a frequency ruler
trace = est.synthetic_scan(2.86, noise=0.01, rng=rng)
fit = est.fit_linewidth(trace, 631.9)
print(f"linewidth = {fit['delta_nu']:.3f} +- {fit.sigmas['delta_nu']:.3f} GHz, Q = {fit['Q']:.0f}")

# many independent scans give a distribution of Q
Q = [est.fit_linewidth(est.synthetic_scan(2.86, noise=0.01, rng=rng), 631.9)["Q"] for _ in range(100)]
print(f"100 scans: Q = {np.mean(Q):.0f} +- {np.std(Q):.0f}")

# a Gaussian crater: radius of curvature at the bottom and depth
r = np.linspace(-6, 6, 121)
z = est.crater_model(r, 19.7, 0.64) + rng.normal(0, 0.003, r.size)
crater = est.fit_crater(r, z)
print(f"R_cav = {crater['R_cav']:.2f} +- {crater.sigmas['R_cav']:.2f} um, depth = {crater['depth']:.3f} um")
