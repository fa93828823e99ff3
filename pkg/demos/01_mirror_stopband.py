"""
Mirror reflectance and stopband
===============================

Build the two quarter-wave Bragg mirrors and look at their spectra.
"""

import numpy as np

from fpcavity import designs
from fpcavity.layered_media import stack_response, stopband_center

# the top mirror: 14 high/low pairs centred at 625 nm on a silica substrate
top = designs.top_mirror()
grid = np.linspace(450, 850, 2001)
response = stack_response(top, grid)

# the stopband is where reflectance stays above 99 %
print(f"stopband centre: {stopband_center(response):.1f} nm")

# transmission at the two working wavelengths sets the mirror loss per pass
for lam in (designs.MEASUREMENT_WAVELENGTH, designs.ZPL_WAVELENGTH):
    T_top = stack_response(top, [lam]).T[0]
    T_bottom = stack_response(designs.bottom_mirror(), [lam]).T[0]
    print(f"{lam:.1f} nm: T_top = {T_top * 1e6:.1f} ppm, T_bottom = {T_bottom * 1e6:.1f} ppm")

# the spectrum is written in the standard wavelength_nm,R,T,A layout
response.to_csv("top_mirror_spectrum.csv")
