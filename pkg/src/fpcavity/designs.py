"""Reference device: SiO2/Ta2O5 Bragg mirrors, a diamond membrane and a Gaussian crater."""

from __future__ import annotations

from dataclasses import replace

from fpcavity.gaussian_cavity import CavityAssembly, CraterProfile
from fpcavity.layered_media import Layer, LayerStack, OpticalIndex, build_quarter_wave_dbr

N_HIGH = 2.11  # Ta2O5
N_LOW = 1.46  # SiO2, also the substrate
N_DIAMOND = 2.41
STOPBAND_CENTER = 625.0  # nm
TOP_PAIRS = 14
BOTTOM_PAIRS = 15

ZPL_WAVELENGTH = 637.7  # nm
MEASUREMENT_WAVELENGTH = 631.9  # nm

MEMBRANE_THICKNESS = 733.0  # nm, measured sample
DIAMOND_CONFINED_THICKNESS = 727.4  # nm, 11 quarter waves at the ZPL
AIR_CONFINED_THICKNESS = 793.5  # nm, 12 quarter waves at the ZPL

CRATER_RADIUS = 21.0  # um
CRATER_RADIUS_GAUSSIAN_FIT = 19.7  # um
CRATER_DEPTH = 0.64  # um
MIRROR_EXTENT = 5.9  # um
SURFACE_ROUGHNESS = 0.3  # nm RMS


def substrate() -> OpticalIndex:
    return OpticalIndex(N_LOW)


def bottom_mirror(pairs: int = BOTTOM_PAIRS, center: float = STOPBAND_CENTER) -> LayerStack:
    return build_quarter_wave_dbr(center, pairs, N_HIGH, N_LOW, substrate())


def top_mirror(pairs: int = TOP_PAIRS, center: float = STOPBAND_CENTER) -> LayerStack:
    return build_quarter_wave_dbr(center, pairs, N_HIGH, N_LOW, substrate())


def diamond_membrane(thickness: float = MEMBRANE_THICKNESS, roughness: float = 0.0,
                     kappa_ext: float = 0.0) -> Layer:
    return Layer(OpticalIndex(N_DIAMOND, kappa_ext), thickness, roughness)


def bare_cavity(air_gap: float = 1000.0, tilt: float = 0.0, extent: float | None = MIRROR_EXTENT,
                R_cav: float = CRATER_RADIUS) -> CavityAssembly:
    return CavityAssembly(
        bottom_mirror=bottom_mirror(),
        top_mirror=top_mirror(),
        membrane=None,
        air_gap=air_gap,
        crater=CraterProfile(R_cav, CRATER_DEPTH),
        tilt=tilt,
        extent=extent,
    )


def diamond_cavity(thickness: float = MEMBRANE_THICKNESS, roughness: float = 0.0, kappa_ext: float = 0.0,
                   air_gap: float = 1000.0, tilt: float = 0.0, extent: float | None = MIRROR_EXTENT,
                   R_cav: float = CRATER_RADIUS) -> CavityAssembly:
    return replace(
        bare_cavity(air_gap, tilt, extent, R_cav),
        membrane=diamond_membrane(thickness, roughness, kappa_ext),
    )
