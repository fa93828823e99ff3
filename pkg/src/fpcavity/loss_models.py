"""
Loss channels of the open cavity other than mirror transmission.

Interface roughness uses scalar Debye-Waller factors on the Fresnel
amplitudes; clipping and tilt follow a Gaussian-beam overlap with a mirror of
finite spherical extent. All per-round-trip losses are fractions of the
circulating energy.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class RoughInterface:
    sigma_q: float  # nm
    n_before: float
    n_after: float

    def __post_init__(self):
        if self.sigma_q < 0:
            raise ValueError("sigma_q must be >= 0")


def rough_interface_factors(iface: RoughInterface, wavelength) -> dict:
    """Amplitude scale factors for specular reflection and transmission.

    Reflection (from the ``n_before`` side) is damped by
    exp(-2 (2 pi sigma n_before / lambda)^2), transmission by
    exp(-1/2 (2 pi sigma (n_before - n_after) / lambda)^2).
    """
    lam = np.asarray(wavelength, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("wavelength must be positive")
    k0 = 2 * np.pi / lam
    reflection = np.exp(-2.0 * (k0 * iface.sigma_q * iface.n_before) ** 2)
    transmission = np.exp(-0.5 * (k0 * iface.sigma_q * (iface.n_before - iface.n_after)) ** 2)
    return {"reflection_scale": reflection, "transmission_scale": transmission}


def rough_interface_matrix(N_a: complex, N_b: complex, sigma_q: float, wavelength) -> np.ndarray:
    """(E, H) jump matrix across a rough interface from medium a (front) to b (back).

    Maps the tangential fields just behind the interface to those just in
    front of it. Reduces to the identity for sigma_q = 0.
    """
    lam = np.atleast_1d(np.asarray(wavelength, dtype=float))
    r_ab = (N_a - N_b) / (N_a + N_b)
    r_ba = -r_ab
    t_ab = 2 * N_a / (N_a + N_b)
    t_ba = 2 * N_b / (N_a + N_b)
    front = rough_interface_factors(RoughInterface(sigma_q, N_a.real, N_b.real), lam)
    back = rough_interface_factors(RoughInterface(sigma_q, N_b.real, N_a.real), lam)
    r_ab = r_ab * front["reflection_scale"]
    r_ba = r_ba * back["reflection_scale"]
    t_ab = t_ab * front["transmission_scale"]
    t_ba = t_ba * front["transmission_scale"]

    # wave-amplitude interface matrix (b-side amplitudes -> a-side amplitudes)
    D = np.empty(lam.shape + (2, 2), dtype=complex)
    D[..., 0, 0] = 1.0
    D[..., 0, 1] = -r_ba
    D[..., 1, 0] = r_ab
    D[..., 1, 1] = t_ab * t_ba - r_ab * r_ba
    D /= t_ab[..., None, None]

    to_fields_a = np.array([[1.0, 1.0], [N_a, -N_a]], dtype=complex)
    from_fields_b = 0.5 * np.array([[1.0, 1.0 / N_b], [1.0, -1.0 / N_b]], dtype=complex)
    return to_fields_a @ D @ from_fields_b


@dataclass(frozen=True)
class ClippingGeometry:
    """Curved-mirror geometry for clipping. D, R_cav and depth in um, theta in degrees."""

    D: float
    R_cav: float
    theta: float = 0.0
    depth: float = 0.64

    def __post_init__(self):
        if not (self.D > 0 and self.R_cav > 0 and self.depth > 0):
            raise ValueError("D, R_cav and depth must be positive")
        if self.theta < 0:
            raise ValueError("tilt angle must be >= 0")


def clipping_loss(geom: ClippingGeometry, w_I) -> np.ndarray | float:
    """Round-trip clipping loss for beam radius ``w_I`` (um) at the curved mirror."""
    w = np.asarray(w_I, dtype=float)
    if np.any(w <= 0):
        raise ValueError("beam radius must be positive")
    a = geom.R_cav * np.radians(geom.theta)
    loss = np.exp(-geom.D**2 / (2 * w**2)) * (1 + (a * geom.D / w**2) ** 2)
    return float(loss) if loss.ndim == 0 else loss


@dataclass(frozen=True)
class LossBudget:
    """Per-round-trip fractional losses at one wavelength and mode number."""

    T_top: float
    T_bottom: float
    L_scatter: float
    L_absorb: float
    L_clip: float
    wavelength: float
    mode_number: int
    cavity_length: float  # nm, air gap plus field penetration

    @property
    def L_sim(self) -> float:
        """All channels captured by the 1D stack calculation (no clipping)."""
        return self.T_top + self.T_bottom + self.L_scatter + self.L_absorb

    @property
    def L_total(self) -> float:
        return self.L_sim + self.L_clip

    @property
    def finesse(self) -> float:
        return 2 * np.pi / self.L_total

    @property
    def Q_sim(self) -> float:
        return 4 * np.pi * self.cavity_length / self.wavelength / self.L_total

    def as_dict(self) -> dict:
        doc = asdict(self)
        doc.update(L_sim=self.L_sim, L_total=self.L_total, finesse=self.finesse, Q_sim=self.Q_sim)
        return doc

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True))


def _mirror_losses(stack, wavelength):
    """(T, absorption, scatter) of a mirror stack seen from the cavity side."""
    from fpcavity.layered_media import stack_response

    full = stack_response(stack, [wavelength])
    smooth = stack_response(stack.smooth(), [wavelength])
    T = float(full.T[0])
    absorb = float(smooth.A[0])
    scatter = float(full.A[0]) - absorb
    return T, max(absorb, 0.0), max(scatter, 0.0)


def absorption_loss(assembly, wavelength: float, kappa_ext: float | None = None) -> float:
    """Round-trip absorption of the assembly, optionally overriding the membrane extinction.

    Computed from the full transfer-matrix solve of both mirrors (membrane
    included in the bottom one) with roughness switched off.
    """
    if kappa_ext is not None:
        if kappa_ext < 0:
            raise ValueError("kappa_ext must be >= 0")
        assembly = assembly.with_membrane_kappa(kappa_ext)
    _, abs_top, _ = _mirror_losses(assembly.top_mirror, wavelength)
    _, abs_bottom, _ = _mirror_losses(assembly.bottom_reflector(), wavelength)
    return abs_top + abs_bottom


class OffResonanceError(ValueError):
    pass


def assemble_budget(assembly, wavelength: float, mode_number: int, include_clipping: bool = True,
                    tolerance: float = 1e-3) -> LossBudget:
    """Loss budget of a resonant assembly.

    The air gap must already be tuned to the ``mode_number`` resonance at
    ``wavelength`` (see ``fpcavity.gaussian_cavity.resonant_air_gap``).
    """
    from fpcavity import gaussian_cavity as gc

    expected = gc.resonant_air_gap(assembly, wavelength, mode_number)
    if abs(expected - assembly.air_gap) > tolerance:
        raise OffResonanceError(
            f"air gap {assembly.air_gap:.4f} nm is not resonant for q_air={mode_number} at "
            f"{wavelength} nm (expected {expected:.4f} nm); tune it with "
            "gaussian_cavity.resonant_air_gap or CavityAssembly.tuned"
        )
    T_top, abs_top, scat_top = _mirror_losses(assembly.top_mirror, wavelength)
    T_bottom, abs_bottom, scat_bottom = _mirror_losses(assembly.bottom_reflector(), wavelength)
    L_clip = 0.0
    if include_clipping and assembly.clipping is not None:
        w = gc.beam_waist_curved(wavelength, assembly.crater.R_cav, assembly.clipping_length / 1000.0)
        L_clip = clipping_loss(assembly.clipping, w)
    return LossBudget(
        T_top=T_top,
        T_bottom=T_bottom,
        L_scatter=scat_top + scat_bottom,
        L_absorb=abs_top + abs_bottom,
        L_clip=float(L_clip),
        wavelength=float(wavelength),
        mode_number=int(mode_number),
        cavity_length=gc.cavity_length(assembly, wavelength),
    )

