"""
Vacuum-field quantization, mode volume and Purcell enhancement.

The vacuum field is the transfer-matrix standing wave of the tuned assembly,
scaled so that the electromagnetic energy of a mode with constant transverse
beam radius w equals hbar*omega/2:

    (pi/2) w^2 eps0 * integral n(z)^2 |E(z)|^2 dz = hbar omega / 2

Emitter predictions assume an optimally placed dipole aligned with the mode
polarization and unity internal quantum efficiency.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import constants
from scipy.optimize import minimize_scalar

from fpcavity.gaussian_cavity import CavityAssembly, beam_waist_flat
from fpcavity.layered_media import FieldProfile, InvalidInputError, field_distribution, write_csv
from fpcavity.loss_models import assemble_budget

HBAR = constants.hbar
EPS0 = constants.epsilon_0
C_LIGHT = constants.c
E_CHARGE = constants.e


class NodePlacementWarning(UserWarning):
    """Emitter sits at (or very near) a node of the vacuum field."""


@dataclass(frozen=True)
class QuantizedMode:
    """Normalized vacuum field of one cavity mode.

    ``profile`` carries E_vac in V/m on a z grid in nm (z = 0 at the top
    substrate). The membrane occupies ``membrane_span`` (nm) and has index
    ``membrane_index``.
    """

    profile: FieldProfile
    w_I: float  # um
    omega: float  # rad/s
    wavelength: float  # nm
    membrane_index: float
    membrane_span: tuple[float, float]
    antinode: float  # nm, antinode nearest the membrane centre
    E_vac_max: float  # V/m, largest vacuum field inside the membrane

    @property
    def E_vac_max_kV_per_m(self) -> float:
        return self.E_vac_max / 1000.0

    @property
    def energy(self) -> float:
        """Electromagnetic energy of the normalized field (J); equals hbar*omega/2."""
        w = self.w_I * 1e-6
        return 0.5 * np.pi * w**2 * EPS0 * self.profile.weighted_energy_integral() * 1e-9

    @property
    def cubic_wavelength(self) -> float:
        """(lambda / n)^3 in um^3 for the membrane material."""
        return (self.wavelength / 1000.0 / self.membrane_index) ** 3

    @property
    def V_eff(self) -> float:
        """Mode volume at the antinode in units of (lambda/n)^3."""
        return effective_mode_volume(self)["V_lambda"]


@dataclass(frozen=True)
class EmitterSpec:
    """Point emitter; defaults describe a negatively charged NV centre.

    ``dipole_factor`` is d/e in nm; when omitted it is sqrt(xi0) * 0.108 nm.
    ``position`` (nm, full-stack coordinate) of None means the antinode
    nearest the membrane centre.
    """

    tau0: float = 12.6  # ns
    xi0: float = 0.0255
    dipole_factor: float | None = None  # nm
    position: float | None = None

    def __post_init__(self):
        if not 0 < self.xi0 < 1:
            raise InvalidInputError("xi0 must lie in (0, 1)")
        if not self.tau0 > 0:
            raise InvalidInputError("tau0 must be positive")
        if self.dipole_factor is not None and not self.dipole_factor > 0:
            raise InvalidInputError("dipole_factor must be positive")

    @property
    def dipole_nm(self) -> float:
        return np.sqrt(self.xi0) * 0.108 if self.dipole_factor is None else self.dipole_factor

    @property
    def optimal_placement(self) -> bool:
        return self.position is None


@dataclass(frozen=True)
class EmitterCouplingReport:
    """Emitter-facing predictions. Rates are given as ordinary frequencies (rate / 2 pi)."""

    F_P: float
    beta: float
    tau_cav: float  # ns
    linewidth: float  # MHz
    eta_ZPL: float
    eta_ZPL_jc: float
    g: float  # MHz
    kappa: float  # MHz
    gamma0: float  # MHz
    Q: float
    wavelength: float  # nm
    E_vac: float  # V/m
    free_space_limit: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def cooperativity(self) -> float:
        return float(4 * self.g**2 / (self.kappa * self.gamma0))

    @property
    def weak_coupling(self) -> bool:
        return bool(self.kappa > self.g > self.gamma0)

    def as_dict(self) -> dict:
        doc = {
            "F_P": self.F_P,
            "beta": self.beta,
            "tau_cav_ns": self.tau_cav,
            "linewidth_MHz": self.linewidth,
            "eta_ZPL_fraction": self.eta_ZPL,
            "eta_ZPL_jc_fraction": self.eta_ZPL_jc,
            "g_over_2pi_MHz": self.g,
            "kappa_over_2pi_MHz": self.kappa,
            "gamma0_over_2pi_MHz": self.gamma0,
            "cooperativity": self.cooperativity,
            "Q": self.Q,
            "wavelength_nm": self.wavelength,
            "E_vac_V_per_m": self.E_vac,
            "free_space_limit": self.free_space_limit,
            "weak_coupling": self.weak_coupling,
        }
        doc.update(self.extra)
        return doc

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n")


def _membrane_layer_index(assembly: CavityAssembly) -> int:
    if assembly.membrane is None:
        raise InvalidInputError("quantization needs an assembly with a membrane")
    return len(assembly.top_mirror.layers) + 1


def _abs_field(profile: FieldProfile, z) -> float:
    return abs(profile.field_at(float(z)))


def _antinodes(profile: FieldProfile, z0: float, z1: float, samples: int = 4001) -> list[float]:
    z = np.linspace(z0, z1, samples)
    amp = np.array([_abs_field(profile, x) for x in z])
    found = []
    for i in range(1, samples - 1):
        if amp[i] >= amp[i - 1] and amp[i] > amp[i + 1]:
            res = minimize_scalar(lambda x: -_abs_field(profile, x), bounds=(z[i - 1], z[i + 1]),
                                  method="bounded", options={"xatol": 1e-9})
            found.append(float(res.x))
    # edges count when the field is still rising towards the interface
    if amp[0] > amp[1]:
        found.append(float(z0))
    if amp[-1] > amp[-2]:
        found.append(float(z1))
    return sorted(found)


def quantize_field(profile: FieldProfile, w_I: float, wavelength: float | None = None,
                   membrane_span: tuple[float, float] | None = None,
                   membrane_index: float | None = None) -> QuantizedMode:
    """Scale ``profile`` so its energy for a beam of radius ``w_I`` (um) is hbar*omega/2.

    ``membrane_span`` (nm) and ``membrane_index`` default to the layer with the
    highest index.
    """
    if not w_I > 0:
        raise InvalidInputError("beam radius must be positive")
    lam = profile.wavelength if wavelength is None else wavelength
    integral = profile.weighted_energy_integral()
    if not integral > 0 or not np.isfinite(integral):
        raise InvalidInputError("cannot quantize a zero field profile")
    if membrane_span is None or membrane_index is None:
        seg = max(profile.segments, key=lambda s: s.index.real)
        membrane_span = (seg.z_start, seg.z_start + seg.thickness)
        membrane_index = seg.index.real
    omega = 2 * np.pi * C_LIGHT / (lam * 1e-9)
    w = w_I * 1e-6
    scale = np.sqrt((HBAR * omega / 2) / (0.5 * np.pi * w**2 * EPS0 * integral * 1e-9))
    normalized = profile.scaled(scale)
    z0, z1 = membrane_span
    peaks = _antinodes(normalized, z0, z1)
    if not peaks:
        peaks = [0.5 * (z0 + z1)]
    centre = 0.5 * (z0 + z1)
    antinode = min(peaks, key=lambda z: abs(z - centre))
    E_max = max(_abs_field(normalized, z) for z in peaks)
    return QuantizedMode(normalized, float(w_I), omega, float(lam), float(membrane_index),
                         (float(z0), float(z1)), antinode, float(E_max))


def quantize_assembly(assembly: CavityAssembly, wavelength: float, sampling: int = 64,
                      w_I: float | None = None) -> QuantizedMode:
    """Vacuum field of the assembly at its resonance; ``w_I`` defaults to the flat-mirror waist."""
    idx = _membrane_layer_index(assembly)
    stack = assembly.full_stack()
    profile = field_distribution(stack, wavelength, sampling=sampling)
    seg = profile.segments[idx]
    if w_I is None:
        w_I = beam_waist_flat(wavelength, assembly.crater.R_cav, assembly.clipping_length / 1000.0)
    return quantize_field(profile, w_I, wavelength, (seg.z_start, seg.z_start + seg.thickness),
                          assembly.membrane.index.n)


def effective_mode_volume(mode: QuantizedMode, emitter_position: float | None = None,
                          node_threshold: float = 1e-3) -> dict:
    """V_eff = (hbar omega / 2) / (eps0 n^2 |E_vac(z0)|^2) at the emitter position.

    Returns the volume in (lambda/n)^3 units (``V_lambda``) and in um^3
    (``V_um3``). A warning is issued when |E(z0)|^2 is below
    ``node_threshold`` times the membrane maximum.
    """
    z = mode.antinode if emitter_position is None else float(emitter_position)
    z0, z1 = mode.membrane_span
    if not z0 <= z <= z1:
        raise InvalidInputError(f"emitter position {z} nm lies outside the membrane [{z0}, {z1}]")
    E = _abs_field(mode.profile, z)
    if E**2 < node_threshold * mode.E_vac_max**2:
        warnings.warn(f"emitter at z={z:.3f} nm sits at a field node; V_eff diverges",
                      NodePlacementWarning, stacklevel=2)
    if E == 0:
        return {"V_lambda": np.inf, "V_um3": np.inf, "position": z, "E_vac": 0.0}
    V_m3 = (HBAR * mode.omega / 2) / (EPS0 * mode.membrane_index**2 * E**2)
    V_um3 = V_m3 * 1e18
    return {"V_lambda": float(V_um3 / mode.cubic_wavelength), "V_um3": float(V_um3), "position": z, "E_vac": E}


def purcell_factor(Q, V_eff) -> tuple[float, float]:
    """F_P = 1 + 3/(4 pi^2) * Q / V_eff (V_eff in (lambda/n)^3) and beta = (F_P - 1)/F_P."""
    Q = np.asarray(Q, dtype=float)
    V = np.asarray(V_eff, dtype=float)
    if np.any(Q < 0) or np.any(V <= 0):
        raise InvalidInputError("Q must be >= 0 and V_eff > 0")
    F = 1 + 3 / (4 * np.pi**2) * Q / V
    beta = (F - 1) / F
    if F.ndim == 0:
        return float(F), float(beta)
    return F, beta


def coupling_report(F_P: float, emitter: EmitterSpec, Q: float, wavelength: float, E_vac: float,
                    free_space_tol: float = 1e-3) -> EmitterCouplingReport:
    """Emitter predictions from F_P, the cavity Q and the vacuum field at the emitter (V/m)."""
    xi, tau0 = emitter.xi0, emitter.tau0 * 1e-9
    enhancement = 1 + xi * (F_P - 1)
    tau_cav = tau0 / enhancement
    gamma0 = 1 / tau0
    linewidth = enhancement * gamma0 / (2 * np.pi)
    eta = xi * F_P / enhancement
    omega = 2 * np.pi * C_LIGHT / (wavelength * 1e-9)
    g = E_CHARGE * emitter.dipole_nm * 1e-9 * E_vac / HBAR
    kappa = omega / Q if Q > 0 else np.inf
    C = 4 * g**2 / (kappa * gamma0)
    eta_jc = C / (C + 1)
    beta = (F_P - 1) / F_P
    MHz = 2 * np.pi * 1e6
    return EmitterCouplingReport(
        F_P=float(F_P), beta=float(beta), tau_cav=tau_cav * 1e9, linewidth=linewidth / 1e6,
        eta_ZPL=float(eta), eta_ZPL_jc=float(eta_jc), g=float(g / MHz), kappa=kappa / MHz, gamma0=gamma0 / MHz,
        Q=float(Q), wavelength=float(wavelength), E_vac=float(E_vac),
        free_space_limit=bool(F_P - 1 < free_space_tol),
    )


def emitter_report(F_P: float, emitter: EmitterSpec, mode: QuantizedMode, Q: float) -> EmitterCouplingReport:
    E = mode.E_vac_max if emitter.position is None else _abs_field(mode.profile, emitter.position)
    report = coupling_report(F_P, emitter, Q, mode.wavelength, E)
    report.extra.update(w_I_um=mode.w_I, V_eff_lambda3=float(effective_mode_volume(mode, emitter.position)["V_lambda"]))
    return report


def predict(assembly: CavityAssembly, wavelength: float, q_air: int, emitter: EmitterSpec | None = None,
            Q: float | None = None, include_clipping: bool = True) -> EmitterCouplingReport:
    """Tune the assembly to q_air, quantize, and report; ``Q`` overrides the simulated value."""
    emitter = emitter or EmitterSpec()
    tuned = assembly.tuned(wavelength, q_air)
    if Q is None:
        Q = assemble_budget(tuned, wavelength, q_air, include_clipping=include_clipping).Q_sim
    mode = quantize_assembly(tuned, wavelength)
    V = effective_mode_volume(mode, emitter.position)["V_lambda"]
    F_P, _ = purcell_factor(Q, V)
    report = emitter_report(F_P, emitter, mode, Q)
    report.extra.update(q_air=int(q_air), air_gap_nm=tuned.air_gap)
    return report


@dataclass(frozen=True)
class PurcellRow:
    label: str
    sigma_q: float
    q_air: int
    Q: float
    V_eff: float
    F_P: float


def purcell_vs_mode_number(assemblies: Mapping[str, CavityAssembly], wavelength: float,
                           q_air_range: Sequence[int], sigma_values: Sequence[float] = (0.0,),
                           include_clipping: bool = True) -> list[PurcellRow]:
    """F_P(q_air) for several assemblies and membrane-surface roughness values."""
    rows = []
    for label, base in assemblies.items():
        for sigma in sigma_values:
            variant = base.with_membrane(roughness=sigma)
            for q in q_air_range:
                tuned = variant.tuned(wavelength, int(q))
                Q = assemble_budget(tuned, wavelength, int(q), include_clipping=include_clipping).Q_sim
                V = effective_mode_volume(quantize_assembly(tuned, wavelength))["V_lambda"]
                F, _ = purcell_factor(Q, V)
                rows.append(PurcellRow(label, float(sigma), int(q), Q, V, F))
    return rows


def write_purcell_table(path, rows: Sequence[PurcellRow]) -> None:
    write_csv(path, ["label", "sigma_q_nm", "q_air", "Q", "V_eff_lambda3", "F_P"],
              [(r.label, r.sigma_q, r.q_air, r.Q, r.V_eff, r.F_P) for r in rows])
