"""
Cavity geometry and mode structure of a planar-concave open cavity.

Units: transfer-matrix quantities (wavelength, air gap, layer thickness) are
in nm. Gaussian-optics geometry (radius of curvature, crater depth, beam
radii, the lengths entering the beam-waist formulas) is in um.

The bottom and top mirrors are stored as ``LayerStack`` objects seen from the
cavity: incidence medium air, first layer facing the cavity, exit medium the
substrate. A membrane, when present, sits on the bottom mirror; its
``roughness_rms`` is the RMS roughness of its air-facing surface.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from fpcavity.layered_media import (
    InvalidInputError,
    Layer,
    LayerStack,
    OpticalIndex,
    _amplitudes,
    reflection_coefficient,
    stack_response,
    write_csv,
)
from fpcavity.loss_models import ClippingGeometry, LossBudget, assemble_budget


class InstabilityError(ValueError):
    """Raised when a Gaussian resonator of the given length is not stable."""


@dataclass(frozen=True)
class CraterProfile:
    """Gaussian crater z(r) = -d exp(-r^2 / (2 R d)); R_cav and depth in um."""

    R_cav: float
    depth: float

    def __post_init__(self):
        if not (self.R_cav > 0 and self.depth > 0):
            raise InvalidInputError("crater radius and depth must be positive")

    def profile(self, r):
        r = np.asarray(r, dtype=float)
        return -self.depth * np.exp(-(r**2) / (2 * self.R_cav * self.depth))

    def curvature(self, r=0.0):
        """Second derivative z''(r); equals 1/R_cav at the crater bottom."""
        r = np.asarray(r, dtype=float)
        a = 1.0 / (self.R_cav * self.depth)
        return self.depth * a * (1 - a * r**2) * np.exp(-a * r**2 / 2)


@dataclass(frozen=True)
class CavityAssembly:
    bottom_mirror: LayerStack
    top_mirror: LayerStack
    membrane: Layer | None = None
    air_gap: float = 1000.0  # nm
    crater: CraterProfile = field(default_factory=lambda: CraterProfile(21.0, 0.64))
    tilt: float = 0.0  # degrees
    extent: float | None = None  # um; None disables clipping

    def __post_init__(self):
        if not self.air_gap > 0:
            raise InvalidInputError("air gap must be positive")
        if self.tilt < 0:
            raise InvalidInputError("tilt must be >= 0")

    @property
    def accessible(self) -> bool:
        """False when the air gap is shallower than the crater (mirrors would touch)."""
        return self.air_gap >= self.crater.depth * 1000.0

    @property
    def clipping(self) -> ClippingGeometry | None:
        if self.extent is None:
            return None
        return ClippingGeometry(self.extent, self.crater.R_cav, self.tilt, self.crater.depth)

    @property
    def clipping_length(self) -> float:
        """Length entering the beam-waist formulas, nm: t_a (+ t_d / n_d with a membrane)."""
        if self.membrane is None:
            return self.air_gap
        return self.air_gap + self.membrane.thickness / self.membrane.index.n

    def bottom_reflector(self) -> LayerStack:
        """Membrane plus bottom mirror as one reflector seen from the air gap."""
        if self.membrane is None:
            return self.bottom_mirror
        bottom = self.bottom_mirror
        membrane = replace(self.membrane, roughness_rms=bottom.front_roughness)
        return LayerStack(
            bottom.incidence_medium,
            (membrane,) + bottom.layers,
            bottom.exit_medium,
            front_roughness=self.membrane.roughness_rms,
        )

    def full_stack(self, air_gap: float | None = None) -> LayerStack:
        """Complete structure from the top substrate down to the bottom substrate."""
        gap = self.air_gap if air_gap is None else air_gap
        top = self.top_mirror.flipped()
        bottom = self.bottom_reflector()
        air = Layer(self.top_mirror.incidence_medium, gap, bottom.front_roughness)
        return LayerStack(
            top.incidence_medium,
            top.layers + (air,) + bottom.layers,
            bottom.exit_medium,
            front_roughness=top.front_roughness,
        )

    def tuned(self, wavelength: float, q_air: int) -> "CavityAssembly":
        return replace(self, air_gap=resonant_air_gap(self, wavelength, q_air))

    def with_membrane(self, thickness: float | None = None, roughness: float | None = None,
                      kappa: float | None = None) -> "CavityAssembly":
        if self.membrane is None:
            raise InvalidInputError("assembly has no membrane")
        m = self.membrane
        if thickness is not None:
            m = replace(m, thickness=thickness)
        if roughness is not None:
            m = replace(m, roughness_rms=roughness)
        if kappa is not None:
            m = replace(m, index=OpticalIndex(m.index.n, kappa))
        return replace(self, membrane=m)

    def with_membrane_kappa(self, kappa: float) -> "CavityAssembly":
        return self.with_membrane(kappa=kappa)


@dataclass(frozen=True)
class ModeIndex:
    q: int = 0
    n: int = 0
    m: int = 0
    q_air: int = 1

    def __post_init__(self):
        for name in ("q", "n", "m", "q_air"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise InvalidInputError(f"mode index {name} must be a non-negative integer")


# --- Gaussian optics ------------------------------------------------------------


def effective_length(mode: ModeIndex, R_cav: float, wavelength: float, tol: float = 1e-6,
                     start: float | None = None, max_iter: int = 500) -> float:
    """Self-consistent effective length (um) of mode (q, n, m).

    Solves L = [q + (n + m + 1)/pi * arccos(sqrt(1 - L/R))] * lambda/2 by
    fixed-point iteration to |dL| < ``tol`` nm. ``R_cav`` in um (``np.inf``
    for a planar cavity), ``wavelength`` in nm.
    """
    half = wavelength / 2000.0
    order = mode.n + mode.m + 1
    L = mode.q * half if start is None else start
    for _ in range(max_iter):
        g = 1.0 - L / R_cav
        if not 0 < g <= 1:
            raise InstabilityError(f"L_eff = {L:.4f} um is outside the stable range (0, {R_cav})")
        new = (mode.q + order / np.pi * np.arccos(np.sqrt(g))) * half
        if abs(new - L) * 1000.0 < tol:
            return new
        L = new
    raise InstabilityError("fixed-point iteration for L_eff did not converge")


def radius_from_transverse_spacing(fundamental: float, transverse: float, q: int,
                                   transverse_order: int = 1) -> tuple[float, float]:
    """Radius of curvature and effective length (both um) from two mode wavelengths.

    ``fundamental`` is the (q,0,0) wavelength and ``transverse`` the wavelength
    of a (q,n,m) mode with n + m = ``transverse_order`` at the same cavity
    length, both in nm.
    """
    N = transverse_order
    lf, lt = fundamental / 1000.0, transverse / 1000.0
    L = N * q / (2 * (N + 1) / lf - 2 / lt)
    gouy = np.pi * (2 * L / lf - q)
    g = np.cos(gouy) ** 2
    if not 0 < g < 1:
        raise InstabilityError("mode spacing is inconsistent with a stable resonator")
    return L / (1 - g), L


def _check_stable(R_cav, L):
    if not (0 < L < R_cav):
        raise InstabilityError(f"cavity length {L} um must lie in (0, R_cav={R_cav} um)")


def beam_waist_curved(wavelength: float, R_cav: float, L: float) -> float:
    """Intensity beam radius (um) on the curved mirror; ``wavelength`` nm, lengths um."""
    _check_stable(R_cav, L)
    lam = wavelength / 1000.0
    return float(np.sqrt(lam * R_cav / np.pi) * (R_cav / L - 1) ** -0.25)


def beam_waist_flat(wavelength: float, R_cav: float, L: float) -> float:
    """Intensity beam waist (um) on the flat mirror; ``wavelength`` nm, lengths um."""
    _check_stable(R_cav, L)
    lam = wavelength / 1000.0
    return float(np.sqrt(lam / np.pi) * (L * R_cav - L**2) ** 0.25)


# --- resonances of the layered assembly --------------------------------------------


def mirror_phase(assembly: CavityAssembly, wavelength) -> np.ndarray:
    """Sum of the reflection phases of both reflectors seen from the air gap."""
    r_top = reflection_coefficient(assembly.top_mirror, wavelength)
    r_bottom = reflection_coefficient(assembly.bottom_reflector(), wavelength)
    return np.angle(r_top) + np.angle(r_bottom)


def _phase_offset(assembly, wavelength):
    # wrapped into (-2 pi, 0] so q_air = 1 is the first resonance with t_a > 0
    return -np.mod(-mirror_phase(assembly, wavelength), 2 * np.pi)


def resonant_air_gap(assembly: CavityAssembly, wavelength: float, q_air: int) -> float:
    """Air gap (nm) of the q_air-th fundamental resonance at ``wavelength``.

    Resonance means a round-trip phase 4 pi t_a / lambda - phi_top - phi_bottom
    equal to a multiple of 2 pi; q_air counts resonances from mirror contact.
    """
    if q_air < 1:
        raise InvalidInputError("q_air starts at 1")
    phi0 = _phase_offset(assembly, wavelength)
    return float((2 * np.pi * q_air + phi0) * wavelength / (4 * np.pi))


def air_mode_number(assembly: CavityAssembly, wavelength: float, air_gap: float | None = None) -> int:
    gap = assembly.air_gap if air_gap is None else air_gap
    phi0 = _phase_offset(assembly, wavelength)
    return int(round((4 * np.pi * gap / wavelength - phi0) / (2 * np.pi)))


def _penetration(stack: LayerStack, wavelength: float, step: float = 1e-3) -> float:
    # -1/2 d(arg r)/dk, from a central difference in wavelength
    lam = np.array([wavelength - step, wavelength + step])
    r = reflection_coefficient(stack, lam)
    dphase = np.angle(r[1] / r[0])
    dk = 2 * np.pi / lam[1] - 2 * np.pi / lam[0]
    return float(-0.5 * dphase / dk)


def penetration_length(assembly: CavityAssembly, wavelength: float) -> float:
    """Phase-dispersion length (nm) added to the air gap by both reflectors."""
    return _penetration(assembly.top_mirror, wavelength) + _penetration(assembly.bottom_reflector(), wavelength)


def cavity_length(assembly: CavityAssembly, wavelength: float) -> float:
    """Effective cavity length L_cav (nm): air gap plus field penetration."""
    return assembly.air_gap + penetration_length(assembly, wavelength)


def dispersion_slope(assembly: CavityAssembly, wavelength: float, q_air: int) -> float:
    """d(lambda)/d(t_a) along the q_air resonance through ``wavelength``."""
    tuned = assembly.tuned(wavelength, q_air)
    return wavelength / cavity_length(tuned, wavelength)


def lossless_q(assembly: CavityAssembly, wavelength: float, q_air: int) -> float:
    """Q from mirror transmissions alone (no scatter, absorption or clipping)."""
    tuned = assembly.tuned(wavelength, q_air)
    T_top = float(stack_response(tuned.top_mirror.smooth().lossless_copy(), [wavelength]).T[0])
    T_bottom = float(stack_response(tuned.bottom_reflector().smooth().lossless_copy(), [wavelength]).T[0])
    return 4 * np.pi * cavity_length(tuned, wavelength) / wavelength / (T_top + T_bottom)


def _golden_min(f, lo, hi, tol):
    """Vectorised golden-section minimisation of f over per-element brackets."""
    inv_phi = (np.sqrt(5) - 1) / 2
    a, b = np.array(lo, float), np.array(hi, float)
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while np.max(b - a) > tol:
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - inv_phi * (b - a)
        new_d = a + inv_phi * (b - a)
        c_keep, d_keep = np.where(left, new_c, d), np.where(left, c, new_d)
        fc_keep = np.where(left, np.nan, fd)
        fd_keep = np.where(left, fc, np.nan)
        c, d = c_keep, d_keep
        need_c, need_d = np.isnan(fc_keep), np.isnan(fd_keep)
        fc_new = fc_keep.copy()
        fd_new = fd_keep.copy()
        if need_c.any():
            fc_new[need_c] = f(c)[need_c]
        if need_d.any():
            fd_new[need_d] = f(d)[need_d]
        fc, fd = fc_new, fd_new
    return 0.5 * (a + b)


def full_reflectance(assembly: CavityAssembly, wavelength, air_gap) -> np.ndarray:
    """Reflectance of the whole device seen through the top substrate, element-wise in (lambda, t_a)."""
    lam = np.atleast_1d(np.asarray(wavelength, dtype=float))
    gaps = np.broadcast_to(np.asarray(air_gap, dtype=float), lam.shape)
    stack = assembly.full_stack()
    gap_index = len(assembly.top_mirror.layers)
    r, _ = _amplitudes(stack, lam, {gap_index: gaps})
    return np.abs(r) ** 2


def full_transmittance(assembly: CavityAssembly, wavelength) -> np.ndarray:
    return stack_response(assembly.full_stack(), np.atleast_1d(wavelength)).T


def resonance_linewidth(assembly: CavityAssembly, wavelength: float, q_air: int) -> dict:
    """Q from the FWHM of the full-device transmission peak (independent of the loss budget)."""
    tuned = assembly.tuned(wavelength, q_air)
    guess = lossless_q(assembly, wavelength, q_air)
    width = wavelength / guess

    def neg_T(lam):
        return -full_transmittance(tuned, lam)

    peak = float(_golden_min(neg_T, [wavelength - 3 * width], [wavelength + 3 * width], width * 1e-7)[0])
    t_max = -float(neg_T(peak)[0])

    def half(lam):
        return float(full_transmittance(tuned, lam)[0]) - 0.5 * t_max

    span = 20 * width
    lo = brentq(half, peak - span, peak, xtol=width * 1e-9)
    hi = brentq(half, peak, peak + span, xtol=width * 1e-9)
    nu_width = 1 / lo - 1 / hi
    return {"wavelength": peak, "fwhm_nm": hi - lo, "Q": (1 / peak) / nu_width, "T_max": t_max}


# --- confinement classes and mode maps ---------------------------------------------


def classify_confinement(t_d: float, n_d: float, wavelength: float, boundary: float = 0.25) -> dict:
    """Classify a membrane as diamond-/air-confined from its optical thickness.

    Odd multiples of a quarter wave put a field antinode at the membrane-air
    interface (membrane-confined), even multiples a node (air-confined). The
    detuning is the distance, in quarter waves, to the nearest canonical
    thickness; beyond ``boundary`` the geometry is reported as mixed.
    """
    if not (t_d > 0 and n_d > 0 and wavelength > 0):
        raise InvalidInputError("thickness, index and wavelength must be positive")
    quarter_waves = 4 * n_d * t_d / wavelength
    frac = np.mod(quarter_waves, 2.0)
    to_odd = abs(frac - 1.0)
    to_even = min(frac, 2.0 - frac)
    detuning = min(to_odd, to_even)
    if detuning > boundary:
        label = "mixed"
    elif to_odd < to_even:
        label = "diamond_confined"
    else:
        label = "air_confined"
    return {
        "class": label,
        "detuning": float(detuning),
        "quarter_waves": float(quarter_waves),
        "optical_thickness_waves": float(n_d * t_d / wavelength),
    }


def confinement_label(assembly: CavityAssembly, wavelength: float) -> str:
    if assembly.membrane is None:
        return "bare"
    m = assembly.membrane
    return classify_confinement(m.thickness, m.index.n, wavelength)["class"]


@dataclass(frozen=True)
class ModeMap:
    """Fundamental resonances on a (t_a, lambda) window.

    ``branch`` is the total longitudinal order j (continuous along a resonance
    curve); ``q_air`` counts resonances from mirror contact at fixed lambda.
    """

    air_gap: np.ndarray
    wavelength: np.ndarray
    q_air: np.ndarray
    branch: np.ndarray
    confinement: tuple[str, ...]

    def __len__(self):
        return len(self.air_gap)

    def branch_curve(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        sel = self.branch == j
        order = np.argsort(self.air_gap[sel])
        return self.air_gap[sel][order], self.wavelength[sel][order]

    def to_csv(self, path) -> None:
        rows = [
            (t, lam, int(q), c)
            for t, lam, q, c in zip(self.air_gap, self.wavelength, self.q_air, self.confinement)
        ]
        write_csv(path, ["t_a_nm", "lambda_nm", "q_air", "class"], rows)


def mode_map(assembly: CavityAssembly, air_gaps: Sequence[float], wavelength_range: tuple[float, float],
             grid_points: int = 2001, refine: bool = True, tol: float = 1e-4) -> ModeMap:
    """Resonance positions of the assembly over a grid of air gaps.

    Resonances are bracketed on the round-trip phase (sampled on
    ``grid_points`` wavelengths), solved to 1e-6 nm, and, when ``refine`` is
    set, polished by golden-section search for the minimum of the full-device
    reflectance to ``tol`` nm. Points come out ordered by t_a, then lambda.
    """
    gaps = np.sort(np.asarray(air_gaps, dtype=float))
    lo, hi = wavelength_range
    if not (0 < lo < hi) or np.any(gaps <= 0):
        raise InvalidInputError("air gaps and wavelength range must be positive and ordered")
    grid = np.linspace(lo, hi, grid_points)
    phase_grid = np.unwrap(mirror_phase(assembly, grid))

    def mirror_phase_unwrapped(lam):
        raw = mirror_phase(assembly, lam)
        ref = np.interp(lam, grid, phase_grid)
        return raw + 2 * np.pi * np.round((ref - raw) / (2 * np.pi))

    ta_out, lam_out, j_out = [], [], []
    for gap in gaps:
        total = 4 * np.pi * gap / grid - phase_grid
        order = total / (2 * np.pi)
        for j in range(int(np.ceil(order.min())), int(np.floor(order.max())) + 1):
            sign = order - j
            idx = np.nonzero(np.sign(sign[:-1]) * np.sign(sign[1:]) <= 0)[0]
            for i in idx:
                if sign[i] == 0 and i > 0:
                    continue

                def f(lam, gap=gap, j=j):
                    return 4 * np.pi * gap / lam - mirror_phase_unwrapped(lam) - 2 * np.pi * j

                a, b = grid[i], grid[i + 1]
                if f(a) == 0:
                    root = a
                elif f(b) == 0:
                    root = b
                else:
                    root = brentq(f, a, b, xtol=1e-7)
                ta_out.append(gap)
                lam_out.append(root)
                j_out.append(j)

    ta_arr = np.array(ta_out)
    lam_arr = np.array(lam_out)
    j_arr = np.array(j_out, dtype=int)
    if refine and len(lam_arr):
        half_width = np.array([max(5 * lam / _quick_q(assembly, lam, t), 5 * tol) for lam, t in zip(lam_arr, ta_arr)])
        lam_arr = _golden_min(lambda lam: full_reflectance(assembly, lam, ta_arr),
                              lam_arr - half_width, lam_arr + half_width, tol)
    q_arr = np.array([air_mode_number(assembly, lam, t) for lam, t in zip(lam_arr, ta_arr)], dtype=int)
    classes = tuple(confinement_label(assembly, lam) for lam in lam_arr)
    order = np.lexsort((lam_arr, ta_arr))
    return ModeMap(ta_arr[order], lam_arr[order], q_arr[order], j_arr[order], tuple(classes[i] for i in order))


def _quick_q(assembly, wavelength, gap):
    r_t = reflection_coefficient(assembly.top_mirror, wavelength)
    r_b = reflection_coefficient(assembly.bottom_reflector(), wavelength)
    loss = max(1 - abs(r_t * r_b) ** 2, 1e-12)
    return 4 * np.pi * (gap + penetration_length(assembly, wavelength)) / wavelength / loss


def branch_slopes(mmap: ModeMap) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Finite-difference d(lambda)/d(t_a) along each resonance branch."""
    out = {}
    for j in np.unique(mmap.branch):
        t, lam = mmap.branch_curve(j)
        if len(t) >= 3:
            out[int(j)] = (t, np.gradient(lam, t))
    return out


def avoided_crossings(mmap: ModeMap, min_contrast: float = 0.1) -> list[dict]:
    """Locate anticrossings as interior minima of d(lambda)/d(t_a) along each branch.

    Near an anticrossing a branch follows the membrane mode and flattens. A
    minimum counts when the slope dips by at least ``min_contrast``
    (relative) below the largest slope on both sides. ``splitting`` is the
    wavelength gap to the next branch at the same air gap (NaN when that
    branch does not reach it).
    """
    found = []
    slopes = branch_slopes(mmap)
    for j, (t, s) in slopes.items():
        for i in range(1, len(s) - 1):
            if not (s[i] < s[i - 1] and s[i] <= s[i + 1]):
                continue
            if s[i] >= (1 - min_contrast) * min(s[:i].max(), s[i + 1:].max()):
                continue
            _, lam = mmap.branch_curve(j)
            splitting = np.nan
            for other in (j + 1, j - 1):
                t_o, lam_o = mmap.branch_curve(other)
                if len(t_o) and t_o[0] <= t[i] <= t_o[-1]:
                    splitting = abs(float(np.interp(t[i], t_o, lam_o)) - lam[i])
                    break
            found.append({
                "air_gap": float(t[i]),
                "wavelength": float(lam[i]),
                "slope": float(s[i]),
                "splitting": float(splitting),
                "branch": int(j),
            })
    return sorted(found, key=lambda c: (c["air_gap"], c["wavelength"]))


# --- Q versus mode number -------------------------------------------------------------


@dataclass(frozen=True)
class ModeQ:
    q_air: int
    air_gap: float
    Q: float
    finesse: float
    accessible: bool
    budget: LossBudget


def q_vs_mode_number(assembly: CavityAssembly, wavelength: float, q_air_range: Sequence[int],
                     include_clipping: bool = True) -> list[ModeQ]:
    """Loss budget and Q for successive air-gap modes at fixed wavelength.

    Modes whose air gap is shallower than the crater depth are returned with
    ``accessible=False``; callers decide whether to drop them.
    """
    rows = []
    for q in q_air_range:
        tuned = assembly.tuned(wavelength, int(q))
        budget = assemble_budget(tuned, wavelength, int(q), include_clipping=include_clipping)
        rows.append(ModeQ(int(q), tuned.air_gap, budget.Q_sim, budget.finesse, tuned.accessible, budget))
    return rows


def simulated_finesse(assembly: CavityAssembly, wavelength: float, q_air_range: Sequence[int] = range(3, 8),
                      include_clipping: bool = True):
    """Finesse as the slope of simulated Q against q_air over a linear region."""
    from fpcavity.estimation import fit_finesse

    rows = q_vs_mode_number(assembly, wavelength, q_air_range, include_clipping)
    q_max = max(q_air_range)
    return fit_finesse([(r.q_air, r.Q) for r in rows if r.accessible], q_max_linear=q_max)


def write_q_scan(path, rows: Sequence[ModeQ]) -> None:
    write_csv(path, ["q_air", "air_gap_nm", "Q", "finesse", "accessible"],
              [(r.q_air, r.air_gap, r.Q, r.finesse, int(r.accessible)) for r in rows])


def read_csv_columns(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols: dict[str, list] = {name: [] for name in reader.fieldnames or []}
        for row in reader:
            for k, v in row.items():
                cols[k].append(v)
    out = {}
    for k, v in cols.items():
        try:
            out[k] = np.array(v, dtype=float)
        except ValueError:
            out[k] = np.array(v)
    return out
