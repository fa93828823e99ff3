"""
Transfer-matrix optics for stratified media at normal incidence.

Sign convention: complex index N = n - i*kappa with time dependence
exp(+i*omega*t), so a forward wave varies as exp(-i*2*pi*N*z/lambda) and
decays for kappa > 0. Admittances are in units of the free-space admittance,
i.e. eta = N at normal incidence. All lengths are in nm.

Fields are tracked as tangential (E, H) pairs. A layer maps the fields at its
back face to its front face through the characteristic matrix

    [E_front, H_front]^T = M [E_back, H_back]^T,
    M = [[cos d, i sin d / eta], [i eta sin d, cos d]],  d = 2 pi N t / lambda.

Rough interfaces break tangential continuity; they are inserted as a jump
matrix built from Debye-Waller scaled Fresnel coefficients (see
``fpcavity.loss_models``).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from fpcavity.loss_models import rough_interface_matrix


class InvalidInputError(ValueError):
    """Raised for physically meaningless inputs (negative thickness etc.)."""


class StopbandNotFoundError(LookupError):
    pass


@dataclass(frozen=True)
class OpticalIndex:
    """Complex refractive index ``n - i*kappa_ext``."""

    n: float
    kappa_ext: float = 0.0

    def __post_init__(self):
        if not self.n > 0:
            raise InvalidInputError(f"refractive index must be positive, got n={self.n}")
        if self.kappa_ext < 0:
            raise InvalidInputError(f"extinction coefficient must be >= 0, got {self.kappa_ext}")

    @property
    def complex(self) -> complex:
        return complex(self.n, -self.kappa_ext)

    @property
    def lossless(self) -> bool:
        return self.kappa_ext == 0


@dataclass(frozen=True)
class Layer:
    """Homogeneous film. ``roughness_rms`` (nm) sits on the layer's exit interface."""

    index: OpticalIndex
    thickness: float
    roughness_rms: float = 0.0

    def __post_init__(self):
        if not self.thickness > 0:
            raise InvalidInputError(f"layer thickness must be positive, got {self.thickness}")
        if self.roughness_rms < 0:
            raise InvalidInputError(f"roughness_rms must be >= 0, got {self.roughness_rms}")

    @property
    def optical_thickness(self) -> float:
        return self.index.n * self.thickness


@dataclass(frozen=True)
class LayerStack:
    """Layers between a semi-infinite incidence medium and a semi-infinite exit medium.

    ``front_roughness`` is the RMS roughness (nm) of the interface between the
    incidence medium and the first layer (or the exit medium if there are no
    layers); every other interface takes its roughness from the layer in front
    of it.
    """

    incidence_medium: OpticalIndex
    layers: tuple[Layer, ...] = ()
    exit_medium: OpticalIndex | None = None
    front_roughness: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.exit_medium is None:
            object.__setattr__(self, "exit_medium", self.incidence_medium)
        if self.front_roughness < 0:
            raise InvalidInputError("front_roughness must be >= 0")

    @property
    def total_thickness(self) -> float:
        return float(sum(layer.thickness for layer in self.layers))

    @property
    def interface_roughness(self) -> list[float]:
        """RMS roughness of each interface, front to back (len = len(layers) + 1)."""
        return [self.front_roughness] + [layer.roughness_rms for layer in self.layers]

    @property
    def is_smooth(self) -> bool:
        return all(s == 0 for s in self.interface_roughness)

    @property
    def is_lossless(self) -> bool:
        media = [self.incidence_medium, self.exit_medium] + [l.index for l in self.layers]
        return all(m.lossless for m in media)

    def flipped(self) -> "LayerStack":
        """The same structure seen from the exit side."""
        rough = self.interface_roughness[::-1]
        layers = tuple(
            replace(layer, roughness_rms=s) for layer, s in zip(self.layers[::-1], rough[1:])
        )
        return LayerStack(self.exit_medium, layers, self.incidence_medium, front_roughness=rough[0])

    def smooth(self) -> "LayerStack":
        """Copy with every interface roughness set to zero."""
        return LayerStack(
            self.incidence_medium,
            tuple(replace(layer, roughness_rms=0.0) for layer in self.layers),
            self.exit_medium,
        )

    def lossless_copy(self) -> "LayerStack":
        """Copy with every extinction coefficient set to zero."""

        def clean(m):
            return OpticalIndex(m.n)

        return LayerStack(
            clean(self.incidence_medium),
            tuple(replace(layer, index=clean(layer.index)) for layer in self.layers),
            clean(self.exit_medium),
            front_roughness=self.front_roughness,
        )


@dataclass(frozen=True)
class SpectralResponse:
    wavelength_grid: np.ndarray
    R: np.ndarray
    T: np.ndarray
    A: np.ndarray

    def to_csv(self, path) -> None:
        write_csv(
            path,
            ["wavelength_nm", "R", "T", "A"],
            np.column_stack([self.wavelength_grid, self.R, self.T, self.A]),
        )


@dataclass(frozen=True)
class LayerSegment:
    """Standing-wave coefficients of one layer: E(x) = fwd e^{-i b x} + bwd e^{+i b x}."""

    z_start: float
    thickness: float
    index: complex
    forward: complex
    backward: complex


@dataclass(frozen=True)
class FieldProfile:
    """Field amplitude through a stack for unit incident amplitude.

    ``z_grid`` starts at 0 on the front face of the first layer. Interfaces
    appear twice, once per adjacent layer, so samples straddling an interface
    are adjacent in the arrays.
    """

    z_grid: np.ndarray
    amplitude: np.ndarray
    local_index: np.ndarray
    wavelength: float
    segments: tuple[LayerSegment, ...] = field(default=())

    @property
    def interfaces(self) -> np.ndarray:
        return np.array([s.z_start for s in self.segments] + [self.segments[-1].z_start + self.segments[-1].thickness])

    def scaled(self, factor: float) -> "FieldProfile":
        return replace(
            self,
            amplitude=self.amplitude * abs(factor),
            segments=tuple(
                replace(s, forward=s.forward * factor, backward=s.backward * factor) for s in self.segments
            ),
        )

    def field_at(self, z: float) -> complex:
        """Complex field at depth z, evaluated from the layer coefficients."""
        for seg in self.segments:
            if seg.z_start <= z <= seg.z_start + seg.thickness:
                x = z - seg.z_start
                beta = 2 * np.pi * seg.index / self.wavelength
                return seg.forward * np.exp(-1j * beta * x) + seg.backward * np.exp(1j * beta * x)
        raise InvalidInputError(f"z={z} nm lies outside the stack")

    def weighted_energy_integral(self) -> float:
        """Exact integral of Re(N)^2 |E(z)|^2 dz over all layers, in nm * amplitude^2."""
        return sum(_segment_intensity_integral(seg, self.wavelength) * seg.index.real**2 for seg in self.segments)


def _segment_intensity_integral(seg: LayerSegment, wavelength: float) -> float:
    beta = 2 * np.pi * seg.index / wavelength
    b_re, b_im = beta.real, -beta.imag  # b_im >= 0 for absorbing media
    d = seg.thickness
    fwd2, bwd2 = abs(seg.forward) ** 2, abs(seg.backward) ** 2
    if b_im > 0:
        # |f|^2 e^{-2 b_im x} + |b|^2 e^{2 b_im x}
        growth = -np.expm1(-2 * b_im * d) / (2 * b_im)
        decay = np.expm1(2 * b_im * d) / (2 * b_im)
        incoherent = fwd2 * growth + bwd2 * decay
    else:
        incoherent = (fwd2 + bwd2) * d
    cross_amp = seg.forward * np.conj(seg.backward)
    if b_re * d < 1e-12:
        cross = 2 * (cross_amp.real * d)
    else:
        # integral of 2 Re(f b* e^{-2 i b_re x})
        cross = 2 * np.real(cross_amp * (np.exp(-2j * b_re * d) - 1) / (-2j * b_re))
    return float(incoherent + cross)


def _check_wavelength(wavelength) -> np.ndarray:
    lam = np.atleast_1d(np.asarray(wavelength, dtype=float))
    if lam.size == 0:
        raise InvalidInputError("wavelength grid is empty")
    if np.any(~np.isfinite(lam)) or np.any(lam <= 0):
        raise InvalidInputError("wavelengths must be positive and finite")
    return lam


def characteristic_matrix(layer: Layer, wavelength: float) -> np.ndarray:
    """Characteristic (Abeles) matrix of one layer; ``det = 1`` for any index."""
    (lam,) = _check_wavelength(wavelength)
    if not layer.thickness > 0:
        raise InvalidInputError("layer thickness must be positive")
    return _char_matrix(layer.index.complex, layer.thickness, np.array([lam]))[0]


def _char_matrix(N: complex, thickness, lam: np.ndarray) -> np.ndarray:
    delta = 2 * np.pi * N * thickness / lam
    c, s = np.cos(delta), np.sin(delta)
    out = np.empty(np.shape(delta) + (2, 2), dtype=complex)
    out[..., 0, 0] = c
    out[..., 0, 1] = 1j * s / N
    out[..., 1, 0] = 1j * N * s
    out[..., 1, 1] = c
    return out


def _interface_jump(stack: LayerStack, i: int, lam: np.ndarray) -> np.ndarray | None:
    """Jump matrix for interface i (0 = front), or None when the interface is smooth."""
    sigma = stack.interface_roughness[i]
    if sigma == 0:
        return None
    media = [stack.incidence_medium] + [l.index for l in stack.layers] + [stack.exit_medium]
    return rough_interface_matrix(media[i].complex, media[i + 1].complex, sigma, lam)


def _stack_matrix(stack: LayerStack, lam: np.ndarray, thickness_override: dict | None = None) -> np.ndarray:
    # thickness_override maps layer index -> thickness (scalar or array broadcast with lam)
    overrides = thickness_override or {}
    total = np.broadcast_to(np.eye(2, dtype=complex), lam.shape + (2, 2)).copy()
    for i in range(len(stack.layers) + 1):
        jump = _interface_jump(stack, i, lam)
        if jump is not None:
            total = total @ jump
        if i < len(stack.layers):
            layer = stack.layers[i]
            d = overrides.get(i, layer.thickness)
            total = total @ _char_matrix(layer.index.complex, d, lam)
    return total


def _amplitudes(stack: LayerStack, lam: np.ndarray, thickness_override: dict | None = None):
    eta0 = stack.incidence_medium.complex
    eta_m = stack.exit_medium.complex
    M = _stack_matrix(stack, lam, thickness_override)
    B = M[..., 0, 0] + M[..., 0, 1] * eta_m
    C = M[..., 1, 0] + M[..., 1, 1] * eta_m
    denom = eta0 * B + C
    r = (eta0 * B - C) / denom
    T = 4 * eta0.real * eta_m.real / np.abs(denom) ** 2
    return r, T


def reflection_coefficient(stack: LayerStack, wavelength) -> np.ndarray:
    """Complex amplitude reflection coefficient seen from the incidence medium."""
    lam = _check_wavelength(wavelength)
    r, _ = _amplitudes(stack, lam)
    return r if np.ndim(wavelength) else r[0]


def stack_response(stack: LayerStack, wavelength_grid: Sequence[float]) -> SpectralResponse:
    """Reflectance, transmittance and absorptance (incl. scatter) on a wavelength grid."""
    lam = _check_wavelength(wavelength_grid)
    r, T = _amplitudes(stack, lam)
    R = np.abs(r) ** 2
    A = 1.0 - R - T
    if stack.is_smooth and stack.is_lossless:
        A = np.where(np.abs(A) < 1e-12, 0.0, A)
    return SpectralResponse(lam, R, T, A)


def field_distribution(stack: LayerStack, wavelength: float, sampling: int = 64) -> FieldProfile:
    """Standing-wave field |E(z)| through the layers for unit incident amplitude.

    The field is propagated backward from the exit medium, where only the
    transmitted wave exists. ``sampling`` is the number of points per layer
    (both layer faces included).
    """
    (lam,) = _check_wavelength(wavelength)
    if sampling < 16:
        raise InvalidInputError("sampling must be at least 16 points per layer")
    if not stack.layers:
        raise InvalidInputError("field_distribution needs at least one layer")
    lam_arr = np.array([lam])
    eta_m = stack.exit_medium.complex
    fields = np.array([1.0 + 0j, eta_m])
    n_layers = len(stack.layers)

    jump = _interface_jump(stack, n_layers, lam_arr)
    if jump is not None:
        fields = jump[0] @ fields

    z_edges = np.concatenate([[0.0], np.cumsum([l.thickness for l in stack.layers])])
    raw = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        layer = stack.layers[i]
        N = layer.index.complex
        x = np.linspace(0.0, layer.thickness, sampling)
        partial = _char_matrix(N, layer.thickness - x, np.full(x.shape, lam))
        E = partial[:, 0, 0] * fields[0] + partial[:, 0, 1] * fields[1]
        front = partial[0] @ fields
        fwd = 0.5 * (front[0] + front[1] / N)
        bwd = 0.5 * (front[0] - front[1] / N)
        raw[i] = (x + z_edges[i], E, fwd, bwd)
        fields = front
        jump = _interface_jump(stack, i, lam_arr)
        if jump is not None:
            fields = jump[0] @ fields

    eta0 = stack.incidence_medium.complex
    incident = 0.5 * (fields[0] + fields[1] / eta0)
    scale = 1.0 / incident

    z_parts, e_parts, n_parts, segments = [], [], [], []
    for i, (z, E, fwd, bwd) in enumerate(raw):
        layer = stack.layers[i]
        z_parts.append(z)
        e_parts.append(np.abs(E * scale))
        n_parts.append(np.full(z.shape, layer.index.n))
        segments.append(LayerSegment(z_edges[i], layer.thickness, layer.index.complex, fwd * scale, bwd * scale))
    return FieldProfile(
        np.concatenate(z_parts),
        np.concatenate(e_parts),
        np.concatenate(n_parts),
        lam,
        tuple(segments),
    )


def build_quarter_wave_dbr(
    center_wavelength: float,
    pairs: int,
    n_high: float,
    n_low: float,
    substrate: OpticalIndex,
    outermost: str = "high",
    incidence: OpticalIndex | None = None,
    thicknesses: Sequence[float] | None = None,
) -> LayerStack:
    """Quarter-wave Bragg mirror seen from the incidence side.

    The layer adjacent to the incidence medium is the ``outermost`` one.
    ``thicknesses`` optionally replaces the ideal lambda/4 values layer by
    layer (refined designs).
    """
    if pairs < 1:
        raise InvalidInputError("a Bragg mirror needs at least one pair")
    if outermost not in ("high", "low"):
        raise InvalidInputError("outermost must be 'high' or 'low'")
    if center_wavelength <= 0:
        raise InvalidInputError("center wavelength must be positive")
    first, second = (n_high, n_low) if outermost == "high" else (n_low, n_high)
    indices = [first, second] * pairs
    if thicknesses is None:
        thicknesses = [center_wavelength / (4 * n) for n in indices]
    elif len(thicknesses) != len(indices):
        raise InvalidInputError(f"expected {len(indices)} layer thicknesses, got {len(thicknesses)}")
    layers = tuple(Layer(OpticalIndex(n), float(t)) for n, t in zip(indices, thicknesses))
    return LayerStack(incidence or OpticalIndex(1.0), layers, substrate)


def stopband_center(response: SpectralResponse, threshold: float = 0.99) -> float:
    """Centre of the contiguous high-reflectance region around the maximum, as the wavenumber midpoint of its edges."""
    R = np.asarray(response.R)
    lam = np.asarray(response.wavelength_grid)
    above = R > threshold
    if not above.any():
        raise StopbandNotFoundError(f"no grid point exceeds R = {threshold}")
    peak = int(np.argmax(np.where(above, R, -np.inf)))
    lo = peak
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = peak
    while hi < len(R) - 1 and above[hi + 1]:
        hi += 1

    def edge(inner, outer):
        # linear interpolation of the threshold crossing when the neighbor exists
        if outer < 0 or outer >= len(R):
            return lam[inner]
        frac = (R[inner] - threshold) / (R[inner] - R[outer])
        return lam[inner] + frac * (lam[outer] - lam[inner])

    # a quarter-wave stopband is symmetric in wavenumber, so average 1/lambda
    return float(2.0 / (1.0 / edge(lo, lo - 1) + 1.0 / edge(hi, hi + 1)))


# --- file formats -------------------------------------------------------------


def write_csv(path, header: Sequence[str], rows) -> None:
    """CSV with one header line and fixed 9-significant-digit scientific notation."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(value) -> str:
    if isinstance(value, (str, np.str_)):
        return str(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.8e}"


def stack_to_dict(stack: LayerStack) -> dict:
    def medium(m):
        return {"n": m.n, "kappa": m.kappa_ext}

    return {
        "incidence": medium(stack.incidence_medium),
        "front_roughness_nm": stack.front_roughness,
        "layers": [
            {"n": l.index.n, "kappa": l.index.kappa_ext, "thickness_nm": l.thickness, "roughness_nm": l.roughness_rms}
            for l in stack.layers
        ],
        "exit": medium(stack.exit_medium),
    }


def stack_from_dict(doc: dict) -> LayerStack:
    def medium(d):
        return OpticalIndex(float(d["n"]), float(d.get("kappa", 0.0)))

    layers = tuple(
        Layer(
            OpticalIndex(float(d["n"]), float(d.get("kappa", 0.0))),
            float(d["thickness_nm"]),
            float(d.get("roughness_nm", 0.0)),
        )
        for d in doc.get("layers", [])
    )
    return LayerStack(
        medium(doc["incidence"]),
        layers,
        medium(doc["exit"]) if "exit" in doc else None,
        front_roughness=float(doc.get("front_roughness_nm", 0.0)),
    )


def load_stack(path) -> LayerStack:
    """Read a stack specification (YAML or JSON; JSON is valid YAML)."""
    text = Path(path).read_text()
    return stack_from_dict(yaml.safe_load(text))


def save_stack(stack: LayerStack, path) -> None:
    path = Path(path)
    doc = stack_to_dict(stack)
    if path.suffix == ".json":
        path.write_text(json.dumps(doc, indent=2))
    else:
        path.write_text(yaml.safe_dump(doc, sort_keys=False))
